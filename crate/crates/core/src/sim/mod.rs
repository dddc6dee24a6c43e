//! Average-model time-domain simulator: periodic steady state, operating
//! point extraction and frequency scans.

mod integrate;
mod model;
mod scan;
mod steady;

use std::io::Write;

pub use integrate::{advance, run, Rk4, DIVERGENCE_LIMIT};
pub use model::{Dynamics, Layout, Signals, Tone};
pub use scan::{frequency_scan, InjectionRecord, ScanOptions, ScanResult, Scanner, Sequence};
pub use steady::{
    extract_opoint, find_steady_state, flow_jacobian, newton_update, period_signals, steady_opoint, SimOptions,
    SteadyState,
};

use crate::error::{Error, Result};
use crate::frames::SequenceBasis;

/// Balanced sequence voltage added to the grid source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Injection {
    pub freq_hz: f64,
    pub sequence: Sequence,
    /// Peak phase amplitude, V.
    pub amplitude_v: f64,
}

impl Injection {
    pub fn tone(&self) -> Tone {
        let basis = match self.sequence {
            Sequence::Positive => SequenceBasis::positive(),
            Sequence::Negative => SequenceBasis::negative(),
        };
        Tone {
            omega: 2.0 * std::f64::consts::PI * self.freq_hz,
            phasor: num_complex::Complex64::new(self.amplitude_v, 0.0),
            weights: basis.weights,
        }
    }
}

/// Stored trajectory.
#[derive(Debug, Clone, Default)]
pub struct Waveforms {
    pub names: Vec<String>,
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Waveforms {
    /// CSV with a `t_s` column followed by every state.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        let mut header = vec!["t_s".to_string()];
        header.extend(self.names.iter().cloned());
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for (t, x) in self.t.iter().zip(&self.states) {
            let mut row = vec![format!("{t:.11e}")];
            row.extend(x.iter().map(|v| format!("{v:.11e}")));
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

/// Integrate from `x0` (or the default start) for `duration` seconds,
/// storing every `decimation`-th step.
pub fn simulate(
    d: &Dynamics,
    x0: Option<&[f64]>,
    duration: f64,
    dt: f64,
    injection: Option<Injection>,
    decimation: usize,
) -> Result<Waveforms> {
    if !(dt > 0.0 && dt <= 50e-6) {
        return Err(Error::InvalidParameter(format!(
            "time step must be in (0, 50 µs], got {dt}"
        )));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "duration must be non-negative, got {duration}"
        )));
    }
    let start = x0.map(<[f64]>::to_vec).unwrap_or_else(|| d.initial_state());
    if start.len() != d.n_states() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, expected {}",
            start.len(),
            d.n_states()
        )));
    }
    let steps = (duration / dt).round() as usize;
    let tones: Vec<Tone> = injection.iter().map(Injection::tone).collect();
    let dec = decimation.max(1);
    let mut out = Waveforms {
        names: d.state_names(),
        ..Default::default()
    };
    let end = run(d, &start, 0.0, dt, steps, &tones, |k, t, _, x| {
        if k % dec == 0 {
            out.t.push(t);
            out.states.push(x.to_vec());
        }
    })?;
    if steps % dec == 0 {
        out.t.push(steps as f64 * dt);
        out.states.push(end);
    }
    Ok(out)
}
