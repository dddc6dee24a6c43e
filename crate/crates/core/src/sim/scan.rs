//! Frequency-scan measurement of the sequence admittance.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frames::SequenceBasis;
use crate::htf::ZERO;
use crate::parallel::{self, Execution};

use super::integrate::run;
use super::model::{Dynamics, Tone};
use super::steady::{newton_update, SteadyState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sequence {
    Positive,
    Negative,
}

impl Sequence {
    fn basis(self) -> SequenceBasis {
        match self {
            Sequence::Positive => SequenceBasis::positive(),
            Sequence::Negative => SequenceBasis::negative(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Injection amplitude, p.u. of the peak phase voltage.
    pub amplitude_pu: f64,
    /// Analysis window, s. Must hold whole periods of every injected tone.
    pub window_s: f64,
    /// Newton corrections of the initial state towards the forced periodic orbit.
    pub max_corrections: usize,
    /// Residual (p.u.) at which a forced orbit counts as periodic.
    pub periodic_tolerance_pu: f64,
    /// Largest acceptable condition number of the injection matrix.
    pub condition_limit: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            amplitude_pu: 0.005,
            window_s: 1.0,
            max_corrections: 3,
            periodic_tolerance_pu: 1e-11,
            condition_limit: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InjectionRecord {
    pub sequence: Sequence,
    pub freq_hz: f64,
    /// Peak phase amplitude, V.
    pub amplitude_v: f64,
    /// Final periodicity residual of the forced run, p.u.
    pub residual_pu: f64,
}

/// One measured frequency point.
#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    pub freq_hz: f64,
    /// `[[y11, y12], [y21, y22]]`, load convention.
    pub y: [[Complex64; 2]; 2],
    pub injections: Vec<InjectionRecord>,
    pub window_s: f64,
    /// 1 for an exactly periodic forced response, falling towards 0 as the
    /// residual transient grows.
    pub quality: f64,
    pub condition: f64,
    /// Reason the point is unusable, if any.
    pub flagged: Option<String>,
}

impl ScanResult {
    pub fn y11(&self) -> Complex64 {
        self.y[0][0]
    }
    pub fn y12(&self) -> Complex64 {
        self.y[0][1]
    }
    pub fn y21(&self) -> Complex64 {
        self.y[1][0]
    }
    pub fn y22(&self) -> Complex64 {
        self.y[1][1]
    }

    fn flagged(freq_hz: f64, window_s: f64, reason: String) -> Self {
        Self {
            freq_hz,
            y: [[Complex64::new(f64::NAN, f64::NAN); 2]; 2],
            injections: Vec::new(),
            window_s,
            quality: 0.0,
            condition: f64::INFINITY,
            flagged: Some(reason),
        }
    }
}

/// Per-phase bin values of the converter current and the source voltage.
#[derive(Debug, Clone, Copy)]
struct Bins {
    current: [Complex64; 3],
    voltage: [Complex64; 3],
}

impl Bins {
    fn zero() -> Self {
        Self {
            current: [ZERO; 3],
            voltage: [ZERO; 3],
        }
    }

    fn minus(&self, other: &Bins) -> Bins {
        Bins {
            current: std::array::from_fn(|k| self.current[k] - other.current[k]),
            voltage: std::array::from_fn(|k| self.voltage[k] - other.voltage[k]),
        }
    }
}

fn project(x: &[Complex64; 3], basis: &SequenceBasis) -> Complex64 {
    (0..3).map(|k| basis.weights[k].conj() * x[k]).sum::<Complex64>() / 3.0
}

/// Shared state of a scan: steady orbit, window map and baseline samples.
pub struct Scanner<'a> {
    d: &'a Dynamics,
    ss: &'a SteadyState,
    opts: ScanOptions,
    steps: usize,
    window_jacobian: DMatrix<f64>,
    base_current: Vec<[f64; 3]>,
    base_voltage: Vec<[f64; 3]>,
}

impl<'a> Scanner<'a> {
    pub fn new(d: &'a Dynamics, ss: &'a SteadyState, opts: ScanOptions) -> Result<Self> {
        let periods_f = opts.window_s * d.circuit.f0();
        let periods = periods_f.round();
        if !(periods >= 1.0 && (periods - periods_f).abs() < 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "scan window {} s is not a whole number of fundamental periods",
                opts.window_s
            )));
        }
        if !(opts.amplitude_pu > 0.0 && opts.amplitude_pu.is_finite()) {
            return Err(Error::InvalidParameter("injection amplitude must be positive".into()));
        }
        let periods = periods as usize;
        let steps = periods * ss.steps_per_period;
        let mut window_jacobian = DMatrix::identity(ss.x0.len(), ss.x0.len());
        for _ in 0..periods {
            window_jacobian = &ss.monodromy * window_jacobian;
        }
        let mut base_current = Vec::with_capacity(steps);
        let mut base_voltage = Vec::with_capacity(steps);
        run(d, &ss.x0, 0.0, ss.dt, steps, &[], |_, _, s, _| {
            base_current.push(s.i_g.map(|v| -v));
            base_voltage.push(s.e);
        })?;
        Ok(Self {
            d,
            ss,
            opts,
            steps,
            window_jacobian,
            base_current,
            base_voltage,
        })
    }

    fn baseline_bins(&self, omega: f64) -> Bins {
        let mut b = Bins::zero();
        for k in 0..self.steps {
            let rot = Complex64::from_polar(1.0, -omega * k as f64 * self.ss.dt);
            for x in 0..3 {
                b.current[x] += rot * self.base_current[k][x];
                b.voltage[x] += rot * self.base_voltage[k][x];
            }
        }
        let n = self.steps as f64;
        b.current.iter_mut().for_each(|v| *v /= n);
        b.voltage.iter_mut().for_each(|v| *v /= n);
        b
    }

    /// Forced periodic response to one tone; bins at the two analysis
    /// frequencies.
    fn forced(&self, tone: Tone, omegas: [f64; 2]) -> Result<([Bins; 2], f64)> {
        let dt = self.ss.dt;
        let scales = &self.ss.scales;
        let mut x0 = self.ss.x0.clone();
        let tones = [tone];
        let mut corrections = 0;
        loop {
            let mut bins = [Bins::zero(); 2];
            let end = run(self.d, &x0, 0.0, dt, self.steps, &tones, |_, t, s, _| {
                for (b, &w) in bins.iter_mut().zip(&omegas) {
                    let rot = Complex64::from_polar(1.0, -w * t);
                    for x in 0..3 {
                        b.current[x] -= rot * s.i_g[x];
                        b.voltage[x] += rot * s.e[x];
                    }
                }
            })?;
            let r = (x0
                .iter()
                .zip(&end)
                .zip(scales)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum::<f64>()
                / x0.len() as f64)
                .sqrt();
            if r < self.opts.periodic_tolerance_pu || corrections >= self.opts.max_corrections {
                let n = self.steps as f64;
                for b in bins.iter_mut() {
                    b.current.iter_mut().for_each(|v| *v /= n);
                    b.voltage.iter_mut().for_each(|v| *v /= n);
                }
                return Ok((bins, r));
            }
            newton_update(&mut x0, &end, &self.window_jacobian, scales)?;
            corrections += 1;
        }
    }

    /// Measure the 2x2 sequence admittance at integer frequency `f_p`.
    pub fn point(&self, freq_hz: f64) -> ScanResult {
        match self.try_point(freq_hz) {
            Ok(r) => r,
            Err(e) => ScanResult::flagged(freq_hz, self.opts.window_s, e.to_string()),
        }
    }

    fn try_point(&self, freq_hz: f64) -> Result<ScanResult> {
        let w = self.opts.window_s;
        if ((freq_hz * w) - (freq_hz * w).round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "{freq_hz} Hz does not fit a whole number of cycles in {w} s"
            )));
        }
        let w0 = self.d.circuit.w0;
        let omega_p = 2.0 * PI * freq_hz;
        let omega_n = omega_p - 2.0 * w0;
        let omegas = [omega_p, omega_n];
        let amp = self.opts.amplitude_pu * self.d.u_pk;
        let (pos, neg) = (SequenceBasis::positive(), SequenceBasis::negative());
        let base = [self.baseline_bins(omega_p), self.baseline_bins(omega_n)];

        let runs = [(Sequence::Positive, omega_p), (Sequence::Negative, omega_n)];
        let mut i_mat = [[ZERO; 2]; 2];
        let mut v_mat = [[ZERO; 2]; 2];
        let mut injections = Vec::new();
        let mut worst = 0.0f64;
        for (col, &(seq, omega)) in runs.iter().enumerate() {
            let tone = Tone {
                omega,
                phasor: Complex64::new(amp, 0.0),
                weights: seq.basis().weights,
            };
            let (bins, r) = self.forced(tone, omegas)?;
            worst = worst.max(r);
            for (row, basis) in [&pos, &neg].into_iter().enumerate() {
                let delta = bins[row].minus(&base[row]);
                i_mat[row][col] = project(&delta.current, basis);
                v_mat[row][col] = project(&delta.voltage, basis);
            }
            injections.push(InjectionRecord {
                sequence: seq,
                freq_hz: omega / (2.0 * PI),
                amplitude_v: amp,
                residual_pu: r,
            });
        }

        let det = v_mat[0][0] * v_mat[1][1] - v_mat[0][1] * v_mat[1][0];
        let inv = [
            [v_mat[1][1] / det, -v_mat[0][1] / det],
            [-v_mat[1][0] / det, v_mat[0][0] / det],
        ];
        let fro = |m: &[[Complex64; 2]; 2]| m.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let condition = fro(&v_mat) * fro(&inv);
        if !(condition <= self.opts.condition_limit) {
            return Err(Error::IllConditioned {
                freq_hz,
                cond: condition,
            });
        }
        let y: [[Complex64; 2]; 2] =
            std::array::from_fn(|r| std::array::from_fn(|c| i_mat[r][0] * inv[0][c] + i_mat[r][1] * inv[1][c]));
        Ok(ScanResult {
            freq_hz,
            y,
            injections,
            window_s: w,
            quality: 1.0 / (1.0 + worst / 1e-6),
            condition,
            flagged: None,
        })
    }
}

/// Scan every frequency; failures become flagged points.
pub fn frequency_scan(
    d: &Dynamics,
    ss: &SteadyState,
    freqs_hz: &[f64],
    opts: ScanOptions,
    exec: Execution,
) -> Result<Vec<ScanResult>> {
    let scanner = Scanner::new(d, ss, opts)?;
    Ok(parallel::map(exec, freqs_hz, |&f| scanner.point(f)))
}
