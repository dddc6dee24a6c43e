//! Periodic steady state as harmonic spectra.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::htf::HarmonicVector;
use crate::params::{ControlMode, ConverterKind};

/// Relative tolerance for the conjugate-symmetry check on load.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Three per-phase spectra, phases a, b, c.
pub type PhaseSpectra = [HarmonicVector; 3];

/// Two rotating-frame spectra, d then q.
pub type DqSpectra = [HarmonicVector; 2];

/// Steady-state spectra of every signal that appears in the linearised model.
///
/// Times are absolute: phase a of the grid source is `cos(ω0 t)`. Per-phase
/// spectra are in SI units; the rotating-frame spectra are the signals seen by
/// the controller, in the controller's own frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub converter: ConverterKind,
    pub control: ControlMode,
    /// Highest harmonic stored in every spectrum.
    pub order: usize,
    pub w0: f64,
    /// Mean of `θ - ω0 t` for the controller frame.
    pub theta0: f64,
    /// Mean DC-link voltage and DC current (sum of circulating currents).
    pub u_dc: f64,
    pub i_dc: f64,
    pub m_u: PhaseSpectra,
    pub m_l: PhaseSpectra,
    /// Fundamental and circulating modulation components.
    pub m1: PhaseSpectra,
    pub m2: PhaseSpectra,
    pub u_cu: PhaseSpectra,
    pub u_cl: PhaseSpectra,
    pub i_c: PhaseSpectra,
    pub i_g: PhaseSpectra,
    /// Terminal voltage seen by the controllers.
    pub u_t: PhaseSpectra,
    pub u_dq: DqSpectra,
    pub i_dq: DqSpectra,
    /// Fundamental controller output voltage, `m1_dq · U_dc / 2`.
    pub u_f_dq: DqSpectra,
    /// Circulating current and controller output in the double-frequency frame.
    pub i_c_dq: DqSpectra,
    pub u_c_dq: DqSpectra,
}

/// Mean values of the rotating-frame signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DqConstants {
    pub u_d: f64,
    pub u_q: f64,
    pub i_d: f64,
    pub i_q: f64,
    pub u_fd: f64,
    pub u_fq: f64,
    pub i_cd: f64,
    pub i_cq: f64,
    pub u_cd: f64,
    pub u_cq: f64,
}

impl OperatingPoint {
    fn phase_sets(&self) -> [(&'static str, &PhaseSpectra); 9] {
        [
            ("m_u", &self.m_u),
            ("m_l", &self.m_l),
            ("m1", &self.m1),
            ("m2", &self.m2),
            ("u_cu", &self.u_cu),
            ("u_cl", &self.u_cl),
            ("i_c", &self.i_c),
            ("i_g", &self.i_g),
            ("u_t", &self.u_t),
        ]
    }

    fn dq_sets(&self) -> [(&'static str, &DqSpectra); 5] {
        [
            ("u_dq", &self.u_dq),
            ("i_dq", &self.i_dq),
            ("u_f_dq", &self.u_f_dq),
            ("i_c_dq", &self.i_c_dq),
            ("u_c_dq", &self.u_c_dq),
        ]
    }

    pub fn all_spectra(&self) -> Vec<(&'static str, &HarmonicVector)> {
        let mut out = Vec::new();
        for (name, set) in self.phase_sets() {
            out.extend(set.iter().map(|v| (name, v)));
        }
        for (name, set) in self.dq_sets() {
            out.extend(set.iter().map(|v| (name, v)));
        }
        out
    }

    /// Checks orders, base frequency, finiteness and real-signal symmetry.
    pub fn validate(&self) -> Result<()> {
        if !(self.w0.is_finite() && self.w0 > 0.0) {
            return Err(Error::InvalidOperatingPoint(format!("bad w0 {}", self.w0)));
        }
        for (name, x) in [("theta0", self.theta0), ("u_dc", self.u_dc), ("i_dc", self.i_dc)] {
            if !x.is_finite() {
                return Err(Error::InvalidOperatingPoint(format!("{name} is not finite")));
            }
        }
        for (name, v) in self.all_spectra() {
            if v.order() != self.order {
                return Err(Error::InvalidOperatingPoint(format!(
                    "spectrum {name} has order {}, expected {}",
                    v.order(),
                    self.order
                )));
            }
            if (v.base_freq() - self.w0).abs() > 1e-9 * self.w0 {
                return Err(Error::InvalidOperatingPoint(format!(
                    "spectrum {name} has base frequency {}",
                    v.base_freq()
                )));
            }
            let r = v.conjugate_symmetry_residual();
            if !(r <= SYMMETRY_TOLERANCE) {
                return Err(Error::InvalidOperatingPoint(format!(
                    "spectrum {name} is not conjugate-symmetric (residual {r:.3e})"
                )));
            }
        }
        Ok(())
    }

    /// Largest conjugate-symmetry residual over all stored spectra.
    pub fn max_symmetry_residual(&self) -> f64 {
        self.all_spectra()
            .iter()
            .map(|(_, v)| v.conjugate_symmetry_residual())
            .fold(0.0, f64::max)
    }

    pub fn dq_constants(&self) -> DqConstants {
        let dc = |v: &HarmonicVector| v.get(0).re;
        DqConstants {
            u_d: dc(&self.u_dq[0]),
            u_q: dc(&self.u_dq[1]),
            i_d: dc(&self.i_dq[0]),
            i_q: dc(&self.i_dq[1]),
            u_fd: dc(&self.u_f_dq[0]),
            u_fq: dc(&self.u_f_dq[1]),
            i_cd: dc(&self.i_c_dq[0]),
            i_cq: dc(&self.i_c_dq[1]),
            u_cd: dc(&self.u_c_dq[0]),
            u_cq: dc(&self.u_c_dq[1]),
        }
    }

    /// Fundamental modulation phasor `m_d + j m_q` in the grid frame,
    /// recovered from the phase-a spectrum.
    pub fn fundamental_modulation(&self) -> num_complex::Complex64 {
        self.m1[0].get(1) * 2.0
    }

    /// Truncate or zero-pad every spectrum.
    pub fn with_order(&self, order: usize) -> Self {
        let p = |s: &PhaseSpectra| -> PhaseSpectra { std::array::from_fn(|i| s[i].with_order(order)) };
        let d = |s: &DqSpectra| -> DqSpectra { std::array::from_fn(|i| s[i].with_order(order)) };
        Self {
            order,
            m_u: p(&self.m_u),
            m_l: p(&self.m_l),
            m1: p(&self.m1),
            m2: p(&self.m2),
            u_cu: p(&self.u_cu),
            u_cl: p(&self.u_cl),
            i_c: p(&self.i_c),
            i_g: p(&self.i_g),
            u_t: p(&self.u_t),
            u_dq: d(&self.u_dq),
            i_dq: d(&self.i_dq),
            u_f_dq: d(&self.u_f_dq),
            i_c_dq: d(&self.i_c_dq),
            u_c_dq: d(&self.u_c_dq),
            ..self.clone()
        }
    }

    /// MMC operating point with constant arm voltages `u_dc` and no
    /// circulating current, sharing this point's terminal quantities and
    /// fundamental modulation.
    pub fn with_stiff_arms(&self, u_dc: f64) -> Self {
        let zero = HarmonicVector::zeros(self.order, self.w0);
        let cst = HarmonicVector::constant(self.order, u_dc, self.w0);
        let half = HarmonicVector::constant(self.order, 0.5, self.w0);
        let arm = |sign: f64| -> PhaseSpectra {
            std::array::from_fn(|x| {
                let coeffs = half
                    .coeffs()
                    .iter()
                    .zip(self.m1[x].coeffs())
                    .map(|(a, m)| a + m * (0.5 * sign))
                    .collect();
                HarmonicVector::new(self.order, coeffs, self.w0).expect("same order")
            })
        };
        Self {
            converter: ConverterKind::Mmc,
            u_dc,
            i_dc: 0.0,
            m_u: arm(-1.0),
            m_l: arm(1.0),
            m2: std::array::from_fn(|_| zero.clone()),
            u_cu: std::array::from_fn(|_| cst.clone()),
            u_cl: std::array::from_fn(|_| cst.clone()),
            i_c: std::array::from_fn(|_| zero.clone()),
            i_c_dq: std::array::from_fn(|_| zero.clone()),
            u_c_dq: std::array::from_fn(|_| zero.clone()),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let op: Self = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        op.validate()?;
        Ok(op)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
