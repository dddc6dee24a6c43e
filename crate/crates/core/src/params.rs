//! Circuit and controller parameters, per-unit bases and model selection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Main-circuit parameters, SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitParams {
    /// Apparent power rating (VA).
    pub s_rating: f64,
    /// DC-link voltage, pole to pole (V).
    pub u_dc: f64,
    /// Grid line-to-line RMS voltage (V).
    pub u_g_ll_rms: f64,
    /// Fundamental angular frequency (rad/s).
    pub w0: f64,
    /// Submodules per arm.
    pub n_modules: u32,
    pub l_arm: f64,
    pub r_arm: f64,
    /// Submodule capacitance (F).
    pub c_m: f64,
    /// Series grid resistance between the converter terminal and the source.
    #[serde(default)]
    pub r_g: f64,
    #[serde(default)]
    pub l_g: f64,
    /// Two-level filter inductance; defaults to `l_arm / 2`.
    #[serde(default)]
    pub l_filter: Option<f64>,
    /// Two-level filter resistance; defaults to `r_arm / 2`.
    #[serde(default)]
    pub r_filter: Option<f64>,
    /// Norton resistance of the DC current source, in DC-base p.u.
    #[serde(default = "default_r_dc_pu")]
    pub r_dc_pu: f64,
    /// Norton capacitance of the DC bus (F); sized for a 5 kHz resonance
    /// with the leg inductance when absent.
    #[serde(default)]
    pub c_dc: Option<f64>,
}

fn default_r_dc_pu() -> f64 {
    1e4
}

impl CircuitParams {
    /// Grid-connected MMC of the reference case.
    pub fn reference() -> Self {
        Self {
            s_rating: 220e6,
            u_dc: 135e3,
            u_g_ll_rms: 66e3,
            w0: 100.0 * PI,
            n_modules: 50,
            l_arm: 16.37e-3,
            r_arm: 0.03,
            c_m: 10.48e-3,
            r_g: 0.0,
            l_g: 0.0,
            l_filter: None,
            r_filter: None,
            r_dc_pu: default_r_dc_pu(),
            c_dc: None,
        }
    }

    /// Equivalent arm capacitance `C_m / N`.
    pub fn c_eq(&self) -> f64 {
        self.c_m / self.n_modules as f64
    }

    pub fn l_2l(&self) -> f64 {
        self.l_filter.unwrap_or(self.l_arm / 2.0)
    }

    pub fn r_2l(&self) -> f64 {
        self.r_filter.unwrap_or(self.r_arm / 2.0)
    }

    pub fn r_dc(&self) -> f64 {
        self.r_dc_pu * self.u_dc * self.u_dc / self.s_rating
    }

    pub fn c_dc(&self) -> f64 {
        self.c_dc.unwrap_or_else(|| {
            let l_loop = 2.0 * self.l_arm / 3.0;
            let w = 2.0 * PI * 5.0e3;
            1.0 / (w * w * l_loop)
        })
    }

    pub fn f0(&self) -> f64 {
        self.w0 / (2.0 * PI)
    }

    pub fn bases(&self) -> Bases {
        Bases::new(self.s_rating, self.u_g_ll_rms, self.w0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("s_rating", self.s_rating),
            ("u_dc", self.u_dc),
            ("u_g_ll_rms", self.u_g_ll_rms),
            ("w0", self.w0),
            ("l_arm", self.l_arm),
            ("r_arm", self.r_arm),
            ("c_m", self.c_m),
            ("l_filter", self.l_2l()),
            ("r_dc_pu", self.r_dc_pu),
            ("c_dc", self.c_dc()),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_modules == 0 {
            return Err(Error::InvalidParameter("n_modules must be positive".into()));
        }
        for (name, v) in [("r_g", self.r_g), ("l_g", self.l_g), ("r_filter", self.r_2l())] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-unit bases: peak phase voltage, peak current, and `S = 1.5 U I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bases {
    pub s: f64,
    pub u: f64,
    pub i: f64,
    pub z: f64,
    pub w: f64,
}

impl Bases {
    pub fn new(s_rating: f64, u_ll_rms: f64, w: f64) -> Self {
        let u = (2.0f64 / 3.0).sqrt() * u_ll_rms;
        let i = 2.0 * s_rating / (3.0 * u);
        Self {
            s: s_rating,
            u,
            i,
            z: u / i,
            w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfmParams {
    /// Virtual inertia (s).
    pub inertia: f64,
    /// Damping (p.u.).
    pub damping: f64,
    /// Q-V droop gain (p.u.).
    pub d_v: f64,
    /// Q-V filter time constant (s).
    pub t_v: f64,
    pub k_pv: f64,
    pub k_iv: f64,
    pub p_ref_pu: f64,
    pub q_ref_pu: f64,
    pub u_ref_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PllParams {
    pub k_p: f64,
    pub k_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcVoltageParams {
    pub k_pd: f64,
    pub k_id: f64,
    /// Power injected by the DC current source (p.u. of `S`).
    pub p_dc_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerParams {
    pub k_pp: f64,
    pub k_ip: f64,
    pub p_ref_pu: f64,
    pub q_ref_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentLoopParams {
    pub k_pi: f64,
    pub k_ii: f64,
    /// Cross-decoupling gain (p.u.); `ω0 L_eq / Z_base` when absent.
    #[serde(default)]
    pub k_decouple_pu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcscParams {
    pub k_pic: f64,
    pub k_iic: f64,
    /// Cross-decoupling gain (p.u.); `2 ω0 L_arm / Z_base` when absent.
    #[serde(default)]
    pub k_decouple_pu: Option<f64>,
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenLoopParams {
    /// Fundamental modulation index, d and q parts, grid-voltage frame.
    pub m_d: f64,
    pub m_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    pub gfm: GfmParams,
    pub pll: PllParams,
    pub dc: DcVoltageParams,
    pub pq: PowerParams,
    pub inner: CurrentLoopParams,
    pub ccsc: CcscParams,
    pub open_loop: OpenLoopParams,
}

impl ControlParams {
    pub fn reference() -> Self {
        Self {
            gfm: GfmParams {
                inertia: 1.0,
                damping: 100.0,
                d_v: 0.1,
                t_v: 0.01,
                k_pv: 0.2,
                k_iv: 26.0,
                p_ref_pu: 0.4,
                q_ref_pu: 0.0,
                u_ref_pu: 1.0,
            },
            pll: PllParams {
                k_p: 1800.0,
                k_i: 3200.0,
            },
            dc: DcVoltageParams {
                k_pd: 4.0,
                k_id: 75.0,
                p_dc_pu: 0.4,
            },
            pq: PowerParams {
                k_pp: 0.2,
                k_ip: 15.0,
                p_ref_pu: 0.4,
                q_ref_pu: 0.0,
            },
            inner: CurrentLoopParams {
                k_pi: 2.0,
                k_ii: 100.0,
                k_decouple_pu: None,
            },
            ccsc: CcscParams {
                k_pic: 1.0,
                k_iic: 5.0,
                k_decouple_pu: None,
                enabled: true,
            },
            open_loop: OpenLoopParams { m_d: 0.8, m_q: 0.04 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let gains = [
            ("inertia", self.gfm.inertia),
            ("damping", self.gfm.damping),
            ("d_v", self.gfm.d_v),
            ("t_v", self.gfm.t_v),
            ("k_pv", self.gfm.k_pv),
            ("k_iv", self.gfm.k_iv),
            ("k_p_pll", self.pll.k_p),
            ("k_i_pll", self.pll.k_i),
            ("k_pd", self.dc.k_pd),
            ("k_id", self.dc.k_id),
            ("k_pp", self.pq.k_pp),
            ("k_ip", self.pq.k_ip),
            ("k_pi", self.inner.k_pi),
            ("k_ii", self.inner.k_ii),
            ("k_pic", self.ccsc.k_pic),
            ("k_iic", self.ccsc.k_iic),
        ];
        for (name, v) in gains {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("gain {name} must be >= 0, got {v}")));
            }
        }
        if self.gfm.t_v <= 0.0 {
            return Err(Error::InvalidParameter("t_v must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConverterKind {
    #[serde(rename = "MMC")]
    Mmc,
    #[serde(rename = "VSC2L")]
    Vsc2L,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlMode {
    OpenLoop,
    #[serde(rename = "GFM")]
    Gfm,
    #[serde(rename = "GFL_PQ")]
    GflPq,
    #[serde(rename = "GFL_DC")]
    GflDc,
    ConstCurrent,
    ConstVf,
}

impl ControlMode {
    pub fn uses_pll(self) -> bool {
        matches!(
            self,
            ControlMode::GflPq | ControlMode::GflDc | ControlMode::ConstCurrent
        )
    }

    pub fn is_grid_forming(self) -> bool {
        matches!(self, ControlMode::Gfm | ControlMode::ConstVf)
    }
}

/// How a configured series grid impedance enters the admittance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GridImpedanceMode {
    /// Controllers measure the converter terminal; the series impedance is
    /// folded into the plant and control matrices.
    #[default]
    Internal,
    /// Converter admittance is computed without it and composed in series.
    SeriesComposition,
}

/// Linearisation used for the transient inductor and capacitor power in the
/// DC-side power balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PowerBalanceForm {
    /// `d/dt` applied after the Toeplitz product, `(Z_L + R) I` and `Y_C U`.
    #[default]
    Exact,
    /// `(Z_L I + I Z_L)/2` and `(Y_C U + U Y_C)/2`.
    Symmetrized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub converter: ConverterKind,
    pub control: ControlMode,
    pub h: usize,
    #[serde(default)]
    pub grid_impedance: GridImpedanceMode,
    #[serde(default)]
    pub power_balance: PowerBalanceForm,
}

impl ModelSpec {
    pub fn new(converter: ConverterKind, control: ControlMode) -> Self {
        Self {
            converter,
            control,
            h: 3,
            grid_impedance: GridImpedanceMode::Internal,
            power_balance: PowerBalanceForm::Exact,
        }
    }

    pub fn with_h(mut self, h: usize) -> Self {
        self.h = h;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.converter == ConverterKind::Vsc2L && self.control == ControlMode::GflDc {
            return Err(Error::InvalidParameter(
                "DC-voltage control is only modelled for the MMC".into(),
            ));
        }
        if self.h < 2 {
            return Err(Error::InvalidParameter(format!(
                "harmonic order must be at least 2, got {}",
                self.h
            )));
        }
        Ok(())
    }
}

/// Controller transfer functions in SI units, shared by the harmonic model
/// and the time-domain simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pi {
    pub kp: f64,
    pub ki: f64,
}

impl Pi {
    pub fn eval(&self, s: num_complex::Complex64) -> num_complex::Complex64 {
        self.kp + self.ki / s
    }
}

/// Gains scaled to SI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiGains {
    /// Current loop, V/A.
    pub current: Pi,
    /// Current-loop decoupling, Ω.
    pub k_current: f64,
    /// Circulating current loop, V/A.
    pub ccsc: Pi,
    pub k_ccsc: f64,
    /// AC voltage loop, A/V.
    pub voltage: Pi,
    /// Power loop, A/W.
    pub power: Pi,
    /// DC voltage loop, A/V.
    pub dc: Pi,
    /// PLL, rad/s per volt of q-axis error.
    pub pll: Pi,
    /// Swing equation: inertia (s), damping (p.u.), base ω and S.
    pub inertia: f64,
    pub damping: f64,
    /// Q-V droop, V per var.
    pub droop_v: f64,
    pub t_v: f64,
    /// Power base used by the swing equation (VA).
    pub s_base: f64,
}

impl SiGains {
    pub fn new(circuit: &CircuitParams, control: &ControlParams, converter: ConverterKind) -> Self {
        let b = circuit.bases();
        let l_eq = match converter {
            ConverterKind::Mmc => circuit.l_arm / 2.0,
            ConverterKind::Vsc2L => circuit.l_2l(),
        };
        let k_current_pu = control.inner.k_decouple_pu.unwrap_or(circuit.w0 * l_eq / b.z);
        let k_ccsc_pu = control
            .ccsc
            .k_decouple_pu
            .unwrap_or(2.0 * circuit.w0 * circuit.l_arm / b.z);
        let ccsc_scale = if control.ccsc.enabled { 1.0 } else { 0.0 };
        Self {
            current: Pi {
                kp: control.inner.k_pi * b.z,
                ki: control.inner.k_ii * b.z,
            },
            k_current: k_current_pu * b.z,
            ccsc: Pi {
                kp: ccsc_scale * control.ccsc.k_pic * b.z,
                ki: ccsc_scale * control.ccsc.k_iic * b.z,
            },
            k_ccsc: ccsc_scale * k_ccsc_pu * b.z,
            voltage: Pi {
                kp: control.gfm.k_pv / b.z,
                ki: control.gfm.k_iv / b.z,
            },
            power: Pi {
                kp: control.pq.k_pp * b.i / b.s,
                ki: control.pq.k_ip * b.i / b.s,
            },
            dc: Pi {
                kp: control.dc.k_pd * b.i / circuit.u_dc,
                ki: control.dc.k_id * b.i / circuit.u_dc,
            },
            pll: Pi {
                kp: control.pll.k_p / b.u,
                ki: control.pll.k_i / b.u,
            },
            inertia: control.gfm.inertia,
            damping: control.gfm.damping,
            droop_v: control.gfm.d_v * b.u / b.s,
            t_v: control.gfm.t_v,
            s_base: b.s,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_bases() {
        let p = CircuitParams::reference();
        let b = p.bases();
        assert!((b.u - 53_888.8).abs() < 1.0);
        assert!((b.i / 2721.7 - 1.0).abs() < 1e-3);
        assert!((b.s - 1.5 * b.u * b.i).abs() < 1e-3);
        assert!((p.c_eq() - 209.6e-6).abs() < 1e-9);
    }

    #[test]
    fn dc_bus_resonance_above_five_khz() {
        let p = CircuitParams::reference();
        let f = 1.0 / (2.0 * PI * (p.c_dc() * 2.0 * p.l_arm / 3.0).sqrt());
        assert!((f - 5.0e3).abs() < 1.0);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut p = CircuitParams::reference();
        p.l_arm = -1.0;
        assert!(p.validate().is_err());
        let mut c = ControlParams::reference();
        c.pq.k_pp = -0.1;
        assert!(c.validate().is_err());
        let spec = ModelSpec::new(ConverterKind::Vsc2L, ControlMode::GflDc);
        assert!(spec.validate().is_err());
    }
}
