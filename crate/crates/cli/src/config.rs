//! JSON system configuration with unit-suffixed keys.

#![allow(non_snake_case)]

use std::f64::consts::PI;
use std::path::Path;

use htf_mmc::params::{
    CcscParams, CircuitParams, ControlMode, ControlParams, ConverterKind, CurrentLoopParams, DcVoltageParams,
    GfmParams, GridImpedanceMode, ModelSpec, OpenLoopParams, PllParams, PowerBalanceForm, PowerParams,
};
use htf_mmc::sim::{ScanOptions, SimOptions};
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::CliError;

/// `v * 10^k` through the shortest decimal form, so unit prefixes round-trip exactly.
fn shift(v: f64, k: i32) -> f64 {
    let s = format!("{v:e}");
    let (mant, exp) = s.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    format!("{mant}e{}", exp + k).parse().unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub circuit: CircuitConfig,
    pub control: ControlConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitConfig {
    pub S_rating_MVA: f64,
    pub U_dc_kV: f64,
    pub U_g_ll_rms_kV: f64,
    pub f0_Hz: f64,
    pub N_modules: u32,
    pub L_arm_mH: f64,
    pub R_arm_ohm: f64,
    pub C_m_mF: f64,
    #[serde(default)]
    pub R_g_ohm: f64,
    #[serde(default)]
    pub L_g_mH: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub L_filter_mH: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub R_filter_ohm: Option<f64>,
    #[serde(default = "default_r_dc")]
    pub R_dc_pu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub C_dc_uF: Option<f64>,
}

fn default_r_dc() -> f64 {
    1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub gfm: GfmConfig,
    pub pll: PllConfig,
    pub dc: DcConfig,
    pub power: PowerConfig,
    pub current: CurrentConfig,
    pub ccsc: CcscConfig,
    pub open_loop: OpenLoopConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfmConfig {
    pub H_s: f64,
    pub D_pu: f64,
    pub D_v_pu: f64,
    pub T_v_s: f64,
    pub k_pv_pu: f64,
    pub k_iv_pu_per_s: f64,
    pub P_ref_pu: f64,
    pub Q_ref_pu: f64,
    pub U_ref_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PllConfig {
    pub k_p_rad_per_s_per_pu: f64,
    pub k_i_rad_per_s2_per_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcConfig {
    pub k_pd_pu: f64,
    pub k_id_pu_per_s: f64,
    pub P_dc_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub k_pp_pu: f64,
    pub k_ip_pu_per_s: f64,
    pub P_ref_pu: f64,
    pub Q_ref_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentConfig {
    pub k_pi_pu: f64,
    pub k_ii_pu_per_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_decouple_pu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcscConfig {
    pub k_pic_pu: f64,
    pub k_iic_pu_per_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_decouple_pu: Option<f64>,
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenLoopConfig {
    pub m_d: f64,
    pub m_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub converter: ConverterKind,
    pub control: ControlMode,
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default)]
    pub grid_impedance: GridImpedanceMode,
    #[serde(default)]
    pub power_balance: PowerBalanceForm,
}

fn default_h() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub dt_us: f64,
    pub warmup_periods: usize,
    pub max_periods: usize,
    pub tolerance_pu: f64,
    pub spectrum_order: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let o = SimOptions::default();
        Self {
            dt_us: shift(o.dt, 6),
            warmup_periods: o.warmup_periods,
            max_periods: o.max_periods,
            tolerance_pu: o.tolerance_pu,
            spectrum_order: o.order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// `start:stop:points:log|lin`, Hz.
    pub grid: String,
    pub amplitude_pu: f64,
    pub window_s: f64,
    pub condition_limit: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let o = ScanOptions::default();
        Self {
            grid: "5:1000:200:log".into(),
            amplitude_pu: o.amplitude_pu,
            window_s: o.window_s,
            condition_limit: o.condition_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub tol_dB: f64,
    pub tol_deg: f64,
    /// Rows within this distance of a multiple of f0 are left out of the verdict.
    pub guard_band_Hz: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            tol_dB: 1.0,
            tol_deg: 5.0,
            guard_band_Hz: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            formats: vec![Format::Csv],
        }
    }
}

impl SystemConfig {
    /// Reference MMC case with the given converter and control.
    pub fn reference(converter: ConverterKind, control: ControlMode) -> Self {
        let c = CircuitParams::reference();
        let k = ControlParams::reference();
        let mut cfg = Self {
            circuit: CircuitConfig {
                S_rating_MVA: shift(c.s_rating, -6),
                U_dc_kV: shift(c.u_dc, -3),
                U_g_ll_rms_kV: shift(c.u_g_ll_rms, -3),
                f0_Hz: c.f0(),
                N_modules: c.n_modules,
                L_arm_mH: shift(c.l_arm, 3),
                R_arm_ohm: c.r_arm,
                C_m_mF: shift(c.c_m, 3),
                R_g_ohm: c.r_g,
                L_g_mH: shift(c.l_g, 3),
                L_filter_mH: None,
                R_filter_ohm: None,
                R_dc_pu: c.r_dc_pu,
                C_dc_uF: None,
            },
            control: ControlConfig {
                gfm: GfmConfig {
                    H_s: k.gfm.inertia,
                    D_pu: k.gfm.damping,
                    D_v_pu: k.gfm.d_v,
                    T_v_s: k.gfm.t_v,
                    k_pv_pu: k.gfm.k_pv,
                    k_iv_pu_per_s: k.gfm.k_iv,
                    P_ref_pu: k.gfm.p_ref_pu,
                    Q_ref_pu: k.gfm.q_ref_pu,
                    U_ref_pu: k.gfm.u_ref_pu,
                },
                pll: PllConfig {
                    k_p_rad_per_s_per_pu: k.pll.k_p,
                    k_i_rad_per_s2_per_pu: k.pll.k_i,
                },
                dc: DcConfig {
                    k_pd_pu: k.dc.k_pd,
                    k_id_pu_per_s: k.dc.k_id,
                    P_dc_pu: k.dc.p_dc_pu,
                },
                power: PowerConfig {
                    k_pp_pu: k.pq.k_pp,
                    k_ip_pu_per_s: k.pq.k_ip,
                    P_ref_pu: k.pq.p_ref_pu,
                    Q_ref_pu: k.pq.q_ref_pu,
                },
                current: CurrentConfig {
                    k_pi_pu: k.inner.k_pi,
                    k_ii_pu_per_s: k.inner.k_ii,
                    k_decouple_pu: None,
                },
                ccsc: CcscConfig {
                    k_pic_pu: k.ccsc.k_pic,
                    k_iic_pu_per_s: k.ccsc.k_iic,
                    k_decouple_pu: None,
                    enabled: true,
                },
                open_loop: OpenLoopConfig {
                    m_d: k.open_loop.m_d,
                    m_q: k.open_loop.m_q,
                },
            },
            model: ModelConfig {
                converter,
                control,
                h: 3,
                grid_impedance: GridImpedanceMode::Internal,
                power_balance: PowerBalanceForm::Exact,
            },
            simulation: SimulationConfig::default(),
            scan: ScanConfig::default(),
            compare: CompareConfig::default(),
            output: OutputConfig::default(),
        };
        if control.is_grid_forming() {
            cfg.circuit.R_g_ohm = 5.0;
        }
        cfg
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: htf_mmc::Error| CliError::Config(e.to_string());
        self.circuit().validate().map_err(cfg)?;
        self.control().validate().map_err(cfg)?;
        self.model_spec().validate().map_err(cfg)?;
        self.sim_options().validate().map_err(cfg)?;
        Grid::parse(&self.scan.grid)?;
        let o = &self.scan;
        if !(o.amplitude_pu > 0.0 && o.window_s > 0.0 && o.condition_limit > 1.0) {
            return Err(CliError::Config(
                "scan amplitude_pu and window_s must be positive and condition_limit above 1".into(),
            ));
        }
        let c = &self.compare;
        if !(c.tol_dB >= 0.0 && c.tol_deg >= 0.0 && c.guard_band_Hz >= 0.0) {
            return Err(CliError::Config("compare tolerances must be non-negative".into()));
        }
        Ok(())
    }

    pub fn circuit(&self) -> CircuitParams {
        let c = &self.circuit;
        CircuitParams {
            s_rating: shift(c.S_rating_MVA, 6),
            u_dc: shift(c.U_dc_kV, 3),
            u_g_ll_rms: shift(c.U_g_ll_rms_kV, 3),
            w0: 2.0 * PI * c.f0_Hz,
            n_modules: c.N_modules,
            l_arm: shift(c.L_arm_mH, -3),
            r_arm: c.R_arm_ohm,
            c_m: shift(c.C_m_mF, -3),
            r_g: c.R_g_ohm,
            l_g: shift(c.L_g_mH, -3),
            l_filter: c.L_filter_mH.map(|v| shift(v, -3)),
            r_filter: c.R_filter_ohm,
            r_dc_pu: c.R_dc_pu,
            c_dc: c.C_dc_uF.map(|v| shift(v, -6)),
        }
    }

    pub fn control(&self) -> ControlParams {
        let k = &self.control;
        ControlParams {
            gfm: GfmParams {
                inertia: k.gfm.H_s,
                damping: k.gfm.D_pu,
                d_v: k.gfm.D_v_pu,
                t_v: k.gfm.T_v_s,
                k_pv: k.gfm.k_pv_pu,
                k_iv: k.gfm.k_iv_pu_per_s,
                p_ref_pu: k.gfm.P_ref_pu,
                q_ref_pu: k.gfm.Q_ref_pu,
                u_ref_pu: k.gfm.U_ref_pu,
            },
            pll: PllParams {
                k_p: k.pll.k_p_rad_per_s_per_pu,
                k_i: k.pll.k_i_rad_per_s2_per_pu,
            },
            dc: DcVoltageParams {
                k_pd: k.dc.k_pd_pu,
                k_id: k.dc.k_id_pu_per_s,
                p_dc_pu: k.dc.P_dc_pu,
            },
            pq: PowerParams {
                k_pp: k.power.k_pp_pu,
                k_ip: k.power.k_ip_pu_per_s,
                p_ref_pu: k.power.P_ref_pu,
                q_ref_pu: k.power.Q_ref_pu,
            },
            inner: CurrentLoopParams {
                k_pi: k.current.k_pi_pu,
                k_ii: k.current.k_ii_pu_per_s,
                k_decouple_pu: k.current.k_decouple_pu,
            },
            ccsc: CcscParams {
                k_pic: k.ccsc.k_pic_pu,
                k_iic: k.ccsc.k_iic_pu_per_s,
                k_decouple_pu: k.ccsc.k_decouple_pu,
                enabled: k.ccsc.enabled,
            },
            open_loop: OpenLoopParams {
                m_d: k.open_loop.m_d,
                m_q: k.open_loop.m_q,
            },
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            converter: self.model.converter,
            control: self.model.control,
            h: self.model.h,
            grid_impedance: self.model.grid_impedance,
            power_balance: self.model.power_balance,
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        let s = &self.simulation;
        SimOptions {
            dt: shift(s.dt_us, -6),
            warmup_periods: s.warmup_periods,
            max_periods: s.max_periods,
            tolerance_pu: s.tolerance_pu,
            order: s.spectrum_order,
        }
    }

    pub fn scan_options(&self) -> ScanOptions {
        ScanOptions {
            amplitude_pu: self.scan.amplitude_pu,
            window_s: self.scan.window_s,
            condition_limit: self.scan.condition_limit,
            ..ScanOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips_through_json() {
        let cfg = SystemConfig::reference(ConverterKind::Mmc, ControlMode::GflPq);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = SystemConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.circuit(), CircuitParams::reference());
        assert_eq!(back.control(), ControlParams::reference());
    }

    #[test]
    fn decimal_shift_is_exact() {
        assert_eq!(shift(0.01048, 3), 10.48);
        assert_eq!(shift(10.48, -3), 0.01048);
        assert_eq!(shift(0.01637, 3), 16.37);
        assert_eq!(shift(0.0, 6), 0.0);
        assert_eq!(shift(-2.5, 1), -25.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cfg = SystemConfig::reference(ConverterKind::Mmc, ControlMode::Gfm);
        let text = serde_json::to_string(&cfg)
            .unwrap()
            .replace("\"L_arm_mH\"", "\"L_arm\"");
        assert!(matches!(SystemConfig::from_json(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn grid_forming_reference_adds_grid_resistor() {
        let cfg = SystemConfig::reference(ConverterKind::Mmc, ControlMode::Gfm);
        assert_eq!(cfg.circuit().r_g, 5.0);
    }
}
