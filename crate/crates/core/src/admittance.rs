//! Harmonic admittance `Y = (Z - C F)⁻¹ (C B + D)` and its sequence elements.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::control::{build_control, ControlMatrices};
use crate::error::{Error, Result};
use crate::frames::{sequence_element, SequenceBasis, SequenceSlots};
use crate::htf::{dim, max_abs, solve, CMat, J};
use crate::opoint::OperatingPoint;
use crate::parallel::{self, Execution};
use crate::params::{CircuitParams, ControlMode, ControlParams, ConverterKind, GridImpedanceMode, ModelSpec, SiGains};
use crate::plant::{
    build_2lvsc, build_mmc_const_dc, build_mmc_dc_dynamics, build_mmc_stiff_arms, stack_base, PlantMatrices,
};

/// Everything needed to evaluate one converter model.
#[derive(Debug, Clone)]
pub struct Model {
    pub circuit: CircuitParams,
    pub control: ControlParams,
    pub spec: ModelSpec,
    pub gains: SiGains,
}

impl Model {
    pub fn new(circuit: CircuitParams, control: ControlParams, spec: ModelSpec) -> Result<Self> {
        circuit.validate()?;
        control.validate()?;
        spec.validate()?;
        let gains = SiGains::new(&circuit, &control, spec.converter);
        Ok(Self {
            circuit,
            control,
            spec,
            gains,
        })
    }

    pub fn h(&self) -> usize {
        self.spec.h
    }

    /// Same model at a different harmonic order.
    pub fn with_h(&self, h: usize) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.h = h;
        Self::new(self.circuit.clone(), self.control.clone(), spec)
    }

    fn check_op(&self, op: &OperatingPoint) -> Result<()> {
        if op.converter != self.spec.converter || op.control != self.spec.control {
            return Err(Error::InvalidOperatingPoint(format!(
                "operating point is for {:?}/{:?}, model is {:?}/{:?}",
                op.converter, op.control, self.spec.converter, self.spec.control
            )));
        }
        if op.order < self.h() {
            return Err(Error::InvalidOperatingPoint(format!(
                "operating point order {} below harmonic order {}",
                op.order,
                self.h()
            )));
        }
        Ok(())
    }

    /// Plant and control matrices for a stack centred at `s`.
    pub fn matrices(&self, op: &OperatingPoint, s: Complex64) -> Result<(PlantMatrices, ControlMatrices)> {
        let h = self.h();
        let p = &self.circuit;
        let plant = match (self.spec.converter, self.spec.control) {
            (ConverterKind::Vsc2L, _) => build_2lvsc(p, s, h)?,
            (ConverterKind::Mmc, ControlMode::GflDc) => build_mmc_dc_dynamics(p, op, s, h, self.spec.power_balance)?,
            (ConverterKind::Mmc, _) => build_mmc_const_dc(p, op, s, h)?,
        };
        let control = build_control(
            p,
            &self.gains,
            op,
            self.spec.converter,
            self.spec.control,
            plant.mmc.as_ref(),
            s,
            h,
        )?;
        Ok((plant, control))
    }
}

/// Admittance at one perturbation frequency, load convention.
#[derive(Debug, Clone, Serialize)]
pub struct AdmittanceResult {
    pub freq_hz: f64,
    #[serde(skip)]
    pub s: Complex64,
    /// Grid-port harmonic admittance, `3(2h+1)` square.
    #[serde(skip)]
    pub y_full: CMat,
    pub y11: Complex64,
    pub y12: Complex64,
    pub y21: Complex64,
    pub y22: Complex64,
    /// 1-norm condition number of `Z - C F`.
    pub condition_estimate: f64,
}

/// One sweep point: a result, or the reason it was skipped.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub freq_hz: f64,
    /// Frequency was moved off a multiple of the fundamental.
    pub offset: bool,
    pub result: std::result::Result<AdmittanceResult, String>,
}

impl SweepPoint {
    pub fn flagged(&self) -> bool {
        self.result.is_err()
    }
}

fn norm1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Grid-current rows of `(Z - C F)⁻¹ (C B + D)` with the sign flipped to
/// load convention, plus the condition estimate.
pub fn grid_admittance(
    plant: &PlantMatrices,
    control: &ControlMatrices,
    mode: GridImpedanceMode,
) -> Result<(CMat, f64)> {
    let n3 = 3 * dim(plant.h);
    let gz = &plant.grid_impedance;
    let with_grid = mode == GridImpedanceMode::Internal;
    let (z, f) = if with_grid {
        (&plant.z - &plant.d * &gz.zg_ext, &control.f + &control.b * &gz.zg_ext)
    } else {
        (plant.z.clone(), control.f.clone())
    };
    let a = &z - &plant.c * &f;
    let rhs = &plant.c * &control.b + &plant.d;
    let x = solve(&a, &rhs)?;
    let ainv = solve(&a, &CMat::identity(a.nrows(), a.ncols()))?;
    let cond = norm1(&a) * norm1(&ainv);
    let y = -x.rows(plant.grid_offset, n3).into_owned();
    if with_grid {
        return Ok((y, cond));
    }
    // Series composition: i = Y_c (e - Z_g i).
    let lhs = CMat::identity(n3, n3) + &y * &gz.zg;
    Ok((solve(&lhs, &y)?, cond))
}

/// Sequence elements of a harmonic admittance stacked around `s - jω0`.
pub fn sequence_elements(y: &CMat, h: usize) -> Result<[Complex64; 4]> {
    let (p, n) = (SequenceBasis::positive(), SequenceBasis::negative());
    let sl = SequenceSlots::CENTERED;
    Ok([
        sequence_element(y, h, &p, sl.first, &p, sl.first)?,
        sequence_element(y, h, &p, sl.first, &n, sl.second)?,
        sequence_element(y, h, &n, sl.second, &p, sl.first)?,
        sequence_element(y, h, &n, sl.second, &n, sl.second)?,
    ])
}

/// Admittance at the complex perturbation frequency `s_p` (rad/s).
pub fn assemble_at(model: &Model, op: &OperatingPoint, s_p: Complex64) -> Result<AdmittanceResult> {
    model.check_op(op)?;
    let freq_hz = s_p.im / (2.0 * PI);
    let s = stack_base(s_p, model.circuit.w0);
    let run = || -> Result<AdmittanceResult> {
        let (plant, control) = model.matrices(op, s)?;
        let (y_full, condition_estimate) = grid_admittance(&plant, &control, model.spec.grid_impedance)?;
        let [y11, y12, y21, y22] = sequence_elements(&y_full, model.h())?;
        Ok(AdmittanceResult {
            freq_hz,
            s: s_p,
            y_full,
            y11,
            y12,
            y21,
            y22,
            condition_estimate,
        })
    };
    run().map_err(|e| e.at_frequency(freq_hz))
}

/// Admittance at `f` Hz on the imaginary axis.
pub fn assemble(model: &Model, op: &OperatingPoint, freq_hz: f64) -> Result<AdmittanceResult> {
    assemble_at(model, op, J * (2.0 * PI * freq_hz))
}

/// MMC admittance with the arm capacitor impedance forced to zero, so arm
/// voltages only follow the modulation.
pub fn assemble_stiff_arms(model: &Model, op: &OperatingPoint, freq_hz: f64) -> Result<AdmittanceResult> {
    if model.spec.converter != ConverterKind::Mmc || model.spec.control == ControlMode::GflDc {
        return Err(Error::InvalidParameter(
            "stiff-arm reduction applies to the MMC with a stiff DC voltage".into(),
        ));
    }
    model.check_op(op)?;
    let s_p = J * (2.0 * PI * freq_hz);
    let s = stack_base(s_p, model.circuit.w0);
    let h = model.h();
    let plant = build_mmc_stiff_arms(&model.circuit, op, s, h)?;
    let control = build_control(
        &model.circuit,
        &model.gains,
        op,
        model.spec.converter,
        model.spec.control,
        plant.mmc.as_ref(),
        s,
        h,
    )?;
    let (y_full, condition_estimate) = grid_admittance(&plant, &control, model.spec.grid_impedance)?;
    let [y11, y12, y21, y22] = sequence_elements(&y_full, h)?;
    Ok(AdmittanceResult {
        freq_hz,
        s: s_p,
        y_full,
        y11,
        y12,
        y21,
        y22,
        condition_estimate,
    })
}

/// Offset applied to frequencies that land on a multiple of the fundamental.
pub const GRID_OFFSET_HZ: f64 = 0.01;

/// Move `f` off exact multiples of `f0`, where integrators and the arm
/// capacitors put poles on the harmonic stack.
pub fn avoid_harmonics(f: f64, f0: f64) -> (f64, bool) {
    let r = f / f0;
    if (r - r.round()).abs() * f0 < 1e-9 {
        (f + GRID_OFFSET_HZ, true)
    } else {
        (f, false)
    }
}

/// Evaluate every frequency; singular points are flagged, not fatal.
pub fn sweep(model: &Model, op: &OperatingPoint, freqs_hz: &[f64], exec: Execution) -> Result<Vec<SweepPoint>> {
    model.check_op(op)?;
    let f0 = model.circuit.f0();
    Ok(parallel::map(exec, freqs_hz, |&f| {
        let (fa, offset) = avoid_harmonics(f, f0);
        let result = match assemble(model, op, fa) {
            Ok(r) => Ok(r),
            Err(e) if e.is_point_singularity() => Err(e.to_string()),
            Err(e) => Err(format!("error: {e}")),
        };
        SweepPoint {
            freq_hz: fa,
            offset,
            result,
        }
    }))
}

/// Relative mismatch of the mirror relations `Y11(s) = conj Y22(s*)` and
/// `Y12(s) = conj Y21(s*)` with `s* = conj(s) + 2jω0`, checked both ways.
pub fn symmetry_residual_at(model: &Model, op: &OperatingPoint, s_p: Complex64) -> Result<f64> {
    let a = assemble_at(model, op, s_p)?;
    let mirror = s_p.conj() + J * (2.0 * model.circuit.w0);
    let b = assemble_at(model, op, mirror)?;
    let pairs = [
        (a.y11, b.y22.conj()),
        (a.y12, b.y21.conj()),
        (a.y21, b.y12.conj()),
        (a.y22, b.y11.conj()),
    ];
    let scale = pairs.iter().map(|(x, _)| x.norm()).fold(0.0, f64::max);
    let err = pairs.iter().map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    Ok(if scale == 0.0 { err } else { err / scale })
}

pub fn symmetry_residual(model: &Model, op: &OperatingPoint, freq_hz: f64) -> Result<f64> {
    symmetry_residual_at(model, op, J * (2.0 * PI * freq_hz))
}

/// Per-case closed forms written directly from the circuit and controller
/// blocks, without the generic `Z, C, D` packaging.
pub mod closed_form {
    use super::*;
    use crate::plant::MmcParts;

    fn grid_rows(x: &CMat, h: usize, offset: usize) -> CMat {
        -x.rows(offset, 3 * dim(h)).into_owned()
    }

    /// Grid-impedance substitution `Δu = Δe + Z_g Δi_g` folded into
    /// the circuit matrix and the feedback.
    fn with_grid(zg_ext: &CMat, e_t: &CMat, lhs: CMat, f: &CMat, b: &CMat) -> (CMat, CMat) {
        (lhs + e_t * zg_ext, f + b * zg_ext)
    }

    /// MMC with stiff DC voltage, grid-forming or PQ control.
    pub fn mmc_const_dc(parts: &MmcParts, control: &ControlMatrices, zg_ext: &CMat, h: usize) -> Result<CMat> {
        let coupling = &parts.u_c + &parts.m_v * &parts.z_ceq * &parts.i_s;
        let base = &parts.z_larm + &parts.m_v * &parts.z_ceq * &parts.m_i;
        let (base, f) = with_grid(zg_ext, &parts.e_t, base, &control.f, &control.b);
        let lhs = base + &coupling * &f;
        let rhs = &parts.e_t + &coupling * &control.b;
        let x = solve(&lhs, &rhs)?;
        // Δi = -lhs⁻¹ rhs Δu; load convention flips the sign again.
        Ok(-grid_rows(&x, h, 3 * dim(h)))
    }

    /// MMC with DC-voltage dynamics and DC-voltage control.
    pub fn mmc_dc_dynamics(parts: &MmcParts, control: &ControlMatrices, zg_ext: &CMat, h: usize) -> Result<CMat> {
        let dc = parts
            .dc
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("missing DC-dynamics blocks".into()))?;
        let mv_eff = &parts.m_v + &dc.e_v * &dc.k_uc;
        let coupling = &parts.u_c + &mv_eff * &parts.z_ceq * &parts.i_s;
        let base = &parts.z_larm + &dc.e_v * &dc.k_vi + &mv_eff * &parts.z_ceq * &parts.m_i;
        let e_tot = &parts.e_t + &dc.e_v * &dc.k_ug;
        let (base, f) = with_grid(zg_ext, &e_tot, base, &control.f, &control.b);
        let lhs = base + &coupling * &f;
        let rhs = &e_tot + &coupling * &control.b;
        let x = solve(&lhs, &rhs)?;
        Ok(-grid_rows(&x, h, 3 * dim(h)))
    }

    /// Two-level converter: `-(Z_L + U G_i)⁻¹ (E_t + U G_u)` with
    /// `U = -U_dc/2` in this sign convention.
    pub fn vsc2l(z_l: &CMat, u_dc: f64, control: &ControlMatrices, zg_ext: &CMat, h: usize) -> Result<CMat> {
        let n3 = 3 * dim(h);
        let e_t = CMat::identity(n3, n3);
        let u = Complex64::new(-u_dc / 2.0, 0.0);
        let (base, f) = with_grid(zg_ext, &e_t, z_l.clone(), &control.f, &control.b);
        let lhs = base + &f * u;
        let rhs = &e_t + &control.b * u;
        let x = solve(&lhs, &rhs)?;
        Ok(-grid_rows(&x, h, 0))
    }
}

/// Closed-form admittance for the model's converter/control pairing.
pub fn closed_form_admittance(model: &Model, op: &OperatingPoint, s_p: Complex64) -> Result<CMat> {
    let h = model.h();
    let s = stack_base(s_p, model.circuit.w0);
    let (plant, control) = model.matrices(op, s)?;
    let zg_ext = if model.spec.grid_impedance == GridImpedanceMode::Internal {
        plant.grid_impedance.zg_ext.clone()
    } else {
        CMat::zeros(plant.grid_impedance.zg_ext.nrows(), plant.grid_impedance.zg_ext.ncols())
    };
    let y = match (model.spec.converter, plant.mmc.as_ref()) {
        (ConverterKind::Vsc2L, _) => closed_form::vsc2l(&plant.z, model.circuit.u_dc, &control, &zg_ext, h)?,
        (ConverterKind::Mmc, Some(parts)) if parts.dc.is_some() => {
            closed_form::mmc_dc_dynamics(parts, &control, &zg_ext, h)?
        }
        (ConverterKind::Mmc, Some(parts)) => closed_form::mmc_const_dc(parts, &control, &zg_ext, h)?,
        (ConverterKind::Mmc, None) => unreachable!("MMC plant always carries its parts"),
    };
    if model.spec.grid_impedance == GridImpedanceMode::Internal {
        Ok(y)
    } else {
        let n3 = y.nrows();
        let lhs = CMat::identity(n3, n3) + &y * &plant.grid_impedance.zg;
        solve(&lhs, &y)
    }
}

/// Scale-free size of a matrix for reporting.
pub fn magnitude(m: &CMat) -> f64 {
    max_abs(m)
}

/// `20 log10 |y|` and phase in degrees.
pub fn db_deg(y: Complex64) -> (f64, f64) {
    (20.0 * y.norm().log10(), y.arg().to_degrees())
}
