//! Main-circuit matrices `Z Δi = C Δm + D Δu`.
//!
//! Every builder takes the complex frequency `s` of the harmonic stack's
//! centre entry; entry `k` of each stack sits at `s + jkω0`.
//!
//! Unknown and input ordering for the MMC:
//! `Δi = [Δi_c (a, b, c); Δi_g (a, b, c)]`, `Δm = [Δm_u (a, b, c); Δm_l (a, b, c)]`,
//! `Δu_C = [Δu_Cu; Δu_Cl]`, `Δu = Δu_t (a, b, c)`. For the two-level converter
//! `Δi = Δi_g`, `Δm = Δm_1` and `Δu = Δu_t`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::htf::{block_diag, dim, grid, shifted_diagonal, toeplitz_from_signal, CMat, J};
use crate::opoint::{OperatingPoint, PhaseSpectra};
use crate::params::{CircuitParams, PowerBalanceForm};

/// Toeplitz entries of a steady-state signal.
pub(crate) fn tp(sig: &crate::htf::HarmonicVector, h: usize) -> Result<CMat> {
    Ok(toeplitz_from_signal(sig, h)?.into_entries())
}

/// Shifted-diagonal entries of a transfer function.
pub(crate) fn sd<F: Fn(Complex64) -> Complex64>(tf: F, s: Complex64, h: usize, w0: f64) -> Result<CMat> {
    Ok(shifted_diagonal(tf, s, h, w0)?.into_entries())
}

/// Block diagonal of the three per-phase Toeplitz blocks.
pub(crate) fn phase_toeplitz(set: &PhaseSpectra, h: usize) -> Result<CMat> {
    let blocks = set.iter().map(|v| tp(v, h)).collect::<Result<Vec<_>>>()?;
    Ok(block_diag(&blocks.iter().collect::<Vec<_>>()))
}

fn sum_phases(a: &PhaseSpectra, b: &PhaseSpectra, fb: f64) -> Result<PhaseSpectra> {
    let mut out = a.clone();
    for x in 0..3 {
        let coeffs = a[x]
            .coeffs()
            .iter()
            .zip(b[x].coeffs())
            .map(|(p, q)| p + q * fb)
            .collect();
        out[x] = crate::htf::HarmonicVector::new(a[x].order(), coeffs, a[x].base_freq())?;
    }
    Ok(out)
}

fn scaled(m: &CMat, f: f64) -> CMat {
    m * Complex64::new(f, 0.0)
}

fn ident(n: usize) -> CMat {
    CMat::identity(n, n)
}

fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

/// `[[X_u/2, X_l/2], [X_u, -X_l]]`: maps upper/lower arm quantities to the
/// circulating and grid loop equations.
fn arm_to_loops(xu: &CMat, xl: &CMat) -> CMat {
    grid(&[&[&scaled(xu, 0.5), &scaled(xl, 0.5)], &[xu, &scaled(xl, -1.0)]])
}

/// Series grid impedance as a map from `Δi` to the voltage drop at the
/// converter terminal.
#[derive(Debug, Clone)]
pub struct GridImpedance {
    /// `3(2h+1) x (2h+1)·n_unknown_blocks`.
    pub zg_ext: CMat,
    /// Per-phase block diagonal, `3(2h+1)` square.
    pub zg: CMat,
}

/// Raw blocks of the MMC circuit, kept for closed-form checks and for the
/// DC-voltage controller.
#[derive(Debug, Clone)]
pub struct MmcParts {
    pub z_larm: CMat,
    pub z_ceq: CMat,
    pub m_v: CMat,
    pub m_i: CMat,
    pub u_c: CMat,
    pub i_s: CMat,
    pub e_t: CMat,
    pub dc: Option<DcParts>,
}

/// DC-voltage dynamics `Δu_dc = K_vi Δi + K_uc Δu_C + K_ug Δu`.
#[derive(Debug, Clone)]
pub struct DcParts {
    pub e_v: CMat,
    pub k_vi: CMat,
    pub k_uc: CMat,
    pub k_ug: CMat,
}

#[derive(Debug, Clone)]
pub struct PlantMatrices {
    pub h: usize,
    pub z: CMat,
    pub c: CMat,
    pub d: CMat,
    /// Row/column offset of `Δi_g` inside `Δi`.
    pub grid_offset: usize,
    pub grid_impedance: GridImpedance,
    pub mmc: Option<MmcParts>,
}

impl PlantMatrices {
    pub fn n_unknown(&self) -> usize {
        self.z.nrows()
    }
}

fn grid_impedance(
    params: &CircuitParams,
    s: Complex64,
    h: usize,
    unknown_blocks: usize,
    grid_block: usize,
) -> Result<GridImpedance> {
    let n = dim(h);
    let (l, r) = (params.l_g, params.r_g);
    let zx = sd(|x| x * l + r, s, h, params.w0)?;
    let zg = block_diag(&[&zx, &zx, &zx]);
    let mut zg_ext = zeros(3 * n, unknown_blocks * n);
    zg_ext.view_mut((0, grid_block * n), (3 * n, 3 * n)).copy_from(&zg);
    Ok(GridImpedance { zg_ext, zg })
}

/// Arm inductor and capacitor blocks plus modulation Toeplitz blocks.
fn mmc_parts(params: &CircuitParams, op: &OperatingPoint, s: Complex64, h: usize) -> Result<MmcParts> {
    let n = dim(h);
    let w0 = params.w0;
    let (l, r, ceq) = (params.l_arm, params.r_arm, params.c_eq());
    let zl = sd(|x| x * l + r, s, h, w0)?;
    let zc = sd(|x| 1.0 / (x * ceq), s, h, w0)?;
    let z_larm = block_diag(&[&zl; 6]);
    let z_ceq = block_diag(&[&zc; 6]);

    let mu = phase_toeplitz(&op.m_u, h)?;
    let ml = phase_toeplitz(&op.m_l, h)?;
    let ucu = phase_toeplitz(&op.u_cu, h)?;
    let ucl = phase_toeplitz(&op.u_cl, h)?;
    let iu = phase_toeplitz(&sum_phases(&op.i_c, &op.i_g, 0.5)?, h)?;
    let il = phase_toeplitz(&sum_phases(&op.i_c, &op.i_g, -0.5)?, h)?;

    let m_v = arm_to_loops(&mu, &ml);
    let u_c = arm_to_loops(&ucu, &ucl);
    let m_i = grid(&[&[&mu, &scaled(&mu, 0.5)], &[&ml, &scaled(&ml, -0.5)]]);
    let i_s = block_diag(&[&iu, &il]);
    let e_t = grid(&[&[&zeros(3 * n, 3 * n)], &[&scaled(&ident(3 * n), 2.0)]]);
    Ok(MmcParts {
        z_larm,
        z_ceq,
        m_v,
        m_i,
        u_c,
        i_s,
        e_t,
        dc: None,
    })
}

/// MMC fed from a stiff DC voltage.
pub fn build_mmc_const_dc(
    params: &CircuitParams,
    op: &OperatingPoint,
    s: Complex64,
    h: usize,
) -> Result<PlantMatrices> {
    const_dc_from_parts(params, mmc_parts(params, op, s, h)?, s, h)
}

/// MMC with arm capacitors treated as stiff voltage sources (`Z_Ceq = 0`).
pub fn build_mmc_stiff_arms(
    params: &CircuitParams,
    op: &OperatingPoint,
    s: Complex64,
    h: usize,
) -> Result<PlantMatrices> {
    let mut parts = mmc_parts(params, op, s, h)?;
    parts.z_ceq.fill(Complex64::new(0.0, 0.0));
    const_dc_from_parts(params, parts, s, h)
}

fn const_dc_from_parts(params: &CircuitParams, parts: MmcParts, s: Complex64, h: usize) -> Result<PlantMatrices> {
    let z = &parts.z_larm + &parts.m_v * &parts.z_ceq * &parts.m_i;
    let c = -(&parts.u_c + &parts.m_v * &parts.z_ceq * &parts.i_s);
    let d = -&parts.e_t;
    Ok(PlantMatrices {
        h,
        z,
        c,
        d,
        grid_offset: 3 * dim(h),
        grid_impedance: grid_impedance(params, s, h, 6, 3)?,
        mmc: Some(parts),
    })
}

/// Cross-phase power-balance coefficients expressing `Δu_dc` through the
/// AC-side variables, assuming a stiff DC current.
pub fn dc_parts(
    params: &CircuitParams,
    op: &OperatingPoint,
    s: Complex64,
    h: usize,
    form: PowerBalanceForm,
) -> Result<DcParts> {
    if !(op.i_dc.abs() > 1e-9 * params.bases().i) {
        return Err(Error::InvalidOperatingPoint(format!(
            "DC current {} A is zero; the DC-voltage model divides by it",
            op.i_dc
        )));
    }
    let n = dim(h);
    let w0 = params.w0;
    let (l, r, ceq) = (params.l_arm, params.r_arm, params.c_eq());
    let idc = op.i_dc;
    let iu_set = sum_phases(&op.i_c, &op.i_g, 0.5)?;
    let il_set = sum_phases(&op.i_c, &op.i_g, -0.5)?;

    // Incremental power of an arm inductor (with its resistance) and of an
    // arm capacitor.
    let (l_pow, c_pow): (Box<dyn Fn(&CMat) -> Result<CMat>>, Box<dyn Fn(&CMat) -> Result<CMat>>) = match form {
        PowerBalanceForm::Exact => {
            let zl2 = sd(|x| x * l + 2.0 * r, s, h, w0)?;
            let yc = sd(|x| x * ceq, s, h, w0)?;
            (
                Box::new(move |t: &CMat| Ok(&zl2 * t)),
                Box::new(move |t: &CMat| Ok(&yc * t)),
            )
        }
        PowerBalanceForm::Symmetrized => {
            let zl = sd(|x| x * l + r, s, h, w0)?;
            let yc = sd(|x| x * ceq, s, h, w0)?;
            (
                Box::new(move |t: &CMat| Ok(scaled(&(&zl * t + t * &zl), 0.5))),
                Box::new(move |t: &CMat| Ok(scaled(&(&yc * t + t * &yc), 0.5))),
            )
        }
    };

    let mut k_vi = zeros(n, 6 * n);
    let mut k_uc = zeros(n, 6 * n);
    let mut k_ug = zeros(n, 3 * n);
    for x in 0..3 {
        let au = l_pow(&tp(&iu_set[x], h)?)?;
        let al = l_pow(&tp(&il_set[x], h)?)?;
        let ut = tp(&op.u_t[x], h)?;
        let f1 = scaled(&(&au + &al), 1.0 / idc);
        let f4 = scaled(&(scaled(&(&au - &al), 0.5) + ut), 1.0 / idc);
        let f2 = scaled(&c_pow(&tp(&op.u_cu[x], h)?)?, 1.0 / idc);
        let f3 = scaled(&c_pow(&tp(&op.u_cl[x], h)?)?, 1.0 / idc);
        let f5 = scaled(&tp(&op.i_g[x], h)?, 1.0 / idc);
        k_vi.view_mut((0, x * n), (n, n)).copy_from(&f1);
        k_vi.view_mut((0, (3 + x) * n), (n, n)).copy_from(&f4);
        k_uc.view_mut((0, x * n), (n, n)).copy_from(&f2);
        k_uc.view_mut((0, (3 + x) * n), (n, n)).copy_from(&f3);
        k_ug.view_mut((0, x * n), (n, n)).copy_from(&f5);
    }
    let mut e_v = zeros(6 * n, n);
    for x in 0..3 {
        e_v.view_mut((x * n, 0), (n, n)).copy_from(&scaled(&ident(n), -0.5));
    }
    Ok(DcParts { e_v, k_vi, k_uc, k_ug })
}

/// MMC fed from a stiff DC current with the DC voltage left free.
pub fn build_mmc_dc_dynamics(
    params: &CircuitParams,
    op: &OperatingPoint,
    s: Complex64,
    h: usize,
    form: PowerBalanceForm,
) -> Result<PlantMatrices> {
    let mut parts = mmc_parts(params, op, s, h)?;
    let dc = dc_parts(params, op, s, h, form)?;
    let mv_eff = &parts.m_v + &dc.e_v * &dc.k_uc;
    let z = &parts.z_larm + &dc.e_v * &dc.k_vi + &mv_eff * &parts.z_ceq * &parts.m_i;
    let c = -(&parts.u_c + &mv_eff * &parts.z_ceq * &parts.i_s);
    let d = -(&parts.e_t + &dc.e_v * &dc.k_ug);
    parts.dc = Some(dc);
    Ok(PlantMatrices {
        h,
        z,
        c,
        d,
        grid_offset: 3 * dim(h),
        grid_impedance: grid_impedance(params, s, h, 6, 3)?,
        mmc: Some(parts),
    })
}

/// Two-level converter behind an L filter, stiff DC voltage.
pub fn build_2lvsc(params: &CircuitParams, s: Complex64, h: usize) -> Result<PlantMatrices> {
    let n = dim(h);
    let (l, r) = (params.l_2l(), params.r_2l());
    let zl = sd(|x| x * l + r, s, h, params.w0)?;
    let z = block_diag(&[&zl; 3]);
    let c = scaled(&ident(3 * n), params.u_dc / 2.0);
    let d = -ident(3 * n);
    Ok(PlantMatrices {
        h,
        z,
        c,
        d,
        grid_offset: 0,
        grid_impedance: grid_impedance(params, s, h, 3, 0)?,
        mmc: None,
    })
}

/// `s` of the centre entry for a perturbation at `s_p` when the stack is
/// centred between the two sequence frequencies.
pub fn stack_base(s_p: Complex64, w0: f64) -> Complex64 {
    s_p + J * (crate::frames::SequenceSlots::BASE_SHIFT * w0)
}
