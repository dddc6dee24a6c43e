//! Control matrices `Δm = B Δu + F Δi`.
//!
//! Each controller is linearised in its own rotating frame. A measured
//! three-phase quantity maps to the frame as `Δx_dq = T Δx + X_qd Δθ` with
//! `X_qd = [X_q; -X_d]`, and a frame reference maps back as
//! `Δx = T⁻¹ (Δx_dq - X_qd Δθ)`; the double-frequency frame carries a factor
//! of two on `Δθ`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frames::ParkHtf;
use crate::htf::{block_diag, dim, grid, solve, CMat};
use crate::opoint::{DqSpectra, OperatingPoint};
use crate::params::{CircuitParams, ControlMode, ConverterKind, Pi, SiGains};
use crate::plant::{sd, tp, MmcParts};

/// `Δm_1 = T_gi Δi_g + T_gu Δu (+ T_gv Δu_dc)` and
/// `Δm_2 = T_cic Δi_c + T_cig Δi_g + T_cu Δu`.
#[derive(Debug, Clone)]
pub struct ControlParts {
    pub t_gi: CMat,
    pub t_gu: CMat,
    pub t_gv: Option<CMat>,
    pub t_cic: CMat,
    pub t_cig: CMat,
    pub t_cu: CMat,
}

#[derive(Debug, Clone)]
pub struct ControlMatrices {
    pub f: CMat,
    pub b: CMat,
    pub parts: Option<ControlParts>,
}

fn scaled(m: &CMat, f: f64) -> CMat {
    m * Complex64::new(f, 0.0)
}

/// Harmonic-domain operators shared by all controllers at one frequency.
struct Ctx<'a> {
    h: usize,
    n: usize,
    s: Complex64,
    w0: f64,
    u_dc: f64,
    gains: &'a SiGains,
    op: &'a OperatingPoint,
    park: ParkHtf,
    park2: ParkHtf,
}

impl<'a> Ctx<'a> {
    fn new(params: &CircuitParams, gains: &'a SiGains, op: &'a OperatingPoint, s: Complex64, h: usize) -> Result<Self> {
        if op.order < h {
            return Err(Error::Dimension(format!(
                "operating point of order {} cannot populate order {h}",
                op.order
            )));
        }
        Ok(Self {
            h,
            n: dim(h),
            s,
            w0: params.w0,
            u_dc: params.u_dc,
            gains,
            op,
            park: ParkHtf::build(h, 1, op.theta0, params.w0)?,
            park2: ParkHtf::build(h, 2, op.theta0, params.w0)?,
        })
    }

    fn diag<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Result<CMat> {
        sd(f, self.s, self.h, self.w0)
    }

    fn pi(&self, pi: Pi) -> Result<CMat> {
        self.diag(|x| pi.eval(x))
    }

    fn t(&self, v: &crate::htf::HarmonicVector) -> Result<CMat> {
        tp(v, self.h)
    }

    /// `[T(X_q); -T(X_d)]`.
    fn qd(&self, x: &DqSpectra) -> Result<CMat> {
        Ok(grid(&[&[&self.t(&x[1])?], &[&-self.t(&x[0])?]]))
    }

    /// `[[G, K], [-K, G]]`.
    fn decoupled(&self, g: &CMat, k: f64) -> CMat {
        let kk = scaled(&CMat::identity(self.n, self.n), k);
        grid(&[&[g, &kk], &[&-&kk, g]])
    }

    fn h_i(&self) -> Result<CMat> {
        let g = self.pi(self.gains.current)?;
        Ok(self.decoupled(&g, self.gains.k_current))
    }

    fn g2_i(&self) -> Result<CMat> {
        let g = self.pi(self.gains.current)?;
        Ok(block_diag(&[&g, &g]))
    }

    fn h_c(&self) -> Result<CMat> {
        let g = self.pi(self.gains.ccsc)?;
        Ok(self.decoupled(&g, self.gains.k_ccsc))
    }

    /// Closed PLL: `Δθ = (I + H_pll U_d)⁻¹ H_pll Δu_q,meas`, as a map from
    /// the three-phase terminal voltage.
    fn pll_angle(&self) -> Result<CMat> {
        let t_pll = self.t_pll()?;
        Ok(t_pll * self.park.q_row())
    }

    fn t_pll(&self) -> Result<CMat> {
        let pll = self.gains.pll;
        let hp = self.diag(|x| pll.eval(x) / x)?;
        let ud = self.t(&self.op.u_dq[0])?;
        let a = CMat::identity(self.n, self.n) + &hp * ud;
        solve(&a, &hp)
    }

    /// Fundamental modulation from a dq voltage-reference linearisation.
    fn to_m1(&self, a: &CMat) -> CMat {
        scaled(&(self.park.inverse() * a), 2.0 / self.u_dc)
    }

    /// Circulating-current loop terms given the angle sensitivities.
    fn ccsc(&self, g_ti: Option<&CMat>, g_tu: &CMat) -> Result<(CMat, CMat, CMat)> {
        let n3 = 3 * self.n;
        let hc = self.h_c()?;
        let t2 = self.park2.forward();
        let t2inv = self.park2.inverse();
        let t_cic = scaled(&(&t2inv * &hc * &t2), -2.0 / self.u_dc);
        let ang = &hc * self.qd(&self.op.i_c_dq)? + self.qd(&self.op.u_c_dq)?;
        let lead = scaled(&(&t2inv * ang), -4.0 / self.u_dc);
        let t_cig = match g_ti {
            Some(g) => &lead * g,
            None => CMat::zeros(n3, n3),
        };
        let t_cu = &lead * g_tu;
        Ok((t_cic, t_cig, t_cu))
    }
}

/// Combine fundamental and circulating terms into upper/lower arm modulation.
fn arm_combination(p: &ControlParts) -> (CMat, CMat) {
    let f = grid(&[
        &[&-&p.t_cic, &-(&p.t_cig + &p.t_gi)],
        &[&-&p.t_cic, &-(&p.t_cig - &p.t_gi)],
    ]);
    let b = grid(&[&[&-(&p.t_gu + &p.t_cu)], &[&(&p.t_gu - &p.t_cu)]]);
    (scaled(&f, 0.5), scaled(&b, 0.5))
}

/// Fundamental-loop terms of the grid-forming controller.
fn gfm_fundamental(ctx: &Ctx, const_vf: bool) -> Result<(CMat, CMat, CMat, CMat)> {
    let n = ctx.n;
    let g = ctx.gains;
    let op = ctx.op;
    let t = ctx.park.forward();
    let (ud, uq) = (ctx.t(&op.u_dq[0])?, ctx.t(&op.u_dq[1])?);
    let (id, iq) = (ctx.t(&op.i_dq[0])?, ctx.t(&op.i_dq[1])?);
    let p_i = scaled(&(grid(&[&[&ud, &uq]]) * &t), 1.5);
    let p_u = scaled(&(grid(&[&[&id, &iq]]) * &t), 1.5);
    let q_i = scaled(&(grid(&[&[&uq, &-&ud]]) * &t), 1.5);
    let q_u = scaled(&(grid(&[&[&-&iq, &id]]) * &t), 1.5);

    let (g_apc, g_avc) = if const_vf {
        (CMat::zeros(n, n), CMat::zeros(n, n))
    } else {
        let (hh, dd, wb, sb) = (g.inertia, g.damping, ctx.w0, g.s_base);
        let apc = ctx.diag(|x| wb / (sb * x * (x * hh + dd)))?;
        let (dv, tv) = (g.droop_v, g.t_v);
        let avc = ctx.diag(|x| dv / (x * tv + 1.0))?;
        (apc, avc)
    };
    let g_ti = -(&g_apc * &p_i);
    let g_tu = -(&g_apc * &p_u);
    let zero = CMat::zeros(n, 3 * n);
    let g_ui = grid(&[&[&-(&g_avc * &q_i)], &[&zero]]);
    let g_uu = grid(&[&[&-(&g_avc * &q_u)], &[&zero]]);

    let gv = ctx.pi(g.voltage)?;
    let h_v = block_diag(&[&gv, &gv]);
    let g2i = ctx.g2_i()?;
    let h_i = ctx.h_i()?;
    let u_qd = ctx.qd(&op.u_dq)?;
    let i_qd = ctx.qd(&op.i_dq)?;
    let uf_qd = ctx.qd(&op.u_f_dq)?;

    let a_i = &g2i * &h_v * (&g_ui - &u_qd * &g_ti) - &h_i * (&t + &i_qd * &g_ti) - &uf_qd * &g_ti;
    let a_u = &g2i * &h_v * (&g_uu - &t - &u_qd * &g_tu) - &h_i * &i_qd * &g_tu - &uf_qd * &g_tu;
    Ok((ctx.to_m1(&a_i), ctx.to_m1(&a_u), g_ti, g_tu))
}

/// Grid-following fundamental loop with PLL; `power_loop` adds PQ control.
fn gfl_fundamental(ctx: &Ctx, power_loop: bool) -> Result<(CMat, CMat, CMat)> {
    let g = ctx.gains;
    let op = ctx.op;
    let t = ctx.park.forward();
    let h_i = ctx.h_i()?;
    let g2i = ctx.g2_i()?;
    let g_tu = ctx.pll_angle()?;
    let i_qd = ctx.qd(&op.i_dq)?;
    let uf_qd = ctx.qd(&op.u_f_dq)?;

    let mut a_i = -(&h_i * &t);
    let mut a_u = -((&h_i * &i_qd + &uf_qd) * &g_tu);
    if power_loop {
        let (ud, uq) = (ctx.t(&op.u_dq[0])?, ctx.t(&op.u_dq[1])?);
        let (id, iq) = (ctx.t(&op.i_dq[0])?, ctx.t(&op.i_dq[1])?);
        let u_pq = scaled(&grid(&[&[&ud, &uq], &[&uq, &-&ud]]), 1.5);
        let i_pq = scaled(&grid(&[&[&id, &iq], &[&-&iq, &id]]), 1.5);
        let gp = ctx.pi(g.power)?;
        let h_p = block_diag(&[&gp, &-&gp]);
        a_i -= &g2i * &h_p * &u_pq * &t;
        a_u -= &g2i * &h_p * &i_pq * &t;
    }
    Ok((ctx.to_m1(&a_i), ctx.to_m1(&a_u), g_tu))
}

/// Composite PLL operator `(I + H_pll U_d)⁻¹ H_pll` at the stack frequency.
pub fn build_pll(params: &CircuitParams, gains: &SiGains, op: &OperatingPoint, s: Complex64, h: usize) -> Result<CMat> {
    Ctx::new(params, gains, op, s, h)?.t_pll()
}

fn mmc_from_parts(parts: ControlParts) -> ControlMatrices {
    let (f, b) = arm_combination(&parts);
    ControlMatrices {
        f,
        b,
        parts: Some(parts),
    }
}

/// Grid-forming (or constant V/f) MMC control.
pub fn build_gfm(
    params: &CircuitParams,
    gains: &SiGains,
    op: &OperatingPoint,
    s: Complex64,
    h: usize,
    const_vf: bool,
) -> Result<ControlMatrices> {
    let ctx = Ctx::new(params, gains, op, s, h)?;
    let (t_gi, t_gu, g_ti, g_tu) = gfm_fundamental(&ctx, const_vf)?;
    let (t_cic, t_cig, t_cu) = ctx.ccsc(Some(&g_ti), &g_tu)?;
    Ok(mmc_from_parts(ControlParts {
        t_gi,
        t_gu,
        t_gv: None,
        t_cic,
        t_cig,
        t_cu,
    }))
}

/// Grid-following MMC with PQ control, or constant current when
/// `power_loop` is false.
pub fn build_gfl_pq(
    params: &CircuitParams,
    gains: &SiGains,
    op: &OperatingPoint,
    s: Complex64,
    h: usize,
    power_loop: bool,
) -> Result<ControlMatrices> {
    let ctx = Ctx::new(params, gains, op, s, h)?;
    let (t_gi, t_gu, g_tu) = gfl_fundamental(&ctx, power_loop)?;
    let (t_cic, t_cig, t_cu) = ctx.ccsc(None, &g_tu)?;
    Ok(mmc_from_parts(ControlParts {
        t_gi,
        t_gu,
        t_gv: None,
        t_cic,
        t_cig,
        t_cu,
    }))
}

/// Grid-following MMC regulating the DC voltage. The plant must carry the
/// DC-dynamics blocks.
pub fn build_gfl_dc(
    params: &CircuitParams,
    gains: &SiGains,
    op: &OperatingPoint,
    plant: &MmcParts,
    s: Complex64,
    h: usize,
) -> Result<ControlMatrices> {
    let dc = plant
        .dc
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("DC-voltage control needs the DC-dynamics plant".into()))?;
    let ctx = Ctx::new(params, gains, op, s, h)?;
    let n = ctx.n;
    let (t_gi, t_gu, g_tu) = gfl_fundamental(&ctx, false)?;
    let (t_cic, t_cig, t_cu) = ctx.ccsc(None, &g_tu)?;
    let gi = ctx.pi(gains.current)?;
    let gd = ctx.pi(gains.dc)?;
    let ref_path = grid(&[&[&(&gi * &gd)], &[&CMat::zeros(n, n)]]);
    let t_gv = ctx.to_m1(&ref_path);
    let parts = ControlParts {
        t_gi,
        t_gu,
        t_gv: Some(t_gv.clone()),
        t_cic,
        t_cig,
        t_cu,
    };
    let (f0, b0) = arm_combination(&parts);
    let v = scaled(&grid(&[&[&-&t_gv], &[&t_gv]]), 0.5);
    let j_i = &f0 + &v * &dc.k_vi;
    let j_u = &b0 + &v * &dc.k_ug;
    let j_v = &v * &dc.k_uc;
    let back = CMat::identity(6 * n, 6 * n) - &j_v * &plant.z_ceq * &plant.i_s;
    let rhs_f = &j_i + &j_v * &plant.z_ceq * &plant.m_i;
    let f = solve(&back, &rhs_f)?;
    let b = solve(&back, &j_u)?;
    Ok(ControlMatrices {
        f,
        b,
        parts: Some(parts),
    })
}

/// Two-level converter: fundamental loop only, `Δm_1 = F Δi_g + B Δu`.
pub fn build_2lvsc_control(
    params: &CircuitParams,
    gains: &SiGains,
    op: &OperatingPoint,
    s: Complex64,
    h: usize,
    mode: ControlMode,
) -> Result<ControlMatrices> {
    let ctx = Ctx::new(params, gains, op, s, h)?;
    let n3 = 3 * ctx.n;
    let (f, b) = match mode {
        ControlMode::OpenLoop => (CMat::zeros(n3, n3), CMat::zeros(n3, n3)),
        ControlMode::Gfm | ControlMode::ConstVf => {
            let (t_gi, t_gu, _, _) = gfm_fundamental(&ctx, mode == ControlMode::ConstVf)?;
            (t_gi, t_gu)
        }
        ControlMode::GflPq | ControlMode::ConstCurrent => {
            let (t_gi, t_gu, _) = gfl_fundamental(&ctx, mode == ControlMode::GflPq)?;
            (t_gi, t_gu)
        }
        ControlMode::GflDc => {
            return Err(Error::InvalidParameter(
                "DC-voltage control is only modelled for the MMC".into(),
            ))
        }
    };
    Ok(ControlMatrices { f, b, parts: None })
}

/// Dispatch on converter and control mode.
pub fn build_control(
    params: &CircuitParams,
    gains: &SiGains,
    op: &OperatingPoint,
    converter: ConverterKind,
    mode: ControlMode,
    plant: Option<&MmcParts>,
    s: Complex64,
    h: usize,
) -> Result<ControlMatrices> {
    let n = dim(h);
    match (converter, mode) {
        (ConverterKind::Vsc2L, _) => build_2lvsc_control(params, gains, op, s, h, mode),
        (ConverterKind::Mmc, ControlMode::OpenLoop) => Ok(ControlMatrices {
            f: CMat::zeros(6 * n, 6 * n),
            b: CMat::zeros(6 * n, 3 * n),
            parts: None,
        }),
        (ConverterKind::Mmc, ControlMode::Gfm) => build_gfm(params, gains, op, s, h, false),
        (ConverterKind::Mmc, ControlMode::ConstVf) => build_gfm(params, gains, op, s, h, true),
        (ConverterKind::Mmc, ControlMode::GflPq) => build_gfl_pq(params, gains, op, s, h, true),
        (ConverterKind::Mmc, ControlMode::ConstCurrent) => build_gfl_pq(params, gains, op, s, h, false),
        (ConverterKind::Mmc, ControlMode::GflDc) => {
            let parts = plant.ok_or_else(|| Error::InvalidParameter("missing MMC plant blocks".into()))?;
            build_gfl_dc(params, gains, op, parts, s, h)
        }
    }
}
