//! Periodic steady state by shooting, and operating-point extraction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::htf::HarmonicVector;
use crate::opoint::{DqSpectra, OperatingPoint, PhaseSpectra};

use super::integrate::{advance, run};
use super::model::{Dynamics, Signals, Tone};

/// Integration and convergence settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Requested time step; rounded so a period holds an integer number of steps.
    pub dt: f64,
    /// Plain periods simulated before shooting starts.
    pub warmup_periods: usize,
    /// Cap on simulated periods along the converging trajectory.
    pub max_periods: usize,
    /// Required period-to-period RMS change, p.u.
    pub tolerance_pu: f64,
    /// Highest harmonic kept in extracted spectra.
    pub order: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 20e-6,
            warmup_periods: 30,
            max_periods: 200,
            tolerance_pu: 1e-6,
            order: 10,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 50e-6) {
            return Err(Error::InvalidParameter(format!(
                "time step must be in (0, 50 µs], got {}",
                self.dt
            )));
        }
        if self.order < 2 {
            return Err(Error::InvalidParameter("spectrum order must be at least 2".into()));
        }
        Ok(())
    }

    /// Steps per fundamental period and the matching step.
    pub fn grid(&self, period: f64) -> (usize, f64) {
        let n = (period / self.dt).round().max(1.0) as usize;
        (n, period / n as f64)
    }
}

/// A converged periodic orbit.
#[derive(Debug, Clone)]
pub struct SteadyState {
    /// State at `t = 0` (and every multiple of the period).
    pub x0: Vec<f64>,
    /// One-period monodromy in scaled coordinates `x / scale`.
    pub monodromy: DMatrix<f64>,
    pub scales: Vec<f64>,
    pub steps_per_period: usize,
    pub dt: f64,
    /// Period-to-period RMS change after each simulated period, p.u.
    pub trace: Vec<f64>,
    pub residual_pu: f64,
}

fn rms_scaled(a: &[f64], b: &[f64], scales: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .zip(scales)
        .map(|((x, y), s)| ((x - y) / s).powi(2))
        .sum();
    (s / a.len() as f64).sqrt()
}

/// Central-difference Jacobian of the map `x -> x(t0 + steps·dt)` in scaled
/// coordinates.
pub fn flow_jacobian(d: &Dynamics, x: &[f64], t0: f64, dt: f64, steps: usize, tones: &[Tone]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let scales = d.scales();
    let eps = 1e-5;
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += eps * scales[j];
        xm[j] -= eps * scales[j];
        let fp = advance(d, &xp, t0, dt, steps, tones)?;
        let fm = advance(d, &xm, t0, dt, steps, tones)?;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * eps * scales[i]);
        }
    }
    Ok(jac)
}

/// Newton update for `F(x) = x_end - x` with Jacobian `jac - I` (scaled).
pub fn newton_update(x: &mut [f64], x_end: &[f64], jac: &DMatrix<f64>, scales: &[f64]) -> Result<()> {
    let n = x.len();
    let a = jac - DMatrix::identity(n, n);
    let r = DVector::from_iterator(n, (0..n).map(|i| (x_end[i] - x[i]) / scales[i]));
    let dz = a.lu().solve(&(-r)).ok_or(Error::SingularMatrix {
        ratio: 0.0,
        freq_hz: None,
    })?;
    for i in 0..n {
        x[i] += dz[i] * scales[i];
    }
    Ok(())
}

/// Warm-up followed by Newton shooting on the one-period map.
pub fn find_steady_state(d: &Dynamics, opts: &SimOptions) -> Result<SteadyState> {
    opts.validate()?;
    let (steps, dt) = opts.grid(d.period());
    let scales = d.scales();
    let mut x = d.initial_state();
    let mut trace = Vec::new();
    let period = |x: &[f64]| advance(d, x, 0.0, dt, steps, &[]);

    for _ in 0..opts.warmup_periods.min(opts.max_periods) {
        let xn = period(&x)?;
        trace.push(rms_scaled(&xn, &x, &scales));
        x = xn;
        if *trace.last().unwrap() < 1e-4 {
            break;
        }
    }

    let target = (opts.tolerance_pu * 1e-3).max(1e-12);
    let mut best = f64::INFINITY;
    loop {
        let xn = period(&x)?;
        let r = rms_scaled(&xn, &x, &scales);
        trace.push(r);
        if r < target || (r < opts.tolerance_pu && r > 0.3 * best) {
            break;
        }
        best = best.min(r);
        if trace.len() >= opts.max_periods {
            return Err(Error::SteadyState {
                periods: trace.len(),
                trace,
            });
        }
        let jac = flow_jacobian(d, &x, 0.0, dt, steps, &[])?;
        if newton_update(&mut x, &xn, &jac, &scales).is_err() {
            x = xn;
        }
    }
    let residual_pu = *trace.last().unwrap();
    if !(residual_pu < opts.tolerance_pu) {
        return Err(Error::SteadyState {
            periods: trace.len(),
            trace,
        });
    }
    let monodromy = flow_jacobian(d, &x, 0.0, dt, steps, &[])?;
    Ok(SteadyState {
        x0: x,
        monodromy,
        scales,
        steps_per_period: steps,
        dt,
        trace,
        residual_pu,
    })
}

/// Signals over one period of the steady orbit, sampled at every step.
pub fn period_signals(d: &Dynamics, ss: &SteadyState) -> Result<Vec<Signals>> {
    let mut out = Vec::with_capacity(ss.steps_per_period);
    run(d, &ss.x0, 0.0, ss.dt, ss.steps_per_period, &[], |_, _, s, _| {
        out.push(*s)
    })?;
    Ok(out)
}

/// Steady-state spectra of every signal the harmonic model needs.
pub fn extract_opoint(d: &Dynamics, ss: &SteadyState, order: usize) -> Result<OperatingPoint> {
    let sig = period_signals(d, ss)?;
    let w0 = d.circuit.w0;
    let spec = |f: &dyn Fn(&Signals) -> f64| {
        let samples: Vec<f64> = sig.iter().map(f).collect();
        HarmonicVector::from_period_samples(&samples, order, w0)
    };
    let phases = |f: &dyn Fn(&Signals) -> [f64; 3]| -> PhaseSpectra { std::array::from_fn(|k| spec(&|s| f(s)[k])) };
    let dq = |f: &dyn Fn(&Signals) -> [f64; 2]| -> DqSpectra { std::array::from_fn(|k| spec(&|s| f(s)[k])) };
    let mean = |f: &dyn Fn(&Signals) -> f64| sig.iter().map(f).sum::<f64>() / sig.len() as f64;

    let op = OperatingPoint {
        converter: d.converter,
        control: d.mode,
        order,
        w0,
        theta0: mean(&|s| s.delta),
        u_dc: mean(&|s| s.u_dc),
        i_dc: mean(&|s| s.i_c.iter().sum()),
        m_u: phases(&|s| s.m_u),
        m_l: phases(&|s| s.m_l),
        m1: phases(&|s| s.m1),
        m2: phases(&|s| s.m2),
        u_cu: phases(&|s| s.u_cu),
        u_cl: phases(&|s| s.u_cl),
        i_c: phases(&|s| s.i_c),
        i_g: phases(&|s| s.i_g),
        u_t: phases(&|s| s.u_t),
        u_dq: dq(&|s| s.u_dq),
        i_dq: dq(&|s| s.i_dq),
        u_f_dq: dq(&|s| s.u_f_dq),
        i_c_dq: dq(&|s| s.i_c_dq),
        u_c_dq: dq(&|s| s.u_c_dq),
    };
    op.validate()?;
    Ok(op)
}

/// Convenience: steady state and operating point in one call.
pub fn steady_opoint(d: &Dynamics, opts: &SimOptions) -> Result<(SteadyState, OperatingPoint)> {
    let ss = find_steady_state(d, opts)?;
    let op = extract_opoint(d, &ss, opts.order)?;
    Ok((ss, op))
}
