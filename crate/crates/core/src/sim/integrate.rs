//! Fixed-step fourth-order Runge-Kutta.

use crate::error::{Error, Result};

use super::model::{Dynamics, Signals, Tone};

/// Divergence threshold in multiples of each state's scale.
pub const DIVERGENCE_LIMIT: f64 = 100.0;

/// Reusable stage buffers.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    scales: Vec<f64>,
}

impl Rk4 {
    pub fn new(dynamics: &Dynamics) -> Self {
        let n = dynamics.n_states();
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
            scales: dynamics.scales(),
        }
    }

    /// Advance `x` from `t` by `dt`; returns the signals at `t`.
    pub fn step(&mut self, d: &Dynamics, t: f64, dt: f64, x: &mut [f64], tones: &[Tone]) -> Result<Signals> {
        let n = x.len();
        let sig = d.derivative(t, x, tones, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        d.derivative(t + 0.5 * dt, &self.tmp, tones, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        d.derivative(t + 0.5 * dt, &self.tmp, tones, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        d.derivative(t + dt, &self.tmp, tones, &mut self.k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        for i in 0..n {
            if !(x[i].abs() <= DIVERGENCE_LIMIT * self.scales[i]) {
                return Err(Error::Divergence { t: t + dt });
            }
        }
        Ok(sig)
    }
}

/// Integrate `steps` steps from `t0`, calling `observe(k, t_k, signals_k, x_k)`
/// before each step. Returns the final state.
pub fn run<F>(
    d: &Dynamics,
    x0: &[f64],
    t0: f64,
    dt: f64,
    steps: usize,
    tones: &[Tone],
    mut observe: F,
) -> Result<Vec<f64>>
where
    F: FnMut(usize, f64, &Signals, &[f64]),
{
    let mut rk = Rk4::new(d);
    let mut x = x0.to_vec();
    let mut before = x.clone();
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        before.copy_from_slice(&x);
        let sig = rk.step(d, t, dt, &mut x, tones)?;
        observe(k, t, &sig, &before);
    }
    Ok(x)
}

/// Integrate without observation.
pub fn advance(d: &Dynamics, x0: &[f64], t0: f64, dt: f64, steps: usize, tones: &[Tone]) -> Result<Vec<f64>> {
    let mut rk = Rk4::new(d);
    let mut x = x0.to_vec();
    for k in 0..steps {
        rk.step(d, t0 + k as f64 * dt, dt, &mut x, tones)?;
    }
    Ok(x)
}
