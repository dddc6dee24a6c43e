//! Average-model differential equations of the converter and its controllers.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frames::frame_phase_offsets;
use crate::params::{CircuitParams, ControlMode, ControlParams, ConverterKind, SiGains};

/// Positions of the active states inside the state vector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub i_g: usize,
    pub i_c: Option<usize>,
    pub u_cu: Option<usize>,
    pub u_cl: Option<usize>,
    pub u_dc: Option<usize>,
    /// Current-loop integrators (d, q).
    pub current: Option<usize>,
    /// Circulating-current integrators (d, q).
    pub ccsc: Option<usize>,
    /// Frame angle offset `θ - ω0 t`.
    pub delta: Option<usize>,
    /// Virtual rotor speed deviation, p.u.
    pub omega: Option<usize>,
    /// Filtered reactive power.
    pub q_f: Option<usize>,
    /// AC voltage-loop integrators (d, q).
    pub voltage: Option<usize>,
    pub pll: Option<usize>,
    /// Power-loop integrators (P, Q).
    pub power: Option<usize>,
    pub dc: Option<usize>,
}

impl Layout {
    pub fn new(converter: ConverterKind, mode: ControlMode, ccsc_enabled: bool) -> Self {
        let mut n = 0;
        let mut take = |k: usize| {
            let at = n;
            n += k;
            at
        };
        let mmc = converter == ConverterKind::Mmc;
        let closed = mode != ControlMode::OpenLoop;
        let mut l = Layout::default();
        if mmc {
            l.i_c = Some(take(3));
        }
        l.i_g = take(3);
        if mmc {
            l.u_cu = Some(take(3));
            l.u_cl = Some(take(3));
        }
        if mmc && mode == ControlMode::GflDc {
            l.u_dc = Some(take(1));
        }
        if closed {
            l.current = Some(take(2));
        }
        if mmc && closed && ccsc_enabled {
            l.ccsc = Some(take(2));
        }
        match mode {
            ControlMode::Gfm => {
                l.delta = Some(take(1));
                l.omega = Some(take(1));
                l.q_f = Some(take(1));
                l.voltage = Some(take(2));
            }
            ControlMode::ConstVf => l.voltage = Some(take(2)),
            ControlMode::GflPq | ControlMode::GflDc | ControlMode::ConstCurrent => {
                l.delta = Some(take(1));
                l.pll = Some(take(1));
            }
            ControlMode::OpenLoop => {}
        }
        if mode == ControlMode::GflPq {
            l.power = Some(take(2));
        }
        if mode == ControlMode::GflDc {
            l.dc = Some(take(1));
        }
        l.n = n;
        l
    }
}

/// One sinusoidal voltage component added to all three source phases,
/// `Re(phasor · w_x · e^{jωt})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub omega: f64,
    pub phasor: Complex64,
    pub weights: [Complex64; 3],
}

impl Tone {
    fn value(&self, t: f64) -> [f64; 3] {
        let rot = self.phasor * Complex64::from_polar(1.0, self.omega * t);
        std::array::from_fn(|x| (rot * self.weights[x]).re)
    }
}

/// Instantaneous algebraic signals at one time instant.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Signals {
    pub e: [f64; 3],
    pub u_t: [f64; 3],
    pub i_g: [f64; 3],
    pub i_c: [f64; 3],
    pub u_cu: [f64; 3],
    pub u_cl: [f64; 3],
    pub m_u: [f64; 3],
    pub m_l: [f64; 3],
    pub m1: [f64; 3],
    pub m2: [f64; 3],
    pub u_dc: f64,
    pub delta: f64,
    pub u_dq: [f64; 2],
    pub i_dq: [f64; 2],
    pub u_f_dq: [f64; 2],
    pub i_c_dq: [f64; 2],
    pub u_c_dq: [f64; 2],
    pub p: f64,
    pub q: f64,
}

/// Everything the right-hand side needs, precomputed from the parameters.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub converter: ConverterKind,
    pub mode: ControlMode,
    pub layout: Layout,
    pub circuit: CircuitParams,
    pub control: ControlParams,
    pub gains: SiGains,
    pub u_pk: f64,
    pub i_base: f64,
    pub s_base: f64,
    c_eq: f64,
    l_arm: f64,
    r_arm: f64,
    l_f: f64,
    r_f: f64,
    c_dc: f64,
    r_dc: f64,
    i_src: f64,
    offsets1: [f64; 3],
    offsets2: [f64; 3],
}

fn park(x: &[f64; 3], angle: f64, off: &[f64; 3]) -> [f64; 2] {
    let mut d = 0.0;
    let mut q = 0.0;
    for k in 0..3 {
        let (s, c) = (angle + off[k]).sin_cos();
        d += x[k] * c;
        q -= x[k] * s;
    }
    [2.0 / 3.0 * d, 2.0 / 3.0 * q]
}

fn inv_park(dq: [f64; 2], angle: f64, off: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|k| {
        let (s, c) = (angle + off[k]).sin_cos();
        dq[0] * c - dq[1] * s
    })
}

fn read3(x: &[f64], at: usize) -> [f64; 3] {
    [x[at], x[at + 1], x[at + 2]]
}

impl Dynamics {
    pub fn new(
        circuit: &CircuitParams,
        control: &ControlParams,
        converter: ConverterKind,
        mode: ControlMode,
    ) -> Result<Self> {
        circuit.validate()?;
        control.validate()?;
        if circuit.l_g != 0.0 {
            return Err(Error::InvalidParameter(
                "the simulator supports a resistive grid impedance only (l_g must be 0)".into(),
            ));
        }
        if converter == ConverterKind::Vsc2L && mode == ControlMode::GflDc {
            return Err(Error::InvalidParameter(
                "DC-voltage control is only modelled for the MMC".into(),
            ));
        }
        let b = circuit.bases();
        Ok(Self {
            converter,
            mode,
            layout: Layout::new(converter, mode, control.ccsc.enabled),
            circuit: circuit.clone(),
            control: control.clone(),
            gains: SiGains::new(circuit, control, converter),
            u_pk: b.u,
            i_base: b.i,
            s_base: b.s,
            c_eq: circuit.c_eq(),
            l_arm: circuit.l_arm,
            r_arm: circuit.r_arm,
            l_f: circuit.l_2l(),
            r_f: circuit.r_2l(),
            c_dc: circuit.c_dc(),
            r_dc: circuit.r_dc(),
            i_src: control.dc.p_dc_pu * b.s / circuit.u_dc + circuit.u_dc / circuit.r_dc(),
            offsets1: frame_phase_offsets(1),
            offsets2: frame_phase_offsets(2),
        })
    }

    pub fn n_states(&self) -> usize {
        self.layout.n
    }

    /// Per-state magnitudes used to express tolerances in p.u.
    pub fn scales(&self) -> Vec<f64> {
        let l = &self.layout;
        let mut s = vec![1.0; l.n];
        let mut fill = |at: Option<usize>, k: usize, v: f64| {
            if let Some(a) = at {
                s[a..a + k].iter_mut().for_each(|x| *x = v);
            }
        };
        let (i, u, udc) = (self.i_base, self.u_pk, self.circuit.u_dc);
        fill(Some(l.i_g), 3, i);
        fill(l.i_c, 3, i);
        fill(l.u_cu, 3, udc);
        fill(l.u_cl, 3, udc);
        fill(l.u_dc, 1, udc);
        fill(l.current, 2, u);
        fill(l.ccsc, 2, u);
        fill(l.delta, 1, 1.0);
        fill(l.omega, 1, 1.0);
        fill(l.q_f, 1, self.s_base);
        fill(l.voltage, 2, i);
        fill(l.pll, 1, self.circuit.w0);
        fill(l.power, 2, i);
        fill(l.dc, 1, i);
        s
    }

    /// State names in layout order.
    pub fn state_names(&self) -> Vec<String> {
        let l = &self.layout;
        let mut names = vec![String::new(); l.n];
        let mut put = |at: Option<usize>, labels: &[&str]| {
            if let Some(a) = at {
                for (k, lab) in labels.iter().enumerate() {
                    names[a + k] = lab.to_string();
                }
            }
        };
        put(Some(l.i_g), &["ig_a", "ig_b", "ig_c"]);
        put(l.i_c, &["ic_a", "ic_b", "ic_c"]);
        put(l.u_cu, &["uCu_a", "uCu_b", "uCu_c"]);
        put(l.u_cl, &["uCl_a", "uCl_b", "uCl_c"]);
        put(l.u_dc, &["u_dc"]);
        put(l.current, &["xi_d", "xi_q"]);
        put(l.ccsc, &["xc_d", "xc_q"]);
        put(l.delta, &["delta"]);
        put(l.omega, &["omega"]);
        put(l.q_f, &["q_f"]);
        put(l.voltage, &["xv_d", "xv_q"]);
        put(l.pll, &["x_pll"]);
        put(l.power, &["xp", "xq"]);
        put(l.dc, &["x_dc"]);
        names
    }

    /// Starting point: charged capacitors, frame aligned with the grid and the
    /// current-loop integrators holding the grid voltage.
    pub fn initial_state(&self) -> Vec<f64> {
        let l = &self.layout;
        let mut x = vec![0.0; l.n];
        for at in [l.u_cu, l.u_cl].into_iter().flatten() {
            x[at..at + 3].iter_mut().for_each(|v| *v = self.circuit.u_dc);
        }
        if let Some(a) = l.u_dc {
            x[a] = self.circuit.u_dc;
        }
        if let Some(a) = l.current {
            x[a] = self.u_pk;
        }
        x
    }

    /// Grid source voltage with optional injected tones.
    pub fn source(&self, t: f64, tones: &[Tone]) -> [f64; 3] {
        let w = self.circuit.w0 * t;
        let mut e: [f64; 3] = std::array::from_fn(|k| self.u_pk * (w + self.offsets1[k]).cos());
        for tone in tones {
            let v = tone.value(t);
            for k in 0..3 {
                e[k] += v[k];
            }
        }
        e
    }

    /// Right-hand side `dx = f(t, x)`; also returns the algebraic signals.
    pub fn derivative(&self, t: f64, x: &[f64], tones: &[Tone], dx: &mut [f64]) -> Signals {
        let l = &self.layout;
        let g = &self.gains;
        let c = &self.control;
        let w0 = self.circuit.w0;
        let u_dc_nom = self.circuit.u_dc;
        let mmc = self.converter == ConverterKind::Mmc;
        dx.iter_mut().for_each(|v| *v = 0.0);

        let e = self.source(t, tones);
        let i_g = read3(x, l.i_g);
        let u_t: [f64; 3] = std::array::from_fn(|k| e[k] + self.circuit.r_g * i_g[k]);
        let i_c = l.i_c.map_or([0.0; 3], |a| read3(x, a));
        let u_dc = l.u_dc.map_or(u_dc_nom, |a| x[a]);

        let delta = l.delta.map_or(0.0, |a| x[a]);
        let theta = w0 * t + delta;
        let u_dq = park(&u_t, theta, &self.offsets1);
        let i_dq = park(&i_g, theta, &self.offsets1);
        let i_c_dq = if mmc {
            park(&i_c, 2.0 * theta, &self.offsets2)
        } else {
            [0.0; 2]
        };
        let p = 1.5 * (u_dq[0] * i_dq[0] + u_dq[1] * i_dq[1]);
        let q = 1.5 * (u_dq[1] * i_dq[0] - u_dq[0] * i_dq[1]);

        // Outer loops produce the current reference.
        let mut i_ref = [0.0; 2];
        match self.mode {
            ControlMode::Gfm | ControlMode::ConstVf => {
                let u_ref = if self.mode == ControlMode::Gfm {
                    let (dl, wl, ql) = (l.delta.unwrap(), l.omega.unwrap(), l.q_f.unwrap());
                    let w = x[wl];
                    let p_ref = c.gfm.p_ref_pu * self.s_base;
                    dx[wl] = ((p_ref - p) / self.s_base - g.damping * w) / g.inertia;
                    dx[dl] = w0 * w;
                    dx[ql] = (q - x[ql]) / g.t_v;
                    self.u_pk * c.gfm.u_ref_pu - g.droop_v * (x[ql] - c.gfm.q_ref_pu * self.s_base)
                } else {
                    self.u_pk * c.gfm.u_ref_pu
                };
                let a = l.voltage.unwrap();
                let err = [u_ref - u_dq[0], -u_dq[1]];
                for k in 0..2 {
                    i_ref[k] = g.voltage.kp * err[k] + x[a + k];
                    dx[a + k] = g.voltage.ki * err[k];
                }
            }
            ControlMode::GflPq => {
                let a = l.power.unwrap();
                let ep = c.pq.p_ref_pu * self.s_base - p;
                let eq = c.pq.q_ref_pu * self.s_base - q;
                i_ref[0] = g.power.kp * ep + x[a];
                i_ref[1] = -(g.power.kp * eq + x[a + 1]);
                dx[a] = g.power.ki * ep;
                dx[a + 1] = g.power.ki * eq;
            }
            ControlMode::ConstCurrent => {
                i_ref = [c.pq.p_ref_pu * self.i_base, -c.pq.q_ref_pu * self.i_base];
            }
            ControlMode::GflDc => {
                let a = l.dc.unwrap();
                let err = u_dc - u_dc_nom;
                i_ref[0] = g.dc.kp * err + x[a];
                i_ref[1] = -c.pq.q_ref_pu * self.i_base;
                dx[a] = g.dc.ki * err;
            }
            ControlMode::OpenLoop => {}
        }
        if let (Some(dl), Some(pl)) = (l.delta, l.pll) {
            dx[dl] = g.pll.kp * u_dq[1] + x[pl];
            dx[pl] = g.pll.ki * u_dq[1];
        }

        // Inner loops.
        let u_f_dq = match l.current {
            Some(a) => {
                let err = [i_ref[0] - i_dq[0], i_ref[1] - i_dq[1]];
                dx[a] = g.current.ki * err[0];
                dx[a + 1] = g.current.ki * err[1];
                [
                    g.current.kp * err[0] + x[a] - g.k_current * i_dq[1],
                    g.current.kp * err[1] + x[a + 1] + g.k_current * i_dq[0],
                ]
            }
            None => [c.open_loop.m_d * u_dc_nom / 2.0, c.open_loop.m_q * u_dc_nom / 2.0],
        };
        let u_c_dq = match l.ccsc {
            Some(a) => {
                dx[a] = g.ccsc.ki * i_c_dq[0];
                dx[a + 1] = g.ccsc.ki * i_c_dq[1];
                [
                    -(g.ccsc.kp * i_c_dq[0] + x[a]) - g.k_ccsc * i_c_dq[1],
                    -(g.ccsc.kp * i_c_dq[1] + x[a + 1]) + g.k_ccsc * i_c_dq[0],
                ]
            }
            None => [0.0; 2],
        };
        let scale = 2.0 / u_dc_nom;
        let m1 = inv_park([u_f_dq[0] * scale, u_f_dq[1] * scale], theta, &self.offsets1);
        let m2 = if mmc {
            inv_park([u_c_dq[0] * scale, u_c_dq[1] * scale], 2.0 * theta, &self.offsets2)
        } else {
            [0.0; 3]
        };

        let mut sig = Signals {
            e,
            u_t,
            i_g,
            i_c,
            m1,
            m2,
            u_dc,
            delta,
            u_dq,
            i_dq,
            u_f_dq,
            i_c_dq,
            u_c_dq,
            p,
            q,
            ..Default::default()
        };

        if mmc {
            let (ic, cu, cl) = (l.i_c.unwrap(), l.u_cu.unwrap(), l.u_cl.unwrap());
            let u_cu = read3(x, cu);
            let u_cl = read3(x, cl);
            let mut sum_ic = 0.0;
            for k in 0..3 {
                let m_u = 0.5 * (1.0 - m1[k] - m2[k]);
                let m_l = 0.5 * (1.0 + m1[k] - m2[k]);
                let v_u = m_u * u_cu[k];
                let v_l = m_l * u_cl[k];
                let i_u = i_c[k] + 0.5 * i_g[k];
                let i_l = i_c[k] - 0.5 * i_g[k];
                dx[ic + k] = (0.5 * (u_dc - v_u - v_l) - self.r_arm * i_c[k]) / self.l_arm;
                dx[l.i_g + k] = (v_l - v_u - 2.0 * u_t[k] - self.r_arm * i_g[k]) / self.l_arm;
                dx[cu + k] = m_u * i_u / self.c_eq;
                dx[cl + k] = m_l * i_l / self.c_eq;
                sig.m_u[k] = m_u;
                sig.m_l[k] = m_l;
                sum_ic += i_c[k];
            }
            sig.u_cu = u_cu;
            sig.u_cl = u_cl;
            if let Some(a) = l.u_dc {
                dx[a] = (self.i_src - u_dc / self.r_dc - sum_ic) / self.c_dc;
            }
        } else {
            for k in 0..3 {
                dx[l.i_g + k] = (0.5 * u_dc_nom * m1[k] - u_t[k] - self.r_f * i_g[k]) / self.l_f;
            }
        }
        sig
    }

    /// Period of the fundamental.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.circuit.w0
    }
}
