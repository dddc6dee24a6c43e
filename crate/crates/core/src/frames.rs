//! Park transforms as harmonic operators, and sequence projection.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::htf::{dim, toeplitz_from_signal, BlockMatrix, CMat, HarmonicVector, ZERO};

/// `a = e^{j2π/3}`.
pub fn rot_a() -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI / 3.0)
}

/// Phase offsets of the rotating frame used by a Park transform.
///
/// The fundamental frame follows positive sequence (phase b lags by 2π/3);
/// the double-frequency frame used for circulating current follows negative
/// sequence (phase b leads by 2π/3).
pub fn frame_phase_offsets(angle_multiple: u32) -> [f64; 3] {
    let sign = if angle_multiple % 2 == 1 { 1.0 } else { -1.0 };
    [0.0, -sign * 2.0 * PI / 3.0, sign * 2.0 * PI / 3.0]
}

/// Harmonic model of the amplitude-invariant Park transform and its inverse
/// for the frame angle `angle_multiple * (ω0 t + theta0)`.
#[derive(Debug, Clone)]
pub struct ParkHtf {
    pub angle_multiple: u32,
    pub theta0: f64,
    /// 2 x 3 blocks, carries the 2/3 scale.
    pub abc_to_dq: BlockMatrix,
    /// 3 x 2 blocks, no 2/3 scale.
    pub dq_to_abc: BlockMatrix,
}

impl ParkHtf {
    pub fn build(h: usize, angle_multiple: u32, theta0: f64, w0: f64) -> Result<Self> {
        if angle_multiple == 0 || h < angle_multiple as usize {
            return Err(Error::Dimension(format!(
                "Park transform with angle multiple {angle_multiple} needs h >= {angle_multiple}, got {h}"
            )));
        }
        let m = angle_multiple as i32;
        let offsets = frame_phase_offsets(angle_multiple);
        let mut fwd = BlockMatrix::zeros(h, 2, 3);
        let mut inv = BlockMatrix::zeros(h, 3, 2);
        for (x, off) in offsets.iter().enumerate() {
            let phase = m as f64 * theta0 + off;
            let cos = HarmonicVector::cosine(h, m, 1.0, phase, w0);
            // -sin(φ) = cos(φ + π/2)
            let neg_sin = HarmonicVector::cosine(h, m, 1.0, phase + PI / 2.0, w0);
            let tc = toeplitz_from_signal(&cos, h)?.into_entries();
            let tns = toeplitz_from_signal(&neg_sin, h)?.into_entries();
            fwd.set(0, x, &tc * Complex64::new(2.0 / 3.0, 0.0))?;
            fwd.set(1, x, &tns * Complex64::new(2.0 / 3.0, 0.0))?;
            inv.set(x, 0, tc)?;
            inv.set(x, 1, tns)?;
        }
        Ok(Self {
            angle_multiple,
            theta0,
            abc_to_dq: fwd,
            dq_to_abc: inv,
        })
    }

    pub fn forward(&self) -> CMat {
        self.abc_to_dq.to_dense()
    }

    pub fn inverse(&self) -> CMat {
        self.dq_to_abc.to_dense()
    }

    /// The q-row of the forward transform (maps three phases to one channel).
    pub fn q_row(&self) -> CMat {
        let n = dim(self.abc_to_dq.order());
        self.forward().rows(n, n).into_owned()
    }
}

/// Phase weights of a symmetrical-component basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceBasis {
    pub weights: [Complex64; 3],
}

impl SequenceBasis {
    pub fn positive() -> Self {
        let a = rot_a();
        Self {
            weights: [Complex64::new(1.0, 0.0), a * a, a],
        }
    }

    pub fn negative() -> Self {
        let a = rot_a();
        Self {
            weights: [Complex64::new(1.0, 0.0), a, a * a],
        }
    }
}

/// Harmonic position of the two sequence components inside a harmonic stack.
///
/// Sequence "1" is the positive-sequence component at the perturbation
/// frequency `s`; sequence "2" is the negative-sequence component at
/// `s - 2jω0`. The stack itself is centred on `s - jω0`, midway between the
/// two, so that mirroring `s -> 2jω0 - conj(s)` maps the truncation window
/// onto itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceSlots {
    pub first: i32,
    pub second: i32,
}

impl SequenceSlots {
    pub const CENTERED: SequenceSlots = SequenceSlots { first: 1, second: -1 };

    /// Offset (in multiples of jω0) from the perturbation frequency to the
    /// stack's base frequency.
    pub const BASE_SHIFT: f64 = -1.0;
}

/// `(1/3) Σ conj(w_x) y_x[shift]`.
pub fn project_sequence(y_abc: &[HarmonicVector; 3], basis: &SequenceBasis, shift: i32) -> Result<Complex64> {
    let order = y_abc[0].order();
    if shift.unsigned_abs() as usize > order {
        return Err(Error::ShiftOutOfRange { shift, order });
    }
    let mut acc = ZERO;
    for (y, w) in y_abc.iter().zip(basis.weights.iter()) {
        acc += w.conj() * y.get(shift);
    }
    Ok(acc / 3.0)
}

/// Sequence-domain element of a three-phase harmonic matrix
/// `(3(2h+1) x 3(2h+1))`: response in `out` basis at `out_shift` to a unit
/// excitation in `inp` basis at `in_shift`.
pub fn sequence_element(
    y: &CMat,
    h: usize,
    out: &SequenceBasis,
    out_shift: i32,
    inp: &SequenceBasis,
    in_shift: i32,
) -> Result<Complex64> {
    let n = dim(h);
    if y.nrows() != 3 * n || y.ncols() != 3 * n {
        return Err(Error::Dimension(format!(
            "sequence extraction needs a {0}x{0} matrix, got {1}x{2}",
            3 * n,
            y.nrows(),
            y.ncols()
        )));
    }
    for shift in [out_shift, in_shift] {
        if shift.unsigned_abs() as usize > h {
            return Err(Error::ShiftOutOfRange { shift, order: h });
        }
    }
    let r = (out_shift + h as i32) as usize;
    let col = (in_shift + h as i32) as usize;
    let mut acc = ZERO;
    for x in 0..3 {
        for z in 0..3 {
            acc += out.weights[x].conj() * y[(x * n + r, z * n + col)] * inp.weights[z];
        }
    }
    Ok(acc / 3.0)
}
