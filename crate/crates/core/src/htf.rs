//! Harmonic-domain linear algebra.
//!
//! A small-signal variable around the complex frequency `s` is stored as the
//! stack of its coefficients at `s + jkω0` for `k = -h..=h`. Index position
//! `k + h` holds harmonic `k`, so rows and columns of every operator run from
//! `-h` (top/left) to `+h` (bottom/right).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative pivot threshold below which a dense solve reports singularity.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Number of harmonics carried at order `h`.
#[inline]
pub fn dim(h: usize) -> usize {
    2 * h + 1
}

/// Fourier coefficients of one variable, orders `-h..=h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHarmonicVector")]
pub struct HarmonicVector {
    order: usize,
    coeffs: Vec<Complex64>,
    base_freq: f64,
}

#[derive(Deserialize)]
struct RawHarmonicVector {
    order: usize,
    coeffs: Vec<Complex64>,
    base_freq: f64,
}

impl TryFrom<RawHarmonicVector> for HarmonicVector {
    type Error = Error;

    fn try_from(raw: RawHarmonicVector) -> Result<Self> {
        if raw.coeffs.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Format("non-finite harmonic coefficient".into()));
        }
        HarmonicVector::new(raw.order, raw.coeffs, raw.base_freq)
    }
}

impl HarmonicVector {
    pub fn new(order: usize, coeffs: Vec<Complex64>, base_freq: f64) -> Result<Self> {
        if coeffs.len() != dim(order) {
            return Err(Error::Dimension(format!(
                "harmonic vector of order {order} needs {} coefficients, got {}",
                dim(order),
                coeffs.len()
            )));
        }
        Ok(Self {
            order,
            coeffs,
            base_freq,
        })
    }

    /// Like [`HarmonicVector::new`], but also checks that the coefficients
    /// describe a real time signal (`c[-k] = conj(c[k])`) to `rel_tol`.
    pub fn new_real(order: usize, coeffs: Vec<Complex64>, base_freq: f64, rel_tol: f64) -> Result<Self> {
        let v = Self::new(order, coeffs, base_freq)?;
        let residual = v.conjugate_symmetry_residual();
        if residual > rel_tol {
            return Err(Error::InvalidOperatingPoint(format!(
                "spectrum is not conjugate-symmetric (relative residual {residual:.3e})"
            )));
        }
        Ok(v)
    }

    pub fn zeros(order: usize, base_freq: f64) -> Self {
        Self {
            order,
            coeffs: vec![ZERO; dim(order)],
            base_freq,
        }
    }

    /// Unit coefficient at harmonic `k`.
    pub fn unit(order: usize, k: i32, base_freq: f64) -> Self {
        let mut v = Self::zeros(order, base_freq);
        v.set(k, ONE);
        v
    }

    /// A constant (DC) signal.
    pub fn constant(order: usize, value: f64, base_freq: f64) -> Self {
        let mut v = Self::zeros(order, base_freq);
        v.set(0, c(value, 0.0));
        v
    }

    /// `amplitude * cos(m ω0 t + phase)`.
    pub fn cosine(order: usize, multiple: i32, amplitude: f64, phase: f64, base_freq: f64) -> Self {
        let mut v = Self::zeros(order, base_freq);
        let half = Complex64::from_polar(amplitude / 2.0, phase);
        if multiple == 0 {
            v.set(0, c(amplitude * phase.cos(), 0.0));
        } else {
            v.add_at(multiple, half);
            v.add_at(-multiple, half.conj());
        }
        v
    }

    /// Discrete Fourier coefficients of one period of uniformly spaced samples.
    pub fn from_period_samples(samples: &[f64], order: usize, base_freq: f64) -> Self {
        let n = samples.len() as f64;
        let coeffs = (-(order as i32)..=order as i32)
            .map(|k| {
                let mut acc = ZERO;
                for (i, &x) in samples.iter().enumerate() {
                    let phi = -2.0 * std::f64::consts::PI * k as f64 * i as f64 / n;
                    acc += Complex64::from_polar(x, phi);
                }
                acc / n
            })
            .collect();
        Self {
            order,
            coeffs,
            base_freq,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn base_freq(&self) -> f64 {
        self.base_freq
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient at harmonic `k`; zero outside the stored range.
    pub fn get(&self, k: i32) -> Complex64 {
        if k.unsigned_abs() as usize > self.order {
            ZERO
        } else {
            self.coeffs[(k + self.order as i32) as usize]
        }
    }

    pub fn set(&mut self, k: i32, value: Complex64) {
        let idx = (k + self.order as i32) as usize;
        self.coeffs[idx] = value;
    }

    fn add_at(&mut self, k: i32, value: Complex64) {
        if k.unsigned_abs() as usize <= self.order {
            let idx = (k + self.order as i32) as usize;
            self.coeffs[idx] += value;
        }
    }

    /// Re-express at a different order, zero-padding or truncating.
    pub fn with_order(&self, order: usize) -> Self {
        let coeffs = (-(order as i32)..=order as i32).map(|k| self.get(k)).collect();
        Self {
            order,
            coeffs,
            base_freq: self.base_freq,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            order: self.order,
            coeffs: self.coeffs.iter().map(|z| z * factor).collect(),
            base_freq: self.base_freq,
        }
    }

    pub fn to_dvector(&self) -> CVec {
        CVec::from_column_slice(&self.coeffs)
    }

    /// Evaluate the real signal at time `t` (phase referenced to `t = 0`).
    pub fn eval(&self, t: f64) -> f64 {
        let h = self.order as i32;
        (-h..=h)
            .map(|k| (self.get(k) * Complex64::from_polar(1.0, k as f64 * self.base_freq * t)).re)
            .sum()
    }

    /// `max_k |c[k] - conj(c[-k])|` relative to the largest coefficient.
    pub fn conjugate_symmetry_residual(&self) -> f64 {
        let scale = self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let h = self.order as i32;
        (0..=h)
            .map(|k| (self.get(k) - self.get(-k).conj()).norm())
            .fold(0.0, f64::max)
            / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HtfKind {
    ToeplitzOfSignal,
    ShiftedDiagonal,
    Dense,
}

/// Square `(2h+1) x (2h+1)` harmonic operator.
#[derive(Debug, Clone, PartialEq)]
pub struct HtfBlock {
    order: usize,
    entries: CMat,
    kind: HtfKind,
}

impl HtfBlock {
    pub fn dense(order: usize, entries: CMat) -> Result<Self> {
        if entries.nrows() != dim(order) || entries.ncols() != dim(order) {
            return Err(Error::Dimension(format!(
                "HTF block of order {order} must be {n}x{n}, got {}x{}",
                entries.nrows(),
                entries.ncols(),
                n = dim(order)
            )));
        }
        Ok(Self {
            order,
            entries,
            kind: HtfKind::Dense,
        })
    }

    pub fn identity(order: usize) -> Self {
        Self {
            order,
            entries: CMat::identity(dim(order), dim(order)),
            kind: HtfKind::ShiftedDiagonal,
        }
    }

    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            entries: CMat::zeros(dim(order), dim(order)),
            kind: HtfKind::Dense,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> HtfKind {
        self.kind
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn into_entries(self) -> CMat {
        self.entries
    }

    /// Entry at harmonic row `r` and column `c` (both in `-h..=h`).
    pub fn at(&self, r: i32, col: i32) -> Complex64 {
        let h = self.order as i32;
        self.entries[((r + h) as usize, (col + h) as usize)]
    }

    pub fn apply(&self, x: &HarmonicVector) -> Result<HarmonicVector> {
        if x.order() != self.order {
            return Err(Error::Dimension(format!(
                "block of order {} applied to vector of order {}",
                self.order,
                x.order()
            )));
        }
        let y = &self.entries * x.to_dvector();
        HarmonicVector::new(self.order, y.iter().copied().collect(), x.base_freq())
    }

    pub fn mul(&self, other: &HtfBlock) -> Result<HtfBlock> {
        if other.order != self.order {
            return Err(Error::Dimension("block orders differ".into()));
        }
        let kind = match (self.kind, other.kind) {
            (HtfKind::ShiftedDiagonal, HtfKind::ShiftedDiagonal) => HtfKind::ShiftedDiagonal,
            _ => HtfKind::Dense,
        };
        Ok(Self {
            order: self.order,
            entries: &self.entries * &other.entries,
            kind,
        })
    }

    pub fn add(&self, other: &HtfBlock) -> Result<HtfBlock> {
        if other.order != self.order {
            return Err(Error::Dimension("block orders differ".into()));
        }
        let kind = if self.kind == other.kind {
            self.kind
        } else {
            HtfKind::Dense
        };
        Ok(Self {
            order: self.order,
            entries: &self.entries + &other.entries,
            kind,
        })
    }
}

/// Toeplitz operator of a steady-state periodic signal: `M[r][c] = sig[r - c]`.
///
/// Multiplying a harmonic vector by this block is the harmonic-domain image of
/// multiplying the small-signal variable by the periodic signal in time.
/// Coefficients up to order `2h` are used; missing ones count as zero.
pub fn toeplitz_from_signal(sig: &HarmonicVector, h: usize) -> Result<HtfBlock> {
    if sig.order() < h {
        return Err(Error::Dimension(format!(
            "signal of order {} cannot populate a Toeplitz block of order {h}",
            sig.order()
        )));
    }
    let n = dim(h);
    let entries = CMat::from_fn(n, n, |r, col| sig.get(r as i32 - col as i32));
    Ok(HtfBlock {
        order: h,
        entries,
        kind: HtfKind::ToeplitzOfSignal,
    })
}

/// Diagonal block of `H(s + jkω0)` for `k = -h..=h`.
pub fn shifted_diagonal<F>(tf: F, s: Complex64, h: usize, w0: f64) -> Result<HtfBlock>
where
    F: Fn(Complex64) -> Complex64,
{
    let n = dim(h);
    let mut entries = CMat::zeros(n, n);
    for i in 0..n {
        let k = i as i32 - h as i32;
        let value = tf(s + J * (k as f64 * w0));
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(Error::Singularity { k, s });
        }
        entries[(i, i)] = value;
    }
    Ok(HtfBlock {
        order: h,
        entries,
        kind: HtfKind::ShiftedDiagonal,
    })
}

/// Grid of equally sized harmonic blocks; absent blocks are zero.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    order: usize,
    row_blocks: usize,
    col_blocks: usize,
    blocks: Vec<Option<CMat>>,
}

impl BlockMatrix {
    pub fn zeros(order: usize, row_blocks: usize, col_blocks: usize) -> Self {
        Self {
            order,
            row_blocks,
            col_blocks,
            blocks: vec![None; row_blocks * col_blocks],
        }
    }

    pub fn set(&mut self, r: usize, col: usize, block: CMat) -> Result<()> {
        let n = dim(self.order);
        if block.nrows() != n || block.ncols() != n {
            return Err(Error::Dimension(format!(
                "block ({r},{col}) is {}x{}, expected {n}x{n}",
                block.nrows(),
                block.ncols()
            )));
        }
        if r >= self.row_blocks || col >= self.col_blocks {
            return Err(Error::Dimension(format!(
                "block index ({r},{col}) outside {}x{} grid",
                self.row_blocks, self.col_blocks
            )));
        }
        self.blocks[r * self.col_blocks + col] = Some(block);
        Ok(())
    }

    /// Split a dense matrix into its harmonic blocks.
    pub fn from_dense(order: usize, m: &CMat) -> Result<Self> {
        let n = dim(order);
        if !m.nrows().is_multiple_of(n) || !m.ncols().is_multiple_of(n) {
            return Err(Error::Dimension(format!(
                "{}x{} matrix is not a grid of {n}x{n} blocks",
                m.nrows(),
                m.ncols()
            )));
        }
        let (rb, cb) = (m.nrows() / n, m.ncols() / n);
        let mut out = Self::zeros(order, rb, cb);
        for r in 0..rb {
            for col in 0..cb {
                let blk = m.view((r * n, col * n), (n, n)).into_owned();
                if blk.iter().any(|z| *z != ZERO) {
                    out.blocks[r * cb + col] = Some(blk);
                }
            }
        }
        Ok(out)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn row_blocks(&self) -> usize {
        self.row_blocks
    }

    pub fn col_blocks(&self) -> usize {
        self.col_blocks
    }

    pub fn block(&self, r: usize, col: usize) -> CMat {
        let n = dim(self.order);
        self.blocks[r * self.col_blocks + col]
            .clone()
            .unwrap_or_else(|| CMat::zeros(n, n))
    }

    pub fn is_zero_block(&self, r: usize, col: usize) -> bool {
        self.blocks[r * self.col_blocks + col].is_none()
    }

    pub fn to_dense(&self) -> CMat {
        let n = dim(self.order);
        let mut m = CMat::zeros(self.row_blocks * n, self.col_blocks * n);
        for r in 0..self.row_blocks {
            for col in 0..self.col_blocks {
                if let Some(b) = &self.blocks[r * self.col_blocks + col] {
                    m.view_mut((r * n, col * n), (n, n)).copy_from(b);
                }
            }
        }
        m
    }
}

/// Dense partial-pivoted solve of `A X = rhs`.
///
/// Reports [`Error::SingularMatrix`] when the smallest pivot falls below
/// `PIVOT_TOLERANCE` times the largest absolute entry of `A`.
pub fn solve(a: &CMat, rhs: &CMat) -> Result<CMat> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "solve needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if rhs.nrows() != a.nrows() {
        return Err(Error::Dimension(format!(
            "right-hand side has {} rows, matrix has {}",
            rhs.nrows(),
            a.nrows()
        )));
    }
    if a.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::SingularMatrix {
            ratio: f64::NAN,
            freq_hz: None,
        });
    }
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::SingularMatrix {
            ratio: 0.0,
            freq_hz: None,
        });
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let ratio = min_pivot / scale;
    if ratio < PIVOT_TOLERANCE {
        return Err(Error::SingularMatrix { ratio, freq_hz: None });
    }
    lu.solve(rhs).ok_or(Error::SingularMatrix { ratio, freq_hz: None })
}

/// Inverse via [`solve`] against the identity.
pub fn inverse(a: &CMat) -> Result<CMat> {
    solve(a, &CMat::identity(a.nrows(), a.ncols()))
}

/// Largest-entry norm.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `‖a - b‖_max / max(‖a‖_max, ‖b‖_max)`; zero when both vanish.
pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    let scale = max_abs(a).max(max_abs(b));
    if scale == 0.0 {
        0.0
    } else {
        max_abs(&(a - b)) / scale
    }
}

/// Block-diagonal matrix from a list of square or rectangular blocks.
pub fn block_diag(blocks: &[&CMat]) -> CMat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut m = CMat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        m.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(*b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    m
}

/// Assemble a dense matrix from a grid of blocks given row-major.
pub fn grid(rows: &[&[&CMat]]) -> CMat {
    let nrows: usize = rows.iter().map(|r| r[0].nrows()).sum();
    let ncols: usize = rows[0].iter().map(|b| b.ncols()).sum();
    let mut m = CMat::zeros(nrows, ncols);
    let mut r0 = 0;
    for row in rows {
        let mut c0 = 0;
        for b in row.iter() {
            debug_assert_eq!(b.nrows(), row[0].nrows());
            m.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(*b);
            c0 += b.ncols();
        }
        debug_assert_eq!(c0, ncols);
        r0 += row[0].nrows();
    }
    m
}

/// `k` copies of `b` on the block diagonal.
pub fn repeat_diag(b: &CMat, k: usize) -> CMat {
    let refs: Vec<&CMat> = std::iter::repeat_n(b, k).collect();
    block_diag(&refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const W0: f64 = 100.0 * PI;

    #[test]
    fn cosine_toeplitz_has_half_on_first_off_diagonals() {
        let sig = HarmonicVector::cosine(2, 1, 1.0, 0.0, W0);
        let t = toeplitz_from_signal(&sig, 1).unwrap();
        assert_eq!(t.kind(), HtfKind::ToeplitzOfSignal);
        for r in -1..=1i32 {
            for col in -1..=1i32 {
                let expect = if (r - col).abs() == 1 { 0.5 } else { 0.0 };
                assert!((t.at(r, col) - c(expect, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn phase_b_cosine_terms() {
        let a = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
        let sig = HarmonicVector::cosine(2, 1, 1.0, -2.0 * PI / 3.0, W0);
        let t = toeplitz_from_signal(&sig, 1).unwrap();
        // T_{+1} sits below the diagonal (r - c = +1)
        assert!((t.at(1, 0) - a.conj() / 2.0).norm() < 1e-15);
        assert!((t.at(0, 1) - a / 2.0).norm() < 1e-15);
    }

    #[test]
    fn toeplitz_rejects_short_signal() {
        let sig = HarmonicVector::zeros(1, W0);
        assert!(matches!(toeplitz_from_signal(&sig, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn harmonic_vector_length_is_checked() {
        assert!(HarmonicVector::new(2, vec![ZERO; 4], W0).is_err());
        assert!(HarmonicVector::new(2, vec![ZERO; 5], W0).is_ok());
    }

    #[test]
    fn real_flag_rejects_asymmetric_spectrum() {
        let mut coeffs = vec![ZERO; 3];
        coeffs[2] = c(1.0, 0.0);
        assert!(HarmonicVector::new_real(1, coeffs, W0, 1e-10).is_err());
    }

    #[test]
    fn arm_inductor_diagonal_at_fundamental() {
        let (l, r) = (16.37e-3, 0.03);
        let blk = shifted_diagonal(|s| l * s + r, J * W0, 3, W0).unwrap();
        let z = blk.at(0, 0);
        assert!((z.re - 0.03).abs() < 1e-12);
        assert!((z.im - 5.1428).abs() < 1e-3, "{z}");
        // other harmonics shift the frequency
        assert!((blk.at(1, 1).im - 2.0 * 5.1428).abs() < 2e-3);
        assert_eq!(blk.at(1, 0), ZERO);
    }

    #[test]
    fn arm_capacitor_diagonal_at_ten_hz() {
        let ceq = 10.48e-3 / 50.0;
        let s = J * (2.0 * PI * 10.0);
        let blk = shifted_diagonal(|s| 1.0 / (ceq * s), s, 2, W0).unwrap();
        let z = blk.at(0, 0);
        assert!(z.re.abs() < 1e-12);
        assert!((z.im + 75.93).abs() < 0.01, "{z}");
    }

    #[test]
    fn swing_transfer_function_magnitude() {
        let (hh, d) = (1.0, 100.0);
        let s = J * (2.0 * PI * 5.0);
        let blk = shifted_diagonal(|s| 1.0 / (s * (hh * s + d)), s, 1, W0).unwrap();
        assert!((blk.at(0, 0).norm() - 3.04e-4).abs() < 0.01e-4);
    }

    #[test]
    fn pole_hit_names_harmonic() {
        let s = J * W0;
        let err = shifted_diagonal(|s| 1.0 / s, s, 2, W0).unwrap_err();
        assert!(matches!(err, Error::Singularity { k: -1, .. }), "{err}");
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let rhs = CMat::from_fn(4, 2, |i, j| c(i as f64, j as f64 - 1.0));
        let x = solve(&CMat::identity(4, 4), &rhs).unwrap();
        assert!(rel_diff(&x, &rhs) < 1e-15);
    }

    #[test]
    fn solve_diagonal_gives_reciprocals() {
        let blk = shifted_diagonal(|s| 16.37e-3 * s + 0.03, J * 30.0, 3, W0).unwrap();
        let a = blk.entries();
        for k in 0..7 {
            let mut e = CMat::zeros(7, 1);
            e[(k, 0)] = ONE;
            let x = solve(a, &e).unwrap();
            assert!((x[(k, 0)] - ONE / a[(k, k)]).norm() < 1e-14 * x[(k, 0)].norm());
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = CMat::identity(3, 3);
        a[(2, 2)] = ZERO;
        let err = solve(&a, &CMat::identity(3, 3)).unwrap_err().at_frequency(12.5);
        assert!(matches!(
            err,
            Error::SingularMatrix {
                freq_hz: Some(f),
                ..
            } if f == 12.5
        ));
    }

    #[test]
    fn block_matrix_round_trip() {
        let mut bm = BlockMatrix::zeros(1, 2, 3);
        bm.set(1, 2, CMat::from_element(3, 3, c(2.0, 1.0))).unwrap();
        let dense = bm.to_dense();
        assert_eq!(dense.shape(), (6, 9));
        let back = BlockMatrix::from_dense(1, &dense).unwrap();
        assert!(back.is_zero_block(0, 0));
        assert_eq!(back.block(1, 2), bm.block(1, 2));
        assert!(bm.set(0, 0, CMat::zeros(2, 2)).is_err());
    }

    #[test]
    fn period_samples_recover_cosine() {
        let n = 64;
        let samples: Vec<f64> = (0..n)
            .map(|i| 3.0 * (2.0 * PI * 2.0 * i as f64 / n as f64 + 0.3).cos() + 1.5)
            .collect();
        let v = HarmonicVector::from_period_samples(&samples, 3, W0);
        assert!((v.get(0) - c(1.5, 0.0)).norm() < 1e-12);
        assert!((v.get(2) - Complex64::from_polar(1.5, 0.3)).norm() < 1e-12);
        assert!(v.get(1).norm() < 1e-12);
        assert!(v.conjugate_symmetry_residual() < 1e-12);
        assert!((v.eval(0.0) - samples[0]).abs() < 1e-12);
    }
}
