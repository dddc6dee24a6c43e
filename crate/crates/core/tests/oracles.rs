//! Harmonic-domain operators checked against sampled time-domain signals.

use std::f64::consts::PI;

use htf_mmc::frames::{frame_phase_offsets, ParkHtf};
use htf_mmc::htf::{dim, shifted_diagonal, toeplitz_from_signal, CVec, HarmonicVector};
use num_complex::Complex64;
use proptest::prelude::*;

const W0: f64 = 100.0 * PI;
const SAMPLES: usize = 256;

fn real_spectrum(order: usize, band: usize, raw: &[(f64, f64)]) -> HarmonicVector {
    let mut v = HarmonicVector::zeros(order, W0);
    v.set(0, Complex64::new(raw[0].0, 0.0));
    for k in 1..=band.min(order) {
        let c = Complex64::new(raw[k].0, raw[k].1);
        v.set(k as i32, c);
        v.set(-(k as i32), c.conj());
    }
    v
}

fn samples(v: &HarmonicVector) -> Vec<f64> {
    let period = 2.0 * PI / W0;
    (0..SAMPLES)
        .map(|i| v.eval(i as f64 * period / SAMPLES as f64))
        .collect()
}

fn coeff_strategy(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
}

fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// `T(a) · b` equals the spectrum of the sampled product `a(t) b(t)`
    /// whenever `b` fits in the truncation window.
    #[test]
    fn toeplitz_product_matches_sampled_product(
        h in 2usize..6,
        ra in coeff_strategy(13),
        rb in coeff_strategy(13),
    ) {
        let a = real_spectrum(2 * h, 2 * h, &ra);
        let b = real_spectrum(h, h, &rb);
        let product = toeplitz_from_signal(&a, h).unwrap().apply(&b).unwrap();
        let sa = samples(&a);
        let sb = samples(&b);
        let prod: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| x * y).collect();
        let oracle = HarmonicVector::from_period_samples(&prod, h, W0);
        prop_assert!(rel_err(product.coeffs(), oracle.coeffs()) < 1e-10);
    }

    /// Stacked Toeplitz products compose like time-domain products.
    #[test]
    fn toeplitz_composition_matches_triple_product(
        ra in coeff_strategy(13),
        rb in coeff_strategy(13),
        rc in coeff_strategy(13),
    ) {
        let h = 6;
        let a = real_spectrum(2 * h, 1, &ra);
        let b = real_spectrum(2 * h, 1, &rb);
        let c = real_spectrum(h, 2, &rc);
        let ta = toeplitz_from_signal(&a, h).unwrap();
        let tb = toeplitz_from_signal(&b, h).unwrap();
        let out = ta.mul(&tb).unwrap().apply(&c).unwrap();
        let prod: Vec<f64> = samples(&a)
            .iter()
            .zip(samples(&b))
            .zip(samples(&c))
            .map(|((x, y), z)| x * y * z)
            .collect();
        let oracle = HarmonicVector::from_period_samples(&prod, h, W0);
        prop_assert!(rel_err(out.coeffs(), oracle.coeffs()) < 1e-10);
    }

    /// Sampled spectra of real signals are conjugate-symmetric.
    #[test]
    fn sampled_spectrum_is_conjugate_symmetric(r in coeff_strategy(6)) {
        let v = real_spectrum(5, 5, &r);
        let back = HarmonicVector::from_period_samples(&samples(&v), 5, W0);
        prop_assert!(back.conjugate_symmetry_residual() < 1e-12);
        prop_assert!(rel_err(back.coeffs(), v.coeffs()) < 1e-12);
    }

    /// A shifted diagonal applied to `e^{(s + jkω0)t}` scales each harmonic
    /// by the transfer function at that frequency.
    #[test]
    fn shifted_diagonal_evaluates_each_harmonic(
        sigma in -5.0f64..5.0,
        f in 1.0f64..400.0,
        l in 1e-3f64..1e-1,
        r in 0.0f64..2.0,
    ) {
        let h = 3;
        let s = Complex64::new(sigma, 2.0 * PI * f);
        let d = shifted_diagonal(|x| x * l + r, s, h, W0).unwrap();
        for k in -(h as i32)..=h as i32 {
            let expect = (s + Complex64::new(0.0, k as f64 * W0)) * l + r;
            prop_assert!((d.at(k, k) - expect).norm() <= 1e-12 * expect.norm());
        }
    }
}

fn stack(vs: &[HarmonicVector]) -> CVec {
    let n: usize = vs.iter().map(|v| v.coeffs().len()).sum();
    CVec::from_iterator(n, vs.iter().flat_map(|v| v.coeffs().iter().copied()))
}

fn time_park(x: &[Vec<f64>; 3], multiple: u32, theta0: f64) -> [Vec<f64>; 2] {
    let off = frame_phase_offsets(multiple);
    let period = 2.0 * PI / W0;
    let m = multiple as f64;
    let mut d = vec![0.0; SAMPLES];
    let mut q = vec![0.0; SAMPLES];
    for i in 0..SAMPLES {
        let th = m * (W0 * i as f64 * period / SAMPLES as f64 + theta0);
        for k in 0..3 {
            d[i] += 2.0 / 3.0 * x[k][i] * (th + off[k]).cos();
            q[i] -= 2.0 / 3.0 * x[k][i] * (th + off[k]).sin();
        }
    }
    [d, q]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Harmonic Park transform equals the time-domain transform of sampled
    /// three-phase signals, for both frame multiples.
    #[test]
    fn park_matches_time_domain(
        multiple in 1u32..3,
        theta0 in -PI..PI,
        ra in coeff_strategy(8),
        rb in coeff_strategy(8),
        rc in coeff_strategy(8),
    ) {
        let h = 6;
        let band = h - multiple as usize;
        let abc = [
            real_spectrum(h, band, &ra),
            real_spectrum(h, band, &rb),
            real_spectrum(h, band, &rc),
        ];
        let park = ParkHtf::build(h, multiple, theta0, W0).unwrap();
        let dq = park.forward() * stack(&abc);
        let sampled = [samples(&abc[0]), samples(&abc[1]), samples(&abc[2])];
        let [d, q] = time_park(&sampled, multiple, theta0);
        let oracle = stack(&[
            HarmonicVector::from_period_samples(&d, h, W0),
            HarmonicVector::from_period_samples(&q, h, W0),
        ]);
        prop_assert!(rel_err(dq.as_slice(), oracle.as_slice()) < 1e-12);
    }

    /// Inverse after forward returns the signal minus its zero sequence.
    #[test]
    fn park_round_trip(
        multiple in 1u32..3,
        theta0 in -PI..PI,
        ra in coeff_strategy(8),
        rb in coeff_strategy(8),
    ) {
        let h = 7;
        let band = h - 2 * multiple as usize;
        let a = real_spectrum(h, band, &ra);
        let b = real_spectrum(h, band, &rb);
        // Phase c closes the set so there is no zero sequence.
        let c = HarmonicVector::new(
            h,
            a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| -(x + y)).collect(),
            W0,
        )
        .unwrap();
        let x = stack(&[a, b, c]);
        let park = ParkHtf::build(h, multiple, theta0, W0).unwrap();
        let back = park.inverse() * (park.forward() * &x);
        prop_assert!(rel_err(back.as_slice(), x.as_slice()) < 1e-12);
        prop_assert_eq!(back.len(), 3 * dim(h));
    }
}
