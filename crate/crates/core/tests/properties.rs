//! Randomised invariants of the assembled admittance.

mod common;

use std::f64::consts::PI;

use common::reference;
use htf_mmc::admittance::{assemble, assemble_at, closed_form_admittance, sweep, symmetry_residual_at};
use htf_mmc::htf::rel_diff;
use htf_mmc::parallel::Execution;
use htf_mmc::params::{ControlMode, ConverterKind};
use num_complex::Complex64;
use proptest::prelude::*;

const H: usize = 3;

const SPECS: [(ConverterKind, ControlMode); 9] = [
    (ConverterKind::Mmc, ControlMode::OpenLoop),
    (ConverterKind::Mmc, ControlMode::Gfm),
    (ConverterKind::Mmc, ControlMode::GflPq),
    (ConverterKind::Mmc, ControlMode::GflDc),
    (ConverterKind::Mmc, ControlMode::ConstCurrent),
    (ConverterKind::Mmc, ControlMode::ConstVf),
    (ConverterKind::Vsc2L, ControlMode::OpenLoop),
    (ConverterKind::Vsc2L, ControlMode::Gfm),
    (ConverterKind::Vsc2L, ControlMode::GflPq),
];

/// Frequency at least 0.5 Hz away from any harmonic of 50 Hz.
fn off_harmonic() -> impl Strategy<Value = f64> {
    (0u32..20, 0.5f64..49.5).prop_map(|(k, r)| 50.0 * k as f64 + r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sequences_mirror_each_other(idx in 0usize..SPECS.len(), f in off_harmonic(), sigma in -5.0f64..5.0) {
        let (conv, mode) = SPECS[idx];
        let case = reference(conv, mode);
        let s = Complex64::new(sigma, 2.0 * PI * f);
        let r = symmetry_residual_at(&case.model(H), &case.op, s).unwrap();
        prop_assert!(r <= 1e-9, "{conv:?} {mode:?} at {f} Hz: {r:e}");
    }

    #[test]
    fn closed_form_equals_general_assembly(idx in 0usize..SPECS.len(), f in off_harmonic()) {
        let (conv, mode) = SPECS[idx];
        let case = reference(conv, mode);
        let m = case.model(H);
        let s = Complex64::new(0.0, 2.0 * PI * f);
        let general = assemble_at(&m, &case.op, s).unwrap().y_full;
        let closed = closed_form_admittance(&m, &case.op, s).unwrap();
        prop_assert!(rel_diff(&closed, &general) <= 1e-12);
    }

    #[test]
    fn two_level_open_loop_is_an_rl_branch(f in 0.5f64..5000.0) {
        let case = reference(ConverterKind::Vsc2L, ControlMode::OpenLoop);
        let f = if (f / 50.0 - (f / 50.0).round()).abs() < 1e-6 { f + 0.25 } else { f };
        let a = assemble(&case.model(H), &case.op, f).unwrap();
        let l = case.circuit.l_arm / 2.0;
        let r = case.circuit.r_arm / 2.0;
        let want = 1.0 / Complex64::new(r, 2.0 * PI * f * l);
        prop_assert!((a.y11 - want).norm() <= 1e-9 * want.norm());
        prop_assert!(a.y12.norm() <= 1e-12 * want.norm());
    }

    #[test]
    fn sweep_matches_pointwise_assembly(fs in proptest::collection::vec(off_harmonic(), 0..12)) {
        let case = reference(ConverterKind::Mmc, ControlMode::GflPq);
        let m = case.model(H);
        let pts = sweep(&m, &case.op, &fs, Execution::Parallel).unwrap();
        prop_assert_eq!(pts.len(), fs.len());
        for (p, &f) in pts.iter().zip(&fs) {
            prop_assert_eq!(p.freq_hz, f);
            let one = assemble(&m, &case.op, f).unwrap();
            let got = p.result.as_ref().unwrap();
            prop_assert_eq!(got.y11, one.y11);
            prop_assert_eq!(got.y21, one.y21);
        }
    }
}
