use std::f64::consts::PI;

use num_complex::Complex64;
use nls_steer::lattice::{build_cube_generators, plan_extension_chain, ModeIndex, ModeSet};
use nls_steer::signal::Signal;
use nls_steer::synth::{build_bundle, cross_step_gap, synthesize_chain, BootBalance, SynthesisOptions, TargetFamily};
use proptest::prelude::*;

fn target() -> impl Strategy<Value = Complex64> {
    (0.01f64..1.0, -PI..PI).prop_map(|(r, a)| Complex64::from_polar(r, a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bundles_close_the_phase_and_vanish_at_the_ends(w in target(), eps in 0.02f64..0.3, balance_bump in any::<bool>()) {
        let balance = if balance_bump { BootBalance::BootBump } else { BootBalance::PlateauRescale };
        let opts = SynthesisOptions::new(eps, 1.0).with_balance(balance);
        let b = build_bundle(&[1, 0].into(), &[0, 1].into(), &Signal::constant(w), eps, &opts).unwrap();
        prop_assert!((b.upsilon_total() - PI * b.n_periods as f64).abs() < 1e-10);
        for t in [0.0, 1.0] {
            prop_assert_eq!(b.carrier_r(t), Complex64::new(0.0, 0.0));
            prop_assert_eq!(b.carrier_s(t), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn resonance_identity_holds_on_the_plateau(w in target(), eps in 0.02f64..0.3) {
        let b = build_bundle(&[2, 1].into(), &[1, 1].into(), &Signal::constant(w), eps, &SynthesisOptions::new(eps, 1.0)).unwrap();
        let lo = b.vr.boot.max(b.vs.boot) * 1.01;
        for j in 0..=20 {
            let t = lo + (1.0 - 2.0 * lo) * j as f64 / 20.0;
            prop_assert!((b.resonant_monomial(t) - w).norm() < 1e-10 * (1.0 + w.norm()));
        }
    }

    #[test]
    fn gap_is_positive_above_the_collision_ratios(ratio in 4.1f64..9.0, steps in 2usize..5) {
        let g = cross_step_gap(ratio, steps);
        prop_assert!(g > 0.0);
        prop_assert!(g <= cross_step_gap(ratio, 2) + 1e-12);
    }
}

#[test]
fn chain_programs_live_on_the_base() {
    let base = build_cube_generators(&[[1, 0].into(), [0, 1].into()]).unwrap().set;
    let targets = ModeSet::from_modes(2, [ModeIndex::new(&[3, -2]), ModeIndex::new(&[-1, 2])]).unwrap();
    let chain = plan_extension_chain(&base, &targets, 4).unwrap();
    let mut family = TargetFamily::new();
    for k in targets.iter() {
        family.insert(k.clone(), Signal::constant(Complex64::new(0.02, -0.01)));
    }
    let res = synthesize_chain(&chain, &family, &SynthesisOptions::new(0.2, 1.0)).unwrap();
    assert!(res.program.support(2).unwrap().is_subset(&base));
    assert_eq!(res.bundles.len(), chain.len());
    let eps: Vec<f64> = res.frequencies.iter().map(|f| f.eps).collect();
    for w in eps.windows(2) {
        assert!((w[1] / w[0] - 5.0).abs() < 1e-12, "{eps:?}");
    }
    assert_eq!(res.program.carrier_eps, Some(eps[0]));
}

#[test]
fn colliding_ratio_is_rejected() {
    let base = build_cube_generators(&[[1, 0].into(), [0, 1].into()]).unwrap().set;
    let targets = ModeSet::from_modes(2, [ModeIndex::new(&[2, -1]), ModeIndex::new(&[-1, 2])]).unwrap();
    let chain = plan_extension_chain(&base, &targets, 4).unwrap();
    let family: TargetFamily = targets.iter().map(|k| (k.clone(), Signal::constant(Complex64::new(0.1, 0.0)))).collect();
    let mut opts = SynthesisOptions::new(0.1, 1.0);
    opts.carrier_ratio = 3.0;
    assert!(synthesize_chain(&chain, &family, &opts).is_err());
    opts.carrier_ratio = 5.0;
    assert!(synthesize_chain(&chain, &family, &opts).is_ok());
}
