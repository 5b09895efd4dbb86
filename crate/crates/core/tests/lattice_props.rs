use nls_steer::lattice::{
    build_cube_generators, closure_sequence, elementary_extension, is_saturating_within, plan_extension_chain,
    ModeIndex, ModeSet,
};
use nls_steer::Error;
use proptest::prelude::*;

fn mode2() -> impl Strategy<Value = ModeIndex> {
    (-3i64..=3, -3i64..=3).prop_map(|(a, b)| ModeIndex::new(&[a, b]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extension_adds_exactly_two_r_minus_s(r in mode2(), s in mode2()) {
        let set = ModeSet::from_modes(2, [r.clone(), s.clone()]).unwrap();
        let ext = elementary_extension(&set, &r, &s).unwrap();
        let new = r.extend_with(&s);
        prop_assert!(ext.contains(&new));
        prop_assert!(set.is_subset(&ext));
        prop_assert!(ext.len() <= set.len() + 1);
        prop_assert_eq!(new.coords()[0], 2 * r.coords()[0] - s.coords()[0]);
    }

    // 2r - s = s mod 2, so the closure never leaves the parity classes of the base.
    #[test]
    fn closure_preserves_parity_classes(modes in proptest::collection::vec(mode2(), 1..4)) {
        let base = ModeSet::from_modes(2, modes).unwrap();
        let classes: Vec<(i64, i64)> =
            base.iter().map(|k| (k.coords()[0].rem_euclid(2), k.coords()[1].rem_euclid(2))).collect();
        let layers = closure_sequence(&base, 4, 16).unwrap();
        for k in layers.last().unwrap().iter() {
            let c = (k.coords()[0].rem_euclid(2), k.coords()[1].rem_euclid(2));
            prop_assert!(classes.contains(&c), "{k} left the parity classes");
        }
    }

    #[test]
    fn closure_layers_are_nested(modes in proptest::collection::vec(mode2(), 1..4)) {
        let base = ModeSet::from_modes(2, modes).unwrap();
        let layers = closure_sequence(&base, 4, 16).unwrap();
        for w in layers.windows(2) {
            prop_assert!(w[0].is_subset(&w[1]));
        }
    }

    #[test]
    fn planned_chains_replay_and_reach_targets(a in -4i64..=4, b in -4i64..=4) {
        let base = build_cube_generators(&[[1, 0].into(), [0, 1].into()]).unwrap().set;
        let target = ModeIndex::new(&[a, b]);
        let targets = ModeSet::from_modes(2, [target.clone()]).unwrap();
        let chain = plan_extension_chain(&base, &targets, 4).unwrap();
        let end = chain.final_set().unwrap();
        prop_assert!(end.contains(&target));
        prop_assert_eq!(end.len(), base.len() + chain.len());
    }
}

#[test]
fn unimodular_generators_saturate_three_dimensions() {
    let g = build_cube_generators(&[[1, 0, 0].into(), [1, 1, 0].into(), [0, 1, 1].into()]).unwrap();
    assert_eq!(g.det.abs(), 1);
    assert!(is_saturating_within(&g.set, 3, 12).unwrap().saturating_within_window);
}

#[test]
fn degenerate_generators_flagged() {
    let g = build_cube_generators(&[[2, 0].into(), [0, 1].into()]).unwrap();
    assert!(g.det_warning);
    let v = is_saturating_within(&g.set, 4, 16).unwrap();
    assert!(!v.saturating_within_window);
    assert_eq!(v.witness, Some(ModeIndex::new(&[1, 0])));
}

#[test]
fn parity_obstruction_has_no_chain() {
    let base = ModeSet::from_coords(&[&[0], &[2]]);
    let targets = ModeSet::from_coords(&[&[1]]);
    match plan_extension_chain(&base, &targets, 10) {
        Err(Error::NoChainFound { unreached }) => assert_eq!(unreached, vec![ModeIndex::new(&[1])]),
        other => panic!("expected NoChainFound, got {other:?}"),
    }
}
