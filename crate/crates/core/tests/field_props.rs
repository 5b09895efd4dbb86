use num_complex::Complex64;
use nls_steer::field::{read_snapshot, write_snapshot, ModeBox, Rotation, SpectralState, Transform};
use proptest::prelude::*;

fn state(space: ModeBox) -> impl Strategy<Value = SpectralState> {
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), space.len()).prop_map(move |v| {
        let coeffs = v.into_iter().map(|(a, b)| Complex64::new(a, b) * 0.1).collect();
        SpectralState::from_coeffs(space, 1.1, 0.3, coeffs).unwrap()
    })
}

/// `|u|^2 u` by direct convolution over the box.
fn cubic_direct(u: &SpectralState) -> Vec<Complex64> {
    let sp = u.space;
    let mut out = vec![Complex64::new(0.0, 0.0); sp.len()];
    for a in 0..sp.len() {
        let ka = sp.mode(a);
        for b in 0..sp.len() {
            let kb = sp.mode(b);
            for c in 0..sp.len() {
                let kc = sp.mode(c);
                let k = ka.add(&kb).sub(&kc);
                if let Some(i) = sp.index_of(&k) {
                    out[i] += u.coeffs[a] * u.coeffs[b] * u.coeffs[c].conj();
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn basis_rotation_round_trip(u in state(ModeBox::new(2, 3))) {
        let back = u.rotate_basis(Rotation::ToFk).rotate_basis(Rotation::FromFk);
        prop_assert!(back.distance(&u).unwrap() < 1e-14);
        prop_assert!((u.rotate_basis(Rotation::ToFk).norm() - u.norm()).abs() < 1e-14);
    }

    #[test]
    fn norm_is_homogeneous_and_dominates_l2(u in state(ModeBox::new(2, 3)), c in 0.1f64..3.0) {
        let mut v = u.clone();
        v.scale(Complex64::new(0.0, c));
        prop_assert!((v.norm() - c * u.norm()).abs() < 1e-12 * (1.0 + u.norm()));
        prop_assert!(u.hs_norm(1.1) + 1e-15 >= u.l2_norm());
    }

    #[test]
    fn grid_transform_round_trip(u in state(ModeBox::new(2, 3))) {
        let mut tr = Transform::collocation(u.space);
        let mut grid = Vec::new();
        tr.to_grid(&u.coeffs, &mut grid);
        let mut back = vec![Complex64::new(0.0, 0.0); u.coeffs.len()];
        tr.from_grid(&mut grid, &mut back);
        let err: f64 = back.iter().zip(&u.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn padded_cubic_product_matches_convolution(u in state(ModeBox::new(2, 2))) {
        let fast = u.cubic_product();
        let slow = cubic_direct(&u);
        let err: f64 = fast.coeffs.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-14, "max error {err}");
    }
}

#[test]
fn snapshot_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let u = SpectralState::random_smooth(ModeBox::new(2, 4), 1.2, 3, 0.7, 1.5);
    let stem = dir.path().join("u");
    write_snapshot(&stem, &u).unwrap();
    let v = read_snapshot(&stem).unwrap();
    assert_eq!(u, v);
}
