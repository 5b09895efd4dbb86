use num_complex::Complex64;
use nls_steer::field::{ModeBox, SpectralState};
use nls_steer::integrator::{
    integrate, integrate_picard, plane_wave_solution, IntegratorConfig, NonlinearGrid, SourceBasis, SourceTerm,
};
use nls_steer::lattice::ModeIndex;
use nls_steer::signal::Signal;
use proptest::prelude::*;

#[test]
fn plane_waves_are_exact_on_both_grids() {
    let space = ModeBox::new(2, 6);
    let k = ModeIndex::new(&[1, -2]);
    let a = Complex64::new(0.3, 0.4);
    let u0 = SpectralState::plane_wave(space, 1.1, &k, a).unwrap();
    let exact = plane_wave_solution(space, 1.1, &k, a, 0.5).unwrap();
    for grid in [NonlinearGrid::Collocation, NonlinearGrid::Padded] {
        let mut cfg = IntegratorConfig::new(1e-2, 0.5);
        cfg.grid = grid;
        let u = integrate(&u0, &SourceTerm::zero(), &cfg).unwrap();
        assert!(u.final_state().distance(&exact).unwrap() < 1e-12 * exact.norm());
    }
}

#[test]
fn splitting_agrees_with_picard_reference() {
    let space = ModeBox::new(1, 8);
    let u0 = SpectralState::random_smooth(space, 1.0, 2, 0.8, 1.5);
    let src = SourceTerm::new(SourceBasis::Rotated, vec![([1].into(), Signal::exponential(Complex64::new(0.2, 0.0), 0.0, 3.0))]);
    // The reference evaluates the cubic term alias-free, so compare against
    // the padded splitting.
    let mut cfg = IntegratorConfig::new(2.5e-4, 0.5);
    cfg.grid = NonlinearGrid::Padded;
    let strang = integrate(&u0, &src, &cfg).unwrap();
    let picard = integrate_picard(&u0, &src, &IntegratorConfig::new(1e-2, 0.5)).unwrap();
    let d = strang.final_state().distance(picard.final_state()).unwrap();
    assert!(d < 1e-6, "distance {d}");
}

#[test]
fn linear_source_has_closed_form() {
    // With u0 = 0 and a tiny source the cubic term is negligible and the
    // f_k coefficient grows like the integrated source.
    let space = ModeBox::new(2, 3);
    let k = ModeIndex::new(&[1, 1]);
    let w = Complex64::new(0.0, 1e-6);
    let src = SourceTerm::new(SourceBasis::Rotated, vec![(k.clone(), Signal::constant(w))]);
    let u = integrate(&SpectralState::zeros(space, 1.1), &src, &IntegratorConfig::new(1e-2, 1.0)).unwrap();
    let end = u.final_state();
    let expect = Complex64::new(0.0, 1.0) * w * Complex64::from_polar(1.0, 2.0);
    assert!((end.get(&k).unwrap() - expect).norm() < 1e-12 * w.norm());
}

#[test]
fn unresolved_carriers_are_rejected() {
    let src = SourceTerm::zero().with_carrier_eps(0.01);
    let u0 = SpectralState::zeros(ModeBox::new(1, 4), 1.0);
    assert!(integrate(&u0, &src, &IntegratorConfig::new(1e-2, 1.0)).is_err());
    assert!(integrate(&u0, &src, &IntegratorConfig::new(std::f64::consts::PI * 0.01 / 32.0, 0.1)).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn free_flow_conserves_mass(seed in 0u64..1000, norm in 0.1f64..1.5) {
        let u0 = SpectralState::random_smooth(ModeBox::new(2, 5), 1.1, seed, norm, 1.5);
        let u = integrate(&u0, &SourceTerm::zero(), &IntegratorConfig::new(1e-2, 0.5)).unwrap();
        let drift = (u.final_state().mass() - u0.mass()).abs() / u0.mass();
        prop_assert!(drift < 1e-12, "mass drift {drift}");
    }

    #[test]
    fn gauge_symmetry(seed in 0u64..1000, theta in 0.0f64..6.28) {
        let u0 = SpectralState::random_smooth(ModeBox::new(1, 6), 1.0, seed, 0.8, 1.5);
        let mut v0 = u0.clone();
        let g = Complex64::from_polar(1.0, theta);
        v0.scale(g);
        let cfg = IntegratorConfig::new(1e-2, 0.3);
        let mut u = integrate(&u0, &SourceTerm::zero(), &cfg).unwrap().final_state().clone();
        let v = integrate(&v0, &SourceTerm::zero(), &cfg).unwrap();
        u.scale(g);
        prop_assert!(u.distance(v.final_state()).unwrap() < 1e-12);
    }
}
