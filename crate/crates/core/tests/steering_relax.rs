use num_complex::Complex64;
use nls_steer::field::{InnerProduct, ModeBox, SpectralState};
use nls_steer::integrator::SourceTerm;
use nls_steer::lattice::{build_cube_generators, ModeIndex, ModeSet};
use nls_steer::relax::{
    endpoint_deviation_study, endpoint_lipschitz_probe, relaxation_seminorm, DeviationSettings, PerturbationProbe,
    ProbeKind, ProbeTerm, SineInput,
};
use nls_steer::steering::{orthonormal_frame, steer_full_dim, target_grid, FrameLift, SteeringSettings, SteeringTask};
use nls_steer::Error;

fn carrier(eps: f64) -> PerturbationProbe {
    PerturbationProbe::new(
        vec![ProbeTerm {
            kind: ProbeKind::Constant,
            mode: [0, 0].into(),
            amplitude: Complex64::new(1.0, 0.0),
            rho0: 0.0,
            rho_rate: 0.0,
            carrier: 1.0,
        }],
        eps,
    )
}

#[test]
fn pure_carrier_seminorm_is_two_eps() {
    let space = ModeBox::new(2, 2);
    let mut end = SpectralState::zeros(space, 1.1);
    end.time = 1.0;
    let nominal = vec![SpectralState::zeros(space, 1.1), end];
    for eps in [0.1, 0.01] {
        let v = relaxation_seminorm(&carrier(eps), &nominal, 4096).unwrap();
        assert!((v / (2.0 * eps) - 1.0).abs() < 0.05, "eps {eps}: {v}");
    }
}

#[test]
fn zero_probe_leaves_the_trajectory_alone() {
    let u0 = SpectralState::random_smooth(ModeBox::new(2, 3), 1.1, 1, 0.1, 1.5);
    let settings = DeviationSettings { horizon: 0.2, ..DeviationSettings::default() };
    let r = endpoint_deviation_study(&u0, &SourceTerm::zero(), &PerturbationProbe::zero(), &[0.1], &settings).unwrap();
    assert_eq!(r.deviation, vec![0.0]);
    assert_eq!(r.seminorm, vec![0.0]);
}

#[test]
fn lipschitz_probe_checks_the_ball_and_scales() {
    let space = ModeBox::new(2, 4);
    let u0 = SpectralState::random_smooth(space, 1.1, 2, 0.1, 1.5);
    let modes = vec![ModeIndex::new(&[1, 0])];
    let w1 = SineInput::random(&modes, 2, 0.5, 0.3, 1.1, 1);
    let bump = SineInput::random(&modes, 2, 0.5, 0.05, 1.1, 2);
    let p1 = endpoint_lipschitz_probe(&w1, &w1.plus(&bump), 1.0, &u0, 1e-3).unwrap();
    let p2 = endpoint_lipschitz_probe(&w1, &w1.plus(&bump.scaled(0.5)), 1.0, &u0, 1e-3).unwrap();
    assert!(p1.ratio.is_finite() && p1.ratio > 0.0);
    assert!((p1.ratio / p2.ratio - 1.0).abs() < 0.2, "{} vs {}", p1.ratio, p2.ratio);
    let same = endpoint_lipschitz_probe(&w1, &w1, 1.0, &u0, 1e-3).unwrap();
    assert_eq!(same.deviation, 0.0);
    let big = w1.scaled(10.0);
    assert!(matches!(endpoint_lipschitz_probe(&big, &w1, 1.0, &u0, 1e-3), Err(Error::OutsideBall { .. })));
}

#[test]
fn kicks_converge_on_observed_modes() {
    let space = ModeBox::new(2, 4);
    let observed = ModeSet::box_modes(2, 1);
    let targets = target_grid(space, 1.1, &observed, 0.05, 3, 1, 3).unwrap();
    assert!((targets[0].norm() - 0.05).abs() < 1e-14);
    assert!((targets[3].norm() - 0.025).abs() < 1e-14);
    let task = SteeringTask {
        initial: SpectralState::random_smooth(space, 1.1, 4, 0.05, 1.5),
        targets,
        observed,
        horizon: 0.5,
        tolerance: 1e-2,
    };
    let r = steer_full_dim(&task, &[0.1, 0.05, 0.025], &SteeringSettings::default()).unwrap();
    assert!(r.all_monotone);
    assert!(r.passed_at_finest);
}

#[test]
fn targets_outside_the_observed_modes_are_rejected() {
    let space = ModeBox::new(2, 3);
    let q = SpectralState::plane_wave(space, 1.1, &[2, 0].into(), Complex64::new(0.1, 0.0)).unwrap();
    let task = SteeringTask {
        initial: SpectralState::zeros(space, 1.1),
        targets: vec![q],
        observed: ModeSet::box_modes(2, 1),
        horizon: 1.0,
        tolerance: 1e-2,
    };
    assert!(steer_full_dim(&task, &[0.1], &SteeringSettings::default()).is_err());
}

#[test]
fn frame_lift_reproduces_coordinates() {
    let space = ModeBox::new(2, 3);
    let base = build_cube_generators(&[[1, 0].into(), [0, 1].into()]).unwrap().set;
    let mut v = vec![Complex64::new(0.0, 0.0); space.len()];
    for k in base.iter() {
        v[space.index_of(k).unwrap()] = Complex64::new(1.0, k.coords()[0] as f64);
    }
    let frame = orthonormal_frame(space, vec![v], InnerProduct::default()).unwrap();
    let lift = FrameLift::new(frame, 1e-3, 1e6).unwrap();
    let y = [Complex64::new(0.03, -0.02)];
    let lifted = lift.lift(&y, 1.1).unwrap();
    let back = lift.frame.coordinates(&lifted.coeffs);
    assert!((back[0] - y[0]).norm() < 1e-14);
    assert!(lift.modes.is_subset(&base));
}
