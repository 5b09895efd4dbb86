//! Relaxation seminorm of a fast carrier and the end-point deviation it
//! causes along a small nominal trajectory.
//!
//!     cargo run --release --example relaxation_ladder

use num_complex::Complex64;
use nls_steer::field::{ModeBox, SpectralState};
use nls_steer::integrator::SourceTerm;
use nls_steer::relax::{endpoint_deviation_study, DeviationSettings, PerturbationProbe, ProbeKind, ProbeTerm};

fn main() -> nls_steer::Result<()> {
    let space = ModeBox::new(2, 8);
    let u0 = SpectralState::random_smooth(space, 1.1, 5, 0.1, 1.5);
    let shape = PerturbationProbe::new(
        vec![ProbeTerm {
            kind: ProbeKind::Linear,
            mode: [0, 0].into(),
            amplitude: Complex64::new(1.0, 0.0),
            rho0: 0.0,
            rho_rate: 0.0,
            carrier: 2.0,
        }],
        1.0,
    );
    let ladder = [0.1, 0.05, 0.025, 0.0125];
    let report = endpoint_deviation_study(&u0, &SourceTerm::zero(), &shape, &ladder, &DeviationSettings::default())?;
    println!("{:>8} {:>12} {:>12} {:>12} {:>8}", "eps", "seminorm", "deviation", "endpoint", "ratio");
    for j in 0..ladder.len() {
        println!(
            "{:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.3}",
            ladder[j], report.seminorm[j], report.deviation[j], report.endpoint_deviation[j], report.ratio[j]
        );
    }
    println!("reduction per halving {:?}", report.reduction);
    println!("fitted constant {:.4}", report.fitted_constant);
    Ok(())
}
