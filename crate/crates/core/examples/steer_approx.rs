//! Full-state approximate steering with a budget split into tail,
//! covering and approximation shares.
//!
//!     cargo run --release --example steer_approx

use num_complex::Complex64;
use nls_steer::field::{ModeBox, SpectralState};
use nls_steer::lattice::build_cube_generators;
use nls_steer::steering::{steer_approx, SteeringSettings};

fn main() -> nls_steer::Result<()> {
    let space = ModeBox::new(2, 4);
    let s = 1.1;
    let base = build_cube_generators(&[[1, 0].into(), [0, 1].into()])?.set;
    let initial = SpectralState::zeros(space, s);
    let target = SpectralState::from_modes(
        space,
        s,
        &[([1, 0].into(), Complex64::new(0.02, 0.0)), ([1, -1].into(), Complex64::new(0.0, 0.01))],
    )?;
    let report = steer_approx(&initial, &target, 1, 0.05, &base, 1.0, &[0.1, 0.05], &SteeringSettings::default())?;
    if let Some(b) = &report.budget {
        println!("tail {:.3e} (ok {})  covering {:.3e} (ok {})", b.tail, b.tail_ok, b.covering, b.covering_ok);
        for (eps, (a, ok)) in report.ladder.iter().zip(b.approximation.iter().zip(&b.approximation_ok)) {
            println!("eps {eps:<5} approximation {:.3e} (ok {ok})", a.unwrap_or(f64::NAN));
        }
    }
    println!("error per eps {:?}", report.sup_error);
    Ok(())
}
