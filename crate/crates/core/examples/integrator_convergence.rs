//! Plane-wave exactness, conservation and the temporal order of the
//! split-step integrator.
//!
//!     cargo run --release --example integrator_convergence

use num_complex::Complex64;
use nls_steer::field::{ModeBox, SpectralState};
use nls_steer::integrator::{integrate, plane_wave_solution, IntegratorConfig, SourceTerm};
use nls_steer::lattice::ModeIndex;

fn main() -> nls_steer::Result<()> {
    let space = ModeBox::new(2, 8);
    let s = 1.1;
    let k = ModeIndex::new(&[2, -1]);
    let a = Complex64::new(0.5, 0.0);
    let u0 = SpectralState::plane_wave(space, s, &k, a)?;
    let end = integrate(&u0, &SourceTerm::zero(), &IntegratorConfig::new(1e-3, 1.0))?;
    let exact = plane_wave_solution(space, s, &k, a, 1.0)?;
    println!("plane wave relative error {:.3e}", end.final_state().distance(&exact)? / exact.norm());

    let u0 = SpectralState::random_smooth(space, s, 4, 0.5, 1.5);
    let fine = integrate(&u0, &SourceTerm::zero(), &IntegratorConfig::new(2.5e-4, 1.0))?;
    let reference = fine.final_state();
    let mut last = None;
    for dt in [4e-3, 2e-3, 1e-3] {
        let run = integrate(&u0, &SourceTerm::zero(), &IntegratorConfig::new(dt, 1.0))?;
        let u = run.final_state();
        let err = u.distance(reference)?;
        let slope = last.map(|e: f64| format!("{:.3}", (e / err).log2())).unwrap_or_default();
        println!(
            "dt {dt:<6} error {err:.3e} slope {slope:>6}  mass drift {:.2e}  energy drift {:.2e}",
            (u.mass() - u0.mass()).abs() / u0.mass(),
            (u.energy() - u0.energy()).abs() / u0.energy()
        );
        last = Some(err);
    }
    Ok(())
}
