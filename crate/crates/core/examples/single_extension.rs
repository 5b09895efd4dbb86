//! Realize a constant control on the new mode (2,-1) through fast
//! carriers on (1,0) and (0,1) and compare end points along an ε ladder.
//!
//!     cargo run --release --example single_extension

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use nls_steer::field::{ModeBox, SpectralState};
use nls_steer::integrator::{integrate, IntegratorConfig, SourceBasis, SourceTerm};
use nls_steer::lattice::{build_cube_generators, ModeIndex};
use nls_steer::signal::Signal;
use nls_steer::synth::{assemble_program, build_bundle, SynthesisOptions};

fn main() -> nls_steer::Result<()> {
    let space = ModeBox::new(2, 8);
    let s = 1.1;
    let horizon = 1.0;
    let base = build_cube_generators(&[[1, 0].into(), [0, 1].into()])?.set;
    let (r, sm): (ModeIndex, ModeIndex) = ([1, 0].into(), [0, 1].into());
    let new = r.extend_with(&sm);
    let w = Signal::constant(Complex64::new(0.05, 0.0));

    let u0 = SpectralState::zeros(space, s);
    let reference_src = SourceTerm::new(SourceBasis::Rotated, vec![(new.clone(), w.clone())]);
    let reference = integrate(&u0, &reference_src, &IntegratorConfig::new(1e-3, horizon))?;
    let target = reference.final_state();
    println!("reference |u_(2,-1)(T)| = {:.6}", target.get(&new).unwrap().norm());

    let mut family = BTreeMap::new();
    family.insert(new.clone(), w);
    let eps_ladder: Vec<f64> = std::env::args()
        .nth(1)
        .map(|a| a.split(',').map(|x| x.parse().expect("eps list")).collect())
        .unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]);
    println!("{:>8} {:>6} {:>12} {:>12} {:>12}", "eps", "N", "error", "residual", "ratio");
    let mut last: Option<f64> = None;
    for eps in eps_ladder {
        let opts = SynthesisOptions::new(eps, horizon);
        let bundle = Arc::new(build_bundle(&r, &sm, &family[&new], eps, &opts)?);
        let result = assemble_program(bundle.clone(), &family, &base)?;
        let dt = PI * eps / 32.0;
        let traj = integrate(&u0, &result.program.to_source(), &IntegratorConfig::new(dt, horizon))?;
        let err = traj.final_state().distance(target)?;
        println!(
            "{eps:>8} {:>6} {err:>12.4e} {:>12.4e} {:>12}",
            bundle.n_periods,
            result.residuals[0],
            last.map(|l| format!("{:.3}", l / err)).unwrap_or_default()
        );
        last = Some(err);
    }
    Ok(())
}
