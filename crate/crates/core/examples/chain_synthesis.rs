//! Synthesis along a two-step chain: controls on the unit cube realize
//! targets on (2,-1) and (-1,2), each step with its own carrier frequency.
//!
//!     cargo run --release --example chain_synthesis

use std::f64::consts::PI;

use num_complex::Complex64;
use nls_steer::field::{ModeBox, SpectralState};
use nls_steer::integrator::{integrate, IntegratorConfig, SourceBasis, SourceTerm};
use nls_steer::lattice::{build_cube_generators, plan_extension_chain, ModeIndex, ModeSet};
use nls_steer::signal::Signal;
use nls_steer::synth::{synthesize_chain, SynthesisOptions, TargetFamily};

fn main() -> nls_steer::Result<()> {
    let base = build_cube_generators(&[[1, 0].into(), [0, 1].into()])?.set;
    let (a, b) = (ModeIndex::new(&[2, -1]), ModeIndex::new(&[-1, 2]));
    let chain = plan_extension_chain(&base, &ModeSet::from_modes(2, [a.clone(), b.clone()])?, 4)?;
    let mut family = TargetFamily::new();
    family.insert(a.clone(), Signal::constant(Complex64::new(0.02, 0.0)));
    family.insert(b.clone(), Signal::constant(Complex64::new(0.0, 0.02)));

    let space = ModeBox::new(2, 8);
    let u0 = SpectralState::zeros(space, 1.1);
    let direct = SourceTerm::new(SourceBasis::Rotated, family.clone().into_iter().collect());
    let target = integrate(&u0, &direct, &IntegratorConfig::new(1e-3, 1.0))?;
    for eps in [0.05, 0.025, 0.0125] {
        let res = synthesize_chain(&chain, &family, &SynthesisOptions::new(eps, 1.0))?;
        for (f, bundle) in res.frequencies.iter().zip(&res.bundles) {
            println!(
                "eps {eps}: step {} -> {} at eps_j {:.4} (N = {}, residual {:.2e})",
                f.step, f.new, f.eps, bundle.n_periods, bundle.residual()
            );
        }
        let support = res.program.support(2)?;
        assert!(support.is_subset(&base));
        let src = res.program.to_source();
        let dt = PI * src.carrier_eps.unwrap_or(eps) / 32.0;
        let run = integrate(&u0, &src, &IntegratorConfig::new(dt, 1.0))?;
        println!("  end-point distance to the directly controlled run {:.4e}", run.final_state().distance(target.final_state())?);
    }
    Ok(())
}
