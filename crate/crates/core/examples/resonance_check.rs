//! The resonant product of a synthesized bundle against its target, and
//! the residual `∫|D|` along an ε ladder.
//!
//!     cargo run --release --example resonance_check

use num_complex::Complex64;
use nls_steer::signal::Signal;
use nls_steer::synth::{build_bundle, classify_cubic_monomials, SynthesisOptions};

fn main() -> nls_steer::Result<()> {
    for class in classify_cubic_monomials().iter().filter(|c| c.is_resonant()) {
        println!("resonant: {class:?}");
    }
    let w = Signal::constant(Complex64::new(0.5, 0.0));
    let (r, s) = ([1, 0].into(), [0, 1].into());
    let mut prev: Option<(f64, f64)> = None;
    for eps in [0.2, 0.1, 0.05] {
        let b = build_bundle(&r, &s, &w, eps, &SynthesisOptions::new(eps, 1.0))?;
        let lo = b.vr.boot.max(b.vs.boot);
        let mut worst: f64 = 0.0;
        for j in 0..=200 {
            let t = lo + (1.0 - 2.0 * lo) * j as f64 / 200.0;
            worst = worst.max((b.resonant_product(t) - Complex64::new(0.5, 0.0)).norm());
        }
        let slope = prev.map(|(e0, r0)| format!("{:.3}", (r0 / b.residual()).ln() / (e0 / eps).ln())).unwrap_or_default();
        println!(
            "eps {eps:<5} N {}  Υ(T) - πN {:.1e}  plateau mismatch {worst:.1e}  ∫|D| {:.4e} slope {slope}",
            b.n_periods,
            b.upsilon_total() - std::f64::consts::PI * b.n_periods as f64,
            b.residual()
        );
        prev = Some((eps, b.residual()));
    }
    Ok(())
}
