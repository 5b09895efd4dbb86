//! Ratios of state deviation to input distance over random input pairs in
//! the `W^{1,1}` unit ball.
//!
//!     cargo run --release --example lipschitz_pairs

use nls_steer::field::{ModeBox, SpectralState};
use nls_steer::lattice::ModeSet;
use nls_steer::relax::lipschitz_study;

fn main() -> nls_steer::Result<()> {
    let space = ModeBox::new(2, 8);
    let u0 = SpectralState::random_smooth(space, 1.1, 9, 0.2, 1.5);
    let modes: Vec<_> = ModeSet::box_modes(2, 1).iter().cloned().collect();
    let report = lipschitz_study(&u0, &modes, 1.0, 1.0, 20, 1e-3, 11)?;
    for p in &report.pairs {
        println!("pair {:>2}  |dW|_L1 {:.4e}  deviation {:.4e}  ratio {:.4}", p.seed, p.input_distance, p.deviation, p.ratio);
    }
    println!(
        "max {:.4}  median {:.4}  max/median {:.3}",
        report.max_ratio, report.median_ratio, report.max_over_median
    );
    Ok(())
}
