//! Steering the (2,-1) component from controls on the unit cube, for a
//! few targets of small norm.
//!
//!     cargo run --release --example steer_component

use nls_steer::field::{ModeBox, SpectralState};
use nls_steer::lattice::{build_cube_generators, ModeIndex, ModeSet};
use nls_steer::steering::{steer_component, target_grid, SteeringSettings, SteeringTask};

fn main() -> nls_steer::Result<()> {
    let space = ModeBox::new(2, 6);
    let s = 1.1;
    let base = build_cube_generators(&[[1, 0].into(), [0, 1].into()])?.set;
    let observed = ModeSet::from_modes(2, [ModeIndex::new(&[2, -1])])?;
    let targets = target_grid(space, s, &observed, 0.02, 3, 0, 5)?;
    let task = SteeringTask { initial: SpectralState::random_smooth(space, s, 8, 0.02, 1.5), targets, observed, horizon: 1.0, tolerance: 1e-2 };
    let ladder = [0.1, 0.05, 0.025];
    let report = steer_component(&task, &base, &ladder, &SteeringSettings::default())?;
    for e in &report.entries {
        println!("target {} eps {:<6} error {:.4e}", e.target, e.parameter, e.error.unwrap_or(f64::NAN));
    }
    println!("sup error per eps {:?}", report.sup_error);
    Ok(())
}
