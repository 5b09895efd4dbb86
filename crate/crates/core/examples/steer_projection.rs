//! Steering a projection onto a non-coordinate frame: two vectors mixing
//! base modes, lifted to their coordinate superspace.
//!
//!     cargo run --release --example steer_projection

use num_complex::Complex64;
use nls_steer::field::{InnerProduct, ModeBox, SpectralState};
use nls_steer::lattice::build_cube_generators;
use nls_steer::steering::{orthonormal_frame, steer_projection, SteeringSettings};

fn main() -> nls_steer::Result<()> {
    let space = ModeBox::new(2, 6);
    let s = 1.1;
    let base = build_cube_generators(&[[1, 0].into(), [0, 1].into()])?.set;
    let one = Complex64::new(1.0, 0.0);
    let mut v1 = vec![Complex64::new(0.0, 0.0); space.len()];
    let mut v2 = v1.clone();
    v1[space.index_of_coords(&[1, 0]).unwrap()] = one;
    v1[space.index_of_coords(&[0, 1]).unwrap()] = one;
    v2[space.index_of_coords(&[1, 1]).unwrap()] = one;
    v2[space.index_of_coords(&[0, 0]).unwrap()] = -one;
    let frame = orthonormal_frame(space, vec![v1, v2], InnerProduct::default())?;
    let targets = vec![
        vec![Complex64::new(0.03, 0.0), Complex64::new(0.0, 0.02)],
        vec![Complex64::new(-0.01, 0.01), Complex64::new(0.04, 0.0)],
    ];
    let initial = SpectralState::random_smooth(space, s, 2, 0.02, 1.5);
    let (report, lift) = steer_projection(
        &initial,
        frame,
        &targets,
        &base,
        1.0,
        &[0.1, 0.05, 0.025],
        1e-2,
        1e-3,
        &SteeringSettings::default(),
    )?;
    println!("superspace {:?}, lift condition {:.3}", lift.modes.iter().collect::<Vec<_>>(), lift.condition);
    println!("sup error per kick {:?}, monotone {}", report.sup_error, report.all_monotone);
    Ok(())
}
