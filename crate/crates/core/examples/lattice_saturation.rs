//! Closure of mode sets under `2r - s`: saturation of the unit cube in
//! `Z^2`, a parity obstruction in `Z`, and a planned extension chain.
//!
//!     cargo run --release --example lattice_saturation

use nls_steer::lattice::{
    build_cube_generators, closure_sequence, is_saturating_within, plan_extension_chain, ModeIndex, ModeSet,
};

fn main() -> nls_steer::Result<()> {
    let cube = build_cube_generators(&[[1, 0].into(), [0, 1].into()])?;
    println!("cube vertices {:?}, det {}", cube.set.iter().collect::<Vec<_>>(), cube.det);
    let layers = closure_sequence(&cube.set, 5, 20)?;
    println!("closure layer sizes in |k|_inf <= 5: {:?}", layers.iter().map(|s| s.len()).collect::<Vec<_>>());

    let pair = ModeSet::from_coords(&[&[3], &[4]]);
    let v = is_saturating_within(&pair, 20, 80)?;
    println!("{{3, 4}} fills [-20, 20]: {} after {} layers", v.saturating_within_window, v.iterations);

    let even = ModeSet::from_coords(&[&[0], &[2]]);
    let v = is_saturating_within(&even, 20, 80)?;
    println!(
        "{{0, 2}} fills [-20, 20]: {} (reached {} of {}, first gap {:?})",
        v.saturating_within_window, v.reached, v.window_size, v.witness
    );

    let targets = ModeSet::from_modes(2, [ModeIndex::new(&[3, -2]), ModeIndex::new(&[-2, 3])])?;
    let chain = plan_extension_chain(&cube.set, &targets, 5)?;
    println!("chain to {{(3,-2), (-2,3)}}:");
    for (j, step) in chain.steps.iter().enumerate() {
        println!("  {:>2}: 2{} - {} = {}", j + 1, step.r, step.s, step.new);
    }
    Ok(())
}
