//! Spectral simulation and resonance-based control synthesis for the
//! defocusing cubic Schrödinger equation `-i u_t + Δu = |u|^2 u + V(t, x)`
//! on the torus `T^d`.
//!
//! * [`lattice`]: mode sets, `2r - s` extensions, saturation, chain planning.
//! * [`field`]: truncated Fourier states, norms, projections, snapshots.
//! * [`signal`]: control signals with exact subinterval integrals.
//! * [`integrator`]: Strang splitting and a Picard/Duhamel reference.
//! * [`synth`]: oscillator bundles realizing controls on new modes.
//! * [`steering`]: end-point steering experiments and coverage reports.
//! * [`relax`]: relaxation seminorm of fast perturbations, Lipschitz probes.
//! * [`runner`]: config-driven runs with hashed manifests.

pub mod error;
pub mod field;
pub mod integrator;
pub mod lattice;
pub mod relax;
pub mod runner;
pub mod signal;
pub mod steering;
pub mod synth;

pub use error::{Error, Result};
