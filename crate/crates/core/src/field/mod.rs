//! Truncated Fourier states on the torus `T^d = (R / 2 pi Z)^d`.
//!
//! A state holds the coefficients `u_k` of `u = sum_k u_k e^{i k.x}` for
//! `|k|_inf <= M`, against the normalized measure, so the `L^2` norm is
//! `(sum |u_k|^2)^{1/2}`. The free flow of `-i u_t + Δu = 0` multiplies
//! `u_k` by `e^{+i|k|^2 t}`; the rotated basis is `f_k = e^{i(k.x + |k|^2 t)}`.

mod io;
mod projection;
mod transform;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{box_mode, ModeIndex, ModeSet};

pub use io::{read_snapshot, read_trajectory, write_snapshot, write_trajectory, SnapshotHeader, TrajectoryIndex};
pub use projection::{FrameProjection, InnerProduct, Projection};
pub use transform::Transform;

/// Free-propagator sign convention used throughout: `u_k(t) = e^{+i|k|^2 t} u_k(0)`.
pub const SIGN_CONVENTION: &str = "exp(+i|k|^2 t)";

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// The box of modes `|k|_inf <= cutoff` in dimension `dim`, indexed
/// row-major with the first coordinate varying slowest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeBox {
    pub dim: usize,
    pub cutoff: usize,
}

impl ModeBox {
    pub fn new(dim: usize, cutoff: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        ModeBox { dim, cutoff }
    }

    pub fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, k: &ModeIndex) -> Option<usize> {
        if k.dim() != self.dim {
            return None;
        }
        self.index_of_coords(k.coords())
    }

    pub fn index_of_coords(&self, k: &[i64]) -> Option<usize> {
        let m = self.cutoff as i64;
        let side = self.side() as i64;
        let mut lin = 0i64;
        for &c in k {
            if c.abs() > m {
                return None;
            }
            lin = lin * side + c + m;
        }
        Some(lin as usize)
    }

    pub fn mode(&self, i: usize) -> ModeIndex {
        box_mode(self.dim, self.cutoff as i64, i)
    }

    pub fn coords_into(&self, mut i: usize, out: &mut [i64]) {
        let side = self.side();
        for j in (0..self.dim).rev() {
            out[j] = (i % side) as i64 - self.cutoff as i64;
            i /= side;
        }
    }

    /// `|k|^2` for every box index.
    pub fn ksq(&self) -> Vec<f64> {
        let mut c = vec![0i64; self.dim];
        (0..self.len())
            .map(|i| {
                self.coords_into(i, &mut c);
                c.iter().map(|x| (x * x) as f64).sum()
            })
            .collect()
    }

    /// `(1 + |k|^2)^s` for every box index.
    pub fn sobolev_weights(&self, s: f64) -> Vec<f64> {
        self.ksq().into_iter().map(|q| (1.0 + q).powf(s)).collect()
    }

    pub fn modes(&self) -> ModeSet {
        ModeSet::box_modes(self.dim, self.cutoff as i64)
    }
}

/// Direction of the basis change between `e^{ik.x}` and `f_k` coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rotation {
    /// Coefficients against `f_k`: multiply by `e^{-i|k|^2 t}`.
    ToFk,
    /// Back to `e^{ik.x}` coefficients: multiply by `e^{+i|k|^2 t}`.
    FromFk,
}

/// A truncated state at model time `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    pub space: ModeBox,
    /// Sobolev index used by default norms; `s > d/2`.
    pub s: f64,
    pub time: f64,
    pub coeffs: Vec<Complex64>,
}

impl SpectralState {
    pub fn zeros(space: ModeBox, s: f64) -> Self {
        SpectralState { space, s, time: 0.0, coeffs: vec![ZERO; space.len()] }
    }

    pub fn from_coeffs(space: ModeBox, s: f64, time: f64, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != space.len() {
            return Err(Error::DimensionMismatch { expected: space.len(), found: coeffs.len() });
        }
        Ok(SpectralState { space, s, time, coeffs })
    }

    /// Sets the listed modes; every mode must lie in the box.
    pub fn from_modes(space: ModeBox, s: f64, modes: &[(ModeIndex, Complex64)]) -> Result<Self> {
        let mut u = Self::zeros(space, s);
        for (k, c) in modes {
            let i = space.index_of(k).ok_or_else(|| Error::NotExpressible(k.clone()))?;
            u.coeffs[i] += c;
        }
        Ok(u)
    }

    /// `a e^{i k.x}`.
    pub fn plane_wave(space: ModeBox, s: f64, k: &ModeIndex, a: Complex64) -> Result<Self> {
        Self::from_modes(space, s, &[(k.clone(), a)])
    }

    /// Smooth random state: complex Gaussian coefficients damped by
    /// `exp(-|k|^2 / (2 width^2))`, rescaled to the given `H^s` norm.
    pub fn random_smooth(space: ModeBox, s: f64, seed: u64, norm: f64, width: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ksq = space.ksq();
        let coeffs: Vec<Complex64> = ksq
            .iter()
            .map(|q| {
                let damp = (-q / (2.0 * width * width)).exp();
                let re: f64 = rng.gen_range(-1.0..1.0);
                let im: f64 = rng.gen_range(-1.0..1.0);
                Complex64::new(re, im) * damp
            })
            .collect();
        let mut u = SpectralState { space, s, time: 0.0, coeffs };
        let n = u.hs_norm(s);
        if n > 0.0 {
            u.scale(Complex64::new(norm / n, 0.0));
        }
        u
    }

    pub fn get(&self, k: &ModeIndex) -> Option<Complex64> {
        self.space.index_of(k).map(|i| self.coeffs[i])
    }

    pub fn set(&mut self, k: &ModeIndex, c: Complex64) -> Result<()> {
        let i = self.space.index_of(k).ok_or_else(|| Error::NotExpressible(k.clone()))?;
        self.coeffs[i] = c;
        Ok(())
    }

    pub fn scale(&mut self, c: Complex64) {
        for x in &mut self.coeffs {
            *x *= c;
        }
    }

    /// `self - other`, keeping `self`'s time.
    pub fn sub(&self, other: &SpectralState) -> Result<SpectralState> {
        self.check_space(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(SpectralState { coeffs, ..self.clone_header() })
    }

    pub fn add(&self, other: &SpectralState) -> Result<SpectralState> {
        self.check_space(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(SpectralState { coeffs, ..self.clone_header() })
    }

    fn clone_header(&self) -> SpectralState {
        SpectralState { space: self.space, s: self.s, time: self.time, coeffs: Vec::new() }
    }

    pub(crate) fn check_space(&self, other: &SpectralState) -> Result<()> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch { expected: self.space.len(), found: other.space.len() });
        }
        Ok(())
    }

    /// `(sum_k (1 + |k|^2)^s |u_k|^2)^{1/2}`.
    pub fn hs_norm(&self, s: f64) -> f64 {
        hs_norm_coeffs(self.space, &self.coeffs, s)
    }

    /// `H^s` norm at the state's own index.
    pub fn norm(&self) -> f64 {
        self.hs_norm(self.s)
    }

    pub fn l2_norm(&self) -> f64 {
        self.mass().sqrt()
    }

    /// `sum |u_k|^2`.
    pub fn mass(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn distance(&self, other: &SpectralState) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }

    pub fn rotate_basis(&self, direction: Rotation) -> SpectralState {
        let sign = match direction {
            Rotation::ToFk => -1.0,
            Rotation::FromFk => 1.0,
        };
        let ksq = self.space.ksq();
        let coeffs = self
            .coeffs
            .iter()
            .zip(&ksq)
            .map(|(c, q)| c * Complex64::from_polar(1.0, sign * q * self.time))
            .collect();
        SpectralState { coeffs, ..self.clone_header() }
    }

    pub fn project(&self, proj: &Projection) -> Result<SpectralState> {
        proj.apply(self)
    }

    /// Exact linear flow over `dt`: `u_k <- e^{i|k|^2 dt} u_k`.
    pub fn free_evolve(&self, dt: f64) -> SpectralState {
        let ksq = self.space.ksq();
        let coeffs = self
            .coeffs
            .iter()
            .zip(&ksq)
            .map(|(c, q)| c * Complex64::from_polar(1.0, q * dt))
            .collect();
        SpectralState { space: self.space, s: self.s, time: self.time + dt, coeffs }
    }

    /// Coefficients of `|u|^2 u` truncated to the box, evaluated on a grid
    /// padded to `2(2M+1)` points per axis so no aliasing enters the box.
    pub fn cubic_product(&self) -> SpectralState {
        let mut tr = Transform::padded(self.space);
        self.cubic_product_with(&mut tr)
    }

    pub fn cubic_product_with(&self, tr: &mut Transform) -> SpectralState {
        let mut out = self.clone();
        cubic_coeffs(tr, &self.coeffs, &mut out.coeffs);
        out
    }

    /// `(1/2) sum |k|^2 |u_k|^2 + (1/4) mean |u|^4`.
    pub fn energy(&self) -> f64 {
        let mut tr = Transform::padded(self.space);
        self.energy_with(&mut tr)
    }

    pub fn energy_with(&self, tr: &mut Transform) -> f64 {
        let ksq = self.space.ksq();
        let kinetic: f64 = 0.5 * self.coeffs.iter().zip(&ksq).map(|(c, q)| q * c.norm_sqr()).sum::<f64>();
        let mut grid = Vec::new();
        tr.to_grid(&self.coeffs, &mut grid);
        let quartic: f64 = grid.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() / grid.len() as f64;
        kinetic + 0.25 * quartic
    }

    /// Grid values on `n` points per axis.
    pub fn to_grid_values(&self, n: usize) -> Vec<Complex64> {
        let mut tr = Transform::new(self.space, n);
        let mut grid = Vec::new();
        tr.to_grid(&self.coeffs, &mut grid);
        grid
    }
}

pub(crate) fn hs_norm_coeffs(space: ModeBox, coeffs: &[Complex64], s: f64) -> f64 {
    let ksq = space.ksq();
    coeffs.iter().zip(&ksq).map(|(c, q)| (1.0 + q).powf(s) * c.norm_sqr()).sum::<f64>().sqrt()
}

/// Writes the box coefficients of `|u|^2 u` into `out`.
pub(crate) fn cubic_coeffs(tr: &mut Transform, coeffs: &[Complex64], out: &mut [Complex64]) {
    let mut grid = Vec::new();
    tr.to_grid(coeffs, &mut grid);
    for v in grid.iter_mut() {
        *v *= v.norm_sqr();
    }
    tr.from_grid(&mut grid, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hs_norm_examples() {
        let sp = ModeBox::new(2, 3);
        let u = SpectralState::plane_wave(sp, 2.0, &[1, 0].into(), c(1.0, 0.0)).unwrap();
        assert!((u.hs_norm(2.0) - 2.0).abs() < 1e-14);
        assert_eq!(SpectralState::zeros(sp, 1.0).hs_norm(1.0), 0.0);
        let u = SpectralState::from_modes(sp, 1.0, &[([1, 1].into(), c(1.0, 0.0)), ([0, 0].into(), c(1.0, 0.0))])
            .unwrap();
        assert!((u.hs_norm(1.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_sign() {
        let sp = ModeBox::new(2, 2);
        let mut u = SpectralState::plane_wave(sp, 1.1, &[1, 0].into(), c(1.0, 0.0)).unwrap();
        u.time = PI;
        let v = u.rotate_basis(Rotation::ToFk);
        let got = v.get(&[1, 0].into()).unwrap();
        assert!((got - c(-1.0, 0.0)).norm() < 1e-15);
        u.time = 0.0;
        assert_eq!(u.rotate_basis(Rotation::ToFk), u);
    }

    #[test]
    fn box_indexing_round_trip() {
        let sp = ModeBox::new(3, 2);
        for i in 0..sp.len() {
            assert_eq!(sp.index_of(&sp.mode(i)), Some(i));
        }
        assert_eq!(sp.index_of(&[3, 0, 0].into()), None);
    }

    #[test]
    fn cubic_of_plane_wave() {
        let sp = ModeBox::new(2, 4);
        let a = c(0.3, -0.4);
        let u = SpectralState::plane_wave(sp, 1.1, &[2, -1].into(), a).unwrap();
        let g = u.cubic_product();
        for (i, v) in g.coeffs.iter().enumerate() {
            let expect = if sp.mode(i) == [2, -1].into() { a * a.norm_sqr() } else { ZERO };
            assert!((v - expect).norm() < 1e-14, "mode {}", sp.mode(i));
        }
    }

    #[test]
    fn cubic_generates_two_r_minus_s() {
        let sp = ModeBox::new(2, 4);
        let u = SpectralState::from_modes(sp, 1.1, &[([1, 0].into(), c(1.0, 0.0)), ([0, 1].into(), c(1.0, 0.0))])
            .unwrap();
        let g = u.cubic_product();
        assert!((g.get(&[2, -1].into()).unwrap() - c(1.0, 0.0)).norm() < 1e-13);
        assert!((g.get(&[-1, 2].into()).unwrap() - c(1.0, 0.0)).norm() < 1e-13);
        // |u|^2 u at (1,0): |a|^2 a + 2|b|^2 a
        assert!((g.get(&[1, 0].into()).unwrap() - c(3.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn parseval() {
        let sp = ModeBox::new(2, 5);
        let u = SpectralState::random_smooth(sp, 1.1, 3, 1.0, 3.0);
        let g = u.to_grid_values(sp.side());
        let grid_mass = g.iter().map(|v| v.norm_sqr()).sum::<f64>() / g.len() as f64;
        assert!((grid_mass - u.mass()).abs() < 1e-12);
    }

    #[test]
    fn energy_of_plane_wave() {
        let sp = ModeBox::new(2, 3);
        let a = 0.5;
        let u = SpectralState::plane_wave(sp, 1.1, &[1, 1].into(), c(a, 0.0)).unwrap();
        let e = 0.5 * 2.0 * a * a + 0.25 * a.powi(4);
        assert!((u.energy() - e).abs() < 1e-14);
    }
}
