use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ModeBox, SpectralState, ZERO};
use crate::error::{Error, Result};
use crate::lattice::ModeSet;

/// Inner product used for orthogonal projections onto general subspaces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "s")]
pub enum InnerProduct {
    #[default]
    L2,
    /// Weighted by `(1 + |k|^2)^s`.
    Sobolev(f64),
}

impl InnerProduct {
    pub fn weights(&self, space: ModeBox) -> Vec<f64> {
        match self {
            InnerProduct::L2 => vec![1.0; space.len()],
            InnerProduct::Sobolev(s) => space.sobolev_weights(*s),
        }
    }
}

/// Orthogonal projection onto the span of a frame of box vectors.
#[derive(Clone, Debug)]
pub struct FrameProjection {
    pub space: ModeBox,
    pub inner: InnerProduct,
    pub vectors: Vec<Vec<Complex64>>,
    weights: Vec<f64>,
    gram_inv: DMatrix<Complex64>,
}

impl FrameProjection {
    pub fn new(space: ModeBox, vectors: Vec<Vec<Complex64>>, inner: InnerProduct) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidArgument("frame must contain at least one vector".into()));
        }
        for v in &vectors {
            if v.len() != space.len() {
                return Err(Error::DimensionMismatch { expected: space.len(), found: v.len() });
            }
        }
        let weights = inner.weights(space);
        let gram = gram_matrix(&vectors, &vectors, &weights);
        let eig = gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if max <= 0.0 || min <= 1e-12 * max {
            return Err(Error::FrameNotIndependent);
        }
        let gram_inv = gram.try_inverse().ok_or(Error::FrameNotIndependent)?;
        Ok(FrameProjection { space, inner, vectors, weights, gram_inv })
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    /// `<e_i, u>` for every frame vector.
    pub fn coordinates(&self, coeffs: &[Complex64]) -> DVector<Complex64> {
        DVector::from_iterator(
            self.vectors.len(),
            self.vectors.iter().map(|e| inner(e, coeffs, &self.weights)),
        )
    }

    pub fn apply_coeffs(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let alpha = &self.gram_inv * self.coordinates(coeffs);
        let mut out = vec![ZERO; coeffs.len()];
        for (e, a) in self.vectors.iter().zip(alpha.iter()) {
            for (o, x) in out.iter_mut().zip(e) {
                *o += a * x;
            }
        }
        out
    }
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64], w: &[f64]) -> Complex64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x.conj() * y * *w).sum()
}

pub(crate) fn gram_matrix(a: &[Vec<Complex64>], b: &[Vec<Complex64>], w: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| inner(&a[i], &b[j], w))
}

/// Projection onto a coordinate subspace `F_K` or onto the span of a frame.
#[derive(Clone, Debug)]
pub enum Projection {
    Coordinate(ModeSet),
    Frame(FrameProjection),
}

impl Projection {
    pub fn coordinate(modes: ModeSet) -> Self {
        Projection::Coordinate(modes)
    }

    pub fn apply(&self, u: &SpectralState) -> Result<SpectralState> {
        let coeffs = match self {
            Projection::Coordinate(modes) => {
                let mut out = vec![ZERO; u.coeffs.len()];
                for k in modes.iter() {
                    let i = u.space.index_of(k).ok_or_else(|| Error::NotExpressible(k.clone()))?;
                    out[i] = u.coeffs[i];
                }
                out
            }
            Projection::Frame(f) => {
                if f.space != u.space {
                    return Err(Error::DimensionMismatch { expected: f.space.len(), found: u.space.len() });
                }
                f.apply_coeffs(&u.coeffs)
            }
        };
        Ok(SpectralState { space: u.space, s: u.s, time: u.time, coeffs })
    }

    /// `(I - P) u`.
    pub fn complement(&self, u: &SpectralState) -> Result<SpectralState> {
        u.sub(&self.apply(u)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_projection() {
        let sp = ModeBox::new(2, 2);
        let u = SpectralState::from_modes(
            sp,
            1.1,
            &[([0, 0].into(), Complex64::new(1.0, 0.0)), ([1, 0].into(), Complex64::new(1.0, 0.0))],
        )
        .unwrap();
        let p = Projection::coordinate(ModeSet::from_coords(&[&[0, 0]]));
        let v = p.apply(&u).unwrap();
        assert_eq!(v.get(&[0, 0].into()).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(v.get(&[1, 0].into()).unwrap(), ZERO);
        let full = Projection::coordinate(sp.modes());
        assert_eq!(full.apply(&u).unwrap(), u);
    }

    #[test]
    fn frame_projection_is_idempotent_and_orthogonal() {
        let sp = ModeBox::new(2, 2);
        let a = SpectralState::random_smooth(sp, 1.1, 1, 1.0, 2.0).coeffs;
        let b = SpectralState::random_smooth(sp, 1.1, 2, 1.0, 2.0).coeffs;
        for ip in [InnerProduct::L2, InnerProduct::Sobolev(1.1)] {
            let p = Projection::Frame(FrameProjection::new(sp, vec![a.clone(), b.clone()], ip).unwrap());
            let u = SpectralState::random_smooth(sp, 1.1, 9, 1.0, 2.0);
            let pu = p.apply(&u).unwrap();
            let ppu = p.apply(&pu).unwrap();
            assert!(pu.sub(&ppu).unwrap().l2_norm() < 1e-13);
            let w = ip.weights(sp);
            let rest = p.complement(&u).unwrap();
            assert!(inner(&pu.coeffs, &rest.coeffs, &w).norm() < 1e-13);
        }
    }

    #[test]
    fn dependent_frame_rejected() {
        let sp = ModeBox::new(1, 2);
        let a = SpectralState::random_smooth(sp, 1.0, 1, 1.0, 2.0).coeffs;
        let b: Vec<Complex64> = a.iter().map(|x| x * 2.0).collect();
        assert!(matches!(
            FrameProjection::new(sp, vec![a, b], InnerProduct::L2),
            Err(Error::FrameNotIndependent)
        ));
    }
}
