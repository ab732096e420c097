use rand::Rng;

use super::{DenseGrid, Factorization, FactorSet, GridGeometry, Stencil};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scalar::{axpy, dot, Scalar};

/// Appearance grid: each component scales its own basis vector of length `P`.
///
/// For VM the component of mode X, Y, Z at rank `r` multiplies basis vector
/// `3r`, `3r + 1`, `3r + 2` (zero-based). Basis vectors are stored row-major in
/// `basis`, one row per component.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedAppearanceGrid<T> {
    pub geometry: GridGeometry<T>,
    pub factors: FactorSet<T>,
    pub basis: Vec<T>,
    feature_dim: usize,
}

impl<T: Scalar> FactorizedAppearanceGrid<T> {
    pub fn new(
        geometry: GridGeometry<T>,
        factors: FactorSet<T>,
        basis: Vec<T>,
        feature_dim: usize,
    ) -> Result<Self> {
        if factors.resolution() != geometry.resolution {
            return Err(Error::Geometry(format!(
                "factor resolution {:?} does not match grid {:?}",
                factors.resolution(),
                geometry.resolution
            )));
        }
        if feature_dim < 3 {
            return Err(Error::Config(format!("feature dimension {feature_dim} < 3")));
        }
        let expected = factors.n_components() * feature_dim;
        if basis.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: basis.len(),
            });
        }
        Ok(Self {
            geometry,
            factors,
            basis,
            feature_dim,
        })
    }

    /// Factors from `scale * N(0, 1)`, basis entries uniform in `±1/sqrt(C)`.
    pub fn random<R: Rng>(
        geometry: GridGeometry<T>,
        kind: Factorization,
        rank: usize,
        feature_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let factors = FactorSet::random(kind, rank, geometry.resolution, scale, rng);
        let c = factors.n_components();
        let bound = 1.0 / (c as f64).sqrt();
        let basis = (0..c * feature_dim)
            .map(|_| T::lit(rng.gen_range(-bound..bound)))
            .collect();
        Self::new(geometry, factors, basis, feature_dim)
    }

    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn n_components(&self) -> usize {
        self.factors.n_components()
    }

    pub fn basis_vector(&self, c: usize) -> &[T] {
        &self.basis[c * self.feature_dim..(c + 1) * self.feature_dim]
    }

    pub fn basis_vector_mut(&mut self, c: usize) -> &mut [T] {
        let p = self.feature_dim;
        &mut self.basis[c * p..(c + 1) * p]
    }

    /// Unactivated feature vector at a stencil; `comps` receives the components.
    #[inline]
    pub fn features_at(&self, st: &Stencil<T>, comps: &mut [T], out: &mut [T]) {
        self.factors.components(st, comps);
        out.iter_mut().for_each(|v| *v = T::zero());
        for (c, &a) in comps.iter().enumerate() {
            axpy(a, self.basis_vector(c), out);
        }
    }

    /// Feature vector at `x`; zero outside the box.
    pub fn eval_appearance(&self, x: Vec3<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.feature_dim];
        if let Some(st) = self.geometry.stencil(x) {
            let mut comps = vec![T::zero(); self.n_components()];
            self.features_at(&st, &mut comps, &mut out);
        }
        out
    }

    /// Backpropagates `d_feat` into factor and basis gradients. `comps` must hold
    /// the components at `st` (as left by [`Self::features_at`]).
    pub fn backward_at(
        &self,
        st: &Stencil<T>,
        comps: &[T],
        d_feat: &[T],
        grad_factors: &mut [T],
        grad_basis: &mut [T],
        dcomp: &mut [T],
    ) {
        let p = self.feature_dim;
        for (c, d) in dcomp.iter_mut().enumerate() {
            *d = dot(self.basis_vector(c), d_feat);
            axpy(comps[c], d_feat, &mut grad_basis[c * p..(c + 1) * p]);
        }
        self.factors.backward(st, dcomp, grad_factors);
    }

    pub fn upsample(&self, resolution: [usize; 3]) -> Result<Self> {
        Ok(Self {
            geometry: self.geometry.with_resolution(resolution)?,
            factors: self.factors.upsample(resolution)?,
            basis: self.basis.clone(),
            feature_dim: self.feature_dim,
        })
    }

    /// One dense array per feature channel holding the exact node features.
    pub fn dense_reconstruct(&self, cap: usize) -> Result<Vec<DenseGrid<T>>> {
        let res = self.geometry.resolution;
        DenseGrid::<T>::check_cap(res, self.feature_dim, cap)?;
        let n = self.geometry.voxel_count();
        let mut channels = vec![Vec::with_capacity(n); self.feature_dim];
        let mut comps = vec![T::zero(); self.n_components()];
        let mut feat = vec![T::zero(); self.feature_dim];
        for i in 0..res[0] {
            for j in 0..res[1] {
                for k in 0..res[2] {
                    self.factors.node_components([i, j, k], &mut comps);
                    feat.iter_mut().for_each(|v| *v = T::zero());
                    for (c, &a) in comps.iter().enumerate() {
                        axpy(a, self.basis_vector(c), &mut feat);
                    }
                    for (ch, &v) in channels.iter_mut().zip(&feat) {
                        ch.push(v);
                    }
                }
            }
        }
        Ok(channels.into_iter().map(|d| DenseGrid::new(res, d)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> GridGeometry<f64> {
        GridGeometry::new([4; 3], [-1.0; 3], [1.0; 3]).unwrap()
    }

    #[test]
    fn zero_basis_gives_zero_features() {
        let f = FactorSet::filled(Factorization::Vm, 2, [4; 3], 0.7);
        let g = FactorizedAppearanceGrid::new(geom(), f, vec![0.0; 6 * 5], 5).unwrap();
        assert!(g.eval_appearance([0.3, 0.2, -0.9]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_field_with_shared_unit_basis() {
        let f = FactorSet::filled(Factorization::Vm, 1, [4; 3], 1.0);
        let mut basis = vec![0.0; 3 * 4];
        for c in 0..3 {
            basis[c * 4] = 1.0;
        }
        let g = FactorizedAppearanceGrid::new(geom(), f, basis, 4).unwrap();
        let feat = g.eval_appearance([0.25, -0.6, 0.1]);
        for (a, b) in feat.iter().zip([3.0, 0.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_basis() {
        let f = FactorSet::<f64>::zeros(Factorization::Vm, 1, [4; 3]);
        assert!(FactorizedAppearanceGrid::new(geom(), f.clone(), vec![0.0; 8], 4).is_err());
        assert!(FactorizedAppearanceGrid::new(geom(), f, vec![0.0; 6], 2).is_err());
    }

    #[test]
    fn basis_index_follows_mode() {
        // only mode Y carries signal; it must land on basis vector 1
        let mut f = FactorSet::zeros(Factorization::Vm, 1, [4; 3]);
        f.line_mut(1, 0).iter_mut().for_each(|v| *v = 1.0);
        f.plane_mut(1, 0).iter_mut().for_each(|v| *v = 2.0);
        let mut basis = vec![0.0; 9];
        basis[3 + 1] = 1.0;
        let g = FactorizedAppearanceGrid::new(geom(), f, basis, 3).unwrap();
        let feat = g.eval_appearance([0.0; 3]);
        assert_eq!(feat, vec![0.0, 2.0, 0.0]);
    }
}
