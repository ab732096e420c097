use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DenseGrid, Factorization, FactorSet, GridGeometry, Stencil};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    #[default]
    Softplus,
    Relu,
}

/// `sigma = f(raw + shift)` with `f` softplus or relu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityActivation<T> {
    pub kind: ActivationKind,
    pub shift: T,
}

impl<T: Scalar> DensityActivation<T> {
    pub fn softplus(shift: T) -> Self {
        Self {
            kind: ActivationKind::Softplus,
            shift,
        }
    }

    pub fn relu() -> Self {
        Self {
            kind: ActivationKind::Relu,
            shift: T::zero(),
        }
    }

    #[inline]
    pub fn apply(&self, raw: T) -> T {
        let z = raw + self.shift;
        match self.kind {
            ActivationKind::Softplus => softplus(z),
            ActivationKind::Relu => z.max(T::zero()),
        }
    }

    /// `d sigma / d raw`
    #[inline]
    pub fn derivative(&self, raw: T) -> T {
        let z = raw + self.shift;
        match self.kind {
            ActivationKind::Softplus => sigmoid(z),
            ActivationKind::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Geometry grid: density is the activated sum of all factor components.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedDensityGrid<T> {
    pub geometry: GridGeometry<T>,
    pub factors: FactorSet<T>,
    pub activation: DensityActivation<T>,
}

impl<T: Scalar> FactorizedDensityGrid<T> {
    pub fn new(
        geometry: GridGeometry<T>,
        factors: FactorSet<T>,
        activation: DensityActivation<T>,
    ) -> Result<Self> {
        if factors.resolution() != geometry.resolution {
            return Err(Error::Geometry(format!(
                "factor resolution {:?} does not match grid {:?}",
                factors.resolution(),
                geometry.resolution
            )));
        }
        Ok(Self {
            geometry,
            factors,
            activation,
        })
    }

    pub fn zeros(
        geometry: GridGeometry<T>,
        kind: Factorization,
        rank: usize,
        activation: DensityActivation<T>,
    ) -> Self {
        let factors = FactorSet::zeros(kind, rank, geometry.resolution);
        Self {
            geometry,
            factors,
            activation,
        }
    }

    pub fn random<R: Rng>(
        geometry: GridGeometry<T>,
        kind: Factorization,
        rank: usize,
        scale: f64,
        activation: DensityActivation<T>,
        rng: &mut R,
    ) -> Self {
        let factors = FactorSet::random(kind, rank, geometry.resolution, scale, rng);
        Self {
            geometry,
            factors,
            activation,
        }
    }

    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    pub fn n_components(&self) -> usize {
        self.factors.n_components()
    }

    /// Masked factor sum at a stencil; `comps` receives the masked components.
    #[inline]
    pub fn raw_at(&self, st: &Stencil<T>, mask: Option<&[T]>, comps: &mut [T]) -> T {
        self.factors.components(st, comps);
        if let Some(mask) = mask {
            for (c, m) in comps.iter_mut().zip(mask) {
                *c *= *m;
            }
        }
        comps.iter().copied().sum()
    }

    /// Pre-activation factor sum; zero outside the box.
    pub fn raw_density(&self, x: Vec3<T>) -> T {
        let mut comps = vec![T::zero(); self.n_components()];
        match self.geometry.stencil(x) {
            Some(st) => self.raw_at(&st, None, &mut comps),
            None => T::zero(),
        }
    }

    /// Activated density; points outside the box are culled to zero.
    pub fn eval_density(&self, x: Vec3<T>) -> T {
        match self.geometry.stencil(x) {
            Some(st) => {
                let mut comps = vec![T::zero(); self.n_components()];
                self.activation.apply(self.raw_at(&st, None, &mut comps))
            }
            None => T::zero(),
        }
    }

    /// Accumulates `d_raw * d raw / d factor` into `grad` at a stencil.
    pub fn backward_raw_at(
        &self,
        st: &Stencil<T>,
        d_raw: T,
        mask: Option<&[T]>,
        grad: &mut [T],
        dcomp: &mut [T],
    ) {
        match mask {
            Some(mask) => {
                for (d, m) in dcomp.iter_mut().zip(mask) {
                    *d = d_raw * *m;
                }
            }
            None => dcomp.iter_mut().for_each(|d| *d = d_raw),
        }
        self.factors.backward(st, dcomp, grad);
    }

    /// Gradient of the raw (pre-activation) density at `x`, scaled by `upstream`.
    pub fn grad_factors_raw(&self, x: Vec3<T>, upstream: T, grad: &mut [T]) {
        if let Some(st) = self.geometry.stencil(x) {
            let mut dcomp = vec![T::zero(); self.n_components()];
            self.backward_raw_at(&st, upstream, None, grad, &mut dcomp);
        }
    }

    /// Gradient of the activated density at `x`, scaled by `upstream`.
    pub fn grad_factors(&self, x: Vec3<T>, upstream: T, grad: &mut [T]) {
        if let Some(st) = self.geometry.stencil(x) {
            let mut buf = vec![T::zero(); self.n_components()];
            let raw = self.raw_at(&st, None, &mut buf);
            let d_raw = upstream * self.activation.derivative(raw);
            self.backward_raw_at(&st, d_raw, None, grad, &mut buf);
        }
    }

    pub fn upsample(&self, resolution: [usize; 3]) -> Result<Self> {
        Ok(Self {
            geometry: self.geometry.with_resolution(resolution)?,
            factors: self.factors.upsample(resolution)?,
            activation: self.activation,
        })
    }

    /// Materializes the raw factor sum at every grid node.
    pub fn dense_reconstruct(&self, cap: usize) -> Result<DenseGrid<T>> {
        let res = self.geometry.resolution;
        DenseGrid::<T>::check_cap(res, 1, cap)?;
        let mut comps = vec![T::zero(); self.n_components()];
        let mut data = Vec::with_capacity(self.geometry.voxel_count());
        for i in 0..res[0] {
            for j in 0..res[1] {
                for k in 0..res[2] {
                    self.factors.node_components([i, j, k], &mut comps);
                    data.push(comps.iter().copied().sum());
                }
            }
        }
        Ok(DenseGrid::new(res, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(n: usize) -> GridGeometry<f64> {
        GridGeometry::new([n; 3], [-1.0; 3], [1.0; 3]).unwrap()
    }

    #[test]
    fn zero_factors_give_zero_density() {
        let g = FactorizedDensityGrid::zeros(geom(4), Factorization::Vm, 2, DensityActivation::relu());
        for x in [[0.1, -0.3, 0.7], [1.0, 1.0, 1.0], [-1.0, 0.0, 0.0]] {
            assert_eq!(g.eval_density(x), 0.0);
        }
    }

    #[test]
    fn constant_rank_one_field_sums_modes() {
        let f = FactorSet::filled(Factorization::Vm, 1, [4; 3], 1.0);
        let g = FactorizedDensityGrid::new(geom(4), f, DensityActivation::relu()).unwrap();
        for x in [[0.13, -0.77, 0.5], [0.0; 3], [-1.0, 1.0, 0.999]] {
            assert!((g.raw_density(x) - 3.0).abs() < 1e-12);
            assert!((g.eval_density(x) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_box_is_culled() {
        let f = FactorSet::filled(Factorization::Vm, 1, [4; 3], 1.0);
        let g = FactorizedDensityGrid::new(geom(4), f, DensityActivation::relu()).unwrap();
        assert_eq!(g.eval_density([1.01, 0.0, 0.0]), 0.0);
        assert_eq!(g.raw_density([0.0, -2.0, 0.0]), 0.0);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let g = FactorizedDensityGrid::random(geom(4), Factorization::Vm, 2, 0.5, DensityActivation::softplus(0.0), &mut rng);
        let mut grad = vec![0.0; g.factors.params().len()];
        g.grad_factors([0.2, 0.1, -0.4], 0.0, &mut grad);
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn node_gradient_equals_plane_value() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        let g = FactorizedDensityGrid::random(geom(3), Factorization::Vm, 1, 1.0, DensityActivation::relu(), &mut rng);
        let idx = [1, 2, 0];
        let x = g.geometry.node_position(idx);
        let mut grad = vec![0.0; g.factors.params().len()];
        g.grad_factors_raw(x, 1.0, &mut grad);
        // line X at node 1 pairs with plane YZ at (2, 0)
        let plane_val = g.factors.plane(0, 0)[2 * 3];
        assert!((grad[g.factors.line_index(0, 0, 1)] - plane_val).abs() < 1e-12);
    }

    #[test]
    fn separable_rank_one_dense_values() {
        let geo = GridGeometry::new([2; 3], [0.0; 3], [1.0; 3]).unwrap();
        let mut f = FactorSet::zeros(Factorization::Vm, 1, [2; 3]);
        f.line_mut(0, 0).copy_from_slice(&[1.0, 2.0]);
        f.plane_mut(0, 0).iter_mut().for_each(|v| *v = 1.0);
        let g = FactorizedDensityGrid::new(geo, f, DensityActivation::relu()).unwrap();
        let d = g.dense_reconstruct(super::super::DEFAULT_DENSE_CAP).unwrap();
        for j in 0..2 {
            for k in 0..2 {
                assert_eq!(d.get([0, j, k]), 1.0);
                assert_eq!(d.get([1, j, k]), 2.0);
            }
        }
    }

    #[test]
    fn dense_cap_is_enforced() {
        let g = FactorizedDensityGrid::<f64>::zeros(geom(10), Factorization::Cp, 1, DensityActivation::relu());
        match g.dense_reconstruct(999) {
            Err(Error::DenseTooLarge { voxels, cap, .. }) => {
                assert_eq!(voxels, 1000);
                assert_eq!(cap, 999);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }
}
