//! Low-rank factorized voxel grids for density and appearance.
//!
//! A grid stores, per mode `m` in X, Y, Z and per rank `r`, a line factor
//! along axis `m` and (for the vector-matrix form) a plane factor over the two
//! remaining axes. The scalar component `A^m_r(x)` is the product of the
//! interpolated line and plane values. Components are enumerated rank-major:
//! index `3 * r + m` for vector-matrix, `r` for CP.
//!
//! Grid node `i` along an axis sits at `aabb_min + i * extent / (N - 1)`, so the
//! box corners are exact nodes.

mod appearance;
mod dense;
mod density;
mod factors;

use serde::{Deserialize, Serialize};

pub use appearance::FactorizedAppearanceGrid;
pub use dense::{DenseGrid, DEFAULT_DENSE_CAP};
pub use density::{ActivationKind, DensityActivation, FactorizedDensityGrid};
pub use factors::FactorSet;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scalar::Scalar;

/// Internal layout of each rank's factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Factorization {
    /// Vector-matrix: one line and one plane per mode and rank.
    #[default]
    Vm,
    /// Canonical polyadic: three lines per rank multiplied together.
    Cp,
}

/// Axes spanning the plane factor paired with each line mode.
pub(crate) const PLANE_AXES: [(usize, usize); 3] = [(1, 2), (0, 2), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Scalar> Aabb<T> {
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, x: Vec3<T>) -> bool {
        (0..3).all(|a| x[a] >= self.min[a] && x[a] <= self.max[a])
    }

    /// Slab intersection of the ray `o + t d`, clipped to `[near, far]`.
    pub fn intersect(&self, origin: Vec3<T>, dir: Vec3<T>, near: T, far: T) -> Option<(T, T)> {
        let mut t0 = near;
        let mut t1 = far;
        for a in 0..3 {
            if dir[a] == T::zero() {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = T::one() / dir[a];
            let mut ta = (self.min[a] - origin[a]) * inv;
            let mut tb = (self.max[a] - origin[a]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        (t0 < t1).then_some((t0, t1))
    }

    pub fn translated(&self, offset: Vec3<T>) -> Self {
        Self {
            min: crate::math::add(self.min, offset),
            max: crate::math::add(self.max, offset),
        }
    }
}

/// Resolution and world-space placement of a voxel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry<T> {
    pub resolution: [usize; 3],
    pub aabb: Aabb<T>,
}

impl<T: Scalar> GridGeometry<T> {
    pub fn new(resolution: [usize; 3], aabb_min: Vec3<T>, aabb_max: Vec3<T>) -> Result<Self> {
        if let Some(n) = resolution.iter().find(|&&n| n < 2) {
            return Err(Error::Geometry(format!("resolution component {n} < 2")));
        }
        if (0..3).any(|a| !(aabb_min[a] < aabb_max[a])) {
            return Err(Error::Geometry(format!(
                "aabb_min {aabb_min:?} is not strictly below aabb_max {aabb_max:?}"
            )));
        }
        Ok(Self {
            resolution,
            aabb: Aabb::new(aabb_min, aabb_max),
        })
    }

    pub fn with_resolution(&self, resolution: [usize; 3]) -> Result<Self> {
        Self::new(resolution, self.aabb.min, self.aabb.max)
    }

    pub fn voxel_count(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Distance between neighbouring nodes along `axis`.
    pub fn spacing(&self, axis: usize) -> T {
        (self.aabb.max[axis] - self.aabb.min[axis]) / T::from_usize_lossy(self.resolution[axis] - 1)
    }

    pub fn node_position(&self, idx: [usize; 3]) -> Vec3<T> {
        let mut p = [T::zero(); 3];
        for a in 0..3 {
            p[a] = self.aabb.min[a] + T::from_usize_lossy(idx[a]) * self.spacing(a);
        }
        p
    }

    /// Continuous grid coordinates in `[0, N-1]` per axis, or `None` outside the box.
    pub fn grid_coords(&self, x: Vec3<T>) -> Option<Vec3<T>> {
        if !self.aabb.contains(x) {
            return None;
        }
        let mut g = [T::zero(); 3];
        for a in 0..3 {
            let n1 = T::from_usize_lossy(self.resolution[a] - 1);
            let u = (x[a] - self.aabb.min[a]) / (self.aabb.max[a] - self.aabb.min[a]) * n1;
            g[a] = u.max(T::zero()).min(n1);
        }
        Some(g)
    }

    pub fn stencil(&self, x: Vec3<T>) -> Option<Stencil<T>> {
        self.grid_coords(x).map(|g| Stencil::from_coords(g, self.resolution))
    }

    /// Stencil of `x` clamped into the box; for samples already clipped to it.
    pub fn stencil_clamped(&self, x: Vec3<T>) -> Stencil<T> {
        let mut g = [T::zero(); 3];
        for a in 0..3 {
            let n1 = T::from_usize_lossy(self.resolution[a] - 1);
            let u = (x[a] - self.aabb.min[a]) / (self.aabb.max[a] - self.aabb.min[a]) * n1;
            g[a] = u.max(T::zero()).min(n1);
        }
        Stencil::from_coords(g, self.resolution)
    }
}

/// Linear interpolation stencil along one axis: nodes `i0` and `i0 + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisStencil<T> {
    pub i0: usize,
    pub w0: T,
    pub w1: T,
}

impl<T: Scalar> AxisStencil<T> {
    pub fn new(coord: T, n: usize) -> Self {
        let fl = coord.floor().to_usize().unwrap_or(0).min(n - 2);
        let w1 = coord - T::from_usize_lossy(fl);
        Self {
            i0: fl,
            w0: T::one() - w1,
            w1,
        }
    }

    #[inline]
    pub fn lerp(&self, v: &[T]) -> T {
        self.w0 * v[self.i0] + self.w1 * v[self.i0 + 1]
    }
}

/// Per-axis stencils of a trilinear interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil<T>(pub [AxisStencil<T>; 3]);

impl<T: Scalar> Stencil<T> {
    pub fn from_coords(g: Vec3<T>, resolution: [usize; 3]) -> Self {
        Stencil([
            AxisStencil::new(g[0], resolution[0]),
            AxisStencil::new(g[1], resolution[1]),
            AxisStencil::new(g[2], resolution[2]),
        ])
    }

    /// The eight corner weights, corner bit `a` selecting the upper node on axis `a`.
    pub fn corner_weights(&self) -> [T; 8] {
        let mut w = [T::zero(); 8];
        for (c, wc) in w.iter_mut().enumerate() {
            let mut p = T::one();
            for a in 0..3 {
                let s = &self.0[a];
                p *= if c >> a & 1 == 1 { s.w1 } else { s.w0 };
            }
            *wc = p;
        }
        w
    }
}
