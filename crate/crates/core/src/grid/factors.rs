use rand::Rng;
use rand_distr::StandardNormal;

use super::{AxisStencil, Factorization, Stencil, PLANE_AXES};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Line (and plane) factors of a rank-`R` tensor decomposition, stored in one
/// flat parameter vector.
///
/// Layout, in mode order X, Y, Z and rank-major within a mode: for VM each
/// `(mode, rank)` block is the line (`N_m` entries) followed by the plane
/// (`N_a * N_b` entries, row-major over the plane axes); for CP each block is
/// the line alone. Optimizer state and gradient buffers share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet<T> {
    kind: Factorization,
    rank: usize,
    resolution: [usize; 3],
    params: Vec<T>,
}

fn block_len(kind: Factorization, res: [usize; 3], m: usize) -> usize {
    match kind {
        Factorization::Vm => {
            let (a, b) = PLANE_AXES[m];
            res[m] + res[a] * res[b]
        }
        Factorization::Cp => res[m],
    }
}

impl<T: Scalar> FactorSet<T> {
    pub fn param_count(kind: Factorization, rank: usize, resolution: [usize; 3]) -> usize {
        (0..3).map(|m| rank * block_len(kind, resolution, m)).sum()
    }

    pub fn zeros(kind: Factorization, rank: usize, resolution: [usize; 3]) -> Self {
        Self {
            kind,
            rank,
            resolution,
            params: vec![T::zero(); Self::param_count(kind, rank, resolution)],
        }
    }

    pub fn filled(kind: Factorization, rank: usize, resolution: [usize; 3], value: T) -> Self {
        let mut f = Self::zeros(kind, rank, resolution);
        f.params.iter_mut().for_each(|p| *p = value);
        f
    }

    /// Entries drawn i.i.d. from `scale * N(0, 1)`.
    pub fn random<R: Rng>(
        kind: Factorization,
        rank: usize,
        resolution: [usize; 3],
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut f = Self::zeros(kind, rank, resolution);
        for p in f.params.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *p = T::lit(scale * z);
        }
        f
    }

    pub fn from_params(
        kind: Factorization,
        rank: usize,
        resolution: [usize; 3],
        params: Vec<T>,
    ) -> Result<Self> {
        let expected = Self::param_count(kind, rank, resolution);
        if params.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self {
            kind,
            rank,
            resolution,
            params,
        })
    }

    pub fn kind(&self) -> Factorization {
        self.kind
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    /// Number of scalar components produced per point (`3R` for VM, `R` for CP).
    pub fn n_components(&self) -> usize {
        match self.kind {
            Factorization::Vm => 3 * self.rank,
            Factorization::Cp => self.rank,
        }
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<T> {
        self.params
    }

    fn block_offset(&self, m: usize, r: usize) -> usize {
        let mut off = 0;
        for mm in 0..m {
            off += self.rank * block_len(self.kind, self.resolution, mm);
        }
        off + r * block_len(self.kind, self.resolution, m)
    }

    fn line_range(&self, m: usize, r: usize) -> std::ops::Range<usize> {
        let o = self.block_offset(m, r);
        o..o + self.resolution[m]
    }

    fn plane_range(&self, m: usize, r: usize) -> std::ops::Range<usize> {
        assert_eq!(self.kind, Factorization::Vm, "CP factors have no planes");
        let (a, b) = PLANE_AXES[m];
        let o = self.block_offset(m, r) + self.resolution[m];
        o..o + self.resolution[a] * self.resolution[b]
    }

    pub fn line(&self, m: usize, r: usize) -> &[T] {
        &self.params[self.line_range(m, r)]
    }

    pub fn line_mut(&mut self, m: usize, r: usize) -> &mut [T] {
        let range = self.line_range(m, r);
        &mut self.params[range]
    }

    /// Plane factor paired with line mode `m`, row-major over `PLANE_AXES[m]`.
    pub fn plane(&self, m: usize, r: usize) -> &[T] {
        &self.params[self.plane_range(m, r)]
    }

    pub fn plane_mut(&mut self, m: usize, r: usize) -> &mut [T] {
        let range = self.plane_range(m, r);
        &mut self.params[range]
    }

    /// Flat parameter index of line entry `i` of `(m, r)`.
    pub fn line_index(&self, m: usize, r: usize, i: usize) -> usize {
        self.line_range(m, r).start + i
    }

    /// Flat parameter index of plane entry `(ia, ib)` of `(m, r)`.
    pub fn plane_index(&self, m: usize, r: usize, ia: usize, ib: usize) -> usize {
        let (_, b) = PLANE_AXES[m];
        self.plane_range(m, r).start + ia * self.resolution[b] + ib
    }

    #[inline]
    fn bilerp(plane: &[T], nb: usize, sa: &AxisStencil<T>, sb: &AxisStencil<T>) -> T {
        let r0 = sa.i0 * nb + sb.i0;
        let r1 = r0 + nb;
        sa.w0 * (sb.w0 * plane[r0] + sb.w1 * plane[r0 + 1])
            + sa.w1 * (sb.w0 * plane[r1] + sb.w1 * plane[r1 + 1])
    }

    /// Interpolated components at a stencil, rank-major.
    pub fn components(&self, st: &Stencil<T>, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.n_components());
        let s = &st.0;
        match self.kind {
            Factorization::Vm => {
                for m in 0..3 {
                    let (a, b) = PLANE_AXES[m];
                    let nb = self.resolution[b];
                    for r in 0..self.rank {
                        let o = self.block_offset(m, r);
                        let line = &self.params[o..o + self.resolution[m]];
                        let plane = &self.params[o + self.resolution[m]..];
                        let lv = s[m].lerp(line);
                        let pv = Self::bilerp(plane, nb, &s[a], &s[b]);
                        out[3 * r + m] = lv * pv;
                    }
                }
            }
            Factorization::Cp => {
                for r in 0..self.rank {
                    let mut prod = T::one();
                    for m in 0..3 {
                        prod *= s[m].lerp(self.line(m, r));
                    }
                    out[r] = prod;
                }
            }
        }
    }

    /// Accumulates `dcomp[c] * d component_c / d param` into `grad`, which
    /// shares this set's layout. Only stencil entries are touched.
    pub fn backward(&self, st: &Stencil<T>, dcomp: &[T], grad: &mut [T]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let s = &st.0;
        match self.kind {
            Factorization::Vm => {
                for m in 0..3 {
                    let (a, b) = PLANE_AXES[m];
                    let nb = self.resolution[b];
                    let nm = self.resolution[m];
                    for r in 0..self.rank {
                        let g = dcomp[3 * r + m];
                        if g == T::zero() {
                            continue;
                        }
                        let o = self.block_offset(m, r);
                        let line = &self.params[o..o + nm];
                        let plane = &self.params[o + nm..];
                        let lv = s[m].lerp(line);
                        let pv = Self::bilerp(plane, nb, &s[a], &s[b]);

                        let gl = g * pv;
                        grad[o + s[m].i0] += gl * s[m].w0;
                        grad[o + s[m].i0 + 1] += gl * s[m].w1;

                        let gp = g * lv;
                        let (sa, sb) = (&s[a], &s[b]);
                        let r0 = o + nm + sa.i0 * nb + sb.i0;
                        let r1 = r0 + nb;
                        grad[r0] += gp * sa.w0 * sb.w0;
                        grad[r0 + 1] += gp * sa.w0 * sb.w1;
                        grad[r1] += gp * sa.w1 * sb.w0;
                        grad[r1 + 1] += gp * sa.w1 * sb.w1;
                    }
                }
            }
            Factorization::Cp => {
                for r in 0..self.rank {
                    let g = dcomp[r];
                    if g == T::zero() {
                        continue;
                    }
                    let lv = [
                        s[0].lerp(self.line(0, r)),
                        s[1].lerp(self.line(1, r)),
                        s[2].lerp(self.line(2, r)),
                    ];
                    for m in 0..3 {
                        let others = lv[(m + 1) % 3] * lv[(m + 2) % 3];
                        let o = self.block_offset(m, r);
                        grad[o + s[m].i0] += g * others * s[m].w0;
                        grad[o + s[m].i0 + 1] += g * others * s[m].w1;
                    }
                }
            }
        }
    }

    /// Exact components at integer node `idx`, without interpolation.
    pub fn node_components(&self, idx: [usize; 3], out: &mut [T]) {
        match self.kind {
            Factorization::Vm => {
                for m in 0..3 {
                    let (a, b) = PLANE_AXES[m];
                    for r in 0..self.rank {
                        let lv = self.line(m, r)[idx[m]];
                        let pv = self.plane(m, r)[idx[a] * self.resolution[b] + idx[b]];
                        out[3 * r + m] = lv * pv;
                    }
                }
            }
            Factorization::Cp => {
                for r in 0..self.rank {
                    out[r] = (0..3).map(|m| self.line(m, r)[idx[m]]).fold(T::one(), |p, v| p * v);
                }
            }
        }
    }

    /// Resamples every factor onto a finer grid spanning the same box.
    pub fn upsample(&self, resolution: [usize; 3]) -> Result<Self> {
        if (0..3).any(|a| resolution[a] < self.resolution[a]) {
            return Err(Error::Shrink {
                from: self.resolution,
                to: resolution,
            });
        }
        let mut out = Self::zeros(self.kind, self.rank, resolution);
        for m in 0..3 {
            for r in 0..self.rank {
                let line = resample_line(self.line(m, r), resolution[m]);
                out.line_mut(m, r).copy_from_slice(&line);
                if self.kind == Factorization::Vm {
                    let (a, b) = PLANE_AXES[m];
                    let plane = resample_plane(
                        self.plane(m, r),
                        (self.resolution[a], self.resolution[b]),
                        (resolution[a], resolution[b]),
                    );
                    out.plane_mut(m, r).copy_from_slice(&plane);
                }
            }
        }
        Ok(out)
    }
}

fn resample_stencil<T: Scalar>(j: usize, n_old: usize, n_new: usize) -> AxisStencil<T> {
    if n_old == n_new {
        return AxisStencil {
            i0: j.min(n_old - 2),
            w0: if j < n_old - 1 { T::one() } else { T::zero() },
            w1: if j < n_old - 1 { T::zero() } else { T::one() },
        };
    }
    let coord = T::from_usize_lossy(j * (n_old - 1)) / T::from_usize_lossy(n_new - 1);
    AxisStencil::new(coord, n_old)
}

fn resample_line<T: Scalar>(v: &[T], n_new: usize) -> Vec<T> {
    (0..n_new)
        .map(|j| resample_stencil::<T>(j, v.len(), n_new).lerp(v))
        .collect()
}

fn resample_plane<T: Scalar>(p: &[T], old: (usize, usize), new: (usize, usize)) -> Vec<T> {
    let mut out = Vec::with_capacity(new.0 * new.1);
    for ja in 0..new.0 {
        let sa = resample_stencil::<T>(ja, old.0, new.0);
        for jb in 0..new.1 {
            let sb = resample_stencil::<T>(jb, old.1, new.1);
            let r0 = sa.i0 * old.1 + sb.i0;
            let r1 = r0 + old.1;
            out.push(
                sa.w0 * (sb.w0 * p[r0] + sb.w1 * p[r0 + 1])
                    + sa.w1 * (sb.w0 * p[r1] + sb.w1 * p[r1 + 1]),
            );
        }
    }
    out
}
