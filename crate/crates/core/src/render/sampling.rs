use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Ray;
use crate::grid::Aabb;
use crate::scalar::Scalar;

/// Ordered sample distances along a ray with their interval lengths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet<T> {
    pub t: Vec<T>,
    pub delta: Vec<T>,
}

impl<T> SampleSet<T> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Stratified samples over `[near, far]` clipped to `aabb`.
///
/// The interval is split into `n` equal strata; each sample sits at its
/// stratum midpoint, or uniformly inside it when a jitter seed is given. Every
/// delta equals the stratum width. Rays missing the box yield no samples.
pub fn sample_ray<T: Scalar>(
    ray: &Ray<T>,
    aabb: Option<&Aabb<T>>,
    n: usize,
    jitter: Option<u64>,
) -> SampleSet<T> {
    assert!(n >= 2, "need at least two samples per ray");
    let (t0, t1) = match aabb {
        Some(b) => match b.intersect(ray.origin, ray.direction, ray.near, ray.far) {
            Some(span) => span,
            None => return SampleSet::default(),
        },
        None => (ray.near, ray.far),
    };
    let width = (t1 - t0) / T::from_usize_lossy(n);
    let half = T::lit(0.5);
    let mut rng = jitter.map(ChaCha8Rng::seed_from_u64);
    let t = (0..n)
        .map(|i| {
            let u = match rng.as_mut() {
                Some(r) => T::lit(r.gen::<f64>()),
                None => half,
            };
            t0 + (T::from_usize_lossy(i) + u) * width
        })
        .collect();
    SampleSet {
        t,
        delta: vec![width; n],
    }
}

/// Per-ray jitter seed derived from the run seed, iteration and ray slot.
pub fn ray_seed(seed: u64, iteration: u64, ray: u64) -> u64 {
    let mut z = seed
        ^ iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ray.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
