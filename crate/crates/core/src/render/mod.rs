//! Ray sampling, emission-absorption compositing and the batched
//! differentiable render pipeline.

mod composite;
mod pipeline;
mod sampling;

use serde::{Deserialize, Serialize};

pub use composite::{composite, composite_backward, occlusion_loss, Composite};
pub use pipeline::{backward_batch, render_batch, render_colors, BatchRender, RayTrace};
pub use sampling::{ray_seed, sample_ray, SampleSet};

use crate::math::{normalize, Vec3};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    /// Unit length.
    pub direction: Vec3<T>,
    pub near: T,
    pub far: T,
}

impl<T: Scalar> Ray<T> {
    /// Normalizes `direction`.
    pub fn new(origin: Vec3<T>, direction: Vec3<T>, near: T, far: T) -> Self {
        Self {
            origin,
            direction: normalize(direction),
            near,
            far,
        }
    }
}

/// Sampling and compositing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSettings {
    pub n_samples: usize,
    /// Jitter samples within their strata while training.
    pub jitter: bool,
    pub background: [f64; 3],
    /// Near-region sample count for the occlusion term; `None` means 10% of
    /// `n_samples` (at least one).
    pub occlusion_samples: Option<usize>,
    /// Samples whose compositing weight falls below this skip the appearance
    /// branch and contribute no color.
    pub weight_threshold: f64,
    pub near: f64,
    pub far: f64,
    /// Rays per parallel work unit; fixed so that results do not depend on the
    /// number of worker threads.
    pub chunk_rays: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            n_samples: 128,
            jitter: true,
            background: [1.0; 3],
            occlusion_samples: None,
            weight_threshold: 1e-4,
            near: 0.0,
            far: 100.0,
            chunk_rays: 64,
        }
    }
}

impl RenderSettings {
    pub fn occlusion_k(&self) -> usize {
        self.occlusion_samples
            .unwrap_or_else(|| (self.n_samples as f64 * 0.1).round() as usize)
            .max(1)
    }

    pub fn background<T: Scalar>(&self) -> [T; 3] {
        crate::math::cast3(self.background)
    }
}
