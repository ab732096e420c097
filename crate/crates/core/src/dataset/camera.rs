use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cast3, cross, normalize, sub, Vec3};
use crate::render::Ray;
use crate::scalar::Scalar;

/// Pinhole camera with an OpenGL-style camera-to-world pose: the camera looks
/// down its local −z axis with +y up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in radians.
    pub camera_angle_x: f64,
    /// Row-major camera-to-world matrix.
    pub pose: [[f64; 4]; 4],
}

impl CameraModel {
    pub fn new(width: usize, height: usize, camera_angle_x: f64, pose: [[f64; 4]; 4]) -> Result<Self> {
        let cam = Self {
            width,
            height,
            camera_angle_x,
            pose,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Geometry("camera has an empty image plane".into()));
        }
        if !(self.camera_angle_x > 0.0 && self.camera_angle_x < std::f64::consts::PI) {
            return Err(Error::Geometry(format!(
                "camera_angle_x {} outside (0, pi)",
                self.camera_angle_x
            )));
        }
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| self.pose[k][i] * self.pose[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > 1e-4 || !d.is_finite() {
                    return Err(Error::Geometry("pose rotation is not orthonormal".into()));
                }
            }
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`.
    pub fn look_at(
        eye: Vec3<f64>,
        target: Vec3<f64>,
        up: Vec3<f64>,
        width: usize,
        height: usize,
        camera_angle_x: f64,
    ) -> Result<Self> {
        let z = normalize(sub(eye, target));
        let x = normalize(cross(up, z));
        let y = cross(z, x);
        let mut pose = [[0.0; 4]; 4];
        for r in 0..3 {
            pose[r] = [x[r], y[r], z[r], eye[r]];
        }
        pose[3][3] = 1.0;
        Self::new(width, height, camera_angle_x, pose)
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.camera_angle_x).tan()
    }

    pub fn origin(&self) -> Vec3<f64> {
        [self.pose[0][3], self.pose[1][3], self.pose[2][3]]
    }

    /// World-space unit direction through the center of pixel `(u, v)`.
    pub fn pixel_direction(&self, u: usize, v: usize) -> Vec3<f64> {
        let f = self.focal();
        let d = [
            (u as f64 + 0.5 - 0.5 * self.width as f64) / f,
            -(v as f64 + 0.5 - 0.5 * self.height as f64) / f,
            -1.0,
        ];
        let p = &self.pose;
        normalize([
            p[0][0] * d[0] + p[0][1] * d[1] + p[0][2] * d[2],
            p[1][0] * d[0] + p[1][1] * d[1] + p[1][2] * d[2],
            p[2][0] * d[0] + p[2][1] * d[1] + p[2][2] * d[2],
        ])
    }

    pub fn ray<T: Scalar>(&self, u: usize, v: usize, near: f64, far: f64) -> Ray<T> {
        Ray::new(
            cast3(self.origin()),
            cast3(self.pixel_direction(u, v)),
            T::lit(near),
            T::lit(far),
        )
    }

    /// Rays through the given `(u, v)` pixels.
    pub fn generate_rays<T: Scalar>(&self, pixels: &[(usize, usize)], near: f64, far: f64) -> Result<Vec<Ray<T>>> {
        pixels
            .iter()
            .map(|&(u, v)| {
                if u >= self.width || v >= self.height {
                    return Err(Error::Geometry(format!(
                        "pixel ({u}, {v}) outside {}x{} image",
                        self.width, self.height
                    )));
                }
                Ok(self.ray(u, v, near, far))
            })
            .collect()
    }

    /// One ray per pixel, row-major.
    pub fn all_rays<T: Scalar>(&self, near: f64, far: f64) -> Vec<Ray<T>> {
        (0..self.height)
            .flat_map(|v| (0..self.width).map(move |u| (u, v)))
            .map(|(u, v)| self.ray(u, v, near, far))
            .collect()
    }
}
