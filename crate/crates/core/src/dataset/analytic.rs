use std::f64::consts::PI;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CameraModel, FrameEntry, PosedImage, Scene, Split, TransformsFile};
use crate::error::{Error, Result};
use crate::grid::Aabb;
use crate::io::atomic_write;
use crate::math::Vec3;
use crate::render::{composite, sample_ray, Ray};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Sphere,
    Boxes,
    #[default]
    SphereAndBoxes,
}

struct SolidBox {
    center: Vec3<f64>,
    half: Vec3<f64>,
    color: [f64; 3],
}

const BOXES: [SolidBox; 3] = [
    SolidBox {
        center: [0.8, -0.55, 0.0],
        half: [0.22, 0.22, 0.22],
        color: [0.85, 0.25, 0.2],
    },
    SolidBox {
        center: [-0.75, 0.3, -0.5],
        half: [0.15, 0.3, 0.2],
        color: [0.2, 0.35, 0.85],
    },
    SolidBox {
        center: [0.1, 0.6, 0.75],
        half: [0.3, 0.12, 0.12],
        color: [0.3, 0.8, 0.35],
    },
];

/// Piecewise-constant density with view-independent color: a sphere of
/// radius 0.5 at the origin and/or three axis-aligned boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticField {
    pub kind: SceneKind,
    pub density: f64,
    pub aabb: Aabb<f64>,
}

impl AnalyticField {
    pub const SPHERE_RADIUS: f64 = 0.5;

    pub fn new(kind: SceneKind, density: f64) -> Self {
        Self {
            kind,
            density,
            aabb: Aabb {
                min: [-1.5; 3],
                max: [1.5; 3],
            },
        }
    }

    fn has_sphere(&self) -> bool {
        matches!(self.kind, SceneKind::Sphere | SceneKind::SphereAndBoxes)
    }

    fn has_boxes(&self) -> bool {
        matches!(self.kind, SceneKind::Boxes | SceneKind::SphereAndBoxes)
    }

    fn in_sphere(p: Vec3<f64>) -> bool {
        p[0] * p[0] + p[1] * p[1] + p[2] * p[2] < Self::SPHERE_RADIUS * Self::SPHERE_RADIUS
    }

    fn hit_box(p: Vec3<f64>) -> Option<&'static SolidBox> {
        BOXES
            .iter()
            .find(|b| (0..3).all(|a| (p[a] - b.center[a]).abs() < b.half[a]))
    }

    pub fn density_at(&self, p: Vec3<f64>) -> f64 {
        if (self.has_sphere() && Self::in_sphere(p)) || (self.has_boxes() && Self::hit_box(p).is_some()) {
            self.density
        } else {
            0.0
        }
    }

    pub fn color_at(&self, p: Vec3<f64>) -> [f64; 3] {
        if self.has_sphere() && Self::in_sphere(p) {
            let r = Self::SPHERE_RADIUS;
            return [
                0.55 + 0.4 * p[0] / r,
                0.55 + 0.4 * p[1] / r,
                0.55 + 0.4 * p[2] / r,
            ];
        }
        if self.has_boxes() {
            if let Some(b) = Self::hit_box(p) {
                return b.color;
            }
        }
        [0.0; 3]
    }
}

/// Renders `field` through every pixel with midpoint samples over the
/// field's box, the same quadrature the model renderer uses.
pub fn render_field(
    field: &AnalyticField,
    camera: &CameraModel,
    n_samples: usize,
    background: [f64; 3],
    near: f64,
    far: f64,
) -> Vec<[f64; 3]> {
    (0..camera.height)
        .into_par_iter()
        .flat_map_iter(|v| {
            (0..camera.width).map(move |u| {
                let ray: Ray<f64> = camera.ray(u, v, near, far);
                let s = sample_ray(&ray, Some(&field.aabb), n_samples, None);
                let mut sigma = Vec::with_capacity(s.len());
                let mut colors = Vec::with_capacity(s.len());
                for &t in &s.t {
                    let p = crate::math::along(ray.origin, ray.direction, t);
                    sigma.push(field.density_at(p));
                    colors.push(field.color_at(p));
                }
                composite(&sigma, &s.delta, &colors, background).rgb
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticSceneConfig {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub density: f64,
    pub camera_radius: f64,
    pub camera_angle_x: f64,
    /// Camera elevation range in degrees.
    pub elevation_deg: [f64; 2],
    pub samples_per_ray: usize,
    pub background: [f64; 3],
    pub near: f64,
    pub far: f64,
}

impl Default for AnalyticSceneConfig {
    fn default() -> Self {
        Self {
            kind: SceneKind::SphereAndBoxes,
            width: 100,
            height: 100,
            n_train: 8,
            n_test: 12,
            seed: 0,
            density: 50.0,
            camera_radius: 4.0,
            camera_angle_x: 0.6911112070083618,
            elevation_deg: [-10.0, 50.0],
            samples_per_ray: 1024,
            background: [1.0; 3],
            near: 0.0,
            far: 100.0,
        }
    }
}

/// Cameras on a sphere of `radius`, evenly spread in azimuth with a seeded
/// phase and seeded elevations, all looking at the origin with +z up.
fn ring_cameras(cfg: &AnalyticSceneConfig, n: usize, stream: u64) -> Result<Vec<CameraModel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let phase: f64 = rng.gen();
    let [lo, hi] = cfg.elevation_deg;
    (0..n)
        .map(|i| {
            let az = 2.0 * PI * (i as f64 + phase) / n as f64;
            let el = (lo + (hi - lo) * rng.gen::<f64>()).to_radians();
            let r = cfg.camera_radius;
            let eye = [r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin()];
            CameraModel::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0], cfg.width, cfg.height, cfg.camera_angle_x)
        })
        .collect()
}

/// A rendered analytic scene with its ground-truth field.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticScene {
    pub config: AnalyticSceneConfig,
    pub field: AnalyticField,
    pub train: Vec<PosedImage>,
    pub test: Vec<PosedImage>,
}

pub fn make_analytic_scene(cfg: &AnalyticSceneConfig) -> Result<AnalyticScene> {
    if cfg.samples_per_ray < 2 {
        return Err(Error::Config("samples_per_ray must be at least 2".into()));
    }
    if !(cfg.density >= 0.0 && cfg.density.is_finite()) {
        return Err(Error::Config("scene density must be finite and non-negative".into()));
    }
    let field = AnalyticField::new(cfg.kind, cfg.density);
    let render = |split: Split, cams: Vec<CameraModel>| -> Result<Vec<PosedImage>> {
        cams.into_iter()
            .enumerate()
            .map(|(i, cam)| {
                let rgb = render_field(&field, &cam, cfg.samples_per_ray, cfg.background, cfg.near, cfg.far)
                    .into_iter()
                    .map(|c| c.map(|v| v as f32))
                    .collect();
                PosedImage::new(cam, rgb, PathBuf::from(format!("{}/r_{i:03}.png", split.name())))
            })
            .collect()
    };
    let train = render(Split::Train, ring_cameras(cfg, cfg.n_train, 1)?)?;
    let test = render(Split::Test, ring_cameras(cfg, cfg.n_test, 2)?)?;
    Ok(AnalyticScene {
        config: cfg.clone(),
        field,
        train,
        test,
    })
}

fn encode_png16(img: &PosedImage) -> Result<Vec<u8>> {
    let data: Vec<u16> = img
        .rgb
        .iter()
        .flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16))
        .collect();
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.camera.width as u32, img.camera.height as u32, data)
            .ok_or_else(|| Error::Config("image buffer size mismatch".into()))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

impl AnalyticScene {
    /// Writes 16-bit PNGs and transforms files in the NeRF-synthetic layout.
    pub fn write(&self, root: &Path) -> Result<()> {
        for (split, images) in [(Split::Train, &self.train), (Split::Test, &self.test)] {
            let mut frames = Vec::with_capacity(images.len());
            for img in images {
                atomic_write(&root.join(&img.path), &encode_png16(img)?)?;
                frames.push(FrameEntry {
                    file_path: format!("./{}", img.path.display()),
                    transform_matrix: img.camera.pose,
                });
            }
            let meta = TransformsFile {
                camera_angle_x: self.config.camera_angle_x,
                w: Some(self.config.width),
                h: Some(self.config.height),
                frames,
            };
            atomic_write(&root.join(split.transforms_file()), &serde_json::to_vec_pretty(&meta)?)?;
        }
        Ok(())
    }

    pub fn into_scene(self) -> Scene {
        Scene {
            train: self.train,
            val: Vec::new(),
            test: self.test,
        }
    }
}
