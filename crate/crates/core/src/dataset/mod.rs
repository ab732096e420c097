//! Posed images in the NeRF-synthetic layout, camera rays, few-shot view
//! selection and analytic oracle scenes.
//!
//! A scene directory holds `transforms_{train,val,test}.json`, each with a
//! `camera_angle_x` and a `frames` list of `{file_path, transform_matrix}`.
//! Images are decoded to floats, composited over the background and
//! optionally box-downscaled by an integer factor.

mod analytic;
mod camera;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::RayBank;

pub use analytic::{make_analytic_scene, render_field, AnalyticField, AnalyticScene, AnalyticSceneConfig, SceneKind};
pub use camera::CameraModel;

/// The eight Blender training views used by FreeNeRF's few-shot protocol.
///
/// Not confirmed against a released split file; pass explicit ids instead
/// when exact parity matters.
pub const FREENERF_BLENDER_8_VIEWS: [usize; 8] = [26, 86, 2, 55, 75, 93, 16, 73];

/// An RGB image composited over the background, with its camera.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedImage {
    pub camera: CameraModel,
    /// Row-major, `width * height` entries in `[0, 1]`.
    pub rgb: Vec<[f32; 3]>,
    pub path: PathBuf,
}

impl PosedImage {
    pub fn new(camera: CameraModel, rgb: Vec<[f32; 3]>, path: PathBuf) -> Result<Self> {
        if rgb.len() != camera.width * camera.height {
            return Err(Error::dataset(
                &path,
                format!(
                    "{} pixels for a {}x{} camera",
                    rgb.len(),
                    camera.width,
                    camera.height
                ),
            ));
        }
        Ok(Self { camera, rgb, path })
    }

    pub fn pixel(&self, u: usize, v: usize) -> [f32; 3] {
        self.rgb[v * self.camera.width + u]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn transforms_file(self) -> String {
        format!("transforms_{}.json", self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub train: Vec<PosedImage>,
    pub val: Vec<PosedImage>,
    pub test: Vec<PosedImage>,
}

impl Scene {
    pub fn split(&self, s: Split) -> &[PosedImage] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub background: [f64; 3],
    /// Integer box-filter factor; 1 keeps full resolution.
    pub downscale: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            background: [1.0; 3],
            downscale: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct TransformsFile {
    pub camera_angle_x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    #[serde(default)]
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct FrameEntry {
    pub file_path: String,
    pub transform_matrix: [[f64; 4]; 4],
}

fn resolve_image_path(root: &Path, file_path: &str) -> PathBuf {
    let p = root.join(file_path.trim_start_matches("./"));
    if p.extension().is_some() {
        p
    } else {
        p.with_extension("png")
    }
}

fn load_frame(root: &Path, meta: &TransformsFile, frame: &FrameEntry, opts: &LoadOptions) -> Result<PosedImage> {
    let path = resolve_image_path(root, &frame.file_path);
    let img = image::open(&path)
        .map_err(|e| Error::dataset(&path, e.to_string()))?
        .to_rgba32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if meta.w.is_some_and(|mw| mw != w) || meta.h.is_some_and(|mh| mh != h) {
        return Err(Error::dataset(
            &path,
            format!("image is {w}x{h} but transforms declare {:?}x{:?}", meta.w, meta.h),
        ));
    }
    let d = opts.downscale.max(1);
    if w < d || h < d {
        return Err(Error::dataset(&path, format!("{w}x{h} image smaller than downscale {d}")));
    }
    let bg = opts.background;
    let raw = img.into_raw();
    let composite = |x: usize, y: usize| -> [f64; 3] {
        let p = &raw[(y * w + x) * 4..(y * w + x) * 4 + 4];
        let a = p[3] as f64;
        [0, 1, 2].map(|c| p[c] as f64 * a + bg[c] * (1.0 - a))
    };
    let (ow, oh) = (w / d, h / d);
    let norm = 1.0 / (d * d) as f64;
    let mut rgb = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = [0.0; 3];
            for dy in 0..d {
                for dx in 0..d {
                    let c = composite(x * d + dx, y * d + dy);
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
            }
            rgb.push(acc.map(|v| (v * norm).clamp(0.0, 1.0) as f32));
        }
    }
    let camera = CameraModel::new(ow, oh, meta.camera_angle_x, frame.transform_matrix)
        .map_err(|e| Error::dataset(&path, e.to_string()))?;
    PosedImage::new(camera, rgb, path)
}

/// Loads one split. A missing transforms file yields `Ok(None)`.
pub fn load_split(root: &Path, split: Split, opts: &LoadOptions) -> Result<Option<Vec<PosedImage>>> {
    let json = root.join(split.transforms_file());
    if !json.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&json).map_err(|e| Error::dataset(&json, e.to_string()))?;
    let meta: TransformsFile = serde_json::from_str(&text).map_err(|e| Error::dataset(&json, e.to_string()))?;
    let images = meta
        .frames
        .par_iter()
        .map(|f| load_frame(root, &meta, f, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(images))
}

/// Loads every split under `root`; `transforms_train.json` is required.
pub fn load_scene(root: &Path, opts: &LoadOptions) -> Result<Scene> {
    let train = load_split(root, Split::Train, opts)?.ok_or_else(|| {
        Error::dataset(root.join(Split::Train.transforms_file()), "missing training transforms")
    })?;
    Ok(Scene {
        train,
        val: load_split(root, Split::Val, opts)?.unwrap_or_default(),
        test: load_split(root, Split::Test, opts)?.unwrap_or_default(),
    })
}

/// Which views of a split to use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ViewSelection {
    #[default]
    All,
    /// Exactly these frame indices, in this order.
    Ids(Vec<usize>),
    /// A seeded, evenly spread subset of this size.
    Count(usize),
}

/// Frame indices chosen from `available` views.
pub fn select_views(available: usize, selection: &ViewSelection, seed: u64) -> Result<Vec<usize>> {
    match selection {
        ViewSelection::All => Ok((0..available).collect()),
        ViewSelection::Ids(ids) => {
            if let Some(&id) = ids.iter().find(|&&id| id >= available) {
                return Err(Error::UnknownView { id, available });
            }
            Ok(ids.clone())
        }
        &ViewSelection::Count(k) => {
            if k > available {
                return Err(Error::NotEnoughViews {
                    requested: k,
                    available,
                });
            }
            if k == 0 {
                return Ok(Vec::new());
            }
            let step = available as f64 / k as f64;
            let offset = ChaCha8Rng::seed_from_u64(seed).gen::<f64>() * step;
            Ok((0..k).map(|i| ((offset + i as f64 * step) as usize).min(available - 1)).collect())
        }
    }
}

/// The selected views and their indices.
pub fn few_shot_subset<I: Clone>(items: &[I], selection: &ViewSelection, seed: u64) -> Result<(Vec<I>, Vec<usize>)> {
    let ids = select_views(items.len(), selection, seed)?;
    Ok((ids.iter().map(|&i| items[i].clone()).collect(), ids))
}

/// Every pixel of every image as a training ray.
pub fn ray_bank<T: Scalar>(images: &[PosedImage], near: f64, far: f64) -> RayBank<T> {
    let mut rays = Vec::new();
    let mut colors = Vec::new();
    for img in images {
        rays.extend(img.camera.all_rays::<T>(near, far));
        colors.extend(img.rgb.iter().map(|c| c.map(|v| T::lit(v as f64))));
    }
    RayBank { rays, colors }
}
