//! Held-out view rendering, PSNR reports and mesh export.

mod mesh;

use std::io::Cursor;
use std::path::Path;
use std::time::Instant;

use image::{ImageBuffer, ImageFormat, Rgb};
use serde::{Deserialize, Serialize, Serializer};

use crate::dataset::PosedImage;
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::model::{Masks, Model};
use crate::render::{render_colors, RenderSettings};
use crate::scalar::Scalar;

pub use mesh::{export_mesh, sample_field, DensityField, TriangleMesh};

fn mse_f64<T: Scalar>(pred: &[[T; 3]], gt: &[[T; 3]], quantize: bool) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let q = |v: T| {
        let v = v.as_f64();
        if quantize {
            (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
        } else {
            v
        }
    };
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .flat_map(|(p, g)| (0..3).map(move |c| (q(p[c]) - q(g[c])).powi(2)))
        .sum();
    Ok(sum / (3 * pred.len()) as f64)
}

/// `10 log10(peak^2 / mse)` over all pixels and channels; identical images
/// give `f64::INFINITY`.
pub fn psnr<T: Scalar>(pred: &[[T; 3]], gt: &[[T; 3]], peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse_f64(pred, gt, false)?, peak))
}

/// PSNR after rounding both images to 8 bits, for comparison with numbers
/// computed on saved PNGs.
pub fn psnr_quantized<T: Scalar>(pred: &[[T; 3]], gt: &[[T; 3]]) -> Result<f64> {
    Ok(psnr_from_mse(mse_f64(pred, gt, true)?, 1.0))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViewScore {
    pub view: usize,
    /// `null` in JSON when infinite.
    #[serde(serialize_with = "finite_or_null")]
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub views: Vec<ViewScore>,
    #[serde(serialize_with = "finite_or_null")]
    pub mean_psnr: f64,
    pub train_seconds: Option<f64>,
    pub render_seconds: f64,
    pub config_hash: String,
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn format_psnr(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "inf".to_string()
    }
}

impl EvalReport {
    pub fn from_scores(views: Vec<ViewScore>, config_hash: String) -> Self {
        let values: Vec<f64> = views.iter().map(|v| v.psnr).collect();
        Self {
            mean_psnr: mean(&values),
            views,
            train_seconds: None,
            render_seconds: 0.0,
            config_hash,
        }
    }

    /// `view,psnr` rows; contains no timing so reruns compare byte-for-byte.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("view,psnr\n");
        for v in &self.views {
            s.push_str(&format!("{},{}\n", v.view, format_psnr(v.psnr)));
        }
        s
    }

    /// Writes `report.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        atomic_write(&dir.join("report.csv"), self.to_csv().as_bytes())?;
        atomic_write(&dir.join("report.json"), &serde_json::to_vec_pretty(self)?)
    }
}

/// Encodes an RGB float image as an 8-bit PNG.
pub fn encode_png<T: Scalar>(rgb: &[[T; 3]], width: usize, height: usize) -> Result<Vec<u8>> {
    let data: Vec<u8> = rgb
        .iter()
        .flat_map(|c| c.map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(width as u32, height as u32, data)
        .ok_or(Error::LengthMismatch {
            expected: width * height,
            actual: rgb.len(),
        })?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Evaluation-time inputs that do not come from the model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// Report PSNR on 8-bit quantized images instead of floats.
    pub quantized_psnr: bool,
    /// Write `test_{view:03}.png` renders next to the report.
    pub save_images: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            quantized_psnr: false,
            save_images: true,
        }
    }
}

/// Renders every `(view id, image)` unmasked and without jitter, scores it
/// against the ground truth and optionally writes the renders to `out_dir`.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    views: &[(usize, &PosedImage)],
    settings: &RenderSettings,
    options: &EvalOptions,
    config_hash: &str,
    out_dir: Option<&Path>,
) -> Result<EvalReport> {
    let start = Instant::now();
    let masks = Masks::none();
    let mut scores = Vec::with_capacity(views.len());
    for &(id, img) in views {
        let rays = img.camera.all_rays::<T>(settings.near, settings.far);
        let (pred, _) = render_colors(model, &masks, &rays, settings);
        let gt: Vec<[T; 3]> = img.rgb.iter().map(|c| c.map(|v| T::lit(v as f64))).collect();
        let p = if options.quantized_psnr {
            psnr_quantized(&pred, &gt)?
        } else {
            psnr(&pred, &gt, 1.0)?
        };
        log::info!("view {id}: psnr {p:.3}");
        scores.push(ViewScore { view: id, psnr: p });
        if let (Some(dir), true) = (out_dir, options.save_images) {
            let png = encode_png(&pred, img.camera.width, img.camera.height)?;
            atomic_write(&dir.join(format!("test_{id:03}.png")), &png)?;
        }
    }
    let mut report = EvalReport::from_scores(scores, config_hash.to_string());
    report.render_seconds = start.elapsed().as_secs_f64();
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok(report)
}
