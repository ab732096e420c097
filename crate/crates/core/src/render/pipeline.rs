use rayon::prelude::*;

use super::composite::{composite, composite_backward};
use super::sampling::{ray_seed, sample_ray, SampleSet};
use super::{Ray, RenderSettings};
use crate::decoder::DecoderScratch;
use crate::grid::Stencil;
use crate::mask::{encode_backward, encode_into};
use crate::math::along;
use crate::model::{Masks, Model, ModelGrads};
use crate::scalar::Scalar;

/// Per-ray forward state kept for the backward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RayTrace<T> {
    pub samples: SampleSet<T>,
    /// Masked pre-activation density per sample.
    pub raw: Vec<T>,
    pub sigma: Vec<T>,
    pub weights: Vec<T>,
    pub colors: Vec<[T; 3]>,
    /// Whether the appearance branch ran for the sample.
    pub active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRender<T> {
    pub colors: Vec<[T; 3]>,
    pub opacity: Vec<T>,
    /// Mean near-region density over the batch.
    pub occlusion: T,
    pub traces: Vec<RayTrace<T>>,
}

struct Workspace<T> {
    dcomp: Vec<T>,
    acomp: Vec<T>,
    feat: Vec<T>,
    enc_in: Vec<T>,
    enc: Vec<T>,
    dec: DecoderScratch<T>,
    d_enc: Vec<T>,
    d_enc_in: Vec<T>,
    d_buf: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    fn new(model: &Model<T>) -> Self {
        let p = model.appearance.feature_dim();
        let enc_len = model.decoder.input_dim();
        Self {
            dcomp: vec![T::zero(); model.density.n_components()],
            acomp: vec![T::zero(); model.appearance.n_components()],
            feat: vec![T::zero(); p],
            enc_in: vec![T::zero(); p + 3],
            enc: vec![T::zero(); enc_len],
            dec: model.decoder.scratch(),
            d_enc: vec![T::zero(); enc_len],
            d_enc_in: vec![T::zero(); p + 3],
            d_buf: vec![T::zero(); model.appearance.n_components().max(model.density.n_components())],
        }
    }
}

struct Ctx<'a, T> {
    model: &'a Model<T>,
    masks: &'a Masks<T>,
    settings: &'a RenderSettings,
    background: [T; 3],
    threshold: T,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    fn new(model: &'a Model<T>, masks: &'a Masks<T>, settings: &'a RenderSettings) -> Self {
        Self {
            model,
            masks,
            settings,
            background: settings.background(),
            threshold: T::lit(settings.weight_threshold),
        }
    }

    /// Features, masked encoding and decoder forward for one point.
    fn shade(&self, st: &Stencil<T>, dir: [T; 3], ws: &mut Workspace<T>) -> [T; 3] {
        let m = self.model;
        m.appearance.features_at(st, &mut ws.acomp, &mut ws.feat);
        let p = ws.feat.len();
        ws.enc_in[..p].copy_from_slice(&ws.feat);
        if let Some(mask) = &self.masks.appearance {
            for (v, a) in ws.enc_in[..p].iter_mut().zip(mask.as_slice()) {
                *v *= *a;
            }
        }
        ws.enc_in[p..].copy_from_slice(&dir);
        encode_into(&ws.enc_in, m.pe_freqs, self.masks.encoding.as_ref().map(|v| v.as_slice()), &mut ws.enc);
        m.decoder.forward(&ws.enc, &mut ws.dec)
    }

    fn trace(&self, ray: &Ray<T>, seed: Option<u64>, ws: &mut Workspace<T>) -> ([T; 3], T, RayTrace<T>) {
        let m = self.model;
        let geometry = &m.density.geometry;
        let samples = sample_ray(ray, Some(&geometry.aabb), self.settings.n_samples, seed);
        let n = samples.len();
        let dmask = self.masks.density.as_ref().map(|v| v.as_slice());

        let mut raw = Vec::with_capacity(n);
        let mut sigma = Vec::with_capacity(n);
        for &t in &samples.t {
            let st = geometry.stencil_clamped(along(ray.origin, ray.direction, t));
            let r = m.density.raw_at(&st, dmask, &mut ws.dcomp);
            raw.push(r);
            sigma.push(m.density.activation.apply(r));
        }

        let mut weights = Vec::with_capacity(n);
        let mut trans = T::one();
        for i in 0..n {
            let keep = (-sigma[i] * samples.delta[i]).exp();
            weights.push(trans * (T::one() - keep));
            trans *= keep;
        }

        let mut colors = vec![[T::zero(); 3]; n];
        let mut active = vec![false; n];
        for i in 0..n {
            if weights[i] >= self.threshold {
                let st = geometry.stencil_clamped(along(ray.origin, ray.direction, samples.t[i]));
                colors[i] = self.shade(&st, ray.direction, ws);
                active[i] = true;
            }
        }

        let c = composite(&sigma, &samples.delta, &colors, self.background);
        let trace = RayTrace {
            samples,
            raw,
            sigma,
            weights: c.weights,
            colors,
            active,
        };
        (c.rgb, c.opacity, trace)
    }

    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        ray: &Ray<T>,
        trace: &RayTrace<T>,
        d_rgb: [T; 3],
        d_occ: T,
        k: usize,
        grads: &mut ModelGrads<T>,
        ws: &mut Workspace<T>,
    ) {
        let m = self.model;
        let n = trace.samples.len();
        if n == 0 {
            return;
        }
        let mut d_sigma = vec![T::zero(); n];
        let mut d_colors = vec![[T::zero(); 3]; n];
        composite_backward(
            &trace.sigma,
            &trace.samples.delta,
            &trace.colors,
            &trace.weights,
            self.background,
            d_rgb,
            &mut d_sigma,
            &mut d_colors,
        );
        if d_occ != T::zero() {
            let kk = k.min(n);
            let share = d_occ / T::from_usize_lossy(kk);
            for d in &mut d_sigma[..kk] {
                *d += share;
            }
        }

        let geometry = &m.density.geometry;
        let dmask = self.masks.density.as_ref().map(|v| v.as_slice());
        let emask = self.masks.encoding.as_ref().map(|v| v.as_slice());
        let p = m.appearance.feature_dim();
        for i in 0..n {
            let st = geometry.stencil_clamped(along(ray.origin, ray.direction, trace.samples.t[i]));
            if trace.active[i] && d_colors[i] != [T::zero(); 3] {
                self.shade(&st, ray.direction, ws);
                m.decoder.backward(&mut ws.dec, d_colors[i], &mut grads.decoder, &mut ws.d_enc);
                encode_backward(&ws.enc_in, m.pe_freqs, emask, &ws.d_enc, &mut ws.d_enc_in);
                let d_feat = &mut ws.d_enc_in[..p];
                if let Some(mask) = &self.masks.appearance {
                    for (d, a) in d_feat.iter_mut().zip(mask.as_slice()) {
                        *d *= *a;
                    }
                }
                let nc = m.appearance.n_components();
                m.appearance.backward_at(
                    &st,
                    &ws.acomp,
                    &ws.d_enc_in[..p],
                    &mut grads.appearance,
                    &mut grads.basis,
                    &mut ws.d_buf[..nc],
                );
            }
            let d_raw = d_sigma[i] * m.density.activation.derivative(trace.raw[i]);
            if d_raw != T::zero() {
                let nc = m.density.n_components();
                m.density.backward_raw_at(&st, d_raw, dmask, &mut grads.density, &mut ws.d_buf[..nc]);
            }
        }
    }
}

/// Renders a batch of rays, keeping per-ray traces for [`backward_batch`].
///
/// `jitter` seeds stratified jitter (per ray, derived from the ray's position in
/// the batch); `None` places samples at stratum midpoints.
pub fn render_batch<T: Scalar>(
    model: &Model<T>,
    masks: &Masks<T>,
    rays: &[Ray<T>],
    settings: &RenderSettings,
    jitter: Option<u64>,
) -> BatchRender<T> {
    let ctx = Ctx::new(model, masks, settings);
    let chunk = settings.chunk_rays.max(1);
    let parts: Vec<Vec<([T; 3], T, RayTrace<T>)>> = rays
        .par_chunks(chunk)
        .enumerate()
        .map(|(ci, rs)| {
            let mut ws = Workspace::new(model);
            rs.iter()
                .enumerate()
                .map(|(j, r)| {
                    let seed = jitter.map(|s| ray_seed(s, 0, (ci * chunk + j) as u64));
                    ctx.trace(r, seed, &mut ws)
                })
                .collect()
        })
        .collect();

    let mut colors = Vec::with_capacity(rays.len());
    let mut opacity = Vec::with_capacity(rays.len());
    let mut traces = Vec::with_capacity(rays.len());
    for (c, o, t) in parts.into_iter().flatten() {
        colors.push(c);
        opacity.push(o);
        traces.push(t);
    }
    let sig: Vec<&[T]> = traces.iter().map(|t| t.sigma.as_slice()).collect();
    let occlusion = super::composite::occlusion_loss(&sig, settings.occlusion_k());
    BatchRender {
        colors,
        opacity,
        occlusion,
        traces,
    }
}

/// Colors and opacities only, for evaluation.
pub fn render_colors<T: Scalar>(
    model: &Model<T>,
    masks: &Masks<T>,
    rays: &[Ray<T>],
    settings: &RenderSettings,
) -> (Vec<[T; 3]>, Vec<T>) {
    let ctx = Ctx::new(model, masks, settings);
    let parts: Vec<Vec<([T; 3], T)>> = rays
        .par_chunks(settings.chunk_rays.max(1))
        .map(|rs| {
            let mut ws = Workspace::new(model);
            rs.iter()
                .map(|r| {
                    let (c, o, _) = ctx.trace(r, None, &mut ws);
                    (c, o)
                })
                .collect()
        })
        .collect();
    parts.into_iter().flatten().unzip()
}

/// Gradients of `sum_i d_colors[i] · color_i + d_occlusion * occlusion` with
/// respect to every model parameter.
///
/// Per-chunk buffers are summed in chunk order, so the result is independent
/// of the worker count.
pub fn backward_batch<T: Scalar>(
    model: &Model<T>,
    masks: &Masks<T>,
    rays: &[Ray<T>],
    render: &BatchRender<T>,
    d_colors: &[[T; 3]],
    d_occlusion: T,
    settings: &RenderSettings,
) -> ModelGrads<T> {
    assert_eq!(rays.len(), render.traces.len());
    assert_eq!(rays.len(), d_colors.len());
    let ctx = Ctx::new(model, masks, settings);
    let k = settings.occlusion_k();
    let occ_rays = render.traces.iter().filter(|t| !t.samples.is_empty()).count();
    let d_occ_ray = if occ_rays == 0 {
        T::zero()
    } else {
        d_occlusion / T::from_usize_lossy(occ_rays)
    };
    let chunk = settings.chunk_rays.max(1);
    let parts: Vec<ModelGrads<T>> = rays
        .par_chunks(chunk)
        .zip(render.traces.par_chunks(chunk))
        .zip(d_colors.par_chunks(chunk))
        .map(|((rs, ts), ds)| {
            let mut ws = Workspace::new(model);
            let mut g = ModelGrads::zeros_like(model);
            for ((r, t), d) in rs.iter().zip(ts).zip(ds) {
                ctx.backward(r, t, *d, d_occ_ray, k, &mut g, &mut ws);
            }
            g
        })
        .collect();
    let mut iter = parts.into_iter();
    let mut total = iter.next().unwrap_or_else(|| ModelGrads::zeros_like(model));
    for g in iter {
        total.add_assign(&g);
    }
    total
}
