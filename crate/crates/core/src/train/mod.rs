//! Optimization loop: batch sampling, loss, backward pass and Adam updates.
//!
//! Batches and jitter are derived from `(seed, iteration)`, so a run resumed
//! from a checkpoint at iteration `t` continues exactly as the original would.

mod adam;
mod loss;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskSchedule;
use crate::model::{MaskSchedules, Masks, Model, ModelGrads, ParamGroup};
use crate::render::{backward_batch, ray_seed, render_batch, Ray, RenderSettings};
use crate::scalar::Scalar;

pub use adam::{adam_step, AdamConfig, AdamState, Moments};
pub use loss::{add_l1_grad, mean_abs, mse, mse_grad, total_loss, LossBreakdown};

/// Grid resolution change at a given iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsampleStep {
    pub iteration: u64,
    pub resolution: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Seeds model initialization, batch sampling and jitter.
    pub seed: u64,
    pub iterations: u64,
    pub ray_batch_size: usize,
    /// Learning rate of both factor grids.
    pub lr_grid: f64,
    /// Learning rate of the decoder and the appearance basis.
    pub lr_decoder: f64,
    /// Both rates decay exponentially to this fraction at the last iteration;
    /// `None` keeps them constant.
    pub lr_decay_target: Option<f64>,
    pub adam: AdamConfig,
    pub lambda_occ: f64,
    pub lambda_l1: f64,
    pub masks: MaskSchedules,
    pub upsample: Vec<UpsampleStep>,
    /// Checkpoint cadence in iterations; `None` disables periodic checkpoints.
    pub checkpoint_every: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let dynamic = MaskSchedule::Dynamic {
            total_reg_iters: None,
        };
        Self {
            seed: 0,
            iterations: 15_000,
            ray_batch_size: 1024,
            lr_grid: 0.02,
            lr_decoder: 1e-3,
            lr_decay_target: Some(0.1),
            adam: AdamConfig::default(),
            lambda_occ: 0.01,
            lambda_l1: 1e-4,
            masks: MaskSchedules {
                density: dynamic,
                appearance: dynamic,
                encoding: dynamic,
            },
            upsample: Vec::new(),
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    /// Same settings with every mask off and no occlusion penalty.
    pub fn baseline(&self) -> Self {
        Self {
            lambda_occ: 0.0,
            masks: MaskSchedules::default(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.ray_batch_size == 0 {
            return Err(Error::Config("ray_batch_size must be positive".into()));
        }
        for (name, v) in [
            ("lr_grid", self.lr_grid),
            ("lr_decoder", self.lr_decoder),
            ("lr_decay_target", self.lr_decay_target.unwrap_or(1.0)),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("lambda_occ", self.lambda_occ), ("lambda_l1", self.lambda_l1)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        let mut last = None;
        for s in &self.upsample {
            if last.is_some_and(|l| s.iteration <= l) {
                return Err(Error::Config("upsample steps must have increasing iterations".into()));
            }
            last = Some(s.iteration);
        }
        self.masks.validate()
    }

    /// `(grid, decoder)` learning rates at iteration `t`.
    pub fn learning_rates(&self, t: u64) -> (f64, f64) {
        let f = match self.lr_decay_target {
            Some(d) => d.powf(t as f64 / self.iterations.max(1) as f64),
            None => 1.0,
        };
        (self.lr_grid * f, self.lr_decoder * f)
    }
}

/// Training rays with their ground-truth colors.
#[derive(Debug, Clone, PartialEq)]
pub struct RayBank<T> {
    pub rays: Vec<Ray<T>>,
    pub colors: Vec<[T; 3]>,
}

impl<T: Scalar> RayBank<T> {
    pub fn new(rays: Vec<Ray<T>>, colors: Vec<[T; 3]>) -> Result<Self> {
        if rays.len() != colors.len() {
            return Err(Error::LengthMismatch {
                expected: rays.len(),
                actual: colors.len(),
            });
        }
        Ok(Self { rays, colors })
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    /// Batch indices for iteration `t`, uniform with replacement.
    pub fn batch_indices(&self, seed: u64, t: u64, size: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(ray_seed(seed, t, u64::MAX));
        (0..size).map(|_| rng.gen_range(0..self.len())).collect()
    }
}

/// Everything needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub model: Model<T>,
    pub adam: AdamState<T>,
    /// Iterations completed.
    pub t: u64,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model: Model<T>) -> Self {
        let adam = AdamState::zeros_like(&model);
        Self { model, adam, t: 0 }
    }
}

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iter: u64,
    pub loss: LossBreakdown,
    pub lr_grid: f64,
    pub lr_decoder: f64,
    /// Wall time since the trainer started.
    pub seconds: f64,
}

pub const LOSS_CSV_HEADER: &str = "iter,mse,occ,l1,total,lr_grid,lr_mlp,seconds";

pub fn loss_csv(records: &[LossRecord]) -> String {
    let mut s = String::from(LOSS_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3}\n",
            r.iter, r.loss.mse, r.loss.occ, r.loss.l1, r.loss.total, r.lr_grid, r.lr_decoder, r.seconds
        ));
    }
    s
}

/// Steps a [`TrainState`] over a [`RayBank`].
pub struct Trainer<'a, T> {
    config: &'a TrainConfig,
    render: &'a RenderSettings,
    data: &'a RayBank<T>,
    seed: u64,
    state: TrainState<T>,
    started: Instant,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(
        config: &'a TrainConfig,
        render: &'a RenderSettings,
        data: &'a RayBank<T>,
        state: TrainState<T>,
    ) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::Config("no training rays".into()));
        }
        if !state.adam.matches(&state.model) {
            return Err(Error::Config("optimizer state does not match the model".into()));
        }
        Ok(Self {
            config,
            render,
            data,
            seed: config.seed,
            state,
            started: Instant::now(),
        })
    }

    pub fn state(&self) -> &TrainState<T> {
        &self.state
    }

    pub fn into_state(self) -> TrainState<T> {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.config.iterations
    }

    /// Masks the schedules give at the current iteration.
    pub fn masks(&self) -> Masks<T> {
        Masks::at(&self.config.masks, self.state.t, self.config.iterations, &self.state.model)
    }

    fn apply_upsample(&mut self) -> Result<()> {
        let t = self.state.t;
        if let Some(step) = self.config.upsample.iter().find(|s| s.iteration == t) {
            log::info!("iteration {t}: upsampling grids to {:?}", step.resolution);
            self.state.model = self.state.model.upsample(step.resolution)?;
            for g in [ParamGroup::DensityFactors, ParamGroup::AppearanceFactors] {
                *self.state.adam.group_mut(g) = Moments::zeros(self.state.model.group(g).len());
            }
        }
        Ok(())
    }

    /// Runs one iteration and returns its log row.
    pub fn step(&mut self) -> Result<LossRecord> {
        self.apply_upsample()?;
        let t = self.state.t;
        let cfg = self.config;
        let masks = self.masks();
        let idx = self.data.batch_indices(self.seed, t, cfg.ray_batch_size);
        let rays: Vec<Ray<T>> = idx.iter().map(|&i| self.data.rays[i]).collect();
        let gt: Vec<[T; 3]> = idx.iter().map(|&i| self.data.colors[i]).collect();
        let model = &self.state.model;

        let jitter = self.render.jitter.then(|| ray_seed(self.seed, t, u64::MAX - 1));
        let out = render_batch(model, &masks, &rays, self.render, jitter);
        let density_params = model.group(ParamGroup::DensityFactors);
        let loss = total_loss(&out.colors, &gt, out.occlusion, density_params, cfg.lambda_occ, cfg.lambda_l1);
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: t });
        }

        let d_colors = mse_grad(&out.colors, &gt);
        let mut grads: ModelGrads<T> =
            backward_batch(model, &masks, &rays, &out, &d_colors, T::lit(cfg.lambda_occ), self.render);
        add_l1_grad(density_params, cfg.lambda_l1, &mut grads.density);

        let (lr_grid, lr_decoder) = cfg.learning_rates(t);
        self.state.adam.step(
            &mut self.state.model,
            &grads,
            |g| match g {
                ParamGroup::DensityFactors | ParamGroup::AppearanceFactors => lr_grid,
                ParamGroup::Basis | ParamGroup::Decoder => lr_decoder,
            },
            &cfg.adam,
        )?;
        self.state.t = t + 1;
        Ok(LossRecord {
            iter: t,
            loss,
            lr_grid,
            lr_decoder,
            seconds: self.started.elapsed().as_secs_f64(),
        })
    }

    /// Runs to the configured iteration count, appending to `log`.
    /// `on_checkpoint` is called at the checkpoint cadence and once at the end;
    /// rows logged before a failure stay in `log`.
    pub fn run(
        &mut self,
        log: &mut Vec<LossRecord>,
        mut on_checkpoint: impl FnMut(&TrainState<T>) -> Result<()>,
    ) -> Result<()> {
        while !self.is_done() {
            let rec = self.step()?;
            if rec.iter % 100 == 0 {
                log::info!("iter {} loss {:.6} mse {:.6}", rec.iter, rec.loss.total, rec.loss.mse);
            }
            log.push(rec);
            if let Some(every) = self.config.checkpoint_every {
                if self.state.t % every == 0 && !self.is_done() {
                    on_checkpoint(&self.state)?;
                }
            }
        }
        on_checkpoint(&self.state)
    }
}

/// Trains `state` to completion without checkpoints.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    render: &RenderSettings,
    data: &RayBank<T>,
    state: TrainState<T>,
) -> Result<(TrainState<T>, Vec<LossRecord>)> {
    let mut trainer = Trainer::new(config, render, data, state)?;
    let mut log = Vec::new();
    trainer.run(&mut log, |_| Ok(()))?;
    Ok((trainer.into_state(), log))
}
