//! The complete radiance field: density grid, appearance grid and decoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::Decoder;
use crate::error::{Error, Result};
use crate::grid::{
    ActivationKind, DensityActivation, Factorization, FactorizedAppearanceGrid,
    FactorizedDensityGrid, GridGeometry,
};
use crate::mask::{encoding_len, MaskSchedule, MaskVector};
use crate::math::cast3;
use crate::scalar::Scalar;

/// Shape and initialization of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub resolution: [usize; 3],
    pub aabb_min: [f64; 3],
    pub aabb_max: [f64; 3],
    pub factorization: Factorization,
    pub density_rank: usize,
    pub appearance_rank: usize,
    /// Appearance feature length `P`.
    pub feature_dim: usize,
    pub activation: ActivationKind,
    /// Added to the raw factor sum before the activation.
    pub density_shift: f64,
    pub density_init_scale: f64,
    pub appearance_init_scale: f64,
    pub decoder_hidden: Vec<usize>,
    /// Octaves of the sin/cos encoding of (features, direction).
    pub pe_freqs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            resolution: [64; 3],
            aabb_min: [-1.5; 3],
            aabb_max: [1.5; 3],
            factorization: Factorization::Vm,
            density_rank: 8,
            appearance_rank: 16,
            feature_dim: 27,
            activation: ActivationKind::Softplus,
            density_shift: -2.0,
            density_init_scale: 0.1,
            appearance_init_scale: 0.1,
            decoder_hidden: vec![128, 128],
            pe_freqs: 2,
        }
    }
}

impl ModelConfig {
    pub fn decoder_widths(&self) -> Vec<usize> {
        let dim = self.feature_dim + 3;
        let mut w = vec![dim + encoding_len(dim, self.pe_freqs)];
        w.extend_from_slice(&self.decoder_hidden);
        w.push(3);
        w
    }
}

/// Which of the four parameter groups a buffer belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    DensityFactors,
    AppearanceFactors,
    Basis,
    Decoder,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [
        ParamGroup::DensityFactors,
        ParamGroup::AppearanceFactors,
        ParamGroup::Basis,
        ParamGroup::Decoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::DensityFactors => "density_factors",
            ParamGroup::AppearanceFactors => "appearance_factors",
            ParamGroup::Basis => "appearance_basis",
            ParamGroup::Decoder => "decoder",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub density: FactorizedDensityGrid<T>,
    pub appearance: FactorizedAppearanceGrid<T>,
    pub decoder: Decoder<T>,
    pub pe_freqs: usize,
}

impl<T: Scalar> Model<T> {
    /// Seeded random initialization.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let geometry = GridGeometry::new(cfg.resolution, cast3(cfg.aabb_min), cast3(cfg.aabb_max))?;
        if cfg.density_rank == 0 || cfg.appearance_rank == 0 {
            return Err(Error::Config("ranks must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let activation = match cfg.activation {
            ActivationKind::Softplus => DensityActivation::softplus(T::lit(cfg.density_shift)),
            ActivationKind::Relu => DensityActivation {
                kind: ActivationKind::Relu,
                shift: T::lit(cfg.density_shift),
            },
        };
        let density = FactorizedDensityGrid::random(
            geometry,
            cfg.factorization,
            cfg.density_rank,
            cfg.density_init_scale,
            activation,
            &mut rng,
        );
        let appearance = FactorizedAppearanceGrid::random(
            geometry,
            cfg.factorization,
            cfg.appearance_rank,
            cfg.feature_dim,
            cfg.appearance_init_scale,
            &mut rng,
        )?;
        let decoder = Decoder::random(cfg.decoder_widths(), &mut rng)?;
        Self::new(density, appearance, decoder, cfg.pe_freqs)
    }

    pub fn new(
        density: FactorizedDensityGrid<T>,
        appearance: FactorizedAppearanceGrid<T>,
        decoder: Decoder<T>,
        pe_freqs: usize,
    ) -> Result<Self> {
        let dim = appearance.feature_dim() + 3;
        let expected = dim + encoding_len(dim, pe_freqs);
        if decoder.input_dim() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: decoder.input_dim(),
            });
        }
        Ok(Self {
            density,
            appearance,
            decoder,
            pe_freqs,
        })
    }

    /// Length of the (features, direction) vector fed to the encoder.
    pub fn encoder_input_dim(&self) -> usize {
        self.appearance.feature_dim() + 3
    }

    pub fn encoding_mask_len(&self) -> usize {
        encoding_len(self.encoder_input_dim(), self.pe_freqs)
    }

    pub fn group(&self, g: ParamGroup) -> &[T] {
        match g {
            ParamGroup::DensityFactors => self.density.factors.params(),
            ParamGroup::AppearanceFactors => self.appearance.factors.params(),
            ParamGroup::Basis => &self.appearance.basis,
            ParamGroup::Decoder => self.decoder.params(),
        }
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [T] {
        match g {
            ParamGroup::DensityFactors => self.density.factors.params_mut(),
            ParamGroup::AppearanceFactors => self.appearance.factors.params_mut(),
            ParamGroup::Basis => &mut self.appearance.basis,
            ParamGroup::Decoder => self.decoder.params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        ParamGroup::ALL.iter().map(|&g| self.group(g).len()).sum()
    }

    pub fn upsample(&self, resolution: [usize; 3]) -> Result<Self> {
        Ok(Self {
            density: self.density.upsample(resolution)?,
            appearance: self.appearance.upsample(resolution)?,
            decoder: self.decoder.clone(),
            pe_freqs: self.pe_freqs,
        })
    }
}

/// Gradient buffers mirroring the model's parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T> {
    pub density: Vec<T>,
    pub appearance: Vec<T>,
    pub basis: Vec<T>,
    pub decoder: Vec<T>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        Self {
            density: vec![T::zero(); model.density.factors.params().len()],
            appearance: vec![T::zero(); model.appearance.factors.params().len()],
            basis: vec![T::zero(); model.appearance.basis.len()],
            decoder: vec![T::zero(); model.decoder.params().len()],
        }
    }

    pub fn group(&self, g: ParamGroup) -> &[T] {
        match g {
            ParamGroup::DensityFactors => &self.density,
            ParamGroup::AppearanceFactors => &self.appearance,
            ParamGroup::Basis => &self.basis,
            ParamGroup::Decoder => &self.decoder,
        }
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [T] {
        match g {
            ParamGroup::DensityFactors => &mut self.density,
            ParamGroup::AppearanceFactors => &mut self.appearance,
            ParamGroup::Basis => &mut self.basis,
            ParamGroup::Decoder => &mut self.decoder,
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for g in ParamGroup::ALL {
            for (a, b) in self.group_mut(g).iter_mut().zip(other.group(g)) {
                *a += *b;
            }
        }
    }
}

/// Mask schedules for the three masked vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSchedules {
    /// Over density components (rank-major).
    pub density: MaskSchedule,
    /// Over the appearance feature vector.
    pub appearance: MaskSchedule,
    /// Over the sin/cos block of the (features, direction) encoding.
    pub encoding: MaskSchedule,
}

impl MaskSchedules {
    pub fn validate(&self) -> Result<()> {
        self.density.validate()?;
        self.appearance.validate()?;
        self.encoding.validate()
    }
}

/// Masks in effect for one forward pass; `None` means unmasked.
#[derive(Debug, Clone, PartialEq)]
pub struct Masks<T> {
    pub density: Option<MaskVector<T>>,
    pub appearance: Option<MaskVector<T>>,
    pub encoding: Option<MaskVector<T>>,
}

impl<T: Scalar> Masks<T> {
    pub fn none() -> Self {
        Self {
            density: None,
            appearance: None,
            encoding: None,
        }
    }

    /// All-ones masks of the right lengths; numerically a no-op.
    pub fn ones(model: &Model<T>) -> Self {
        Self {
            density: Some(MaskVector::ones(model.density.n_components())),
            appearance: Some(MaskVector::ones(model.appearance.feature_dim())),
            encoding: Some(MaskVector::ones(model.encoding_mask_len())),
        }
    }

    pub fn at(schedules: &MaskSchedules, t: u64, iterations: u64, model: &Model<T>) -> Self {
        Self {
            density: schedules.density.mask(t, iterations, model.density.n_components()),
            appearance: schedules.appearance.mask(t, iterations, model.appearance.feature_dim()),
            encoding: schedules.encoding.mask(t, iterations, model.encoding_mask_len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_shapes() {
        let cfg = ModelConfig {
            resolution: [8; 3],
            ..ModelConfig::default()
        };
        let m = Model::<f32>::init(&cfg, 0).unwrap();
        assert_eq!(m.density.n_components(), 24);
        assert_eq!(m.appearance.n_components(), 48);
        assert_eq!(m.decoder.widths(), &[150, 128, 128, 3]);
        assert_eq!(m.encoding_mask_len(), 120);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig {
            resolution: [5; 3],
            decoder_hidden: vec![8],
            ..ModelConfig::default()
        };
        assert_eq!(Model::<f32>::init(&cfg, 3).unwrap(), Model::<f32>::init(&cfg, 3).unwrap());
        assert_ne!(Model::<f32>::init(&cfg, 3).unwrap(), Model::<f32>::init(&cfg, 4).unwrap());
    }

    #[test]
    fn masks_off_after_horizon() {
        let cfg = ModelConfig {
            resolution: [4; 3],
            decoder_hidden: vec![8],
            ..ModelConfig::default()
        };
        let m = Model::<f64>::init(&cfg, 0).unwrap();
        let s = MaskSchedules {
            density: MaskSchedule::Dynamic { total_reg_iters: Some(10) },
            appearance: MaskSchedule::Off,
            encoding: MaskSchedule::Dynamic { total_reg_iters: Some(10) },
        };
        let early = Masks::at(&s, 2, 100, &m);
        assert_eq!(early.density.as_ref().unwrap().len(), 24);
        assert!(early.appearance.is_none());
        assert_eq!(Masks::at(&s, 10, 100, &m), Masks::none());
    }
}
