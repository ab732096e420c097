//! Binary checkpoint format.
//!
//! Little-endian throughout; every float is stored as `f32`.
//!
//! | bytes | field |
//! |---|---|
//! | 4 | magic `FEWT` |
//! | 4 | `u32` format version |
//! | 1 | factorization: 0 = VM, 1 = CP |
//! | 1 | density activation: 0 = softplus, 1 = relu |
//! | 1 | flags: bit 0 = optimizer state present |
//! | 1 | reserved, 0 |
//! | 12 | `u32` x3 grid resolution |
//! | 24 | `f32` x6 aabb min xyz, max xyz |
//! | 16 | `u32` density rank, appearance rank, feature dim, encoding frequencies |
//! | 4 | `f32` density shift |
//! | 4 + 4W | `u32` decoder layer count W, then W widths |
//! | 8 | `u64` iteration counter |
//!
//! Then, with lengths implied by the header: density factors, appearance
//! factors (modes X, Y, Z; rank-major; line then plane per VM component),
//! appearance basis (components x features, row-major), decoder parameters
//! (per layer, input-major weights then biases). If the optimizer flag is set,
//! each group in the same order follows as `u64` step count, first moments,
//! second moments.

use std::path::Path;

use crate::decoder::Decoder;
use crate::error::{Error, Result};
use crate::grid::{
    ActivationKind, DensityActivation, FactorSet, Factorization, FactorizedAppearanceGrid, FactorizedDensityGrid,
    GridGeometry,
};
use crate::io::atomic_write;
use crate::math::cast3;
use crate::model::{Model, ParamGroup};
use crate::scalar::Scalar;
use crate::train::{AdamState, Moments, TrainState};

pub const MAGIC: &[u8; 4] = b"FEWT";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32<T: Scalar>(&mut self, v: T) {
        self.0.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    fn floats<T: Scalar>(&mut self, vs: &[T]) {
        self.0.reserve(4 * vs.len());
        for &v in vs {
            self.f32(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn floats<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect())
    }
}

/// Serializes a model and, optionally, its optimizer state.
pub fn encode<T: Scalar>(model: &Model<T>, adam: Option<&AdamState<T>>, t: u64) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    w.u8(match model.density.factors.kind() {
        Factorization::Vm => 0,
        Factorization::Cp => 1,
    });
    w.u8(match model.density.activation.kind {
        ActivationKind::Softplus => 0,
        ActivationKind::Relu => 1,
    });
    w.u8(u8::from(adam.is_some()));
    w.u8(0);
    let geo = &model.density.geometry;
    for n in geo.resolution {
        w.u32(n);
    }
    for v in geo.aabb.min.iter().chain(&geo.aabb.max) {
        w.f32(*v);
    }
    w.u32(model.density.rank());
    w.u32(model.appearance.rank());
    w.u32(model.appearance.feature_dim());
    w.u32(model.pe_freqs);
    w.f32(model.density.activation.shift);
    let widths = model.decoder.widths();
    w.u32(widths.len());
    for &n in widths {
        w.u32(n);
    }
    w.u64(t);
    for g in ParamGroup::ALL {
        w.floats(model.group(g));
    }
    if let Some(adam) = adam {
        for g in ParamGroup::ALL {
            let m = adam.group(g);
            w.u64(m.steps);
            w.floats(&m.m);
            w.floats(&m.v);
        }
    }
    w.0
}

/// A decoded checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub adam: Option<AdamState<T>>,
    pub t: u64,
}

impl<T: Scalar> Checkpoint<T> {
    /// Resumable state; optimizer moments start at zero when absent.
    pub fn into_train_state(self) -> TrainState<T> {
        let adam = self.adam.unwrap_or_else(|| AdamState::zeros_like(&self.model));
        TrainState {
            model: self.model,
            adam,
            t: self.t,
        }
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::Checkpoint("file too short for header".into()))? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            expected: VERSION,
            actual: version,
        });
    }
    let kind = match r.u8()? {
        0 => Factorization::Vm,
        1 => Factorization::Cp,
        k => return Err(Error::Checkpoint(format!("unknown factorization tag {k}"))),
    };
    let act = match r.u8()? {
        0 => ActivationKind::Softplus,
        1 => ActivationKind::Relu,
        k => return Err(Error::Checkpoint(format!("unknown activation tag {k}"))),
    };
    let flags = r.u8()?;
    r.u8()?;
    let resolution = [r.usize()?, r.usize()?, r.usize()?];
    let mut bounds = [0f64; 6];
    for b in &mut bounds {
        *b = r.f32()? as f64;
    }
    let geometry = GridGeometry::new(
        resolution,
        cast3([bounds[0], bounds[1], bounds[2]]),
        cast3([bounds[3], bounds[4], bounds[5]]),
    )?;
    let density_rank = r.usize()?;
    let appearance_rank = r.usize()?;
    let feature_dim = r.usize()?;
    let pe_freqs = r.usize()?;
    let shift = T::lit(r.f32()? as f64);
    let n_layers = r.usize()?;
    if n_layers > 64 {
        return Err(Error::Checkpoint(format!("implausible decoder depth {n_layers}")));
    }
    let widths = (0..n_layers).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let t = r.u64()?;

    let n_density = FactorSet::<T>::param_count(kind, density_rank, resolution);
    let n_app = FactorSet::<T>::param_count(kind, appearance_rank, resolution);
    let n_comp = match kind {
        Factorization::Vm => 3 * appearance_rank,
        Factorization::Cp => appearance_rank,
    };
    let density = FactorizedDensityGrid::new(
        geometry,
        FactorSet::from_params(kind, density_rank, resolution, r.floats(n_density)?)?,
        DensityActivation { kind: act, shift },
    )?;
    let appearance = FactorizedAppearanceGrid::new(
        geometry,
        FactorSet::from_params(kind, appearance_rank, resolution, r.floats(n_app)?)?,
        r.floats(n_comp * feature_dim)?,
        feature_dim,
    )?;
    let n_dec = Decoder::<T>::param_count(&widths);
    let decoder = Decoder::new(widths, r.floats(n_dec)?)?;
    let model = Model::new(density, appearance, decoder, pe_freqs)?;

    let adam = if flags & 1 == 1 {
        let mut groups = Vec::with_capacity(4);
        for g in ParamGroup::ALL {
            let n = model.group(g).len();
            let steps = r.u64()?;
            groups.push(Moments {
                m: r.floats(n)?,
                v: r.floats(n)?,
                steps,
            });
        }
        Some(AdamState {
            groups: groups.try_into().expect("four groups"),
        })
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint { model, adam, t })
}

pub fn save<T: Scalar>(path: &Path, state: &TrainState<T>) -> Result<()> {
    atomic_write(path, &encode(&state.model, Some(&state.adam), state.t))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn small() -> ModelConfig {
        ModelConfig {
            resolution: [5, 4, 6],
            density_rank: 2,
            appearance_rank: 2,
            feature_dim: 6,
            decoder_hidden: vec![8],
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_is_exact_for_f32() {
        for kind in [Factorization::Vm, Factorization::Cp] {
            let cfg = ModelConfig {
                factorization: kind,
                ..small()
            };
            let model = Model::<f32>::init(&cfg, 4).unwrap();
            let mut state = TrainState::new(model);
            state.t = 17;
            state.adam.groups[3].steps = 17;
            state.adam.groups[3].m[2] = 0.25;
            let bytes = encode(&state.model, Some(&state.adam), state.t);
            let back = decode::<f32>(&bytes).unwrap().into_train_state();
            assert_eq!(back, state);
            assert_eq!(encode(&back.model, Some(&back.adam), back.t), bytes);
        }
    }

    #[test]
    fn version_mismatch_reports_both() {
        let model = Model::<f32>::init(&small(), 0).unwrap();
        let mut bytes = encode(&model, None, 0);
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        match decode::<f32>(&bytes) {
            Err(Error::CheckpointVersion { expected: 1, actual: 7 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let model = Model::<f32>::init(&small(), 0).unwrap();
        let bytes = encode(&model, None, 0);
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode::<f32>(&extra).is_err());
        assert!(decode::<f32>(b"NOPE").is_err());
    }
}
