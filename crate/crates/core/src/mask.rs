//! Frequency masks over component indices and encoding entries.
//!
//! A mask of length `L` keeps a low band of indices visible and suppresses the
//! rest. The dynamic schedule widens the visible band with the iteration `t`
//! until it covers everything at `t >= T`; the fixed-ratio variant keeps a
//! constant leading fraction visible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-index multipliers in `[0, 1]`, non-increasing along the index.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVector<T>(pub Vec<T>);

impl<T: Scalar> MaskVector<T> {
    pub fn ones(len: usize) -> Self {
        MaskVector(vec![T::one(); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn is_all_ones(&self) -> bool {
        self.0.iter().all(|&v| v == T::one())
    }
}

/// Visible band that grows linearly with `t`.
///
/// With `ptr = min(t L / T + 3, L)`, the first `floor(ptr)` entries are one,
/// the next entry holds `frac(ptr)` and the remainder are zero. At `t >= T` the
/// mask is all ones.
pub fn dynamic_mask<T: Scalar>(t: u64, total: u64, len: usize) -> MaskVector<T> {
    if t >= total {
        return MaskVector::ones(len);
    }
    let ptr = (t as f64 * len as f64 / total as f64 + 3.0).min(len as f64);
    let whole = ptr.floor() as usize;
    let frac = ptr - ptr.floor();
    let values = (0..len)
        .map(|i| {
            if i < whole {
                T::one()
            } else if i == whole {
                T::lit(frac)
            } else {
                T::zero()
            }
        })
        .collect();
    MaskVector(values)
}

/// First `floor(L * ratio)` entries one, the rest zero.
pub fn fixed_ratio_mask<T: Scalar>(len: usize, ratio: f64) -> MaskVector<T> {
    let visible = ((len as f64) * ratio.clamp(0.0, 1.0)).floor() as usize;
    MaskVector((0..len).map(|i| if i < visible { T::one() } else { T::zero() }).collect())
}

/// Elementwise product; rejects mismatched lengths.
pub fn apply_mask<T: Scalar>(values: &[T], mask: &MaskVector<T>) -> Result<Vec<T>> {
    if values.len() != mask.len() {
        return Err(Error::LengthMismatch {
            expected: mask.len(),
            actual: values.len(),
        });
    }
    Ok(values.iter().zip(&mask.0).map(|(v, m)| *v * *m).collect())
}

/// How a mask evolves over training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSchedule {
    /// No masking at any iteration.
    #[default]
    Off,
    /// Band widening until `total_reg_iters` (defaults to 90% of training).
    Dynamic {
        #[serde(default)]
        total_reg_iters: Option<u64>,
    },
    /// Constant visible fraction until `total_reg_iters`, all ones afterwards.
    FixedRatio {
        v_ratio: f64,
        #[serde(default)]
        total_reg_iters: Option<u64>,
    },
}

impl MaskSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MaskSchedule::Dynamic {
                total_reg_iters: Some(0),
            }
            | MaskSchedule::FixedRatio {
                total_reg_iters: Some(0),
                ..
            } => Err(Error::Config("total_reg_iters must be >= 1".into())),
            MaskSchedule::FixedRatio { v_ratio, .. } if !(0.0..=1.0).contains(&v_ratio) => Err(
                Error::Config(format!("v_ratio {v_ratio} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }

    pub fn horizon(&self, iterations: u64) -> u64 {
        let default = ((iterations as f64) * 0.9).round().max(1.0) as u64;
        match *self {
            MaskSchedule::Off => 0,
            MaskSchedule::Dynamic { total_reg_iters } | MaskSchedule::FixedRatio { total_reg_iters, .. } => {
                total_reg_iters.unwrap_or(default)
            }
        }
    }

    /// Mask at iteration `t`, or `None` when the schedule is inactive (all ones).
    pub fn mask<T: Scalar>(&self, t: u64, iterations: u64, len: usize) -> Option<MaskVector<T>> {
        let horizon = self.horizon(iterations);
        match *self {
            MaskSchedule::Off => None,
            _ if t >= horizon => None,
            MaskSchedule::Dynamic { .. } => Some(dynamic_mask(t, horizon, len)),
            MaskSchedule::FixedRatio { v_ratio, .. } => Some(fixed_ratio_mask(len, v_ratio)),
        }
    }
}

/// Length of the sin/cos block for `dim` inputs at `n_freq` octaves.
pub fn encoding_len(dim: usize, n_freq: usize) -> usize {
    2 * n_freq * dim
}

/// Raw input followed by the masked sin/cos block.
///
/// The block is frequency-major: for octave `k` (frequency `2^k`) all `dim`
/// sines, then all `dim` cosines. Masking the block from the top therefore
/// removes the highest frequencies first.
pub fn positional_encoding<T: Scalar>(x: &[T], n_freq: usize, mask: Option<&MaskVector<T>>) -> Vec<T> {
    let mut out = vec![T::zero(); x.len() + encoding_len(x.len(), n_freq)];
    encode_into(x, n_freq, mask.map(|m| m.as_slice()), &mut out);
    out
}

pub(crate) fn encode_into<T: Scalar>(x: &[T], n_freq: usize, mask: Option<&[T]>, out: &mut [T]) {
    let dim = x.len();
    out[..dim].copy_from_slice(x);
    let block = &mut out[dim..];
    let mut freq = T::one();
    for k in 0..n_freq {
        let base = 2 * k * dim;
        for (j, &v) in x.iter().enumerate() {
            let (s, c) = (v * freq).sin_cos();
            block[base + j] = s;
            block[base + dim + j] = c;
        }
        freq = freq + freq;
    }
    if let Some(mask) = mask {
        for (e, m) in block.iter_mut().zip(mask) {
            *e *= *m;
        }
    }
}

/// Backpropagates through [`encode_into`]: accumulates `d x` from `d out`.
pub(crate) fn encode_backward<T: Scalar>(
    x: &[T],
    n_freq: usize,
    mask: Option<&[T]>,
    d_out: &[T],
    d_x: &mut [T],
) {
    let dim = x.len();
    d_x.copy_from_slice(&d_out[..dim]);
    let block = &d_out[dim..];
    let mut freq = T::one();
    for k in 0..n_freq {
        let base = 2 * k * dim;
        for (j, &v) in x.iter().enumerate() {
            let (ms, mc) = match mask {
                Some(m) => (m[base + j], m[base + dim + j]),
                None => (T::one(), T::one()),
            };
            let (s, c) = (v * freq).sin_cos();
            d_x[j] += freq * (block[base + j] * ms * c - block[base + dim + j] * mc * s);
        }
        freq = freq + freq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vals(m: &MaskVector<f64>) -> Vec<f64> {
        m.0.clone()
    }

    #[test]
    fn dynamic_at_horizon_is_ones() {
        assert!(dynamic_mask::<f64>(100, 100, 16).is_all_ones());
        assert!(dynamic_mask::<f64>(250, 100, 16).is_all_ones());
    }

    #[test]
    fn dynamic_start_shows_three() {
        assert_eq!(vals(&dynamic_mask(0, 100, 10)), vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dynamic_quarter_has_half_entry() {
        assert_eq!(vals(&dynamic_mask(25, 100, 10)), vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn short_masks_saturate_early() {
        assert!(dynamic_mask::<f64>(0, 100, 3).is_all_ones());
        assert!(dynamic_mask::<f64>(0, 100, 2).is_all_ones());
    }

    #[test]
    fn fixed_ratio_examples() {
        let m = fixed_ratio_mask::<f64>(10, 0.8);
        assert_eq!(m.0.iter().filter(|&&v| v == 1.0).count(), 8);
        assert_eq!(&m.0[8..], &[0.0, 0.0]);
        assert!(fixed_ratio_mask::<f64>(10, 1.0).is_all_ones());
        assert!(fixed_ratio_mask::<f64>(10, 0.0).0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_examples() {
        let m = MaskVector(vec![1.0, 0.5, 0.0]);
        assert_eq!(apply_mask(&[2.0, 4.0, 6.0], &m).unwrap(), vec![2.0, 2.0, 0.0]);
        assert_eq!(apply_mask(&[2.0, 4.0, 6.0], &MaskVector::ones(3)).unwrap(), vec![2.0, 4.0, 6.0]);
        assert_eq!(apply_mask(&[2.0, 4.0, 6.0], &MaskVector(vec![0.0; 3])).unwrap(), vec![0.0; 3]);
        assert!(matches!(apply_mask(&[1.0, 2.0], &m), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn encoding_of_origin() {
        let e = positional_encoding(&[0.0f64; 3], 1, None);
        assert_eq!(e, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn encoding_of_quarter_turn() {
        let e = positional_encoding(&[std::f64::consts::FRAC_PI_2, 0.0, 0.0], 1, Some(&MaskVector::ones(6)));
        let expect = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        for (a, b) in e[3..].iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(e[0], std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn ones_mask_matches_unmasked_encoding() {
        let x = [0.3, -1.2, 2.5, 0.01];
        let a = positional_encoding(&x, 3, None);
        let b = positional_encoding(&x, 3, Some(&MaskVector::ones(encoding_len(4, 3))));
        assert_eq!(a, b);
    }

    #[test]
    fn encoding_backward_matches_finite_differences() {
        let x = [0.3f64, -1.2, 0.7];
        let n_freq = 3;
        let len = 3 + encoding_len(3, n_freq);
        let mask: Vec<f64> = (0..encoding_len(3, n_freq)).map(|i| 1.0 - i as f64 / 20.0).collect();
        let w: Vec<f64> = (0..len).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
        let f = |x: &[f64]| -> f64 {
            let mut out = vec![0.0; len];
            encode_into(x, n_freq, Some(&mask), &mut out);
            out.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let mut dx = [0.0; 3];
        encode_backward(&x, n_freq, Some(&mask), &w, &mut dx);
        for j in 0..3 {
            let h = 1e-5;
            let mut xp = x;
            xp[j] += h;
            let mut xm = x;
            xm[j] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - dx[j]).abs() < 1e-7, "{fd} vs {}", dx[j]);
        }
    }

    #[test]
    fn schedules() {
        let s = MaskSchedule::Dynamic { total_reg_iters: None };
        assert_eq!(s.horizon(1000), 900);
        assert!(s.mask::<f64>(900, 1000, 12).is_none());
        assert!(s.mask::<f64>(10, 1000, 12).is_some());
        assert!(MaskSchedule::Off.mask::<f64>(0, 1000, 12).is_none());
        let f = MaskSchedule::FixedRatio { v_ratio: 0.8, total_reg_iters: Some(50) };
        assert_eq!(f.mask::<f64>(3, 1000, 10).unwrap(), fixed_ratio_mask(10, 0.8));
        assert!(f.mask::<f64>(50, 1000, 10).is_none());
        assert!(MaskSchedule::FixedRatio { v_ratio: 1.5, total_reg_iters: None }.validate().is_err());
    }

    proptest! {
        #[test]
        fn dynamic_is_monotone_in_index(t in 0u64..200, total in 1u64..200, len in 1usize..40) {
            let m = dynamic_mask::<f64>(t, total, len);
            prop_assert!(m.0.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(m.0.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert_eq!(m.0[0], 1.0);
        }

        #[test]
        fn dynamic_is_monotone_in_t(t in 0u64..200, total in 1u64..200, len in 1usize..40) {
            let a = dynamic_mask::<f64>(t, total, len);
            let b = dynamic_mask::<f64>(t + 1, total, len);
            prop_assert!(a.0.iter().zip(&b.0).all(|(x, y)| x <= y));
        }

        #[test]
        fn apply_is_linear_and_idempotent(v in proptest::collection::vec(-5.0f64..5.0, 8), s in -3.0f64..3.0, cut in 0usize..8) {
            let m = MaskVector((0..8).map(|i| if i < cut { 1.0 } else { 0.0 }).collect());
            let once = apply_mask(&v, &m).unwrap();
            prop_assert_eq!(apply_mask(&once, &m).unwrap(), once.clone());
            let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
            let lhs = apply_mask(&scaled, &m).unwrap();
            for (a, b) in lhs.iter().zip(&once) {
                prop_assert!((a - b * s).abs() < 1e-12);
            }
        }
    }
}
