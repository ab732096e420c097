//! Small MLP mapping encoded appearance features and view direction to RGB.
//!
//! Hidden layers use ReLU, the output layer a sigmoid. Weights of each layer
//! are stored input-major (`w[i * out + o]`) followed by the bias, all layers
//! concatenated into one parameter vector.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, sigmoid, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T> {
    widths: Vec<usize>,
    params: Vec<T>,
}

/// Forward activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct DecoderScratch<T> {
    acts: Vec<Vec<T>>,
    delta: Vec<Vec<T>>,
}

impl<T: Scalar> DecoderScratch<T> {
    pub fn new(widths: &[usize]) -> Self {
        Self {
            acts: widths.iter().map(|&w| vec![T::zero(); w]).collect(),
            delta: widths.iter().map(|&w| vec![T::zero(); w]).collect(),
        }
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::Config("decoder needs at least an input and an output layer".into()));
    }
    if *widths.last().unwrap() != 3 {
        return Err(Error::Config(format!(
            "decoder output width must be 3, got {}",
            widths.last().unwrap()
        )));
    }
    if widths.contains(&0) {
        return Err(Error::Config("decoder layer of width 0".into()));
    }
    Ok(())
}

impl<T: Scalar> Decoder<T> {
    pub fn param_count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn new(widths: Vec<usize>, params: Vec<T>) -> Result<Self> {
        check_widths(&widths)?;
        let expected = Self::param_count(&widths);
        if params.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self { widths, params })
    }

    pub fn zeros(widths: Vec<usize>) -> Result<Self> {
        let n = Self::param_count(&widths);
        Self::new(widths, vec![T::zero(); n])
    }

    /// He-uniform weights (`±sqrt(6 / fan_in)`), zero biases.
    pub fn random<R: Rng>(widths: Vec<usize>, rng: &mut R) -> Result<Self> {
        let mut d = Self::zeros(widths)?;
        let mut off = 0;
        for l in 0..d.widths.len() - 1 {
            let (fan_in, fan_out) = (d.widths[l], d.widths[l + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            for w in &mut d.params[off..off + fan_in * fan_out] {
                *w = T::lit(rng.gen_range(-bound..bound));
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(d)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn layer_offset(&self, l: usize) -> usize {
        self.widths[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weights, bias)` of layer `l`; weights are input-major.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let off = self.layer_offset(l);
        let (i, o) = (self.widths[l], self.widths[l + 1]);
        (&self.params[off..off + i * o], &self.params[off + i * o..off + i * o + o])
    }

    pub fn scratch(&self) -> DecoderScratch<T> {
        DecoderScratch::new(&self.widths)
    }

    /// Unchecked forward pass; activations stay in `scratch`.
    pub fn forward(&self, input: &[T], scratch: &mut DecoderScratch<T>) -> [T; 3] {
        scratch.acts[0].copy_from_slice(input);
        let n_layers = self.widths.len() - 1;
        let mut off = 0;
        for l in 0..n_layers {
            let (ni, no) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + ni * no];
            let b = &self.params[off + ni * no..off + ni * no + no];
            let (prev, next) = scratch.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let y = &mut next[0];
            y.copy_from_slice(b);
            for (i, &xi) in x.iter().enumerate() {
                if xi != T::zero() {
                    axpy(xi, &w[i * no..(i + 1) * no], y);
                }
            }
            if l + 1 < n_layers {
                y.iter_mut().for_each(|v| *v = v.max(T::zero()));
            } else {
                y.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            off += ni * no + no;
        }
        let out = &scratch.acts[n_layers];
        [out[0], out[1], out[2]]
    }

    /// Backward pass after [`Self::forward`] on the same scratch. Accumulates
    /// parameter gradients into `grad` and writes the input gradient to `d_input`.
    pub fn backward(&self, scratch: &mut DecoderScratch<T>, d_rgb: [T; 3], grad: &mut [T], d_input: &mut [T]) {
        let n_layers = self.widths.len() - 1;
        {
            let out = &scratch.acts[n_layers];
            let d = &mut scratch.delta[n_layers];
            for c in 0..3 {
                d[c] = d_rgb[c] * out[c] * (T::one() - out[c]);
            }
        }
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        }
        for l in (0..n_layers).rev() {
            let (ni, no) = (self.widths[l], self.widths[l + 1]);
            let off = offsets[l];
            let w = &self.params[off..off + ni * no];
            let (dprev, dnext) = scratch.delta.split_at_mut(l + 1);
            let dy = &dnext[0];
            let x = &scratch.acts[l];
            let (gw, gb) = grad[off..off + ni * no + no].split_at_mut(ni * no);
            for (g, d) in gb.iter_mut().zip(dy.iter()) {
                *g += *d;
            }
            for (i, &xi) in x.iter().enumerate() {
                if xi != T::zero() {
                    axpy(xi, dy, &mut gw[i * no..(i + 1) * no]);
                }
            }
            let dx = &mut dprev[l];
            for (i, v) in dx.iter_mut().enumerate() {
                *v = dot(&w[i * no..(i + 1) * no], dy);
            }
            if l > 0 {
                // relu gate of the previous hidden layer
                for (v, a) in dx.iter_mut().zip(&scratch.acts[l]) {
                    if *a <= T::zero() {
                        *v = T::zero();
                    }
                }
            }
        }
        d_input.copy_from_slice(&scratch.delta[0]);
    }

    /// Checked forward pass.
    pub fn decode(&self, encoded: &[T]) -> Result<[T; 3]> {
        if encoded.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.input_dim(),
                actual: encoded.len(),
            });
        }
        Ok(self.forward(encoded, &mut self.scratch()))
    }

    /// Parameter and input gradients of `d_rgb · decode(encoded)`.
    pub fn decode_backward(&self, encoded: &[T], d_rgb: [T; 3]) -> Result<(Vec<T>, Vec<T>)> {
        if encoded.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.input_dim(),
                actual: encoded.len(),
            });
        }
        let mut scratch = self.scratch();
        self.forward(encoded, &mut scratch);
        let mut grad = vec![T::zero(); self.params.len()];
        let mut d_in = vec![T::zero(); self.input_dim()];
        self.backward(&mut scratch, d_rgb, &mut grad, &mut d_in);
        Ok((grad, d_in))
    }
}
