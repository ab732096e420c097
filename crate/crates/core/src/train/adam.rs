use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelGrads, ParamGroup};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments of one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    /// Updates applied so far, for bias correction.
    pub steps: u64,
}

impl<T: Scalar> Moments<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            steps: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    moments: &mut Moments<T>,
    lr: f64,
    cfg: &AdamConfig,
    group: &'static str,
) -> Result<()> {
    if params.len() != grads.len() || moments.m.len() != params.len() {
        return Err(Error::LengthMismatch {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { group });
    }
    moments.steps += 1;
    let step = moments.steps as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::one() - b1;
    let c2 = T::one() - b2;
    let bc1 = T::lit(1.0 - cfg.beta1.powi(step));
    let bc2 = T::lit(1.0 - cfg.beta2.powi(step));
    let lr = T::lit(lr);
    let eps = T::lit(cfg.epsilon);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.m.iter_mut().zip(moments.v.iter_mut()))
    {
        *m = b1 * *m + c1 * g;
        *v = b2 * *v + c2 * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Moments for all four parameter groups, indexed like [`ParamGroup::ALL`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub groups: [Moments<T>; 4],
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        Self {
            groups: ParamGroup::ALL.map(|g| Moments::zeros(model.group(g).len())),
        }
    }

    pub fn group(&self, g: ParamGroup) -> &Moments<T> {
        &self.groups[g as usize]
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut Moments<T> {
        &mut self.groups[g as usize]
    }

    pub fn matches(&self, model: &Model<T>) -> bool {
        ParamGroup::ALL.iter().all(|&g| {
            let n = model.group(g).len();
            self.group(g).m.len() == n && self.group(g).v.len() == n
        })
    }

    /// Applies one step to every group; `lr_for` picks each group's rate.
    pub fn step(
        &mut self,
        model: &mut Model<T>,
        grads: &ModelGrads<T>,
        lr_for: impl Fn(ParamGroup) -> f64,
        cfg: &AdamConfig,
    ) -> Result<()> {
        for g in ParamGroup::ALL {
            if grads.group(g).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { group: g.name() });
            }
        }
        for g in ParamGroup::ALL {
            adam_step(model.group_mut(g), grads.group(g), self.group_mut(g), lr_for(g), cfg, g.name())?;
        }
        Ok(())
    }
}
