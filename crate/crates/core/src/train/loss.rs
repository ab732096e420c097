use crate::scalar::Scalar;

/// Loss terms of one iteration, in `f64` for logging.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub mse: f64,
    pub occ: f64,
    pub l1: f64,
    pub total: f64,
}

pub fn mse<T: Scalar>(pred: &[[T; 3]], gt: &[[T; 3]]) -> f64 {
    assert_eq!(pred.len(), gt.len(), "prediction/ground-truth length mismatch");
    if pred.is_empty() {
        return 0.0;
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .flat_map(|(p, g)| (0..3).map(move |c| (p[c] - g[c]).as_f64().powi(2)))
        .sum();
    sum / (3 * pred.len()) as f64
}

/// `d mse / d pred`
pub fn mse_grad<T: Scalar>(pred: &[[T; 3]], gt: &[[T; 3]]) -> Vec<[T; 3]> {
    let scale = T::lit(2.0 / (3 * pred.len().max(1)) as f64);
    pred.iter()
        .zip(gt)
        .map(|(p, g)| [scale * (p[0] - g[0]), scale * (p[1] - g[1]), scale * (p[2] - g[2])])
        .collect()
}

pub fn mean_abs<T: Scalar>(params: &[T]) -> f64 {
    if params.is_empty() {
        return 0.0;
    }
    params.iter().map(|p| p.abs().as_f64()).sum::<f64>() / params.len() as f64
}

/// Adds `lambda * d mean|p| / d p` to `grad`.
pub fn add_l1_grad<T: Scalar>(params: &[T], lambda: f64, grad: &mut [T]) {
    if lambda == 0.0 || params.is_empty() {
        return;
    }
    let s = T::lit(lambda / params.len() as f64);
    for (g, p) in grad.iter_mut().zip(params) {
        if *p > T::zero() {
            *g += s;
        } else if *p < T::zero() {
            *g -= s;
        }
    }
}

/// `mse + lambda_occ * occlusion + lambda_l1 * mean |density factors|`
pub fn total_loss<T: Scalar>(
    pred: &[[T; 3]],
    gt: &[[T; 3]],
    occlusion: T,
    density_factors: &[T],
    lambda_occ: f64,
    lambda_l1: f64,
) -> LossBreakdown {
    let mse = mse(pred, gt);
    let occ = occlusion.as_f64();
    let l1 = if lambda_l1 == 0.0 { 0.0 } else { mean_abs(density_factors) };
    LossBreakdown {
        mse,
        occ,
        l1,
        total: mse + lambda_occ * occ + lambda_l1 * l1,
    }
}
