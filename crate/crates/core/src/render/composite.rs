use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Composite<T> {
    pub rgb: [T; 3],
    pub opacity: T,
    pub weights: Vec<T>,
}

/// Emission-absorption quadrature.
///
/// `alpha_i = 1 - exp(-sigma_i delta_i)`, `w_i = T_i alpha_i` with
/// `T_i = prod_{j<i} (1 - alpha_j)`; the residual transmittance shows the
/// background.
pub fn composite<T: Scalar>(sigma: &[T], delta: &[T], colors: &[[T; 3]], background: [T; 3]) -> Composite<T> {
    let mut weights = Vec::with_capacity(sigma.len());
    let mut trans = T::one();
    let mut rgb = [T::zero(); 3];
    for i in 0..sigma.len() {
        let keep = (-sigma[i] * delta[i]).exp();
        let w = trans * (T::one() - keep);
        for c in 0..3 {
            rgb[c] += w * colors[i][c];
        }
        weights.push(w);
        trans *= keep;
    }
    let opacity = weights.iter().copied().sum::<T>();
    for c in 0..3 {
        rgb[c] += (T::one() - opacity) * background[c];
    }
    Composite { rgb, opacity, weights }
}

/// Gradients of `d_rgb · composite(..).rgb` with respect to each sigma and
/// each sample color.
pub fn composite_backward<T: Scalar>(
    sigma: &[T],
    delta: &[T],
    colors: &[[T; 3]],
    weights: &[T],
    background: [T; 3],
    d_rgb: [T; 3],
    d_sigma: &mut [T],
    d_colors: &mut [[T; 3]],
) {
    let n = sigma.len();
    let opacity: T = weights.iter().copied().sum();
    // suffix[c] = sum_{j > i} w_j c_j + T_{N+1} bg, walked from the back
    let mut suffix = [T::zero(); 3];
    for c in 0..3 {
        suffix[c] = (T::one() - opacity) * background[c];
    }
    // transmittance after each sample, recomputed forward
    let mut after = Vec::with_capacity(n);
    let mut trans = T::one();
    for i in 0..n {
        trans *= (-sigma[i] * delta[i]).exp();
        after.push(trans);
    }
    for i in (0..n).rev() {
        let mut g = T::zero();
        for c in 0..3 {
            g += d_rgb[c] * (after[i] * colors[i][c] - suffix[c]);
            d_colors[i][c] = d_rgb[c] * weights[i];
        }
        d_sigma[i] = delta[i] * g;
        for c in 0..3 {
            suffix[c] += weights[i] * colors[i][c];
        }
    }
}

/// Mean density over the first `k` samples of each ray, averaged over rays
/// that have samples.
pub fn occlusion_loss<T: Scalar>(sigmas: &[&[T]], k: usize) -> T {
    assert!(k >= 1);
    let mut total = T::zero();
    let mut rays = 0usize;
    for s in sigmas {
        if s.is_empty() {
            continue;
        }
        let kk = k.min(s.len());
        total += s[..kk].iter().copied().sum::<T>() / T::from_usize_lossy(kk);
        rays += 1;
    }
    if rays == 0 {
        T::zero()
    } else {
        total / T::from_usize_lossy(rays)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_space_shows_background() {
        let c = composite(&[0.0f64; 5], &[0.2; 5], &[[0.3, 0.4, 0.5]; 5], [1.0, 0.9, 0.8]);
        assert_eq!(c.rgb, [1.0, 0.9, 0.8]);
        assert_eq!(c.opacity, 0.0);
    }

    #[test]
    fn opaque_first_sample_dominates() {
        let mut colors = vec![[0.0, 1.0, 0.0]; 4];
        colors[0] = [1.0, 0.0, 0.0];
        let c = composite(&[20.0f64, 5.0, 5.0, 5.0], &[1.0; 4], &colors, [1.0; 3]);
        assert!((c.rgb[0] - 1.0).abs() < 1e-8 && c.rgb[1] < 1e-8);
        assert!(c.weights[1..].iter().all(|&w| w < 1e-8));
    }

    #[test]
    fn occlusion_examples() {
        let z = [0.0f64; 4];
        assert_eq!(occlusion_loss(&[&z[..], &z[..]], 2), 0.0);
        let one = [1.0f64; 6];
        assert_eq!(occlusion_loss(&[&one[..]], 4), 1.0);
        let a = [0.0f64, 0.0, 2.0, 2.0];
        let b = [4.0f64, 4.0, 0.0, 0.0];
        assert_eq!(occlusion_loss(&[&a[..], &b[..]], 2), 2.0);
    }

    #[test]
    fn occlusion_ignores_empty_rays() {
        let a = [3.0f64; 2];
        assert_eq!(occlusion_loss(&[&a[..], &[][..]], 5), 3.0);
        assert_eq!(occlusion_loss::<f64>(&[&[][..]], 5), 0.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let sigma = [0.3f64, 1.7, 0.0, 2.2, 0.9];
        let delta = [0.2, 0.25, 0.1, 0.3, 0.2];
        let colors = [[0.1, 0.5, 0.9], [0.8, 0.2, 0.4], [0.3, 0.3, 0.3], [0.6, 0.9, 0.1], [0.2, 0.1, 0.7]];
        let bg = [1.0, 0.5, 0.25];
        let up = [0.7, -1.3, 0.4];
        let f = |s: &[f64], c: &[[f64; 3]]| {
            let r = composite(s, &delta, c, bg).rgb;
            up[0] * r[0] + up[1] * r[1] + up[2] * r[2]
        };
        let w = composite(&sigma, &delta, &colors, bg).weights;
        let mut ds = [0.0; 5];
        let mut dc = [[0.0; 3]; 5];
        composite_backward(&sigma, &delta, &colors, &w, bg, up, &mut ds, &mut dc);
        let h = 1e-6;
        for i in 0..5 {
            let (mut p, mut m) = (sigma, sigma);
            p[i] += h;
            m[i] -= h;
            let fd = (f(&p, &colors) - f(&m, &colors)) / (2.0 * h);
            assert!((fd - ds[i]).abs() < 1e-8, "sigma {i}: {fd} vs {}", ds[i]);
            for c in 0..3 {
                let (mut p, mut m) = (colors, colors);
                p[i][c] += h;
                m[i][c] -= h;
                let fd = (f(&sigma, &p) - f(&sigma, &m)) / (2.0 * h);
                assert!((fd - dc[i][c]).abs() < 1e-8);
            }
        }
    }
}
