//! Factorized grids agree with trilinear interpolation of their dense
//! reconstruction, and keep the algebraic structure of the decomposition.

use fewtensorf::grid::{
    DenseGrid, DensityActivation, Factorization, FactorizedAppearanceGrid, FactorizedDensityGrid, GridGeometry,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent trilinear interpolation on the node grid spanning `[lo, hi]`.
fn trilerp(dense: &DenseGrid<f64>, lo: [f64; 3], hi: [f64; 3], x: [f64; 3]) -> f64 {
    let mut idx = [0usize; 3];
    let mut frac = [0f64; 3];
    for a in 0..3 {
        let n = dense.resolution[a];
        let g = (x[a] - lo[a]) / (hi[a] - lo[a]) * (n - 1) as f64;
        let i = (g.floor() as usize).min(n - 2);
        idx[a] = i;
        frac[a] = g - i as f64;
    }
    let mut acc = 0.0;
    for corner in 0..8 {
        let mut w = 1.0;
        let mut at = [0usize; 3];
        for a in 0..3 {
            let bit = (corner >> a) & 1;
            at[a] = idx[a] + bit;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        acc += w * dense.data[(at[0] * dense.resolution[1] + at[1]) * dense.resolution[2] + at[2]];
    }
    acc
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    kind: Factorization,
) -> (FactorizedDensityGrid<f64>, FactorizedAppearanceGrid<f64>, [f64; 3], [f64; 3]) {
    let res = [rng.gen_range(2..=8), rng.gen_range(2..=8), rng.gen_range(2..=8)];
    let lo = [rng.gen_range(-2.0..-0.5), rng.gen_range(-2.0..-0.5), rng.gen_range(-2.0..-0.5)];
    let hi = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
    let geo = GridGeometry::new(res, lo, hi).unwrap();
    let rank = rng.gen_range(1..=3);
    let density = FactorizedDensityGrid::random(geo, kind, rank, 0.5, DensityActivation::softplus(0.0), rng);
    let appearance = FactorizedAppearanceGrid::random(geo, kind, rank, 4, 0.5, rng).unwrap();
    (density, appearance, lo, hi)
}

#[test]
fn factorized_eval_matches_dense_interpolation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for kind in [Factorization::Vm, Factorization::Cp] {
        for _ in 0..20 {
            let (density, appearance, lo, hi) = random_instance(&mut rng, kind);
            let dense = density.dense_reconstruct(1 << 20).unwrap();
            let feats = appearance.dense_reconstruct(1 << 20).unwrap();
            for _ in 0..100 {
                let x = [0, 1, 2].map(|a| rng.gen_range(lo[a]..hi[a]));
                let raw = trilerp(&dense, lo, hi, x);
                assert!((density.raw_density(x) - raw).abs() < 1e-6);
                let want = density.activation.apply(raw);
                assert!((density.eval_density(x) - want).abs() < 1e-6);
                let got = appearance.eval_appearance(x);
                for (c, g) in feats.iter().zip(&got) {
                    assert!((trilerp(c, lo, hi, x) - g).abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn constant_factors_give_one_per_mode() {
    let geo = GridGeometry::<f64>::new([5, 6, 7], [-1.0; 3], [1.0; 3]).unwrap();
    let mut g = FactorizedDensityGrid::zeros(geo, Factorization::Vm, 1, DensityActivation::relu());
    g.factors.params_mut().iter_mut().for_each(|p| *p = 1.0);
    for x in [[0.0, 0.0, 0.0], [0.3, -0.7, 0.99], [-1.0, 1.0, 0.2]] {
        assert!((g.raw_density(x) - 3.0).abs() < 1e-12);
        assert!((g.eval_density(x) - 3.0).abs() < 1e-12);
    }
    assert_eq!(g.eval_density([1.01, 0.0, 0.0]), 0.0);
}

#[test]
fn upsampling_preserves_multilinear_fields() {
    // A field linear along every axis survives resampling exactly.
    let geo = GridGeometry::<f64>::new([3, 3, 3], [-1.0; 3], [1.0; 3]).unwrap();
    let mut g = FactorizedDensityGrid::zeros(geo, Factorization::Cp, 1, DensityActivation::relu());
    for m in 0..3 {
        let line = g.factors.line_mut(m, 0);
        for (i, v) in line.iter_mut().enumerate() {
            *v = 1.0 + 0.5 * i as f64 + m as f64;
        }
    }
    let up = g.upsample([7, 5, 9]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let x = [0; 3].map(|_| rng.gen_range(-1.0..1.0));
        assert!((up.raw_density(x) - g.raw_density(x)).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn raw_density_is_linear_in_each_line(
        seed in 0u64..1000,
        x in prop::array::uniform3(-0.99f64..0.99),
        s in -3.0f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geo = GridGeometry::new([4, 5, 3], [-1.0; 3], [1.0; 3]).unwrap();
        let mut g = FactorizedDensityGrid::random(geo, Factorization::Vm, 2, 0.5, DensityActivation::relu(), &mut rng);
        let base = g.raw_density(x);
        let mode = (seed % 3) as usize;
        let r = (seed % 2) as usize;
        g.factors.line_mut(mode, r).iter_mut().for_each(|v| *v *= s);
        let scaled = g.raw_density(x);
        g.factors.line_mut(mode, r).iter_mut().for_each(|v| *v = 0.0);
        let without = g.raw_density(x);
        // raw = rest + c, scaling the line scales c.
        prop_assert!(((scaled - without) - s * (base - without)).abs() < 1e-9);
    }

    #[test]
    fn cp_rank_one_is_separable(
        a in prop::collection::vec(-2.0f64..2.0, 4),
        b in prop::collection::vec(-2.0f64..2.0, 4),
        c in prop::collection::vec(-2.0f64..2.0, 4),
        x in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let geo = GridGeometry::<f64>::new([4; 3], [-1.0; 3], [1.0; 3]).unwrap();
        let mut g = FactorizedDensityGrid::zeros(geo, Factorization::Cp, 1, DensityActivation::relu());
        g.factors.line_mut(0, 0).copy_from_slice(&a);
        g.factors.line_mut(1, 0).copy_from_slice(&b);
        g.factors.line_mut(2, 0).copy_from_slice(&c);
        let lerp = |v: &[f64], t: f64| {
            let gc = (t + 1.0) / 2.0 * 3.0;
            let i = (gc.floor() as usize).min(2);
            let f = gc - i as f64;
            v[i] * (1.0 - f) + v[i + 1] * f
        };
        let want = lerp(&a, x[0]) * lerp(&b, x[1]) * lerp(&c, x[2]);
        prop_assert!((g.raw_density(x) - want).abs() < 1e-9);
    }
}
