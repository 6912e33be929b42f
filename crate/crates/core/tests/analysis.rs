mod common;

use common::*;
use hesslens::analysis::{
    cluster_purity, extract_deltas, js_divergence, layer_distance_table, sample_delta_columns,
    wasserstein1, DeltaSet,
};
use hesslens::data::Dataset;
use hesslens::hessops::{gauss_newton_op, materialize_dense, CurvatureContext};
use hesslens::models::{build, ModelSpec};
use hesslens::rng::seeded;
use hesslens::spectral::density::gaussian;
use hesslens::spectral::SpectralDensity;
use hesslens::tensor::Tensor;
use rand::seq::SliceRandom;

/// Mixture of Gaussian bumps `(center, width, weight)` sampled on `k` points over `[lo, hi]`.
fn mixture(parts: &[(f64, f64, f64)], lo: f64, hi: f64, k: usize) -> SpectralDensity {
    let grid: Vec<f64> = (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect();
    let density = grid
        .iter()
        .map(|&t| parts.iter().map(|&(c, s, w)| w * gaussian(t - c, s)).sum())
        .collect();
    SpectralDensity::from_samples(grid, density).unwrap()
}

/// Quantiles of a piecewise-linear density at `u_k = (k + 1/2) / n`, by
/// inverting its piecewise-quadratic CDF cell by cell.
fn quantiles(d: &SpectralDensity, n: usize) -> Vec<f64> {
    let (g, f) = (&d.grid, &d.density);
    let h = g[1] - g[0];
    let cells: Vec<f64> = f.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).collect();
    let total: f64 = cells.iter().sum();
    let mut out = Vec::with_capacity(n);
    let (mut cell, mut below) = (0usize, 0.0);
    for k in 0..n {
        let target = (k as f64 + 0.5) / n as f64 * total;
        while cell + 1 < cells.len() && below + cells[cell] < target {
            below += cells[cell];
            cell += 1;
        }
        // mass from the left edge of the cell to x = s*h: f0 s h + (f1 - f0) s^2 h / 2
        let (f0, f1) = (f[cell], f[cell + 1]);
        let r = (target - below) / h;
        let a = 0.5 * (f1 - f0);
        let s = if a.abs() < 1e-14 * f0.abs().max(1e-300) {
            r / f0
        } else {
            (-f0 + (f0 * f0 + 4.0 * a * r).max(0.0).sqrt()) / (2.0 * a)
        };
        out.push(g[cell] + s.clamp(0.0, 1.0) * h);
    }
    out
}

#[test]
fn wasserstein_matches_quantile_coupling() {
    let cases = [
        (
            mixture(&[(0.0, 0.3, 0.7), (2.0, 0.2, 0.3)], -2.0, 3.5, 1500),
            mixture(&[(1.0, 0.5, 1.0)], -1.5, 4.0, 1700),
        ),
        (
            mixture(&[(0.0, 0.1, 0.95), (6.0, 0.2, 0.05)], -1.0, 7.0, 1024),
            mixture(&[(0.2, 0.15, 0.9), (4.0, 0.3, 0.1)], -1.0, 6.0, 900),
        ),
    ];
    let n = 200_000;
    for (p, q) in &cases {
        let (xp, xq) = (quantiles(p, n), quantiles(q, n));
        let oracle = xp.iter().zip(&xq).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
        let w = wasserstein1(p, q).unwrap();
        assert!((w - oracle).abs() <= 1e-3, "{w} vs {oracle}");
    }
}

#[test]
fn js_matches_direct_summation() {
    let k = 2048;
    for s in 0..5u64 {
        let a = random(6, s);
        let p = mixture(
            &[(a[0], 0.2 + a[1].abs(), 1.0), (a[2] + 2.0, 0.3, 0.5)],
            -4.0,
            6.0,
            k,
        );
        let q = mixture(
            &[(a[3], 0.2 + a[4].abs(), 1.0), (a[5] - 1.0, 0.4, 0.2)],
            -4.0,
            6.0,
            k,
        );
        let (sp, sq): (f64, f64) = (p.density.iter().sum(), q.density.iter().sum());
        let mut oracle = 0.0;
        for i in 0..k {
            let (x, y) = (p.density[i] / sp, q.density[i] / sq);
            let m = 0.5 * (x + y);
            if x > 0.0 {
                oracle += 0.5 * x * (x.ln() - m.ln());
            }
            if y > 0.0 {
                oracle += 0.5 * y * (y.ln() - m.ln());
            }
        }
        let js = js_divergence(&p, &q).unwrap();
        assert!((js - oracle).abs() <= 1e-12, "{js} vs {oracle}");
        assert!(js <= std::f64::consts::LN_2);
    }
}

#[test]
fn distances_are_symmetric_and_vanish_on_identical_inputs() {
    let p = mixture(&[(0.0, 0.3, 1.0)], -2.0, 2.0, 800);
    let q = mixture(&[(0.5, 0.2, 1.0), (1.5, 0.1, 0.3)], -1.0, 3.0, 600);
    assert!((wasserstein1(&p, &q).unwrap() - wasserstein1(&q, &p).unwrap()).abs() <= 1e-12);
    assert!((js_divergence(&p, &q).unwrap() - js_divergence(&q, &p).unwrap()).abs() <= 1e-12);
    assert!(wasserstein1(&p, &p).unwrap() <= 1e-12);
    assert!(js_divergence(&q, &q).unwrap() <= 1e-12);
    assert!(wasserstein1(&p, &q).unwrap() > 0.1);
}

#[test]
fn wasserstein_is_translation_covariant() {
    let shift = |d: &SpectralDensity, by: f64| {
        SpectralDensity::from_samples(d.grid.iter().map(|t| t + by).collect(), d.density.clone())
            .unwrap()
    };
    let p = mixture(&[(0.0, 0.3, 1.0)], -2.0, 2.0, 800);
    let q = mixture(&[(0.7, 0.25, 1.0), (2.0, 0.1, 0.2)], -1.0, 3.0, 700);
    let w = wasserstein1(&p, &q).unwrap();
    for by in [-3.0, 0.5, 10.0] {
        let ws = wasserstein1(&shift(&p, by), &shift(&q, by)).unwrap();
        assert!((ws - w).abs() <= 1e-6, "shift {by}: {ws} vs {w}");
    }
}

#[test]
fn distance_table_has_one_row_per_layer() {
    let full = mixture(&[(0.0, 0.3, 1.0)], -2.0, 2.0, 512);
    let layers: Vec<_> = (0..4)
        .map(|l| {
            (
                l,
                format!("fc{l}"),
                mixture(&[(0.3 * l as f64, 0.3, 1.0)], -2.0, 3.0, 512),
            )
        })
        .collect();
    let t = layer_distance_table(&layers, &full).unwrap();
    assert_eq!(t.rows.len(), 4);
    assert_eq!(t.argmin_wasserstein_layer(), 0);
    assert!(t.rows.iter().all(|r| r.wasserstein >= 0.0 && r.js >= 0.0));
}

#[test]
fn delta_gram_reconstructs_gauss_newton() {
    let ctx = context(&[4, 8, 3], 20, 3);
    let d = ctx.params.dim();
    let mut gram = vec![0.0; d * d];
    for i in 0..ctx.probe.len() {
        for col in sample_delta_columns(&ctx, i, None).unwrap() {
            for a in 0..d {
                for b in 0..d {
                    gram[a * d + b] += col[a] * col[b];
                }
            }
        }
    }
    let n = ctx.probe.len() as f64;
    let g = materialize_dense(&gauss_newton_op(&ctx, None).unwrap())
        .unwrap()
        .matrix;
    let worst = (0..d * d)
        .map(|k| (gram[k] / n - g.data()[k]).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-8, "max abs deviation {worst:e}");

    // Layer-restricted vectors reproduce the matching block.
    let seg = ctx.params.layers()[1].range();
    let cols = sample_delta_columns(&ctx, 0, Some(1)).unwrap();
    let full = sample_delta_columns(&ctx, 0, None).unwrap();
    for (c, f) in cols.iter().zip(&full) {
        assert_eq!(&c[..], &f[seg.clone()]);
    }
}

#[test]
fn saturated_sample_has_vanishing_deltas() {
    let (mut p, m) = build(&ModelSpec::mlp(&[2, 2]), 0).unwrap();
    // zero weights, bias (100, 0): p = softmax(100, 0) is one-hot to rounding
    p.values_mut()
        .copy_from_slice(&[0.0, 0.0, 0.0, 0.0, 100.0, 0.0]);
    let data = Dataset::new(
        Tensor::matrix(2, 2, vec![1.0, -1.0, 0.5, 2.0]).unwrap(),
        vec![0, 1],
        2,
    )
    .unwrap();
    let bn = m.initial_bn_state();
    let ctx = CurvatureContext::new(m, p, bn, data).unwrap();
    for i in 0..2 {
        for col in sample_delta_columns(&ctx, i, None).unwrap() {
            assert!(norm(&col) <= 1e-20, "{col:?}");
        }
    }
}

/// Samples around `C` well-separated directions, `per` each.
fn clusters(classes: usize, per: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut vectors = vec![];
    let mut labels = vec![];
    for c in 0..classes {
        for k in 0..per {
            let mut v = random(dim, seed * 1000 + (c * per + k) as u64);
            v.iter_mut().for_each(|x| *x *= 0.3);
            v[c] += 1.0;
            vectors.push(v);
            labels.push(c);
        }
    }
    (vectors, labels)
}

#[test]
fn purity_matches_brute_force_assignment() {
    let (vectors, labels) = clusters(4, 50, 6, 1);
    // An independent nearest-mean assignment with explicit loops.
    let mut means = vec![vec![0.0; 6]; 4];
    for (v, &y) in vectors.iter().zip(&labels) {
        for j in 0..6 {
            means[y][j] += v[j] / 50.0;
        }
    }
    let mut hits = 0;
    for (v, &y) in vectors.iter().zip(&labels) {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (c, m) in means.iter().enumerate() {
            let cos = dot(v, m) / (norm(v) * norm(m));
            if cos > best.1 {
                best = (c, cos);
            }
        }
        hits += (best.0 == y) as usize;
    }
    let report = cluster_purity(&DeltaSet::new(vectors, labels, 4, None).unwrap()).unwrap();
    assert_eq!(report.purity, hits as f64 / 200.0);
    assert!(report.purity > 0.9);
    assert!(!report.degenerate);
}

#[test]
fn shuffled_labels_give_chance_purity() {
    let (vectors, mut labels) = clusters(3, 1000, 5, 2);
    labels.shuffle(&mut seeded(3));
    let report = cluster_purity(&DeltaSet::new(vectors, labels, 3, None).unwrap()).unwrap();
    assert!(
        (report.purity - 1.0 / 3.0).abs() <= 0.05,
        "{}",
        report.purity
    );
}

#[test]
fn extracted_deltas_have_one_row_per_probe_sample() {
    let ctx = context(&[4, 8, 3], 10, 4);
    let d = extract_deltas(&ctx, Some(0)).unwrap();
    assert_eq!(d.len(), 30);
    assert_eq!(d.dim(), ctx.params.layers()[0].len);
    assert_eq!(d.labels, ctx.probe.labels());
}
