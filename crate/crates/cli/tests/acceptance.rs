//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! with the measured values; the suite then prints a summary.
//!
//! The process exits successfully even when a criterion fails, so that a
//! failing scientific claim is reported rather than hidden behind a red
//! build. Set `HESSLENS_ACCEPTANCE_STRICT=1` to turn any FAIL into a nonzero
//! exit status.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::*;
use hesslens::analysis::sample_delta_columns;
use hesslens::autodiff::Graph;
use hesslens::data::{make_blobs, BlobSpec, Dataset};
use hesslens::diff::{forward_loss, gradient, hvp};
use hesslens::hessops::{
    explicit_gauss_newton, gauss_newton_op, h_residual_op, hessian_op, layer_hessian_op,
    materialize_dense, CurvatureContext,
};
use hesslens::models::{build, BnMode, Model, ModelSpec};
use hesslens::params::ParamVector;
use hesslens::rng::{derive_seed, gaussian_vector, seeded, ProbeDistribution};
use hesslens::spectral::{
    hutchinson_trace, lanczos, slq_density, DenseOperator, SlqConfig, SymmetricOperator,
};
use hesslens::tensor::Tensor;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const BLOB_MLP: &str = "mlp:16-32-32-3";
const BLOB_MLP_5: &str = "mlp:16-32-32-5";
const DEEP_MLP: &str = "mlp:16-32-32-32-32-32-3";

fn blobs(classes: usize, seed: u64) -> String {
    format!("blobs:C={classes},n=500,dim=16,sep=6,test=200,seed={seed}")
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn fmt(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", v.join(", "))
}

fn vec_rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    d / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

fn grad_at(m: &Model, p: &ParamVector, data: &Dataset, theta: &[f64]) -> Vec<f64> {
    let p = p.with_values(theta.to_vec()).unwrap();
    let mut tape = forward_loss(m, &p, data, BnMode::Train).unwrap();
    gradient(&mut tape).into_values()
}

fn shifted(theta: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    theta.iter().zip(v).map(|(t, v)| t + a * v).collect()
}

fn fd_hvp(m: &Model, p: &ParamVector, data: &Dataset, v: &[f64], eps: f64) -> Vec<f64> {
    let theta = p.values();
    let gp = grad_at(m, p, data, &shifted(theta, eps, v));
    let gm = grad_at(m, p, data, &shifted(theta, -eps, v));
    gp.iter()
        .zip(&gm)
        .map(|(a, b)| (a - b) / (2.0 * eps))
        .collect()
}

/// 200 samples of a 3-class, 4-feature blob set.
fn oracle_data() -> Dataset {
    let spec = BlobSpec {
        classes: 3,
        per_class: 67,
        dim: 4,
        separation: 3.0,
    };
    let ds = make_blobs(&spec, 8).unwrap();
    ds.subset(&(0..200).collect::<Vec<_>>())
}

fn oracle_context(
    widths: &[usize],
) -> (
    Model,
    ParamVector,
    Dataset,
    std::sync::Arc<CurvatureContext>,
) {
    let (p, m) = build(&ModelSpec::mlp(widths), 3).unwrap();
    let data = oracle_data();
    let ctx =
        CurvatureContext::new(m.clone(), p.clone(), m.initial_bn_state(), data.clone()).unwrap();
    (m, p, data, ctx)
}

fn criterion_1() -> Verdict {
    let (m, p, data, ctx) = oracle_context(&[4, 8, 3]);
    let d = p.dim();
    let dense = materialize_dense(&hessian_op(&ctx)).unwrap().matrix;
    let mut fd = vec![0.0; d * d];
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            fd_hvp(&m, &p, &data, &e, 1e-5)
        })
        .collect();
    for i in 0..d {
        for j in 0..d {
            fd[i * d + j] = 0.5 * (cols[j][i] + cols[i][j]);
        }
    }
    let a = dense.max_abs_diff(&DenseOperator::new(d, fd).unwrap());

    let layer_sum: f64 = (0..p.num_layers())
        .map(|l| {
            materialize_dense(&layer_hessian_op(&ctx, l).unwrap())
                .unwrap()
                .matrix
                .trace()
        })
        .sum();
    let b = (layer_sum - dense.trace()).abs() / dense.trace().abs();

    let explicit = explicit_gauss_newton(&ctx).unwrap();
    let c = materialize_dense(&gauss_newton_op(&ctx, None).unwrap())
        .unwrap()
        .matrix
        .max_abs_diff(&explicit);

    let (_, lp, _, lctx) = oracle_context(&[4, 3]);
    let hess = hessian_op(&lctx);
    let res = h_residual_op(&hess, &gauss_newton_op(&lctx, None).unwrap()).unwrap();
    let dd = (0..5u64)
        .map(|s| {
            let v = gaussian_vector(&mut seeded(s), lp.dim());
            let hv = hess.apply(&v).unwrap();
            let r = res.apply(&v).unwrap();
            r.iter().map(|x| x * x).sum::<f64>().sqrt()
                / hv.iter().map(|x| x * x).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max);

    verdict(
        d == 67 && a <= 1e-5 && b <= 1e-10 && c <= 1e-8 && dd <= 1e-8,
        format!(
            "D = {d}; (a) FD Hessian max abs {a:.2e} (<= 1e-5); (b) layer trace identity rel {b:.2e} (<= 1e-10); \
             (c) explicit G max abs {c:.2e} (<= 1e-8); (d) linear H residual {dd:.2e} x |Hess v| (<= 1e-8)"
        ),
    )
}

fn wigner(n: usize, seed: u64, shift: f64) -> DenseOperator {
    let a = gaussian_vector(&mut seeded(seed), n * n);
    let s = 1.0 / (2.0 * n as f64).sqrt();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = s * (a[i * n + j] + a[j * n + i]) + if i == j { shift } else { 0.0 };
        }
    }
    DenseOperator::new(n, m).unwrap()
}

fn criterion_2() -> Verdict {
    // Shifted off zero so that the first-moment tolerance is relative to a
    // nonzero mean eigenvalue.
    let op = wigner(100, 21, 2.0);
    let f = lanczos(&op, 100, 5, true).unwrap();
    let dense = op.eigenvalues();
    let ritz = f
        .ritz_values
        .iter()
        .zip(&dense)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let density = slq_density(
        &op,
        &SlqConfig {
            seed: 13,
            ..Default::default()
        },
    )
    .unwrap();
    let mass = density.mass();
    let expect = op.trace() / 100.0;
    let first = (density.mean() - expect).abs() / expect.abs();
    verdict(
        f.ritz_values.len() == 100 && ritz <= 1e-7 && (mass - 1.0).abs() <= 0.02 && first <= 0.05,
        format!(
            "max |ritz - eig| {ritz:.2e} (<= 1e-7); zeroth moment {mass:.4} (1 +- 0.02); \
             first moment {:.4} vs Tr/D {expect:.4}, rel {first:.3} (<= 0.05)",
            density.mean()
        ),
    )
}

fn criterion_3() -> Verdict {
    let ident = hutchinson_trace(
        &DenseOperator::identity(100),
        1,
        ProbeDistribution::Rademacher,
        3,
    )
    .unwrap();
    let diag = DenseOperator::diagonal(&(1..=100).map(f64::from).collect::<Vec<_>>());
    let big = hutchinson_trace(&diag, 10_000, ProbeDistribution::Gaussian, 4).unwrap();
    let runs: Vec<f64> = (0..50)
        .map(|r| {
            hutchinson_trace(&diag, 100, ProbeDistribution::Gaussian, derive_seed(77, r))
                .unwrap()
                .mean
        })
        .collect();
    let grand = runs.iter().sum::<f64>() / 50.0;
    let se = (runs.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / 49.0).sqrt() / 50f64.sqrt();
    let ok1 = ident.mean == 100.0;
    let ok2 = (big.mean - 5050.0).abs() <= 3.0 * big.stderr;
    let ok3 = (grand - 5050.0).abs() <= 2.0 * se;
    verdict(
        ok1 && ok2 && ok3,
        format!(
            "Rademacher n=1 on I_100: {}; Gaussian n=10000: {:.1} +- {:.1} (5050 within 3 se: {ok2}); \
             50-run grand mean {grand:.1} +- {se:.1} (within 2 se: {ok3})",
            ident.mean, big.mean, big.stderr
        ),
    )
}

fn criterion_4() -> Verdict {
    let spec: ModelSpec = "lenet:1x12x12:2-4:10:3:k3".parse().unwrap();
    let (p, m) = build(&spec, 5).unwrap();
    let x = gaussian_vector(&mut seeded(77), 40 * 144);
    let data = Dataset::new(
        Tensor::matrix(40, 144, x).unwrap(),
        (0..40).map(|i| i % 3).collect(),
        3,
    )
    .unwrap();
    let worst = (0..20u64)
        .map(|s| {
            let v = gaussian_vector(&mut seeded(1000 + s), p.dim());
            let hv = hvp(&m, &p, &data, &v, BnMode::Train).unwrap();
            vec_rel(&hv, &fd_hvp(&m, &p, &data, &v, 1e-4))
        })
        .fold(0.0, f64::max);

    let n = 8;
    let a0 = gaussian_vector(&mut seeded(9), n * n);
    let a: Vec<f64> = (0..n * n)
        .map(|k| 0.5 * (a0[k] + a0[(k % n) * n + k / n]))
        .collect();
    let theta0 = gaussian_vector(&mut seeded(10), n);
    let v = gaussian_vector(&mut seeded(11), n);
    let mut g = Graph::new();
    let theta = g.variable(Tensor::vector(theta0));
    let am = g.constant(Tensor::matrix(n, n, a.clone()).unwrap());
    let col = g.reshape(theta, &[n, 1]);
    let at = g.matmul(am, col);
    let at = g.reshape(at, &[n]);
    let q = g.dot(theta, at);
    let loss = g.scale(q, 0.5);
    let grad = g.grad(loss, &[theta])[0];
    let vv = g.constant(Tensor::vector(v.clone()));
    let s = g.dot(grad, vv);
    let hv = g.grad(s, &[theta])[0];
    let av: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum())
        .collect();
    let quad = vec_rel(g.value(hv).data(), &av);
    verdict(
        worst <= 1e-4 && quad <= 1e-12,
        format!(
            "LeNet-mini (D = {}) worst relative error over 20 directions {worst:.2e} (<= 1e-4); quadratic {quad:.2e} (<= 1e-12)",
            p.dim()
        ),
    )
}

/// Everything trained once and shared between the end-to-end criteria.
struct Runs {
    root: PathBuf,
    baseline: Vec<PathBuf>,
    htr: Vec<PathBuf>,
}

fn train_blob(
    root: &Path,
    name: &str,
    model: &str,
    classes: usize,
    seed: u64,
    extra: &[&str],
) -> PathBuf {
    let s = seed.to_string();
    let mut args = vec!["--seed", s.as_str()];
    args.extend_from_slice(extra);
    train(root, name, model, &blobs(classes, seed), &args)
}

fn final_row(run: &Path, name: &str) -> f64 {
    *column(&run.join("runlog.csv"), name).last().unwrap()
}

fn criterion_5(runs: &Runs) -> Verdict {
    let mut ok = 0;
    let mut details = vec![];
    for (seed, run) in SEEDS.iter().zip(&runs.baseline) {
        let log = run.join("runlog.csv");
        let trace = column(&log, "trace_full");
        let lmax = column(&log, "lambda_max_full");
        let peak_t = trace.iter().cloned().fold(f64::MIN, f64::max);
        let peak_l = lmax.iter().cloned().fold(f64::MIN, f64::max);
        let (ft, fl) = (*trace.last().unwrap(), *lmax.last().unwrap());
        let pass = ft <= 0.5 * peak_t && fl <= peak_l;
        ok += pass as usize;
        details.push(format!(
            "seed {seed}: trace {ft:.3}/{peak_t:.3} = {:.2}, lambda_max {fl:.3} (peak {peak_l:.3})",
            ft / peak_t
        ));
    }
    verdict(
        ok >= 4,
        format!("{ok}/5 seeds (need 4): {}", details.join("; ")),
    )
}

/// Sum of per-layer Hessian traces at the final checkpoint, measured with
/// the trace command on the run's own training data.
fn layer_trace_sum(root: &Path, run: &Path, seed: u64, tag: &str) -> f64 {
    let out = root.join(format!("trace_{tag}_{seed}"));
    run_ok(&[
        "trace",
        "--ckpt",
        p(&run.join("final.hlns")),
        "--data",
        &blobs(3, seed),
        "--scope",
        "layers",
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    column(&out.join("trace.csv"), "trace_layer_sum")[0]
}

fn criterion_6(runs: &Runs) -> Verdict {
    let mut ok = 0;
    let mut details = vec![];
    for ((seed, base), htr) in SEEDS.iter().zip(&runs.baseline).zip(&runs.htr) {
        let tb = layer_trace_sum(&runs.root, base, *seed, "base");
        let th = layer_trace_sum(&runs.root, htr, *seed, "htr");
        let (ab, ah) = (final_row(base, "test_acc"), final_row(htr, "test_acc"));
        let reduction = 1.0 - th / tb;
        let pass = reduction >= 0.2 && ah >= ab - 0.01;
        ok += pass as usize;
        details.push(format!(
            "seed {seed}: sum Tr {tb:.3} -> {th:.3} ({:+.1}%), test acc {:.3} -> {:.3}",
            -100.0 * reduction,
            ab,
            ah
        ));
    }
    verdict(
        ok >= 4,
        format!("{ok}/5 pairs (need 4): {}", details.join("; ")),
    )
}

fn criterion_7(runs: &Runs) -> Verdict {
    let mut ok = 0;
    let mut details = vec![];
    let mut tables = vec![];
    for seed in SEEDS {
        let run = train_blob(
            &runs.root,
            &format!("deep_{seed}"),
            DEEP_MLP,
            3,
            seed,
            &["--no-metrics"],
        );
        let out = runs.root.join(format!("compare_deep_{seed}"));
        run_ok(&[
            "compare",
            "--ckpt",
            p(&run.join("final.hlns")),
            "--data",
            &blobs(3, seed),
            "--metric",
            "wasserstein",
            "--out",
            p(&out),
        ]);
        let s = read_json(&out.join("summary.json"));
        let arg = s["argmin_wasserstein_layer"].as_u64().unwrap() as usize;
        let band: Vec<usize> = s["middle_layers"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap() as usize)
            .collect();
        let pass = band.contains(&arg);
        ok += pass as usize;
        details.push(format!("seed {seed}: argmin layer {arg} (band {band:?})"));
        if !pass {
            tables.push(format!(
                "\n    seed {seed} table:\n    {}",
                std::fs::read_to_string(out.join("distance_table.csv"))
                    .unwrap()
                    .trim()
                    .replace('\n', "\n    ")
            ));
        }
    }
    verdict(
        ok >= 3,
        format!(
            "{ok}/5 seeds (need 3): {}{}",
            details.join("; "),
            tables.concat()
        ),
    )
}

fn outlier_count(root: &Path, run: &Path, classes: usize, seed: u64, tag: &str) -> usize {
    let out = root.join(format!("compare_{tag}_{seed}"));
    run_ok(&[
        "compare",
        "--ckpt",
        p(&run.join("final.hlns")),
        "--data",
        &blobs(classes, seed),
        "--out",
        p(&out),
    ]);
    read_json(&out.join("outliers.json"))["full"]["count"]
        .as_u64()
        .unwrap() as usize
}

fn criterion_8(runs: &Runs) -> Verdict {
    let three: Vec<usize> = SEEDS
        .iter()
        .zip(&runs.baseline)
        .map(|(&s, run)| outlier_count(&runs.root, run, 3, s, "c3"))
        .collect();
    let five: Vec<usize> = SEEDS
        .iter()
        .map(|&s| {
            let run = train_blob(
                &runs.root,
                &format!("five_{s}"),
                BLOB_MLP_5,
                5,
                s,
                &["--no-metrics"],
            );
            outlier_count(&runs.root, &run, 5, s, "c5")
        })
        .collect();
    let ok3 = three.iter().filter(|c| (2..=4).contains(*c)).count();
    let ok5 = five.iter().filter(|c| (4..=6).contains(*c)).count();
    verdict(
        ok3 >= 3 && ok5 >= 3,
        format!("3-class counts {three:?}: {ok3}/5 in {{2,3,4}}; 5-class counts {five:?}: {ok5}/5 in {{4,5,6}} (majority needed for each)"),
    )
}

fn criterion_9(runs: &Runs) -> Verdict {
    let (_, _, _, ctx) = oracle_context(&[4, 8, 3]);
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
    let gram_err = (0..d * d)
        .map(|k| (gram[k] / n - g.data()[k]).abs())
        .fold(0.0, f64::max);

    let purities: Vec<f64> = SEEDS
        .iter()
        .zip(&runs.baseline)
        .map(|(&s, run)| {
            let out = runs.root.join(format!("deltas_{s}"));
            run_ok(&[
                "deltas",
                "--ckpt",
                p(&run.join("final.hlns")),
                "--data",
                &blobs(3, s),
                "--out",
                p(&out),
            ]);
            read_json(&out.join("purity.json"))["purity"]
                .as_f64()
                .unwrap()
        })
        .collect();
    let ok = purities.iter().filter(|&&x| x >= 0.8).count();
    verdict(
        gram_err <= 1e-8 && ok >= 3,
        format!(
            "Gram reconstruction max abs {gram_err:.2e} (<= 1e-8); purity {} : {ok}/5 >= 0.8 (majority needed)",
            fmt(&purities)
        ),
    )
}

fn mean_train_seconds(run: &Path) -> f64 {
    let t = column(&run.join("runlog.csv"), "train_s");
    let epochs = &t[1..];
    epochs.iter().sum::<f64>() / epochs.len() as f64
}

fn criterion_10(runs: &Runs) -> Verdict {
    let ratios: Vec<f64> = runs
        .baseline
        .iter()
        .zip(&runs.htr)
        .map(|(b, h)| mean_train_seconds(h) / mean_train_seconds(b))
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    verdict(
        mean <= 3.0,
        format!(
            "per-epoch training time ratio HTR(f_r=50)/SGD per seed {} ; mean {mean:.2} (<= 3)",
            fmt(&ratios)
        ),
    )
}

/// Reads every CSV below `dir`, dropping the wall-clock columns.
fn csv_snapshot(dir: &Path) -> Vec<(String, String)> {
    let mut files = vec![];
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|x| x == "csv") {
                let (h, rows) = read_csv(&path);
                let keep: Vec<usize> = (0..h.len())
                    .filter(|&i| h[i] != "train_s" && h[i] != "wall_clock_s")
                    .collect();
                let pick = |r: &Vec<String>| {
                    keep.iter()
                        .map(|&i| r[i].clone())
                        .collect::<Vec<_>>()
                        .join(",")
                };
                let body: Vec<String> = std::iter::once(&h).chain(&rows).map(pick).collect();
                files.push((
                    path.strip_prefix(dir).unwrap().display().to_string(),
                    body.join("\n"),
                ));
            }
        }
    }
    files.sort();
    files
}

fn criterion_11(runs: &Runs) -> Verdict {
    let data = blobs(3, 9);
    let run_all = |dir: &Path| {
        let _ = std::fs::remove_dir_all(dir);
        let t = dir.join("train");
        run_ok(&[
            "train",
            "--model",
            BLOB_MLP,
            "--data",
            &data,
            "--epochs",
            "3",
            "--htr-gamma",
            "0.01",
            "--htr-freq",
            "5",
            "--seed",
            "9",
            "--out",
            p(&t),
        ]);
        let ck = t.join("final.hlns");
        run_ok(&[
            "spectrum",
            "--ckpt",
            p(&ck),
            "--data",
            &data,
            "--scope",
            "layers",
            "--out",
            p(&dir.join("spectrum")),
        ]);
        run_ok(&[
            "trace",
            "--ckpt-dir",
            p(&t.join("checkpoints")),
            "--data",
            &data,
            "--scope",
            "layers",
            "--out",
            p(&dir.join("trace")),
        ]);
        run_ok(&[
            "compare",
            "--ckpt",
            p(&ck),
            "--data",
            &data,
            "--out",
            p(&dir.join("compare")),
        ]);
        run_ok(&[
            "deltas",
            "--ckpt",
            p(&ck),
            "--data",
            &data,
            "--out",
            p(&dir.join("deltas")),
        ]);
        csv_snapshot(dir)
    };
    // The same output directory both times, so the manifests are identical too.
    let dir = runs.root.join("determinism");
    let first = run_all(&dir);
    let manifest = std::fs::read(dir.join("train/manifest.json")).unwrap();
    let second = run_all(&dir);
    let same_manifest = manifest == std::fs::read(dir.join("train/manifest.json")).unwrap();
    let differing: Vec<&String> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| &a.0)
        .collect();
    verdict(
        first.len() == second.len() && differing.is_empty() && same_manifest,
        format!(
            "{} CSV files compared across two invocation sets (wall-clock columns excluded); differing: {differing:?}; identical train manifest: {same_manifest}",
            first.len()
        ),
    )
}

/// Runtime bounds; `None` where no bound applies. Criteria 5 and 6 also
/// count the training runs they depend on.
const BUDGET_S: [Option<f64>; 11] = [
    Some(120.0),
    Some(60.0),
    Some(60.0),
    None,
    Some(600.0),
    Some(1200.0),
    None,
    None,
    None,
    None,
    None,
];

fn main() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let mut results: Vec<(usize, Option<Verdict>)> = vec![];

    let mut record = |n: usize, name: &str, prior_s: f64, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).ok();
        let secs = t.elapsed().as_secs_f64() + prior_s;
        let (in_time, bound) = match BUDGET_S[n - 1] {
            Some(b) => (secs <= b, format!(" of {b:.0}s")),
            None => (true, String::new()),
        };
        let v = v.map(|v| Verdict {
            pass: v.pass && in_time,
            detail: v.detail,
        });
        match &v {
            Some(v) => println!(
                "criterion {n:>2} [{name}]: {} ({secs:.1}s{bound}) {}",
                if v.pass { "PASS" } else { "FAIL" },
                v.detail
            ),
            None => println!(
                "criterion {n:>2} [{name}]: FAIL ({secs:.1}s{bound}) the check itself panicked"
            ),
        }
        results.push((n, v));
    };

    record(1, "oracle suite", 0.0, &mut criterion_1);
    record(2, "Lanczos exactness", 0.0, &mut criterion_2);
    record(3, "Hutchinson correctness", 0.0, &mut criterion_3);
    record(4, "HVP correctness", 0.0, &mut criterion_4);

    let t = Instant::now();
    let baseline: Vec<PathBuf> = SEEDS
        .iter()
        .map(|&s| train_blob(&root, &format!("base_{s}"), BLOB_MLP, 3, s, &[]))
        .collect();
    let base_s = t.elapsed().as_secs_f64();
    let htr: Vec<PathBuf> = SEEDS
        .iter()
        .map(|&s| {
            train_blob(
                &root,
                &format!("htr_{s}"),
                BLOB_MLP,
                3,
                s,
                &["--htr-gamma", "0.01", "--htr-freq", "50"],
            )
        })
        .collect();
    let train_s = t.elapsed().as_secs_f64();
    println!(
        "trained 5 baseline runs of {BLOB_MLP} in {base_s:.1}s and 5 HTR runs in {:.1}s",
        train_s - base_s
    );
    let runs = Runs {
        root: root.clone(),
        baseline,
        htr,
    };

    record(5, "trace and lambda_max trend", base_s, &mut || {
        criterion_5(&runs)
    });
    record(6, "HTR effect", train_s, &mut || criterion_6(&runs));
    record(7, "middle-layer similarity", 0.0, &mut || {
        criterion_7(&runs)
    });
    record(8, "outliers vs classes", 0.0, &mut || criterion_8(&runs));
    record(9, "delta structure", 0.0, &mut || criterion_9(&runs));
    record(10, "HTR cost ratio", 0.0, &mut || criterion_10(&runs));
    record(11, "determinism", 0.0, &mut || criterion_11(&runs));

    let passed = results
        .iter()
        .filter(|r| r.1.as_ref().is_some_and(|v| v.pass))
        .count();
    let failed: Vec<usize> = results
        .iter()
        .filter(|r| !r.1.as_ref().is_some_and(|v| v.pass))
        .map(|r| r.0)
        .collect();
    println!(
        "acceptance: {passed}/{} criteria passed; failed: {failed:?} ({:.0}s total)",
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() && std::env::var("HESSLENS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
