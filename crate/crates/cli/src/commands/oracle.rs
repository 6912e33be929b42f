use std::fmt::Write as _;

use hesslens::hessops::{gauss_newton_op, hessian_op, materialize_dense, DENSE_LIMIT};
use hesslens::spectral::{lambda_max, DenseOperator, EigenMode, SymmetricOperator};
use hesslens::{Error, Result};
use serde::Serialize;

use super::{context, load};
use crate::cli::OracleArgs;
use crate::manifest::OutDir;

#[derive(Serialize)]
struct LayerTrace {
    layer: usize,
    name: String,
    trace: f64,
}

#[derive(Serialize)]
struct Report {
    dim: usize,
    trace: f64,
    layer_traces: Vec<LayerTrace>,
    layer_trace_sum: f64,
    gauss_newton_trace: f64,
    lambda_max_dense: f64,
    lambda_max_lanczos: f64,
    lambda_max_rel_error: f64,
    /// Frobenius norm of the antisymmetric part before symmetrization.
    hessian_asymmetry: f64,
    gauss_newton_asymmetry: f64,
}

fn matrix_csv(m: &DenseOperator) -> String {
    let n = m.dim();
    let mut s = String::with_capacity(n * n * 12);
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{}", m.get(i, j)).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn run(a: &OracleArgs) -> Result<()> {
    // Refuse on the checkpoint alone, before loading data or building anything.
    let ck = hesslens::train::load_checkpoint(&a.ckpt)?;
    if ck.params.dim() > DENSE_LIMIT {
        return Err(Error::Refused(format!(
            "model has {} parameters; dense oracles are limited to {DENSE_LIMIT}",
            ck.params.dim()
        )));
    }
    drop(ck);

    let mut out = OutDir::create(&a.out)?;
    let l = load(&a.ckpt, &a.data.data, &mut out)?;
    let ctx = context(&l, &a.data, a.seed)?;
    let h = materialize_dense(&hessian_op(&ctx))?;
    let g = materialize_dense(&gauss_newton_op(&ctx, None)?)?;

    let eig = h.matrix.eigenvalues();
    let dense_max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lanczos_max = lambda_max(&hessian_op(&ctx), a.lanczos_m, a.seed, EigenMode::Algebraic)?;

    let layer_traces: Vec<LayerTrace> =
        l.ck.params
            .layers()
            .iter()
            .enumerate()
            .map(|(k, seg)| LayerTrace {
                layer: k,
                name: seg.name.clone(),
                trace: h.matrix.block(seg.range()).trace(),
            })
            .collect();

    out.write("hessian.csv", matrix_csv(&h.matrix))?;
    out.write("gauss_newton.csv", matrix_csv(&g.matrix))?;
    let mut ev = String::from("index,hessian,gauss_newton\n");
    let geig = g.matrix.eigenvalues();
    for (i, (a, b)) in eig.iter().zip(&geig).enumerate() {
        writeln!(ev, "{i},{a},{b}").unwrap();
    }
    out.write("eigenvalues.csv", ev)?;

    let report = Report {
        dim: h.matrix.dim(),
        trace: h.matrix.trace(),
        layer_trace_sum: layer_traces.iter().map(|t| t.trace).sum(),
        layer_traces,
        gauss_newton_trace: g.matrix.trace(),
        lambda_max_dense: dense_max,
        lambda_max_lanczos: lanczos_max,
        lambda_max_rel_error: (lanczos_max - dense_max).abs()
            / dense_max.abs().max(f64::MIN_POSITIVE),
        hessian_asymmetry: h.asymmetry,
        gauss_newton_asymmetry: g.asymmetry,
    };
    log::info!(
        "dense lambda_max {} (lanczos {}), trace {}",
        report.lambda_max_dense,
        report.lambda_max_lanczos,
        report.trace
    );
    out.write_json("oracle.json", &report)?;
    out.finish("oracle", a, a.seed)
}
