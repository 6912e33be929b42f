//! Gradient of the stochastic layerwise trace penalty.
//!
//! For probes `v_p` supported on the selected layers, the estimate
//! `(1/P) sum_p v_p^T H v_p` equals `sum_{l in S} Tr(Hess_l)` in
//! expectation. It is recorded on the tape (forward, gradient, Hessian-vector
//! product) and differentiated once more, so the result is exact for the
//! drawn probes. ReLU kinks contribute zero third derivative.

use crate::autodiff::{Graph, Var};
use crate::data::Batch;
use crate::diff::cross_entropy;
use crate::error::{Error, Result};
use crate::models::{BnMode, Model};
use crate::params::ParamVector;
use crate::rng;
use crate::tensor::Tensor;

/// Value and parameter gradient of the probe-averaged quadratic form
/// `(1/P) sum_p v_p^T (d^2 L / dtheta^2) v_p`, where `build` records the
/// scalar loss as a function of the parameter leaf.
pub fn trace_penalty_gradient<F>(
    theta0: &[f64],
    probes: &[Vec<f64>],
    build: F,
) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Graph, Var) -> Var,
{
    if probes.is_empty() {
        return Err(Error::config("trace penalty needs at least one probe"));
    }
    if let Some(v) = probes.iter().find(|v| v.len() != theta0.len()) {
        return Err(Error::shape(format!(
            "probe has {} entries, parameters {}",
            v.len(),
            theta0.len()
        )));
    }
    let mut g = Graph::new();
    let theta = g.variable(Tensor::vector(theta0.to_vec()));
    let loss = build(&mut g, theta);
    let grad = g.grad(loss, &[theta])[0];
    let mut total: Option<Var> = None;
    for v in probes {
        let vv = g.constant(Tensor::vector(v.clone()));
        let s = g.dot(grad, vv);
        let hv = g.grad(s, &[theta])[0];
        let q = g.dot(hv, vv);
        total = Some(match total {
            Some(t) => g.add(t, q),
            None => q,
        });
    }
    let mean = g.scale(total.expect("nonempty probes"), 1.0 / probes.len() as f64);
    let value = g.value(mean).item();
    let d = g.grad(mean, &[theta])[0];
    let out = g.value(d).data().to_vec();
    if !value.is_finite() || out.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("non-finite trace penalty gradient"));
    }
    Ok((value, out))
}

/// Rademacher probes that are zero outside the selected layers; probe `p`
/// uses the stream `seed ^ p`.
pub fn layer_probes(
    params: &ParamVector,
    selection: &[usize],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let ranges = selection
        .iter()
        .map(|&l| params.layer(l).map(|s| s.range()))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n as u64)
        .map(|p| {
            let mut r = rng::seeded(rng::probe_seed(seed, p));
            let mut v = vec![0.0; params.dim()];
            for range in &ranges {
                let s = rng::rademacher_vector(&mut r, range.len());
                v[range.clone()].copy_from_slice(&s);
            }
            v
        })
        .collect())
}

/// `d/dtheta` of the Hutchinson estimate of `sum_{l in selection} Tr(Hess_l)`
/// on `batch`. The caller scales by the penalty weight.
pub fn htr_penalty_gradient(
    model: &Model,
    params: &ParamVector,
    batch: &Batch,
    selection: &[usize],
    probes: usize,
    seed: u64,
    bn: BnMode<'_>,
) -> Result<ParamVector> {
    if selection.is_empty() {
        return Err(Error::config("layer selection is empty"));
    }
    model.check_params(params)?;
    model.check_inputs(batch.inputs())?;
    let vs = layer_probes(params, selection, probes, seed)?;
    let (_, grad) = trace_penalty_gradient(params.values(), &vs, |g, theta| {
        let x = g.constant(batch.inputs().clone());
        let (f, _) = model.forward_graph(g, theta, x, bn);
        cross_entropy(g, f, batch.labels())
    })?;
    params.with_values(grad)
}
