//! Loss, gradient and the first/second-order products of a model, all taken
//! on the autodiff tape.

use crate::autodiff::{Graph, Var};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::models::{BatchStats, BnMode, Model};
use crate::params::ParamVector;
use crate::tensor::Tensor;

/// Mean softmax cross-entropy of `logits` (`[N, C]`) against `labels`,
/// fused through log-sum-exp.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Var {
    let c = g.shape(logits)[1];
    let n = labels.len();
    let lse = g.logsumexp(logits);
    let picked: Vec<usize> = labels.iter().enumerate().map(|(i, &y)| i * c + y).collect();
    let target = g.gather(logits, picked.into(), &[n]);
    let per = g.sub(lse, target);
    let total = g.sum(per);
    g.scale(total, 1.0 / n as f64)
}

/// A recorded forward pass: parameters as a differentiable leaf, logits and
/// the mean loss. Single use; the tape grows with every derivative taken.
#[derive(Debug)]
pub struct LossTape {
    pub graph: Graph,
    pub theta: Var,
    pub logits: Var,
    pub loss: Var,
    pub batch_stats: Vec<BatchStats>,
    layout: ParamVector,
}

impl LossTape {
    pub fn loss_value(&self) -> f64 {
        self.graph.value(self.loss).item()
    }

    pub fn logits_value(&self) -> &Tensor {
        self.graph.value(self.logits)
    }

    /// `dL/dtheta` with the layer map of the parameters the tape was built from.
    pub fn gradient(&mut self) -> ParamVector {
        let g = self.graph.grad(self.loss, &[self.theta])[0];
        self.layout
            .with_values(self.graph.value(g).data().to_vec())
            .expect("gradient has parameter dimension")
    }
}

fn check_batch(model: &Model, params: &ParamVector, batch: &Batch) -> Result<()> {
    model.check_params(params)?;
    model.check_inputs(batch.inputs())?;
    if batch.classes() != model.classes() {
        return Err(Error::config(format!(
            "batch has {} classes but model outputs {}",
            batch.classes(),
            model.classes()
        )));
    }
    if !params.is_finite() {
        return Err(Error::numeric("non-finite parameters"));
    }
    Ok(())
}

fn check_direction(params: &ParamVector, v: &[f64]) -> Result<()> {
    if v.len() != params.dim() {
        return Err(Error::shape(format!(
            "direction has {} entries, model has D = {}",
            v.len(),
            params.dim()
        )));
    }
    Ok(())
}

pub fn forward_loss(
    model: &Model,
    params: &ParamVector,
    batch: &Batch,
    bn: BnMode<'_>,
) -> Result<LossTape> {
    check_batch(model, params, batch)?;
    let mut graph = Graph::new();
    let theta = graph.variable(Tensor::vector(params.values().to_vec()));
    let x = graph.constant(batch.inputs().clone());
    let (logits, batch_stats) = model.forward_graph(&mut graph, theta, x, bn);
    let loss = cross_entropy(&mut graph, logits, batch.labels());
    Ok(LossTape {
        graph,
        theta,
        logits,
        loss,
        batch_stats,
        layout: params.zeros_like(),
    })
}

pub fn gradient(tape: &mut LossTape) -> ParamVector {
    tape.gradient()
}

/// Exact Hessian-vector product: the gradient of `<dL/dtheta, v>`.
pub fn hvp(
    model: &Model,
    params: &ParamVector,
    batch: &Batch,
    v: &[f64],
    bn: BnMode<'_>,
) -> Result<Vec<f64>> {
    check_direction(params, v)?;
    let mut tape = forward_loss(model, params, batch, bn)?;
    let g = &mut tape.graph;
    let grad = g.grad(tape.loss, &[tape.theta])[0];
    let vv = g.constant(Tensor::vector(v.to_vec()));
    let s = g.dot(grad, vv);
    let hv = g.grad(s, &[tape.theta])[0];
    Ok(g.value(hv).data().to_vec())
}

/// `(df/dtheta) v` for every sample: `[N, C]`.
///
/// Computed by the double-reverse trick: with `w(u) = (df/dtheta)^T u`
/// built on the tape, `d<w(u), v>/du = (df/dtheta) v`, independent of `u`.
pub fn jvp_outputs(
    model: &Model,
    params: &ParamVector,
    inputs: &Tensor,
    v: &[f64],
    bn: BnMode<'_>,
) -> Result<Tensor> {
    model.check_params(params)?;
    model.check_inputs(inputs)?;
    check_direction(params, v)?;
    let mut g = Graph::new();
    let theta = g.variable(Tensor::vector(params.values().to_vec()));
    let x = g.constant(inputs.clone());
    let (f, _) = model.forward_graph(&mut g, theta, x, bn);
    Ok(jvp_on_tape(&mut g, theta, f, v))
}

pub(crate) fn jvp_on_tape(g: &mut Graph, theta: Var, f: Var, v: &[f64]) -> Tensor {
    let shape = g.shape(f).to_vec();
    let u = g.variable(Tensor::zeros(&shape));
    let uf = g.dot(u, f);
    let w = g.grad(uf, &[theta])[0];
    let vv = g.constant(Tensor::vector(v.to_vec()));
    let s = g.dot(w, vv);
    let jv = g.grad(s, &[u])[0];
    g.value(jv).clone()
}

/// `(df/dtheta)^T u` summed over samples, with `u` of shape `[N, C]`.
pub fn vjp_outputs(
    model: &Model,
    params: &ParamVector,
    inputs: &Tensor,
    u: &Tensor,
    bn: BnMode<'_>,
) -> Result<ParamVector> {
    model.check_params(params)?;
    model.check_inputs(inputs)?;
    let expected = [inputs.shape()[0], model.classes()];
    if u.shape() != expected {
        return Err(Error::shape(format!(
            "cotangent {:?} should be {expected:?}",
            u.shape()
        )));
    }
    let mut g = Graph::new();
    let theta = g.variable(Tensor::vector(params.values().to_vec()));
    let x = g.constant(inputs.clone());
    let (f, _) = model.forward_graph(&mut g, theta, x, bn);
    let values = vjp_on_tape(&mut g, theta, f, u);
    params.with_values(values)
}

pub(crate) fn vjp_on_tape(g: &mut Graph, theta: Var, f: Var, u: &Tensor) -> Vec<f64> {
    let uc = g.constant(u.clone());
    let s = g.dot(uc, f);
    let w = g.grad(s, &[theta])[0];
    g.value(w).data().to_vec()
}
