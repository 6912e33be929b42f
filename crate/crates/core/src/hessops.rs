//! Matrix-free curvature operators of the mean cross-entropy loss over a
//! fixed probe set: the full Hessian, its diagonal layer blocks, the
//! Gauss-Newton term `G = Ave J^T B J` (full or per layer) and the residual
//! `H = Hess - G`.
//!
//! Every operator binds an immutable parameter snapshot, batch-norm running
//! statistics and probe set at construction. Batch-norm layers are evaluated
//! in eval mode so the operators are derivatives of a fixed function of the
//! parameters. Each `apply` records its own tape, so operators can be shared
//! across threads.

use std::sync::Arc;

use rayon::prelude::*;

use crate::autodiff::Graph;
use crate::data::Dataset;
use crate::diff::{self, cross_entropy};
use crate::error::{Error, Result};
use crate::models::{BnMode, BnState, Model};
use crate::params::ParamVector;
use crate::spectral::operator::{check_dim, symmetric_eigen, DenseOperator, SymmetricOperator};
use crate::tensor::Tensor;

/// Largest operator [`materialize_dense`] will build.
pub const DENSE_LIMIT: usize = 5000;

/// Logit-space curvature `B = d^2 L / dz^2 = diag(p) - p p^T` of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitCurvature {
    pub classes: usize,
    pub probs: Vec<f64>,
    /// Row-major `C x C`.
    pub b: Vec<f64>,
}

impl LogitCurvature {
    pub fn from_logits(z: &[f64]) -> Self {
        let c = z.len();
        let p = Tensor::matrix(1, c, z.to_vec())
            .expect("row")
            .softmax_rows()
            .into_data();
        let mut b = vec![0.0; c * c];
        for i in 0..c {
            for j in 0..c {
                b[i * c + j] = if i == j { p[i] } else { 0.0 } - p[i] * p[j];
            }
        }
        LogitCurvature {
            classes: c,
            probs: p,
            b,
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let c = self.classes;
        (0..c)
            .map(|i| (0..c).map(|j| self.b[i * c + j] * v[j]).sum())
            .collect()
    }

    /// Symmetric PSD square root via eigendecomposition; eigenvalues in
    /// `(-1e-12, 0)` are clamped to zero.
    pub fn sqrt(&self) -> Result<Vec<f64>> {
        let c = self.classes;
        let (vals, vecs) = symmetric_eigen(c, &self.b);
        let mut out = vec![0.0; c * c];
        for (lam, u) in vals.iter().zip(&vecs) {
            let lam = if *lam < 0.0 {
                if *lam > -1e-12 {
                    0.0
                } else {
                    return Err(Error::numeric(format!(
                        "logit curvature has negative eigenvalue {lam}"
                    )));
                }
            } else {
                *lam
            };
            let s = lam.sqrt();
            for i in 0..c {
                for j in 0..c {
                    out[i * c + j] += s * u[i] * u[j];
                }
            }
        }
        Ok(out)
    }

    /// Non-symmetric factor `M = (I - p 1^T) diag(sqrt p)` with `M M^T = B`.
    /// Column `c'` is `(e_{c'} - p) sqrt(p_{c'})`.
    pub fn class_factor(&self) -> Vec<f64> {
        let c = self.classes;
        let mut m = vec![0.0; c * c];
        for a in 0..c {
            for k in 0..c {
                let e = if a == k { 1.0 } else { 0.0 };
                m[a * c + k] = (e - self.probs[a]) * self.probs[k].sqrt();
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Hessian,
    LayerHessian,
    GaussNewton,
    LayerGaussNewton,
    HResidual,
}

impl OperatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Hessian => "hessian",
            OperatorKind::LayerHessian => "layer-hessian",
            OperatorKind::GaussNewton => "gauss-newton",
            OperatorKind::LayerGaussNewton => "layer-gauss-newton",
            OperatorKind::HResidual => "h-residual",
        }
    }
}

/// Immutable snapshot every operator of one analysis shares.
#[derive(Debug)]
pub struct CurvatureContext {
    pub model: Model,
    pub params: ParamVector,
    pub bn_state: BnState,
    pub probe: Dataset,
}

impl CurvatureContext {
    pub fn new(
        model: Model,
        params: ParamVector,
        bn_state: BnState,
        probe: Dataset,
    ) -> Result<Arc<Self>> {
        if probe.is_empty() {
            return Err(Error::config("probe set is empty"));
        }
        model.check_params(&params)?;
        model.check_inputs(probe.inputs())?;
        if probe.classes() != model.classes() {
            return Err(Error::config(format!(
                "probe set has {} classes, model outputs {}",
                probe.classes(),
                model.classes()
            )));
        }
        Ok(Arc::new(CurvatureContext {
            model,
            params,
            bn_state,
            probe,
        }))
    }

    fn bn(&self) -> BnMode<'_> {
        BnMode::Eval(&self.bn_state)
    }

    pub fn full_hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        diff::hvp(&self.model, &self.params, &self.probe, v, self.bn())
    }

    /// `Ave_i J_i^T B_i J_i v`.
    pub fn full_gnvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.params.dim(), v)?;
        let mut g = Graph::new();
        let theta = g.variable(Tensor::vector(self.params.values().to_vec()));
        let x = g.constant(self.probe.inputs().clone());
        let (f, _) = self.model.forward_graph(&mut g, theta, x, self.bn());
        let jv = diff::jvp_on_tape(&mut g, theta, f, v);
        let (n, c) = jv.dims2();
        let logits = g.value(f).data();
        let mut r = Vec::with_capacity(n * c);
        for i in 0..n {
            let b = LogitCurvature::from_logits(&logits[i * c..(i + 1) * c]);
            r.extend(b.apply(&jv.data()[i * c..(i + 1) * c]));
        }
        let r = Tensor::matrix(n, c, r)?;
        let mut out = diff::vjp_on_tape(&mut g, theta, f, &r);
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|x| *x *= inv);
        Ok(out)
    }

    /// Mean loss over the probe set (eval-mode batch norm).
    pub fn loss(&self) -> Result<f64> {
        let mut g = Graph::new();
        let theta = g.constant(Tensor::vector(self.params.values().to_vec()));
        let x = g.constant(self.probe.inputs().clone());
        let (f, _) = self.model.forward_graph(&mut g, theta, x, self.bn());
        let l = cross_entropy(&mut g, f, self.probe.labels());
        Ok(g.value(l).item())
    }
}

/// A symmetric curvature operator bound to a [`CurvatureContext`].
#[derive(Debug, Clone)]
pub struct CurvatureOperator {
    kind: OperatorKind,
    ctx: Arc<CurvatureContext>,
    layer: Option<usize>,
}

impl CurvatureOperator {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn layer(&self) -> Option<usize> {
        self.layer
    }

    pub fn context(&self) -> &Arc<CurvatureContext> {
        &self.ctx
    }

    fn embed(&self, v: &[f64]) -> Vec<f64> {
        match self.layer {
            None => v.to_vec(),
            Some(l) => {
                let seg = &self.ctx.params.layers()[l];
                let mut full = vec![0.0; self.ctx.params.dim()];
                full[seg.range()].copy_from_slice(v);
                full
            }
        }
    }

    fn extract(&self, full: Vec<f64>) -> Vec<f64> {
        match self.layer {
            None => full,
            Some(l) => full[self.ctx.params.layers()[l].range()].to_vec(),
        }
    }
}

impl SymmetricOperator for CurvatureOperator {
    fn dim(&self) -> usize {
        match self.layer {
            None => self.ctx.params.dim(),
            Some(l) => self.ctx.params.layers()[l].len,
        }
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v)?;
        let full = self.embed(v);
        let out = match self.kind {
            OperatorKind::Hessian | OperatorKind::LayerHessian => self.ctx.full_hvp(&full)?,
            OperatorKind::GaussNewton | OperatorKind::LayerGaussNewton => {
                self.ctx.full_gnvp(&full)?
            }
            OperatorKind::HResidual => {
                let mut h = self.ctx.full_hvp(&full)?;
                let gv = self.ctx.full_gnvp(&full)?;
                for (a, b) in h.iter_mut().zip(gv) {
                    *a -= b;
                }
                h
            }
        };
        Ok(self.extract(out))
    }
}

fn check_layer(ctx: &CurvatureContext, l: usize) -> Result<()> {
    if l >= ctx.params.num_layers() {
        return Err(Error::config(format!(
            "layer index {l} out of range (L = {})",
            ctx.params.num_layers()
        )));
    }
    Ok(())
}

/// Hessian of the mean loss over the probe set.
pub fn hessian_op(ctx: &Arc<CurvatureContext>) -> CurvatureOperator {
    CurvatureOperator {
        kind: OperatorKind::Hessian,
        ctx: ctx.clone(),
        layer: None,
    }
}

/// Diagonal block `Hess_l` of layer `l`.
pub fn layer_hessian_op(ctx: &Arc<CurvatureContext>, l: usize) -> Result<CurvatureOperator> {
    check_layer(ctx, l)?;
    Ok(CurvatureOperator {
        kind: OperatorKind::LayerHessian,
        ctx: ctx.clone(),
        layer: Some(l),
    })
}

/// Gauss-Newton term `G`, or its diagonal block `G_l` when `layer` is given.
pub fn gauss_newton_op(
    ctx: &Arc<CurvatureContext>,
    layer: Option<usize>,
) -> Result<CurvatureOperator> {
    if let Some(l) = layer {
        check_layer(ctx, l)?;
    }
    Ok(CurvatureOperator {
        kind: if layer.is_some() {
            OperatorKind::LayerGaussNewton
        } else {
            OperatorKind::GaussNewton
        },
        ctx: ctx.clone(),
        layer,
    })
}

/// `H = Hess - G` (or `H_l = Hess_l - G_l`) from a matching pair.
pub fn h_residual_op(
    hessian: &CurvatureOperator,
    gauss_newton: &CurvatureOperator,
) -> Result<CurvatureOperator> {
    let hk = matches!(
        hessian.kind,
        OperatorKind::Hessian | OperatorKind::LayerHessian
    );
    let gk = matches!(
        gauss_newton.kind,
        OperatorKind::GaussNewton | OperatorKind::LayerGaussNewton
    );
    if !hk || !gk {
        return Err(Error::config(format!(
            "h_residual_op needs (hessian, gauss-newton), got ({}, {})",
            hessian.kind.as_str(),
            gauss_newton.kind.as_str()
        )));
    }
    if hessian.layer != gauss_newton.layer || hessian.dim() != gauss_newton.dim() {
        return Err(Error::shape(format!(
            "operator dimensions differ: {} vs {}",
            hessian.dim(),
            gauss_newton.dim()
        )));
    }
    if !Arc::ptr_eq(&hessian.ctx, &gauss_newton.ctx) {
        return Err(Error::config(
            "operators are bound to different snapshots or probe sets",
        ));
    }
    Ok(CurvatureOperator {
        kind: OperatorKind::HResidual,
        ctx: hessian.ctx.clone(),
        layer: hessian.layer,
    })
}

/// Dense materialization via `apply(e_j)`, symmetrized as `(A + A^T) / 2`.
#[derive(Debug, Clone)]
pub struct DenseMaterialization {
    pub matrix: DenseOperator,
    /// Frobenius norm of `(A - A^T) / 2` before symmetrization.
    pub asymmetry: f64,
}

pub fn materialize_dense(op: &(impl SymmetricOperator + ?Sized)) -> Result<DenseMaterialization> {
    let n = op.dim();
    if n > DENSE_LIMIT {
        return Err(Error::Refused(format!(
            "dense materialization of dimension {n} exceeds the limit of {DENSE_LIMIT}"
        )));
    }
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            op.apply(&e)
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0.0; n * n];
    let mut asym = 0.0;
    for i in 0..n {
        for j in 0..n {
            // cols[j][i] = A[i][j]
            let (aij, aji) = (cols[j][i], cols[i][j]);
            data[i * n + j] = 0.5 * (aij + aji);
            asym += (0.5 * (aij - aji)).powi(2);
        }
    }
    Ok(DenseMaterialization {
        matrix: DenseOperator::new(n, data)?,
        asymmetry: asym.sqrt(),
    })
}

/// Rows `∂f_c/∂θ` of one probe sample's output Jacobian, from one
/// reverse pass per class on a single-sample tape.
pub fn sample_jacobian(ctx: &CurvatureContext, i: usize) -> Result<Vec<Vec<f64>>> {
    if i >= ctx.probe.len() {
        return Err(Error::config(format!(
            "sample {i} out of range ({} samples)",
            ctx.probe.len()
        )));
    }
    let c = ctx.model.classes();
    let mut g = Graph::new();
    let theta = g.variable(Tensor::vector(ctx.params.values().to_vec()));
    let x = g.constant(Tensor::matrix(
        1,
        ctx.probe.features(),
        ctx.probe.row(i).to_vec(),
    )?);
    let (f, _) = ctx.model.forward_graph(&mut g, theta, x, ctx.bn());
    (0..c)
        .map(|k| {
            let mut e = vec![0.0; c];
            e[k] = 1.0;
            Ok(diff::vjp_on_tape(
                &mut g,
                theta,
                f,
                &Tensor::matrix(1, c, e)?,
            ))
        })
        .collect()
}

/// `G = Ave_i J_i^T B_i J_i` assembled from explicit per-sample Jacobians.
/// An independent check on the matrix-free Gauss-Newton product.
pub fn explicit_gauss_newton(ctx: &CurvatureContext) -> Result<DenseOperator> {
    let d = ctx.params.dim();
    if d > DENSE_LIMIT {
        return Err(Error::Refused(format!(
            "dense Gauss-Newton of dimension {d} exceeds the limit of {DENSE_LIMIT}"
        )));
    }
    let c = ctx.model.classes();
    let n = ctx.probe.len();
    let logits = ctx
        .model
        .logits(&ctx.params, ctx.probe.inputs(), ctx.bn())?;
    let sum = (0..n)
        .into_par_iter()
        .try_fold(
            || vec![0.0; d * d],
            |mut out, i| -> Result<Vec<f64>> {
                let j = sample_jacobian(ctx, i)?;
                let b = LogitCurvature::from_logits(&logits.data()[i * c..(i + 1) * c]);
                // (B J) row a = sum_b B[a][b] J[b]
                let mut bj = vec![vec![0.0; d]; c];
                for a in 0..c {
                    for k in 0..c {
                        let w = b.b[a * c + k];
                        for (o, x) in bj[a].iter_mut().zip(&j[k]) {
                            *o += w * x;
                        }
                    }
                }
                for a in 0..c {
                    for p in 0..d {
                        let jp = j[a][p];
                        if jp == 0.0 {
                            continue;
                        }
                        for (o, x) in out[p * d..(p + 1) * d].iter_mut().zip(&bj[a]) {
                            *o += jp * x;
                        }
                    }
                }
                Ok(out)
            },
        )
        .try_reduce(
            || vec![0.0; d * d],
            |mut acc, x| {
                acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
                Ok(acc)
            },
        )?;
    let inv = 1.0 / n as f64;
    DenseOperator::new(d, sum.into_iter().map(|x| x * inv).collect())
}
