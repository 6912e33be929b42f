use serde::{Deserialize, Serialize};

use super::operator::{symmetric_eigen, SymmetricOperator};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{axpy, dot, norm};

/// A `beta` below this ends the recurrence: the Krylov space is invariant.
pub const BREAKDOWN_TOL: f64 = 1e-10;

/// Output of an `m`-step Lanczos run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalFactor {
    pub alphas: Vec<f64>,
    /// Off-diagonal, one shorter than `alphas`.
    pub betas: Vec<f64>,
    /// Eigenvalues of `T_m`, ascending.
    pub ritz_values: Vec<f64>,
    /// Squared first components of the eigenvectors of `T_m`.
    pub ritz_weights: Vec<f64>,
    pub seed: u64,
    /// True when the recurrence stopped before the requested order.
    pub breakdown: bool,
}

impl TridiagonalFactor {
    pub fn order(&self) -> usize {
        self.alphas.len()
    }

    fn from_diagonals(alphas: Vec<f64>, betas: Vec<f64>, seed: u64, breakdown: bool) -> Self {
        let m = alphas.len();
        let mut t = vec![0.0; m * m];
        for i in 0..m {
            t[i * m + i] = alphas[i];
            if i + 1 < m {
                t[i * m + i + 1] = betas[i];
                t[(i + 1) * m + i] = betas[i];
            }
        }
        let (ritz_values, vecs) = symmetric_eigen(m, &t);
        let ritz_weights = vecs.iter().map(|y| y[0] * y[0]).collect();
        TridiagonalFactor {
            alphas,
            betas,
            ritz_values,
            ritz_weights,
            seed,
            breakdown,
        }
    }
}

/// Lanczos three-term recurrence from a normalized Gaussian start vector.
///
/// With `reorthogonalize` every new direction is projected (twice) against
/// all stored Lanczos vectors; without it the plain recurrence runs.
pub fn lanczos(
    op: &(impl SymmetricOperator + ?Sized),
    m: usize,
    seed: u64,
    reorthogonalize: bool,
) -> Result<TridiagonalFactor> {
    let n = op.dim();
    if m == 0 || m > n {
        return Err(Error::config(format!(
            "lanczos order {m} must be in 1..={n} (operator dimension)"
        )));
    }
    let mut v = rng::gaussian_vector(&mut rng::seeded(seed), n);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(if reorthogonalize { m } else { 0 });
    let mut v_prev = vec![0.0; n];
    let mut beta_prev = 0.0;

    for step in 0..m {
        let mut w = op.apply(&v)?;
        if step > 0 {
            axpy(-beta_prev, &v_prev, &mut w);
        }
        let alpha = dot(&w, &v);
        if !alpha.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite alpha at lanczos step {step} (seed {seed})"
            )));
        }
        alphas.push(alpha);
        axpy(-alpha, &v, &mut w);
        if reorthogonalize {
            basis.push(v.clone());
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&w, q);
                    axpy(-c, q, &mut w);
                }
            }
        }
        if step + 1 == m {
            break;
        }
        let beta = norm(&w);
        if !beta.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite beta at lanczos step {step} (seed {seed})"
            )));
        }
        if beta < BREAKDOWN_TOL {
            return Ok(TridiagonalFactor::from_diagonals(alphas, betas, seed, true));
        }
        betas.push(beta);
        w.iter_mut().for_each(|x| *x /= beta);
        v_prev = std::mem::replace(&mut v, w);
        beta_prev = beta;
    }
    Ok(TridiagonalFactor::from_diagonals(
        alphas, betas, seed, false,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenMode {
    /// Largest algebraic eigenvalue.
    Algebraic,
    /// Largest eigenvalue magnitude.
    Magnitude,
}

/// Extreme eigenvalue from one reorthogonalized Lanczos run of order
/// `min(m, dim)`.
pub fn lambda_max(
    op: &(impl SymmetricOperator + ?Sized),
    m: usize,
    seed: u64,
    mode: EigenMode,
) -> Result<f64> {
    let f = lanczos(op, m.min(op.dim()), seed, true)?;
    let top = *f.ritz_values.last().expect("nonempty factor");
    Ok(match mode {
        EigenMode::Algebraic => top,
        EigenMode::Magnitude => top.abs().max(f.ritz_values[0].abs()),
    })
}
