use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::operator::SymmetricOperator;
use crate::error::{Error, Result};
use crate::rng::{self, ProbeDistribution};
use crate::tensor::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub mean: f64,
    /// Sample standard deviation over probes divided by `sqrt(n)`; zero for `n = 1`.
    pub stderr: f64,
    pub n: usize,
    pub distribution: ProbeDistribution,
    pub seed: u64,
}

impl TraceEstimate {
    pub fn from_samples(samples: &[f64], distribution: ProbeDistribution, seed: u64) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        TraceEstimate {
            mean,
            stderr,
            n,
            distribution,
            seed,
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Quadratic forms `v^T A v` for `n` independent probes; probe `p` draws from
/// the stream seeded with `seed ^ p`.
pub fn hutchinson_samples(
    op: &(impl SymmetricOperator + ?Sized),
    n: usize,
    distribution: ProbeDistribution,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::config("hutchinson needs at least one probe"));
    }
    let d = op.dim();
    (0..n as u64)
        .into_par_iter()
        .map(|p| {
            let ps = rng::probe_seed(seed, p);
            let v = rng::probe_vector(&mut rng::seeded(ps), d, distribution);
            let q = dot(&v, &op.apply(&v)?);
            if q.is_finite() {
                Ok(q)
            } else {
                Err(Error::numeric(format!(
                    "non-finite quadratic form for probe {p} (probe seed {ps})"
                )))
            }
        })
        .collect()
}

pub fn hutchinson_trace(
    op: &(impl SymmetricOperator + ?Sized),
    n: usize,
    distribution: ProbeDistribution,
    seed: u64,
) -> Result<TraceEstimate> {
    let samples = hutchinson_samples(op, n, distribution, seed)?;
    Ok(TraceEstimate::from_samples(&samples, distribution, seed))
}
