//! Per-sample δ vectors: the columns of `J_i^T M_i`, where `M_i M_i^T = B_i`
//! is the logit curvature of sample `i`. Their Gram mean reconstructs the
//! Gauss-Newton matrix; their per-sample averages cluster by class.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::diff;
use crate::error::{Error, Result};
use crate::hessops::{CurvatureContext, LogitCurvature};
use crate::models::BnMode;
use crate::tensor::{dot, norm, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSet {
    /// `δ_{i,c}`: one vector per sample.
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// `δ_c`; `None` for classes absent from the sample.
    pub class_means: Vec<Option<Vec<f64>>>,
    pub layer: Option<usize>,
}

impl DeltaSet {
    pub fn new(
        vectors: Vec<Vec<f64>>,
        labels: Vec<usize>,
        classes: usize,
        layer: Option<usize>,
    ) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::shape("one label per delta vector"));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::config(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::shape("delta vectors differ in length"));
        }
        let mut sums = vec![vec![0.0; dim]; classes];
        let mut counts = vec![0usize; classes];
        for (v, &y) in vectors.iter().zip(&labels) {
            counts[y] += 1;
            for (s, x) in sums[y].iter_mut().zip(v) {
                *s += x;
            }
        }
        let class_means = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| (n > 0).then(|| s.into_iter().map(|x| x / n as f64).collect()))
            .collect();
        Ok(DeltaSet {
            vectors,
            labels,
            classes,
            class_means,
            layer,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// One row per sample: `label,d0,d1,...`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("label");
        for j in 0..self.dim() {
            out.push_str(&format!(",d{j}"));
        }
        out.push('\n');
        for (v, y) in self.vectors.iter().zip(&self.labels) {
            out.push_str(&y.to_string());
            for x in v {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// The `C` columns `δ_{i,c,c'} = J_i^T M_i e_{c'}` for probe sample `i`,
/// optionally restricted to one layer's parameters.
pub fn sample_delta_columns(
    ctx: &CurvatureContext,
    i: usize,
    layer: Option<usize>,
) -> Result<Vec<Vec<f64>>> {
    if i >= ctx.probe.len() {
        return Err(Error::config(format!(
            "sample {i} out of range ({} samples)",
            ctx.probe.len()
        )));
    }
    let range = match layer {
        Some(l) => ctx.params.layer(l)?.range(),
        None => 0..ctx.params.dim(),
    };
    let c = ctx.model.classes();
    let mut g = Graph::new();
    let theta = g.variable(Tensor::vector(ctx.params.values().to_vec()));
    let x = g.constant(Tensor::matrix(
        1,
        ctx.probe.features(),
        ctx.probe.row(i).to_vec(),
    )?);
    let (f, _) = ctx
        .model
        .forward_graph(&mut g, theta, x, BnMode::Eval(&ctx.bn_state));
    let m = LogitCurvature::from_logits(g.value(f).data()).class_factor();
    (0..c)
        .map(|k| {
            let col: Vec<f64> = (0..c).map(|a| m[a * c + k]).collect();
            let full = diff::vjp_on_tape(&mut g, theta, f, &Tensor::matrix(1, c, col)?);
            Ok(full[range.clone()].to_vec())
        })
        .collect()
}

/// `δ_{i,c}` (the mean of the columns over `c'`) for every probe sample.
pub fn extract_deltas(ctx: &CurvatureContext, layer: Option<usize>) -> Result<DeltaSet> {
    let vectors = (0..ctx.probe.len())
        .into_par_iter()
        .map(|i| {
            let cols = sample_delta_columns(ctx, i, layer)?;
            let inv = 1.0 / cols.len() as f64;
            let mut mean = vec![0.0; cols[0].len()];
            for col in &cols {
                for (m, x) in mean.iter_mut().zip(col) {
                    *m += inv * x;
                }
            }
            Ok(mean)
        })
        .collect::<Result<Vec<_>>>()?;
    DeltaSet::new(
        vectors,
        ctx.probe.labels().to_vec(),
        ctx.model.classes(),
        layer,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub purity: f64,
    pub classes_present: usize,
    /// Every vector (or every class mean) is zero, so no direction exists;
    /// `purity` is then chance level `1/C`.
    pub degenerate: bool,
    pub samples: usize,
}

/// Fraction of samples whose nearest class mean by cosine distance carries
/// their own label. Zero vectors are never assigned.
pub fn cluster_purity(deltas: &DeltaSet) -> Result<PurityReport> {
    let present: Vec<(usize, &Vec<f64>)> = deltas
        .class_means
        .iter()
        .enumerate()
        .filter_map(|(c, m)| m.as_ref().map(|m| (c, m)))
        .collect();
    if present.len() < 2 {
        return Err(Error::config(
            "cluster purity needs at least two classes present",
        ));
    }
    let mean_norms: Vec<f64> = present.iter().map(|(_, m)| norm(m)).collect();
    let all_zero =
        deltas.vectors.iter().all(|v| norm(v) == 0.0) || mean_norms.iter().all(|&n| n == 0.0);
    if all_zero {
        log::warn!("all delta vectors are zero; reporting chance-level purity");
        return Ok(PurityReport {
            purity: 1.0 / deltas.classes as f64,
            classes_present: present.len(),
            degenerate: true,
            samples: deltas.len(),
        });
    }
    let mut hits = 0usize;
    for (v, &y) in deltas.vectors.iter().zip(&deltas.labels) {
        let nv = norm(v);
        if nv == 0.0 {
            continue;
        }
        let best = present
            .iter()
            .zip(&mean_norms)
            .filter(|(_, &nm)| nm > 0.0)
            .map(|((c, m), &nm)| (*c, 1.0 - dot(v, m) / (nv * nm)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| c);
        if best == Some(y) {
            hits += 1;
        }
    }
    Ok(PurityReport {
        purity: hits as f64 / deltas.len() as f64,
        classes_present: present.len(),
        degenerate: false,
        samples: deltas.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_means_are_label_averages() {
        let d = DeltaSet::new(
            vec![vec![1.0, 0.0], vec![3.0, 2.0], vec![0.0, 5.0]],
            vec![0, 0, 2],
            3,
            None,
        )
        .unwrap();
        assert_eq!(d.class_means[0], Some(vec![2.0, 1.0]));
        assert_eq!(d.class_means[1], None);
        assert_eq!(d.class_means[2], Some(vec![0.0, 5.0]));
    }

    #[test]
    fn one_hot_vectors_are_pure() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let vectors = labels
            .iter()
            .map(|&y| (0..3).map(|c| if c == y { 1.0 } else { 0.0 }).collect())
            .collect();
        let r = cluster_purity(&DeltaSet::new(vectors, labels, 3, None).unwrap()).unwrap();
        assert_eq!(r.purity, 1.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn zero_vectors_are_flagged() {
        let d = DeltaSet::new(vec![vec![0.0; 4]; 6], vec![0, 1, 2, 0, 1, 2], 3, None).unwrap();
        let r = cluster_purity(&d).unwrap();
        assert!(r.degenerate);
        assert!((r.purity - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_rejected() {
        let d = DeltaSet::new(vec![vec![1.0]; 3], vec![1; 3], 2, None).unwrap();
        assert!(cluster_purity(&d).is_err());
    }
}
