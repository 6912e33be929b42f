use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Curvature of one scope (the full network or one layer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureMetrics {
    pub lambda_max: f64,
    pub trace: f64,
    pub trace_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
    pub full: Option<CurvatureMetrics>,
    pub layers: Vec<CurvatureMetrics>,
    /// Regularizer applications during this epoch.
    pub htr_steps: usize,
    /// Time spent in optimizer steps.
    pub train_s: f64,
    /// Total time for the epoch, metrics included.
    pub wall_clock_s: f64,
    pub config_hash: String,
    pub seed: u64,
}

impl EpochRecord {
    /// Sum of the layerwise trace estimates.
    pub fn layer_trace_sum(&self) -> Option<f64> {
        (!self.layers.is_empty()).then(|| self.layers.iter().map(|m| m.trace).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub layer_names: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub records: Vec<EpochRecord>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl RunLog {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// CSV with one row per epoch; the two timing columns come last.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,train_loss,train_acc,test_loss,test_acc,lambda_max_full,trace_full,trace_stderr",
        );
        for n in &self.layer_names {
            out.push_str(&format!(",lambda_max_{n},trace_{n},trace_stderr_{n}"));
        }
        out.push_str(",htr_steps,config_hash,seed,train_s,wall_clock_s\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                r.train_acc,
                opt(r.test_loss),
                opt(r.test_acc),
                opt(r.full.map(|m| m.lambda_max)),
                opt(r.full.map(|m| m.trace)),
                opt(r.full.map(|m| m.trace_stderr)),
            ));
            for i in 0..self.layer_names.len() {
                let m = r.layers.get(i);
                out.push_str(&format!(
                    ",{},{},{}",
                    opt(m.map(|m| m.lambda_max)),
                    opt(m.map(|m| m.trace)),
                    opt(m.map(|m| m.trace_stderr))
                ));
            }
            out.push_str(&format!(
                ",{},{},{},{},{}\n",
                r.htr_steps, r.config_hash, r.seed, r.train_s, r.wall_clock_s
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}
