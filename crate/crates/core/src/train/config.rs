use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::ProbeDistribution;

/// Which layers the trace regularizer penalizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerSelection {
    All,
    /// Layers in `[floor(L/4), ceil(3L/4))`.
    Middle,
    List(Vec<usize>),
}

impl FromStr for LayerSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(LayerSelection::All),
            "middle" => Ok(LayerSelection::Middle),
            list => list
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::config(format!("bad layer index {t:?} in {s:?}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(LayerSelection::List),
        }
    }
}

impl fmt::Display for LayerSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelection::All => f.write_str("all"),
            LayerSelection::Middle => f.write_str("middle"),
            LayerSelection::List(v) => {
                let s: Vec<String> = v.iter().map(usize::to_string).collect();
                f.write_str(&s.join(","))
            }
        }
    }
}

/// Resolves a selection against a model with `num_layers` layers; the
/// result is sorted and duplicate-free.
pub fn select_layers(num_layers: usize, mode: &LayerSelection) -> Result<Vec<usize>> {
    let out: Vec<usize> = match mode {
        LayerSelection::All => (0..num_layers).collect(),
        LayerSelection::Middle => {
            let lo = num_layers / 4;
            let hi = (3 * num_layers).div_ceil(4);
            if lo == 0 && hi == num_layers {
                log::warn!("middle layers of a {num_layers}-layer model are all layers");
            }
            (lo..hi).collect()
        }
        LayerSelection::List(v) => {
            if let Some(&bad) = v.iter().find(|&&l| l >= num_layers) {
                return Err(Error::config(format!(
                    "layer index {bad} out of range (L = {num_layers})"
                )));
            }
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            v
        }
    };
    if out.is_empty() {
        return Err(Error::config("layer selection is empty"));
    }
    Ok(out)
}

/// Budget for the curvature metrics logged at every epoch boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub enabled: bool,
    /// Hutchinson probes per trace.
    pub trace_probes: usize,
    pub distribution: ProbeDistribution,
    /// Lanczos iterations for each largest eigenvalue.
    pub lanczos_iters: usize,
    /// Size of the fixed subset of training data the operators average over.
    pub probe_samples: usize,
    pub per_layer: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            enabled: true,
            trace_probes: 16,
            distribution: ProbeDistribution::Rademacher,
            lanczos_iters: 20,
            probe_samples: 512,
            per_layer: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub htr_gamma: f64,
    /// Optimizer steps between regularizer applications; 0 disables it.
    pub htr_frequency: usize,
    pub htr_layers: LayerSelection,
    pub htr_probes: usize,
    pub metrics: MetricConfig,
    /// Emit a checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-2,
            momentum: 0.9,
            l2: 1e-3,
            batch_size: 64,
            epochs: 30,
            seed: 0,
            htr_gamma: 0.0,
            htr_frequency: 0,
            htr_layers: LayerSelection::All,
            htr_probes: 1,
            metrics: MetricConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, name: &str| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "{name} must be finite and positive, got {x}"
                )))
            }
        };
        let non_negative = |x: f64, name: &str| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "{name} must be finite and non-negative, got {x}"
                )))
            }
        };
        positive(self.lr, "learning rate")?;
        non_negative(self.momentum, "momentum")?;
        if self.momentum >= 1.0 {
            return Err(Error::config("momentum must be below 1"));
        }
        non_negative(self.l2, "l2 coefficient")?;
        non_negative(self.htr_gamma, "htr gamma")?;
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.htr_probes == 0 {
            return Err(Error::config("htr needs at least one probe"));
        }
        let m = &self.metrics;
        if m.enabled && (m.trace_probes == 0 || m.lanczos_iters == 0 || m.probe_samples == 0) {
            return Err(Error::config("metric budget must be positive"));
        }
        if self.htr_gamma > 0.0 && self.htr_frequency == 0 {
            log::warn!(
                "htr gamma {} has no effect with frequency 0",
                self.htr_gamma
            );
        }
        Ok(())
    }

    /// Whether any step applies the regularizer.
    pub fn htr_active(&self) -> bool {
        self.htr_gamma > 0.0 && self.htr_frequency > 0
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn middle_rounding() {
        assert_eq!(
            select_layers(8, &LayerSelection::Middle).unwrap(),
            vec![2, 3, 4, 5]
        );
        assert_eq!(
            select_layers(4, &LayerSelection::Middle).unwrap(),
            vec![1, 2]
        );
        assert_eq!(
            select_layers(3, &LayerSelection::Middle).unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(
            select_layers(6, &LayerSelection::Middle).unwrap(),
            vec![1, 2, 3, 4]
        );
    }

    #[test]
    fn explicit_lists() {
        let sel: LayerSelection = "3, 1,1".parse().unwrap();
        assert_eq!(select_layers(4, &sel).unwrap(), vec![1, 3]);
        assert!(select_layers(3, &sel).is_err());
        assert!(select_layers(0, &LayerSelection::All).is_err());
        assert!("1,x".parse::<LayerSelection>().is_err());
        assert_eq!(sel.to_string(), "3,1,1");
    }

    #[test]
    fn defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.lr, c.momentum, c.l2, c.batch_size),
            (1e-2, 0.9, 1e-3, 64)
        );
        c.validate().unwrap();
        assert!(TrainConfig {
            lr: 0.0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            htr_gamma: -1.0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            momentum: f64::NAN,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert_ne!(
            c.hash(),
            TrainConfig {
                seed: 1,
                ..c.clone()
            }
            .hash()
        );
        assert_eq!(c.hash(), c.clone().hash());
    }
}
