use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{js_divergence, normalized_wasserstein1};
use crate::error::{Error, Result};
use crate::spectral::SpectralDensity;

/// How the Wasserstein column was made dimensionless.
pub const WASSERSTEIN_NORMALIZATION: &str =
    "unit mass on a common 2048-point grid over the union of supports; divided by the grid width";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub layer: usize,
    pub name: String,
    pub wasserstein: f64,
    pub js: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceTable {
    pub rows: Vec<DistanceRow>,
    /// Row index (not layer index) of the smallest Wasserstein distance.
    pub argmin_wasserstein: usize,
    pub argmin_js: usize,
    pub normalization: String,
}

impl DistanceTable {
    pub fn argmin_wasserstein_layer(&self) -> usize {
        self.rows[self.argmin_wasserstein].layer
    }

    pub fn argmin_js_layer(&self) -> usize {
        self.rows[self.argmin_js].layer
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("layer,name,wasserstein,js\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.layer, r.name, r.wasserstein, r.js
            ));
        }
        fs::write(path, out)?;
        Ok(())
    }
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    values
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .expect("nonempty table")
}

/// Distances from each `(layer index, name, density)` to `full`.
pub fn layer_distance_table(
    layers: &[(usize, String, SpectralDensity)],
    full: &SpectralDensity,
) -> Result<DistanceTable> {
    if layers.is_empty() {
        return Err(Error::config("no layer densities to compare"));
    }
    let rows = layers
        .par_iter()
        .map(|(layer, name, d)| {
            Ok(DistanceRow {
                layer: *layer,
                name: name.clone(),
                wasserstein: normalized_wasserstein1(d, full)?,
                js: js_divergence(d, full)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceTable {
        argmin_wasserstein: argmin(rows.iter().map(|r| r.wasserstein)),
        argmin_js: argmin(rows.iter().map(|r| r.js)),
        rows,
        normalization: WASSERSTEIN_NORMALIZATION.to_string(),
    })
}
