//! Bulk/outlier separation of a spectral density.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::spectral::SpectralDensity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierConfig {
    /// Fraction of the mass the bulk must hold (unless it ends at a gap first).
    pub bulk_mass: f64,
    /// Minimum topographic prominence, relative to the highest density value.
    pub prominence: f64,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        OutlierConfig {
            bulk_mass: 0.99,
            prominence: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub bulk_edge: f64,
    pub locations: Vec<f64>,
    pub count: usize,
    pub expected: Option<usize>,
    pub config: OutlierConfig,
}

impl OutlierReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub fn count_outliers(density: &SpectralDensity, expected: Option<usize>) -> OutlierReport {
    count_outliers_with(density, expected, &OutlierConfig::default())
}

/// The bulk starts at the highest mode and extends right until either the
/// cumulative mass reaches `bulk_mass` or the density first drops below the
/// prominence floor (a gap). Every local maximum past that edge whose
/// prominence clears the floor is an outlier.
pub fn count_outliers_with(
    density: &SpectralDensity,
    expected: Option<usize>,
    cfg: &OutlierConfig,
) -> OutlierReport {
    let d = &density.density;
    let t = &density.grid;
    let k = d.len();
    let (mode, peak) = d
        .iter()
        .copied()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, x)| if x > acc.1 { (i, x) } else { acc },
        );
    let floor = cfg.prominence * peak;
    let total: f64 = d.iter().sum();

    let mut edge = k - 1;
    let mut cum: f64 = d[..=mode].iter().sum();
    for i in mode + 1..k {
        if d[i] < floor {
            edge = i;
            break;
        }
        cum += d[i];
        if cum >= cfg.bulk_mass * total {
            edge = i;
            break;
        }
    }

    let mut locations = Vec::new();
    if peak > 0.0 {
        for i in edge + 1..k {
            let left_ok = d[i] > d[i - 1];
            let right_ok = i + 1 == k || d[i] >= d[i + 1];
            if left_ok && right_ok && prominence(d, i) >= floor {
                locations.push(t[i]);
            }
        }
    }
    OutlierReport {
        bulk_edge: t[edge],
        count: locations.len(),
        locations,
        expected,
        config: *cfg,
    }
}

/// Height of `d[i]` above the higher of the two lowest points separating it
/// from taller terrain (or the grid ends) on each side.
fn prominence(d: &[f64], i: usize) -> f64 {
    let h = d[i];
    let mut left_min = h;
    for j in (0..i).rev() {
        if d[j] > h {
            break;
        }
        left_min = left_min.min(d[j]);
    }
    let mut right_min = h;
    for &x in &d[i + 1..] {
        if x > h {
            break;
        }
        right_min = right_min.min(x);
    }
    h - left_min.max(right_min)
}
