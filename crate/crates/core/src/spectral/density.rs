//! Stochastic Lanczos quadrature with Gaussian broadening.
//!
//! The operator is first mapped affinely so its spectrum sits inside
//! `[-1, 1]`; each probe's Ritz values and weights are broadened by a
//! Gaussian of width `sigma = 2 / ((M - 1) sqrt(8 ln kappa))` on
//! `linspace(-1, 1, K)`, averaged over probes, and reported on the original
//! eigenvalue axis.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lanczos::{lanczos, TridiagonalFactor};
use super::operator::{AffineOperator, SymmetricOperator};
use crate::error::{Error, Result};
use crate::rng;

/// Iterations used to bracket the spectrum before rescaling.
pub const RESCALE_ITERS: usize = 32;
/// Relative widening of the bracketing interval.
pub const RESCALE_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlqConfig {
    /// Lanczos iterations per probe (`M`).
    pub iterations: usize,
    /// Grid points (`K`).
    pub grid: usize,
    pub kappa: f64,
    pub probes: usize,
    pub seed: u64,
    pub reorthogonalize: bool,
}

impl Default for SlqConfig {
    fn default() -> Self {
        SlqConfig {
            iterations: 80,
            grid: 1024,
            kappa: 3.0,
            probes: 8,
            seed: 0,
            reorthogonalize: true,
        }
    }
}

/// Affine map `x_unit = (x - center) / half_width` into `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitRescaling {
    pub half_width: f64,
    pub center: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Zero-width spectrum; `half_width` is then 1.
    pub degenerate: bool,
}

impl UnitRescaling {
    pub fn to_original(&self, t: f64) -> f64 {
        self.half_width * t + self.center
    }
}

/// Brackets the spectrum with a short reorthogonalized Lanczos run and
/// returns the rescaled operator `(A - b I) / a` with
/// `a = (lmax - lmin) * 1.05 / 2`, `b = (lmax + lmin) / 2`.
pub fn rescale_to_unit<'a, A: SymmetricOperator + ?Sized>(
    op: &'a A,
    seed: u64,
) -> Result<(AffineOperator<'a, A>, UnitRescaling)> {
    let f = lanczos(op, RESCALE_ITERS.min(op.dim()), seed, true)?;
    let lo = f.ritz_values[0];
    let hi = *f.ritz_values.last().expect("nonempty factor");
    let center = 0.5 * (hi + lo);
    let spread = hi - lo;
    let degenerate = spread <= 1e-12 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE);
    let half_width = if degenerate {
        1.0
    } else {
        spread * (1.0 + RESCALE_MARGIN) / 2.0
    };
    let scaling = UnitRescaling {
        half_width,
        center,
        lambda_min: lo,
        lambda_max: hi,
        degenerate,
    };
    Ok((
        AffineOperator {
            inner: op,
            scale: half_width,
            shift: center,
        },
        scaling,
    ))
}

/// Spectral density sampled on a uniform grid of the original axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Broadening width on the unit axis.
    pub sigma: f64,
    pub rescaling: UnitRescaling,
    pub probes: usize,
    /// Ritz nodes on the original axis with probe-averaged weights.
    pub nodes: Vec<(f64, f64)>,
}

impl SpectralDensity {
    /// Density given directly as samples on a strictly increasing uniform grid.
    pub fn from_samples(grid: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != density.len() {
            return Err(Error::config(
                "density needs >= 2 grid points and matching values",
            ));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("density grid must be strictly increasing"));
        }
        if density.iter().any(|&d| d < 0.0 || !d.is_finite()) {
            return Err(Error::config(
                "density values must be finite and non-negative",
            ));
        }
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        Ok(SpectralDensity {
            grid,
            density,
            sigma: 0.0,
            rescaling: UnitRescaling {
                half_width: 0.5 * (hi - lo),
                center: 0.5 * (hi + lo),
                lambda_min: lo,
                lambda_max: hi,
                degenerate: false,
            },
            probes: 0,
            nodes: vec![],
        })
    }

    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Riemann sum of the density over the grid.
    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.spacing()
    }

    /// Riemann estimate of the first moment.
    pub fn mean(&self) -> f64 {
        self.grid
            .iter()
            .zip(&self.density)
            .map(|(t, d)| t * d)
            .sum::<f64>()
            * self.spacing()
    }

    /// Mass inside `[lo, hi]`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.density)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(_, d)| d)
            .sum::<f64>()
            * self.spacing()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("t,phi\n");
        for (t, p) in self.grid.iter().zip(&self.density) {
            out.push_str(&format!("{t},{p}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }
}

pub fn gaussian(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Broadening width for `m` Lanczos iterations and resolution parameter `kappa`.
pub fn broadening_sigma(m: usize, kappa: f64) -> f64 {
    let steps = m.saturating_sub(1).max(1) as f64;
    2.0 / (steps * (8.0 * kappa.ln()).sqrt())
}

pub fn slq_density(
    op: &(impl SymmetricOperator + ?Sized),
    cfg: &SlqConfig,
) -> Result<SpectralDensity> {
    if cfg.grid < 2 {
        return Err(Error::config("grid needs at least 2 points"));
    }
    if cfg.kappa <= 1.0 {
        return Err(Error::config("kappa must exceed 1"));
    }
    if cfg.probes == 0 {
        return Err(Error::config("need at least one probe"));
    }
    let m = cfg.iterations.min(op.dim());
    if m == 0 {
        return Err(Error::config("lanczos order must be positive"));
    }
    let (unit, scaling) = rescale_to_unit(op, rng::derive_seed(cfg.seed, 0x5CA1E))?;
    let runs: Vec<Result<TridiagonalFactor>> = (0..cfg.probes as u64)
        .into_par_iter()
        .map(|p| lanczos(&unit, m, rng::probe_seed(cfg.seed, p), cfg.reorthogonalize))
        .collect();
    let mut factors = Vec::with_capacity(runs.len());
    let mut last_err = None;
    for r in runs {
        match r {
            Ok(f) => factors.push(f),
            Err(e) => {
                log::warn!("slq probe failed: {e}");
                last_err = Some(e);
            }
        }
    }
    if factors.is_empty() {
        return Err(last_err.expect("at least one probe ran"));
    }

    let sigma = broadening_sigma(m, cfg.kappa);
    let k = cfg.grid;
    let unit_grid: Vec<f64> = (0..k)
        .map(|i| -1.0 + 2.0 * i as f64 / (k - 1) as f64)
        .collect();
    let inv_probes = 1.0 / factors.len() as f64;
    let mut omega = vec![0.0; k];
    let mut nodes = Vec::new();
    for f in &factors {
        for (&lam, &w) in f.ritz_values.iter().zip(&f.ritz_weights) {
            for (o, &t) in omega.iter_mut().zip(&unit_grid) {
                *o += inv_probes * w * gaussian(t - lam, sigma);
            }
            nodes.push((scaling.to_original(lam), w * inv_probes));
        }
    }
    let a = scaling.half_width;
    Ok(SpectralDensity {
        grid: unit_grid.iter().map(|&t| scaling.to_original(t)).collect(),
        density: omega.into_iter().map(|w| w / a).collect(),
        sigma,
        rescaling: scaling,
        probes: factors.len(),
        nodes,
    })
}
