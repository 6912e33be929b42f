//! Distances between spectral densities on a shared grid.
//!
//! Both densities are linearly resampled onto [`COMMON_GRID`] uniform points
//! over the union of their supports (zero outside each density's own grid)
//! and renormalized to unit mass before comparison.

use crate::error::{Error, Result};
use crate::spectral::SpectralDensity;

pub const COMMON_GRID: usize = 2048;

/// Two densities resampled onto one grid, each with unit trapezoidal mass.
#[derive(Debug, Clone)]
pub struct CommonGrid {
    pub grid: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl CommonGrid {
    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    pub fn width(&self) -> f64 {
        self.grid[self.grid.len() - 1] - self.grid[0]
    }
}

fn interpolate(d: &SpectralDensity, t: f64) -> f64 {
    let g = &d.grid;
    let (lo, hi) = (g[0], g[g.len() - 1]);
    if t < lo || t > hi {
        return 0.0;
    }
    let h = d.spacing();
    let pos = ((t - lo) / h).min((g.len() - 1) as f64);
    let i = (pos.floor() as usize).min(g.len() - 2);
    let frac = (t - g[i]) / h;
    d.density[i] * (1.0 - frac) + d.density[i + 1] * frac
}

fn trapezoid_mass(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

pub fn common_grid(p: &SpectralDensity, q: &SpectralDensity) -> Result<CommonGrid> {
    let lo = p.grid[0].min(q.grid[0]);
    let hi = p.grid[p.grid.len() - 1].max(q.grid[q.grid.len() - 1]);
    if !(hi > lo) {
        return Err(Error::config("densities have zero-width support"));
    }
    let n = COMMON_GRID;
    let grid: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let h = grid[1] - grid[0];
    let resample = |d: &SpectralDensity, which: &str| -> Result<Vec<f64>> {
        let mut v: Vec<f64> = grid.iter().map(|&t| interpolate(d, t)).collect();
        let mass = trapezoid_mass(&v, h);
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::numeric(format!(
                "{which} density has zero mass on the common grid"
            )));
        }
        v.iter_mut().for_each(|x| *x /= mass);
        Ok(v)
    };
    Ok(CommonGrid {
        p: resample(p, "first")?,
        q: resample(q, "second")?,
        grid,
    })
}

/// `int |P(t) - Q(t)| dt` between the cumulative distributions, in units of
/// the eigenvalue axis.
pub fn wasserstein1(p: &SpectralDensity, q: &SpectralDensity) -> Result<f64> {
    let cg = common_grid(p, q)?;
    Ok(wasserstein_on_grid(&cg))
}

/// [`wasserstein1`] divided by the width of the common grid: a
/// dimensionless value in `[0, 1]`.
pub fn normalized_wasserstein1(p: &SpectralDensity, q: &SpectralDensity) -> Result<f64> {
    let cg = common_grid(p, q)?;
    Ok(wasserstein_on_grid(&cg) / cg.width())
}

fn wasserstein_on_grid(cg: &CommonGrid) -> f64 {
    let h = cg.spacing();
    let n = cg.grid.len();
    let mut cp = 0.0;
    let mut cq = 0.0;
    let mut gaps = Vec::with_capacity(n);
    gaps.push(0.0);
    for i in 1..n {
        cp += 0.5 * h * (cg.p[i - 1] + cg.p[i]);
        cq += 0.5 * h * (cg.q[i - 1] + cg.q[i]);
        gaps.push((cp - cq).abs());
    }
    trapezoid_mass(&gaps, h)
}

/// Jensen-Shannon divergence (natural log) between the bin masses of the two
/// densities on the common grid.
pub fn js_divergence(p: &SpectralDensity, q: &SpectralDensity) -> Result<f64> {
    let cg = common_grid(p, q)?;
    Ok(js_of_masses(
        &to_probabilities(&cg.p),
        &to_probabilities(&cg.q),
    ))
}

fn to_probabilities(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

pub(crate) fn js_of_masses(p: &[f64], q: &[f64]) -> f64 {
    let mut js = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            js += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            js += 0.5 * b * (b / m).ln();
        }
    }
    js.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::density::gaussian;

    fn bump(center: f64, sigma: f64, lo: f64, hi: f64, k: usize) -> SpectralDensity {
        let grid: Vec<f64> = (0..k)
            .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
            .collect();
        let dens = grid.iter().map(|&t| gaussian(t - center, sigma)).collect();
        SpectralDensity::from_samples(grid, dens).unwrap()
    }

    #[test]
    fn identical_densities_are_at_distance_zero() {
        let p = bump(0.3, 0.1, -1.0, 2.0, 500);
        assert!(wasserstein1(&p, &p).unwrap().abs() < 1e-12);
        assert!(js_divergence(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn narrow_point_masses_one_apart() {
        let p = bump(0.0, 1e-3, -0.5, 1.5, 4001);
        let q = bump(1.0, 1e-3, -0.5, 1.5, 4001);
        let w = wasserstein1(&p, &q).unwrap();
        assert!((w - 1.0).abs() < 1e-3, "{w}");
        let nw = normalized_wasserstein1(&p, &q).unwrap();
        assert!((nw - 0.5).abs() < 1e-3, "{nw}");
    }

    #[test]
    fn disjoint_supports_give_ln2() {
        let p = SpectralDensity::from_samples(vec![0.0, 0.5, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
        let q = SpectralDensity::from_samples(vec![2.0, 2.5, 3.0], vec![1.0, 2.0, 1.0]).unwrap();
        let js = js_divergence(&p, &q).unwrap();
        assert!((js - 2f64.ln()).abs() < 1e-9, "{js}");
    }

    #[test]
    fn zero_mass_is_an_error() {
        let p = SpectralDensity::from_samples(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let q = bump(0.5, 0.1, 0.0, 1.0, 50);
        assert!(wasserstein1(&p, &q).is_err());
        assert!(js_divergence(&q, &p).is_err());
    }
}
