//! Seeded random streams. Every stochastic routine derives its generator
//! from an explicit `u64` seed so runs are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for probe `p` of a run seeded with `seed`.
pub fn probe_seed(seed: u64, p: u64) -> u64 {
    seed ^ p
}

/// Independent sub-stream for a named purpose (data order, HTR probes, ...).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeDistribution {
    Gaussian,
    Rademacher,
}

impl ProbeDistribution {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeDistribution::Gaussian => "gaussian",
            ProbeDistribution::Rademacher => "rademacher",
        }
    }
}

impl std::str::FromStr for ProbeDistribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(ProbeDistribution::Gaussian),
            "rademacher" => Ok(ProbeDistribution::Rademacher),
            other => Err(format!("unknown probe distribution '{other}'")),
        }
    }
}

pub fn gaussian_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn rademacher_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

pub fn probe_vector(rng: &mut impl Rng, n: usize, dist: ProbeDistribution) -> Vec<f64> {
    match dist {
        ProbeDistribution::Gaussian => gaussian_vector(rng, n),
        ProbeDistribution::Rademacher => rademacher_vector(rng, n),
    }
}
