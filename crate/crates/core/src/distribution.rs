//! Photon-number distributions and the Poisson source law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Probabilities over `k = 0..=k_max` with mean `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct PhotonNumberDistribution {
    probabilities: Vec<f64>,
    mean: f64,
}

impl PhotonNumberDistribution {
    /// Builds a distribution whose mean is derived as `Σ k·p_k`.
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::domain("distribution needs at least one entry"));
        }
        if let Some(p) = probabilities
            .iter()
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::domain(format!("probability {p} outside [0, 1]")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::domain(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let mean = probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum();
        Ok(Self {
            probabilities,
            mean,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn k_max(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `p_k`, zero beyond `k_max`.
    pub fn get(&self, k: usize) -> f64 {
        self.probabilities.get(k).copied().unwrap_or(0.0)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    probabilities: Vec<f64>,
    mean: f64,
}

impl TryFrom<RawDistribution> for PhotonNumberDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        let d = Self::new(raw.probabilities)?;
        if (d.mean - raw.mean).abs() > NORMALIZATION_TOLERANCE * d.mean.max(1.0) {
            return Err(Error::domain(format!(
                "declared mean {} differs from the derived mean {}",
                raw.mean, d.mean
            )));
        }
        Ok(d)
    }
}

/// A Poisson law truncated at `k_max` and renormalized over `0..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedPoisson {
    pub lambda: f64,
    pub distribution: PhotonNumberDistribution,
    /// Mass of the untruncated law above `k_max`, removed by renormalization.
    pub tail_mass: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("mean photon number {lambda} must be finite and >= 0")));
    }
    Ok(())
}

fn ln_poisson(lambda: f64, k: u64) -> f64 {
    if k == 0 {
        return -lambda;
    }
    if lambda == 0.0 {
        return f64::NEG_INFINITY;
    }
    k as f64 * lambda.ln() - lambda - libm::lgamma(k as f64 + 1.0)
}

/// `e^{-λ} λ^k / k!`, evaluated in the log domain.
pub fn poisson_pmf(lambda: f64, k: u64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(ln_poisson(lambda, k).exp())
}

/// Poisson(`λ`) truncated at `k_max`. The reported mean is the mean of the
/// renormalized law, which falls short of `λ` by the truncated tail.
pub fn poisson_distribution(lambda: f64, k_max: usize) -> Result<TruncatedPoisson> {
    check_lambda(lambda)?;
    let raw: Vec<f64> = (0..=k_max as u64).map(|k| ln_poisson(lambda, k).exp()).collect();
    let kept: f64 = raw.iter().sum();
    let tail_mass = (1.0 - kept).max(0.0);
    let probabilities = raw.iter().map(|p| p / kept).collect();
    Ok(TruncatedPoisson {
        lambda,
        distribution: PhotonNumberDistribution::new(probabilities)?,
        tail_mass,
    })
}
