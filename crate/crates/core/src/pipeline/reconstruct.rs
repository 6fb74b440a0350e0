use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GaussianPeak;
use crate::counting::{gaussian_intersection, normal_mass};
use crate::distribution::{poisson_distribution, PhotonNumberDistribution};
use crate::error::{Error, Result};
use crate::histogram::ArrivalHistogram;

/// Measured photon-number distribution and mean from per-peak counts.
///
/// `areas` pairs photon numbers `1..=m` (any order, each once) with the
/// number of events attributed to them. `p_k = area_k / total_slots` for
/// `k >= 1`, `p_0` takes the rest and `λ̂ = Σ k·area_k / total_slots`.
pub fn reconstruct_statistics(
    areas: &[(u32, f64)],
    total_slots: u64,
) -> Result<(PhotonNumberDistribution, f64)> {
    if total_slots == 0 {
        return Err(Error::Inconsistent("no slots".into()));
    }
    let m = areas.len();
    let mut by_k = vec![0.0; m + 1];
    let mut seen = vec![false; m + 1];
    for &(n, a) in areas {
        let k = n as usize;
        if k == 0 || k > m || seen[k] {
            return Err(Error::domain(format!(
                "photon numbers must be 1..={m}, each once; got {n}"
            )));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::domain(format!("area {a} for n={n} is not a count")));
        }
        seen[k] = true;
        by_k[k] = a;
    }
    let total = total_slots as f64;
    let events: f64 = by_k.iter().sum();
    if events > total {
        return Err(Error::Inconsistent(format!(
            "{events} events attributed to {total_slots} slots"
        )));
    }
    let photons: f64 = by_k.iter().enumerate().map(|(k, a)| k as f64 * a).sum();
    let mut p: Vec<f64> = by_k.iter().map(|a| a / total).collect();
    p[0] = (1.0 - p[1..].iter().sum::<f64>()).clamp(0.0, 1.0);
    Ok((PhotonNumberDistribution::new(p)?, photons / total))
}

/// Decision boundaries between consecutive peaks (ascending means): the
/// density-equality point, or the width-weighted midpoint when a much wider
/// neighbour dominates the whole gap.
pub fn decision_boundaries(peaks: &[GaussianPeak]) -> Vec<f64> {
    peaks
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            gaussian_intersection(a.mean, a.sigma, b.mean, b.sigma)
                .unwrap_or((a.mean * b.sigma + b.mean * a.sigma) / (a.sigma + b.sigma))
        })
        .collect()
}

/// Histogram counts per decision region and the same counts corrected for
/// the Gaussian tails that spill into neighbouring regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCounts {
    /// Events whose bin centre falls in each region, ascending in time.
    pub observed: Vec<f64>,
    /// Solution `a` of `M a = observed`, where `M[k][j]` is the share of
    /// peak `j` inside region `k`. Columns of `M` sum to one, so the total is
    /// conserved. Negative entries are clipped to zero.
    pub unfolded: Vec<f64>,
}

/// Integrates the histogram over the decision regions of `peaks` (ascending
/// means) and unfolds the spill-over between regions.
pub fn region_counts(histogram: &ArrivalHistogram, peaks: &[GaussianPeak]) -> RegionCounts {
    let m = peaks.len();
    if m == 0 {
        return RegionCounts {
            observed: Vec::new(),
            unfolded: Vec::new(),
        };
    }
    let bounds = decision_boundaries(peaks);
    let region_of = |t: f64| bounds.partition_point(|&b| b < t);
    let mut observed = vec![0.0; m];
    // Bin edges actually separating the regions.
    let mut edges = vec![f64::NEG_INFINITY; m + 1];
    edges[m] = f64::INFINITY;
    let mut last_region = 0;
    for (i, &c) in histogram.counts.iter().enumerate() {
        let r = region_of(histogram.center(i));
        observed[r] += c as f64;
        while last_region < r {
            last_region += 1;
            edges[last_region] = histogram.bin_edges[i];
        }
    }
    for k in last_region + 1..m {
        edges[k] = *histogram.bin_edges.last().expect("non-empty axis");
    }

    let mix = DMatrix::from_fn(m, m, |k, j| {
        normal_mass(peaks[j].mean, peaks[j].sigma, edges[k], edges[k + 1])
    });
    let rhs = DVector::from_column_slice(&observed);
    let unfolded = mix
        .lu()
        .solve(&rhs)
        .filter(|a| a.iter().all(|v| v.is_finite()))
        .map(|a| a.iter().map(|v| v.max(0.0)).collect())
        .unwrap_or_else(|| observed.clone());
    RegionCounts { observed, unfolded }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerK {
    pub k: usize,
    pub measured: f64,
    pub predicted: f64,
    /// `measured - predicted`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Divergence {
    pub total_variation: f64,
    /// Pearson statistic over bins expecting at least five counts.
    pub chi_square: f64,
    pub chi_square_bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonComparison {
    pub predicted: PhotonNumberDistribution,
    /// Poisson mass beyond the measured `k_max`, folded back by
    /// renormalization.
    pub predicted_tail_mass: f64,
    pub divergence: Divergence,
    pub per_k: Vec<PerK>,
}

/// Least expected count for a bin to enter the χ² sum.
pub const CHI_SQUARE_MIN_EXPECTED: f64 = 5.0;

/// Compares a measured distribution with Poisson(`λ̂`) truncated at the
/// measured `k_max`.
pub fn compare_poisson(
    measured: &PhotonNumberDistribution,
    lambda_hat: f64,
    total_slots: u64,
) -> Result<PoissonComparison> {
    let k_max = measured.k_max();
    if lambda_hat == 0.0 && measured.probabilities()[1..].iter().any(|&p| p > 0.0) {
        return Err(Error::Degenerate(
            "zero mean photon number with detections at k >= 1".into(),
        ));
    }
    let truncated = poisson_distribution(lambda_hat, k_max)?;
    let predicted = truncated.distribution;
    let n = total_slots as f64;
    let mut tv = 0.0;
    let mut chi = 0.0;
    let mut bins = 0;
    let per_k = (0..=k_max)
        .map(|k| {
            let (pm, pp) = (measured.get(k), predicted.get(k));
            tv += (pm - pp).abs();
            let expected = pp * n;
            if expected >= CHI_SQUARE_MIN_EXPECTED {
                chi += (pm * n - expected).powi(2) / expected;
                bins += 1;
            }
            PerK {
                k,
                measured: pm,
                predicted: pp,
                error: pm - pp,
            }
        })
        .collect();
    Ok(PoissonComparison {
        predicted,
        predicted_tail_mass: truncated.tail_mass,
        divergence: Divergence {
            total_variation: 0.5 * tv,
            chi_square: chi,
            chi_square_bins: bins,
        },
        per_k,
    })
}

/// Where the measured-minus-predicted error sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorConcentration {
    /// Largest `|error| / SE` over `k <= 2`, with the multinomial standard
    /// error of the prediction.
    pub max_z_low: f64,
    /// Largest `|error| / SE` over `k > 2`.
    pub max_z_high: f64,
    /// Share of `Σ|error|` carried by `k <= 2`.
    pub low_share: f64,
}

impl ErrorConcentration {
    /// Significant error (`z >= 5`) at `k <= 2` carrying most of the total.
    pub fn concentrated_low(&self) -> bool {
        self.max_z_low >= 5.0 && self.low_share >= 0.5
    }
}

pub fn error_concentration(per_k: &[PerK], total_slots: u64) -> ErrorConcentration {
    let n = total_slots as f64;
    let z = |e: &PerK| {
        let p = e.predicted.max(1.0 / n);
        e.error.abs() / (p * (1.0 - p) / n).sqrt()
    };
    let low = per_k.iter().filter(|e| e.k <= 2);
    let high = per_k.iter().filter(|e| e.k > 2);
    let total: f64 = per_k.iter().map(|e| e.error.abs()).sum();
    let low_abs: f64 = low.clone().map(|e| e.error.abs()).sum();
    ErrorConcentration {
        max_z_low: low.map(z).fold(0.0, f64::max),
        max_z_high: high.map(z).fold(0.0, f64::max),
        low_share: if total > 0.0 { low_abs / total } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::poisson_pmf;

    #[test]
    fn arithmetic_example() {
        let (d, lambda) = reconstruct_statistics(&[(1, 700.0), (2, 150.0), (3, 50.0)], 2000).unwrap();
        assert!((lambda - 0.575).abs() < 1e-15);
        assert!((d.get(0) - 0.55).abs() < 1e-15);
        assert!((d.mean() - lambda).abs() < 1e-15);
    }

    #[test]
    fn no_peaks_means_no_light() {
        let (d, lambda) = reconstruct_statistics(&[], 100).unwrap();
        assert_eq!(lambda, 0.0);
        assert_eq!(d.probabilities(), &[1.0]);
    }

    #[test]
    fn exact_poisson_areas_recover_lambda() {
        let slots = 1_000_000u64;
        let areas: Vec<(u32, f64)> = (1..=30)
            .map(|k| (k, poisson_pmf(0.35, k as u64).unwrap() * slots as f64))
            .collect();
        let (d, lambda) = reconstruct_statistics(&areas, slots).unwrap();
        assert!((lambda - 0.35).abs() < 1e-12);
        let cmp = compare_poisson(&d, lambda, slots).unwrap();
        assert!(cmp.divergence.total_variation < 1e-12);
    }

    #[test]
    fn rejects_overfull_and_malformed() {
        assert!(matches!(
            reconstruct_statistics(&[(1, 20.0)], 10),
            Err(Error::Inconsistent(_))
        ));
        assert!(reconstruct_statistics(&[(2, 1.0)], 10).is_err());
        assert!(reconstruct_statistics(&[(1, 1.0), (1, 1.0)], 10).is_err());
    }

    #[test]
    fn degenerate_comparison() {
        let d = PhotonNumberDistribution::new(vec![0.9, 0.1]).unwrap();
        assert!(matches!(compare_poisson(&d, 0.0, 10), Err(Error::Degenerate(_))));
    }

    #[test]
    fn unfolding_conserves_and_corrects_spill() {
        let s = 1.0;
        let peaks = [
            GaussianPeak { amplitude: 1.0, mean: 0.0, sigma: s, area: 0.0 },
            GaussianPeak { amplitude: 1.0, mean: 2.5, sigma: s, area: 0.0 },
        ];
        let mut h = ArrivalHistogram::with_axis(-10.0, 0.01, 2500, u64::MAX).unwrap();
        let truth = [60_000.0, 20_000.0];
        for i in 0..h.bins() {
            let lo = h.bin_edges[i];
            let hi = lo + 0.01;
            h.counts[i] = (truth[0] * normal_mass(0.0, s, lo, hi) + truth[1] * normal_mass(2.5, s, lo, hi))
                .round() as u64;
        }
        let r = region_counts(&h, &peaks);
        let obs: f64 = r.observed.iter().sum();
        let unf: f64 = r.unfolded.iter().sum();
        assert!((obs - unf).abs() < 1e-6 * obs);
        assert!((r.unfolded[0] - truth[0]).abs() < 200.0, "{r:?}");
        assert!((r.observed[0] - truth[0]).abs() > 1000.0);
    }
}
