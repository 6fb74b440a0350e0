use serde::{Deserialize, Serialize};

use super::assign::Assignment;
use super::reconstruct::decision_boundaries;
use super::GaussianPeak;
use crate::counting::discrimination_overlap;
use crate::tagger::Tag;

/// Event counts by true photon number (rows, `0..=max true`) and assigned
/// photon number (columns, `0..=m`; column 0 stays empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn get(&self, true_n: usize, assigned_n: usize) -> u64 {
        self.counts
            .get(true_n)
            .and_then(|row| row.get(assigned_n))
            .copied()
            .unwrap_or(0)
    }

    pub fn row_total(&self, true_n: usize) -> u64 {
        self.counts.get(true_n).map_or(0, |r| r.iter().sum())
    }
}

fn ascending(assignment: &Assignment) -> Vec<GaussianPeak> {
    assignment.peaks.iter().rev().map(|a| a.peak).collect()
}

/// Assigns each tag to the decision region it falls in and tallies it
/// against its true photon number.
pub fn confusion_matrix(tags: &[Tag], assignment: &Assignment) -> ConfusionMatrix {
    let m = assignment.peaks.len();
    let bounds = decision_boundaries(&ascending(assignment));
    let max_true = tags.iter().map(|t| t.true_photon_count as usize).max().unwrap_or(0);
    let mut counts = vec![vec![0u64; m + 1]; max_true + 1];
    if m == 0 {
        return ConfusionMatrix { counts };
    }
    for t in tags {
        let region = bounds.partition_point(|&b| b < t.time_seconds);
        counts[t.true_photon_count as usize][m - region] += 1;
    }
    ConfusionMatrix { counts }
}

/// Misclassification between photon numbers `n` and `n + 1` compared with
/// the overlap of their fitted timing distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub n: u32,
    /// `P(assigned n+1 | true n) + P(assigned n | true n+1)`.
    pub error_rate_sum: f64,
    pub overlap: f64,
    /// Misclassifications the overlap predicts for the rarer of the two.
    pub expected_errors: f64,
}

impl PairCheck {
    /// Misclassification no worse than `factor` times the overlap. Sampled
    /// tags have lighter tails than a Gaussian, so the rate usually sits
    /// below the overlap rather than on it.
    pub fn bounded_by(&self, factor: f64) -> bool {
        self.error_rate_sum <= factor * self.overlap
    }
}

/// Pair checks for every adjacent pair whose overlap predicts at least
/// `min_expected_errors` misclassified events.
pub fn pair_checks(cm: &ConfusionMatrix, assignment: &Assignment, min_expected_errors: f64) -> Vec<PairCheck> {
    let peaks = &assignment.peaks;
    peaks
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (w[0], w[1]);
            let n = a.photon_number as usize;
            let overlap =
                discrimination_overlap(a.peak.mean, a.peak.sigma, b.peak.mean, b.peak.sigma).ok()?;
            let (rows_a, rows_b) = (cm.row_total(n), cm.row_total(n + 1));
            let expected_errors = overlap * rows_a.min(rows_b) as f64;
            if rows_a == 0 || rows_b == 0 || expected_errors < min_expected_errors {
                return None;
            }
            let e_a = cm.get(n, n + 1) as f64 / rows_a as f64;
            let e_b = cm.get(n + 1, n) as f64 / rows_b as f64;
            Some(PairCheck {
                n: a.photon_number,
                error_rate_sum: e_a + e_b,
                overlap,
                expected_errors,
            })
        })
        .collect()
}
