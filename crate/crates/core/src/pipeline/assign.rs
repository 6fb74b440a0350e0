use serde::{Deserialize, Serialize};

use super::GaussianPeak;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignedPeak {
    pub photon_number: u32,
    pub peak: GaussianPeak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Ordered by photon number, so by descending mean.
    pub peaks: Vec<AssignedPeak>,
    /// Set when the fitted means do not follow the expected spacing.
    pub hint_mismatch: Option<String>,
}

/// Numbers the peaks `1, 2, ...` from the latest mean towards earlier ones.
///
/// `expected_means[n - 1]` is the expected crossing mean of `n` photons.
/// When given, the fitted means must be an increasing affine image of the
/// expected ones, to within a quarter of the closest expected spacing.
pub fn assign_photon_numbers(peaks: &[GaussianPeak], expected_means: Option<&[f64]>) -> Assignment {
    let mut sorted = peaks.to_vec();
    sorted.sort_by(|a, b| {
        b.mean
            .total_cmp(&a.mean)
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.amplitude.total_cmp(&b.amplitude))
    });
    let assigned: Vec<AssignedPeak> = sorted
        .into_iter()
        .enumerate()
        .map(|(i, peak)| AssignedPeak {
            photon_number: i as u32 + 1,
            peak,
        })
        .collect();
    let hint_mismatch = expected_means.and_then(|e| check_spacing(&assigned, e));
    Assignment {
        peaks: assigned,
        hint_mismatch,
    }
}

fn check_spacing(peaks: &[AssignedPeak], expected: &[f64]) -> Option<String> {
    let m = peaks.len();
    if expected.len() < m {
        return Some(format!(
            "{m} peaks but only {} expected positions",
            expected.len()
        ));
    }
    if m < 2 {
        return None;
    }
    let e = &expected[..m];
    let y: Vec<f64> = peaks.iter().map(|p| p.peak.mean).collect();
    let me = e.iter().sum::<f64>() / m as f64;
    let my = y.iter().sum::<f64>() / m as f64;
    let sxy: f64 = e.iter().zip(&y).map(|(a, b)| (a - me) * (b - my)).sum();
    let sxx: f64 = e.iter().map(|a| (a - me).powi(2)).sum();
    if sxx == 0.0 {
        return Some("expected positions coincide".into());
    }
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Some(format!("fitted means run against the expected order (slope {slope:.3})"));
    }
    let offset = my - slope * me;
    let gap = e
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .fold(f64::INFINITY, f64::min)
        * slope;
    let worst = e
        .iter()
        .zip(&y)
        .map(|(a, b)| (offset + slope * a - b).abs())
        .fold(0.0, f64::max);
    (worst > 0.25 * gap).then(|| {
        format!("fitted means deviate from the expected spacing by {worst:.3e} s (gap {gap:.3e} s)")
    })
}
