//! Photon-statistics reconstruction from crossing-time histograms.
//!
//! 1. Bin the crossing times of one trigger level.
//! 2. Fit a Gaussian mixture and number the peaks, latest mean first.
//! 3. Count the events in each peak's decision region and unfold the
//!    spill-over between regions.
//! 4. Divide by the number of main laser slots to get `p_k` and `λ̂`; the
//!    zero-photon share is whatever remains.
//! 5. Compare with Poisson(`λ̂`).

mod assign;
mod confusion;
mod fit;
mod reconstruct;
mod report;

pub use assign::{assign_photon_numbers, AssignedPeak, Assignment};
pub use confusion::{confusion_matrix, pair_checks, ConfusionMatrix, PairCheck};
pub use fit::{detect_and_fit_peaks, detect_and_fit_peaks_with, FitOptions, PeakFit};
pub use reconstruct::{
    compare_poisson, decision_boundaries, error_concentration, reconstruct_statistics,
    region_counts, Divergence, ErrorConcentration, PerK, PoissonComparison, RegionCounts,
    CHI_SQUARE_MIN_EXPECTED,
};
pub use report::{ReconstructionReport, ReportPeak, REPORT_SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::counting::discrimination_overlap;
use crate::error::{Error, Result};
use crate::histogram::{build_histogram, freedman_diaconis_width, ArrivalHistogram};
use crate::tagger::{ExpectedCrossing, TagList};

/// Fitted Gaussian peak. `amplitude` is in counts per bin, `area` in counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPeak {
    pub amplitude: f64,
    pub mean: f64,
    pub sigma: f64,
    /// `amplitude·sigma·sqrt(2π)/bin_width`.
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Histogram bin width. When absent: a fifth of the expected one-photon
    /// jitter if known, else the Freedman–Diaconis width.
    pub bin_width_seconds: Option<f64>,
    pub max_peaks: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bin_width_seconds: None,
            max_peaks: 12,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.bin_width_seconds {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::config("bin_width_seconds must be positive"));
            }
        }
        if self.max_peaks == 0 {
            return Err(Error::config("max_peaks must be at least 1"));
        }
        Ok(())
    }
}

/// Everything produced while analysing one trigger level.
#[derive(Debug, Clone)]
pub struct LevelAnalysis {
    pub histogram: ArrivalHistogram,
    pub fit: PeakFit,
    pub assignment: Assignment,
    pub regions: RegionCounts,
    pub report: ReconstructionReport,
}

impl LevelAnalysis {
    pub fn peak_count(&self) -> usize {
        self.fit.peaks.len()
    }

    /// Mean overlap of adjacent fitted peaks; lower separates better.
    pub fn mean_adjacent_overlap(&self) -> f64 {
        let p = &self.fit.peaks;
        if p.len() < 2 {
            return 1.0;
        }
        let sum: f64 = p
            .windows(2)
            .map(|w| discrimination_overlap(w[0].mean, w[0].sigma, w[1].mean, w[1].sigma).unwrap_or(1.0))
            .sum();
        sum / (p.len() - 1) as f64
    }
}

/// Runs the full reconstruction on one level's tags.
///
/// `total_slots` counts main laser slots only. `hint` lists expected crossing
/// statistics for `n = 1, 2, ...` and is used for the default bin width and
/// to sanity-check the photon-number assignment.
pub fn analyze_tags(
    tags: &TagList,
    total_slots: u64,
    config: &PipelineConfig,
    hint: Option<&[ExpectedCrossing]>,
) -> Result<LevelAnalysis> {
    config.validate()?;
    let times = tags.times();
    if times.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let bin_width = match (config.bin_width_seconds, hint.and_then(|h| h.first())) {
        (Some(w), _) => w,
        (None, Some(first)) if first.sigma_seconds > 0.0 => first.sigma_seconds / 5.0,
        _ => freedman_diaconis_width(&times)?,
    };
    let histogram = build_histogram(&times, bin_width, total_slots)?;
    let fit = detect_and_fit_peaks(&histogram, config.max_peaks)?;
    let expected: Option<Vec<f64>> = hint.map(|h| h.iter().map(|e| e.mean_seconds).collect());
    let assignment = assign_photon_numbers(&fit.peaks, expected.as_deref());
    let regions = region_counts(&histogram, &fit.peaks);

    let m = fit.peaks.len();
    // regions are ascending in time; photon numbers descend.
    let areas: Vec<(u32, f64)> = (0..m).map(|i| ((m - i) as u32, regions.unfolded[i])).collect();
    let (measured, lambda_hat) = reconstruct_statistics(&areas, total_slots)?;
    let comparison = compare_poisson(&measured, lambda_hat, total_slots)?;

    let peaks = assignment
        .peaks
        .iter()
        .map(|a| {
            let idx = m - a.photon_number as usize;
            ReportPeak {
                photon_number: a.photon_number,
                peak: a.peak,
                region_count: regions.observed[idx],
                count: regions.unfolded[idx],
            }
        })
        .collect();
    let report = ReconstructionReport {
        schema_version: REPORT_SCHEMA_VERSION,
        level_volts: tags.level_volts,
        bin_width_seconds: bin_width,
        total_slots,
        tagged_events: tags.tags.len() as u64,
        dropped_events: tags.dropped,
        peaks,
        measured,
        lambda_hat,
        predicted: comparison.predicted,
        predicted_tail_mass: comparison.predicted_tail_mass,
        divergence: comparison.divergence,
        per_k: comparison.per_k,
        residual_rms: fit.residual_rms,
        hint_mismatch: assignment.hint_mismatch.clone(),
    };
    Ok(LevelAnalysis {
        histogram,
        fit,
        assignment,
        regions,
        report,
    })
}

/// Index of the best level: most resolved peaks, then the lowest mean
/// adjacent overlap, then the lower level. `None` entries are failed levels.
pub fn select_optimal_level<'a, I>(analyses: I) -> Option<usize>
where
    I: IntoIterator<Item = Option<&'a LevelAnalysis>>,
{
    analyses
        .into_iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|a| (i, a)))
        .min_by(|(i, a), (j, b)| {
            b.peak_count()
                .cmp(&a.peak_count())
                .then(a.mean_adjacent_overlap().total_cmp(&b.mean_adjacent_overlap()))
                .then(i.cmp(j))
        })
        .map(|(i, _)| i)
}
