use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empty bins added on each side of the occupied range.
pub const PADDING_BINS: usize = 3;

/// Refuse axes with more bins than this.
pub const MAX_BINS: usize = 1 << 22;

/// Crossing times binned on a uniform axis, with the slot count needed to
/// recover the zero-photon frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total_slots: u64,
}

impl ArrivalHistogram {
    /// Empty histogram of `bins` bins of `bin_width` starting at `origin`.
    pub fn with_axis(origin: f64, bin_width: f64, bins: usize, total_slots: u64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) || !origin.is_finite() {
            return Err(Error::domain(format!("bad histogram axis at {origin} with width {bin_width}")));
        }
        if bins == 0 || bins > MAX_BINS {
            return Err(Error::domain(format!("{bins} bins requested, limit is {MAX_BINS}")));
        }
        Ok(Self {
            bin_edges: (0..=bins).map(|i| origin + i as f64 * bin_width).collect(),
            counts: vec![0; bins],
            total_slots,
        })
    }

    /// Axis covering `[lo, hi]` padded by [`PADDING_BINS`] on each side.
    pub fn covering(lo: f64, hi: f64, bin_width: f64, total_slots: u64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::domain(format!("bin width must be positive, got {bin_width}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::domain(format!("bad tag range [{lo}, {hi}]")));
        }
        let span = ((hi - lo) / bin_width).floor();
        if span >= MAX_BINS as f64 {
            return Err(Error::domain("tag range too wide for the bin width"));
        }
        let bins = span as usize + 1 + 2 * PADDING_BINS;
        Self::with_axis(lo - PADDING_BINS as f64 * bin_width, bin_width, bins, total_slots)
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn center(&self, i: usize) -> f64 {
        self.bin_edges[0] + (i as f64 + 0.5) * self.bin_width()
    }

    /// Bin index of `t`, clamped to the axis. Points within rounding of an
    /// edge belong to the bin on its right.
    pub fn index_of(&self, t: f64) -> usize {
        let x = ((t - self.bin_edges[0]) / self.bin_width() + 1e-9).floor();
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(self.bins() - 1)
        }
    }

    pub fn add(&mut self, t: f64) {
        let i = self.index_of(t);
        self.counts[i] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| {
            self.counts
                .iter()
                .enumerate()
                .map(|(i, &c)| c as f64 * self.center(i))
                .sum::<f64>()
                / n as f64
        })
    }
}

/// Bins `tags` on a uniform axis over their range, padded by three bins on
/// each side.
pub fn build_histogram(tags: &[f64], bin_width: f64, total_slots: u64) -> Result<ArrivalHistogram> {
    if tags.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    if tags.len() as u64 > total_slots {
        return Err(Error::Inconsistent(format!(
            "{} tags from only {total_slots} slots",
            tags.len()
        )));
    }
    let lo = tags.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tags.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut h = ArrivalHistogram::covering(lo, hi, bin_width, total_slots)?;
    for &t in tags {
        h.add(t);
    }
    Ok(h)
}

/// Freedman–Diaconis width `2·IQR·n^(-1/3)`. Falls back to a width that
/// spreads the range over 100 bins when the IQR vanishes.
pub fn freedman_diaconis_width(tags: &[f64]) -> Result<f64> {
    if tags.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let mut sorted = tags.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let x = q * (sorted.len() - 1) as f64;
        let i = x.floor() as usize;
        let f = x - i as f64;
        if i + 1 < sorted.len() {
            sorted[i] + f * (sorted[i + 1] - sorted[i])
        } else {
            sorted[i]
        }
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
    if width > 0.0 {
        return Ok(width);
    }
    let range = sorted[sorted.len() - 1] - sorted[0];
    Ok(if range > 0.0 { range / 100.0 } else { 1e-12 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tag_lands_in_one_bin() {
        let h = build_histogram(&[1e-9], 1e-12, 10).unwrap();
        assert_eq!(h.bins(), 1 + 2 * PADDING_BINS);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.total(), 1);
        assert_eq!(h.counts[PADDING_BINS], 1);
    }

    #[test]
    fn separated_clusters_have_disjoint_support() {
        let w = 1e-12;
        let mut tags = vec![0.0, 0.2e-12, 0.4e-12];
        tags.extend([10e-12, 10.3e-12]);
        let h = build_histogram(&tags, w, 100).unwrap();
        let occupied: Vec<usize> = (0..h.bins()).filter(|&i| h.counts[i] > 0).collect();
        assert_eq!(occupied.len(), 2);
        assert!(occupied[1] - occupied[0] > 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(build_histogram(&[], 1.0, 3), Err(Error::EmptyHistogram)));
        assert!(matches!(build_histogram(&[1.0, 2.0], 1.0, 1), Err(Error::Inconsistent(_))));
        assert!(build_histogram(&[0.0, 1.0], 1e-300, 2).is_err());
        assert!(build_histogram(&[0.0], 0.0, 2).is_err());
    }

    #[test]
    fn freedman_diaconis_on_uniform_grid() {
        let tags: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let w = freedman_diaconis_width(&tags).unwrap();
        assert!((w - 2.0 * 499.5 / 10.0).abs() < 1e-9);
        assert_eq!(freedman_diaconis_width(&[3.0, 3.0]).unwrap(), 1e-12);
    }
}
