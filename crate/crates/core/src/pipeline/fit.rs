//! Multi-Gaussian fit of an arrival-time histogram.
//!
//! Candidates are local maxima of a Gaussian-smoothed histogram whose
//! prominence clears a Poisson noise floor. All amplitudes, means and widths
//! are then refined jointly by Levenberg–Marquardt with Neyman weights
//! `1/max(count, 1)`. The fit runs in bin units.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GaussianPeak;
use crate::error::{Error, Result};
use crate::histogram::ArrivalHistogram;

const SQRT_TAU: f64 = 2.506_628_274_631_000_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Width of the seeding kernel, in bins.
    pub smoothing_bins: f64,
    /// Seeds need a prominence of this many noise standard deviations.
    pub prominence_sigmas: f64,
    pub max_iterations: usize,
    /// Fitted peaks holding fewer counts are discarded.
    pub area_floor_counts: f64,
    /// Narrowest admissible peak, in bins.
    pub min_sigma_bins: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            smoothing_bins: 2.0,
            prominence_sigmas: 2.5,
            max_iterations: 500,
            area_floor_counts: 10.0,
            min_sigma_bins: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    /// Sorted by ascending mean.
    pub peaks: Vec<GaussianPeak>,
    /// Root-mean-square of `count - model` over all bins.
    pub residual_rms: f64,
    pub iterations: usize,
}

/// Peak in bin units.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Component {
    amp: f64,
    mu: f64,
    sigma: f64,
}

impl Component {
    fn area(&self) -> f64 {
        self.amp * self.sigma * SQRT_TAU
    }
}

fn smooth(counts: &[u64], sigma: f64) -> (Vec<f64>, f64) {
    let half = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-half..=half)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let sum_sq = kernel.iter().map(|k| k * k).sum();
    let n = counts.len() as isize;
    let out = (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .filter_map(|(j, k)| {
                    let idx = i + j as isize - half;
                    (0..n).contains(&idx).then(|| k * counts[idx as usize] as f64)
                })
                .sum()
        })
        .collect();
    (out, sum_sq)
}

/// Topographic prominence of the maximum at `i`.
fn prominence(s: &[f64], i: usize) -> f64 {
    let h = s[i];
    let mut left_min = h;
    let mut j = i;
    while j > 0 {
        j -= 1;
        if s[j] > h {
            break;
        }
        left_min = left_min.min(s[j]);
        if j == 0 {
            left_min = left_min.min(0.0);
        }
    }
    if i == 0 {
        left_min = 0.0;
    }
    let mut right_min = h;
    let mut j = i;
    while j + 1 < s.len() {
        j += 1;
        if s[j] > h {
            break;
        }
        right_min = right_min.min(s[j]);
        if j + 1 == s.len() {
            right_min = right_min.min(0.0);
        }
    }
    if i + 1 == s.len() {
        right_min = 0.0;
    }
    h - left_min.max(right_min)
}

/// Half width at half maximum around `i`, stopping at valleys.
fn half_width(s: &[f64], i: usize) -> f64 {
    let target = 0.5 * s[i];
    let side = |step: isize| -> f64 {
        let mut j = i as isize;
        loop {
            let next = j + step;
            if next < 0 || next as usize >= s.len() {
                return (j - i as isize).unsigned_abs() as f64;
            }
            let (a, b) = (s[j as usize], s[next as usize]);
            if b <= target {
                let frac = if a > b { (a - target) / (a - b) } else { 0.0 };
                return (j - i as isize).unsigned_abs() as f64 + frac;
            }
            if b > a {
                return (j - i as isize).unsigned_abs() as f64;
            }
            j = next;
        }
    };
    0.5 * (side(-1) + side(1))
}

fn seeds(counts: &[u64], max_peaks: usize, opts: &FitOptions) -> Vec<Component> {
    let (s, sum_sq) = smooth(counts, opts.smoothing_bins);
    let n = s.len();
    let mut found: Vec<(f64, Component)> = Vec::new();
    let mut i = 0;
    while i < n {
        let left = if i == 0 { 0.0 } else { s[i - 1] };
        // Extent of a plateau starting at i.
        let mut end = i;
        while end + 1 < n && s[end + 1] == s[i] {
            end += 1;
        }
        let right = if end + 1 == n { 0.0 } else { s[end + 1] };
        if s[i] > left && s[i] > right && s[i] > 0.0 {
            let centre = (i + end) / 2;
            let prom = prominence(&s, centre);
            let noise = (s[centre].max(1.0) * sum_sq).sqrt();
            if prom > opts.prominence_sigmas * noise {
                let hw = half_width(&s, centre).max(0.5);
                let measured = hw / 1.177_410_022_515_474_6;
                let var = measured * measured - opts.smoothing_bins * opts.smoothing_bins;
                let sigma = var.max(0.25).sqrt().max(opts.min_sigma_bins * 2.0);
                let amp = s[centre] * (measured / sigma).max(1.0);
                found.push((
                    prom,
                    Component {
                        amp,
                        mu: 0.5 * (i + end) as f64,
                        sigma,
                    },
                ));
            }
        }
        i = end + 1;
    }
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.mu.total_cmp(&b.1.mu)));
    found.truncate(max_peaks);
    let mut comps: Vec<Component> = found.into_iter().map(|f| f.1).collect();
    comps.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    comps
}

fn model(comps: &[Component], x: f64) -> f64 {
    comps
        .iter()
        .map(|c| c.amp * (-0.5 * ((x - c.mu) / c.sigma).powi(2)).exp())
        .sum()
}

fn weighted_chi2(counts: &[u64], comps: &[Component]) -> f64 {
    counts
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let r = y as f64 - model(comps, i as f64);
            r * r / (y as f64).max(1.0)
        })
        .sum()
}

enum Outcome {
    Converged(usize),
    Exhausted(usize),
}

fn levenberg_marquardt(counts: &[u64], comps: &mut Vec<Component>, opts: &FitOptions) -> Outcome {
    let nb = counts.len();
    let np = 3 * comps.len();
    let weights: Vec<f64> = counts.iter().map(|&y| 1.0 / (y as f64).max(1.0)).collect();
    let mut chi2 = weighted_chi2(counts, comps);
    let mut lambda = 1e-3;
    for iter in 1..=opts.max_iterations {
        let mut jac = DMatrix::<f64>::zeros(nb, np);
        let mut resid = DVector::<f64>::zeros(nb);
        for i in 0..nb {
            let x = i as f64;
            let mut f = 0.0;
            for (k, c) in comps.iter().enumerate() {
                let d = (x - c.mu) / c.sigma;
                let g = (-0.5 * d * d).exp();
                f += c.amp * g;
                jac[(i, 3 * k)] = g;
                jac[(i, 3 * k + 1)] = c.amp * g * d / c.sigma;
                jac[(i, 3 * k + 2)] = c.amp * g * d * d / c.sigma;
            }
            resid[i] = counts[i] as f64 - f;
        }
        let mut jw = jac.clone();
        for i in 0..nb {
            jw.row_mut(i).scale_mut(weights[i]);
        }
        let a = jac.transpose() * &jw;
        let g = jw.transpose() * &resid;
        let diag_floor = 1e-12 * a.diagonal().max().max(f64::MIN_POSITIVE);

        let mut accepted = None;
        while lambda < 1e16 {
            let mut m = a.clone();
            for d in 0..np {
                m[(d, d)] += lambda * a[(d, d)].max(diag_floor);
            }
            let step = m.lu().solve(&g);
            let candidate = step.and_then(|delta| {
                let next: Vec<Component> = comps
                    .iter()
                    .enumerate()
                    .map(|(k, c)| Component {
                        amp: c.amp + delta[3 * k],
                        mu: c.mu + delta[3 * k + 1],
                        sigma: c.sigma + delta[3 * k + 2],
                    })
                    .collect();
                let valid = next.iter().all(|c| {
                    c.amp > 0.0
                        && c.sigma >= opts.min_sigma_bins
                        && c.amp.is_finite()
                        && c.mu.is_finite()
                        && c.sigma.is_finite()
                        && c.mu > -(nb as f64)
                        && c.mu < 2.0 * nb as f64
                        && c.sigma < 2.0 * nb as f64
                });
                valid.then_some(next)
            });
            if let Some(next) = candidate {
                let next_chi2 = weighted_chi2(counts, &next);
                if next_chi2 < chi2 {
                    accepted = Some((next, next_chi2));
                    lambda = (lambda / 10.0).max(1e-12);
                    break;
                }
            }
            lambda *= 10.0;
        }
        match accepted {
            None => return Outcome::Converged(iter),
            Some((next, next_chi2)) => {
                let gain = (chi2 - next_chi2) / chi2.max(f64::MIN_POSITIVE);
                *comps = next;
                chi2 = next_chi2;
                if gain < 1e-10 {
                    return Outcome::Converged(iter);
                }
            }
        }
    }
    Outcome::Exhausted(opts.max_iterations)
}

fn to_peak(c: &Component, h: &ArrivalHistogram) -> GaussianPeak {
    let w = h.bin_width();
    GaussianPeak {
        amplitude: c.amp,
        mean: h.bin_edges[0] + (c.mu + 0.5) * w,
        sigma: c.sigma * w,
        area: c.area(),
    }
}

/// Merges components closer than half the narrower width.
fn merge_duplicates(comps: &mut Vec<Component>) -> bool {
    comps.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    for i in 1..comps.len() {
        let (a, b) = (comps[i - 1], comps[i]);
        if b.mu - a.mu < 0.5 * a.sigma.min(b.sigma) {
            let (wa, wb) = (a.area(), b.area());
            let sigma = a.sigma.max(b.sigma);
            comps[i - 1] = Component {
                mu: (a.mu * wa + b.mu * wb) / (wa + wb),
                sigma,
                amp: (wa + wb) / (sigma * SQRT_TAU),
            };
            comps.remove(i);
            return true;
        }
    }
    false
}

/// Seeds, fits and prunes Gaussian peaks. See the module docs.
pub fn detect_and_fit_peaks_with(
    histogram: &ArrivalHistogram,
    max_peaks: usize,
    opts: &FitOptions,
) -> Result<PeakFit> {
    if histogram.counts.is_empty() || histogram.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    let counts = &histogram.counts;
    let mut comps = seeds(counts, max_peaks.max(1), opts);
    if comps.is_empty() {
        return Err(Error::NoPeaks);
    }
    let mut iterations = 0;
    loop {
        let outcome = levenberg_marquardt(counts, &mut comps, opts);
        let done = match outcome {
            Outcome::Converged(n) => n,
            Outcome::Exhausted(n) => {
                let mut best: Vec<GaussianPeak> = comps.iter().map(|c| to_peak(c, histogram)).collect();
                best.sort_by(|a, b| a.mean.total_cmp(&b.mean));
                return Err(Error::FitNotConverged {
                    iterations: iterations + n,
                    best,
                });
            }
        };
        iterations += done;
        let before = comps.len();
        comps.retain(|c| c.area() >= opts.area_floor_counts);
        let merged = merge_duplicates(&mut comps);
        if comps.is_empty() {
            return Err(Error::NoPeaks);
        }
        if comps.len() == before && !merged {
            break;
        }
    }
    comps.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    let residual_rms = (counts
        .iter()
        .enumerate()
        .map(|(i, &y)| (y as f64 - model(&comps, i as f64)).powi(2))
        .sum::<f64>()
        / counts.len() as f64)
        .sqrt();
    Ok(PeakFit {
        peaks: comps.iter().map(|c| to_peak(c, histogram)).collect(),
        residual_rms,
        iterations,
    })
}

/// [`detect_and_fit_peaks_with`] using [`FitOptions::default`].
pub fn detect_and_fit_peaks(histogram: &ArrivalHistogram, max_peaks: usize) -> Result<PeakFit> {
    detect_and_fit_peaks_with(histogram, max_peaks, &FitOptions::default())
}
