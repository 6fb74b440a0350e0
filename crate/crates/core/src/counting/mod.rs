//! Counting statistics of a uniformly illuminated nanowire treated as an
//! array of independent detector elements.
//!
//! A photon is detected with probability `η` and, if detected, lands on one of
//! `N` elements uniformly at random. An element "clicks" when at least one
//! detected photon lands on it. [`click_probability`] gives the distribution
//! of the number of clicking elements given `q` incident photons.

mod overlap;
mod tables;
mod timing;

pub use overlap::{discrimination_overlap, gaussian_intersection, normal_mass, normal_pdf};
pub use tables::{all_detected_table, click_surface_table, collision_table, resolution_table};
pub use timing::{resolution_curve, TimingModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative error bound above which the alternating sum is rejected.
const ALTERNATING_SUM_TOLERANCE: f64 = 1e-9;

/// `N` identical elements with per-photon detection efficiency `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorArrayModel {
    elements: u64,
    efficiency: f64,
}

impl DetectorArrayModel {
    pub fn new(elements: u64, efficiency: f64) -> Result<Self> {
        if elements == 0 {
            return Err(Error::domain("detector array needs at least one element"));
        }
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::domain(format!(
                "efficiency {efficiency} outside [0, 1]"
            )));
        }
        Ok(Self {
            elements,
            efficiency,
        })
    }

    pub fn elements(&self) -> u64 {
        self.elements
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    fn check_counts(&self, clicks: u64, photons: u64) -> Result<()> {
        if clicks > photons {
            return Err(Error::domain(format!(
                "{clicks} clicks cannot come from {photons} photons"
            )));
        }
        if clicks > self.elements {
            return Err(Error::domain(format!(
                "{clicks} clicks exceed the {} available elements",
                self.elements
            )));
        }
        Ok(())
    }
}

/// Probability that exactly `clicks` elements fire when `photons` photons are
/// incident.
///
/// The inclusion-exclusion sum
/// `C(N,n) Σ_j (-1)^j C(n,j) [(1-η) + (n-j)η/N]^q`
/// is evaluated through its forward-difference expansion
/// `N!/(N-n)! Σ_k C(q,k) (1-η)^(q-k) (η/N)^k S(k,n)`
/// (with `S` the Stirling numbers of the second kind). Every term of the
/// expansion is non-negative, so the log-domain sum has no cancellation and
/// stays accurate for `N` in the tens of thousands and `q` in the hundreds.
pub fn click_probability(model: &DetectorArrayModel, clicks: u64, photons: u64) -> Result<f64> {
    model.check_counts(clicks, photons)?;
    let n = clicks as usize;
    let q = photons as usize;

    let ln_miss = (1.0 - model.efficiency).ln();
    let ln_hit = (model.efficiency / model.elements as f64).ln();
    let ln_fact = ln_factorials(q);
    let ln_stirling = ln_stirling_column(q, n);

    let terms = (n..=q).map(|k| {
        ln_binomial(&ln_fact, q, k)
            + scaled_ln(ln_miss, (q - k) as f64)
            + scaled_ln(ln_hit, k as f64)
            + ln_stirling[k]
    });
    let ln_sum = log_sum_exp(terms);
    let ln_p = ln_falling_factorial(model.elements, clicks) + ln_sum;
    let p = ln_p.exp();
    if !p.is_finite() {
        return Err(Error::Accuracy(format!(
            "click probability for n={clicks}, q={photons} evaluated to {p}"
        )));
    }
    Ok(p.min(1.0))
}

/// The inclusion-exclusion sum evaluated term by term, with log-domain
/// binomials and explicit sign tracking.
///
/// The alternating terms can cancel catastrophically. The estimated relative
/// error is `cond * (n + 2) * ε` with `cond = Σ|t_j| / |Σ t_j|`; when that
/// exceeds `1e-9` the evaluation is refused with [`Error::Accuracy`]. Use
/// [`click_probability`] for a route that never cancels.
pub fn click_probability_inclusion_exclusion(
    model: &DetectorArrayModel,
    clicks: u64,
    photons: u64,
) -> Result<f64> {
    model.check_counts(clicks, photons)?;
    let n = clicks as usize;
    let q = photons as f64;
    let miss = 1.0 - model.efficiency;
    let hit = model.efficiency / model.elements as f64;
    let ln_fact = ln_factorials(n);

    let mut ln_terms = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let base = miss + (n - j) as f64 * hit;
        let ln_mag = ln_binomial(&ln_fact, n, j) + scaled_ln(base.ln(), q);
        ln_terms.push((j % 2 == 0, ln_mag));
    }
    let ln_max = ln_terms
        .iter()
        .map(|&(_, l)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if ln_max == f64::NEG_INFINITY {
        return Ok(0.0);
    }

    let (mut pos, mut neg) = (0.0_f64, 0.0_f64);
    for &(positive, ln_mag) in &ln_terms {
        let t = (ln_mag - ln_max).exp();
        if positive {
            pos += t;
        } else {
            neg += t;
        }
    }
    let diff = pos - neg;
    let cond = (pos + neg) / diff.abs();
    let rel_err = cond * (n as f64 + 2.0) * f64::EPSILON;
    if !diff.is_finite() || diff <= 0.0 || rel_err > ALTERNATING_SUM_TOLERANCE {
        return Err(Error::Accuracy(format!(
            "alternating sum for n={clicks}, q={photons} cancels (condition {cond:.3e})"
        )));
    }
    let ln_choose_n = ln_falling_factorial(model.elements, clicks) - ln_fact[n];
    let p = (ln_choose_n + ln_max + diff.ln()).exp();
    if !p.is_finite() {
        return Err(Error::Accuracy(format!(
            "click probability for n={clicks}, q={photons} evaluated to {p}"
        )));
    }
    Ok(p.min(1.0))
}

/// Probability that at least two of `photons` photons land on the same
/// element, `1 - Π_{i=1}^{q-1} (1 - i/N)`. Pigeonhole gives exactly 1 when
/// `q > N`.
pub fn collision_probability(elements: u64, photons: u64) -> Result<f64> {
    if elements == 0 {
        return Err(Error::domain("detector array needs at least one element"));
    }
    if photons <= 1 {
        return Ok(0.0);
    }
    if photons > elements {
        return Ok(1.0);
    }
    let n = elements as f64;
    let ln_no_collision: f64 = (1..photons).map(|i| (-(i as f64) / n).ln_1p()).sum();
    Ok(-ln_no_collision.exp_m1())
}

/// `ln k!` for `k = 0..=max`.
fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    out.push(acc);
    for k in 1..=max {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

fn ln_binomial(ln_fact: &[f64], n: usize, k: usize) -> f64 {
    ln_fact[n] - ln_fact[k] - ln_fact[n - k]
}

/// `ln(N!/(N-n)!)`.
fn ln_falling_factorial(big_n: u64, n: u64) -> f64 {
    (0..n).map(|i| ((big_n - i) as f64).ln()).sum()
}

/// `e * ln_base` with the convention `0^0 = 1`.
fn scaled_ln(ln_base: f64, e: f64) -> f64 {
    if e == 0.0 {
        0.0
    } else {
        e * ln_base
    }
}

/// `ln S(k, n)` for `k = 0..=q` at fixed `n`.
fn ln_stirling_column(q: usize, n: usize) -> Vec<f64> {
    // Row-by-row over k, keeping columns 0..=n.
    let mut row = vec![f64::NEG_INFINITY; n + 1];
    row[0] = 0.0;
    let mut column = Vec::with_capacity(q + 1);
    column.push(row[n]);
    for _ in 1..=q {
        for m in (1..=n).rev() {
            row[m] = log_add_exp((m as f64).ln() + row[m], row[m - 1]);
        }
        row[0] = f64::NEG_INFINITY;
        column.push(row[n]);
    }
    column
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let hi = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + values.map(|v| (v - hi).exp()).sum::<f64>().ln()
}
