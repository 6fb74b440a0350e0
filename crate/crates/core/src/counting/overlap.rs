use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

pub fn normal_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Probability mass of `N(mean, sigma²)` on `(lo, hi)`, computed from
/// whichever tail keeps the subtraction well conditioned.
pub fn normal_mass(mean: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let za = (lo - mean) / sigma;
    let zb = (hi - mean) / sigma;
    let upper = |z: f64| 0.5 * libm::erfc(z / SQRT_2);
    let lower = |z: f64| 0.5 * libm::erfc(-z / SQRT_2);
    let mass = if za >= 0.0 {
        upper(za) - upper(zb)
    } else if zb <= 0.0 {
        lower(zb) - lower(za)
    } else {
        1.0 - lower(za) - upper(zb)
    };
    mass.max(0.0)
}

fn check_sigmas(s1: f64, s2: f64) -> Result<()> {
    if !(s1 > 0.0 && s2 > 0.0) || !s1.is_finite() || !s2.is_finite() {
        return Err(Error::domain(format!(
            "standard deviations must be positive and finite, got {s1} and {s2}"
        )));
    }
    Ok(())
}

/// Points where the two normal densities are equal, ascending. Empty when
/// the densities never cross; `None` when they are identical.
fn density_crossings(m1: f64, s1: f64, m2: f64, s2: f64) -> Option<Vec<f64>> {
    // ln p1(x) - ln p2(x) = a x² + b x + c
    let a = 0.5 / (s2 * s2) - 0.5 / (s1 * s1);
    let b = m1 / (s1 * s1) - m2 / (s2 * s2);
    let c = 0.5 * m2 * m2 / (s2 * s2) - 0.5 * m1 * m1 / (s1 * s1) - (s1 / s2).ln();

    if s1 == s2 {
        if m1 == m2 {
            return None;
        }
        return Some(vec![0.5 * (m1 + m2)]);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Some(Vec::new());
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut roots = Vec::with_capacity(2);
    if q != 0.0 {
        roots.push(q / a);
        roots.push(c / q);
    } else {
        // b = 0 and disc = 0
        roots.push(0.0);
    }
    roots.retain(|r| r.is_finite());
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    Some(roots)
}

/// The point between `mean1 < mean2` where the two normal densities are
/// equal. Two densities cross at most once between their means; there is no
/// such point when the narrower one dominates the whole gap, which is a
/// domain error.
pub fn gaussian_intersection(mean1: f64, sigma1: f64, mean2: f64, sigma2: f64) -> Result<f64> {
    check_sigmas(sigma1, sigma2)?;
    if !(mean1 < mean2) {
        return Err(Error::domain(format!(
            "intersection needs mean1 < mean2, got {mean1} and {mean2}"
        )));
    }
    let roots = density_crossings(mean1, sigma1, mean2, sigma2).unwrap_or_default();
    roots
        .into_iter()
        .find(|&r| r > mean1 && r < mean2)
        .ok_or_else(|| {
            Error::domain(format!(
                "no density crossing between {mean1} and {mean2} (σ = {sigma1}, {sigma2})"
            ))
        })
}

/// Overlapping coefficient `∫ min(p1, p2) dx` of two normal densities.
///
/// This is the total mass on the wrong side of the equal-density boundary:
/// 0 for perfectly separable distributions, 1 for identical ones. Any order
/// of the means is accepted.
pub fn discrimination_overlap(mean1: f64, sigma1: f64, mean2: f64, sigma2: f64) -> Result<f64> {
    check_sigmas(sigma1, sigma2)?;
    if !mean1.is_finite() || !mean2.is_finite() {
        return Err(Error::domain("means must be finite"));
    }
    let Some(roots) = density_crossings(mean1, sigma1, mean2, sigma2) else {
        return Ok(1.0);
    };

    let mut cuts = Vec::with_capacity(roots.len() + 2);
    cuts.push(f64::NEG_INFINITY);
    cuts.extend(roots);
    cuts.push(f64::INFINITY);

    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let probe = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0 + lo.abs(),
            (false, true) => hi - 1.0 - hi.abs(),
            (false, false) => mean1,
        };
        // Integrate whichever density is smaller on this interval. Compare in
        // log space so far-tail probes do not underflow to a tie.
        let l1 = -0.5 * ((probe - mean1) / sigma1).powi(2) - sigma1.ln();
        let l2 = -0.5 * ((probe - mean2) / sigma2).powi(2) - sigma2.ln();
        total += if l1 <= l2 {
            normal_mass(mean1, sigma1, lo, hi)
        } else {
            normal_mass(mean2, sigma2, lo, hi)
        };
    }
    Ok(total.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect_density_difference(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
        let f = |x: f64| normal_pdf(x, m1, s1) - normal_pdf(x, m2, s2);
        let (mut lo, mut hi) = (m1, m2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo).signum() == f(mid).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn equal_widths_meet_at_the_midpoint() {
        assert!((gaussian_intersection(0.0, 1.0, 2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((gaussian_intersection(0.0, 1.0, 3.0, 1.0).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn unequal_widths_match_bisection_and_quadratic() {
        let c = gaussian_intersection(0.0, 1.0, 2.0, 2.0).unwrap();
        let oracle = bisect_density_difference(0.0, 1.0, 2.0, 2.0);
        let disc: f64 = 16.0 + 12.0 * (4.0 + 8.0 * 2f64.ln());
        let root = (-4.0 + disc.sqrt()) / 6.0;
        assert!((c - oracle).abs() < 1e-12);
        assert!((c - root).abs() < 1e-12);
        assert!((c - 1.2375).abs() < 1e-3);
    }

    #[test]
    fn intersection_needs_ordered_means() {
        assert!(matches!(gaussian_intersection(1.0, 1.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(gaussian_intersection(0.0, 0.0, 1.0, 1.0), Err(Error::Domain(_))));
        // A very wide first density dominates the narrow second one on the
        // whole interval between the means.
        assert!(matches!(gaussian_intersection(0.0, 10.0, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn identical_distributions_overlap_fully() {
        assert_eq!(discrimination_overlap(3.0, 0.5, 3.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn equal_width_closed_form() {
        let got = discrimination_overlap(0.0, 1.0, 4.0, 1.0).unwrap();
        let want = libm::erfc(4.0 / (2.0 * SQRT_2));
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.04550).abs() < 1e-5);
    }

    #[test]
    fn infinitely_separated_distributions_do_not_overlap() {
        assert!(discrimination_overlap(0.0, 1.0, 1e6, 1.0).unwrap() < 1e-12);
    }

    #[test]
    fn concentric_distributions_use_both_crossings() {
        // Same mean, different widths: crossings at ±x. Inside, the wide
        // density is the smaller one; outside, the narrow one is.
        let got = discrimination_overlap(0.0, 1.0, 0.0, 2.0).unwrap();
        let x = (8.0 * 2f64.ln() / 3.0).sqrt();
        let want = 2.0 * normal_mass(0.0, 1.0, x, f64::INFINITY) + normal_mass(0.0, 2.0, -x, x);
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn normal_mass_tails_are_accurate() {
        let tail = normal_mass(0.0, 1.0, 30.0, f64::INFINITY);
        assert!(tail > 0.0 && tail < 1e-190);
        assert!((normal_mass(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-16);
        assert_eq!(normal_mass(0.0, 1.0, 2.0, 1.0), 0.0);
    }
}
