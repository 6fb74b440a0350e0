use serde::{Deserialize, Serialize};

use super::overlap::discrimination_overlap;
use crate::error::{Error, Result};

/// Rise time, trigger-crossing mean and jitter as functions of photon number.
///
/// `t_R(n) = t_R(1)·n^p`, `σ_n = jitter_ratio·t_R(n)` and
/// `μ_n = time_offset + trigger_fraction·t_R(n)`, the crossing of a linear
/// edge of duration `t_R(n)` at a fixed fraction of its amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingModel {
    pub base_rise_time_seconds: f64,
    pub exponent: f64,
    pub jitter_ratio: f64,
    pub trigger_fraction: f64,
    pub time_offset_seconds: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            base_rise_time_seconds: 1.3e-9,
            exponent: -0.3,
            jitter_ratio: 0.0085,
            trigger_fraction: 0.7,
            time_offset_seconds: 200e-12,
        }
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.base_rise_time_seconds > 0.0
            && self.base_rise_time_seconds.is_finite()
            && self.jitter_ratio > 0.0
            && self.jitter_ratio.is_finite()
            && self.exponent.is_finite()
            && self.time_offset_seconds.is_finite()
            && self.trigger_fraction > 0.0
            && self.trigger_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid timing model {self:?}")))
        }
    }

    fn check_n(n: u64) -> Result<()> {
        if n == 0 {
            return Err(Error::domain("photon number 0 produces no pulse"));
        }
        Ok(())
    }

    pub fn rise_time(&self, n: u64) -> Result<f64> {
        Self::check_n(n)?;
        Ok(self.base_rise_time_seconds * (n as f64).powf(self.exponent))
    }

    pub fn jitter(&self, n: u64) -> Result<f64> {
        Ok(self.jitter_ratio * self.rise_time(n)?)
    }

    pub fn crossing_mean(&self, n: u64) -> Result<f64> {
        Ok(self.time_offset_seconds + self.trigger_fraction * self.rise_time(n)?)
    }
}

/// `(n, P(n|n+1))` for `n = 1..=n_max`: the overlap between the crossing-time
/// distributions of `n` and `n + 1` photons.
pub fn resolution_curve(model: &TimingModel, n_max: u64) -> Result<Vec<(u64, f64)>> {
    if n_max == 0 {
        return Err(Error::domain("resolution curve needs n_max >= 1"));
    }
    (1..=n_max)
        .map(|n| {
            let p = discrimination_overlap(
                model.crossing_mean(n + 1)?,
                model.jitter(n + 1)?,
                model.crossing_mean(n)?,
                model.jitter(n)?,
            )?;
            Ok((n, p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(base: f64, ratio: f64) -> TimingModel {
        TimingModel {
            base_rise_time_seconds: base,
            exponent: -0.3,
            jitter_ratio: ratio,
            trigger_fraction: 0.5,
            time_offset_seconds: 0.0,
        }
    }

    #[test]
    fn rise_time_scales_as_power_law() {
        let m = model(100e-12, 0.05);
        assert_eq!(m.rise_time(1).unwrap(), 100e-12);
        let two = m.rise_time(2).unwrap();
        assert!((two - 100e-12 * 2f64.powf(-0.3)).abs() < 1e-24);
        assert!((two - 81.23e-12).abs() < 0.01e-12);
        let ratio = m.jitter(2).unwrap() / m.jitter(1).unwrap();
        assert!((ratio - two / 100e-12).abs() < 1e-15);
        assert!(matches!(m.rise_time(0), Err(Error::Domain(_))));
    }

    #[test]
    fn crossing_mean_is_linear_in_rise_time() {
        let mut m = model(1e-9, 0.01);
        m.time_offset_seconds = 5e-9;
        m.trigger_fraction = 0.7;
        assert!((m.crossing_mean(1).unwrap() - 5.7e-9).abs() < 1e-21);
    }

    #[test]
    fn curve_increases_and_orders_by_ratio() {
        let narrow = resolution_curve(&model(1.0, 0.01), 10).unwrap();
        let wide = resolution_curve(&model(1.0, 0.05), 10).unwrap();
        for w in wide.windows(2) {
            assert!(w[1].1 > w[0].1, "{w:?}");
        }
        for (a, b) in narrow.iter().zip(&wide) {
            assert!(b.1 >= a.1);
        }
    }

    #[test]
    fn vanishing_jitter_separates_everything() {
        let curve = resolution_curve(&model(1.0, 1e-6), 10).unwrap();
        assert!(curve.iter().all(|&(_, p)| p < 1e-12));
    }
}
