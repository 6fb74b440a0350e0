//! Plot-ready CSV tables of the counting statistics.

use super::{click_probability, collision_probability, resolution_curve, DetectorArrayModel, TimingModel};
use crate::error::{Error, Result};

fn to_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

/// `P(q clicks | q photons)` for `q = 1..=max_photons`, one column per
/// efficiency: the probability that every incident photon is detected.
pub fn all_detected_table(elements: u64, efficiencies: &[f64], max_photons: u64) -> Result<String> {
    let models: Vec<DetectorArrayModel> = efficiencies
        .iter()
        .map(|&e| DetectorArrayModel::new(elements, e))
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["q".to_string()];
    header.extend(efficiencies.iter().map(|e| format!("eta_{e}")));
    w.write_record(&header)?;
    for q in 1..=max_photons {
        let mut row = vec![q.to_string()];
        for m in &models {
            row.push(click_probability(m, q, q)?.to_string());
        }
        w.write_record(&row)?;
    }
    to_string(w)
}

/// Long-format surface `efficiency, photons, clicks, probability` over
/// `0 <= clicks <= photons <= max_photons`.
pub fn click_surface_table(elements: u64, efficiencies: &[f64], max_photons: u64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["efficiency", "photons", "clicks", "probability"])?;
    for &e in efficiencies {
        let m = DetectorArrayModel::new(elements, e)?;
        for q in 0..=max_photons {
            for n in 0..=q {
                w.write_record(&[
                    e.to_string(),
                    q.to_string(),
                    n.to_string(),
                    click_probability(&m, n, q)?.to_string(),
                ])?;
            }
        }
    }
    to_string(w)
}

/// Probability that some element absorbs two or more of `q` photons.
pub fn collision_table(elements: u64, max_photons: u64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["q", "collision_probability"])?;
    for q in 1..=max_photons {
        w.write_record(&[q.to_string(), collision_probability(elements, q)?.to_string()])?;
    }
    to_string(w)
}

/// Overlap of the `n` and `n+1` timing peaks for `n = 1..=n_max`, one column
/// per jitter ratio in ascending order.
pub fn resolution_table(timing: &TimingModel, jitter_ratios: &[f64], n_max: u64) -> Result<String> {
    let mut ratios = jitter_ratios.to_vec();
    ratios.sort_by(f64::total_cmp);
    let curves: Vec<Vec<(u64, f64)>> = ratios
        .iter()
        .map(|&r| {
            let model = TimingModel {
                jitter_ratio: r,
                ..*timing
            };
            resolution_curve(&model, n_max)
        })
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["n".to_string()];
    header.extend(ratios.iter().map(|r| format!("ratio_{r}")));
    w.write_record(&header)?;
    for n in 1..=n_max {
        let mut row = vec![n.to_string()];
        for c in &curves {
            row.push(c[(n - 1) as usize].1.to_string());
        }
        w.write_record(&row)?;
    }
    to_string(w)
}
