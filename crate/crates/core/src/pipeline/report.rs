use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::reconstruct::{Divergence, PerK};
use super::GaussianPeak;
use crate::distribution::PhotonNumberDistribution;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportPeak {
    pub photon_number: u32,
    pub peak: GaussianPeak,
    /// Events in this peak's decision region.
    pub region_count: f64,
    /// Region count after unfolding the spill between regions; the value
    /// entering the reconstruction.
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionReport {
    pub schema_version: u32,
    pub level_volts: f64,
    pub bin_width_seconds: f64,
    pub total_slots: u64,
    pub tagged_events: u64,
    pub dropped_events: u64,
    pub peaks: Vec<ReportPeak>,
    pub measured: PhotonNumberDistribution,
    pub lambda_hat: f64,
    pub predicted: PhotonNumberDistribution,
    pub predicted_tail_mass: f64,
    pub divergence: Divergence,
    pub per_k: Vec<PerK>,
    pub residual_rms: f64,
    pub hint_mismatch: Option<String>,
}

impl ReconstructionReport {
    /// Parses a report and checks its version and internal consistency.
    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        report.check()?;
        Ok(report)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::format(format!(
                "report schema {} is not {REPORT_SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        for (i, p) in self.peaks.iter().enumerate() {
            if p.photon_number as usize != i + 1 {
                return Err(Error::format("peak photon numbers must be 1, 2, ... in order"));
            }
            if !(p.peak.amplitude > 0.0 && p.peak.sigma > 0.0) {
                return Err(Error::format("peaks need positive amplitude and width"));
            }
        }
        let k_max = self.measured.k_max();
        if k_max != self.peaks.len() || self.predicted.k_max() != k_max || self.per_k.len() != k_max + 1 {
            return Err(Error::format("distribution lengths disagree with the peak count"));
        }
        if self.per_k.iter().enumerate().any(|(i, e)| e.k != i) {
            return Err(Error::format("per-k rows out of order"));
        }
        if self.tagged_events > self.total_slots.saturating_add(self.dropped_events) {
            return Err(Error::format("more tagged events than slots"));
        }
        Ok(())
    }

    /// Per-k table with columns `k, measured, predicted, abs_error`.
    pub fn write_per_k_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "measured", "predicted", "abs_error"])?;
        for e in &self.per_k {
            w.write_record(&[
                e.k.to_string(),
                e.measured.to_string(),
                e.predicted.to_string(),
                e.error.abs().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "trigger level      {:.3} V", self.level_volts);
        let _ = writeln!(s, "slots              {}", self.total_slots);
        let _ = writeln!(
            s,
            "tagged / dropped   {} / {}",
            self.tagged_events, self.dropped_events
        );
        let _ = writeln!(s, "bin width          {:.3} ps", self.bin_width_seconds * 1e12);
        let _ = writeln!(s, "lambda_hat         {:.6}", self.lambda_hat);
        let _ = writeln!(
            s,
            "TVD                {:.6}",
            self.divergence.total_variation
        );
        let _ = writeln!(
            s,
            "chi-square         {:.3} over {} bins",
            self.divergence.chi_square, self.divergence.chi_square_bins
        );
        if let Some(m) = &self.hint_mismatch {
            let _ = writeln!(s, "assignment warning {m}");
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>3} {:>12} {:>10} {:>12} {:>12}",
            "n", "mean (ps)", "sigma (ps)", "gauss area", "count"
        );
        for p in &self.peaks {
            let _ = writeln!(
                s,
                "{:>3} {:>12.3} {:>10.3} {:>12.1} {:>12.1}",
                p.photon_number,
                p.peak.mean * 1e12,
                p.peak.sigma * 1e12,
                p.peak.area,
                p.count
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>3} {:>12} {:>12} {:>12}",
            "k", "measured", "predicted", "error"
        );
        for e in &self.per_k {
            let _ = writeln!(
                s,
                "{:>3} {:>12.6} {:>12.6} {:>+12.6}",
                e.k, e.measured, e.predicted, e.error
            );
        }
        s
    }
}
