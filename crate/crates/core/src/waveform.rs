//! Synthetic digitizer records for a pulsed-laser experiment.
//!
//! Slots alternate between main laser pulses and pulses the pulse picker
//! should have blocked. Every slot with at least one photon fires the
//! detector; the photon number only shapes the rising edge. Pulses pass a
//! two-pole analog chain and pick up white noise before digitization.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::TimingModel;
use crate::electrothermal::{simulate_transient, ElectrothermalParams};
use crate::error::{Error, Result};
use crate::rng::{slot_rng, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub repetition_rate_hz: f64,
    /// Mean photon number `λ` of a main pulse.
    pub mean_photons: f64,
    pub extinction_ratio_db: f64,
    /// Leaked pulses between consecutive main pulses. Zero disables leakage.
    pub suppressed_slots_per_main: u32,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            repetition_rate_hz: 1_012_000.0,
            mean_photons: 0.35,
            extinction_ratio_db: 20.0,
            suppressed_slots_per_main: 1,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.repetition_rate_hz > 0.0 && self.repetition_rate_hz.is_finite()) {
            return Err(Error::config("repetition_rate_hz must be positive"));
        }
        if !(self.mean_photons >= 0.0 && self.mean_photons.is_finite()) {
            return Err(Error::config("mean_photons must be finite and >= 0"));
        }
        if !(self.extinction_ratio_db >= 0.0) {
            return Err(Error::config("extinction_ratio_db must be >= 0"));
        }
        Ok(())
    }

    pub fn slot_kind(&self, slot: u64) -> SlotKind {
        if slot % (u64::from(self.suppressed_slots_per_main) + 1) == 0 {
            SlotKind::Main
        } else {
            SlotKind::Suppressed
        }
    }

    /// Mean photon number of a slot of the given kind.
    pub fn slot_mean(&self, kind: SlotKind) -> f64 {
        match kind {
            SlotKind::Main => self.mean_photons,
            SlotKind::Suppressed => {
                self.mean_photons * 10f64.powf(-self.extinction_ratio_db / 10.0)
            }
        }
    }

    fn can_fire(&self) -> bool {
        self.slot_mean(SlotKind::Main) > 0.0
            || (self.suppressed_slots_per_main > 0 && self.slot_mean(SlotKind::Suppressed) > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Main,
    Suppressed,
}

impl SlotKind {
    pub fn code(self) -> u8 {
        match self {
            SlotKind::Main => 0,
            SlotKind::Suppressed => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SlotKind::Main),
            1 => Some(SlotKind::Suppressed),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SlotKind::Main => "main",
            SlotKind::Suppressed => "suppressed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub sample_rate_hz: f64,
    pub amplifier_bandwidth_hz: f64,
    pub scope_bandwidth_hz: f64,
    pub pulse_amplitude_volts: f64,
    pub fall_time_constant_seconds: f64,
    pub noise_rms_volts: f64,
    pub record_length_samples: u32,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 40e9,
            amplifier_bandwidth_hz: 2e9,
            scope_bandwidth_hz: 4e9,
            pulse_amplitude_volts: 1.0,
            fall_time_constant_seconds: 20e-9,
            noise_rms_volts: DEFAULT_NOISE_RMS_VOLTS,
            record_length_samples: 192,
        }
    }
}

/// Calibrated so the one-photon crossing jitter at the best trigger level of
/// the electrothermal templates is about 11 ps.
pub const DEFAULT_NOISE_RMS_VOLTS: f64 = 0.0063;

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sample_rate_hz", self.sample_rate_hz),
            ("amplifier_bandwidth_hz", self.amplifier_bandwidth_hz),
            ("scope_bandwidth_hz", self.scope_bandwidth_hz),
            ("pulse_amplitude_volts", self.pulse_amplitude_volts),
            ("fall_time_constant_seconds", self.fall_time_constant_seconds),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.sample_rate_hz.is_finite() {
            return Err(Error::config("sample_rate_hz must be finite"));
        }
        let slowest = self.amplifier_bandwidth_hz.min(self.scope_bandwidth_hz);
        if self.sample_rate_hz <= 2.0 * slowest {
            return Err(Error::config(format!(
                "sample rate {} Hz does not exceed twice the {slowest} Hz bandwidth",
                self.sample_rate_hz
            )));
        }
        if !(self.noise_rms_volts >= 0.0 && self.noise_rms_volts.is_finite()) {
            return Err(Error::config("noise_rms_volts must be finite and >= 0"));
        }
        if self.record_length_samples < 2 {
            return Err(Error::config("record_length_samples must be at least 2"));
        }
        Ok(())
    }

    pub fn sample_interval(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }
}

/// How the noiseless detector pulse for `n` photons is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseShape {
    /// Linear edge of duration `t_R(n)` starting at the model's time offset,
    /// then exponential decay.
    Analytic(TimingModel),
    /// Load voltage of the electrothermal model for `n` simultaneous
    /// absorptions, delayed by `time_offset_seconds`.
    Electrothermal {
        params: ElectrothermalParams,
        time_offset_seconds: f64,
    },
}

/// Ideal pulse for `n` photons sampled at the frontend rate, with peak
/// `pulse_amplitude`. All zeros for `n = 0`.
pub fn pulse_template(shape: &PulseShape, n: u64, frontend: &FrontendConfig) -> Result<Vec<f64>> {
    let len = frontend.record_length_samples as usize;
    if n == 0 {
        return Ok(vec![0.0; len]);
    }
    let dt = frontend.sample_interval();
    let amp = frontend.pulse_amplitude_volts;
    match shape {
        PulseShape::Analytic(timing) => {
            let tr = timing.rise_time(n)?;
            let t0 = timing.time_offset_seconds;
            let tau = frontend.fall_time_constant_seconds;
            Ok((0..len)
                .map(|i| {
                    let t = i as f64 * dt - t0;
                    if t <= 0.0 {
                        0.0
                    } else if t < tr {
                        amp * t / tr
                    } else {
                        amp * (-(t - tr) / tau).exp()
                    }
                })
                .collect())
        }
        PulseShape::Electrothermal {
            params,
            time_offset_seconds,
        } => {
            let r = simulate_transient(params, &vec![0.0; n as usize])?;
            let peak = r.voltage.iter().copied().fold(0.0, f64::max);
            if !(peak > 0.0) {
                return Err(Error::NoPulse(format!("{n}-photon transient has no voltage")));
            }
            let step = params.time_step_seconds;
            Ok((0..len)
                .map(|i| {
                    let t = i as f64 * dt - time_offset_seconds;
                    if t <= 0.0 {
                        return 0.0;
                    }
                    let x = t / step;
                    let k = x.floor() as usize;
                    if k + 1 >= r.voltage.len() {
                        return amp * r.voltage[r.voltage.len() - 1] / peak;
                    }
                    let f = x - k as f64;
                    amp * (r.voltage[k] + f * (r.voltage[k + 1] - r.voltage[k])) / peak
                })
                .collect())
        }
    }
}

fn one_pole(signal: &mut [f64], cutoff_hz: f64, dt: f64) {
    // Exact sampling of the continuous single-pole step response.
    let alpha = -(-2.0 * std::f64::consts::PI * cutoff_hz * dt).exp_m1();
    let mut y = 0.0;
    for s in signal.iter_mut() {
        y += alpha * (*s - y);
        *s = y;
    }
}

/// Causal amplifier and oscilloscope poles, no noise.
pub fn filter_chain(waveform: &[f64], frontend: &FrontendConfig) -> Vec<f64> {
    let dt = frontend.sample_interval();
    let mut out = waveform.to_vec();
    one_pole(&mut out, frontend.amplifier_bandwidth_hz, dt);
    one_pole(&mut out, frontend.scope_bandwidth_hz, dt);
    out
}

fn add_noise<R: Rng>(signal: &[f64], rms: f64, rng: &mut R) -> Vec<f32> {
    if rms == 0.0 {
        return signal.iter().map(|&v| v as f32).collect();
    }
    let normal = Normal::new(0.0, rms).expect("rms validated finite and positive");
    signal
        .iter()
        .map(|&v| (v + normal.sample(rng)) as f32)
        .collect()
}

/// Filters `waveform` through the analog chain and adds white Gaussian noise
/// drawn from `noise_seed`.
pub fn apply_frontend(waveform: &[f64], frontend: &FrontendConfig, noise_seed: u64) -> Vec<f64> {
    let filtered = filter_chain(waveform, frontend);
    if frontend.noise_rms_volts == 0.0 {
        return filtered;
    }
    let mut rng = slot_rng(noise_seed, Purpose::Noise, 0);
    let normal = Normal::new(0.0, frontend.noise_rms_volts).expect("rms validated");
    filtered.into_iter().map(|v| v + normal.sample(&mut rng)).collect()
}

/// Filtered, noiseless templates for `n = 0, 1, 2, ...`, extended on demand.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    shape: PulseShape,
    frontend: FrontendConfig,
    filtered: Vec<Vec<f64>>,
}

impl TemplateBank {
    pub fn new(shape: PulseShape, frontend: FrontendConfig) -> Result<Self> {
        frontend.validate()?;
        match &shape {
            PulseShape::Analytic(t) => t.validate()?,
            PulseShape::Electrothermal { params, .. } => params.validate()?,
        }
        let mut bank = Self {
            shape,
            frontend,
            filtered: Vec::new(),
        };
        bank.ensure(1)?;
        Ok(bank)
    }

    /// Makes templates up to `n_max` available.
    pub fn ensure(&mut self, n_max: u64) -> Result<()> {
        let have = self.filtered.len() as u64;
        if n_max < have {
            return Ok(());
        }
        let new: Vec<Vec<f64>> = (have..=n_max)
            .into_par_iter()
            .map(|n| Ok(filter_chain(&pulse_template(&self.shape, n, &self.frontend)?, &self.frontend)))
            .collect::<Result<_>>()?;
        self.filtered.extend(new);
        Ok(())
    }

    /// Filtered template for `n`; call [`ensure`](Self::ensure) first.
    pub fn get(&self, n: u64) -> &[f64] {
        &self.filtered[n as usize]
    }

    pub fn frontend(&self) -> &FrontendConfig {
        &self.frontend
    }

    pub fn shape(&self) -> &PulseShape {
        &self.shape
    }
}

/// A time-tag attached to an event at one trigger level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub level_volts: f64,
    /// `None` when the waveform never crosses the level.
    pub time_seconds: Option<f64>,
}

/// One fired slot.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub slot_index: u64,
    pub slot_kind: SlotKind,
    pub true_photon_count: u16,
    /// Digitized samples; dropped once tagging no longer needs them.
    pub waveform: Option<Vec<f32>>,
    pub crossing_times: Vec<Crossing>,
}

/// Slot bookkeeping of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotCounts {
    /// Slots up to and including the last emitted event.
    pub total_slots: u64,
    /// Main slots among them.
    pub main_slots: u64,
    pub events: u64,
}

fn poisson_draw<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("mean validated finite and positive");
    p.sample(rng) as u64
}

/// Photon number of one slot, a pure function of `(source, seed, slot)`.
pub fn sample_slot(source: &SourceConfig, seed: u64, slot: u64) -> (SlotKind, u64) {
    let kind = source.slot_kind(slot);
    let mut rng = slot_rng(seed, Purpose::PhotonCounts, slot);
    (kind, poisson_draw(source.slot_mean(kind), &mut rng))
}

/// Photon numbers for slots `0..n_slots`.
pub fn sample_photon_counts(source: &SourceConfig, seed: u64, n_slots: u64) -> Vec<(SlotKind, u64)> {
    (0..n_slots)
        .into_par_iter()
        .map(|slot| sample_slot(source, seed, slot))
        .collect()
}

/// Slots examined per parallel batch.
const CHUNK_SLOTS: u64 = 1 << 16;

/// Generation stops with [`Error::SlotCap`] after this many slots by default.
pub const DEFAULT_MAX_SLOTS: u64 = 1 << 34;

/// Streams fired slots in slot order until a target number of events.
#[derive(Debug, Clone)]
pub struct DatasetGenerator {
    source: SourceConfig,
    bank: TemplateBank,
    seed: u64,
    max_slots: u64,
}

/// Every event of a run together with its slot bookkeeping.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub sample_rate_hz: f64,
    pub record_length: u32,
    pub counts: SlotCounts,
    pub events: Vec<EventRecord>,
}

impl DatasetGenerator {
    pub fn new(source: SourceConfig, bank: TemplateBank, seed: u64) -> Result<Self> {
        source.validate()?;
        Ok(Self {
            source,
            bank,
            seed,
            max_slots: DEFAULT_MAX_SLOTS,
        })
    }

    pub fn with_max_slots(mut self, max_slots: u64) -> Self {
        self.max_slots = max_slots;
        self
    }

    pub fn frontend(&self) -> &FrontendConfig {
        self.bank.frontend()
    }

    fn waveform(&self, slot: u64, n: u64) -> Vec<f32> {
        let mut rng = slot_rng(self.seed, Purpose::Noise, slot);
        add_noise(self.bank.get(n), self.bank.frontend().noise_rms_volts, &mut rng)
    }

    /// Generates events and hands them to `sink` in slot order, one batch at
    /// a time. Batches are synthesized in parallel.
    pub fn stream<F>(&mut self, n_events_target: u64, mut sink: F) -> Result<SlotCounts>
    where
        F: FnMut(Vec<EventRecord>) -> Result<()>,
    {
        if n_events_target == 0 {
            return Err(Error::domain("event target must be at least 1"));
        }
        if !self.source.can_fire() {
            return Err(Error::SlotCap {
                cap: self.max_slots,
                events: 0,
                target: n_events_target,
            });
        }
        let mut events = 0u64;
        let mut start = 0u64;
        let mut last_slot = None;
        while events < n_events_target {
            if start >= self.max_slots {
                return Err(Error::SlotCap {
                    cap: self.max_slots,
                    events,
                    target: n_events_target,
                });
            }
            let end = (start + CHUNK_SLOTS).min(self.max_slots);
            let fired: Vec<(u64, SlotKind, u64)> = (start..end)
                .into_par_iter()
                .filter_map(|slot| {
                    let (kind, n) = sample_slot(&self.source, self.seed, slot);
                    (n > 0).then_some((slot, kind, n))
                })
                .collect();
            let take = fired.len().min((n_events_target - events) as usize);
            let fired = &fired[..take];
            if let Some(max_n) = fired.iter().map(|f| f.2).max() {
                if max_n > u64::from(u16::MAX) {
                    return Err(Error::Domain(format!("{max_n} photons exceed the record format")));
                }
                self.bank.ensure(max_n)?;
            }
            let batch: Vec<EventRecord> = fired
                .par_iter()
                .map(|&(slot, kind, n)| EventRecord {
                    slot_index: slot,
                    slot_kind: kind,
                    true_photon_count: n as u16,
                    waveform: Some(self.waveform(slot, n)),
                    crossing_times: Vec::new(),
                })
                .collect();
            events += batch.len() as u64;
            if let Some(last) = batch.last() {
                last_slot = Some(last.slot_index);
            }
            if !batch.is_empty() {
                sink(batch)?;
            }
            start = end;
        }
        let total_slots = last_slot.map_or(0, |s| s + 1);
        Ok(SlotCounts {
            total_slots,
            main_slots: self.main_slots_below(total_slots),
            events,
        })
    }

    /// Collects the whole stream in memory.
    pub fn generate(&mut self, n_events_target: u64) -> Result<Dataset> {
        let mut events = Vec::new();
        let counts = self.stream(n_events_target, |batch| {
            events.extend(batch);
            Ok(())
        })?;
        Ok(Dataset {
            sample_rate_hz: self.frontend().sample_rate_hz,
            record_length: self.frontend().record_length_samples,
            counts,
            events,
        })
    }

    fn main_slots_below(&self, total: u64) -> u64 {
        let period = u64::from(self.source.suppressed_slots_per_main) + 1;
        total.div_ceil(period)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analytic_bank(noise: f64) -> TemplateBank {
        let frontend = FrontendConfig {
            noise_rms_volts: noise,
            ..FrontendConfig::default()
        };
        TemplateBank::new(PulseShape::Analytic(TimingModel::default()), frontend).unwrap()
    }

    #[test]
    fn zero_mean_never_fires() {
        let src = SourceConfig {
            mean_photons: 0.0,
            ..SourceConfig::default()
        };
        assert!(sample_photon_counts(&src, 1, 1000).iter().all(|&(_, n)| n == 0));
        let src = SourceConfig {
            suppressed_slots_per_main: 0,
            ..src
        };
        let mut g = DatasetGenerator::new(src, analytic_bank(0.0), 1).unwrap();
        assert!(matches!(g.generate(10), Err(Error::SlotCap { events: 0, .. })));
    }

    #[test]
    fn slot_kinds_follow_the_picker_ratio() {
        let src = SourceConfig {
            suppressed_slots_per_main: 2,
            ..SourceConfig::default()
        };
        let kinds: Vec<SlotKind> = (0..6).map(|s| src.slot_kind(s)).collect();
        use SlotKind::*;
        assert_eq!(kinds, [Main, Suppressed, Suppressed, Main, Suppressed, Suppressed]);
        let src = SourceConfig {
            mean_photons: 1.98,
            ..SourceConfig::default()
        };
        assert!((src.slot_mean(Suppressed) - 0.0198).abs() < 1e-15);
    }

    #[test]
    fn analytic_templates_peak_at_amplitude() {
        let f = FrontendConfig::default();
        let shape = PulseShape::Analytic(TimingModel::default());
        assert!(pulse_template(&shape, 0, &f).unwrap().iter().all(|&v| v == 0.0));
        let dt = f.sample_interval();
        for n in 1..=8 {
            let t = pulse_template(&shape, n, &f).unwrap();
            let peak = t.iter().copied().fold(0.0, f64::max);
            assert!(peak <= 1.0 && peak >= 1.0 - dt / f.fall_time_constant_seconds - 1e-12);
        }
    }

    #[test]
    fn identity_chain_passes_signal() {
        let f = FrontendConfig {
            amplifier_bandwidth_hz: f64::INFINITY,
            scope_bandwidth_hz: f64::INFINITY,
            noise_rms_volts: 0.0,
            ..FrontendConfig::default()
        };
        let x: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.1).collect();
        let y = apply_frontend(&x, &f, 3);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_pole_step_rise_matches_bandwidth() {
        let dt = 1e-13;
        let fc = 2e9;
        let mut step = vec![1.0; 20_000];
        one_pole(&mut step, fc, dt);
        let times: Vec<f64> = (0..step.len()).map(|i| (i + 1) as f64 * dt).collect();
        let tr = crate::electrothermal::extract_rise_time(&times, &step, 0.1, 0.9).unwrap();
        assert!((tr - 0.35 / fc).abs() < 0.01 * 0.35 / fc, "{tr}");
    }

    #[test]
    fn noise_has_requested_rms() {
        let f = FrontendConfig {
            noise_rms_volts: 1e-3,
            ..FrontendConfig::default()
        };
        let y = apply_frontend(&vec![0.0; 1_000_000], &f, 11);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((var.sqrt() - 1e-3).abs() < 0.01e-3);
    }

    #[test]
    fn bright_source_fires_almost_every_slot() {
        let src = SourceConfig {
            mean_photons: 8.0,
            suppressed_slots_per_main: 0,
            ..SourceConfig::default()
        };
        let mut g = DatasetGenerator::new(src, analytic_bank(0.005), 5).unwrap();
        let d = g.generate(100).unwrap();
        assert_eq!(d.events.len(), 100);
        assert!(d.counts.total_slots <= 102);
        assert!(d.events.windows(2).all(|w| w[0].slot_index < w[1].slot_index));
    }
}
