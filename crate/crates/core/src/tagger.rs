//! Threshold time-tagging of digitized pulses.
//!
//! A tag is the first rising crossing of a trigger level, linearly
//! interpolated between samples and measured from the start of the record
//! (the laser reference). Slots whose waveform never reaches the level are
//! dropped and counted.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::ArrivalHistogram;
use crate::waveform::{Crossing, EventRecord, TemplateBank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TagConfig {
    /// Rising-edge trigger levels, strictly increasing and positive.
    pub trigger_levels_volts: Vec<f64>,
}

impl Default for TagConfig {
    fn default() -> Self {
        Self {
            trigger_levels_volts: (1..=8).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

impl TagConfig {
    pub fn validate(&self) -> Result<()> {
        let levels = &self.trigger_levels_volts;
        if levels.is_empty() {
            return Err(Error::config("at least one trigger level is required"));
        }
        if levels.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::config("trigger levels must be positive and finite"));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("trigger levels must be strictly increasing"));
        }
        Ok(())
    }
}

/// First rising crossing of `level`: the first `i` with
/// `s[i] < level <= s[i+1]`, interpolated linearly. `None` when the samples
/// never cross.
pub fn crossing_time<T: Copy + Into<f64>>(
    samples: &[T],
    sample_interval: f64,
    level: f64,
) -> Result<Option<f64>> {
    if !(level > 0.0) {
        return Err(Error::domain(format!("trigger level must be positive, got {level}")));
    }
    Ok(samples.windows(2).enumerate().find_map(|(i, w)| {
        let (a, b) = (w[0].into(), w[1].into());
        (a < level && level <= b).then(|| (i as f64 + (level - a) / (b - a)) * sample_interval)
    }))
}

/// One tagged event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tag {
    pub slot_index: u64,
    pub time_seconds: f64,
    /// Ground truth carried through for validation.
    pub true_photon_count: u16,
}

/// Tags at one level, in slot order, with the number of events that never
/// crossed.
#[derive(Debug, Clone, PartialEq)]
pub struct TagList {
    pub level_volts: f64,
    pub tags: Vec<Tag>,
    pub dropped: u64,
}

impl TagList {
    pub fn times(&self) -> Vec<f64> {
        self.tags.iter().map(|t| t.time_seconds).collect()
    }

    pub fn events(&self) -> u64 {
        self.tags.len() as u64 + self.dropped
    }
}

fn event_crossing(event: &EventRecord, sample_interval: f64, level: f64) -> Result<Option<f64>> {
    if let Some(w) = &event.waveform {
        return crossing_time(w, sample_interval, level);
    }
    event
        .crossing_times
        .iter()
        .find(|c| c.level_volts == level)
        .map(|c| c.time_seconds)
        .ok_or_else(|| {
            Error::domain(format!(
                "slot {} has neither a waveform nor a tag at {level} V",
                event.slot_index
            ))
        })
}

/// Tags every event at `level`, preserving slot order.
pub fn tag_dataset(events: &[EventRecord], sample_interval: f64, level: f64) -> Result<TagList> {
    let crossings: Vec<Option<f64>> = events
        .par_iter()
        .map(|e| event_crossing(e, sample_interval, level))
        .collect::<Result<_>>()?;
    let mut tags = Vec::with_capacity(events.len());
    let mut dropped = 0;
    for (e, c) in events.iter().zip(crossings) {
        match c {
            Some(t) => tags.push(Tag {
                slot_index: e.slot_index,
                time_seconds: t,
                true_photon_count: e.true_photon_count,
            }),
            None => dropped += 1,
        }
    }
    Ok(TagList {
        level_volts: level,
        tags,
        dropped,
    })
}

/// Stores crossings at every configured level on each event and optionally
/// drops the waveforms afterwards.
pub fn attach_crossings(
    events: &mut [EventRecord],
    config: &TagConfig,
    sample_interval: f64,
    drop_waveforms: bool,
) -> Result<()> {
    config.validate()?;
    events.par_iter_mut().try_for_each(|e| -> Result<()> {
        let mut found = Vec::with_capacity(config.trigger_levels_volts.len());
        for &level in &config.trigger_levels_volts {
            found.push(Crossing {
                level_volts: level,
                time_seconds: event_crossing(e, sample_interval, level)?,
            });
        }
        e.crossing_times = found;
        if drop_waveforms {
            e.waveform = None;
        }
        Ok(())
    })
}

/// One level of a trigger sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepLevel {
    pub tags: TagList,
    pub histogram: Option<ArrivalHistogram>,
}

/// Histograms of every level on one shared time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Waterfall {
    pub levels: Vec<SweepLevel>,
}

/// Tags the events at every level and bins all levels on one axis spanning
/// the union of their tags. A level with no tags has no histogram.
pub fn trigger_sweep(
    events: &[EventRecord],
    config: &TagConfig,
    sample_interval: f64,
    bin_width: f64,
    total_slots: u64,
) -> Result<Waterfall> {
    config.validate()?;
    if config.trigger_levels_volts.len() < 2 {
        return Err(Error::config("a sweep needs at least two trigger levels"));
    }
    let lists: Vec<TagList> = config
        .trigger_levels_volts
        .iter()
        .map(|&l| tag_dataset(events, sample_interval, l))
        .collect::<Result<_>>()?;
    let all = lists.iter().flat_map(|l| l.tags.iter().map(|t| t.time_seconds));
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(t), b.max(t)));
    let axis = if lo <= hi {
        Some(ArrivalHistogram::covering(lo, hi, bin_width, total_slots)?)
    } else {
        None
    };
    let levels = lists
        .into_iter()
        .map(|tags| {
            let histogram = match (&axis, tags.tags.is_empty()) {
                (Some(axis), false) => {
                    let mut h = axis.clone();
                    for t in &tags.tags {
                        h.add(t.time_seconds);
                    }
                    Some(h)
                }
                _ => None,
            };
            SweepLevel { tags, histogram }
        })
        .collect();
    Ok(Waterfall { levels })
}

impl Waterfall {
    /// CSV with columns `level_volts, bin_left_seconds, count`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["level_volts", "bin_left_seconds", "count"])?;
        for level in &self.levels {
            let Some(h) = &level.histogram else { continue };
            for (i, c) in h.counts.iter().enumerate() {
                w.write_record(&[
                    level.tags.level_volts.to_string(),
                    h.bin_edges[i].to_string(),
                    c.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Expected crossing statistics of `n` photons at one level, derived from the
/// noiseless filtered template: the crossing time, and the small-noise jitter
/// `sqrt(2/3)·noise_rms / slope`. The factor is the mean of `(1-f)² + f²`
/// over the interpolation fraction `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCrossing {
    pub photon_number: u64,
    pub mean_seconds: f64,
    pub sigma_seconds: f64,
}

pub fn expected_crossings(bank: &mut TemplateBank, level: f64, n_max: u64) -> Result<Vec<ExpectedCrossing>> {
    bank.ensure(n_max)?;
    let dt = bank.frontend().sample_interval();
    let noise = bank.frontend().noise_rms_volts;
    let mut out = Vec::new();
    for n in 1..=n_max {
        let t = bank.get(n);
        let Some(time) = crossing_time(t, dt, level)? else {
            break;
        };
        let i = ((time / dt).floor() as usize).min(t.len() - 2);
        let slope = (t[i + 1] - t[i]) / dt;
        out.push(ExpectedCrossing {
            photon_number: n,
            mean_seconds: time,
            sigma_seconds: (2.0f64 / 3.0).sqrt() * noise / slope,
        });
    }
    Ok(out)
}
