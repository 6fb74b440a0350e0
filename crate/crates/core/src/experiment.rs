//! A full run: synthesize, tag at every trigger level, reconstruct per
//! level, pick the best level.

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::pipeline::{analyze_tags, select_optimal_level, LevelAnalysis};
use crate::tagger::{attach_crossings, expected_crossings, tag_dataset, ExpectedCrossing, TagList};
use crate::waveform::{DatasetGenerator, EventRecord, SlotCounts, TemplateBank};

pub fn template_bank(config: &ExperimentConfig) -> Result<TemplateBank> {
    TemplateBank::new(config.pulse_shape(), config.frontend)
}

/// Events reduced to their crossing times at every configured level.
#[derive(Debug, Clone)]
pub struct TaggedRun {
    pub counts: SlotCounts,
    pub sample_interval: f64,
    pub levels: Vec<f64>,
    pub events: Vec<EventRecord>,
}

/// Generates `config.n_events` events, tags each batch as it arrives and
/// drops the waveforms.
pub fn generate_tagged(config: &ExperimentConfig, bank: TemplateBank) -> Result<TaggedRun> {
    config.validate()?;
    let sample_interval = bank.frontend().sample_interval();
    let mut generator = DatasetGenerator::new(config.source, bank, config.seed)?;
    let mut events = Vec::new();
    let counts = generator.stream(config.n_events, |mut batch| {
        attach_crossings(&mut batch, &config.tagging, sample_interval, true)?;
        events.extend(batch);
        Ok(())
    })?;
    Ok(TaggedRun {
        counts,
        sample_interval,
        levels: config.tagging.trigger_levels_volts.clone(),
        events,
    })
}

/// Per-level outcome of a sweep.
#[derive(Debug)]
pub struct LevelOutcome {
    pub tags: TagList,
    pub hint: Vec<ExpectedCrossing>,
    pub analysis: Result<LevelAnalysis>,
}

#[derive(Debug)]
pub struct SweepAnalysis {
    pub levels: Vec<LevelOutcome>,
    pub optimal: Option<usize>,
}

impl SweepAnalysis {
    pub fn optimal_analysis(&self) -> Result<&LevelAnalysis> {
        let i = self.optimal.ok_or(Error::NoPeaks)?;
        self.levels[i].analysis.as_ref().map_err(|e| Error::Internal(e.to_string()))
    }
}

/// Reconstructs the statistics at every level. The slot count is the number
/// of main slots; leaked pulses are not known to the analysis.
pub fn analyze_run(run: &TaggedRun, bank: &mut TemplateBank, config: &ExperimentConfig) -> Result<SweepAnalysis> {
    let n_hint = config.pipeline.max_peaks as u64;
    let mut levels = Vec::with_capacity(run.levels.len());
    for &level in &run.levels {
        let tags = tag_dataset(&run.events, run.sample_interval, level)?;
        let hint = expected_crossings(bank, level, n_hint)?;
        let analysis = analyze_tags(&tags, run.counts.main_slots, &config.pipeline, Some(&hint));
        levels.push(LevelOutcome { tags, hint, analysis });
    }
    let optimal = select_optimal_level(levels.iter().map(|l| l.analysis.as_ref().ok()));
    Ok(SweepAnalysis { levels, optimal })
}

/// [`generate_tagged`] followed by [`analyze_run`].
pub fn run_experiment(config: &ExperimentConfig) -> Result<(TaggedRun, SweepAnalysis)> {
    let mut bank = template_bank(config)?;
    let run = generate_tagged(config, bank.clone())?;
    let sweep = analyze_run(&run, &mut bank, config)?;
    Ok((run, sweep))
}
