//! `snspd-pnr`: batch experiments for photon-number-resolving detectors.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical or
//! fit failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snspd_pnr::config::ExperimentConfig;
use snspd_pnr::counting::{all_detected_table, click_surface_table, collision_table, resolution_table};
use snspd_pnr::experiment::{run_experiment, template_bank, LevelOutcome, SweepAnalysis, TaggedRun};
use snspd_pnr::histogram::freedman_diaconis_width;
use snspd_pnr::io::{write_atomic, write_bytes_atomic, write_ground_truth, AtomicFile, GroundTruthRow, WaveformWriter};
use snspd_pnr::pipeline::confusion_matrix;
use snspd_pnr::tagger::trigger_sweep;
use snspd_pnr::waveform::DatasetGenerator;
use snspd_pnr::{Error, Result};

#[derive(Parser)]
#[command(name = "snspd-pnr", version, about = "Photon-number-resolving SNSPD simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Counting-statistics tables: click probabilities, collisions and
    /// timing-peak overlaps.
    Stats(Common),
    /// Generate a waveform file and its ground-truth sidecar.
    Simulate(Common),
    /// Tag at every trigger level and write the waterfall histograms.
    Sweep(Common),
    /// Reconstruct the photon statistics at one trigger level.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Trigger level in volts; the best sweep level when omitted.
        #[arg(long)]
        level: Option<f64>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Io(_) | Error::Format(_) | Error::Csv(_) | Error::Json(_) => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Stats(c) => {
            let (cfg, out) = setup(&c)?;
            cmd_stats(&cfg, &out)
        }
        Command::Simulate(c) => {
            let (cfg, out) = setup(&c)?;
            cmd_simulate(&cfg, &out)
        }
        Command::Sweep(c) => {
            let (cfg, out) = setup(&c)?;
            cmd_sweep(&cfg, &out)
        }
        Command::Analyze { common, level } => {
            let (cfg, out) = setup(&common)?;
            cmd_analyze(cfg, &out, level)
        }
    }
}

/// Loads the configuration, applies the overrides and prepares the output
/// directory and thread pool.
fn setup(c: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let text = fs::read_to_string(&c.config).map_err(|e| with_path(e, &c.config))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| with_path(e, &cfg.output_dir))?;
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes_atomic(path, text.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_stats(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let s = &cfg.stats;
    write_text(
        &out.join("all_detected.csv"),
        &all_detected_table(s.elements, &s.efficiencies, s.max_photons)?,
    )?;
    write_text(
        &out.join("click_probability.csv"),
        &click_surface_table(s.elements, &s.efficiencies, s.max_photons)?,
    )?;
    write_text(&out.join("collision.csv"), &collision_table(s.elements, s.max_photons)?)?;
    write_text(
        &out.join("resolution.csv"),
        &resolution_table(&cfg.timing, &s.jitter_ratios, s.max_photon_number)?,
    )?;
    Ok(())
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let bank = template_bank(cfg)?;
    let frontend = *bank.frontend();
    let mut generator = DatasetGenerator::new(cfg.source, bank, cfg.seed)?;
    let wave_path = out.join("waveforms.snwf");
    let truth_path = out.join("ground_truth.csv");
    let mut wave_file = AtomicFile::create(&wave_path)?;
    let mut rows = Vec::new();
    let counts = {
        let mut writer = WaveformWriter::new(
            wave_file.writer(),
            frontend.sample_rate_hz,
            frontend.record_length_samples,
        )?;
        let counts = generator.stream(cfg.n_events, |batch| {
            for e in &batch {
                writer.write_event(e)?;
                rows.push(GroundTruthRow::from(e));
            }
            Ok(())
        })?;
        writer.finish(counts)?;
        counts
    };
    wave_file.commit()?;
    write_atomic(&truth_path, |w| write_ground_truth(w, rows))?;
    println!("wrote {}", wave_path.display());
    println!("wrote {}", truth_path.display());
    println!(
        "events {} total_slots {} main_slots {}",
        counts.events, counts.total_slots, counts.main_slots
    );
    Ok(())
}

/// Bin width shared by every level: the configured width, else a fifth of
/// the smallest expected one-photon jitter, else Freedman–Diaconis over all
/// tags.
fn sweep_bin_width(cfg: &ExperimentConfig, sweep: &SweepAnalysis) -> Result<f64> {
    if let Some(w) = cfg.pipeline.bin_width_seconds {
        return Ok(w);
    }
    let hinted = sweep
        .levels
        .iter()
        .filter_map(|l| l.hint.first().map(|h| h.sigma_seconds))
        .filter(|s| *s > 0.0)
        .fold(f64::INFINITY, f64::min);
    if hinted.is_finite() {
        return Ok(hinted / 5.0);
    }
    let all: Vec<f64> = sweep.levels.iter().flat_map(|l| l.tags.times()).collect();
    freedman_diaconis_width(&all)
}

fn summary_table(run: &TaggedRun, sweep: &SweepAnalysis) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "level_volts",
        "events",
        "tagged",
        "dropped",
        "peaks",
        "mean_adjacent_overlap",
        "lambda_hat",
        "total_variation",
        "optimal",
        "status",
    ])?;
    for (i, l) in sweep.levels.iter().enumerate() {
        let LevelOutcome { tags, analysis, .. } = l;
        let (peaks, overlap, lambda, tvd, status) = match analysis {
            Ok(a) => (
                a.peak_count().to_string(),
                a.mean_adjacent_overlap().to_string(),
                a.report.lambda_hat.to_string(),
                a.report.divergence.total_variation.to_string(),
                "ok".to_string(),
            ),
            Err(e) => (String::new(), String::new(), String::new(), String::new(), e.to_string()),
        };
        w.write_record(&[
            tags.level_volts.to_string(),
            run.counts.events.to_string(),
            tags.tags.len().to_string(),
            tags.dropped.to_string(),
            peaks,
            overlap,
            lambda,
            tvd,
            (sweep.optimal == Some(i)).to_string(),
            status,
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let (run, sweep) = run_experiment(cfg)?;
    let width = sweep_bin_width(cfg, &sweep)?;
    let waterfall = trigger_sweep(&run.events, &cfg.tagging, run.sample_interval, width, run.counts.main_slots)?;
    let path = out.join("waterfall.csv");
    write_atomic(&path, |w| waterfall.write_csv(w))?;
    println!("wrote {}", path.display());
    write_text(&out.join("sweep_summary.csv"), &summary_table(&run, &sweep)?)?;
    println!(
        "{:>8} {:>9} {:>8} {:>6} {:>10}",
        "level V", "tagged", "dropped", "peaks", "lambda_hat"
    );
    for (i, l) in sweep.levels.iter().enumerate() {
        let (peaks, lambda) = match &l.analysis {
            Ok(a) => (a.peak_count().to_string(), format!("{:.5}", a.report.lambda_hat)),
            Err(_) => ("-".into(), "-".into()),
        };
        let mark = if sweep.optimal == Some(i) { " *" } else { "" };
        println!(
            "{:>8.3} {:>9} {:>8} {:>6} {:>10}{mark}",
            l.tags.level_volts,
            l.tags.tags.len(),
            l.tags.dropped,
            peaks,
            lambda
        );
    }
    Ok(())
}

fn cmd_analyze(mut cfg: ExperimentConfig, out: &Path, level: Option<f64>) -> Result<()> {
    if let Some(l) = level {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::config(format!("--level must be positive, got {l}")));
        }
        let levels = &mut cfg.tagging.trigger_levels_volts;
        if !levels.contains(&l) {
            levels.push(l);
            levels.sort_by(f64::total_cmp);
        }
    }
    let (_, sweep) = run_experiment(&cfg)?;
    let index = match level {
        Some(l) => sweep
            .levels
            .iter()
            .position(|o| o.tags.level_volts == l)
            .ok_or_else(|| Error::Internal(format!("level {l} missing from the sweep")))?,
        None => sweep.optimal.ok_or(Error::NoPeaks)?,
    };
    let outcome = &sweep.levels[index];
    let analysis = outcome.analysis.as_ref().map_err(clone_error)?;
    let report = &analysis.report;

    write_text(&out.join("report.json"), &report.to_json()?)?;
    let path = out.join("per_k.csv");
    write_atomic(&path, |w| report.write_per_k_csv(w))?;
    println!("wrote {}", path.display());

    let mut hist = String::from("bin_left_seconds,count\n");
    for (i, c) in analysis.histogram.counts.iter().enumerate() {
        hist.push_str(&format!("{},{c}\n", analysis.histogram.bin_edges[i]));
    }
    write_text(&out.join("histogram.csv"), &hist)?;

    let cm = confusion_matrix(&outcome.tags.tags, &analysis.assignment);
    let mut confusion = String::from("true_photon_number,assigned_photon_number,count\n");
    for (t, row) in cm.counts.iter().enumerate() {
        for (a, c) in row.iter().enumerate().skip(1) {
            confusion.push_str(&format!("{t},{a},{c}\n"));
        }
    }
    write_text(&out.join("confusion.csv"), &confusion)?;

    println!();
    print!("{}", report.to_text());
    Ok(())
}

/// Errors are not `Clone`; failures of the chosen level are re-raised with
/// their exit class preserved.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(m.clone()),
        Error::NoPeaks => Error::NoPeaks,
        Error::EmptyHistogram => Error::EmptyHistogram,
        other => Error::Internal(other.to_string()),
    }
}
