//! Command-line front end. Every subcommand writes only inside its `--out`
//! directory and leaves a `manifest.json` there.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numeric failure (non-finite loss or gradient).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{peak_normalize, read_wav, resample, write_wav_f32, CANONICAL_RATE, DEFAULT_PEAK_DB};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{
    attention_report, histogram_csv, histogram_summary_csv, run_grid, target_histograms, ExperimentConfig,
    GridConfig,
};
use crate::features::{extract_sequence, write_cache, FeatureRegistry, REGISTRY_VERSION};
use crate::model::{Checkpoint, Pooling, TaskMode};
use crate::norm::{NormMode, NormStats};
use crate::sessions::{build_targets, load_sessions, write_sessions, SessionRecord, Split};
use crate::synth::{synth_audio_corpus, SynthSpec};
use crate::train::{history_csv, split_mae, train, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "stress-voice",
    version,
    about = "Predict stress indicators (cortisol, appraisal, affect) from speech",
    after_help = "Log verbosity follows RUST_LOG (default: warn)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic WAV corpus and sessions CSV
    Synth(SynthArgs),
    /// Resample session audio to 16 kHz and peak-normalize to -1 dBFS
    Canonicalize(SessionsOut),
    /// Extract per-window feature sequences into a cache directory
    Extract(SessionsOut),
    /// Compute raw and scaled targets plus the train-split scaling
    BuildTargets(SessionsOut),
    /// Train one configuration
    Train(TrainArgs),
    /// Train the full model/task/normalization grid and report results
    Grid(GridArgs),
    /// Score a checkpoint on one split
    Evaluate(EvaluateArgs),
    /// Export attention weights of test subjects for an attention checkpoint
    Attention(AttentionArgs),
    /// Histograms and summaries of the raw target deltas
    Histograms(HistogramArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON synth spec; omitted fields take defaults
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub speakers: Option<usize>,
    /// Session length in seconds
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SessionsOut {
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut TrainConfig, seed: &mut u64) {
        if let Some(s) = self.seed {
            *seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.max_epochs = e;
            cfg.patience = cfg.patience.min(e);
        }
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = lr;
        }
        if let Some(h) = self.hidden {
            cfg.hidden = h;
        }
        if let Some(p) = self.patience {
            cfg.patience = p;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON experiment config (model, task, normalization, train, seed)
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub sessions: PathBuf,
    /// Feature cache directory written by `extract`
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// JSON grid config (train, seed); defaults when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Grid cells trained in parallel
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Normalization statistics saved next to the checkpoint
    #[arg(long)]
    pub norm: PathBuf,
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value = "dev")]
    pub split: Split,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttentionArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub norm: PathBuf,
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Moving-average width in windows
    #[arg(long, default_value_t = crate::eval::DEFAULT_SMOOTHING)]
    pub smoothing: usize,
    /// Also write attention.svg
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<String>,
    /// Resolved configuration after flag overrides.
    pub config: Option<serde_json::Value>,
    pub seed: Option<u64>,
    pub registry_version: String,
    pub tool_version: String,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
    pub output_dir: String,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct Run {
    manifest: RunManifest,
    out: PathBuf,
}

impl Run {
    fn start(command: &str, args: &[String], out: &Path) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(Run {
            manifest: RunManifest {
                command: command.to_string(),
                args: args.to_vec(),
                config_path: None,
                config: None,
                seed: None,
                registry_version: REGISTRY_VERSION.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                started_at: unix_now(),
                finished_at: 0,
                output_dir: out.display().to_string(),
            },
            out: out.to_path_buf(),
        })
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.finished_at = unix_now();
        let json = serde_json::to_string_pretty(&self.manifest)?;
        self.write("manifest.json", json)?;
        Ok(())
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

/// Audio paths in a sessions CSV are relative to the CSV's directory.
fn resolve_audio(sessions: &Path, audio_path: &str) -> PathBuf {
    let p = Path::new(audio_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        sessions.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Parses arguments, runs the subcommand and maps the outcome to an exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli.command, &args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_DATA
            }
        }
    }
}

pub fn run(command: Command, args: &[String]) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a, args),
        Command::Canonicalize(a) => cmd_canonicalize(a, args),
        Command::Extract(a) => cmd_extract(a, args),
        Command::BuildTargets(a) => cmd_build_targets(a, args),
        Command::Train(a) => cmd_train(a, args),
        Command::Grid(a) => cmd_grid(a, args),
        Command::Evaluate(a) => cmd_evaluate(a, args),
        Command::Attention(a) => cmd_attention(a, args),
        Command::Histograms(a) => cmd_histograms(a, args),
    }
}

fn cmd_synth(a: SynthArgs, args: &[String]) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => read_json::<SynthSpec>(p)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.speakers {
        spec.n_speakers = n;
    }
    if let Some(d) = a.duration {
        spec.duration_s = d;
    }
    let mut run = Run::start("synth", args, &a.out)?;
    let corpus = synth_audio_corpus(&spec, &a.out)?;
    let latents: String = std::iter::once("speaker_id,pitch_offset,loudness_offset,glide\n".to_string())
        .chain(corpus.speakers.iter().map(|s| {
            format!(
                "{},{},{},{}\n",
                s.record.speaker_id, s.latents[0], s.latents[1], s.latents[2]
            )
        }))
        .collect();
    run.write("latents.csv", latents)?;
    run.manifest.config_path = a.spec.map(|p| p.display().to_string());
    run.manifest.config = Some(serde_json::to_value(&spec)?);
    run.manifest.seed = Some(spec.seed);
    run.finish()
}

fn cmd_canonicalize(a: SessionsOut, args: &[String]) -> Result<()> {
    let records = load_sessions(&a.sessions)?;
    let run = Run::start("canonicalize", args, &a.out)?;
    let audio_dir = a.out.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let out_records: Vec<SessionRecord> = records
        .par_iter()
        .map(|r| {
            let src = resolve_audio(&a.sessions, &r.audio_path);
            let buf = read_wav(&src)?;
            let norm = peak_normalize(&resample(&buf, CANONICAL_RATE)?, DEFAULT_PEAK_DB);
            if norm.silent {
                log::warn!("{}: silent recording left unnormalized", r.speaker_id);
            }
            let rel = format!("audio/{}.wav", r.speaker_id);
            let dst = a.out.join(&rel);
            write_wav_f32(&dst, &norm.buffer)?;
            Ok(SessionRecord {
                audio_path: rel,
                ..r.clone()
            })
        })
        .collect::<Result<_>>()?;
    write_sessions(&a.out.join("sessions.csv"), &out_records)?;
    run.finish()
}

fn cmd_extract(a: SessionsOut, args: &[String]) -> Result<()> {
    let records = load_sessions(&a.sessions)?;
    let run = Run::start("extract", args, &a.out)?;
    let registry = FeatureRegistry::standard();
    for r in &records {
        let buf = read_wav(&resolve_audio(&a.sessions, &r.audio_path))?;
        if buf.sample_rate != CANONICAL_RATE {
            return Err(Error::Invalid(format!(
                "{}: audio is {} Hz; run `canonicalize` first",
                r.speaker_id, buf.sample_rate
            )));
        }
        let seq = extract_sequence(&buf, &registry, &r.speaker_id)?;
        write_cache(&a.out.join(format!("{}.ftrs", r.speaker_id)), &seq, REGISTRY_VERSION)?;
        log::info!("{}: {} windows", r.speaker_id, seq.rows);
    }
    run.write("feature_names.txt", registry.names().join("\n") + "\n")?;
    run.finish()
}

fn cmd_build_targets(a: SessionsOut, args: &[String]) -> Result<()> {
    let records = load_sessions(&a.sessions)?;
    let run = Run::start("build-targets", args, &a.out)?;
    let (scaling, targets) = build_targets(&records)?;
    let mut csv = String::from(
        "speaker_id,split,cortisol_delta,appraisal_delta,affect_delta,cortisol_scaled,appraisal_scaled,affect_scaled\n",
    );
    for (r, t) in records.iter().zip(&targets) {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.speaker_id,
            r.split,
            t.cortisol_delta,
            t.appraisal_delta,
            t.affect_delta,
            t.scaled[0],
            t.scaled[1],
            t.scaled[2]
        ));
    }
    run.write("targets.csv", csv)?;
    scaling.save(&a.out.join("scaling.json"))?;
    run.finish()
}

fn load_dataset(sessions: &Path, features: &Path) -> Result<Dataset> {
    let records = load_sessions(sessions)?;
    Ok(Dataset::from_cache(&records, features)?.0)
}

fn cmd_train(a: TrainArgs, args: &[String]) -> Result<()> {
    let mut cfg: ExperimentConfig = read_json(&a.config)?;
    a.overrides.apply(&mut cfg.train, &mut cfg.seed);
    cfg.train.validate()?;
    let dataset = load_dataset(&a.sessions, &a.features)?;
    let mut run = Run::start("train", args, &a.out)?;
    let stats = dataset.fit_norm(cfg.normalization)?;
    let normalized = dataset.normalized(&stats)?;
    let outcome = train(&normalized, cfg.model, cfg.task, &cfg.train, cfg.seed)?;
    if normalized.test_reads() != 0 {
        return Err(Error::Invalid("training touched the test split".into()));
    }
    run.write("history.csv", history_csv(&outcome.history))?;
    Checkpoint::new(outcome.params, cfg.task, REGISTRY_VERSION, cfg.seed).save(&a.out.join("checkpoint.bin"))?;
    stats.save(&a.out.join("norm.json"))?;
    run.manifest.config_path = Some(a.config.display().to_string());
    run.manifest.config = Some(serde_json::to_value(&cfg)?);
    run.manifest.seed = Some(cfg.seed);
    run.finish()
}

fn cmd_grid(a: GridArgs, args: &[String]) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<GridConfig>(p)?,
        None => GridConfig::default(),
    };
    a.overrides.apply(&mut cfg.train, &mut cfg.seed);
    cfg.train.validate()?;
    if a.jobs == 0 {
        return Err(Error::Invalid("--jobs must be at least 1".into()));
    }
    let dataset = load_dataset(&a.sessions, &a.features)?;
    let mut run = Run::start("grid", args, &a.out)?;
    let outcome = run_grid(&dataset, &cfg, a.jobs)?;
    run.write("results.csv", outcome.table.to_csv())?;
    run.write("results.json", serde_json::to_string_pretty(&outcome.table)?)?;
    for mode in NormMode::ALL {
        dataset.fit_norm(mode)?.save(&a.out.join(format!("norm-{mode}.json")))?;
    }
    for cell in &outcome.cells {
        let id = cell.config.id();
        run.write(&format!("histories/{id}.csv"), history_csv(&cell.outcome.history))?;
        let ckpt = Checkpoint::new(cell.outcome.params.clone(), cell.config.task, REGISTRY_VERSION, cell.config.seed);
        run.write(&format!("checkpoints/{id}.bin"), ckpt.to_bytes()?)?;
    }
    run.manifest.config_path = a.config.map(|p| p.display().to_string());
    run.manifest.config = Some(serde_json::to_value(&cfg)?);
    run.manifest.seed = Some(cfg.seed);
    run.finish()
}

fn load_checkpoint_and_data(checkpoint: &Path, norm: &Path, sessions: &Path, features: &Path) -> Result<(Checkpoint, Dataset)> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if ckpt.header.registry_version != REGISTRY_VERSION {
        log::warn!(
            "checkpoint registry {} differs from {REGISTRY_VERSION}",
            ckpt.header.registry_version
        );
    }
    let stats = NormStats::load(norm)?;
    let dataset = load_dataset(sessions, features)?.normalized(&stats)?;
    if dataset.dim()? != ckpt.header.d {
        return Err(Error::Shape(format!(
            "checkpoint expects {} features, cache has {}",
            ckpt.header.d,
            dataset.dim()?
        )));
    }
    Ok((ckpt, dataset))
}

fn cmd_evaluate(a: EvaluateArgs, args: &[String]) -> Result<()> {
    let (ckpt, dataset) = load_checkpoint_and_data(&a.checkpoint, &a.norm, &a.sessions, &a.features)?;
    let run = Run::start("evaluate", args, &a.out)?;
    let task = ckpt.header.task;
    let maes = split_mae(&ckpt.params, task, &dataset, a.split, usize::MAX)?;
    let mut csv = String::from("split,target,mae\n");
    for (t, m) in task.targets().iter().zip(&maes) {
        csv.push_str(&format!("{},{},{}\n", a.split, t, m));
    }
    run.write("metrics.csv", csv)?;
    run.finish()
}

fn cmd_attention(a: AttentionArgs, args: &[String]) -> Result<()> {
    let (ckpt, dataset) = load_checkpoint_and_data(&a.checkpoint, &a.norm, &a.sessions, &a.features)?;
    if ckpt.header.pooling != Pooling::Attention {
        return Err(Error::Invalid("attention report needs an agru checkpoint".into()));
    }
    let run = Run::start("attention", args, &a.out)?;
    let seqs: Vec<_> = dataset
        .indices(Split::Test)
        .into_iter()
        .map(|i| &dataset.get(i).seq)
        .collect();
    let report = attention_report(&ckpt.params, &seqs, a.smoothing)?;
    run.write("attention_alpha.csv", report.alpha_csv())?;
    run.write("attention_curve.csv", report.curve_csv())?;
    if a.svg {
        run.write("attention.svg", report.svg())?;
    }
    run.finish()
}

fn cmd_histograms(a: HistogramArgs, args: &[String]) -> Result<()> {
    let records = load_sessions(&a.sessions)?;
    let run = Run::start("histograms", args, &a.out)?;
    let hists = target_histograms(&records, a.bins)?;
    run.write("histograms.csv", histogram_csv(&hists))?;
    run.write("histogram_summary.csv", histogram_summary_csv(&hists))?;
    run.finish()
}

/// Example experiment config, handy as a starting point for `train --config`.
pub fn example_config() -> ExperimentConfig {
    ExperimentConfig {
        model: Pooling::Attention,
        task: TaskMode::Mtl,
        normalization: NormMode::Speaker,
        train: TrainConfig::default(),
        seed: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_usage_codes() {
        assert_eq!(dispatch(["stress-voice", "--help"]), EXIT_OK);
        assert_eq!(dispatch(["stress-voice", "grid", "--help"]), EXIT_OK);
        assert_eq!(dispatch(["stress-voice", "frobnicate"]), EXIT_USAGE);
        assert_eq!(dispatch(["stress-voice", "train"]), EXIT_USAGE);
        assert_eq!(dispatch(["stress-voice"]), EXIT_USAGE);
    }

    #[test]
    fn missing_sessions_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let code = dispatch([
            "stress-voice",
            "histograms",
            "--sessions",
            dir.path().join("nope.csv").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_DATA);
    }

    #[test]
    fn example_config_parses_back() {
        let text = serde_json::to_string_pretty(&example_config()).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, example_config());
        let minimal: ExperimentConfig =
            serde_json::from_str(r#"{"model":"gru","task":"stl-cortisol","normalization":"standard"}"#).unwrap();
        assert_eq!(minimal.train, TrainConfig::default());
    }

    #[test]
    fn audio_paths_resolve_against_sessions_dir() {
        assert_eq!(
            resolve_audio(Path::new("/data/x/sessions.csv"), "audio/a.wav"),
            PathBuf::from("/data/x/audio/a.wav")
        );
        assert_eq!(resolve_audio(Path::new("s.csv"), "/abs/a.wav"), PathBuf::from("/abs/a.wav"));
    }
}
