//! Experiment grid, dev-based selection, test reporting, attention analysis
//! and target histograms.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::model::{forward, ModelParams, Pooling, TaskMode};
use crate::norm::NormMode;
use crate::sessions::{SessionRecord, Split, Target};
use crate::train::{split_mae, train, TrainConfig, TrainOutcome};
use crate::util::{derive_seed, percentile};

pub const DEFAULT_SMOOTHING: usize = 25;

/// Per-target mean absolute error over subjects.
pub fn mae(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Vec<f64>> {
    if preds.is_empty() {
        return Err(Error::Invalid("mae of an empty prediction list".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let k = preds[0].len();
    let mut sums = vec![0.0; k];
    for (p, y) in preds.iter().zip(targets) {
        if p.len() != k || y.len() != k {
            return Err(Error::Shape("ragged prediction or target vectors".into()));
        }
        for (s, (a, b)) in sums.iter_mut().zip(p.iter().zip(y)) {
            *s += (a - b).abs();
        }
    }
    Ok(sums.into_iter().map(|s| s / preds.len() as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: Pooling,
    pub task: TaskMode,
    pub normalization: NormMode,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn id(&self) -> String {
        format!("{}-{}-{}", self.model.model_name(), self.task, self.normalization)
    }
}

/// Shared settings for a grid run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            train: TrainConfig::default(),
            seed: 1,
        }
    }
}

pub const GRID_MODELS: [Pooling; 2] = [Pooling::Mean, Pooling::Attention];

/// Every trained cell: {gru, agru} × {stl per target, mtl} × {standard, speaker}.
/// Each cell gets its own seed derived from the base seed and its id.
pub fn grid_configs(base: &GridConfig) -> Vec<ExperimentConfig> {
    let mut tasks: Vec<TaskMode> = Target::ALL.iter().map(|t| TaskMode::Stl(*t)).collect();
    tasks.push(TaskMode::Mtl);
    let mut out = Vec::new();
    for model in GRID_MODELS {
        for &task in &tasks {
            for normalization in NormMode::ALL {
                let mut cfg = ExperimentConfig {
                    model,
                    task,
                    normalization,
                    train: base.train.clone(),
                    seed: 0,
                };
                cfg.seed = derive_seed(base.seed, &cfg.id());
                out.push(cfg);
            }
        }
    }
    out
}

/// One table row: a model/head family under one normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// `GRU-STL`, `AGRU-MTL`, ...
    pub model: String,
    pub normalization: NormMode,
    pub dev: [f64; 3],
    /// Present only for the per-target dev-best row.
    pub test: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

pub const RESULTS_HEADER: &str =
    "model,normalization,dev_cortisol,dev_appraisal,dev_affect,test_cortisol,test_appraisal,test_affect";

impl ResultsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULTS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let test: Vec<String> = r.test.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.model,
                r.normalization,
                r.dev[0],
                r.dev[1],
                r.dev[2],
                test.join(",")
            );
        }
        out
    }
}

/// Row index of the lowest dev MAE per target. Sees dev columns only; ties
/// go to the earlier row.
pub fn select_best(dev: &[[f64; 3]]) -> [usize; 3] {
    std::array::from_fn(|t| {
        let mut best = 0;
        for (i, row) in dev.iter().enumerate() {
            if row[t] < dev[best][t] {
                best = i;
            }
        }
        best
    })
}

#[derive(Debug, Clone)]
pub struct TrainedCell {
    pub config: ExperimentConfig,
    pub outcome: TrainOutcome,
    /// Dev MAE of the restored best parameters, in the head's target order.
    pub dev_mae: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub table: ResultsTable,
    pub cells: Vec<TrainedCell>,
    /// Test-split reads counted across both normalized datasets before selection.
    pub test_reads_before_selection: usize,
    pub best_rows: [usize; 3],
}

fn row_label(model: Pooling, stl: bool) -> String {
    format!(
        "{}-{}",
        model.model_name().to_uppercase(),
        if stl { "STL" } else { "MTL" }
    )
}

/// Trains all grid cells on the normalized views of `dataset`, selects the
/// dev-best row per target and evaluates only those on test.
pub fn run_grid(dataset: &Dataset, base: &GridConfig, jobs: usize) -> Result<GridOutcome> {
    let views: Vec<(NormMode, Dataset)> = NormMode::ALL
        .iter()
        .map(|&m| Ok((m, dataset.normalized(&dataset.fit_norm(m)?)?)))
        .collect::<Result<_>>()?;
    let view = |m: NormMode| &views.iter().find(|(v, _)| *v == m).expect("both views").1;

    let configs = grid_configs(base);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let cells: Vec<TrainedCell> = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let ds = view(cfg.normalization);
                let run = || -> Result<TrainedCell> {
                    let outcome = train(ds, cfg.model, cfg.task, &cfg.train, cfg.seed)?;
                    let dev_mae = split_mae(&outcome.params, cfg.task, ds, Split::Dev, cfg.train.max_seq_len)?;
                    Ok(TrainedCell {
                        config: cfg.clone(),
                        outcome,
                        dev_mae,
                    })
                };
                run().map_err(|e| annotate(e, &cfg.id()))
            })
            .collect::<Result<_>>()
    })?;

    // rows in table order, each remembering which cell answers for each target
    let mut rows = Vec::new();
    let mut sources: Vec<[usize; 3]> = Vec::new();
    for model in GRID_MODELS {
        for stl in [true, false] {
            for norm in NormMode::ALL {
                let find = |task: TaskMode| {
                    cells
                        .iter()
                        .position(|c| c.config.model == model && c.config.task == task && c.config.normalization == norm)
                        .expect("grid cell")
                };
                let src: [usize; 3] = std::array::from_fn(|t| {
                    if stl {
                        find(TaskMode::Stl(Target::ALL[t]))
                    } else {
                        find(TaskMode::Mtl)
                    }
                });
                let dev: [f64; 3] = std::array::from_fn(|t| {
                    let cell = &cells[src[t]];
                    cell.dev_mae[if stl { 0 } else { t }]
                });
                rows.push(ResultRow {
                    model: row_label(model, stl),
                    normalization: norm,
                    dev,
                    test: [None; 3],
                });
                sources.push(src);
            }
        }
    }

    let test_reads_before_selection: usize = views.iter().map(|(_, d)| d.test_reads()).sum();
    let dev_columns: Vec<[f64; 3]> = rows.iter().map(|r| r.dev).collect();
    let best_rows = select_best(&dev_columns);

    for (t, &row) in best_rows.iter().enumerate() {
        let cell = &cells[sources[row][t]];
        let ds = view(cell.config.normalization);
        let test = split_mae(&cell.outcome.params, cell.config.task, ds, Split::Test, cell.config.train.max_seq_len)?;
        let col = if cell.config.task == TaskMode::Mtl { t } else { 0 };
        rows[row].test[t] = Some(test[col]);
    }

    Ok(GridOutcome {
        table: ResultsTable { rows },
        cells,
        test_reads_before_selection,
        best_rows,
    })
}

fn annotate(e: Error, id: &str) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("{id}: {m}")),
        Error::Invalid(m) => Error::Invalid(format!("{id}: {m}")),
        Error::Shape(m) => Error::Shape(format!("{id}: {m}")),
        other => other,
    }
}

/// Per-target MAE of a predictor that always outputs the train-split mean.
pub fn mean_baseline(dataset: &Dataset, split: Split) -> Result<[f64; 3]> {
    let train: Vec<[f64; 3]> = dataset
        .examples_unchecked()
        .iter()
        .filter(|e| e.split == Split::Train)
        .map(|e| e.targets)
        .collect();
    let eval: Vec<[f64; 3]> = dataset
        .examples_unchecked()
        .iter()
        .filter(|e| e.split == split)
        .map(|e| e.targets)
        .collect();
    if train.is_empty() || eval.is_empty() {
        return Err(Error::Invalid("mean baseline needs train and evaluation rows".into()));
    }
    let means: [f64; 3] = std::array::from_fn(|t| train.iter().map(|y| y[t]).sum::<f64>() / train.len() as f64);
    Ok(std::array::from_fn(|t| {
        eval.iter().map(|y| (y[t] - means[t]).abs()).sum::<f64>() / eval.len() as f64
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    /// Raw attention weights per subject, over that subject's valid steps.
    pub subjects: Vec<(String, Vec<f64>)>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub smoothing: usize,
}

/// Centered moving average; near the edges the window shrinks to what exists.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let half = window.max(1) / 2;
    (0..xs.len())
        .map(|t| {
            let span = &xs[t.saturating_sub(half)..(t + half + 1).min(xs.len())];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect()
}

/// Attention weights of every sequence, aggregated pointwise over the
/// subjects still valid at each step, then smoothed.
pub fn attention_report(
    params: &ModelParams,
    sequences: &[&FeatureSequence],
    smoothing: usize,
) -> Result<AttentionReport> {
    if params.pooling() != Pooling::Attention {
        return Err(Error::Invalid("attention report needs an attention-pooling checkpoint".into()));
    }
    if sequences.is_empty() {
        return Err(Error::Invalid("attention report needs at least one sequence".into()));
    }
    let subjects: Vec<(String, Vec<f64>)> = sequences
        .par_iter()
        .map(|s| {
            let trace = forward(s, params, None)?;
            let alpha = trace.alpha().expect("attention pooling").to_vec();
            Ok((s.speaker_id.clone(), alpha))
        })
        .collect::<Result<_>>()?;
    Ok(aggregate_attention(subjects, smoothing))
}

pub fn aggregate_attention(subjects: Vec<(String, Vec<f64>)>, smoothing: usize) -> AttentionReport {
    let len = subjects.iter().map(|(_, a)| a.len()).max().unwrap_or(0);
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for t in 0..len {
        let vals: Vec<f64> = subjects.iter().filter_map(|(_, a)| a.get(t).copied()).collect();
        mean[t] = crate::util::mean(&vals);
        std[t] = crate::util::std_dev(&vals);
    }
    AttentionReport {
        mean: moving_average(&mean, smoothing),
        std: moving_average(&std, smoothing),
        subjects,
        smoothing,
    }
}

impl AttentionReport {
    /// Average over subjects of the attention mass on the first half of the sequence.
    pub fn first_half_mass(&self) -> f64 {
        let masses: Vec<f64> = self
            .subjects
            .iter()
            .map(|(_, a)| a[..a.len() / 2].iter().sum::<f64>() / a.iter().sum::<f64>())
            .collect();
        crate::util::mean(&masses)
    }

    pub fn alpha_csv(&self) -> String {
        let mut out = String::from("subject,t,alpha\n");
        for (s, a) in &self.subjects {
            for (t, v) in a.iter().enumerate() {
                let _ = writeln!(out, "{s},{t},{v}");
            }
        }
        out
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("t,mean,std\n");
        for (t, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            let _ = writeln!(out, "{t},{m},{s}");
        }
        out
    }

    /// Mean curve with a ±1 std band.
    pub fn svg(&self) -> String {
        let (w, h, pad) = (800.0, 300.0, 40.0);
        let n = self.mean.len().max(2);
        let top = self
            .mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| m + s)
            .fold(f64::MIN_POSITIVE, f64::max);
        let x = |t: usize| pad + (w - 2.0 * pad) * t as f64 / (n - 1) as f64;
        let y = |v: f64| h - pad - (h - 2.0 * pad) * (v / top).clamp(0.0, 1.0);
        let mut band = String::new();
        for (t, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            let _ = write!(band, "{:.2},{:.2} ", x(t), y(m + s));
        }
        for (t, (m, s)) in self.mean.iter().zip(&self.std).enumerate().rev() {
            let _ = write!(band, "{:.2},{:.2} ", x(t), y((m - s).max(0.0)));
        }
        let line: String = self
            .mean
            .iter()
            .enumerate()
            .map(|(t, m)| format!("{:.2},{:.2}", x(t), y(*m)))
            .collect::<Vec<_>>()
            .join(" ");
        format!(
            concat!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n",
                "<polygon points=\"{band}\" fill=\"#9ecae1\" opacity=\"0.6\"/>\n",
                "<polyline points=\"{line}\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\"/>\n",
                "<text x=\"{pad}\" y=\"{ty}\" font-size=\"12\">window index (0.5 s hop)</text>\n",
                "<text x=\"4\" y=\"{pad}\" font-size=\"12\">alpha</text>\n",
                "</svg>\n"
            ),
            w = w,
            h = h,
            band = band.trim_end(),
            line = line,
            pad = pad,
            ty = h - 8.0
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetHistogram {
    pub target: Target,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

/// Equal-width histograms of the raw deltas. A constant target collapses to one bin.
pub fn target_histograms(records: &[SessionRecord], bins: usize) -> Result<Vec<TargetHistogram>> {
    if records.is_empty() {
        return Err(Error::Invalid("histograms need at least one session".into()));
    }
    let bins = bins.max(1);
    let raw: Vec<[f64; 3]> = records.iter().map(|r| r.raw_targets()).collect();
    Ok(Target::ALL
        .iter()
        .map(|&target| {
            let vals: Vec<f64> = raw.iter().map(|r| r[target.index()]).collect();
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (edges, counts) = if max > min {
                let width = (max - min) / bins as f64;
                let edges: Vec<f64> = (0..=bins).map(|i| min + width * i as f64).collect();
                let mut counts = vec![0; bins];
                for v in &vals {
                    let b = (((v - min) / width) as usize).min(bins - 1);
                    counts[b] += 1;
                }
                (edges, counts)
            } else {
                (vec![min, max], vec![vals.len()])
            };
            TargetHistogram {
                target,
                edges,
                counts,
                min,
                max,
                median: percentile(&vals, 50.0),
            }
        })
        .collect())
}

pub fn histogram_csv(hists: &[TargetHistogram]) -> String {
    let mut out = String::from("target,bin_lo,bin_hi,count\n");
    for h in hists {
        for (i, c) in h.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", h.target, h.edges[i], h.edges[i + 1], c);
        }
    }
    out
}

pub fn histogram_summary_csv(hists: &[TargetHistogram]) -> String {
    let mut out = String::from("target,min,max,median\n");
    for h in hists {
        let _ = writeln!(out, "{},{},{},{}", h.target, h.min, h.max, h.median);
    }
    out
}
