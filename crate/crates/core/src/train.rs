//! Backpropagation through time, Nesterov SGD and the early-stopped training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::model::{dot, dropout_mask, forward, ForwardTrace, Gradients, ModelParams, Pooling, TaskMode};
use crate::sessions::{Split, Target};
use crate::util::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Sequences longer than this many windows are truncated at the tail.
    pub max_seq_len: usize,
    pub dropout: f64,
    pub patience: usize,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size: 16,
            max_epochs: 100,
            max_seq_len: 1200,
            dropout: 0.2,
            patience: 10,
            hidden: crate::model::DEFAULT_HIDDEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("train config: {m}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.max_seq_len == 0 || self.hidden == 0 {
            return bad("batch_size, max_epochs, max_seq_len and hidden must be positive");
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return bad("patience must be in 1..=max_epochs");
        }
        Ok(())
    }
}

/// Mean absolute error over the head outputs.
pub fn l1_loss(prediction: &[f64], target: &[f64]) -> f64 {
    prediction
        .iter()
        .zip(target)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / prediction.len() as f64
}

fn l1_subgradient(diff: f64) -> f64 {
    if diff > 0.0 {
        1.0
    } else if diff < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Accumulates the gradient of one sequence's L1 loss into `grads`.
pub fn backward_into(
    seq: &FeatureSequence,
    trace: &ForwardTrace,
    target: &[f64],
    params: &ModelParams,
    grads: &mut Gradients,
) {
    let (d, h, k) = (params.input_dim, params.hidden, params.outputs);
    let steps = trace.gru.steps;

    // head
    let head_in: Vec<f64> = match &trace.mask {
        Some(m) => trace.pooled.iter().zip(m).map(|(f, m)| f * m).collect(),
        None => trace.pooled.clone(),
    };
    let mut d_head_in = vec![0.0; h];
    for j in 0..k {
        let dy = l1_subgradient(trace.prediction[j] - target[j]) / k as f64;
        if dy == 0.0 {
            continue;
        }
        grads.head_b[j] += dy;
        let row = &params.head_w[j * h..(j + 1) * h];
        for i in 0..h {
            grads.head_w[j * h + i] += dy * head_in[i];
            d_head_in[i] += dy * row[i];
        }
    }
    let d_pooled: Vec<f64> = match &trace.mask {
        Some(m) => d_head_in.iter().zip(m).map(|(g, m)| g * m).collect(),
        None => d_head_in,
    };

    // pooling
    let mut d_hidden = vec![0.0; steps * h];
    match (&trace.attention, &params.attention) {
        (Some(att), Some(w)) => {
            let scores: Vec<f64> = (0..steps).map(|t| dot(trace.gru.state(t), &d_pooled)).collect();
            let expected: f64 = (0..steps).map(|t| att.alpha[t] * scores[t]).sum();
            let d_w = grads.attention.as_mut().expect("attention gradient block");
            for t in 0..steps {
                let a = att.alpha[t];
                let dz = a * (scores[t] - expected);
                let state = trace.gru.state(t);
                let dh = &mut d_hidden[t * h..(t + 1) * h];
                for i in 0..h {
                    dh[i] = a * d_pooled[i] + dz * w[i];
                    d_w[i] += dz * state[i];
                }
            }
        }
        _ => {
            let inv = 1.0 / steps as f64;
            for t in 0..steps {
                for i in 0..h {
                    d_hidden[t * h + i] = d_pooled[i] * inv;
                }
            }
        }
    }

    // recurrence, newest step first
    let zeros = vec![0.0; h];
    let mut carry = vec![0.0; h];
    let mut dh = vec![0.0; h];
    let mut da_h = vec![0.0; h];
    let mut da_z = vec![0.0; h];
    let mut da_r = vec![0.0; h];
    let mut gated = vec![0.0; h];
    for t in (0..steps).rev() {
        let x = seq.row(t);
        let prev = if t > 0 { trace.gru.state(t - 1) } else { &zeros[..] };
        let o = t * h;
        let z = &trace.gru.update[o..o + h];
        let r = &trace.gru.reset[o..o + h];
        let c = &trace.gru.candidate[o..o + h];
        for i in 0..h {
            dh[i] = d_hidden[o + i] + carry[i];
            gated[i] = r[i] * prev[i];
        }
        let mut d_prev: Vec<f64> = (0..h).map(|i| dh[i] * (1.0 - z[i])).collect();
        for i in 0..h {
            da_h[i] = dh[i] * z[i] * (1.0 - c[i] * c[i]);
            da_z[i] = dh[i] * (c[i] - prev[i]) * z[i] * (1.0 - z[i]);
        }
        // d(r ⊙ h_prev) = U_hᵀ da_h
        let mut d_gated = vec![0.0; h];
        for i in 0..h {
            let g = da_h[i];
            if g == 0.0 {
                continue;
            }
            let u = &params.u_h[i * h..(i + 1) * h];
            for (acc, ui) in d_gated.iter_mut().zip(u) {
                *acc += g * ui;
            }
        }
        for i in 0..h {
            da_r[i] = d_gated[i] * prev[i] * r[i] * (1.0 - r[i]);
            d_prev[i] += d_gated[i] * r[i];
        }
        // the candidate sees r ⊙ h_prev; z and r see h_prev directly
        for (da, w_grad, u_grad, b_grad, u, candidate) in [
            (&da_h, &mut grads.w_h, &mut grads.u_h, &mut grads.b_h, &params.u_h, true),
            (&da_z, &mut grads.w_z, &mut grads.u_z, &mut grads.b_z, &params.u_z, false),
            (&da_r, &mut grads.w_r, &mut grads.u_r, &mut grads.b_r, &params.u_r, false),
        ] {
            let rec_in: &[f64] = if candidate { &gated } else { prev };
            for i in 0..h {
                let g = da[i];
                if g == 0.0 {
                    continue;
                }
                b_grad[i] += g;
                for (w, xv) in w_grad[i * d..(i + 1) * d].iter_mut().zip(x) {
                    *w += g * xv;
                }
                for (ug, hv) in u_grad[i * h..(i + 1) * h].iter_mut().zip(rec_in) {
                    *ug += g * hv;
                }
                if !candidate {
                    for (acc, ui) in d_prev.iter_mut().zip(&u[i * h..(i + 1) * h]) {
                        *acc += g * ui;
                    }
                }
            }
        }
        carry = d_prev;
    }
}

/// One element of a training batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub seq: &'a FeatureSequence,
    pub target: &'a [f64],
    /// Dropout mask, `None` for eval-mode forward passes.
    pub mask: Option<&'a [f64]>,
}

/// Mean L1 loss over the batch.
pub fn batch_loss(params: &ModelParams, batch: &[BatchItem<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for item in batch {
        let trace = forward(item.seq, params, item.mask)?;
        total += l1_loss(&trace.prediction, item.target);
    }
    Ok(total / batch.len() as f64)
}

/// Mean batch loss and its exact gradient. Per-item work runs in parallel;
/// partial gradients are summed in batch order.
pub fn loss_and_gradients(params: &ModelParams, batch: &[BatchItem<'_>]) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let parts: Vec<(f64, Gradients)> = batch
        .par_iter()
        .map(|item| {
            let trace = forward(item.seq, params, item.mask)?;
            let mut g = params.zeros_like();
            backward_into(item.seq, &trace, item.target, params, &mut g);
            Ok((l1_loss(&trace.prediction, item.target), g))
        })
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for (loss, g) in &parts {
        total += loss;
        grads.add_scaled(g, 1.0);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    if let Some(block) = grads.non_finite_block() {
        return Err(Error::Numeric(format!("non-finite gradient in block `{block}`")));
    }
    Ok((total / n, grads))
}

/// Relative-error floor for the gradient check: below this magnitude the
/// central difference is dominated by round-off, so errors are measured
/// against the floor instead.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative error per parameter block between the analytic gradient
/// and central finite differences of [`batch_loss`].
pub fn gradient_check(params: &ModelParams, batch: &[BatchItem<'_>], eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let (_, analytic) = loss_and_gradients(params, batch)?;
    let flat = params.flatten();
    let grads = analytic.flatten();
    let mut probe = params.clone();
    let mut numeric = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let mut shifted = flat.clone();
        shifted[i] = flat[i] + eps;
        probe.assign_flat(&shifted)?;
        let up = batch_loss(&probe, batch)?;
        shifted[i] = flat[i] - eps;
        probe.assign_flat(&shifted)?;
        let down = batch_loss(&probe, batch)?;
        numeric[i] = (up - down) / (2.0 * eps);
    }
    let mut out = Vec::new();
    let mut offset = 0;
    for (name, block) in analytic.blocks() {
        let worst = (offset..offset + block.len())
            .map(|i| {
                let (a, n) = (grads[i], numeric[i]);
                (a - n).abs() / a.abs().max(n.abs()).max(GRADIENT_CHECK_FLOOR)
            })
            .fold(0.0, f64::max);
        out.push((name, worst));
        offset += block.len();
    }
    Ok(out)
}

/// SGD with Nesterov momentum: `v ← μv + g`, `θ ← θ − lr (g + μv)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NesterovSgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub velocity: ModelParams,
}

impl NesterovSgd {
    pub fn new(params: &ModelParams, learning_rate: f64, momentum: f64) -> Self {
        NesterovSgd {
            learning_rate,
            momentum,
            velocity: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) {
        let (lr, mu) = (self.learning_rate, self.momentum);
        let grad_blocks = grads.blocks();
        for (((_, theta), (_, v)), (_, g)) in params
            .blocks_mut()
            .into_iter()
            .zip(self.velocity.blocks_mut())
            .zip(grad_blocks)
        {
            for ((t, v), g) in theta.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = mu * *v + g;
                *t -= lr * (g + mu * *v);
            }
        }
    }
}

/// Scalar form of one Nesterov update, `(θ, v) → (θ', v')`.
pub fn sgd_nesterov_step(theta: f64, grad: f64, velocity: f64, lr: f64, momentum: f64) -> (f64, f64) {
    let v = momentum * velocity + grad;
    (theta - lr * (grad + momentum * v), v)
}

/// Tracks the best dev metric and decides when to stop.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records the metric for `epoch`; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> bool {
        let improved = match self.best {
            None => true,
            Some((_, best)) => metric < best,
        };
        if improved {
            self.best = Some((epoch, metric));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        improved
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Per-target dev MAE; `None` for targets the head does not predict.
    pub dev_mae: [Option<f64>; 3],
    /// Mean over the predicted targets; the early-stopping metric.
    pub dev_mae_mean: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_dev_mae: f64,
    pub history: Vec<EpochRecord>,
}

/// Per-target MAE of `params` on a split, in the head's target order.
pub fn split_mae(
    params: &ModelParams,
    task: TaskMode,
    dataset: &Dataset,
    split: Split,
    max_seq_len: usize,
) -> Result<Vec<f64>> {
    let idx = dataset.indices(split);
    if idx.is_empty() {
        return Err(Error::Invalid(format!("{split} split is empty")));
    }
    let preds: Vec<Vec<f64>> = idx
        .par_iter()
        .map(|&i| {
            let ex = dataset.get(i);
            crate::model::predict(&ex.seq.truncated(max_seq_len), params)
        })
        .collect::<Result<_>>()?;
    let targets = task.targets();
    let mut sums = vec![0.0; targets.len()];
    for (p, &i) in preds.iter().zip(&idx) {
        let y = task.select(&dataset.get(i).targets);
        for (s, (a, b)) in sums.iter_mut().zip(p.iter().zip(&y)) {
            *s += (a - b).abs();
        }
    }
    Ok(sums.into_iter().map(|s| s / idx.len() as f64).collect())
}

/// Trains on the train split, early-stopping on dev MAE. Never reads the test split.
pub fn train(
    dataset: &Dataset,
    pooling: Pooling,
    task: TaskMode,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    let train_idx = dataset.indices(Split::Train);
    let dev_idx = dataset.indices(Split::Dev);
    if train_idx.is_empty() || dev_idx.is_empty() {
        return Err(Error::Invalid("training needs non-empty train and dev splits".into()));
    }
    let dim = dataset.dim()?;
    let train_set: Vec<(FeatureSequence, Vec<f64>)> = train_idx
        .iter()
        .map(|&i| {
            let ex = dataset.get(i);
            (ex.seq.truncated(config.max_seq_len), task.select(&ex.targets))
        })
        .collect();

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init"));
    let mut params = ModelParams::init(dim, config.hidden, task.outputs(), pooling, &mut init_rng);
    let mut optimizer = NesterovSgd::new(&params, config.learning_rate, config.momentum);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_params = params.clone();
    let mut history = Vec::new();

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("epoch-{epoch}")));
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let masks: Vec<Option<Vec<f64>>> = chunk
                .iter()
                .map(|_| (config.dropout > 0.0).then(|| dropout_mask(config.hidden, config.dropout, &mut rng)))
                .collect();
            let batch: Vec<BatchItem<'_>> = chunk
                .iter()
                .zip(&masks)
                .map(|(&i, m)| BatchItem {
                    seq: &train_set[i].0,
                    target: &train_set[i].1,
                    mask: m.as_deref(),
                })
                .collect();
            let (loss, grads) = loss_and_gradients(&params, &batch)
                .map_err(|e| annotate(e, epoch, b))?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {b}"
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            optimizer.step(&mut params, &grads);
        }

        let dev = split_mae(&params, task, dataset, Split::Dev, config.max_seq_len)?;
        let mut dev_mae = [None; 3];
        for (t, v) in task.targets().iter().zip(&dev) {
            dev_mae[t.index()] = Some(*v);
        }
        let dev_mean = dev.iter().sum::<f64>() / dev.len() as f64;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            dev_mae,
            dev_mae_mean: dev_mean,
        });
        log::debug!("epoch {epoch}: train {:.4} dev {:.4}", loss_sum / train_set.len() as f64, dev_mean);
        if stopper.observe(epoch, dev_mean) {
            best_params = params.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }
    let (best_epoch, best_dev_mae) = stopper.best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best_params,
        best_epoch,
        best_dev_mae,
        history,
    })
}

fn annotate(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("{m} at epoch {epoch}, batch {batch}")),
        other => other,
    }
}

pub const HISTORY_HEADER: &str =
    "epoch,train_loss,dev_mae_cortisol,dev_mae_appraisal,dev_mae_affect,dev_mae_mean";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        let cell = |t: Target| r.dev_mae[t.index()].map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch,
            r.train_loss,
            cell(Target::Cortisol),
            cell(Target::Appraisal),
            cell(Target::Affect),
            r.dev_mae_mean
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Example;
    use rand::Rng;

    fn random_seq(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> FeatureSequence {
        let data = (0..rows * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        FeatureSequence::new("s", rows, dim, data).unwrap()
    }

    #[test]
    fn l1_fixtures() {
        assert_eq!(l1_loss(&[0.4, 0.1], &[0.4, 0.1]), 0.0);
        assert!((l1_loss(&[0.2], &[0.5]) - 0.3).abs() < 1e-15);
        assert!((l1_loss(&[0.0, 1.0, 1.0], &[1.0, 1.0, 0.0]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nesterov_fixtures() {
        // μ = 0 is plain SGD
        assert_eq!(sgd_nesterov_step(1.0, 1.0, 0.0, 0.1, 0.0).0, 0.9);
        // f(θ) = θ²/2 from θ = 1, lr 0.1, μ 0.9
        let (t1, v1) = sgd_nesterov_step(1.0, 1.0, 0.0, 0.1, 0.9);
        assert!((t1 - 0.81).abs() < 1e-15 && v1 == 1.0);
        let (t2, v2) = sgd_nesterov_step(t1, t1, v1, 0.1, 0.9);
        assert!((v2 - 1.71).abs() < 1e-12);
        assert!((t2 - 0.5751).abs() < 1e-12, "{t2}");
    }

    #[test]
    fn optimizer_matches_scalar_form() {
        let mut p = ModelParams::zeros(1, 1, 1, Pooling::Mean);
        p.head_b[0] = 1.0;
        let mut opt = NesterovSgd::new(&p, 0.1, 0.9);
        for _ in 0..2 {
            let mut g = p.zeros_like();
            g.head_b[0] = p.head_b[0];
            opt.step(&mut p, &g);
        }
        assert!((p.head_b[0] - 0.5751).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_decays_velocity() {
        let mut p = ModelParams::zeros(1, 1, 1, Pooling::Mean);
        let mut opt = NesterovSgd::new(&p, 0.1, 0.9);
        opt.velocity.head_b[0] = 1.0;
        let zero = p.zeros_like();
        let mut deltas = Vec::new();
        for _ in 0..20 {
            let before = p.head_b[0];
            opt.step(&mut p, &zero);
            deltas.push((p.head_b[0] - before).abs());
        }
        for w in deltas.windows(2) {
            assert!((w[1] / w[0] - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ModelParams::init(3, 4, 3, Pooling::Attention, &mut rng);
        let seq = random_seq(&mut rng, 6, 3);
        let y = crate::model::predict(&seq, &p).unwrap();
        let (loss, g) = loss_and_gradients(&p, &[BatchItem { seq: &seq, target: &y, mask: None }]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn head_bias_gradient_is_mean_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = ModelParams::init(3, 4, 3, Pooling::Mean, &mut rng);
        let seqs: Vec<FeatureSequence> = (0..4).map(|_| random_seq(&mut rng, 5, 3)).collect();
        let targets: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let batch: Vec<BatchItem<'_>> = seqs
            .iter()
            .zip(&targets)
            .map(|(s, t)| BatchItem { seq: s, target: t, mask: None })
            .collect();
        let (_, g) = loss_and_gradients(&p, &batch).unwrap();
        for j in 0..3 {
            let mut expect = 0.0;
            for (s, t) in seqs.iter().zip(&targets) {
                let y = crate::model::predict(s, &p).unwrap();
                expect += (y[j] - t[j]).signum() / 3.0;
            }
            expect /= 4.0;
            assert!((g.head_b[j] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for pooling in [Pooling::Mean, Pooling::Attention] {
            for k in [1, 3] {
                let p = ModelParams::init(6, 4, k, pooling, &mut rng);
                let seqs = [random_seq(&mut rng, 9, 6), random_seq(&mut rng, 7, 6).padded(2)];
                // targets far from the outputs keep every L1 term off its kink
                let targets = [vec![2.0, -2.0, 3.0], vec![-3.0, 2.5, -2.0]];
                let mask = dropout_mask(4, 0.2, &mut rng);
                let batch = [
                    BatchItem { seq: &seqs[0], target: &targets[0][..k], mask: None },
                    BatchItem { seq: &seqs[1], target: &targets[1][..k], mask: Some(&mask) },
                ];
                for (block, err) in gradient_check(&p, &batch, 1e-5).unwrap() {
                    assert!(err < 1e-4, "{pooling:?} k={k} {block}: {err}");
                }
            }
        }
    }

    #[test]
    fn padding_leaves_loss_and_gradient_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = ModelParams::init(3, 5, 3, Pooling::Attention, &mut rng);
        let seq = random_seq(&mut rng, 6, 3);
        let padded = seq.padded(20);
        let y = [0.2, 0.9, 0.4];
        let (l1, g1) = loss_and_gradients(&p, &[BatchItem { seq: &seq, target: &y, mask: None }]).unwrap();
        let (l2, g2) = loss_and_gradients(&p, &[BatchItem { seq: &padded, target: &y, mask: None }]).unwrap();
        assert!((l1 - l2).abs() < 1e-10);
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn early_stopping_semantics() {
        let mut s = EarlyStopping::new(10);
        let metrics = [0.5, 0.4, 0.3];
        let mut stopped_at = None;
        for epoch in 1..=100 {
            let m = if epoch <= 3 { metrics[epoch - 1] } else { 0.35 };
            s.observe(epoch, m);
            if s.should_stop() {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(13));
        assert_eq!(s.best, Some((3, 0.3)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut c = TrainConfig::default();
        c.patience = 200;
        assert!(c.validate().is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"learning_rate": 0.01}"#).unwrap();
        assert_eq!((c.learning_rate, c.batch_size, c.max_seq_len), (0.01, 16, 1200));
    }

    fn tiny_dataset(rng: &mut ChaCha8Rng, train: usize) -> Dataset {
        let mut ex = Vec::new();
        for (split, n) in [(Split::Train, train), (Split::Dev, 2)] {
            for _ in 0..n {
                let seq = random_seq(rng, 8, 4);
                let m = seq.column_mean(0);
                ex.push(Example {
                    seq,
                    split,
                    targets: [0.5 + m, 0.5 - m, 0.5],
                });
            }
        }
        Dataset::new(ex)
    }

    #[test]
    fn single_sequence_overfits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ds = tiny_dataset(&mut rng, 1);
        let cfg = TrainConfig {
            learning_rate: 0.01,
            dropout: 0.0,
            max_epochs: 5,
            patience: 5,
            hidden: 8,
            ..TrainConfig::default()
        };
        let out = train(&ds, Pooling::Attention, TaskMode::Mtl, &cfg, 3).unwrap();
        let losses: Vec<f64> = out.history.iter().map(|h| h.train_loss).collect();
        assert_eq!(losses.len(), 5);
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ds = tiny_dataset(&mut rng, 6);
        let cfg = TrainConfig {
            max_epochs: 4,
            patience: 4,
            hidden: 6,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let a = train(&ds, Pooling::Mean, TaskMode::Stl(Target::Appraisal), &cfg, 7).unwrap();
        let b = train(&ds, Pooling::Mean, TaskMode::Stl(Target::Appraisal), &cfg, 7).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        assert_eq!(history_csv(&a.history), history_csv(&b.history));
        assert!(a.history[0].dev_mae[0].is_none() && a.history[0].dev_mae[1].is_some());
    }

    #[test]
    fn epoch_equals_manual_sgd_steps() {
        // dropout off, μ = 0: one epoch is plain SGD over the seeded shuffle
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ds = tiny_dataset(&mut rng, 7);
        let cfg = TrainConfig {
            max_epochs: 1,
            patience: 1,
            hidden: 5,
            batch_size: 3,
            momentum: 0.0,
            dropout: 0.0,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let seed = 21;
        let out = train(&ds, Pooling::Attention, TaskMode::Mtl, &cfg, seed).unwrap();

        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init"));
        let mut p = ModelParams::init(4, 5, 3, Pooling::Attention, &mut init_rng);
        let mut order: Vec<usize> = (0..7).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "epoch-1")));
        let train_idx = ds.indices(Split::Train);
        for chunk in order.chunks(3) {
            let targets: Vec<Vec<f64>> = chunk.iter().map(|&i| ds.get(train_idx[i]).targets.to_vec()).collect();
            let batch: Vec<BatchItem<'_>> = chunk
                .iter()
                .zip(&targets)
                .map(|(&i, t)| BatchItem { seq: &ds.get(train_idx[i]).seq, target: t, mask: None })
                .collect();
            let (_, g) = loss_and_gradients(&p, &batch).unwrap();
            p.add_scaled(&g, -0.05);
        }
        assert_eq!(out.params, p);
    }

    #[test]
    fn empty_splits_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut ex = tiny_dataset(&mut rng, 2).examples_unchecked().to_vec();
        ex.retain(|e| e.split == Split::Train);
        let ds = Dataset::new(ex);
        assert!(train(&ds, Pooling::Mean, TaskMode::Mtl, &TrainConfig::default(), 1).is_err());
    }
}
