//! GRU sequence regressor with mean or attention pooling.
//!
//! Gate convention (reset applied inside the candidate):
//!
//! ```text
//! z_t = σ(W_z x_t + U_z h_{t-1} + b_z)
//! r_t = σ(W_r x_t + U_r h_{t-1} + b_r)
//! c_t = tanh(W_h x_t + U_h (r_t ⊙ h_{t-1}) + b_h)
//! h_t = (1 − z_t) ⊙ h_{t-1} + z_t ⊙ c_t
//! ```
//!
//! Attention pooling scores each hidden state with a learned vector `w`,
//! `Z_t = h_t · w`, takes `α = softmax(Z)` over the valid steps and returns
//! `F = Σ_t α_t h_t`. Padded steps receive `−∞` logits, so `α` is exactly
//! zero there.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::sessions::Target;

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pooling {
    #[serde(rename = "gru", alias = "mean")]
    Mean,
    #[serde(rename = "agru", alias = "attention")]
    Attention,
}

impl Pooling {
    /// Model family name: `gru` (mean pooling) or `agru` (attention pooling).
    pub fn model_name(self) -> &'static str {
        match self {
            Pooling::Mean => "gru",
            Pooling::Attention => "agru",
        }
    }
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gru" | "mean" => Ok(Pooling::Mean),
            "agru" | "attention" => Ok(Pooling::Attention),
            other => Err(format!("unknown model `{other}` (expected gru or agru)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskMode {
    Stl(Target),
    Mtl,
}

impl TaskMode {
    pub fn outputs(self) -> usize {
        match self {
            TaskMode::Stl(_) => 1,
            TaskMode::Mtl => 3,
        }
    }

    /// Target index predicted by each head output.
    pub fn targets(self) -> Vec<Target> {
        match self {
            TaskMode::Stl(t) => vec![t],
            TaskMode::Mtl => Target::ALL.to_vec(),
        }
    }

    /// Selects the head's targets from a full target triple.
    pub fn select(self, all: &[f64; 3]) -> Vec<f64> {
        self.targets().iter().map(|t| all[t.index()]).collect()
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskMode::Stl(t) => write!(f, "stl-{t}"),
            TaskMode::Mtl => f.write_str("mtl"),
        }
    }
}

impl FromStr for TaskMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "mtl" {
            return Ok(TaskMode::Mtl);
        }
        match s.strip_prefix("stl-") {
            Some(t) => Ok(TaskMode::Stl(t.parse()?)),
            None => Err(format!("unknown task `{s}` (expected mtl or stl-<target>)")),
        }
    }
}

impl Serialize for TaskMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TaskMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All trainable parameters. Matrices are row-major; gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub w_z: Vec<f64>,
    pub w_r: Vec<f64>,
    pub w_h: Vec<f64>,
    pub u_z: Vec<f64>,
    pub u_r: Vec<f64>,
    pub u_h: Vec<f64>,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
    /// Attention scoring vector (h), present only for attention pooling.
    pub attention: Option<Vec<f64>>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

pub type Gradients = ModelParams;

impl ModelParams {
    pub fn zeros(input_dim: usize, hidden: usize, outputs: usize, pooling: Pooling) -> Self {
        let (d, h, k) = (input_dim, hidden, outputs);
        ModelParams {
            input_dim,
            hidden,
            outputs,
            w_z: vec![0.0; h * d],
            w_r: vec![0.0; h * d],
            w_h: vec![0.0; h * d],
            u_z: vec![0.0; h * h],
            u_r: vec![0.0; h * h],
            u_h: vec![0.0; h * h],
            b_z: vec![0.0; h],
            b_r: vec![0.0; h],
            b_h: vec![0.0; h],
            attention: (pooling == Pooling::Attention).then(|| vec![0.0; h]),
            head_w: vec![0.0; k * h],
            head_b: vec![0.0; k],
        }
    }

    /// Weights uniform in ±1/√h, biases zero.
    pub fn init<R: Rng>(
        input_dim: usize,
        hidden: usize,
        outputs: usize,
        pooling: Pooling,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(input_dim, hidden, outputs, pooling);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut fill = |v: &mut Vec<f64>| {
            v.iter_mut()
                .for_each(|x| *x = rng.random_range(-bound..bound));
        };
        fill(&mut p.w_z);
        fill(&mut p.w_r);
        fill(&mut p.w_h);
        fill(&mut p.u_z);
        fill(&mut p.u_r);
        fill(&mut p.u_h);
        if let Some(a) = p.attention.as_mut() {
            fill(a);
        }
        fill(&mut p.head_w);
        p
    }

    pub fn pooling(&self) -> Pooling {
        if self.attention.is_some() {
            Pooling::Attention
        } else {
            Pooling::Mean
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden, self.outputs, self.pooling())
    }

    /// Parameter blocks in checkpoint order.
    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut v: Vec<(&'static str, &[f64])> = vec![
            ("w_z", &self.w_z),
            ("w_r", &self.w_r),
            ("w_h", &self.w_h),
            ("u_z", &self.u_z),
            ("u_r", &self.u_r),
            ("u_h", &self.u_h),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
            ("b_h", &self.b_h),
        ];
        if let Some(a) = &self.attention {
            v.push(("attention", a));
        }
        v.push(("head_w", &self.head_w));
        v.push(("head_b", &self.head_b));
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        let mut v: Vec<(&'static str, &mut Vec<f64>)> = vec![
            ("w_z", &mut self.w_z),
            ("w_r", &mut self.w_r),
            ("w_h", &mut self.w_h),
            ("u_z", &mut self.u_z),
            ("u_r", &mut self.u_r),
            ("u_h", &mut self.u_h),
            ("b_z", &mut self.b_z),
            ("b_r", &mut self.b_r),
            ("b_h", &mut self.b_h),
        ];
        if let Some(a) = self.attention.as_mut() {
            v.push(("attention", a));
        }
        v.push(("head_w", &mut self.head_w));
        v.push(("head_b", &mut self.head_b));
        v
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Shape(format!(
                "parameter blob has {} values, model needs {}",
                flat.len(),
                self.len()
            )));
        }
        let mut offset = 0;
        for (_, block) in self.blocks_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// First block containing a non-finite value.
    pub fn non_finite_block(&self) -> Option<&'static str> {
        self.blocks()
            .into_iter()
            .find(|(_, b)| b.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }

    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        let others: Vec<Vec<f64>> = other.blocks().iter().map(|(_, b)| b.to_vec()).collect();
        for ((_, dst), src) in self.blocks_mut().into_iter().zip(others) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += scale * b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, b) in self.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-step GRU activations for the valid part of a sequence (each `len × h`).
#[derive(Debug, Clone, PartialEq)]
pub struct GruTrace {
    pub hidden: Vec<f64>,
    pub update: Vec<f64>,
    pub reset: Vec<f64>,
    pub candidate: Vec<f64>,
    pub steps: usize,
    pub width: usize,
}

impl GruTrace {
    pub fn state(&self, t: usize) -> &[f64] {
        &self.hidden[t * self.width..(t + 1) * self.width]
    }
}

/// Runs the GRU over the first `valid_len` rows; h_0 = 0.
pub fn gru_forward(seq: &FeatureSequence, params: &ModelParams) -> Result<GruTrace> {
    if seq.dim != params.input_dim {
        return Err(Error::Shape(format!(
            "sequence has {} features, model expects {}",
            seq.dim, params.input_dim
        )));
    }
    if seq.valid_len == 0 || seq.valid_len > seq.rows {
        return Err(Error::Shape(format!(
            "valid length {} outside 1..={}",
            seq.valid_len, seq.rows
        )));
    }
    let (d, h, steps) = (params.input_dim, params.hidden, seq.valid_len);
    let mut trace = GruTrace {
        hidden: vec![0.0; steps * h],
        update: vec![0.0; steps * h],
        reset: vec![0.0; steps * h],
        candidate: vec![0.0; steps * h],
        steps,
        width: h,
    };
    let mut prev = vec![0.0; h];
    let mut gated = vec![0.0; h];
    for t in 0..steps {
        let x = seq.row(t);
        let o = t * h;
        for i in 0..h {
            let az = params.b_z[i]
                + dot(&params.w_z[i * d..(i + 1) * d], x)
                + dot(&params.u_z[i * h..(i + 1) * h], &prev);
            let ar = params.b_r[i]
                + dot(&params.w_r[i * d..(i + 1) * d], x)
                + dot(&params.u_r[i * h..(i + 1) * h], &prev);
            trace.update[o + i] = sigmoid(az);
            trace.reset[o + i] = sigmoid(ar);
            gated[i] = trace.reset[o + i] * prev[i];
        }
        for i in 0..h {
            let ah = params.b_h[i]
                + dot(&params.w_h[i * d..(i + 1) * d], x)
                + dot(&params.u_h[i * h..(i + 1) * h], &gated);
            let c = ah.tanh();
            let z = trace.update[o + i];
            trace.candidate[o + i] = c;
            trace.hidden[o + i] = (1.0 - z) * prev[i] + z * c;
        }
        prev.copy_from_slice(&trace.hidden[o..o + h]);
    }
    Ok(trace)
}

/// Mean of the first `valid_len` hidden states.
pub fn mean_pool(hidden: &[f64], width: usize, valid_len: usize) -> Vec<f64> {
    let mut f = vec![0.0; width];
    for t in 0..valid_len {
        f.iter_mut()
            .zip(&hidden[t * width..(t + 1) * width])
            .for_each(|(a, b)| *a += b);
    }
    f.iter_mut().for_each(|v| *v /= valid_len as f64);
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// `Z_t`, with `−∞` on padded steps.
    pub logits: Vec<f64>,
    /// `α_t`, exactly zero on padded steps.
    pub alpha: Vec<f64>,
    pub pooled: Vec<f64>,
}

/// Masked softmax attention over `total_len` steps of which `valid_len` are real.
pub fn attention_pool(
    hidden: &[f64],
    width: usize,
    valid_len: usize,
    total_len: usize,
    w: &[f64],
) -> AttentionOutput {
    let mut logits = vec![f64::NEG_INFINITY; total_len.max(valid_len)];
    for t in 0..valid_len {
        logits[t] = dot(&hidden[t * width..(t + 1) * width], w);
    }
    let max = logits[..valid_len]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut alpha: Vec<f64> = logits
        .iter()
        .map(|&z| if z == f64::NEG_INFINITY { 0.0 } else { (z - max).exp() })
        .collect();
    let sum: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a /= sum);
    let mut pooled = vec![0.0; width];
    for t in 0..valid_len {
        let a = alpha[t];
        pooled
            .iter_mut()
            .zip(&hidden[t * width..(t + 1) * width])
            .for_each(|(f, h)| *f += a * h);
    }
    AttentionOutput {
        logits,
        alpha,
        pooled,
    }
}

/// Inverted-dropout mask: kept units carry `1/keep`, dropped units 0.
pub fn dropout_mask<R: Rng>(width: usize, drop_prob: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 - drop_prob;
    (0..width)
        .map(|_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect()
}

/// Linear head on the pooled vector; `mask` applies training-mode dropout.
pub fn head_forward(pooled: &[f64], params: &ModelParams, mask: Option<&[f64]>) -> Vec<f64> {
    let h = params.hidden;
    let input: Vec<f64> = match mask {
        Some(m) => pooled.iter().zip(m).map(|(f, m)| f * m).collect(),
        None => pooled.to_vec(),
    };
    (0..params.outputs)
        .map(|j| params.head_b[j] + dot(&params.head_w[j * h..(j + 1) * h], &input))
        .collect()
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub gru: GruTrace,
    /// Present for attention pooling; `alpha` spans the full (padded) length.
    pub attention: Option<AttentionOutput>,
    pub pooled: Vec<f64>,
    pub mask: Option<Vec<f64>>,
    pub prediction: Vec<f64>,
}

impl ForwardTrace {
    pub fn alpha(&self) -> Option<&[f64]> {
        self.attention.as_ref().map(|a| a.alpha.as_slice())
    }
}

/// Full forward pass. `mask` is `Some` only in training mode.
pub fn forward(
    seq: &FeatureSequence,
    params: &ModelParams,
    mask: Option<&[f64]>,
) -> Result<ForwardTrace> {
    let gru = gru_forward(seq, params)?;
    let (attention, pooled) = match &params.attention {
        Some(w) => {
            let att = attention_pool(&gru.hidden, gru.width, gru.steps, seq.rows, w);
            let pooled = att.pooled.clone();
            (Some(att), pooled)
        }
        None => (None, mean_pool(&gru.hidden, gru.width, gru.steps)),
    };
    if let Some(m) = mask {
        if m.len() != params.hidden {
            return Err(Error::Shape("dropout mask width".into()));
        }
    }
    let prediction = head_forward(&pooled, params, mask);
    Ok(ForwardTrace {
        gru,
        attention,
        pooled,
        mask: mask.map(<[f64]>::to_vec),
        prediction,
    })
}

/// Eval-mode prediction.
pub fn predict(seq: &FeatureSequence, params: &ModelParams) -> Result<Vec<f64>> {
    Ok(forward(seq, params, None)?.prediction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub d: usize,
    pub h: usize,
    pub k: usize,
    pub pooling: Pooling,
    pub task: TaskMode,
    pub registry_version: String,
    pub seed: u64,
    /// Block names and lengths, in blob order.
    pub layout: Vec<(String, usize)>,
}

/// A trained model: JSON header line, `\n`, then the parameters as
/// little-endian f64 in [`ModelParams::blocks`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(params: ModelParams, task: TaskMode, registry_version: &str, seed: u64) -> Self {
        let header = CheckpointHeader {
            d: params.input_dim,
            h: params.hidden,
            k: params.outputs,
            pooling: params.pooling(),
            task,
            registry_version: registry_version.to_string(),
            seed,
            layout: params
                .blocks()
                .iter()
                .map(|(n, b)| (n.to_string(), b.len()))
                .collect(),
        };
        Checkpoint { header, params }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(&self.header)?;
        out.push(b'\n');
        for v in self.params.flatten() {
            out.write_all(&v.to_le_bytes()).expect("vec write");
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("checkpoint header not terminated".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..split])?;
        if header.task.outputs() != header.k {
            return Err(Error::Format("checkpoint task and head width disagree".into()));
        }
        let blob = &bytes[split + 1..];
        if blob.len() % 8 != 0 {
            return Err(Error::Format("checkpoint blob is not a whole number of f64".into()));
        }
        let flat: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut params = ModelParams::zeros(header.d, header.h, header.k, header.pooling);
        params.assign_flat(&flat)?;
        Ok(Checkpoint { header, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> FeatureSequence {
        let data = (0..rows * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        FeatureSequence::new("s", rows, dim, data).unwrap()
    }

    #[test]
    fn zero_params_stay_at_origin() {
        let p = ModelParams::zeros(3, 4, 1, Pooling::Mean);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seq = random_seq(&mut rng, 7, 3);
        let tr = gru_forward(&seq, &p).unwrap();
        assert!(tr.hidden.iter().all(|h| *h == 0.0));
        assert!(tr.update.iter().all(|z| *z == 0.5));
    }

    #[test]
    fn scalar_gru_step() {
        let mut p = ModelParams::zeros(1, 1, 1, Pooling::Mean);
        p.w_h[0] = 1.0;
        let seq = FeatureSequence::new("s", 1, 1, vec![1.0]).unwrap();
        let tr = gru_forward(&seq, &p).unwrap();
        // z = σ(0) = 0.5, candidate = tanh(1)
        assert!((tr.hidden[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((tr.hidden[0] - 0.380797).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = ModelParams::zeros(3, 2, 1, Pooling::Mean);
        let seq = FeatureSequence::new("s", 2, 4, vec![0.0; 8]).unwrap();
        assert!(matches!(gru_forward(&seq, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn mean_pool_cases() {
        assert_eq!(mean_pool(&[1.0, 2.0], 2, 1), vec![1.0, 2.0]);
        assert_eq!(mean_pool(&[1.0, -3.0, -1.0, 3.0], 2, 2), vec![0.0, 0.0]);
        let padded = [1.0, 3.0, 9.0, 9.0, 9.0];
        assert_eq!(mean_pool(&padded, 1, 2), vec![2.0]);
    }

    #[test]
    fn attention_closed_forms() {
        let h = [0.0, 3f64.ln()];
        let out = attention_pool(&h, 1, 2, 4, &[1.0]);
        assert!((out.alpha[0] - 0.25).abs() < 1e-15);
        assert!((out.alpha[1] - 0.75).abs() < 1e-15);
        assert_eq!(&out.alpha[2..], &[0.0, 0.0]);
        assert_eq!(out.logits[3], f64::NEG_INFINITY);

        let single = attention_pool(&[2.0, 5.0], 2, 1, 1, &[0.3, -0.7]);
        assert_eq!(single.alpha, vec![1.0]);
        assert_eq!(single.pooled, vec![2.0, 5.0]);
    }

    #[test]
    fn head_modes() {
        let mut p = ModelParams::zeros(2, 3, 3, Pooling::Mean);
        p.head_b = vec![0.1, 0.2, 0.3];
        assert_eq!(head_forward(&[1.0, 2.0, 3.0], &p, None), vec![0.1, 0.2, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ModelParams::init(2, 3, 3, Pooling::Mean, &mut rng);
        let f = [0.3, -0.2, 0.9];
        let a = head_forward(&f, &p, None);
        assert_eq!(a, head_forward(&f, &p, None));
        assert_eq!(a, head_forward(&f, &p, Some(&[1.0, 1.0, 1.0])));
    }

    #[test]
    fn dropout_mask_is_inverted() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = dropout_mask(10_000, 0.2, &mut rng);
        assert!(m.iter().all(|v| *v == 0.0 || *v == 1.25));
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.03);
    }

    #[test]
    fn output_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seq = random_seq(&mut rng, 5, 3);
        for (task, k) in [(TaskMode::Mtl, 3), (TaskMode::Stl(Target::Affect), 1)] {
            let p = ModelParams::init(3, 4, task.outputs(), Pooling::Attention, &mut rng);
            assert_eq!(predict(&seq, &p).unwrap().len(), k);
        }
    }

    #[test]
    fn task_mode_strings() {
        for t in ["mtl", "stl-cortisol", "stl-appraisal", "stl-affect"] {
            assert_eq!(t.parse::<TaskMode>().unwrap().to_string(), t);
        }
        assert!("stl-mood".parse::<TaskMode>().is_err());
        assert_eq!(TaskMode::Stl(Target::Appraisal).select(&[1.0, 2.0, 3.0]), vec![2.0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ModelParams::init(6, 4, 3, Pooling::Attention, &mut rng);
        let ck = Checkpoint::new(p, TaskMode::Mtl, "reg", 42);
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(bytes.len() - newline - 1, ck.params.len() * 8);
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    proptest! {
        #[test]
        fn zero_attention_equals_mean_pool(seed in 0u64..1000, len in 1usize..20, pad in 0usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let width = 5;
            let hidden: Vec<f64> = (0..len * width).map(|_| rng.random_range(-1.0..1.0)).collect();
            let att = attention_pool(&hidden, width, len, len + pad, &[0.0; 5]);
            let mean = mean_pool(&hidden, width, len);
            for (a, b) in att.pooled.iter().zip(&mean) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let total: f64 = att.alpha.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(att.alpha[len..].iter().all(|a| *a == 0.0));
        }

        #[test]
        fn padding_does_not_change_predictions(seed in 0u64..500, pad in 1usize..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seq = random_seq(&mut rng, 6, 3);
            for pooling in [Pooling::Mean, Pooling::Attention] {
                let p = ModelParams::init(3, 4, 3, pooling, &mut rng);
                let a = predict(&seq, &p).unwrap();
                let b = predict(&seq.padded(pad), &p).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
