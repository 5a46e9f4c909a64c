//! Multi-layer perceptron for binary trade-link classification.
//!
//! Hidden layers use ReLU; the output layer emits one logit squashed by a
//! sigmoid. Training is plain mini-batch gradient descent on mean binary
//! cross-entropy plus an optional L2 penalty on the weight matrices.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::EncodedMatrix;
use crate::{rng, Error, Result};

const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Weights are `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(out: usize, inp: usize) -> Self {
        Layer {
            w: vec![vec![0.0; inp]; out],
            b: vec![0.0; out],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    pub fn out_dim(&self) -> usize {
        self.b.len()
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.w.iter().zip(&self.b).map(|(row, b)| {
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPParams {
    pub layers: Vec<Layer>,
    pub hidden_activation: Activation,
}

/// Same shape as [`MLPParams::layers`].
pub type MLPGradient = Vec<Layer>;

fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    100
}
fn default_batch_size() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_hidden")]
    pub hidden_sizes: Vec<usize>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub l2_penalty: f64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            hidden_sizes: default_hidden(),
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            seed,
            l2_penalty: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("hidden layer sizes must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("mlp.learning_rate must be > 0"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("mlp.epochs and mlp.batch_size must be >= 1"));
        }
        if !(self.l2_penalty >= 0.0) {
            return Err(Error::invalid("mlp.l2_penalty must be >= 0"));
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `(ln p, ln(1 - p))` for `p = sigmoid(z)` clamped to
/// `[PROB_CLAMP, 1 - PROB_CLAMP]`.
fn clamped_log_probs(z: f64) -> (f64, f64) {
    let lo = PROB_CLAMP.ln();
    let hi = (-PROB_CLAMP).ln_1p();
    ((-softplus(-z)).clamp(lo, hi), (-softplus(z)).clamp(lo, hi))
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(input_dim: usize, config: &TrainConfig) -> Result<MLPParams> {
    if input_dim == 0 {
        return Err(Error::invalid("input_dim must be >= 1"));
    }
    config.validate()?;
    let mut rng = rng::seeded(config.seed);
    let mut sizes = vec![input_dim];
    sizes.extend(&config.hidden_sizes);
    sizes.push(1);
    let layers = sizes
        .windows(2)
        .map(|io| {
            let (inp, out) = (io[0], io[1]);
            let limit = (6.0 / (inp + out) as f64).sqrt();
            let mut layer = Layer::zeros(out, inp);
            for w in layer.w.iter_mut().flatten() {
                *w = rng.random_range(-limit..=limit);
            }
            layer
        })
        .collect();
    Ok(MLPParams {
        layers,
        hidden_activation: Activation::Relu,
    })
}

/// Per-sample activations kept for backpropagation.
struct Trace {
    /// `acts[0]` is the input; `acts[t+1]` the output of hidden layer `t`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    prob: f64,
}

impl MLPParams {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::in_dim)
    }

    /// Checks that layer dimensions chain and end in a single output.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("MLP has no layers"));
        }
        for pair in self.layers.windows(2) {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        for layer in &self.layers {
            let inp = layer.in_dim();
            if layer.w.len() != layer.b.len() || layer.w.iter().any(|r| r.len() != inp) {
                return Err(Error::invalid("ragged MLP weight matrix"));
            }
        }
        if self.layers.last().map(Layer::out_dim) != Some(1) {
            return Err(Error::invalid("MLP output layer must have one unit"));
        }
        Ok(())
    }

    /// Probability of the positive class.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.probability(x))
    }

    /// [`forward`](Self::forward) without the dimension check.
    pub(crate) fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    fn logit(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (t, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if t < last {
                next.iter_mut().for_each(|z| *z = z.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let last = self.layers.len() - 1;
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(last);
        let mut logit = 0.0;
        for (t, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(&acts[t], &mut z);
            if t < last {
                acts.push(z.iter().map(|v| v.max(0.0)).collect());
                pre.push(z);
            } else {
                logit = z[0];
            }
        }
        Trace {
            acts,
            pre,
            prob: sigmoid(logit),
        }
    }

    fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().flatten())
            .map(|w| w * w)
            .sum()
    }

    /// Mean binary cross-entropy plus `l2_penalty * |W|^2 / 2` over all
    /// weight matrices. Probabilities are clamped to `[1e-12, 1 - 1e-12]`.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[f64], l2_penalty: f64) -> Result<f64> {
        check_batch(self, xs, ys)?;
        let total: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| {
                let (ln_p, ln_q) = clamped_log_probs(self.logit(x));
                -(y * ln_p + (1.0 - y) * ln_q)
            })
            .sum();
        Ok(total / xs.len() as f64 + 0.5 * l2_penalty * self.weight_sq_norm())
    }

    /// Backpropagated gradient of [`loss`](Self::loss). The output error is
    /// `p - y`, the derivative of the unclamped cross-entropy with respect to
    /// the logit.
    pub fn grad(&self, xs: &[Vec<f64>], ys: &[f64], l2_penalty: f64) -> Result<MLPGradient> {
        check_batch(self, xs, ys)?;
        let mut g: MLPGradient = self
            .layers
            .iter()
            .map(|l| Layer::zeros(l.out_dim(), l.in_dim()))
            .collect();
        let scale = 1.0 / xs.len() as f64;
        for (x, &y) in xs.iter().zip(ys) {
            self.accumulate(x, y, scale, &mut g);
        }
        if l2_penalty != 0.0 {
            for (gl, l) in g.iter_mut().zip(&self.layers) {
                for (gw, w) in gl.w.iter_mut().flatten().zip(l.w.iter().flatten()) {
                    *gw += l2_penalty * w;
                }
            }
        }
        Ok(g)
    }

    fn accumulate(&self, x: &[f64], y: f64, scale: f64, g: &mut MLPGradient) {
        let tr = self.trace(x);
        let mut delta = vec![(tr.prob - y) * scale];
        for t in (0..self.layers.len()).rev() {
            let input = &tr.acts[t];
            for (o, &dz) in delta.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                g[t].b[o] += dz;
                for (gw, a) in g[t].w[o].iter_mut().zip(input) {
                    *gw += dz * a;
                }
            }
            if t == 0 {
                break;
            }
            let layer = &self.layers[t];
            let pre = &tr.pre[t - 1];
            let mut back = vec![0.0; layer.in_dim()];
            for (row, &dz) in layer.w.iter().zip(&delta) {
                for (b, w) in back.iter_mut().zip(row) {
                    *b += w * dz;
                }
            }
            for (b, &z) in back.iter_mut().zip(pre) {
                if z <= 0.0 {
                    *b = 0.0;
                }
            }
            delta = back;
        }
    }

    fn apply(&mut self, g: &MLPGradient, lr: f64) {
        for (l, gl) in self.layers.iter_mut().zip(g) {
            for (w, gw) in l.w.iter_mut().flatten().zip(gl.w.iter().flatten()) {
                *w -= lr * gw;
            }
            for (b, gb) in l.b.iter_mut().zip(&gl.b) {
                *b -= lr * gb;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: MLPParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }
}

fn check_batch(params: &MLPParams, xs: &[Vec<f64>], ys: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let d = params.input_dim();
    if let Some(x) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    Ok(())
}

fn require_binary(matrix: &EncodedMatrix) -> Result<()> {
    if let Some(i) = matrix.target.iter().position(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::invalid(format!(
            "non-binary target {} at row {i}",
            matrix.target[i]
        )));
    }
    Ok(())
}

/// Mini-batch gradient descent; batch order is reshuffled every epoch.
pub fn train(matrix: &EncodedMatrix, config: &TrainConfig) -> Result<MLPParams> {
    require_binary(matrix)?;
    if matrix.n_rows < config.batch_size {
        return Err(Error::invalid(format!(
            "{} rows is fewer than batch_size {}",
            matrix.n_rows, config.batch_size
        )));
    }
    let mut params = init_params(matrix.n_cols, config)?;
    // Separate stream so init and shuffling don't share draws.
    let mut rng = rng::seeded_stream(config.seed, 1);
    let xs = matrix.dense_rows();
    let ys = &matrix.target;
    let mut order: Vec<usize> = (0..matrix.n_rows).collect();
    let mut bx = Vec::with_capacity(config.batch_size);
    let mut by = Vec::with_capacity(config.batch_size);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.push(xs[i].clone());
                by.push(ys[i]);
            }
            let g = params.grad(&bx, &by, config.l2_penalty)?;
            params.apply(&g, config.learning_rate);
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Metrics {
    /// Zero denominators give 0 for precision, recall and f1.
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            precision,
            recall,
            f1,
            tp,
            fp,
            tn,
            fn_,
        }
    }
}

/// Confusion counts at threshold 0.5; `p == 0.5` predicts positive.
pub fn evaluate(params: &MLPParams, matrix: &EncodedMatrix) -> Result<Metrics> {
    require_binary(matrix)?;
    if matrix.n_cols != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: matrix.n_cols,
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for i in 0..matrix.n_rows {
        let predicted = params.probability(&matrix.dense_row(i)) >= 0.5;
        match (predicted, matrix.target[i] == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_))
}
