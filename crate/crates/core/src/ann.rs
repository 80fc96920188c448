//! Multilayer-perceptron monitor: sizing, initialization, Adam training with
//! early stopping, prediction and model files.

use std::path::Path;

use rand::seq::SliceRandom;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::digest_hex;
use crate::measurement::MeasurementSet;
use crate::seeds::{self, Stream};

pub const MODEL_FORMAT: u32 = 1;
const BOTTOU_GAIN: f64 = 2.38;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }
}

/// Neurons per hidden layer: `round(2/3 * n_in + n_out)`.
pub fn hidden_size(n_in: usize, n_out: usize) -> Result<usize> {
    if n_in == 0 || n_out == 0 {
        return Err(Error::InvalidArchitecture(format!(
            "n_in and n_out must be >= 1 (got {n_in}, {n_out})"
        )));
    }
    Ok((2.0 * n_in as f64 / 3.0 + n_out as f64).round() as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnArchitecture {
    pub n_in: usize,
    pub n_out: usize,
    pub n_hidden_layers: usize,
    pub layer_size_multiplier: usize,
    /// Fixed hidden width replacing the sizing rule.
    #[serde(default)]
    pub hidden_width: Option<usize>,
    #[serde(default)]
    pub hidden_activation: Activation,
    /// Trailing inputs that carry switch states; they skip normalization.
    #[serde(default)]
    pub n_switch_inputs: usize,
}

impl AnnArchitecture {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        AnnArchitecture {
            n_in,
            n_out,
            n_hidden_layers: 3,
            layer_size_multiplier: 1,
            hidden_width: None,
            hidden_activation: Activation::Relu,
            n_switch_inputs: 0,
        }
    }

    pub fn with_switch_inputs(mut self, n: usize) -> Self {
        self.n_switch_inputs = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        hidden_size(self.n_in, self.n_out)?;
        if self.layer_size_multiplier == 0 {
            return Err(Error::InvalidArchitecture("layer_size_multiplier must be >= 1".into()));
        }
        if self.hidden_width == Some(0) {
            return Err(Error::InvalidArchitecture("hidden width must be >= 1".into()));
        }
        if self.n_switch_inputs > self.n_in {
            return Err(Error::InvalidArchitecture("more switch inputs than inputs".into()));
        }
        Ok(())
    }

    pub fn hidden_neurons(&self) -> Result<usize> {
        match self.hidden_width {
            Some(w) => Ok(w),
            None => Ok(hidden_size(self.n_in, self.n_out)? * self.layer_size_multiplier),
        }
    }

    /// Widths of all layers from input to output.
    pub fn layer_sizes(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let h = self.hidden_neurons()?;
        let mut sizes = vec![self.n_in];
        sizes.extend(std::iter::repeat_n(h, self.n_hidden_layers));
        sizes.push(self.n_out);
        Ok(sizes)
    }

    pub fn n_params(&self) -> Result<usize> {
        Ok(self.layer_sizes()?.windows(2).map(|w| w[0] * w[1] + w[1]).sum())
    }
}

/// Dense layer with a row-major `n_out x n_in` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    #[inline]
    fn affine(&self, x: &[f64], z: &mut [f64]) {
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            *zo = self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    fn fill(&mut self, value: f64) {
        self.w.iter_mut().chain(self.b.iter_mut()).for_each(|p| *p = value);
    }
}

/// Per-feature affine map `(x - mean) / sd`; identity where `sd == 1, mean == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Features with zero spread in the fitting data.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Standardizer {
            mean: vec![0.0; n],
            sd: vec![1.0; n],
            constant: vec![false; n],
        }
    }

    /// Fits on `rows`; the last `n_passthrough` columns stay unscaled.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, n: usize, n_passthrough: usize) -> Self {
        let mut s = Self::identity(n);
        let scaled = n - n_passthrough;
        let count = rows.clone().count() as f64;
        if count == 0.0 {
            return s;
        }
        for r in rows.clone() {
            for j in 0..scaled {
                s.mean[j] += r[j];
            }
        }
        s.mean[..scaled].iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; scaled];
        for r in rows {
            for j in 0..scaled {
                var[j] += (r[j] - s.mean[j]).powi(2);
            }
        }
        for j in 0..scaled {
            let sd = (var[j] / count).sqrt();
            if sd > 1e-12 * s.mean[j].abs().max(1.0) {
                s.sd[j] = sd;
            } else {
                s.constant[j] = true;
            }
        }
        s
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.mean[j]) / self.sd[j];
        }
    }

    pub fn inverse(&self, y: &[f64], out: &mut [f64]) {
        for j in 0..y.len() {
            out[j] = y[j] * self.sd[j] + self.mean[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnModel {
    pub format: u32,
    pub arch: AnnArchitecture,
    pub layers: Vec<Layer>,
    pub input_scaling: Standardizer,
    pub output_scaling: Standardizer,
    pub seed: u64,
    /// Measurement spec the model was trained for.
    pub spec_hash: Option<String>,
    pub training_fingerprint: Option<String>,
    /// Switch-state vectors present in the training data.
    pub seen_topologies: Vec<Vec<bool>>,
}

/// Bottou initialization: weights uniform in `±2.38 / sqrt(fan_in)`, zero biases.
pub fn init_model(arch: &AnnArchitecture, seed: u64) -> Result<AnnModel> {
    let sizes = arch.layer_sizes()?;
    let mut rng = seeds::rng(seed, Stream::Init, &[]);
    let layers = sizes
        .windows(2)
        .map(|w| {
            let mut layer = Layer::zeros(w[0], w[1]);
            let bound = BOTTOU_GAIN / (w[0] as f64).sqrt();
            layer.w.iter_mut().for_each(|p| *p = rng.random_range(-bound..=bound));
            layer
        })
        .collect();
    Ok(AnnModel {
        format: MODEL_FORMAT,
        arch: arch.clone(),
        layers,
        input_scaling: Standardizer::identity(arch.n_in),
        output_scaling: Standardizer::identity(arch.n_out),
        seed,
        spec_hash: None,
        training_fingerprint: None,
        seen_topologies: Vec::new(),
    })
}

/// Buffers for one forward/backward pass.
struct Workspace {
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(layers: &[Layer]) -> Self {
        let mut a = vec![vec![0.0; layers[0].n_in]];
        a.extend(layers.iter().map(|l| vec![0.0; l.n_out]));
        Workspace {
            z: layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
            delta: layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
            a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: Vec<f64>,
    /// The switch states were never seen during training.
    pub unseen_topology: bool,
}

impl AnnModel {
    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            Activation::Linear
        } else {
            self.arch.hidden_activation
        }
    }

    /// Forward pass on already normalized input; result in `ws.a.last()`.
    fn forward_ws(&self, x: &[f64], ws: &mut Workspace) {
        ws.a[0].copy_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, next) = ws.a.split_at_mut(l + 1);
            layer.affine(&prev[l], &mut ws.z[l]);
            let act = self.activation(l);
            for (a, &z) in next[0].iter_mut().zip(&ws.z[l]) {
                *a = act.apply(z);
            }
        }
    }

    /// Accumulates the gradient of `0.5 * scale * |out - y|^2` into `grad`.
    fn backward_ws(&self, y: &[f64], scale: f64, ws: &mut Workspace, grad: &mut [Layer]) {
        let last = self.layers.len() - 1;
        for (o, d) in ws.delta[last].iter_mut().enumerate() {
            *d = scale * (ws.a[last + 1][o] - y[o]);
        }
        self.propagate(ws, grad);
    }

    /// Back-propagates the output deltas in `ws.delta.last()` into `grad`.
    fn propagate(&self, ws: &mut Workspace, grad: &mut [Layer]) {
        let last = self.layers.len() - 1;
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let g = &mut grad[l];
            let input = &ws.a[l];
            for o in 0..layer.n_out {
                let d = ws.delta[l][o];
                if d == 0.0 {
                    continue;
                }
                g.b[o] += d;
                let row = &mut g.w[o * layer.n_in..(o + 1) * layer.n_in];
                row.iter_mut().zip(input).for_each(|(gw, x)| *gw += d * x);
            }
            if l > 0 {
                let act = self.activation(l - 1);
                let (lower, upper) = ws.delta.split_at_mut(l);
                let below = &mut lower[l - 1];
                for (i, bi) in below.iter_mut().enumerate() {
                    let s: f64 = (0..layer.n_out).map(|o| layer.w[o * layer.n_in + i] * upper[0][o]).sum();
                    *bi = s * act.derivative(ws.z[l - 1][i], ws.a[l][i]);
                }
            }
        }
    }

    /// Output of a normalized input and the Jacobian of every output with
    /// respect to the parameters, row-major in `params()` order.
    fn jacobian_ws(&self, x: &[f64], ws: &mut Workspace, grad: &mut [Layer], jac: &mut [f64]) {
        self.forward_ws(x, ws);
        let last = self.layers.len() - 1;
        let n_params = jac.len() / self.arch.n_out;
        for o in 0..self.arch.n_out {
            grad.iter_mut().for_each(|g| g.fill(0.0));
            ws.delta[last].iter_mut().enumerate().for_each(|(k, d)| *d = if k == o { 1.0 } else { 0.0 });
            self.propagate(ws, grad);
            let row = &mut jac[o * n_params..(o + 1) * n_params];
            let flat = grad.iter().flat_map(|l| l.w.iter().chain(&l.b));
            row.iter_mut().zip(flat).for_each(|(r, g)| *r = *g);
        }
    }

    /// Raw network output for a normalized input, without output scaling.
    pub fn forward_normalized(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = Workspace::new(&self.layers);
        self.forward_ws(x, &mut ws);
        ws.a.last().unwrap().clone()
    }

    /// MSE (mean over samples and outputs) of the raw network on normalized
    /// data, and its gradient.
    pub fn loss_and_gradient(&self, x: &[Vec<f64>], y: &[Vec<f64>]) -> (f64, Vec<Layer>) {
        let mut ws = Workspace::new(&self.layers);
        let mut grad: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect();
        let n_out = self.arch.n_out as f64;
        let scale = 2.0 / (x.len() as f64 * n_out);
        let mut loss = 0.0;
        for (xi, yi) in x.iter().zip(y) {
            self.forward_ws(xi, &mut ws);
            loss += ws.a.last().unwrap().iter().zip(yi).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            self.backward_ws(yi, scale, &mut ws, &mut grad);
        }
        (loss / (x.len() as f64 * n_out), grad)
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter();
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|x| *x = *it.next().unwrap());
        }
    }

    /// Estimate for a raw feature vector (measurements then switch bits).
    pub fn predict_features(&self, features: &[f64]) -> Vec<f64> {
        let mut ws = Workspace::new(&self.layers);
        self.predict_ws(features, &mut ws)
    }

    fn predict_ws(&self, features: &[f64], ws: &mut Workspace) -> Vec<f64> {
        let mut xn = vec![0.0; features.len()];
        self.input_scaling.forward(features, &mut xn);
        self.forward_ws(&xn, ws);
        let mut out = vec![0.0; self.arch.n_out];
        self.output_scaling.inverse(ws.a.last().unwrap(), &mut out);
        out
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut ws = Workspace::new(&self.layers);
        rows.iter().map(|r| self.predict_ws(r, &mut ws)).collect()
    }

    pub fn is_seen_topology(&self, switch_states: &[bool]) -> bool {
        self.seen_topologies.iter().any(|t| t == switch_states)
    }

    pub fn predict(&self, ms: &MeasurementSet) -> Result<Prediction> {
        if let Some(h) = &self.spec_hash {
            if *h != ms.spec_hash {
                return Err(Error::SpecHashMismatch {
                    expected: h.clone(),
                    got: ms.spec_hash.clone(),
                });
            }
        }
        let features = ms.features();
        if features.len() != self.arch.n_in {
            return Err(Error::Dimension(format!(
                "model expects {} inputs, measurement set has {}",
                self.arch.n_in,
                features.len()
            )));
        }
        Ok(Prediction {
            values: self.predict_features(&features),
            unseen_topology: !self.is_seen_topology(&ms.switch_states),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::parse(path.display().to_string(), e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ctx = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: AnnModel = serde_json::from_str(&text).map_err(|e| Error::parse(&ctx, e))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::parse(&ctx, format!("unsupported model format {}", model.format)));
        }
        let sizes = model.arch.layer_sizes()?;
        let chained = model.layers.len() + 1 == sizes.len()
            && model.layers.iter().zip(sizes.windows(2)).all(|(l, w)| {
                l.n_in == w[0] && l.n_out == w[1] && l.w.len() == w[0] * w[1] && l.b.len() == w[1]
            });
        if !chained {
            return Err(Error::parse(&ctx, "layer dimensions do not match the architecture"));
        }
        Ok(model)
    }

    /// Loads a model and fails unless it was trained for `spec_hash`.
    pub fn load_for_spec(path: impl AsRef<Path>, spec_hash: &str) -> Result<Self> {
        let model = Self::load(path)?;
        match &model.spec_hash {
            Some(h) if h == spec_hash => Ok(model),
            other => Err(Error::SpecHashMismatch {
                expected: spec_hash.to_string(),
                got: other.clone().unwrap_or_default(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub patience: usize,
    /// Samples per Adam step; 0 means full batch.
    pub batch_size: usize,
    /// Standardize targets with training statistics instead of fitting them raw.
    pub standardize_targets: bool,
    #[serde(default)]
    pub optimizer: Optimizer,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
    /// Full-batch damped Gauss-Newton steps; only practical for small networks.
    /// `learning_rate` and `batch_size` are ignored.
    LevenbergMarquardt,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 150,
            learning_rate: 0.001,
            validation_fraction: 0.25,
            patience: 20,
            batch_size: 32,
            standardize_targets: true,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || self.max_epochs == 0 {
            return Err(Error::Config("learning_rate and max_epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean squared error in target units over the epoch's batches.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, layers: &mut [Layer], grad: &[Layer]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let params = layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()));
        let grads = grad.iter().flat_map(|l| l.w.iter().chain(&l.b));
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

struct LevenbergMarquardt {
    mu: f64,
}

impl LevenbergMarquardt {
    const MU_INIT: f64 = 1e-3;
    const MU_DEC: f64 = 0.1;
    const MU_INC: f64 = 10.0;
    const MU_MAX: f64 = 1e10;
    const CHUNK: usize = 128;

    fn sse(model: &AnnModel, xn: &[Vec<f64>], yn: &[Vec<f64>], idx: &[usize], ws: &mut Workspace) -> f64 {
        idx.iter()
            .map(|&i| {
                model.forward_ws(&xn[i], ws);
                ws.a.last().unwrap().iter().zip(&yn[i]).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum()
    }

    /// One accepted step (or none once the damping saturates); returns
    /// whether the parameters changed.
    fn step(&mut self, model: &mut AnnModel, xn: &[Vec<f64>], yn: &[Vec<f64>], idx: &[usize], ws: &mut Workspace) -> bool {
        let n_out = model.arch.n_out;
        let n_params: usize = model.layers.iter().map(|l| l.w.len() + l.b.len()).sum();
        let mut grad: Vec<Layer> = model.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect();
        let mut jtj = DMatrix::<f64>::zeros(n_params, n_params);
        let mut jte = DVector::<f64>::zeros(n_params);
        let mut sse = 0.0;
        let mut buf = vec![0.0; n_out * n_params];
        for chunk in idx.chunks(Self::CHUNK) {
            let mut jac = DMatrix::<f64>::zeros(chunk.len() * n_out, n_params);
            let mut err = DVector::<f64>::zeros(chunk.len() * n_out);
            for (k, &i) in chunk.iter().enumerate() {
                model.jacobian_ws(&xn[i], ws, &mut grad, &mut buf);
                for o in 0..n_out {
                    let r = ws.a.last().unwrap()[o] - yn[i][o];
                    err[k * n_out + o] = r;
                    sse += r * r;
                    for p in 0..n_params {
                        jac[(k * n_out + o, p)] = buf[o * n_params + p];
                    }
                }
            }
            jtj += jac.tr_mul(&jac);
            jte += jac.tr_mul(&err);
        }
        let theta = model.params();
        while self.mu <= Self::MU_MAX {
            let mut a = jtj.clone();
            for p in 0..n_params {
                a[(p, p)] += self.mu;
            }
            let Some(chol) = a.cholesky() else {
                self.mu *= Self::MU_INC;
                continue;
            };
            let delta = chol.solve(&jte);
            let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t - d).collect();
            model.set_params(&trial);
            let trial_sse = Self::sse(model, xn, yn, idx, ws);
            if trial_sse < sse {
                self.mu *= Self::MU_DEC;
                return true;
            }
            self.mu *= Self::MU_INC;
        }
        model.set_params(&theta);
        false
    }
}

/// Order-sensitive digest of a dataset.
pub fn dataset_fingerprint(x: &[Vec<f64>], y: &[Vec<f64>]) -> String {
    let mut bytes = Vec::with_capacity(8 * (x.len() + y.len()) * 16);
    for row in x.iter().chain(y) {
        for v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.push(b'\n');
    }
    digest_hex(&bytes)
}

/// Trains `model` on MSE with the configured optimizer, holding out a seeded validation split,
/// and restores the weights of the best validation epoch.
pub fn train(mut model: AnnModel, x: &[Vec<f64>], y: &[Vec<f64>], cfg: &TrainConfig) -> Result<(AnnModel, TrainHistory)> {
    cfg.validate()?;
    let (n_in, n_out) = (model.arch.n_in, model.arch.n_out);
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} input rows vs {} target rows", x.len(), y.len())));
    }
    if x.iter().any(|r| r.len() != n_in) || y.iter().any(|r| r.len() != n_out) {
        return Err(Error::Dimension(format!("rows must have {n_in} inputs and {n_out} targets")));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut seeds::rng(cfg.seed, Stream::Shuffle, &[0]));
    let n_val = ((x.len() as f64) * cfg.validation_fraction).round() as usize;
    if n_val == 0 || n_val >= x.len() {
        return Err(Error::Config(format!(
            "{} samples cannot be split with validation fraction {}",
            x.len(),
            cfg.validation_fraction
        )));
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let n_switch = model.arch.n_switch_inputs;
    model.input_scaling = Standardizer::fit(train_idx.iter().map(|&i| x[i].as_slice()), n_in, n_switch);
    model.output_scaling = if cfg.standardize_targets {
        Standardizer::fit(train_idx.iter().map(|&i| y[i].as_slice()), n_out, 0)
    } else {
        Standardizer::identity(n_out)
    };
    let mut topologies: Vec<Vec<bool>> = x.iter().map(|r| r[n_in - n_switch..].iter().map(|&b| b > 0.5).collect()).collect();
    topologies.sort();
    topologies.dedup();
    model.seen_topologies = topologies;
    model.training_fingerprint = Some(dataset_fingerprint(x, y));

    let normalize = |rows: &[Vec<f64>], s: &Standardizer| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let mut out = vec![0.0; r.len()];
                s.forward(r, &mut out);
                out
            })
            .collect()
    };
    let xn = normalize(x, &model.input_scaling);
    let yn = normalize(y, &model.output_scaling);
    // Squared target scale converts normalized errors back to target units.
    let unit_sq: Vec<f64> = model.output_scaling.sd.iter().map(|s| s * s).collect();

    let batch = if cfg.batch_size == 0 || cfg.optimizer == Optimizer::LevenbergMarquardt {
        train_idx.len()
    } else {
        cfg.batch_size.min(train_idx.len())
    };
    let mut lm = LevenbergMarquardt {
        mu: LevenbergMarquardt::MU_INIT,
    };
    let mut adam = Adam::new(model.arch.n_params()?, cfg.learning_rate);
    let mut grad: Vec<Layer> = model.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect();
    let mut ws = Workspace::new(&model.layers);
    let mut shuffle_rng = seeds::rng(cfg.seed, Stream::Shuffle, &[1]);

    let sq_err = |out: &[f64], target: &[f64]| -> f64 {
        out.iter().zip(target).zip(&unit_sq).map(|((a, b), u)| (a - b).powi(2) * u).sum::<f64>()
    };

    let mut history = TrainHistory {
        best_val_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best_layers = model.layers.clone();
    let mut streak = 0;
    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut train_sum = 0.0;
        let mut converged = false;
        match cfg.optimizer {
            Optimizer::Adam => {
                for chunk in train_idx.chunks(batch) {
                    grad.iter_mut().for_each(|g| g.fill(0.0));
                    let scale = 2.0 / (chunk.len() * n_out) as f64;
                    for &i in chunk {
                        model.forward_ws(&xn[i], &mut ws);
                        train_sum += sq_err(ws.a.last().unwrap(), &yn[i]);
                        model.backward_ws(&yn[i], scale, &mut ws, &mut grad);
                    }
                    adam.step(&mut model.layers, &grad);
                }
            }
            Optimizer::LevenbergMarquardt => {
                converged = !lm.step(&mut model, &xn, &yn, &train_idx, &mut ws);
                for &i in &train_idx {
                    model.forward_ws(&xn[i], &mut ws);
                    train_sum += sq_err(ws.a.last().unwrap(), &yn[i]);
                }
            }
        }
        let train_loss = train_sum / (train_idx.len() * n_out) as f64;
        let mut val_sum = 0.0;
        for &i in val_idx {
            model.forward_ws(&xn[i], &mut ws);
            val_sum += sq_err(ws.a.last().unwrap(), &yn[i]);
        }
        let val_loss = val_sum / (val_idx.len() * n_out) as f64;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best_layers.clone_from(&model.layers);
            streak = 0;
        } else {
            streak += 1;
            if streak > cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
        if converged {
            history.stopped_early = true;
            break;
        }
    }
    model.layers = best_layers;
    log::debug!(
        "trained {} epochs, best epoch {} (val mse {:.3e})",
        history.epochs.len(),
        history.best_epoch,
        history.best_val_loss
    );
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizing_rule() {
        assert_eq!(hidden_size(18, 15).unwrap(), 27);
        assert_eq!(hidden_size(3, 3).unwrap(), 5);
        assert!(hidden_size(0, 3).is_err());
        let arch = AnnArchitecture::new(18, 15);
        assert_eq!(arch.layer_sizes().unwrap(), vec![18, 27, 27, 27, 15]);
    }

    #[test]
    fn bottou_bounds() {
        let mut arch = AnnArchitecture::new(100, 100);
        arch.n_hidden_layers = 0;
        let m = init_model(&arch, 5).unwrap();
        let w = &m.layers[0].w;
        assert_eq!(w.len(), 10_000);
        let max = w.iter().cloned().fold(f64::MIN, f64::max);
        let min = w.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max <= 0.238 && max > 0.237);
        assert!((-0.238..-0.237).contains(&min));
        assert!(m.layers[0].b.iter().all(|&b| b == 0.0));

        let mut one = AnnArchitecture::new(1, 1);
        one.hidden_width = Some(50);
        let m = init_model(&one, 1).unwrap();
        assert!(m.layers[0].w.iter().all(|w| w.abs() <= 2.38));
        assert_eq!(init_model(&one, 1).unwrap(), m);
        assert_ne!(init_model(&one, 2).unwrap(), m);
    }

    #[test]
    fn single_layer_is_affine_map() {
        let mut arch = AnnArchitecture::new(3, 2);
        arch.n_hidden_layers = 0;
        let m = init_model(&arch, 3).unwrap();
        let x = [0.3, -1.2, 2.0];
        let out = m.forward_normalized(&x);
        for o in 0..2 {
            let expect: f64 = (0..3).map(|i| m.layers[0].w[o * 3 + i] * x[i]).sum();
            assert!((out[o] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn standardizer_passthrough_and_constant() {
        let rows = [vec![1.0, 5.0, 1.0], vec![3.0, 5.0, 0.0]];
        let s = Standardizer::fit(rows.iter().map(|r| r.as_slice()), 3, 1);
        assert_eq!(s.mean, vec![2.0, 5.0, 0.0]);
        assert_eq!(s.sd, vec![1.0, 1.0, 1.0]);
        assert_eq!(s.constant, vec![false, true, false]);
    }

    #[test]
    fn patience_zero_stops_on_first_plateau() {
        let arch = AnnArchitecture::new(2, 1);
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * 0.5 - r[1]]).collect();
        let cfg = TrainConfig {
            patience: 0,
            max_epochs: 1000,
            learning_rate: 0.5,
            ..Default::default()
        };
        let (_, h) = train(init_model(&arch, 1).unwrap(), &x, &y, &cfg).unwrap();
        let n = h.epochs.len();
        assert!(h.stopped_early);
        assert!(h.epochs[n - 1].val_loss >= h.epochs[n - 2].val_loss);
        assert!(h.epochs[..n - 1].windows(2).all(|w| w[1].val_loss < w[0].val_loss));
    }

    #[test]
    fn non_finite_targets_fail_with_epoch() {
        let arch = AnnArchitecture::new(1, 1);
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let mut y: Vec<Vec<f64>> = x.clone();
        y[3][0] = f64::INFINITY;
        let cfg = TrainConfig {
            standardize_targets: false,
            ..Default::default()
        };
        let r = train(init_model(&arch, 1).unwrap(), &x, &y, &cfg);
        assert!(matches!(r, Err(Error::NonFiniteLoss { epoch: 1 })));
    }
}
