//! Minimal feed-forward network with concrete dropout.
//!
//! This is the reward predictor behind the bandit agents and the trunk of the
//! supervised classifier. It is deliberately small: dense layers, relu or
//! identity activations, reverse-mode gradients recorded through an explicit
//! forward tape, and plain SGD. Dropout is applied to the input of every
//! layer; each site has one learnable drop-probability, parameterized in
//! logit space so it can never leave (0, 1).

mod concrete;
mod layer;
mod matrix;

pub use concrete::concrete_mask;
pub use layer::{Activation, DenseLayer};
pub use matrix::Matrix;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use concrete::{concrete_mask_unchecked, logit, mask_grad_wrt_logit, sigmoid, MASK_EPS};

/// Checkpoint format version; bump on any layout change.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Whether a forward pass samples dropout masks or runs the plain
/// deterministic function of the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMode {
    Sampled,
    Deterministic,
}

/// Architecture and regularization settings for a new network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// Initial drop probability for every dropout site.
    pub init_dropout_p: f64,
    /// Concrete-relaxation temperature.
    pub temperature: f64,
    /// Weight penalty strength (`l2_scale * ||W||^2` per layer).
    pub l2_scale: f64,
    /// Drop-probability penalty strength (entropy-style, scaled by fan-in).
    pub dropout_reg_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_dim: 1,
            hidden: vec![64, 64],
            output_dim: 2,
            init_dropout_p: 0.1,
            temperature: 0.1,
            l2_scale: 1e-6,
            dropout_reg_scale: 1e-5,
        }
    }
}

/// All learnable state of the reward predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<DenseLayer>,
    /// One logit per layer; `sigmoid(logit)` is that site's drop probability.
    dropout_logits: Vec<f64>,
    temperature: f64,
    l2_scale: f64,
    dropout_reg_scale: f64,
    /// Incremented on every parameter update; tapes are pinned to a revision.
    revision: u64,
}

/// Per-layer forward records needed to run the backward pass.
#[derive(Debug, Clone)]
struct LayerTape {
    /// Layer input before dropout.
    input: Matrix,
    /// Sampled keep-masks; `None` in deterministic mode (all-ones by contract).
    mask: Option<Matrix>,
    /// Input after mask and inverted-dropout scaling; `None` when no dropout.
    dropped: Option<Matrix>,
    pre_activation: Matrix,
}

/// Everything recorded during one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    revision: u64,
    mode: ForwardMode,
    batch: usize,
    layers: Vec<LayerTape>,
}

impl ForwardTape {
    pub fn mode(&self) -> ForwardMode {
        self.mode
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Sampled keep-mask for one layer, or `None` in deterministic mode.
    pub fn mask(&self, layer: usize) -> Option<&Matrix> {
        self.layers[layer].mask.as_ref()
    }
}

/// Gradients for every weight, bias, and dropout logit.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub d_weights: Vec<Vec<f64>>,
    pub d_bias: Vec<Vec<f64>>,
    pub d_dropout_logits: Vec<f64>,
}

impl Gradients {
    fn zeros(net: &Network) -> Self {
        Self {
            d_weights: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            d_bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            d_dropout_logits: vec![0.0; net.dropout_logits.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_weights.iter().flatten().all(|v| v.is_finite())
            && self.d_bias.iter().flatten().all(|v| v.is_finite())
            && self.d_dropout_logits.iter().all(|v| v.is_finite())
    }
}

impl Network {
    /// Builds an MLP per the config: relu hidden layers, identity output,
    /// Glorot-uniform weights, biases at zero.
    pub fn new<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Self> {
        if !(config.init_dropout_p > 0.0 && config.init_dropout_p < 1.0) {
            return Err(Error::Config(format!(
                "init_dropout_p must be in (0,1), got {}",
                config.init_dropout_p
            )));
        }
        if config.temperature.is_nan() || config.temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                config.temperature
            )));
        }
        if config.l2_scale < 0.0 || config.dropout_reg_scale < 0.0 {
            return Err(Error::Config(
                "regularizer scales must be nonnegative".into(),
            ));
        }

        let mut dims = vec![config.input_dim];
        dims.extend_from_slice(&config.hidden);
        dims.push(config.output_dim);

        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let activation = if i + 2 == dims.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layers.push(DenseLayer::glorot(dims[i], dims[i + 1], activation, rng)?);
        }
        let sites = layers.len();
        Ok(Self {
            layers,
            dropout_logits: vec![logit(config.init_dropout_p); sites],
            temperature: config.temperature,
            l2_scale: config.l2_scale,
            dropout_reg_scale: config.dropout_reg_scale,
            revision: 0,
        })
    }

    /// Assembles a network from explicit layers (mainly for tests and tools).
    pub fn from_layers(
        layers: Vec<DenseLayer>,
        init_dropout_p: f64,
        temperature: f64,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].fan_out != w[1].fan_in {
                return Err(Error::Shape {
                    what: "adjacent layers",
                    expected: w[0].fan_out,
                    got: w[1].fan_in,
                });
            }
        }
        let sites = layers.len();
        Ok(Self {
            layers,
            dropout_logits: vec![logit(init_dropout_p); sites],
            temperature,
            l2_scale: 0.0,
            dropout_reg_scale: 0.0,
            revision: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn dropout_logits(&self) -> &[f64] {
        &self.dropout_logits
    }

    /// Current drop probabilities, `sigmoid` of the logits.
    pub fn dropout_probs(&self) -> Vec<f64> {
        self.dropout_logits.iter().map(|&l| sigmoid(l)).collect()
    }

    pub fn set_dropout_logits(&mut self, logits: &[f64]) -> Result<()> {
        if logits.len() != self.dropout_logits.len() {
            return Err(Error::Shape {
                what: "dropout logits",
                expected: self.dropout_logits.len(),
                got: logits.len(),
            });
        }
        self.dropout_logits.copy_from_slice(logits);
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum::<usize>() + self.dropout_logits.len()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Mutable layer access for tests and targeted edits; bumps the revision
    /// so stale tapes are rejected.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.revision += 1;
        &mut self.layers
    }

    /// Runs the network on a batch, one row per example.
    ///
    /// In `Sampled` mode every layer input is multiplied by a fresh concrete
    /// keep-mask and rescaled by `1/(1-p)`; the masks are recorded in the
    /// tape. In `Deterministic` mode the output is a pure function of
    /// `(self, input)` and the RNG is never touched.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &Matrix,
        mode: ForwardMode,
        rng: &mut R,
    ) -> Result<(Matrix, ForwardTape)> {
        self.check_input(input)?;
        let mut tape = ForwardTape {
            revision: self.revision,
            mode,
            batch: input.rows(),
            layers: Vec::with_capacity(self.layers.len()),
        };
        let mut current = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (fed, mask, dropped) = match mode {
                ForwardMode::Deterministic => (current.clone(), None, None),
                ForwardMode::Sampled => {
                    let p = sigmoid(self.dropout_logits[i]);
                    let scale = 1.0 / (1.0 - p);
                    let mut mask = Matrix::zeros(current.rows(), current.cols());
                    let mut dropped = current.clone();
                    for (m, x) in mask
                        .as_mut_slice()
                        .iter_mut()
                        .zip(dropped.as_mut_slice().iter_mut())
                    {
                        let u: f64 = rng.random::<f64>().clamp(MASK_EPS, 1.0 - MASK_EPS);
                        let z = concrete_mask_unchecked(p, u, self.temperature);
                        *m = z;
                        *x *= z * scale;
                    }
                    (dropped.clone(), Some(mask), Some(dropped))
                }
            };

            let mut pre = Matrix::zeros(current.rows(), layer.fan_out);
            for r in 0..current.rows() {
                let x = fed.row(r);
                let out = pre.row_mut(r);
                for (o, out_v) in out.iter_mut().enumerate() {
                    let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                    let mut acc = layer.bias[o];
                    for (w, xv) in row.iter().zip(x.iter()) {
                        acc += w * xv;
                    }
                    *out_v = acc;
                }
            }

            let mut act = pre.clone();
            for v in act.as_mut_slice().iter_mut() {
                *v = layer.activation.apply(*v);
            }

            tape.layers.push(LayerTape {
                input: current,
                mask,
                dropped,
                pre_activation: pre,
            });
            current = act;
        }
        Ok((current, tape))
    }

    /// Deterministic forward without tape bookkeeping.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        // Deterministic mode never samples, so any RNG value works.
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let (out, _) = self.forward(input, ForwardMode::Deterministic, &mut unused)?;
        Ok(out)
    }

    /// Backpropagates `loss_grad` (dL/d-output, one row per example) through
    /// the tape. Mask noise is held fixed, so gradients flow through the
    /// sampled masks into the dropout logits. Regularizers are not included
    /// here; `sgd_step` adds them.
    pub fn backward(&self, tape: &ForwardTape, loss_grad: &Matrix) -> Result<Gradients> {
        if tape.revision != self.revision {
            return Err(Error::Tape(format!(
                "tape was recorded at revision {} but network is at {}",
                tape.revision, self.revision
            )));
        }
        if tape.layers.len() != self.layers.len() {
            return Err(Error::Tape(format!(
                "tape has {} layers, network has {}",
                tape.layers.len(),
                self.layers.len()
            )));
        }
        if loss_grad.rows() != tape.batch {
            return Err(Error::Shape {
                what: "loss_grad rows",
                expected: tape.batch,
                got: loss_grad.rows(),
            });
        }
        if loss_grad.cols() != self.output_dim() {
            return Err(Error::Shape {
                what: "loss_grad cols",
                expected: self.output_dim(),
                got: loss_grad.cols(),
            });
        }

        let mut grads = Gradients::zeros(self);
        let mut delta = loss_grad.clone();

        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let lt = &tape.layers[i];
            let fed = lt.dropped.as_ref().unwrap_or(&lt.input);

            // dL/d pre-activation.
            let mut delta_z = delta;
            for r in 0..tape.batch {
                let pre = lt.pre_activation.row(r);
                let dz = delta_z.row_mut(r);
                for (d, &z) in dz.iter_mut().zip(pre.iter()) {
                    *d *= layer.activation.grad(z);
                }
            }

            let dw = &mut grads.d_weights[i];
            let db = &mut grads.d_bias[i];
            for r in 0..tape.batch {
                let dz = delta_z.row(r);
                let x = fed.row(r);
                for (o, &dzo) in dz.iter().enumerate() {
                    db[o] += dzo;
                    let row = &mut dw[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (w, &xv) in row.iter_mut().zip(x.iter()) {
                        *w += dzo * xv;
                    }
                }
            }

            // dL/d layer-input, before undoing the dropout.
            let mut delta_x = Matrix::zeros(tape.batch, layer.fan_in);
            for r in 0..tape.batch {
                let dz = delta_z.row(r);
                let dx = delta_x.row_mut(r);
                for (o, &dzo) in dz.iter().enumerate() {
                    let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (d, &w) in dx.iter_mut().zip(row.iter()) {
                        *d += dzo * w;
                    }
                }
            }

            if let Some(mask) = &lt.mask {
                let p = sigmoid(self.dropout_logits[i]);
                let scale = 1.0 / (1.0 - p);
                let mut dlogit = 0.0;
                for r in 0..tape.batch {
                    let dx = delta_x.row_mut(r);
                    let m = mask.row(r);
                    let h = lt.input.row(r);
                    for j in 0..layer.fan_in {
                        // fed = h * m * scale, with both m and scale functions of p.
                        let dm = mask_grad_wrt_logit(m[j], self.temperature);
                        dlogit += dx[j] * h[j] * (dm * scale + m[j] * p * scale);
                        dx[j] *= m[j] * scale;
                    }
                }
                grads.d_dropout_logits[i] = dlogit;
            }
            delta = delta_x;
        }
        Ok(grads)
    }

    /// One SGD step: `param -= lr * (grad + regularizer grad)`.
    ///
    /// Regularizers: `l2_scale * ||W||^2` per layer, and per dropout site an
    /// entropy-style penalty `dropout_reg_scale * fan_in * (p ln p + (1-p) ln(1-p))`.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Train(format!(
                "learning rate must be finite and nonnegative, got {learning_rate}"
            )));
        }
        if grads.d_weights.len() != self.layers.len()
            || grads.d_dropout_logits.len() != self.dropout_logits.len()
        {
            return Err(Error::Shape {
                what: "gradient blocks",
                expected: self.layers.len(),
                got: grads.d_weights.len(),
            });
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if grads.d_weights[i].len() != layer.weights.len()
                || grads.d_bias[i].len() != layer.bias.len()
            {
                return Err(Error::Shape {
                    what: "gradient layer size",
                    expected: layer.weights.len(),
                    got: grads.d_weights[i].len(),
                });
            }
        }
        if !grads.is_finite() {
            let block = grads
                .d_weights
                .iter()
                .position(|w| w.iter().any(|v| !v.is_finite()))
                .map(|i| format!("weights of layer {i}"))
                .or_else(|| {
                    grads
                        .d_bias
                        .iter()
                        .position(|b| b.iter().any(|v| !v.is_finite()))
                        .map(|i| format!("bias of layer {i}"))
                })
                .unwrap_or_else(|| "dropout logits".into());
            return Err(Error::Train(format!("non-finite gradient in {block}")));
        }

        for (i, layer) in self.layers.iter_mut().enumerate() {
            let l2 = self.l2_scale;
            for (w, &g) in layer.weights.iter_mut().zip(grads.d_weights[i].iter()) {
                *w -= learning_rate * (g + 2.0 * l2 * *w);
            }
            for (b, &g) in layer.bias.iter_mut().zip(grads.d_bias[i].iter()) {
                *b -= learning_rate * g;
            }

            let lg = &mut self.dropout_logits[i];
            let p = sigmoid(*lg);
            let reg = self.dropout_reg_scale * layer.fan_in as f64 * logit(p) * p * (1.0 - p);
            *lg -= learning_rate * (grads.d_dropout_logits[i] + reg);
        }
        self.revision += 1;
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path, init_seed: Option<u64>) -> Result<()> {
        let file = CheckpointFile {
            format_version: CHECKPOINT_VERSION,
            init_seed,
            network: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<(Self, Option<u64>)> {
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile = serde_json::from_str(&text)?;
        if file.format_version != CHECKPOINT_VERSION {
            return Err(Error::Corpus(format!(
                "checkpoint format version {} unsupported (expected {})",
                file.format_version, CHECKPOINT_VERSION
            )));
        }
        Ok((file.network, file.init_seed))
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::Shape {
                what: "network input",
                expected: self.input_dim(),
                got: input.cols(),
            });
        }
        if input.rows() == 0 {
            return Err(Error::Validation("batch must have at least one row".into()));
        }
        if !input.is_finite() {
            return Err(Error::Validation(
                "network input contains non-finite values".into(),
            ));
        }
        Ok(())
    }
}

/// On-disk checkpoint container.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    init_seed: Option<u64>,
    network: Network,
}
