//! Decision agents.
//!
//! Four families choose an endpointing configuration per utterance:
//!
//! - static policies (always-standard / always-relaxed),
//! - the hindsight oracle (reads the label; evaluation upper bound),
//! - an offline supervised classifier trained on labeled logs,
//! - an online deep contextual bandit that sees only (features, chosen
//!   action, realized reward) and never touches ground truth.
//!
//! The bandit's online-purity guarantee is structural: [`BanditAgent::step`]
//! and [`BanditAgent::learn`] accept nothing an online system would not have.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ForwardMode, Matrix, Network, NetworkConfig};
use crate::sim::{Action, Class, RewardSpec, Utterance};

/// Greedy argmax over the two predicted rewards; ties break to `Standard`.
pub fn choose_action(predicted: &[f64; 2]) -> Result<Action> {
    if !predicted.iter().all(|v| v.is_finite()) {
        return Err(Error::Validation(format!(
            "predicted rewards must be finite, got {predicted:?}"
        )));
    }
    if predicted[1] > predicted[0] {
        Ok(Action::Relaxed)
    } else {
        Ok(Action::Standard)
    }
}

/// Action-exploration strategy of the bandit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exploration {
    /// Fresh concrete-dropout masks per decision; exploration shrinks on its
    /// own as the learned drop probabilities adapt.
    ConcreteDropout,
    /// Uniform random action with probability `epsilon`, greedy otherwise.
    EpsilonGreedy { epsilon: f64 },
    /// Always the greedy action.
    Greedy,
}

/// Settings for a fresh bandit agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BanditConfig {
    pub network: NetworkConfig,
    pub exploration: Exploration,
    /// One SGD update fires exactly when this many decisions have been
    /// observed since the last update.
    pub batch_size: usize,
    /// Number of initial decisions taken uniformly at random so both reward
    /// heads see data before the greedy rule kicks in.
    pub warmup: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig {
                input_dim: crate::sim::DENSE_DIM,
                hidden: vec![64, 64],
                output_dim: Action::COUNT,
                ..NetworkConfig::default()
            },
            exploration: Exploration::ConcreteDropout,
            batch_size: 64,
            warmup: 500,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.network.output_dim != Action::COUNT {
            return Err(Error::Config(format!(
                "bandit network must have one reward head per action ({}), got {}",
                Action::COUNT,
                self.network.output_dim
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Exploration::EpsilonGreedy { epsilon } = self.exploration {
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(Error::Config(format!(
                    "epsilon must be in [0,1], got {epsilon}"
                )));
            }
        }
        Ok(())
    }
}

/// Online deep contextual bandit: predicts a reward per action, explores via
/// sampled dropout masks, learns from the realized reward of the chosen
/// action only, one SGD step per full batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BanditAgent {
    network: Network,
    exploration: Exploration,
    batch_size: usize,
    warmup: usize,
    learning_rate: f64,
    seed: u64,
    rng: ChaCha8Rng,
    step_counter: u64,
    updates_done: u64,
    buffer: Vec<(Vec<f64>, Action, f64)>,
}

impl BanditAgent {
    pub fn new(config: &BanditConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let network = Network::new(&config.network, &mut rng)?;
        Ok(Self {
            network,
            exploration: config.exploration,
            batch_size: config.batch_size,
            warmup: config.warmup,
            learning_rate: config.learning_rate,
            seed: config.seed,
            rng,
            step_counter: 0,
            updates_done: 0,
            buffer: Vec::with_capacity(config.batch_size),
        })
    }

    /// Decides an action for one utterance's observed features.
    ///
    /// Returns the chosen action plus both predicted rewards for logging.
    /// During warmup the action is uniform random; afterwards it is greedy
    /// over predictions that, under concrete-dropout exploration, were
    /// computed with fresh sampled masks.
    pub fn step(&mut self, features: &[f64]) -> Result<(Action, [f64; 2])> {
        let input = Matrix::from_row(features);
        let mode = match self.exploration {
            Exploration::ConcreteDropout => ForwardMode::Sampled,
            _ => ForwardMode::Deterministic,
        };
        let (out, _) = self.network.forward(&input, mode, &mut self.rng)?;
        let predicted = [out.get(0, 0), out.get(0, 1)];

        let action = if self.step_counter < self.warmup as u64 {
            self.random_action()
        } else {
            match self.exploration {
                Exploration::EpsilonGreedy { epsilon } => {
                    if self.rng.random::<f64>() < epsilon {
                        self.random_action()
                    } else {
                        choose_action(&predicted)?
                    }
                }
                _ => choose_action(&predicted)?,
            }
        };
        self.step_counter += 1;
        Ok((action, predicted))
    }

    /// Records one (features, chosen action, realized reward) triple. When
    /// the buffer reaches the batch size, performs a single SGD step on the
    /// mean squared error of the chosen head per example — the unchosen head
    /// receives no gradient — and clears the buffer.
    pub fn learn(
        &mut self,
        features: &[f64],
        chosen: Action,
        realized_reward: f64,
    ) -> Result<bool> {
        if !realized_reward.is_finite() {
            return Err(Error::Validation(format!(
                "realized reward must be finite, got {realized_reward}"
            )));
        }
        self.buffer
            .push((features.to_vec(), chosen, realized_reward));
        if self.buffer.len() < self.batch_size {
            return Ok(false);
        }

        let rows: Vec<Vec<f64>> = self.buffer.iter().map(|(f, _, _)| f.clone()).collect();
        let input = Matrix::from_rows(&rows)?;
        let mode = match self.exploration {
            Exploration::ConcreteDropout => ForwardMode::Sampled,
            _ => ForwardMode::Deterministic,
        };
        let (out, tape) = self.network.forward(&input, mode, &mut self.rng)?;

        let batch = self.buffer.len();
        let mut loss_grad = Matrix::zeros(batch, Action::COUNT);
        for (r, (_, action, reward)) in self.buffer.iter().enumerate() {
            let head = action.index();
            let pred = out.get(r, head);
            loss_grad.set(r, head, 2.0 * (pred - reward) / batch as f64);
        }
        let grads = self.network.backward(&tape, &loss_grad)?;
        self.network.sgd_step(&grads, self.learning_rate)?;
        self.updates_done += 1;
        self.buffer.clear();
        Ok(true)
    }

    fn random_action(&mut self) -> Action {
        if self.rng.random::<f64>() < 0.5 {
            Action::Standard
        } else {
            Action::Relaxed
        }
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    pub fn updates_done(&self) -> u64 {
        self.updates_done
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Writes the full agent state (network, RNG, replay buffer, counters)
    /// plus a config header, into the versioned checkpoint container.
    pub fn save_checkpoint(&self, path: &Path, reward: Option<RewardSpec>) -> Result<()> {
        let file = AgentCheckpoint {
            format_version: crate::nn::CHECKPOINT_VERSION,
            reward,
            agent: self.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<(Self, Option<RewardSpec>)> {
        let text = std::fs::read_to_string(path)?;
        let file: AgentCheckpoint = serde_json::from_str(&text)?;
        if file.format_version != crate::nn::CHECKPOINT_VERSION {
            return Err(Error::Corpus(format!(
                "agent checkpoint version {} unsupported (expected {})",
                file.format_version,
                crate::nn::CHECKPOINT_VERSION
            )));
        }
        Ok((file.agent, file.reward))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentCheckpoint {
    format_version: u32,
    reward: Option<RewardSpec>,
    agent: BanditAgent,
}

/// Settings for the offline supervised classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_scale: f64,
    /// Inverse-frequency class weights in the loss, for the ~2.5% positive
    /// class imbalance.
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs: 6,
            batch_size: 128,
            learning_rate: 0.03,
            l2_scale: 1e-6,
            class_weighting: true,
            seed: 0,
        }
    }
}

/// Supervised classifier over observed features: a single-logit network;
/// predicts `Relaxed` iff `sigmoid(logit) >= tau`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedClassifier {
    network: Network,
    /// Decision threshold; `None` until selected on development data.
    pub threshold: Option<f64>,
}

impl TrainedClassifier {
    /// Trains with class-weighted binary cross-entropy by mini-batch SGD for
    /// a fixed number of epochs. The threshold is left unset; sweep it on
    /// held-out data.
    pub fn train(dataset: &[(Vec<f64>, Class)], config: &ClassifierConfig) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Train("empty training set".into()));
        }
        let n_pos = dataset.iter().filter(|(_, c)| *c == Class::Class1).count();
        let n_neg = dataset.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(Error::Train(format!(
                "training set must contain both classes (got {n_pos} positive, {n_neg} negative)"
            )));
        }
        if config.batch_size == 0 || config.epochs == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }

        let n = dataset.len() as f64;
        let (w_pos, w_neg) = if config.class_weighting {
            (n / (2.0 * n_pos as f64), n / (2.0 * n_neg as f64))
        } else {
            (1.0, 1.0)
        };

        let input_dim = dataset[0].0.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut network = Network::new(
            &NetworkConfig {
                input_dim,
                hidden: config.hidden.clone(),
                output_dim: 1,
                l2_scale: config.l2_scale,
                dropout_reg_scale: 0.0,
                ..NetworkConfig::default()
            },
            &mut rng,
        )?;

        let mut order: Vec<usize> = (0..dataset.len()).collect();
        for _ in 0..config.epochs {
            shuffle(&mut order, &mut rng);
            for chunk in order.chunks(config.batch_size) {
                let rows: Vec<Vec<f64>> = chunk.iter().map(|&i| dataset[i].0.clone()).collect();
                let input = Matrix::from_rows(&rows)?;
                let (out, tape) = network.forward(&input, ForwardMode::Deterministic, &mut rng)?;
                let mut loss_grad = Matrix::zeros(chunk.len(), 1);
                for (r, &i) in chunk.iter().enumerate() {
                    let (y, w) = match dataset[i].1 {
                        Class::Class1 => (1.0, w_pos),
                        Class::Class0 => (0.0, w_neg),
                    };
                    let p = sigmoid(out.get(r, 0));
                    // d/dlogit of weighted BCE.
                    loss_grad.set(r, 0, w * (p - y) / chunk.len() as f64);
                }
                let grads = network.backward(&tape, &loss_grad)?;
                network.sgd_step(&grads, config.learning_rate)?;
            }
        }
        Ok(Self {
            network,
            threshold: None,
        })
    }

    /// Positive-class probability for one feature row.
    pub fn score(&self, features: &[f64]) -> Result<f64> {
        let out = self.network.predict(&Matrix::from_row(features))?;
        Ok(sigmoid(out.get(0, 0)))
    }

    pub fn scores(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let out = self.network.predict(&Matrix::from_rows(rows)?)?;
        Ok((0..out.rows()).map(|r| sigmoid(out.get(r, 0))).collect())
    }

    /// `Relaxed` iff the positive-class score is at least `tau`.
    pub fn predict(&self, features: &[f64], tau: f64) -> Result<Action> {
        Ok(action_for_score(self.score(features)?, tau))
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let file = ClassifierCheckpoint {
            format_version: crate::nn::CHECKPOINT_VERSION,
            classifier: self.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ClassifierCheckpoint = serde_json::from_str(&text)?;
        if file.format_version != crate::nn::CHECKPOINT_VERSION {
            return Err(Error::Corpus(format!(
                "classifier checkpoint version {} unsupported (expected {})",
                file.format_version,
                crate::nn::CHECKPOINT_VERSION
            )));
        }
        Ok(file.classifier)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassifierCheckpoint {
    format_version: u32,
    classifier: TrainedClassifier,
}

#[inline]
pub(crate) fn action_for_score(score: f64, tau: f64) -> Action {
    if score >= tau {
        Action::Relaxed
    } else {
        Action::Standard
    }
}

/// Fisher-Yates with our seeded RNG (keeps shuffles stable across rand
/// versions).
pub(crate) fn shuffle<R: Rng + ?Sized>(order: &mut [usize], rng: &mut R) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Constant policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticPolicyKind {
    StandardOnly,
    RelaxedOnly,
}

impl StaticPolicyKind {
    pub fn action(self) -> Action {
        match self {
            StaticPolicyKind::StandardOnly => Action::Standard,
            StaticPolicyKind::RelaxedOnly => Action::Relaxed,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StaticPolicyKind::StandardOnly => "standard_only",
            StaticPolicyKind::RelaxedOnly => "relaxed_only",
        }
    }
}

/// Anything that can pick a configuration per utterance during evaluation.
///
/// Evaluation-time policies may read the utterance (the oracle needs the
/// label); learning agents never take decisions through this trait.
pub trait Policy {
    fn name(&self) -> String;
    fn decide(&self, utterance: &Utterance, observed_dense: &[f64]) -> Result<Action>;
}

impl Policy for StaticPolicyKind {
    fn name(&self) -> String {
        StaticPolicyKind::name(*self).to_string()
    }

    fn decide(&self, _utterance: &Utterance, _observed: &[f64]) -> Result<Action> {
        Ok(self.action())
    }
}

/// Hindsight-optimal configuration choice; performance upper bound.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn name(&self) -> String {
        "oracle".to_string()
    }

    fn decide(&self, utterance: &Utterance, _observed: &[f64]) -> Result<Action> {
        Ok(utterance.label.optimal_action())
    }
}

/// A trained classifier at a fixed threshold.
pub struct ClassifierPolicy<'a> {
    pub classifier: &'a TrainedClassifier,
    pub tau: f64,
}

impl Policy for ClassifierPolicy<'_> {
    fn name(&self) -> String {
        format!("classifier@tau={}", self.tau)
    }

    fn decide(&self, _utterance: &Utterance, observed: &[f64]) -> Result<Action> {
        self.classifier.predict(observed, self.tau)
    }
}

/// A frozen bandit network evaluated greedily (no exploration, no updates).
pub struct FrozenBanditPolicy<'a> {
    pub network: &'a Network,
}

impl Policy for FrozenBanditPolicy<'_> {
    fn name(&self) -> String {
        "bandit_frozen_greedy".to_string()
    }

    fn decide(&self, _utterance: &Utterance, observed: &[f64]) -> Result<Action> {
        let out = self.network.predict(&Matrix::from_row(observed))?;
        choose_action(&[out.get(0, 0), out.get(0, 1)])
    }
}
