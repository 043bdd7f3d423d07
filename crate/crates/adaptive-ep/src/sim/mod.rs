//! Synthetic endpointing world.
//!
//! Every generated utterance carries a latent "slowness" score plus the
//! realized outcome (latency, early-cutoff flag) under *both* endpointing
//! configurations. Offline labeling needs the standard-configuration result
//! regardless of the action actually taken, so the counterfactual pair is
//! materialized up front; online agents are only ever handed the outcome of
//! their chosen configuration, while evaluation and the oracle may read both.

mod features;

pub use features::{
    observe_features, FeatureGroup, FeatureVector, ObservationMode, ObservationSpec, AUDIO_DIM,
    DENSE_DIM, HYPOTHESIS_DIM, INTENT_DOMAINS, PITCH_DIM,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The two endpointing configurations an agent can choose between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Standard = 0,
    Relaxed = 1,
}

impl Action {
    pub const COUNT: usize = 2;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Ground-truth class of an utterance: `Class1` means the standard
/// configuration cuts it off early, so the optimal choice is relaxed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Class0,
    Class1,
}

impl Class {
    /// The configuration an oracle would pick for this class.
    #[inline]
    pub fn optimal_action(self) -> Action {
        match self {
            Class::Class0 => Action::Standard,
            Class::Class1 => Action::Relaxed,
        }
    }
}

/// Realized endpointing result under one configuration.
///
/// Latency is the time from the true end of speech until the endpointer
/// fires, in integer milliseconds. An early cutoff fires before the end of
/// speech, so its latency is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointOutcome {
    pub latency_ms: u32,
    pub cutoff: bool,
}

/// Mixing weights turning an outcome into a scalar reward:
/// `reward = -(alpha_latency * latency_ms + beta_cutoff * cutoff)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub alpha_latency: f64,
    pub beta_cutoff: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            alpha_latency: 1e-3,
            beta_cutoff: 2.0,
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_latency.is_finite() && self.beta_cutoff.is_finite()) {
            return Err(Error::Validation("reward weights must be finite".into()));
        }
        if self.alpha_latency < 0.0 || self.beta_cutoff < 0.0 {
            return Err(Error::Validation(
                "reward weights must be nonnegative".into(),
            ));
        }
        if self.alpha_latency == 0.0 && self.beta_cutoff == 0.0 {
            return Err(Error::Validation(
                "reward weights must not both be zero".into(),
            ));
        }
        Ok(())
    }

    /// Scalar reward for an outcome; higher is better.
    pub fn reward(&self, outcome: &EndpointOutcome) -> f64 {
        let cutoff = if outcome.cutoff { 1.0 } else { 0.0 };
        -(self.alpha_latency * f64::from(outcome.latency_ms) + self.beta_cutoff * cutoff)
    }
}

/// One synthetic utterance with counterfactual outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: u64,
    /// Latent slowness score driving cutoff risk. Unobservable by policies;
    /// `None` when the utterance was reconstructed from a log.
    pub latent_slowness: Option<f64>,
    pub features: FeatureVector,
    pub outcome_standard: EndpointOutcome,
    pub outcome_relaxed: EndpointOutcome,
    pub label: Class,
}

/// Returns the realized outcome for the chosen configuration. Pure lookup.
#[inline]
pub fn decode(utterance: &Utterance, chosen: Action) -> EndpointOutcome {
    match chosen {
        Action::Standard => utterance.outcome_standard,
        Action::Relaxed => utterance.outcome_relaxed,
    }
}

/// Per-group signal strengths in `[0, 1]`; 1.0 makes the group a
/// deterministic function of the latent slowness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Informativeness {
    pub audio: f64,
    pub hypothesis: f64,
    pub pause_duration: f64,
    pub wakeword_duration: f64,
    pub pitch: f64,
    pub intent_domain: f64,
}

impl Default for Informativeness {
    fn default() -> Self {
        // Ordered audio ~ hypothesis > intent > pause > pitch > wakeword;
        // pitch and wakeword are kept weak on purpose so models restricted to
        // them cannot beat the static baselines.
        Self {
            audio: 0.9,
            hypothesis: 0.85,
            pause_duration: 0.4,
            wakeword_duration: 0.05,
            pitch: 0.08,
            intent_domain: 0.6,
        }
    }
}

impl Informativeness {
    pub fn get(&self, group: FeatureGroup) -> f64 {
        match group {
            FeatureGroup::Audio => self.audio,
            FeatureGroup::Hypothesis => self.hypothesis,
            FeatureGroup::PauseDuration => self.pause_duration,
            FeatureGroup::WakewordDuration => self.wakeword_duration,
            FeatureGroup::Pitch => self.pitch,
            FeatureGroup::IntentDomain => self.intent_domain,
        }
    }

    fn validate(&self) -> Result<()> {
        for g in FeatureGroup::ALL {
            let w = self.get(g);
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Config(format!(
                    "informativeness for {} must be in [0,1], got {w}",
                    g.name()
                )));
            }
        }
        Ok(())
    }
}

/// Generator settings. Fully determines a corpus together with the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_utterances: usize,
    /// Marginal probability that the standard configuration cuts off early.
    pub target_standard_cutoff_rate: f64,
    /// Marginal probability that *both* configurations cut off early.
    pub target_dual_cutoff_rate: f64,
    /// Steepness of cutoff risk in the latent slowness; the intercept is
    /// solved so the marginal rate hits its target.
    pub cutoff_slope: f64,
    /// Log-normal base latency of the standard configuration.
    pub base_latency_median_ms: f64,
    pub base_latency_sigma: f64,
    /// Shifted-exponential extra wait of the relaxed configuration.
    pub relaxed_penalty_shift_ms: f64,
    pub relaxed_penalty_mean_ms: f64,
    pub informativeness: Informativeness,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_utterances: 100_000,
            target_standard_cutoff_rate: 0.025,
            target_dual_cutoff_rate: 0.0002,
            cutoff_slope: 6.0,
            base_latency_median_ms: 350.0,
            base_latency_sigma: 0.5,
            relaxed_penalty_shift_ms: 100.0,
            relaxed_penalty_mean_ms: 600.0,
            informativeness: Informativeness::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_standard_cutoff_rate > 0.0 && self.target_standard_cutoff_rate < 1.0) {
            return Err(Error::Config(format!(
                "target_standard_cutoff_rate must be in (0,1), got {}",
                self.target_standard_cutoff_rate
            )));
        }
        if !(self.target_dual_cutoff_rate >= 0.0 && self.target_dual_cutoff_rate < 1.0) {
            return Err(Error::Config(format!(
                "target_dual_cutoff_rate must be in [0,1), got {}",
                self.target_dual_cutoff_rate
            )));
        }
        if self.target_dual_cutoff_rate > self.target_standard_cutoff_rate {
            return Err(Error::Config(format!(
                "infeasible rate targets: dual rate {} exceeds standard rate {}",
                self.target_dual_cutoff_rate, self.target_standard_cutoff_rate
            )));
        }
        if self.cutoff_slope.is_nan() || self.cutoff_slope <= 0.0 {
            return Err(Error::Config("cutoff_slope must be positive".into()));
        }
        if !(self.base_latency_median_ms > 0.0 && self.base_latency_sigma > 0.0) {
            return Err(Error::Config(
                "base latency parameters must be positive".into(),
            ));
        }
        if !(self.relaxed_penalty_shift_ms >= 0.0
            && self.relaxed_penalty_mean_ms > self.relaxed_penalty_shift_ms)
        {
            return Err(Error::Config(
                "relaxed penalty needs mean > shift >= 0".into(),
            ));
        }
        self.informativeness.validate()
    }
}

/// Streaming utterance source; a pure function of its config.
#[derive(Debug)]
pub struct Generator {
    config: GeneratorConfig,
    rng: ChaCha8Rng,
    /// Intercept of the cutoff-risk curve, solved at construction.
    intercept: f64,
    /// P(relaxed also cuts off | standard cuts off).
    dual_given_standard: f64,
    next_id: u64,
    remaining: usize,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let intercept = solve_intercept(config.cutoff_slope, config.target_standard_cutoff_rate);
        let dual_given_standard =
            config.target_dual_cutoff_rate / config.target_standard_cutoff_rate;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            intercept,
            dual_given_standard,
            next_id: 0,
            remaining: config.n_utterances,
            config,
        })
    }

    /// Intercept chosen so that `E[sigmoid(slope * s + b)] = target` for
    /// standard-normal slowness.
    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    fn gaussian_group(&mut self, slowness: f64, weight: f64, dim: usize) -> Vec<f64> {
        let noise = (1.0 - weight * weight).max(0.0).sqrt();
        (0..dim)
            .map(|_| {
                let eps: f64 = self.rng.sample(StandardNormal);
                weight * slowness + noise * eps
            })
            .collect()
    }

    fn next_utterance(&mut self) -> Utterance {
        let cfg = self.config.clone();
        let slowness: f64 = self.rng.sample(StandardNormal);

        let p_cut = sigmoid(cfg.cutoff_slope * slowness + self.intercept);
        let standard_cutoff = self.rng.random::<f64>() < p_cut;
        let dual_cutoff = standard_cutoff && self.rng.random::<f64>() < self.dual_given_standard;

        let base_z: f64 = self.rng.sample(StandardNormal);
        let base_latency = cfg.base_latency_median_ms * (cfg.base_latency_sigma * base_z).exp();
        let exp_mean = cfg.relaxed_penalty_mean_ms - cfg.relaxed_penalty_shift_ms;
        let penalty: f64 =
            cfg.relaxed_penalty_shift_ms + self.rng.sample(Exp::new(1.0 / exp_mean).unwrap());

        let outcome_standard = EndpointOutcome {
            latency_ms: if standard_cutoff {
                0
            } else {
                round_ms(base_latency)
            },
            cutoff: standard_cutoff,
        };
        let outcome_relaxed = EndpointOutcome {
            latency_ms: if dual_cutoff {
                0
            } else {
                round_ms(base_latency + penalty)
            },
            cutoff: dual_cutoff,
        };

        let w = cfg.informativeness;
        let audio = self.gaussian_group(slowness, w.audio, AUDIO_DIM);
        let hypothesis = self.gaussian_group(slowness, w.hypothesis, HYPOTHESIS_DIM);
        let pitch = self.gaussian_group(slowness, w.pitch, PITCH_DIM);
        let pause_g = self.gaussian_group(slowness, w.pause_duration, 1)[0];
        let wakeword_g = self.gaussian_group(slowness, w.wakeword_duration, 1)[0];
        let intent_domain = {
            let informative = self.rng.random::<f64>() < w.intent_domain;
            let random_pick = self.rng.random_range(0..INTENT_DOMAINS as u8);
            if informative {
                slowness_octile(slowness)
            } else {
                random_pick
            }
        };

        let features = FeatureVector {
            audio,
            hypothesis,
            pause_duration_ms: features::PAUSE_MEDIAN_MS
                * (features::PAUSE_LOG_SIGMA * pause_g).exp(),
            wakeword_duration_ms: features::WAKEWORD_MEDIAN_MS
                * (features::WAKEWORD_LOG_SIGMA * wakeword_g).exp(),
            pitch,
            intent_domain,
        };

        let id = self.next_id;
        self.next_id += 1;
        Utterance {
            id,
            latent_slowness: Some(slowness),
            features,
            outcome_standard,
            outcome_relaxed,
            label: if standard_cutoff {
                Class::Class1
            } else {
                Class::Class0
            },
        }
    }
}

impl Iterator for Generator {
    type Item = Utterance;

    fn next(&mut self) -> Option<Utterance> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.next_utterance())
    }
}

/// Generates the configured number of utterances into memory.
pub fn generate(config: &GeneratorConfig) -> Result<Vec<Utterance>> {
    Ok(Generator::new(config.clone())?.collect())
}

fn round_ms(ms: f64) -> u32 {
    ms.round().max(0.0).min(f64::from(u32::MAX)) as u32
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

/// Standard-normal octile index of `s`, used for the informative intent pick.
fn slowness_octile(s: f64) -> u8 {
    const BOUNDS: [f64; 7] = [
        -1.150349380376008,
        -0.6744897501960817,
        -0.3186393639643751,
        0.0,
        0.3186393639643751,
        0.6744897501960817,
        1.150349380376008,
    ];
    BOUNDS.iter().filter(|&&b| s > b).count() as u8
}

/// Expected sigmoid of `slope * s + intercept` under standard-normal `s`,
/// by composite Simpson quadrature on [-10, 10].
fn expected_cutoff_rate(slope: f64, intercept: f64) -> f64 {
    const N: usize = 4000;
    const LO: f64 = -10.0;
    const HI: f64 = 10.0;
    let h = (HI - LO) / N as f64;
    let f = |s: f64| {
        let pdf = (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt();
        sigmoid(slope * s + intercept) * pdf
    };
    let mut acc = f(LO) + f(HI);
    for i in 1..N {
        let s = LO + i as f64 * h;
        acc += f(s) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Bisection for the intercept hitting the target marginal cutoff rate.
fn solve_intercept(slope: f64, target: f64) -> f64 {
    let mut lo = -200.0;
    let mut hi = 50.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_cutoff_rate(slope, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
