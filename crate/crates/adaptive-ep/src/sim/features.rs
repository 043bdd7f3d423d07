//! Utterance-level feature groups and observation filtering.
//!
//! Feature groups mirror what a production endpointer could extract per
//! utterance: audio and hypothesis embeddings (time-dependent, degraded when
//! only a prefix of the utterance is visible), plus static scalars and a
//! categorical intent domain that do not depend on how much audio was seen.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AUDIO_DIM: usize = 16;
pub const HYPOTHESIS_DIM: usize = 16;
pub const PITCH_DIM: usize = 4;
pub const INTENT_DOMAINS: usize = 8;
/// Width of the dense encoding fed to networks.
pub const DENSE_DIM: usize = AUDIO_DIM + HYPOTHESIS_DIM + 1 + 1 + PITCH_DIM + INTENT_DOMAINS;

// Fixed constants of the dense encoding for the two physical-duration
// features: z = (ln(ms) - ln(median)) / sigma. Part of the feature schema,
// not of any experiment config.
pub(crate) const PAUSE_MEDIAN_MS: f64 = 150.0;
pub(crate) const PAUSE_LOG_SIGMA: f64 = 0.6;
pub(crate) const WAKEWORD_MEDIAN_MS: f64 = 500.0;
pub(crate) const WAKEWORD_LOG_SIGMA: f64 = 0.4;

/// Named feature group, matching the corpus field names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Audio,
    Hypothesis,
    PauseDuration,
    WakewordDuration,
    Pitch,
    IntentDomain,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 6] = [
        FeatureGroup::Audio,
        FeatureGroup::Hypothesis,
        FeatureGroup::PauseDuration,
        FeatureGroup::WakewordDuration,
        FeatureGroup::Pitch,
        FeatureGroup::IntentDomain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Audio => "audio",
            FeatureGroup::Hypothesis => "hypothesis",
            FeatureGroup::PauseDuration => "pause_duration",
            FeatureGroup::WakewordDuration => "wakeword_duration",
            FeatureGroup::Pitch => "pitch",
            FeatureGroup::IntentDomain => "intent_domain",
        }
    }

    /// Width of this group in the dense encoding.
    pub fn dense_dim(self) -> usize {
        match self {
            FeatureGroup::Audio => AUDIO_DIM,
            FeatureGroup::Hypothesis => HYPOTHESIS_DIM,
            FeatureGroup::PauseDuration | FeatureGroup::WakewordDuration => 1,
            FeatureGroup::Pitch => PITCH_DIM,
            FeatureGroup::IntentDomain => INTENT_DOMAINS,
        }
    }

    /// Groups whose content depends on how much of the utterance was seen.
    pub fn is_time_dependent(self) -> bool {
        matches!(self, FeatureGroup::Audio | FeatureGroup::Hypothesis)
    }
}

/// One utterance's features. Zeroing a group stands for "not available".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub audio: Vec<f64>,
    pub hypothesis: Vec<f64>,
    pub pause_duration_ms: f64,
    pub wakeword_duration_ms: f64,
    pub pitch: Vec<f64>,
    /// Domain index in `0..INTENT_DOMAINS`.
    pub intent_domain: u8,
}

impl FeatureVector {
    pub fn zeroed() -> Self {
        Self {
            audio: vec![0.0; AUDIO_DIM],
            hypothesis: vec![0.0; HYPOTHESIS_DIM],
            pause_duration_ms: 0.0,
            wakeword_duration_ms: 0.0,
            pitch: vec![0.0; PITCH_DIM],
            intent_domain: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.audio.len() != AUDIO_DIM {
            return Err(Error::Shape {
                what: "audio features",
                expected: AUDIO_DIM,
                got: self.audio.len(),
            });
        }
        if self.hypothesis.len() != HYPOTHESIS_DIM {
            return Err(Error::Shape {
                what: "hypothesis features",
                expected: HYPOTHESIS_DIM,
                got: self.hypothesis.len(),
            });
        }
        if self.pitch.len() != PITCH_DIM {
            return Err(Error::Shape {
                what: "pitch features",
                expected: PITCH_DIM,
                got: self.pitch.len(),
            });
        }
        if usize::from(self.intent_domain) >= INTENT_DOMAINS {
            return Err(Error::Validation(format!(
                "intent domain {} out of range",
                self.intent_domain
            )));
        }
        Ok(())
    }

    /// Flattens to the fixed dense layout:
    /// audio, hypothesis, pause (log-standardized), wakeword
    /// (log-standardized), pitch, intent domain one-hot.
    ///
    /// A zeroed duration encodes as zero rather than as the log of nothing,
    /// so masked groups stay exactly zero in the dense vector.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(DENSE_DIM);
        out.extend_from_slice(&self.audio);
        out.extend_from_slice(&self.hypothesis);
        out.push(standardize_duration(
            self.pause_duration_ms,
            PAUSE_MEDIAN_MS,
            PAUSE_LOG_SIGMA,
        ));
        out.push(standardize_duration(
            self.wakeword_duration_ms,
            WAKEWORD_MEDIAN_MS,
            WAKEWORD_LOG_SIGMA,
        ));
        out.extend_from_slice(&self.pitch);
        let mut one_hot = [0.0; INTENT_DOMAINS];
        one_hot[usize::from(self.intent_domain) % INTENT_DOMAINS] = 1.0;
        out.extend_from_slice(&one_hot);
        out
    }
}

fn standardize_duration(ms: f64, median: f64, sigma: f64) -> f64 {
    if ms <= 0.0 {
        0.0
    } else {
        ((ms / median).ln()) / sigma
    }
}

/// How much of an utterance the deciding model gets to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// A fixed, known fraction of the utterance is visible.
    FractionKnown,
    /// Only the initial wakeword-bearing segment is visible; its fraction of
    /// the full utterance varies per utterance.
    FirstSegment,
}

/// Observation filter applied before any policy sees the features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub mode: ObservationMode,
    /// Visible percentage of the utterance in `(0, 100]`; only meaningful in
    /// `FractionKnown` mode.
    pub visible_fraction: f64,
    pub enabled_groups: BTreeSet<FeatureGroup>,
    /// Per-utterance visible-percentage range in `FirstSegment` mode; the
    /// draw is uniform, centered on ~30% by default.
    pub first_segment_range: (f64, f64),
}

impl Default for ObservationSpec {
    fn default() -> Self {
        Self {
            mode: ObservationMode::FractionKnown,
            visible_fraction: 100.0,
            enabled_groups: FeatureGroup::ALL.into_iter().collect(),
            first_segment_range: (15.0, 45.0),
        }
    }
}

impl ObservationSpec {
    /// The idealized setting: everything visible, all groups on.
    pub fn idealized() -> Self {
        Self::default()
    }

    pub fn with_fraction(fraction: f64) -> Self {
        Self {
            visible_fraction: fraction,
            ..Self::default()
        }
    }

    pub fn with_groups<I: IntoIterator<Item = FeatureGroup>>(groups: I) -> Self {
        Self {
            enabled_groups: groups.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.visible_fraction > 0.0 && self.visible_fraction <= 100.0) {
            return Err(Error::Validation(format!(
                "visible_fraction must be in (0, 100], got {}",
                self.visible_fraction
            )));
        }
        let (lo, hi) = self.first_segment_range;
        if !(lo > 0.0 && hi <= 100.0 && lo <= hi) {
            return Err(Error::Validation(format!(
                "first_segment_range must satisfy 0 < lo <= hi <= 100, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Correlation retained by a time-dependent feature when only `x` percent of
/// the utterance is visible.
#[inline]
pub(crate) fn visibility_rho(x_percent: f64) -> f64 {
    (x_percent / 100.0).sqrt()
}

/// Applies the observation filter to a full feature vector.
///
/// Disabled groups come back exactly zero. With less than the full utterance
/// visible, audio and hypothesis coordinates are degraded to
/// `rho * signal + sqrt(1 - rho^2) * noise` with `rho = sqrt(X/100)`; static
/// groups are unaffected by X. The degradation noise is a deterministic
/// function of the utterance id, so observation is a pure function.
pub fn observe_features(
    utterance_id: u64,
    features: &FeatureVector,
    spec: &ObservationSpec,
) -> Result<FeatureVector> {
    spec.validate()?;
    features.validate()?;

    let x = match spec.mode {
        ObservationMode::FractionKnown => spec.visible_fraction,
        ObservationMode::FirstSegment => {
            let (lo, hi) = spec.first_segment_range;
            let mut rng = observation_rng(utterance_id, 0x5e67);
            rng.random_range(lo..=hi)
        }
    };

    let mut out = FeatureVector::zeroed();
    let rho = visibility_rho(x);
    let full = x >= 100.0;

    if spec.enabled_groups.contains(&FeatureGroup::Audio) {
        out.audio = degrade(utterance_id, 0xa0d1, &features.audio, rho, full);
    }
    if spec.enabled_groups.contains(&FeatureGroup::Hypothesis) {
        out.hypothesis = degrade(utterance_id, 0x4b9, &features.hypothesis, rho, full);
    }
    if spec.enabled_groups.contains(&FeatureGroup::PauseDuration) {
        out.pause_duration_ms = features.pause_duration_ms;
    }
    if spec
        .enabled_groups
        .contains(&FeatureGroup::WakewordDuration)
    {
        out.wakeword_duration_ms = features.wakeword_duration_ms;
    }
    if spec.enabled_groups.contains(&FeatureGroup::Pitch) {
        out.pitch = features.pitch.clone();
    }
    if spec.enabled_groups.contains(&FeatureGroup::IntentDomain) {
        out.intent_domain = features.intent_domain;
    }
    Ok(out)
}

fn degrade(id: u64, salt: u64, values: &[f64], rho: f64, full: bool) -> Vec<f64> {
    if full {
        return values.to_vec();
    }
    let mut rng = observation_rng(id, salt);
    let noise_scale = (1.0 - rho * rho).max(0.0).sqrt();
    values
        .iter()
        .map(|&v| {
            let eps: f64 = rng.sample(StandardNormal);
            rho * v + noise_scale * eps
        })
        .collect()
}

fn observation_rng(id: u64, salt: u64) -> ChaCha8Rng {
    // splitmix64-style mixing of (id, salt) into one seed.
    let mut z = id
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(salt.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}
