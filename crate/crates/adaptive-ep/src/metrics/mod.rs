//! Latency and cutoff metrics, classifier metrics, and trade-off sweeps.
//!
//! Latency tails are summarized by two trimmed means:
//!
//! - TM95 — mean of all values at or below the 95th percentile;
//! - DTM95:99 — mean of values between the 95th and 99th percentiles,
//!   boundaries included.
//!
//! Percentiles use linear interpolation between order statistics. Early-EP
//! rate is the percentage of utterances the endpointer cut off before the
//! speaker finished. Classifier metrics treat `Relaxed`/`Class1` as the
//! positive class, and undefined ratios are reported as explicit NA (`None`)
//! rather than zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::sim::{
    decode, observe_features, Action, Class, EndpointOutcome, ObservationSpec, Utterance,
};

/// Percentile by linear interpolation between order statistics
/// (the common "type 7" convention). `values` must be sorted ascending.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

fn sorted_finite(latencies: &[f64], what: &str) -> Result<Vec<f64>> {
    if latencies.is_empty() {
        return Err(Error::Validation(format!("{what} needs a nonempty sample")));
    }
    if latencies.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("{what} requires finite values")));
    }
    let mut sorted = latencies.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted)
}

/// Trimmed mean 95: average of all values at or below the 95th percentile.
pub fn tm95(latencies: &[f64]) -> Result<f64> {
    let sorted = sorted_finite(latencies, "tm95")?;
    let cut = percentile_sorted(&sorted, 95.0);
    let mut sum = 0.0;
    let mut count = 0usize;
    for &v in &sorted {
        if v <= cut {
            sum += v;
            count += 1;
        } else {
            break;
        }
    }
    Ok(sum / count as f64)
}

/// Double-trimmed mean: average of values in the inclusive band between the
/// 95th and 99th percentiles. Errors when no sample point falls in the band
/// (tiny samples).
pub fn dtm95_99(latencies: &[f64]) -> Result<f64> {
    let sorted = sorted_finite(latencies, "dtm95_99")?;
    let lo = percentile_sorted(&sorted, 95.0);
    let hi = percentile_sorted(&sorted, 99.0);
    let mut sum = 0.0;
    let mut count = 0usize;
    for &v in sorted.iter().rev() {
        if v > hi {
            continue;
        }
        if v < lo {
            break;
        }
        sum += v;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InsufficientSample(format!(
            "no latency values in the [P95, P99] band of {} samples",
            sorted.len()
        )));
    }
    Ok(sum / count as f64)
}

/// Percentage of outcomes where the endpointer fired early.
pub fn early_ep_rate(outcomes: &[EndpointOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Validation(
            "early_ep_rate needs a nonempty sample".into(),
        ));
    }
    let cut = outcomes.iter().filter(|o| o.cutoff).count();
    Ok(100.0 * cut as f64 / outcomes.len() as f64)
}

/// Confusion-matrix metrics with `Relaxed`/`Class1` as the positive class.
/// All values are percentages; `None` marks an undefined ratio (NA).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn classifier_metrics(predictions: &[Action], labels: &[Class]) -> Result<ClassifierMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape {
            what: "classifier metrics inputs",
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Validation(
            "classifier metrics need a nonempty sample".into(),
        ));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut tn = 0u64;
    let mut fn_ = 0u64;
    for (&p, &l) in predictions.iter().zip(labels.iter()) {
        match (p, l) {
            (Action::Relaxed, Class::Class1) => tp += 1,
            (Action::Relaxed, Class::Class0) => fp += 1,
            (Action::Standard, Class::Class0) => tn += 1,
            (Action::Standard, Class::Class1) => fn_ += 1,
        }
    }
    let n = predictions.len() as f64;
    let accuracy = 100.0 * (tp + tn) as f64 / n;
    let precision = if tp + fp > 0 {
        Some(100.0 * tp as f64 / (tp + fp) as f64)
    } else {
        None
    };
    let recall = if tp + fn_ > 0 {
        Some(100.0 * tp as f64 / (tp + fn_) as f64)
    } else {
        None
    };
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(ClassifierMetrics {
        accuracy,
        precision,
        recall,
        f1,
    })
}

/// Relative deltas against a baseline report, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeDeltas {
    pub early_ep_rate: Option<f64>,
    pub tm95: Option<f64>,
    pub dtm95_99: Option<f64>,
}

/// Full evaluation of one policy over one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub n: usize,
    /// Percent of utterances cut off early under this policy.
    pub early_ep_rate: f64,
    pub tm95: f64,
    /// `None` when the sample is too small for the [P95, P99] band.
    pub dtm95_99: Option<f64>,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_to_baseline: Option<RelativeDeltas>,
}

impl MetricsReport {
    /// Fills the relative columns against a baseline (conventionally the
    /// always-standard policy).
    pub fn set_baseline(&mut self, baseline: &MetricsReport) {
        let pct = |x: f64, base: f64| {
            if base != 0.0 {
                Some(100.0 * (x - base) / base)
            } else {
                None
            }
        };
        self.relative_to_baseline = Some(RelativeDeltas {
            early_ep_rate: pct(self.early_ep_rate, baseline.early_ep_rate),
            tm95: pct(self.tm95, baseline.tm95),
            dtm95_99: match (self.dtm95_99, baseline.dtm95_99) {
                (Some(x), Some(b)) => pct(x, b),
                _ => None,
            },
        });
    }

    /// Fixed CSV columns shared by all report files.
    pub fn csv_header() -> &'static str {
        "policy,knob,n,early_ep_rate,tm95,dtm95_99,accuracy,precision,recall,f1,\
         rel_early_ep_rate,rel_tm95,rel_dtm95_99"
    }

    pub fn csv_row(&self, knob: Option<f64>) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_else(|| "NA".to_string())
        }
        let rel = self.relative_to_baseline;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.policy,
            knob.map(|k| k.to_string()).unwrap_or_default(),
            self.n,
            self.early_ep_rate,
            self.tm95,
            opt(self.dtm95_99),
            self.accuracy,
            opt(self.precision),
            opt(self.recall),
            opt(self.f1),
            opt(rel.and_then(|r| r.early_ep_rate)),
            opt(rel.and_then(|r| r.tm95)),
            opt(rel.and_then(|r| r.dtm95_99)),
        )
    }
}

/// Evaluation switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Include cut-off utterances (latency 0) in the latency statistics.
    pub include_cutoff_latencies: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            include_cutoff_latencies: true,
        }
    }
}

/// Runs a policy over a corpus: observation-filtered features in, one decode
/// per decision, all metrics aggregated. Deterministic — decode is a lookup.
pub fn evaluate_policy(
    policy: &dyn Policy,
    corpus: &[Utterance],
    observation: &ObservationSpec,
    options: &EvalOptions,
) -> Result<MetricsReport> {
    if corpus.is_empty() {
        return Err(Error::Validation(
            "cannot evaluate a policy on an empty corpus".into(),
        ));
    }
    observation.validate()?;

    let mut outcomes = Vec::with_capacity(corpus.len());
    let mut predictions = Vec::with_capacity(corpus.len());
    let mut labels = Vec::with_capacity(corpus.len());
    for u in corpus {
        let observed = observe_features(u.id, &u.features, observation)?.to_dense();
        let action = policy.decide(u, &observed)?;
        outcomes.push(decode(u, action));
        predictions.push(action);
        labels.push(u.label);
    }
    report_from_decisions(&policy.name(), &outcomes, &predictions, &labels, options)
}

/// Builds a report from already-made decisions (used by the online runner,
/// which must not re-decide).
pub fn report_from_decisions(
    policy_name: &str,
    outcomes: &[EndpointOutcome],
    predictions: &[Action],
    labels: &[Class],
    options: &EvalOptions,
) -> Result<MetricsReport> {
    let latencies: Vec<f64> = outcomes
        .iter()
        .filter(|o| options.include_cutoff_latencies || !o.cutoff)
        .map(|o| f64::from(o.latency_ms))
        .collect();
    let tm = tm95(&latencies)?;
    let dtm = match dtm95_99(&latencies) {
        Ok(v) => Some(v),
        Err(Error::InsufficientSample(_)) => None,
        Err(e) => return Err(e),
    };
    let cm = classifier_metrics(predictions, labels)?;
    Ok(MetricsReport {
        policy: policy_name.to_string(),
        n: outcomes.len(),
        early_ep_rate: early_ep_rate(outcomes)?,
        tm95: tm,
        dtm95_99: dtm,
        accuracy: cm.accuracy,
        precision: cm.precision,
        recall: cm.recall,
        f1: cm.f1,
        relative_to_baseline: None,
    })
}

/// One point on a cutoff-latency trade-off curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub knob: f64,
    pub report: MetricsReport,
}

/// Metrics indexed by a swept knob (classifier threshold, or the bandit's
/// cutoff-to-latency reward weight ratio).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub knob_name: String,
    pub points: Vec<CurvePoint>,
}

impl TradeoffCurve {
    pub fn new(knob_name: &str, points: Vec<CurvePoint>) -> Result<Self> {
        let knobs: Vec<f64> = points.iter().map(|p| p.knob).collect();
        let increasing = knobs.windows(2).all(|w| w[0] < w[1]);
        let decreasing = knobs.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(Error::Validation(format!(
                "curve knob values must be strictly monotone, got {knobs:?}"
            )));
        }
        Ok(Self {
            knob_name: knob_name.to_string(),
            points,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MetricsReport::csv_header());
        out.push('\n');
        for p in &self.points {
            out.push_str(&p.report.csv_row(Some(p.knob)));
            out.push('\n');
        }
        out
    }
}

/// Threshold sweep for a trained classifier. Scores are computed once; each
/// threshold point reuses them. When a baseline is given, every point gets
/// relative columns.
pub fn sweep_classifier_thresholds(
    classifier: &crate::policy::TrainedClassifier,
    thresholds: &[f64],
    corpus: &[Utterance],
    observation: &ObservationSpec,
    options: &EvalOptions,
    baseline: Option<&MetricsReport>,
) -> Result<TradeoffCurve> {
    if thresholds.len() < 2 {
        return Err(Error::Validation(
            "a sweep needs at least 2 knob values".into(),
        ));
    }
    if corpus.is_empty() {
        return Err(Error::Validation("cannot sweep on an empty corpus".into()));
    }
    observation.validate()?;

    let observed: Vec<Vec<f64>> = corpus
        .iter()
        .map(|u| Ok(observe_features(u.id, &u.features, observation)?.to_dense()))
        .collect::<Result<_>>()?;
    let scores = classifier.scores(&observed)?;
    let labels: Vec<Class> = corpus.iter().map(|u| u.label).collect();

    let mut points = Vec::with_capacity(thresholds.len());
    for &tau in thresholds {
        let predictions: Vec<Action> = scores
            .iter()
            .map(|&s| crate::policy::action_for_score(s, tau))
            .collect();
        let outcomes: Vec<EndpointOutcome> = corpus
            .iter()
            .zip(predictions.iter())
            .map(|(u, &a)| decode(u, a))
            .collect();
        let mut report = report_from_decisions(
            &format!("classifier@tau={tau}"),
            &outcomes,
            &predictions,
            &labels,
            options,
        )?;
        if let Some(base) = baseline {
            report.set_baseline(base);
        }
        points.push(CurvePoint { knob: tau, report });
    }
    TradeoffCurve::new("tau", points)
}
