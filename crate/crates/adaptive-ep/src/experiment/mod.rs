//! Config-driven experiment runs.
//!
//! One [`ExperimentConfig`] plus the code version fully determines a run:
//! corpus generation (or loading), the split discipline, observation
//! filtering, agent training, and evaluation. Supervised agents train on the
//! train split, sweep their threshold on dev, and report on test; bandit
//! agents learn online over the train stream and are then frozen and
//! evaluated greedily on test, which keeps the two families comparable.
//! Every run also evaluates the always-standard baseline on the same test
//! split so reports can carry relative columns.

mod report;

pub use report::{comparison_csv, comparison_table};

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CorpusManifest, Split, SplitRatios};
use crate::error::{Error, Result};
use crate::metrics::{
    evaluate_policy, sweep_classifier_thresholds, CurvePoint, EvalOptions, MetricsReport,
    TradeoffCurve,
};
use crate::policy::{
    BanditAgent, BanditConfig, ClassifierConfig, ClassifierPolicy, FrozenBanditPolicy,
    OraclePolicy, StaticPolicyKind, TrainedClassifier,
};
use crate::sim::{
    decode, observe_features, Action, Class, GeneratorConfig, ObservationSpec, RewardSpec,
    Utterance,
};

/// Which agent a run trains/evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentSpec {
    Static {
        policy: StaticPolicyKind,
    },
    Oracle,
    Supervised {
        classifier: ClassifierConfig,
        /// Thresholds swept on dev (selection) and test (curve).
        tau_sweep: Vec<f64>,
    },
    Bandit {
        bandit: BanditConfig,
        reward: RewardSpec,
    },
}

/// Everything a run needs; hash recorded in the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub split_ratios: SplitRatios,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "ObservationSpec::idealized")]
    pub observation: ObservationSpec,
    pub agent: AgentSpec,
    /// Online decisions for bandit agents; the train stream cycles (with a
    /// fresh seeded shuffle per pass) if it is shorter.
    #[serde(default)]
    pub n_online_steps: usize,
    /// Read the corpus from this directory instead of generating it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_corpus: Option<PathBuf>,
    #[serde(default)]
    pub eval_options: EvalOptions,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.split_ratios.validate()?;
        self.observation.validate()?;
        match &self.agent {
            AgentSpec::Supervised {
                classifier,
                tau_sweep,
            } => {
                if classifier.epochs == 0 || classifier.batch_size == 0 {
                    return Err(Error::Config(
                        "classifier epochs/batch_size must be positive".into(),
                    ));
                }
                if tau_sweep.len() < 2 {
                    return Err(Error::Config(
                        "tau_sweep needs at least 2 thresholds".into(),
                    ));
                }
            }
            AgentSpec::Bandit { bandit, reward } => {
                bandit.validate()?;
                reward.validate()?;
                if self.n_online_steps == 0 {
                    return Err(Error::Config("bandit runs need n_online_steps > 0".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// FNV-1a 64 over the canonical JSON encoding.
    pub fn hash(&self) -> Result<String> {
        let text = serde_json::to_string(self)?;
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100000001b3);
        }
        Ok(format!("{h:016x}"))
    }

    /// A reasonable default threshold grid: coarse through the middle, fine
    /// near 1 where the low-flag-rate operating points live.
    pub fn default_tau_sweep() -> Vec<f64> {
        let mut taus: Vec<f64> = Vec::new();
        taus.push(0.0);
        for i in 1..=19 {
            taus.push(i as f64 * 0.05);
        }
        for t in [0.96, 0.97, 0.98, 0.99, 0.995, 0.998, 0.999, 0.9995] {
            taus.push(t);
        }
        taus.push(1.0 + 1e-9);
        taus
    }
}

/// One row of the per-1000-step online learning trace: cutoff rate and mean
/// realized reward within that window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub early_ep_rate: f64,
    pub mean_reward: f64,
}

/// Per-step record of an online run, for audits and debugging.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineStep {
    pub utterance_id: u64,
    pub action: Action,
    pub predicted: [f64; 2],
    pub reward: f64,
}

/// Outcome of one online learning pass.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRun {
    pub steps: Vec<OnlineStep>,
    pub trace: Vec<TraceRow>,
}

/// Runs the bandit over a stream of utterances for `n_steps` decisions.
///
/// The stream visits the slice in order, reshuffling with a seeded RNG on
/// every subsequent pass. Per decision: observe, step, decode the chosen
/// configuration, hand the realized reward back. The loop reads nothing an
/// online system would not have — the label, the latent driver, and the
/// unchosen outcome stay untouched.
pub fn run_bandit_online(
    agent: &mut BanditAgent,
    train: &[Utterance],
    observation: &ObservationSpec,
    reward: &RewardSpec,
    n_steps: usize,
    stream_seed: u64,
) -> Result<OnlineRun> {
    if train.is_empty() {
        return Err(Error::Validation(
            "online run needs a nonempty train stream".into(),
        ));
    }
    reward.validate()?;
    observation.validate()?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stream_rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let mut pos = 0usize;

    let mut steps = Vec::with_capacity(n_steps);
    let mut trace = Vec::with_capacity(n_steps / 1000);
    let mut window_cutoffs = 0usize;
    let mut window_reward = 0.0;

    for step in 0..n_steps {
        if pos == order.len() {
            crate::policy::shuffle(&mut order, &mut stream_rng);
            pos = 0;
        }
        let utterance = &train[order[pos]];
        pos += 1;

        let observed = observe_features(utterance.id, &utterance.features, observation)?.to_dense();
        let (action, predicted) = agent.step(&observed)?;
        let outcome = decode(utterance, action);
        let realized = reward.reward(&outcome);
        agent.learn(&observed, action, realized)?;

        if outcome.cutoff {
            window_cutoffs += 1;
        }
        window_reward += realized;
        steps.push(OnlineStep {
            utterance_id: utterance.id,
            action,
            predicted,
            reward: realized,
        });

        if (step + 1) % 1000 == 0 {
            trace.push(TraceRow {
                step: (step + 1) as u64,
                early_ep_rate: 100.0 * window_cutoffs as f64 / 1000.0,
                mean_reward: window_reward / 1000.0,
            });
            window_cutoffs = 0;
            window_reward = 0.0;
        }
    }
    Ok(OnlineRun { steps, trace })
}

/// Everything a run produces (wall-clock time is kept out so result files
/// are bit-reproducible; see [`RunMeta`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub name: String,
    pub config_hash: String,
    /// Baseline (always-standard on test) first, then the agent's report(s).
    pub reports: Vec<MetricsReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<TradeoffCurve>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_tau: Option<f64>,
}

impl RunResult {
    /// The agent's headline report (the last one).
    pub fn primary_report(&self) -> &MetricsReport {
        self.reports.last().expect("runs always produce reports")
    }

    pub fn baseline_report(&self) -> &MetricsReport {
        &self.reports[0]
    }
}

/// Non-deterministic run metadata, stored separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_clock_secs: f64,
}

/// Corpus splits materialized for a run.
#[derive(Debug)]
pub struct SplitCorpus {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

/// Generates (or loads) the corpus and splits it. In-memory splitting uses
/// the identical seeded shuffle as the corpus writer, so generating then
/// writing yields the same membership as writing then reading.
pub fn prepare_corpus(config: &ExperimentConfig) -> Result<SplitCorpus> {
    if let Some(dir) = &config.eval_corpus {
        return Ok(SplitCorpus {
            train: corpus::read_split_utterances(dir, Split::Train)?,
            dev: corpus::read_split_utterances(dir, Split::Dev)?,
            test: corpus::read_split_utterances(dir, Split::Test)?,
        });
    }
    let utterances = crate::sim::generate(&config.generator)?;
    let (train_idx, dev_idx, test_idx) =
        corpus::split_indices(utterances.len(), config.split_ratios, config.split_seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| utterances[i].clone()).collect();
    Ok(SplitCorpus {
        train: pick(&train_idx),
        dev: pick(&dev_idx),
        test: pick(&test_idx),
    })
}

/// Generates a corpus from the config and writes it as corpus files.
pub fn cmd_generate(config: &ExperimentConfig, out_dir: &Path) -> Result<CorpusManifest> {
    config.generator.validate()?;
    config.split_ratios.validate()?;
    let utterances = crate::sim::generate(&config.generator)?;
    corpus::write_corpus(&utterances, out_dir, config.split_ratios, config.split_seed)
}

/// Builds (observed dense features, label) pairs for supervised training.
fn supervised_dataset(
    utterances: &[Utterance],
    observation: &ObservationSpec,
) -> Result<Vec<(Vec<f64>, Class)>> {
    utterances
        .iter()
        .map(|u| {
            let observed = observe_features(u.id, &u.features, observation)?.to_dense();
            Ok((observed, u.label))
        })
        .collect()
}

/// Dev-set threshold selection: the tau with the best F1 (ties to the larger
/// tau, i.e. the more conservative operating point).
fn select_tau(dev_curve: &TradeoffCurve) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for p in &dev_curve.points {
        if let Some(f1) = p.report.f1 {
            let better = match best {
                None => true,
                Some((best_f1, best_tau)) => f1 > best_f1 || (f1 == best_f1 && p.knob > best_tau),
            };
            if better {
                best = Some((f1, p.knob));
            }
        }
    }
    best.map(|(_, tau)| tau)
}

/// The trained artifact a run leaves behind, for checkpointing.
#[derive(Debug, Clone)]
pub enum TrainedAgent {
    None,
    Bandit(Box<BanditAgent>),
    Classifier(Box<TrainedClassifier>),
}

/// A run's result plus its trained agent.
#[derive(Debug)]
pub struct RunOutput {
    pub result: RunResult,
    pub agent: TrainedAgent,
}

/// Runs one experiment end to end.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunResult> {
    cmd_run_full(config).map(|o| o.result)
}

/// As [`cmd_run`], also returning the trained agent for checkpointing.
pub fn cmd_run_full(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let corpus = prepare_corpus(config)?;
    run_on_corpus_full(config, &corpus)
}

/// As [`cmd_run`] with the corpus already materialized (used by sweeps to
/// avoid regenerating it per point).
pub fn run_on_corpus(config: &ExperimentConfig, corpus: &SplitCorpus) -> Result<RunResult> {
    run_on_corpus_full(config, corpus).map(|o| o.result)
}

pub fn run_on_corpus_full(config: &ExperimentConfig, corpus: &SplitCorpus) -> Result<RunOutput> {
    config.validate()?;
    let obs = &config.observation;
    let opts = &config.eval_options;

    if corpus.test.is_empty() {
        return Err(Error::Config(
            "test split is empty; check ratios and corpus size".into(),
        ));
    }

    let baseline = evaluate_policy(&StaticPolicyKind::StandardOnly, &corpus.test, obs, opts)?;
    let with_rel = |mut r: MetricsReport| {
        r.set_baseline(&baseline);
        r
    };

    let mut reports = vec![baseline.clone()];
    let mut curves = Vec::new();
    let mut trace = Vec::new();
    let mut selected_tau = None;
    let mut trained_agent = TrainedAgent::None;

    match &config.agent {
        AgentSpec::Static { policy } => {
            reports.push(with_rel(evaluate_policy(policy, &corpus.test, obs, opts)?));
        }
        AgentSpec::Oracle => {
            reports.push(with_rel(evaluate_policy(
                &OraclePolicy,
                &corpus.test,
                obs,
                opts,
            )?));
        }
        AgentSpec::Supervised {
            classifier,
            tau_sweep,
        } => {
            if corpus.train.is_empty() || corpus.dev.is_empty() {
                return Err(Error::Config(
                    "supervised runs need train and dev splits".into(),
                ));
            }
            let dataset = supervised_dataset(&corpus.train, obs)?;
            let mut trained = TrainedClassifier::train(&dataset, classifier)?;

            let dev_curve =
                sweep_classifier_thresholds(&trained, tau_sweep, &corpus.dev, obs, opts, None)?;
            let test_curve = sweep_classifier_thresholds(
                &trained,
                tau_sweep,
                &corpus.test,
                obs,
                opts,
                Some(&baseline),
            )?;
            let tau = select_tau(&dev_curve).unwrap_or(0.5);
            selected_tau = Some(tau);
            trained.threshold = Some(tau);

            let policy = ClassifierPolicy {
                classifier: &trained,
                tau,
            };
            reports.push(with_rel(evaluate_policy(&policy, &corpus.test, obs, opts)?));
            curves.push(dev_curve);
            curves.push(test_curve);
            trained_agent = TrainedAgent::Classifier(Box::new(trained));
        }
        AgentSpec::Bandit { bandit, reward } => {
            if corpus.train.is_empty() {
                return Err(Error::Config("bandit runs need a train split".into()));
            }
            let mut agent = BanditAgent::new(bandit)?;
            let online = run_bandit_online(
                &mut agent,
                &corpus.train,
                obs,
                reward,
                config.n_online_steps,
                config.split_seed,
            )?;
            trace = online.trace;

            let frozen = FrozenBanditPolicy {
                network: agent.network(),
            };
            reports.push(with_rel(evaluate_policy(&frozen, &corpus.test, obs, opts)?));
            trained_agent = TrainedAgent::Bandit(Box::new(agent));
        }
    }

    Ok(RunOutput {
        result: RunResult {
            name: config.name.clone(),
            config_hash: config.hash()?,
            reports,
            curves,
            trace,
            selected_tau,
        },
        agent: trained_agent,
    })
}

/// Writes the trained agent checkpoint into a run directory, if there is one.
pub fn write_checkpoint(
    dir: &Path,
    agent: &TrainedAgent,
    reward: Option<RewardSpec>,
) -> Result<()> {
    match agent {
        TrainedAgent::None => Ok(()),
        TrainedAgent::Bandit(b) => b.save_checkpoint(&dir.join("checkpoint.json"), reward),
        TrainedAgent::Classifier(c) => c.save_checkpoint(&dir.join("checkpoint.json")),
    }
}

/// Bandit reward-ratio sweep: each point is a fresh online run (same seeds)
/// with a different cutoff weight, indexed by `beta / alpha`. Points run in a
/// small worker pool; results keep input order.
pub fn sweep_bandit_reward_ratios(
    config: &ExperimentConfig,
    betas: &[f64],
) -> Result<TradeoffCurve> {
    let AgentSpec::Bandit { reward, .. } = &config.agent else {
        return Err(Error::Config(
            "reward-ratio sweeps need a bandit agent".into(),
        ));
    };
    if betas.len() < 2 {
        return Err(Error::Validation(
            "a sweep needs at least 2 knob values".into(),
        ));
    }
    let alpha = reward.alpha_latency;
    if alpha <= 0.0 {
        return Err(Error::Config(
            "beta/alpha sweep needs alpha_latency > 0".into(),
        ));
    }

    let corpus = prepare_corpus(config)?;
    let mut results: Vec<Option<Result<RunResult>>> = (0..betas.len()).map(|_| None).collect();

    std::thread::scope(|scope| {
        let corpus = &corpus;
        let mut handles = Vec::new();
        for (i, &beta) in betas.iter().enumerate() {
            let mut point_config = config.clone();
            point_config.name = format!("{}@beta={beta}", config.name);
            if let AgentSpec::Bandit { reward, .. } = &mut point_config.agent {
                reward.beta_cutoff = beta;
            }
            handles.push((i, scope.spawn(move || run_on_corpus(&point_config, corpus))));
        }
        for (i, handle) in handles {
            results[i] = Some(handle.join().expect("sweep worker panicked"));
        }
    });

    let mut points = Vec::with_capacity(betas.len());
    for (i, slot) in results.into_iter().enumerate() {
        let run = slot.expect("all sweep slots filled")?;
        points.push(CurvePoint {
            knob: betas[i] / alpha,
            report: run.primary_report().clone(),
        });
    }
    TradeoffCurve::new("beta_over_alpha", points)
}

/// Classifier threshold sweep as a standalone command: trains once, returns
/// the test-split curve with baseline-relative columns.
pub fn sweep_supervised_thresholds(
    config: &ExperimentConfig,
    taus: &[f64],
) -> Result<TradeoffCurve> {
    let AgentSpec::Supervised { classifier, .. } = &config.agent else {
        return Err(Error::Config(
            "threshold sweeps need a supervised agent".into(),
        ));
    };
    let corpus = prepare_corpus(config)?;
    if corpus.train.is_empty() || corpus.test.is_empty() {
        return Err(Error::Config(
            "threshold sweeps need train and test splits".into(),
        ));
    }
    let obs = &config.observation;
    let opts = &config.eval_options;
    let baseline = evaluate_policy(&StaticPolicyKind::StandardOnly, &corpus.test, obs, opts)?;
    let dataset = supervised_dataset(&corpus.train, obs)?;
    let trained = TrainedClassifier::train(&dataset, classifier)?;
    sweep_classifier_thresholds(&trained, taus, &corpus.test, obs, opts, Some(&baseline))
}

/// Writes the standard one-directory-per-run output layout.
pub fn write_run_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    result: &RunResult,
    meta: &RunMeta,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let pretty = |v: &str| {
        let mut s = v.to_string();
        s.push('\n');
        s
    };
    std::fs::write(
        dir.join("config.json"),
        pretty(&serde_json::to_string_pretty(config)?),
    )?;
    std::fs::write(
        dir.join("run.json"),
        pretty(&serde_json::to_string_pretty(result)?),
    )?;
    std::fs::write(
        dir.join("meta.json"),
        pretty(&serde_json::to_string_pretty(meta)?),
    )?;

    let mut csv = String::from(MetricsReport::csv_header());
    csv.push('\n');
    for report in &result.reports {
        csv.push_str(&report.csv_row(None));
        csv.push('\n');
    }
    for curve in &result.curves {
        for point in &curve.points {
            csv.push_str(&point.report.csv_row(Some(point.knob)));
            csv.push('\n');
        }
    }
    std::fs::write(dir.join("metrics.csv"), csv)?;

    let mut trace_csv = String::from("step,early_ep_rate,mean_reward\n");
    for row in &result.trace {
        trace_csv.push_str(&format!(
            "{},{},{}\n",
            row.step, row.early_ep_rate, row.mean_reward
        ));
    }
    std::fs::write(dir.join("trace.csv"), trace_csv)?;
    Ok(())
}

/// Named experiment presets mirroring the three study questions: feature
/// importance in the idealized setting, visible-information amount, and
/// supervised-vs-bandit on first-segment features.
pub fn preset(name: &str) -> Result<Vec<ExperimentConfig>> {
    use crate::sim::FeatureGroup;

    let base_generator = GeneratorConfig::default();
    let supervised = |name: &str, observation: ObservationSpec| ExperimentConfig {
        name: name.to_string(),
        generator: base_generator.clone(),
        split_ratios: SplitRatios::default(),
        split_seed: 0,
        observation,
        agent: AgentSpec::Supervised {
            classifier: ClassifierConfig::default(),
            tau_sweep: ExperimentConfig::default_tau_sweep(),
        },
        n_online_steps: 0,
        eval_corpus: None,
        eval_options: EvalOptions::default(),
    };

    match name {
        // Feature importance with the whole utterance visible: baselines,
        // oracle, the full-feature model, and one single-group model each.
        "idealized" => {
            let mut configs = Vec::new();
            for (run_name, agent) in [
                (
                    "standard_only",
                    AgentSpec::Static {
                        policy: StaticPolicyKind::StandardOnly,
                    },
                ),
                (
                    "relaxed_only",
                    AgentSpec::Static {
                        policy: StaticPolicyKind::RelaxedOnly,
                    },
                ),
                ("oracle", AgentSpec::Oracle),
            ] {
                configs.push(ExperimentConfig {
                    agent,
                    ..supervised(run_name, ObservationSpec::idealized())
                });
            }
            configs.push(supervised(
                "supervised_all_features",
                ObservationSpec::idealized(),
            ));
            for group in FeatureGroup::ALL {
                configs.push(supervised(
                    &format!("supervised_{}", group.name()),
                    ObservationSpec::with_groups([group]),
                ));
            }
            Ok(configs)
        }
        // Visible-fraction study: the same supervised model at X = 20/60/100.
        "information" => Ok(vec![
            supervised("supervised_x20", ObservationSpec::with_fraction(20.0)),
            supervised("supervised_x60", ObservationSpec::with_fraction(60.0)),
            supervised("supervised_x100", ObservationSpec::with_fraction(100.0)),
        ]),
        // Supervised vs bandit when only the initial wakeword-bearing
        // segment (~30% of the utterance) is visible. The intent domain is
        // excluded: it comes from the full command, which a speculative
        // listener has not heard yet.
        "first_segment" => {
            let mut groups: std::collections::BTreeSet<FeatureGroup> =
                FeatureGroup::ALL.into_iter().collect();
            groups.remove(&FeatureGroup::IntentDomain);
            let observation = ObservationSpec {
                mode: crate::sim::ObservationMode::FirstSegment,
                enabled_groups: groups,
                ..ObservationSpec::default()
            };
            let generator = GeneratorConfig {
                n_utterances: 125_000,
                ..base_generator
            };
            let bandit = ExperimentConfig {
                name: "bandit_first_segment".to_string(),
                generator: generator.clone(),
                split_ratios: SplitRatios::default(),
                split_seed: 0,
                observation: observation.clone(),
                agent: AgentSpec::Bandit {
                    bandit: BanditConfig {
                        learning_rate: 5e-3,
                        ..BanditConfig::default()
                    },
                    reward: RewardSpec::default(),
                },
                n_online_steps: 400_000,
                eval_corpus: None,
                eval_options: EvalOptions::default(),
            };
            let mut sup = supervised("supervised_first_segment", observation);
            sup.generator = generator;
            Ok(vec![sup, bandit])
        }
        other => Err(Error::Config(format!(
            "unknown preset '{other}' (expected idealized, information, or first_segment)"
        ))),
    }
}
