//! Counterfactual utterance logs on disk.
//!
//! A corpus directory holds four files: `manifest` (JSON) plus `train`,
//! `dev`, `test` — line-delimited JSON records, one utterance per line.
//! Records carry the outcome under the standard configuration, optionally
//! the counterfactual relaxed outcome, optional feature groups, and an
//! optional label that must agree with the labeling rule (Class1 iff the
//! standard configuration cut the utterance off). The manifest records
//! per-split counts, positive rates (4 decimals), checksums, and the
//! feature-group dimensions.
//!
//! Readers stream records without loading a split into memory; writers
//! require exclusive access to the directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{
    Class, EndpointOutcome, FeatureVector, Utterance, AUDIO_DIM, HYPOTHESIS_DIM, INTENT_DOMAINS,
    PITCH_DIM,
};

pub const MANIFEST_VERSION: u32 = 1;

/// Labeling rule: an utterance cut off early under the standard
/// configuration is Class1 (optimal configuration: relaxed).
#[inline]
pub fn derive_label(outcome_standard: &EndpointOutcome) -> Class {
    if outcome_standard.cutoff {
        Class::Class1
    } else {
        Class::Class0
    }
}

/// The three corpus splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// One logged utterance. Feature groups are optional so externally prepared
/// logs can omit what they never extracted; durations are in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pause_duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wakeword_duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_domain: Option<u8>,
    pub outcome_standard: EndpointOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_relaxed: Option<EndpointOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Class>,
}

impl LogRecord {
    pub fn from_utterance(u: &Utterance) -> Self {
        Self {
            id: u.id,
            audio: Some(u.features.audio.clone()),
            hypothesis: Some(u.features.hypothesis.clone()),
            pause_duration: Some(u.features.pause_duration_ms),
            wakeword_duration: Some(u.features.wakeword_duration_ms),
            pitch: Some(u.features.pitch.clone()),
            intent_domain: Some(u.features.intent_domain),
            outcome_standard: u.outcome_standard,
            outcome_relaxed: Some(u.outcome_relaxed),
            label: Some(u.label),
        }
    }

    /// Checks group dimensions, finiteness, and label consistency.
    pub fn validate(&self) -> Result<()> {
        let id = self.id;
        if let Some(a) = &self.audio {
            if a.len() != AUDIO_DIM {
                return Err(Error::Corpus(format!(
                    "record {id}: audio has {} values, expected {AUDIO_DIM}",
                    a.len()
                )));
            }
        }
        if let Some(h) = &self.hypothesis {
            if h.len() != HYPOTHESIS_DIM {
                return Err(Error::Corpus(format!(
                    "record {id}: hypothesis has {} values, expected {HYPOTHESIS_DIM}",
                    h.len()
                )));
            }
        }
        if let Some(p) = &self.pitch {
            if p.len() != PITCH_DIM {
                return Err(Error::Corpus(format!(
                    "record {id}: pitch has {} values, expected {PITCH_DIM}",
                    p.len()
                )));
            }
        }
        if let Some(d) = self.intent_domain {
            if usize::from(d) >= INTENT_DOMAINS {
                return Err(Error::Corpus(format!(
                    "record {id}: intent_domain {d} out of range"
                )));
            }
        }
        let finite = self
            .audio
            .iter()
            .chain(self.hypothesis.iter())
            .chain(self.pitch.iter())
            .flatten()
            .chain(self.pause_duration.iter())
            .chain(self.wakeword_duration.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Corpus(format!(
                "record {id}: features must be finite"
            )));
        }
        if let Some(label) = self.label {
            if label != derive_label(&self.outcome_standard) {
                return Err(Error::Corpus(format!(
                    "record {id}: label {label:?} inconsistent with standard-configuration cutoff {}",
                    self.outcome_standard.cutoff
                )));
            }
        }
        Ok(())
    }

    /// Label from the record, falling back to the labeling rule.
    pub fn label_or_derived(&self) -> Class {
        self.label
            .unwrap_or_else(|| derive_label(&self.outcome_standard))
    }

    /// Rebuilds a full utterance; absent feature groups become zeros.
    ///
    /// Fails for standard-only observational records, which cannot feed the
    /// oracle or replay the relaxed arm.
    pub fn to_utterance(&self) -> Result<Utterance> {
        let outcome_relaxed = self.outcome_relaxed.ok_or_else(|| {
            Error::Corpus(format!(
                "record {}: standard-only observational record has no relaxed outcome",
                self.id
            ))
        })?;
        let mut features = FeatureVector::zeroed();
        if let Some(a) = &self.audio {
            features.audio = a.clone();
        }
        if let Some(h) = &self.hypothesis {
            features.hypothesis = h.clone();
        }
        if let Some(p) = self.pause_duration {
            features.pause_duration_ms = p;
        }
        if let Some(w) = self.wakeword_duration {
            features.wakeword_duration_ms = w;
        }
        if let Some(p) = &self.pitch {
            features.pitch = p.clone();
        }
        if let Some(d) = self.intent_domain {
            features.intent_domain = d;
        }
        Ok(Utterance {
            id: self.id,
            latent_slowness: None,
            features,
            outcome_standard: self.outcome_standard,
            outcome_relaxed,
            label: self.label_or_derived(),
        })
    }
}

/// Per-split statistics recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub records: u64,
    /// Positive-class (Class1) fraction, rounded to 4 decimals.
    pub positive_rate: f64,
    /// FNV-1a 64 of the split file bytes, hex.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub train: SplitStats,
    pub dev: SplitStats,
    pub test: SplitStats,
    /// Dense width per feature group.
    pub feature_dims: BTreeMap<String, usize>,
    /// True when any record lacks the relaxed counterfactual; such corpora
    /// cannot drive the oracle or relaxed-arm replay.
    pub standard_only: bool,
}

impl CorpusManifest {
    pub fn split(&self, split: Split) -> &SplitStats {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn total_records(&self) -> u64 {
        self.train.records + self.dev.records + self.test.records
    }
}

/// Split proportions; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        // The usual 8:1:1 discipline.
        Self {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("train", self.train),
            ("dev", self.dev),
            ("test", self.test),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!(
                    "split ratio {name} must be in [0,1], got {r}"
                )));
            }
        }
        let sum = self.train + self.dev + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    /// Exact split sizes: dev and test round to nearest, train takes the rest.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let mut dev = (self.dev * n as f64).round() as usize;
        let mut test = (self.test * n as f64).round() as usize;
        if dev + test > n {
            let over = dev + test - n;
            let cut = over.min(test);
            test -= cut;
            dev -= over - cut;
        }
        (n - dev - test, dev, test)
    }
}

/// Split membership by seeded shuffle: shuffled indices are dealt out as
/// train, then dev, then test, with sizes from [`SplitRatios::sizes`]. The
/// corpus writer uses exactly this, so splitting in memory and writing then
/// reading produce the same membership.
pub fn split_indices(
    n: usize,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    ratios.validate()?;
    let (n_train, n_dev, _) = ratios.sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut order, &mut rng);
    let test = order.split_off(n_train + n_dev);
    let dev = order.split_off(n_train);
    Ok((order, dev, test))
}

/// Writes utterances to a corpus directory, assigning splits by seeded
/// shuffle, and returns the manifest (also written as `manifest`).
pub fn write_corpus(
    utterances: &[Utterance],
    dir: &Path,
    ratios: SplitRatios,
    seed: u64,
) -> Result<CorpusManifest> {
    let records: Vec<LogRecord> = utterances.iter().map(LogRecord::from_utterance).collect();
    write_corpus_records(&records, dir, ratios, seed)
}

/// As [`write_corpus`], for pre-built records (optional fields allowed).
pub fn write_corpus_records(
    records: &[LogRecord],
    dir: &Path,
    ratios: SplitRatios,
    seed: u64,
) -> Result<CorpusManifest> {
    for r in records {
        r.validate()?;
    }
    let (train_idx, dev_idx, test_idx) = split_indices(records.len(), ratios, seed)?;
    std::fs::create_dir_all(dir)?;

    let mut stats = Vec::with_capacity(3);
    for (split, indices) in [
        (Split::Train, &train_idx),
        (Split::Dev, &dev_idx),
        (Split::Test, &test_idx),
    ] {
        let path = dir.join(split.file_name());
        let mut file = std::io::BufWriter::new(File::create(&path)?);
        let mut hash = Fnv64::new();
        let mut positives = 0u64;
        let mut count = 0u64;
        for &i in indices {
            let record = &records[i];
            let mut line = serde_json::to_string(record)?;
            line.push('\n');
            hash.update(line.as_bytes());
            file.write_all(line.as_bytes())?;
            if record.label_or_derived() == Class::Class1 {
                positives += 1;
            }
            count += 1;
        }
        file.flush()?;
        stats.push(SplitStats {
            records: count,
            positive_rate: round4(if count == 0 {
                0.0
            } else {
                positives as f64 / count as f64
            }),
            checksum: hash.hex(),
        });
    }

    let manifest = CorpusManifest {
        format_version: MANIFEST_VERSION,
        train: stats[0].clone(),
        dev: stats[1].clone(),
        test: stats[2].clone(),
        feature_dims: crate::sim::FeatureGroup::ALL
            .iter()
            .map(|g| (g.name().to_string(), g.dense_dim()))
            .collect(),
        standard_only: records.iter().any(|r| r.outcome_relaxed.is_none()),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest"), text)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest> {
    let path = dir.join("manifest");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Corpus(format!("cannot read manifest at {}: {e}", path.display())))?;
    let manifest: CorpusManifest = serde_json::from_str(&text)?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::Corpus(format!(
            "manifest format version {} unsupported (expected {MANIFEST_VERSION})",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

/// Streaming reader over one split; yields records in file order.
#[derive(Debug)]
pub struct RecordReader {
    lines: std::io::Lines<BufReader<File>>,
    path: PathBuf,
    line_no: usize,
}

impl Iterator for RecordReader {
    type Item = Result<LogRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: LogRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    return Some(Err(Error::Corpus(format!(
                        "{} line {}: malformed record: {e}",
                        self.path.display(),
                        self.line_no
                    ))));
                }
            };
            if let Err(e) = record.validate() {
                return Some(Err(Error::Corpus(format!(
                    "{} line {}: {e}",
                    self.path.display(),
                    self.line_no
                ))));
            }
            return Some(Ok(record));
        }
    }
}

/// Opens one split for streaming. Verifies the manifest version and the
/// split checksum (a single buffered pass, constant memory) before handing
/// out the record iterator.
pub fn read_split(dir: &Path, split: Split) -> Result<(CorpusManifest, RecordReader)> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(split.file_name());
    let expected = &manifest.split(split).checksum;

    let mut hash = Fnv64::new();
    let mut file = BufReader::new(File::open(&path)?);
    let mut buf = [0u8; 64 * 1024];
    loop {
        let read = file.read(&mut buf)?;
        if read == 0 {
            break;
        }
        hash.update(&buf[..read]);
    }
    let actual = hash.hex();
    if &actual != expected {
        return Err(Error::Corpus(format!(
            "checksum mismatch for {}: manifest has {expected}, file has {actual}",
            path.display()
        )));
    }

    let reader = RecordReader {
        lines: BufReader::new(File::open(&path)?).lines(),
        path,
        line_no: 0,
    };
    Ok((manifest, reader))
}

/// Reads one split fully into utterances (requires counterfactual outcomes).
pub fn read_split_utterances(dir: &Path, split: Split) -> Result<Vec<Utterance>> {
    let (_, reader) = read_split(dir, split)?;
    reader
        .map(|r| r.and_then(|rec| rec.to_utterance()))
        .collect()
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

fn shuffle<R: Rng + ?Sized>(order: &mut [usize], rng: &mut R) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// FNV-1a 64-bit, streaming.
struct Fnv64(u64);

impl Fnv64 {
    fn new() -> Self {
        Self(0xcbf29ce484222325)
    }

    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    fn hex(&self) -> String {
        format!("{:016x}", self.0)
    }
}

#[cfg(test)]
mod tests;
