use super::*;
use crate::sim::{generate, GeneratorConfig};
use proptest::prelude::*;

fn small_corpus(n: usize, seed: u64) -> Vec<Utterance> {
    generate(&GeneratorConfig {
        n_utterances: n,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

#[test]
fn derive_label_follows_the_cutoff_rule() {
    let cut = EndpointOutcome {
        latency_ms: 0,
        cutoff: true,
    };
    let ok = EndpointOutcome {
        latency_ms: 410,
        cutoff: false,
    };
    assert_eq!(derive_label(&cut), Class::Class1);
    assert_eq!(derive_label(&ok), Class::Class0);
    // Pure function: applying twice changes nothing.
    assert_eq!(derive_label(&cut), derive_label(&cut));
}

#[test]
fn default_ratios_split_10000_in_8_1_1() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(10_000, 1);
    let manifest = write_corpus(&corpus, dir.path(), SplitRatios::default(), 7).unwrap();
    assert_eq!(manifest.train.records, 8_000);
    assert_eq!(manifest.dev.records, 1_000);
    assert_eq!(manifest.test.records, 1_000);
}

#[test]
fn train_only_ratios_put_everything_in_train() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(500, 2);
    let ratios = SplitRatios {
        train: 1.0,
        dev: 0.0,
        test: 0.0,
    };
    let manifest = write_corpus(&corpus, dir.path(), ratios, 7).unwrap();
    assert_eq!(manifest.train.records, 500);
    assert_eq!(manifest.dev.records, 0);
    assert_eq!(manifest.test.records, 0);
}

#[test]
fn invalid_ratios_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(10, 3);
    let ratios = SplitRatios {
        train: 0.5,
        dev: 0.1,
        test: 0.1,
    };
    assert!(write_corpus(&corpus, dir.path(), ratios, 0).is_err());
}

#[test]
fn empty_corpus_round_trips_without_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(&[], dir.path(), SplitRatios::default(), 0).unwrap();
    assert_eq!(manifest.total_records(), 0);
    let (_, reader) = read_split(dir.path(), Split::Train).unwrap();
    assert_eq!(reader.count(), 0);
}

#[test]
fn round_trip_reproduces_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(3_000, 4);
    write_corpus(&corpus, dir.path(), SplitRatios::default(), 9).unwrap();

    let mut restored = Vec::new();
    for split in Split::ALL {
        let (_, reader) = read_split(dir.path(), split).unwrap();
        for record in reader {
            restored.push(record.unwrap());
        }
    }
    restored.sort_by_key(|r| r.id);
    let mut expected: Vec<LogRecord> = corpus.iter().map(LogRecord::from_utterance).collect();
    expected.sort_by_key(|r| r.id);
    assert_eq!(restored, expected);

    // Reconstructed utterances match the originals except for the latent
    // driver, which logs never carry.
    let u = restored[17].to_utterance().unwrap();
    let orig = corpus.iter().find(|o| o.id == u.id).unwrap();
    assert_eq!(u.features, orig.features);
    assert_eq!(u.outcome_standard, orig.outcome_standard);
    assert_eq!(u.outcome_relaxed, orig.outcome_relaxed);
    assert_eq!(u.label, orig.label);
    assert_eq!(u.latent_slowness, None);
}

#[test]
fn split_assignment_is_deterministic_in_the_seed() {
    let corpus = small_corpus(2_000, 5);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    write_corpus(&corpus, dir_a.path(), SplitRatios::default(), 42).unwrap();
    write_corpus(&corpus, dir_b.path(), SplitRatios::default(), 42).unwrap();
    for name in ["manifest", "train", "dev", "test"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn manifest_positive_rate_matches_a_recount() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(20_000, 6);
    let manifest = write_corpus(&corpus, dir.path(), SplitRatios::default(), 3).unwrap();
    for split in Split::ALL {
        let (_, reader) = read_split(dir.path(), split).unwrap();
        let mut positives = 0u64;
        let mut count = 0u64;
        for record in reader {
            if record.unwrap().label_or_derived() == Class::Class1 {
                positives += 1;
            }
            count += 1;
        }
        let stats = manifest.split(split);
        assert_eq!(stats.records, count);
        let recounted = if count == 0 {
            0.0
        } else {
            positives as f64 / count as f64
        };
        assert_eq!(stats.positive_rate, round4(recounted), "{split:?}");
    }
}

fn write_manual_corpus(dir: &Path, train_lines: &[&str]) {
    let mut body = String::new();
    for line in train_lines {
        body.push_str(line);
        body.push('\n');
    }
    let mut hash = Fnv64::new();
    hash.update(body.as_bytes());
    std::fs::write(dir.join("train"), &body).unwrap();
    std::fs::write(dir.join("dev"), "").unwrap();
    std::fs::write(dir.join("test"), "").unwrap();
    let empty = Fnv64::new().hex();
    let manifest = serde_json::json!({
        "format_version": MANIFEST_VERSION,
        "train": {"records": train_lines.len(), "positive_rate": 0.0, "checksum": hash.hex()},
        "dev": {"records": 0, "positive_rate": 0.0, "checksum": empty},
        "test": {"records": 0, "positive_rate": 0.0, "checksum": empty},
        "feature_dims": {},
        "standard_only": false,
    });
    std::fs::write(
        dir.join("manifest"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .unwrap();
}

#[test]
fn inconsistent_label_is_rejected_naming_the_record() {
    let dir = tempfile::tempdir().unwrap();
    // Cutoff=true but labeled class0.
    let bad = r#"{"id":77,"outcome_standard":{"latency_ms":0,"cutoff":true},"label":"class0"}"#;
    write_manual_corpus(dir.path(), &[bad]);
    let (_, mut reader) = read_split(dir.path(), Split::Train).unwrap();
    let err = reader.next().unwrap().unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("77") && msg.contains("label"), "{msg}");
}

#[test]
fn malformed_record_error_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let good = r#"{"id":1,"outcome_standard":{"latency_ms":350,"cutoff":false}}"#;
    write_manual_corpus(dir.path(), &[good, "{not json"]);
    let (_, mut reader) = read_split(dir.path(), Split::Train).unwrap();
    assert!(reader.next().unwrap().is_ok());
    let err = reader.next().unwrap().unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
}

#[test]
fn tampered_split_file_fails_the_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(100, 7);
    write_corpus(&corpus, dir.path(), SplitRatios::default(), 1).unwrap();
    let path = dir.path().join("train");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.extend_from_slice(b"tail garbage\n");
    std::fs::write(&path, bytes).unwrap();
    let err = read_split(dir.path(), Split::Train).unwrap_err();
    assert!(err.to_string().contains("checksum"), "{err}");
}

#[test]
fn unsupported_manifest_version_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&small_corpus(10, 8), dir.path(), SplitRatios::default(), 1).unwrap();
    let path = dir.path().join("manifest");
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replace("\"format_version\": 1", "\"format_version\": 99");
    std::fs::write(&path, text).unwrap();
    let err = read_manifest(dir.path()).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
}

#[test]
fn standard_only_records_are_flagged_and_cannot_feed_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let record = LogRecord {
        id: 0,
        audio: None,
        hypothesis: None,
        pause_duration: Some(120.0),
        wakeword_duration: None,
        pitch: None,
        intent_domain: Some(3),
        outcome_standard: EndpointOutcome {
            latency_ms: 300,
            cutoff: false,
        },
        outcome_relaxed: None,
        label: None,
    };
    let manifest = write_corpus_records(
        std::slice::from_ref(&record),
        dir.path(),
        SplitRatios {
            train: 1.0,
            dev: 0.0,
            test: 0.0,
        },
        0,
    )
    .unwrap();
    assert!(manifest.standard_only);
    let err = record.to_utterance().unwrap_err();
    assert!(err.to_string().contains("standard-only"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Write-read round trip is lossless for all field types, including
    /// optional groups and exact float values.
    #[test]
    fn record_round_trip_is_lossless(
        seeds in prop::collection::vec(prop::num::u64::ANY, 1..40),
        ratios_seed in prop::num::u64::ANY,
    ) {
        let records: Vec<LogRecord> = seeds
            .iter()
            .enumerate()
            .map(|(i, &s)| arbitrary_record(i as u64, s))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        write_corpus_records(&records, dir.path(), SplitRatios::default(), ratios_seed).unwrap();

        let mut restored = Vec::new();
        for split in Split::ALL {
            let (_, reader) = read_split(dir.path(), split).unwrap();
            for r in reader {
                restored.push(r.unwrap());
            }
        }
        restored.sort_by_key(|r| r.id);
        prop_assert_eq!(restored, records);
    }
}

/// Deterministic pseudo-random record with optional fields driven by `seed`.
fn arbitrary_record(id: u64, seed: u64) -> LogRecord {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut group = |dim: usize| -> Option<Vec<f64>> {
        if rng.random::<bool>() {
            Some((0..dim).map(|_| rng.random_range(-1e9..1e9)).collect())
        } else {
            None
        }
    };
    let audio = group(AUDIO_DIM);
    let hypothesis = group(HYPOTHESIS_DIM);
    let cutoff = rng.random::<bool>();
    let standard = EndpointOutcome {
        latency_ms: if cutoff {
            0
        } else {
            rng.random_range(0..5_000)
        },
        cutoff,
    };
    LogRecord {
        id,
        audio,
        hypothesis,
        pause_duration: rng.random::<bool>().then(|| rng.random_range(0.0..1e6)),
        wakeword_duration: rng.random::<bool>().then(|| rng.random_range(0.0..1e6)),
        pitch: if rng.random::<bool>() {
            Some(
                (0..PITCH_DIM)
                    .map(|_| rng.random_range(-10.0..10.0))
                    .collect(),
            )
        } else {
            None
        },
        intent_domain: rng
            .random::<bool>()
            .then(|| rng.random_range(0..INTENT_DOMAINS as u8)),
        outcome_standard: standard,
        outcome_relaxed: rng.random::<bool>().then(|| EndpointOutcome {
            latency_ms: rng.random_range(0..10_000),
            cutoff: cutoff && rng.random::<bool>(),
        }),
        label: rng.random::<bool>().then(|| derive_label(&standard)),
    }
}
