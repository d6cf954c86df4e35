use std::path::Path;

use kgcp_core::gcp::FactorModel;
use kgcp_core::io::{
    label_paths, load_dataset_dir, load_labels, load_model, save_labels, save_model, ArtifactError, DataError,
    UnseenPolicy, HEADER_LEN,
};
use kgcp_core::{TrainConfig, TripleStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn write_splits(dir: &Path, train: &str, valid: &str, test: &str) {
    std::fs::write(dir.join("train.txt"), train).unwrap();
    std::fs::write(dir.join("valid.txt"), valid).unwrap();
    std::fs::write(dir.join("test.txt"), test).unwrap();
}

#[test]
fn two_line_dataset_round_trips_through_store() {
    let dir = tempfile::tempdir().unwrap();
    write_splits(dir.path(), "/m/a\t/r/x\t/m/b\n/m/b\t/r/y\t/m/c\n", "/m/a\t/r/y\t/m/c\n", "/m/c\t/r/x\t/m/a\n");
    let data = load_dataset_dir(dir.path(), UnseenPolicy::Strict).unwrap();
    assert_eq!(data.entities.labels().collect::<Vec<_>>(), ["/m/a", "/m/b", "/m/c"]);
    assert_eq!(data.relations.labels().collect::<Vec<_>>(), ["/r/x", "/r/y"]);
    let rebuilt = TripleStore::from_triples(data.train.triples(), 3, 2).unwrap();
    assert_eq!(rebuilt, data.train);

    let stats = data.stats();
    assert_eq!((stats.n_entities, stats.n_relations), (3, 2));
    assert_eq!((stats.train, stats.valid, stats.test), (2, 1, 1));
    assert_eq!(stats.train_test_overlap, 0);
    let text = stats.to_text();
    assert!(text.contains("n_entities: 3\n") && text.contains("test: 1\n"), "{text}");
    assert_eq!(data.provenance[0].lines, 2);
    assert_eq!(data.provenance[0].digest.len(), 64);
}

#[test]
fn overlaps_and_duplicates_are_reported_not_enforced() {
    let dir = tempfile::tempdir().unwrap();
    write_splits(dir.path(), "a\tr\tb\na\tr\tb\nb\tr\tc\n", "b\tr\tc\n", "c\tr\ta\n");
    let stats = load_dataset_dir(dir.path(), UnseenPolicy::Strict).unwrap().stats();
    assert_eq!(stats.train_duplicates, 1);
    assert_eq!(stats.train_valid_overlap, 1);
    assert_eq!(stats.train, 2);
}

#[test]
fn unseen_labels_follow_policy() {
    let dir = tempfile::tempdir().unwrap();
    write_splits(dir.path(), "a\tr\tb\n", "a\tr\tb\n", "a\tr\tb\nz\tr\ta\n");
    let extend = load_dataset_dir(dir.path(), UnseenPolicy::Extend).unwrap();
    assert_eq!(extend.entities.len(), 3);
    assert_eq!(extend.test.len(), 2);
    let lenient = load_dataset_dir(dir.path(), UnseenPolicy::Lenient).unwrap();
    assert_eq!((lenient.entities.len(), lenient.test.len()), (2, 1));
    assert_eq!(lenient.stats().test_dropped_unseen, 1);
    match load_dataset_dir(dir.path(), UnseenPolicy::Strict) {
        Err(DataError::UnseenLabel { line, label, .. }) => assert_eq!((line, label.as_str()), (2, "z")),
        other => panic!("expected unseen-label error, got {other:?}"),
    }
}

#[test]
fn malformed_line_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    write_splits(dir.path(), "a\tr\tb\nonly two\tfields\n", "", "");
    let err = load_dataset_dir(dir.path(), UnseenPolicy::Extend).unwrap_err();
    assert!(matches!(err, DataError::Malformed { line: 2, .. }), "{err}");
}

#[test]
fn artifact_with_labels_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    write_splits(dir.path(), "x\tp\ty\ny\tq\tz\n", "", "");
    let data = load_dataset_dir(dir.path(), UnseenPolicy::Extend).unwrap();
    let model = FactorModel::<f32>::random_normal(3, 2, 6, 0.05, &mut ChaCha8Rng::seed_from_u64(0));
    let path = dir.path().join("model.kge");
    let config = TrainConfig::default();
    save_model(&model, &config, &path).unwrap();
    let (ents, rels) = label_paths(&path);
    save_labels(&data.entities, &ents).unwrap();
    save_labels(&data.relations, &rels).unwrap();

    let loaded = load_model::<f32>(&path, false).unwrap();
    assert_eq!(loaded.model, model);
    assert_eq!(loaded.header.config_digest, config.digest());
    assert_eq!(load_labels(&ents).unwrap(), data.entities);
    assert_eq!(load_labels(&rels).unwrap().digest(), data.relations.digest());

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), HEADER_LEN + (3 + 2) * 6 * 4);
    std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    let err = load_model::<f32>(&path, false).unwrap_err();
    assert!(matches!(err, ArtifactError::TruncatedMatrix { .. }));
    assert!(err.to_string().starts_with("truncated matrix section"));
}
