mod support;

use std::collections::BTreeMap;

use erank::data_model::{Dataset, EmbeddingSet, GenerationSample, LayerStrategy};
use erank::pipeline::{score_dataset, score_record, score_records, ClusterSource, Orientation, ScoringConfig};
use erank::synthetic::make_synthetic;
use support::record;

fn config(parallelism: usize) -> ScoringConfig {
    ScoringConfig { parallelism, ..ScoringConfig::default() }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_synthetic(dir.path(), 60, 4, 0.5).unwrap();
    let dataset = Dataset::open(&manifest).unwrap();
    let one = score_dataset(&dataset, &config(1)).unwrap();
    let many = score_dataset(&dataset, &config(8)).unwrap();
    assert_eq!(one, many);
    assert!(one.failures.is_empty());
}

#[test]
fn permuting_records_permutes_scores() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_synthetic(dir.path(), 30, 9, 0.9).unwrap();
    let dataset = Dataset::open(&manifest).unwrap();
    let records = dataset.read_records().unwrap();
    let (bytes, index) = dataset.load_embeddings().unwrap();
    let forward = score_records("d", &records, Some((&bytes, &index)), &config(2)).unwrap();
    let reversed_input: Vec<_> = records.iter().rev().cloned().collect();
    let mut backward = score_records("d", &reversed_input, Some((&bytes, &index)), &config(2)).unwrap();
    backward.scored.records.reverse();
    assert_eq!(forward.scored, backward.scored);
}

#[test]
fn one_corrupted_block_fails_only_its_record() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_synthetic(dir.path(), 100, 2, 0.9).unwrap();
    let dataset = Dataset::open(&manifest).unwrap();
    let (mut bytes, index) = dataset.load_embeddings().unwrap();
    let victim = &index.blocks()[37];
    let at = victim.data_offset as usize + 4 * 5;
    bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    let records = dataset.read_records().unwrap();
    let out = score_records("d", &records, Some((&bytes, &index)), &config(4)).unwrap();
    assert_eq!(out.scored.records.len(), 99);
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].record_id, victim.record_id);
    assert!(out.failures[0].message.contains("non-finite"));
}

#[test]
fn too_many_failures_abort_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_synthetic(dir.path(), 20, 2, 0.9).unwrap();
    let dataset = Dataset::open(&manifest).unwrap();
    let (mut bytes, index) = dataset.load_embeddings().unwrap();
    for block in &index.blocks()[..3] {
        let at = block.data_offset as usize;
        bytes[at..at + 4].copy_from_slice(&f32::INFINITY.to_le_bytes());
    }
    let records = dataset.read_records().unwrap();
    let err = score_records("d", &records, Some((&bytes, &index)), &config(1)).unwrap_err();
    assert!(err.to_string().contains("3 of 20"));
}

#[test]
fn identical_responses_collapse_every_dispersion_score() {
    let rec = record("same", &["yuri gagarin"; 5], "Yuri Gagarin");
    let rows = vec![vec![0.5f32, -1.0, 2.0, 0.25]; 5];
    let set = EmbeddingSet::from_rows(5, 1, &rows, LayerStrategy::M1).unwrap();
    let scores = score_record(&rec, Some(&set), &ScoringConfig { cluster_source: ClusterSource::ExactMatch, ..config(1) })
        .unwrap();
    let v = |m: &str| scores[m].value().unwrap();
    assert!((v("er") - 1.0).abs() < 1e-12);
    assert_eq!(v("dse"), 0.0);
    assert!((v("es") - 0.001f64.ln()).abs() < 1e-9);
    assert!((v("lne") - 0.875).abs() < 1e-12);
}

#[test]
fn missing_inputs_mark_methods_unavailable() {
    let mut rec = record("r", &["a", "b", "c"], "a");
    for s in &mut rec.samples {
        s.token_logprobs.clear();
    }
    // Ingested clusters are absent too, so nothing at all is computable.
    let err = score_record(&rec, None, &config(1)).unwrap_err().to_string();
    assert!(err.contains("no requested method computable"));
    // Exact-match clusters are always available, so DSE survives.
    let exact = ScoringConfig { cluster_source: ClusterSource::ExactMatch, ..config(1) };
    let scores = score_record(&rec, None, &exact).unwrap();
    assert!((scores["dse"].value().unwrap() - 3f64.ln()).abs() < 1e-12);
    assert!(scores["er"].value().is_none());
    assert!(scores["lne"].value().is_none());
    assert!(scores["se"].value().is_none());

    let only_er = ScoringConfig { methods: vec!["er".into()], ..config(1) };
    assert!(score_record(&rec, None, &only_er).is_err());
}

#[test]
fn external_scores_follow_declared_orientation() {
    let mut rec = record("r", &["a", "b"], "a");
    rec.samples = vec![
        GenerationSample::new("a").with_logprobs(vec![-0.1]),
        GenerationSample::new("b").with_logprobs(vec![-0.1]),
    ];
    rec.samples[0].external_scores.insert("conf".into(), 0.2);
    rec.samples[1].external_scores.insert("conf".into(), 0.6);
    let cfg = ScoringConfig {
        methods: vec!["conf".into()],
        externals: BTreeMap::from([("conf".to_string(), Orientation::LowerIsUncertain)]),
        ..config(1)
    };
    let v = score_record(&rec, None, &cfg).unwrap()["conf"].value().unwrap();
    assert!((v + 0.4).abs() < 1e-12);
}
