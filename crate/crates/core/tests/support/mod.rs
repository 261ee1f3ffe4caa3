//! Dataset builders shared by integration tests. Unlike `common`, these use
//! the library's writers.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use erank::data_model::{
    validate_dataset, write_embeddings, write_records, Dataset, DatasetManifest, EmbeddingSet, GenerationSample,
    LayerStrategy, RunRecord, FORMAT_VERSION,
};

pub fn record(id: &str, texts: &[&str], reference: &str) -> RunRecord {
    RunRecord {
        record_id: id.to_string(),
        question: format!("question {id}?"),
        references: vec![reference.to_string()],
        primary_answer: texts[0].to_string(),
        samples: texts.iter().map(|t| GenerationSample::new(*t).with_logprobs(vec![-0.25, -1.5])).collect(),
        embedding_ref: id.to_string(),
        temperature: 0.5,
        model_tag: "fixture".to_string(),
    }
}

pub fn write_dataset(dir: &Path, name: &str, items: &[(RunRecord, EmbeddingSet)]) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let records: Vec<RunRecord> = items.iter().map(|(r, _)| r.clone()).collect();
    write_records(&records, fs::File::create(dir.join("records.jsonl")).unwrap()).unwrap();
    write_embeddings(
        items.iter().map(|(r, e)| (r.embedding_ref.as_str(), e)),
        fs::File::create(dir.join("embeddings.bin")).unwrap(),
    )
    .unwrap();
    let manifest = DatasetManifest {
        dataset_name: name.to_string(),
        record_count: items.len(),
        embedding_file: "embeddings.bin".into(),
        records_file: "records.jsonl".into(),
        format_version: FORMAT_VERSION,
    };
    Dataset::write_manifest(dir, &manifest).unwrap()
}

/// Three records with three samples each and four-dimensional vectors.
pub fn tiny_dataset(dir: &Path) -> PathBuf {
    let items: Vec<(RunRecord, EmbeddingSet)> = (0..3)
        .map(|i| {
            let id = format!("q{i}");
            let rec = record(&id, &["paris", "paris", "lyon"], "paris");
            let data: Vec<f32> = (0..12).map(|j| ((i * 12 + j) as f32 * 0.37).sin()).collect();
            (rec, EmbeddingSet::new(3, 1, 4, data, LayerStrategy::M1).unwrap())
        })
        .collect();
    write_dataset(dir, "tiny", &items)
}

/// Truncates the embedding dump of the dataset at `manifest` to every
/// shorter length in turn and returns the lengths `validate` accepted.
pub fn undetected_truncations(manifest: &Path) -> (usize, Vec<usize>) {
    let dataset = Dataset::open(manifest).unwrap();
    assert!(validate_dataset(&dataset).is_valid());
    let path = dataset.embeddings_path();
    let original = fs::read(&path).unwrap();
    let mut missed = Vec::new();
    for len in 0..original.len() {
        fs::write(&path, &original[..len]).unwrap();
        if validate_dataset(&dataset).is_valid() {
            missed.push(len);
        }
    }
    fs::write(&path, &original).unwrap();
    (original.len(), missed)
}
