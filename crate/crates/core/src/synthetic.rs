//! Synthetic datasets with a known hallucination signal, for exercising the
//! whole workflow without a language model.
//!
//! Each record is hallucinated with probability 0.5. Every sampled answer
//! gets an embedding `r * (u + spread * w_c + jitter * z)` where `u` is a
//! record-specific direction, `w_c` is one of [`DIRECTIONS`] orthonormal
//! directions chosen uniformly per sample and `z` is Gaussian noise.
//! Hallucinated records use `spread = HALLUCINATED_SPREAD`; correct records
//! shrink it by `1 - separation`, so at separation 0 both classes share one
//! embedding distribution.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data_model::{
    write_embeddings, write_records, Dataset, DatasetManifest, EmbeddingSet, GenerationSample, LayerStrategy,
    RunRecord, FORMAT_VERSION,
};
use crate::error::{Error, Result};

pub const MIN_RECORDS: usize = 10;
pub const SAMPLES_PER_RECORD: usize = 10;
pub const EMBEDDING_DIM: usize = 64;
/// Orthonormal spread directions per record.
pub const DIRECTIONS: usize = 4;
/// Wrong answers available to each record.
pub const DISTRACTORS: usize = 3;
pub const HALLUCINATED_SPREAD: f64 = 2.0;
const JITTER: f64 = 0.002;
const RADIUS: (f64, f64) = (8.0, 12.0);

pub const RECORDS_FILE: &str = "records.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `count` orthonormal vectors by Gram-Schmidt on Gaussian draws.
fn orthonormal(rng: &mut ChaCha8Rng, count: usize, n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, n);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

fn sample_logprobs(rng: &mut ChaCha8Rng, tokens: usize, hallucinated: bool, separation: f64) -> Vec<f64> {
    (0..tokens)
        .map(|_| {
            let wide: f64 = rng.random_range(0.3..2.0);
            let nll = if hallucinated { wide } else { (1.0 - separation) * wide + separation * rng.random_range(0.02..0.3) };
            -nll
        })
        .collect()
}

fn make_record(index: usize, rng: &mut ChaCha8Rng, separation: f64) -> Result<(RunRecord, EmbeddingSet)> {
    let id = format!("syn-{index:05}");
    let hallucinated = rng.random_bool(0.5);
    let reference = format!("answer{index} gold");
    let distractors: Vec<String> = (0..DISTRACTORS).map(|c| format!("decoy{index} option{c}")).collect();
    let p_wrong = if hallucinated { 1.0 } else { (1.0 - separation) * 0.5 };

    let mut samples = Vec::with_capacity(SAMPLES_PER_RECORD);
    for _ in 0..SAMPLES_PER_RECORD {
        let (text, cluster) = if rng.random_bool(p_wrong) {
            let c = rng.random_range(0..DISTRACTORS);
            (distractors[c].clone(), c + 1)
        } else {
            (reference.clone(), 0)
        };
        let lp = sample_logprobs(rng, 2, hallucinated, separation);
        samples.push(GenerationSample::new(text).with_logprobs(lp).with_cluster(cluster));
    }
    let primary_answer = if hallucinated { distractors[0].clone() } else { reference.clone() };

    let spread = if hallucinated { HALLUCINATED_SPREAD } else { HALLUCINATED_SPREAD * (1.0 - separation) };
    let mut basis = orthonormal(rng, DIRECTIONS + 1, EMBEDDING_DIM);
    let u = basis.remove(0);
    let radius = rng.random_range(RADIUS.0..RADIUS.1);
    let rows: Vec<Vec<f32>> = (0..SAMPLES_PER_RECORD)
        .map(|_| {
            let w = &basis[rng.random_range(0..DIRECTIONS)];
            let z = gaussian(rng, EMBEDDING_DIM);
            (0..EMBEDDING_DIM)
                .map(|j| (radius * (u[j] + spread * w[j] + JITTER * z[j])) as f32)
                .collect()
        })
        .collect();
    let set = EmbeddingSet::from_rows(SAMPLES_PER_RECORD, 1, &rows, LayerStrategy::M1)?;

    let record = RunRecord {
        record_id: id.clone(),
        question: format!("synthetic question {index}?"),
        references: vec![reference],
        primary_answer,
        samples,
        embedding_ref: id,
        temperature: 1.0,
        model_tag: "synthetic".into(),
    };
    Ok((record, set))
}

/// Generates `records` records and their embeddings in memory.
pub fn generate(records: usize, seed: u64, separation: f64) -> Result<Vec<(RunRecord, EmbeddingSet)>> {
    if records < MIN_RECORDS {
        return Err(Error::domain(format!("need at least {MIN_RECORDS} records, got {records}")));
    }
    if !(0.0..=1.0).contains(&separation) {
        return Err(Error::domain(format!("separation must be in [0, 1], got {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..records).map(|i| make_record(i, &mut rng, separation)).collect()
}

/// Writes a synthetic dataset into `out_dir` and returns the manifest path.
/// The output is byte-identical for identical arguments.
pub fn make_synthetic(out_dir: impl AsRef<Path>, records: usize, seed: u64, separation: f64) -> Result<PathBuf> {
    let data = generate(records, seed, separation)?;
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;

    let recs: Vec<RunRecord> = data.iter().map(|(r, _)| r.clone()).collect();
    let mut buf = Vec::new();
    write_records(&recs, &mut buf)?;
    fs::write(dir.join(RECORDS_FILE), buf)?;

    let mut buf = Vec::new();
    write_embeddings(data.iter().map(|(r, e)| (r.embedding_ref.as_str(), e)), &mut buf)?;
    fs::write(dir.join(EMBEDDINGS_FILE), buf)?;

    let manifest = DatasetManifest {
        dataset_name: format!("synthetic-seed{seed}-sep{separation}"),
        record_count: records,
        embedding_file: EMBEDDINGS_FILE.into(),
        records_file: RECORDS_FILE.into(),
        format_version: FORMAT_VERSION,
    };
    Dataset::write_manifest(dir, &manifest)
}
