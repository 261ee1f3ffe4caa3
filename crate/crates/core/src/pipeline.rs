//! Per-record scoring of every configured method over a dataset.
//!
//! All scores are oriented so that larger means more uncertain. Scores
//! imported from elsewhere carry a declared [`Orientation`] and are negated
//! when lower values signal uncertainty.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use rayon::prelude::*;

use crate::annotation::{label_record, DEFAULT_ROUGE_THRESHOLD};
use crate::data_model::{Dataset, EmbeddingIndex, EmbeddingSet, RunRecord};
use crate::error::{Error, Result};
use crate::metrics::{MethodScore, ScoredDataset, ScoredRecord};
use crate::semantic::{
    discrete_semantic_entropy, exact_match_clusters, length_normalized_entropy, semantic_entropy,
    ClusterAssignment,
};
use crate::spectral::{build_matrix, effective_rank, eigenscore, singular_spectrum, DEFAULT_EIGENSCORE_ALPHA};

/// Built-in method names in canonical order.
pub const BUILTIN_METHODS: [&str; 5] = ["er", "es", "lne", "dse", "se"];

/// Largest tolerated fraction of failed records in [`score_dataset`].
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterSource {
    /// `cluster_id` stored on each sample.
    #[default]
    Ingested,
    /// Samples with identical normalized text.
    ExactMatch,
}

impl FromStr for ClusterSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ingested" => Ok(Self::Ingested),
            "exact-match" | "exact_match" => Ok(Self::ExactMatch),
            other => Err(Error::domain(format!("unknown cluster source {other:?}"))),
        }
    }
}

impl fmt::Display for ClusterSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ingested => "ingested",
            Self::ExactMatch => "exact-match",
        })
    }
}

/// Which direction of an imported score means "more uncertain".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    HigherIsUncertain,
    LowerIsUncertain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringConfig {
    /// Built-in names from [`BUILTIN_METHODS`] or keys of `external_scores`.
    pub methods: Vec<String>,
    pub alpha: f64,
    pub rouge_threshold: f64,
    pub cluster_source: ClusterSource,
    pub parallelism: usize,
    /// Orientation of each imported score. Imported scores without an entry
    /// are reported unavailable.
    pub externals: BTreeMap<String, Orientation>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            methods: BUILTIN_METHODS.iter().map(|m| m.to_string()).collect(),
            alpha: DEFAULT_EIGENSCORE_ALPHA,
            rouge_threshold: DEFAULT_ROUGE_THRESHOLD,
            cluster_source: ClusterSource::default(),
            parallelism: 1,
            externals: BTreeMap::new(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::domain("no methods requested"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::domain(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.rouge_threshold > 0.0 && self.rouge_threshold <= 1.0) {
            return Err(Error::domain(format!(
                "rouge threshold must be in (0, 1], got {}",
                self.rouge_threshold
            )));
        }
        if self.parallelism == 0 {
            return Err(Error::domain("parallelism must be at least 1"));
        }
        Ok(())
    }
}

fn clusters(record: &RunRecord, source: ClusterSource) -> Result<ClusterAssignment> {
    match source {
        ClusterSource::Ingested => ClusterAssignment::from_samples(&record.samples),
        ClusterSource::ExactMatch => Ok(exact_match_clusters(&record.samples)),
    }
}

fn dispersion_input(embeddings: Option<&EmbeddingSet>) -> Result<&EmbeddingSet> {
    let set = embeddings.ok_or_else(|| Error::domain("no embeddings"))?;
    if set.m() < 2 {
        return Err(Error::domain(format!("needs at least 2 embedding vectors, got {}", set.m())));
    }
    Ok(set)
}

fn external(record: &RunRecord, name: &str, config: &ScoringConfig) -> Result<f64> {
    let values: Vec<f64> = record.samples.iter().filter_map(|s| s.external_scores.get(name).copied()).collect();
    if values.is_empty() {
        return Err(Error::domain(format!("unknown method or no sample carries score {name:?}")));
    }
    let orientation = config
        .externals
        .get(name)
        .ok_or_else(|| Error::domain(format!("orientation of {name:?} not declared")))?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(match orientation {
        Orientation::HigherIsUncertain => mean,
        Orientation::LowerIsUncertain => -mean,
    })
}

fn compute(method: &str, record: &RunRecord, embeddings: Option<&EmbeddingSet>, config: &ScoringConfig) -> Result<f64> {
    match method {
        "er" => {
            let set = dispersion_input(embeddings)?;
            Ok(effective_rank(&singular_spectrum(&build_matrix(set))?)?.effective_rank)
        }
        "es" => Ok(eigenscore(&build_matrix(dispersion_input(embeddings)?), config.alpha)?.score),
        "lne" => length_normalized_entropy(&record.samples),
        "dse" => Ok(discrete_semantic_entropy(&clusters(record, config.cluster_source)?)),
        "se" => semantic_entropy(&clusters(record, config.cluster_source)?, &record.samples),
        other => external(record, other, config),
    }
}

/// Scores one record. Methods whose inputs are missing map to an
/// `unavailable` marker carrying the reason; the call fails only when no
/// requested method can be computed.
pub fn score_record(
    record: &RunRecord,
    embeddings: Option<&EmbeddingSet>,
    config: &ScoringConfig,
) -> Result<BTreeMap<String, MethodScore>> {
    let mut out = BTreeMap::new();
    let mut any = false;
    for method in &config.methods {
        let score = match compute(method, record, embeddings, config) {
            Ok(v) if v.is_finite() => {
                any = true;
                MethodScore::Value(v)
            }
            Ok(v) => MethodScore::unavailable(format!("non-finite result {v}")),
            Err(e) => MethodScore::unavailable(e.to_string()),
        };
        out.insert(method.clone(), score);
    }
    if !any {
        let reasons: Vec<String> = out
            .iter()
            .filter_map(|(m, s)| match s {
                MethodScore::Unavailable { unavailable } => Some(format!("{m}: {unavailable}")),
                MethodScore::Value(_) => None,
            })
            .collect();
        return Err(Error::domain(format!(
            "record {}: no requested method computable ({})",
            record.record_id,
            reasons.join("; ")
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordFailure {
    pub record_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringOutcome {
    pub scored: ScoredDataset,
    pub failures: Vec<RecordFailure>,
}

fn needs_embeddings(config: &ScoringConfig) -> bool {
    config.methods.iter().any(|m| m == "er" || m == "es")
}

fn score_one(
    record: &RunRecord,
    bytes: &[u8],
    index: Option<&EmbeddingIndex>,
    config: &ScoringConfig,
) -> Result<ScoredRecord> {
    let set = match index {
        Some(ix) => Some(ix.load(Cursor::new(bytes), &record.embedding_ref)?),
        None => None,
    };
    let scores = score_record(record, set.as_ref(), config)?;
    Ok(ScoredRecord {
        record_id: record.record_id.clone(),
        scores,
        label: label_record(record, config.rouge_threshold),
    })
}

/// Scores and labels every record in input order. Records that fail are
/// listed in the outcome; the run fails if more than
/// [`MAX_FAILURE_FRACTION`] of them do.
pub fn score_records(
    name: &str,
    records: &[RunRecord],
    embeddings: Option<(&[u8], &EmbeddingIndex)>,
    config: &ScoringConfig,
) -> Result<ScoringOutcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))?;
    let (bytes, index) = match embeddings {
        Some((b, i)) => (b, Some(i)),
        None => (&[][..], None),
    };
    let results: Vec<Result<ScoredRecord>> =
        pool.install(|| records.par_iter().map(|r| score_one(r, bytes, index, config)).collect());

    let mut scored = ScoredDataset { name: name.to_string(), records: Vec::with_capacity(records.len()) };
    let mut failures = Vec::new();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(s) => scored.records.push(s),
            Err(e) => {
                log::warn!("record {} failed: {e}", record.record_id);
                failures.push(RecordFailure { record_id: record.record_id.clone(), message: e.to_string() });
            }
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * records.len() as f64 {
        return Err(Error::domain(format!(
            "{} of {} records failed to score (first: {}: {})",
            failures.len(),
            records.len(),
            failures[0].record_id,
            failures[0].message
        )));
    }
    Ok(ScoringOutcome { scored, failures })
}

/// Reads, scores and labels a dataset on disk.
pub fn score_dataset(dataset: &Dataset, config: &ScoringConfig) -> Result<ScoringOutcome> {
    config.validate()?;
    let records = dataset.read_records()?;
    let loaded = if needs_embeddings(config) { Some(dataset.load_embeddings()?) } else { None };
    score_records(
        &dataset.manifest.dataset_name,
        &records,
        loaded.as_ref().map(|(b, i)| (b.as_slice(), i)),
        config,
    )
}
