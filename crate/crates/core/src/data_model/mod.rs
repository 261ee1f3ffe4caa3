//! Persisted dataset formats: run records (JSON lines), embedding dumps
//! (little-endian binary) and the manifest tying them together.

mod embeddings;
mod manifest;
mod records;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embeddings::{
    read_embeddings, write_embeddings, BlockHeader, EmbeddingIndex, EMBEDDING_MAGIC,
    EMBEDDING_VERSION,
};
pub use manifest::{validate_dataset, Dataset, DatasetManifest, RecordStatus, ValidationReport, FORMAT_VERSION};
pub use records::{read_records, write_records};

/// One sampled response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSample {
    pub text: String,
    /// Natural-log token probabilities. Empty for embedding-only datasets.
    #[serde(default)]
    pub token_logprobs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external_scores: BTreeMap<String, f64>,
}

impl GenerationSample {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            token_logprobs: Vec::new(),
            cluster_id: None,
            external_scores: BTreeMap::new(),
        }
    }

    pub fn with_logprobs(mut self, logprobs: Vec<f64>) -> Self {
        self.token_logprobs = logprobs;
        self
    }

    pub fn with_cluster(mut self, id: usize) -> Self {
        self.cluster_id = Some(id);
        self
    }
}

/// One question together with its sampled answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub record_id: String,
    pub question: String,
    pub references: Vec<String>,
    pub primary_answer: String,
    pub samples: Vec<GenerationSample>,
    /// Key of the block holding this record's vectors in the embedding dump.
    pub embedding_ref: String,
    pub temperature: f64,
    pub model_tag: String,
}

impl RunRecord {
    pub(crate) const FIELDS: &'static [&'static str] = &[
        "record_id",
        "question",
        "references",
        "primary_answer",
        "samples",
        "embedding_ref",
        "temperature",
        "model_tag",
    ];

    /// Checks the ingestion-time invariants. Dispersion scores need at least
    /// two samples but that is enforced when scoring.
    pub fn validate(&self) -> Result<()> {
        let id = &self.record_id;
        if id.is_empty() {
            return Err(Error::validation("empty record_id"));
        }
        if self.references.is_empty() {
            return Err(Error::validation(format!("record {id}: empty references")));
        }
        if self.samples.is_empty() {
            return Err(Error::validation(format!("record {id}: no samples")));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::validation(format!(
                "record {id}: temperature must be > 0, got {}",
                self.temperature
            )));
        }
        let count = self.samples.len();
        for (i, sample) in self.samples.iter().enumerate() {
            if let Some(lp) = sample
                .token_logprobs
                .iter()
                .find(|lp| !(lp.is_finite() && **lp <= 0.0))
            {
                return Err(Error::validation(format!(
                    "record {id}: sample {i} has token logprob {lp} (must be finite and <= 0)"
                )));
            }
            if let Some(c) = sample.cluster_id {
                if c >= count {
                    return Err(Error::validation(format!(
                        "record {id}: sample {i} cluster_id {c} >= sample count {count}"
                    )));
                }
            }
            if let Some((name, v)) = sample.external_scores.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "record {id}: sample {i} external score {name} is not finite ({v})"
                )));
            }
        }
        Ok(())
    }
}

/// Which decoder layers produced the vectors of an [`EmbeddingSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LayerStrategy {
    /// Exact middle layer.
    M1,
    /// Five layers centred on the middle one.
    M5,
    /// Final layer.
    L1,
    /// Last five layers.
    L5,
    /// Any other layout; `m2` is free.
    Custom,
}

impl LayerStrategy {
    pub fn code(self) -> u8 {
        match self {
            LayerStrategy::M1 => 0,
            LayerStrategy::M5 => 1,
            LayerStrategy::L1 => 2,
            LayerStrategy::L5 => 3,
            LayerStrategy::Custom => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => LayerStrategy::M1,
            1 => LayerStrategy::M5,
            2 => LayerStrategy::L1,
            3 => LayerStrategy::L5,
            4 => LayerStrategy::Custom,
            _ => return None,
        })
    }

    /// Layers per response implied by the strategy, `None` for `Custom`.
    pub fn layers_per_response(self) -> Option<usize> {
        match self {
            LayerStrategy::M1 | LayerStrategy::L1 => Some(1),
            LayerStrategy::M5 | LayerStrategy::L5 => Some(5),
            LayerStrategy::Custom => None,
        }
    }
}

impl fmt::Display for LayerStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerStrategy::M1 => "M1",
            LayerStrategy::M5 => "M5",
            LayerStrategy::L1 => "L1",
            LayerStrategy::L5 => "L5",
            LayerStrategy::Custom => "CUSTOM",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for LayerStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(LayerStrategy::M1),
            "M5" => Ok(LayerStrategy::M5),
            "L1" => Ok(LayerStrategy::L1),
            "L5" => Ok(LayerStrategy::L5),
            "CUSTOM" => Ok(LayerStrategy::Custom),
            other => Err(Error::validation(format!("unknown layer strategy {other:?}"))),
        }
    }
}

/// The `m1 * m2` hidden-state vectors of one record, stored row-major:
/// row `i * m2 + j` is layer `j` of response `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    m1: usize,
    m2: usize,
    n: usize,
    data: Vec<f32>,
    strategy: LayerStrategy,
}

impl EmbeddingSet {
    pub fn new(
        m1: usize,
        m2: usize,
        n: usize,
        data: Vec<f32>,
        strategy: LayerStrategy,
    ) -> Result<Self> {
        if m1 == 0 || m2 == 0 || n == 0 {
            return Err(Error::validation(format!(
                "embedding dimensions must be positive (m1={m1}, m2={m2}, n={n})"
            )));
        }
        if let Some(expected) = strategy.layers_per_response() {
            if m2 != expected {
                return Err(Error::validation(format!(
                    "strategy {strategy} implies m2={expected}, got m2={m2}"
                )));
            }
        }
        let expected = m1
            .checked_mul(m2)
            .and_then(|m| m.checked_mul(n))
            .ok_or_else(|| Error::validation("embedding dimensions overflow"))?;
        if data.len() != expected {
            return Err(Error::validation(format!(
                "expected {expected} components for {m1}x{m2} vectors of dimension {n}, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite component {} in vector {} (index {})",
                data[pos],
                pos / n,
                pos % n
            )));
        }
        Ok(Self { m1, m2, n, data, strategy })
    }

    /// Builds a set from explicit rows in response-major order.
    pub fn from_rows(
        m1: usize,
        m2: usize,
        rows: &[Vec<f32>],
        strategy: LayerStrategy,
    ) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.len() != m1 * m2 {
            return Err(Error::validation(format!(
                "vector count {} != m1*m2 = {}",
                rows.len(),
                m1 * m2
            )));
        }
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::validation(format!(
                "dimension mismatch: vector {i} has length {}, expected {n}",
                row.len()
            )));
        }
        Self::new(m1, m2, n, rows.concat(), strategy)
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    /// Total vector count `m1 * m2`.
    pub fn m(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn strategy(&self) -> LayerStrategy {
        self.strategy
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn vector(&self, index: usize) -> &[f32] {
        &self.data[index * self.n..(index + 1) * self.n]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.n)
    }
}
