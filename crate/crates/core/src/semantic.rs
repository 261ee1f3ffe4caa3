//! Sampling-based baselines: length-normalized entropy, discrete semantic
//! entropy and semantic entropy.

use std::collections::HashMap;

use crate::data_model::GenerationSample;
use crate::error::{Error, Result};
use crate::spectral::shannon_entropy;
use crate::text;

/// Dense cluster labels, one per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    cluster_count: usize,
}

impl ClusterAssignment {
    /// Every label must be `< cluster_count` and every cluster non-empty.
    pub fn new(labels: Vec<usize>, cluster_count: usize) -> Result<Self> {
        if labels.is_empty() || cluster_count == 0 {
            return Err(Error::domain("cluster assignment needs at least one sample"));
        }
        let mut used = vec![false; cluster_count];
        for &l in &labels {
            *used.get_mut(l).ok_or_else(|| {
                Error::domain(format!("label {l} out of range for {cluster_count} clusters"))
            })? = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::domain(format!("cluster {empty} has no members")));
        }
        Ok(Self { labels, cluster_count })
    }

    /// Relabels arbitrary ids densely in first-occurrence order.
    pub fn from_raw_labels<I: IntoIterator<Item = T>, T: Eq + std::hash::Hash>(raw: I) -> Self {
        let mut ids = HashMap::new();
        let labels: Vec<usize> = raw
            .into_iter()
            .map(|key| {
                let next = ids.len();
                *ids.entry(key).or_insert(next)
            })
            .collect();
        Self { cluster_count: ids.len(), labels }
    }

    /// Uses the ingested `cluster_id` of every sample.
    pub fn from_samples(samples: &[GenerationSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("no samples"));
        }
        let ids = samples
            .iter()
            .enumerate()
            .map(|(i, s)| s.cluster_id.ok_or_else(|| Error::domain(format!("sample {i} has no cluster_id"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_raw_labels(ids))
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_count
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.cluster_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Groups samples whose normalized text is identical.
pub fn exact_match_clusters(samples: &[GenerationSample]) -> ClusterAssignment {
    ClusterAssignment::from_raw_labels(samples.iter().map(|s| text::normalize(&s.text)))
}

/// Entropy of cluster frequencies.
pub fn discrete_semantic_entropy(assignment: &ClusterAssignment) -> f64 {
    let total = assignment.labels.len() as f64;
    let probs: Vec<f64> = assignment.sizes().into_iter().map(|c| c as f64 / total).collect();
    shannon_entropy(&probs)
}

fn mean_logprob(sample: &GenerationSample, index: usize, method: &str) -> Result<f64> {
    if sample.token_logprobs.is_empty() {
        return Err(Error::domain(format!(
            "{method} requires token probabilities (sample {index} has none)"
        )));
    }
    Ok(sample.token_logprobs.iter().sum::<f64>() / sample.token_logprobs.len() as f64)
}

/// Entropy of clusters weighted by length-normalized sequence likelihood:
/// each sample contributes `exp(mean token logprob)` to its cluster.
pub fn semantic_entropy(assignment: &ClusterAssignment, samples: &[GenerationSample]) -> Result<f64> {
    if samples.len() != assignment.labels.len() {
        return Err(Error::domain(format!(
            "{} samples but {} cluster labels",
            samples.len(),
            assignment.labels.len()
        )));
    }
    let mut weights = vec![0.0; assignment.cluster_count];
    for (i, (sample, &label)) in samples.iter().zip(&assignment.labels).enumerate() {
        if sample.token_logprobs.is_empty() {
            return Err(Error::domain(format!(
                "SE requires token probabilities (sample {i} has none)"
            )));
        }
        weights[label] += mean_logprob(sample, i, "SE")?.exp();
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("semantic entropy weights underflowed to zero".into()));
    }
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    Ok(shannon_entropy(&probs))
}

/// Mean over samples of the per-token negative log-likelihood.
pub fn length_normalized_entropy(samples: &[GenerationSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("LNE needs at least one sample"));
    }
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        total -= mean_logprob(s, i, "LNE")?;
    }
    Ok(total / samples.len() as f64)
}
