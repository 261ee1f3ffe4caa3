//! ROUGE-L labelling of primary answers against gold references.

use serde::{Deserialize, Serialize};

use crate::data_model::RunRecord;
use crate::text;

/// Answers scoring below this against every reference count as hallucinated.
pub const DEFAULT_ROUGE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HallucinationLabel {
    pub rouge_l: f64,
    pub is_hallucination: bool,
    pub matched_reference_index: usize,
}

/// Length of the longest common subsequence of two token lists.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure on normalized tokens with recall weight `beta`.
pub fn rouge_l_beta(candidate: &str, reference: &str, beta: f64) -> f64 {
    let c = text::tokens(candidate);
    let r = text::tokens(reference);
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return 0.0;
    }
    // (1 + b^2) P R / (R + b^2 P) with P = L/|c|, R = L/|r|, rearranged so the
    // beta = 1 case is the exact ratio 2L / (|c| + |r|).
    let b2 = beta * beta;
    (1.0 + b2) * lcs as f64 / (c.len() as f64 + b2 * r.len() as f64)
}

/// ROUGE-L F1.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    rouge_l_beta(candidate, reference, 1.0)
}

/// Best score over all references; ties keep the first reference.
pub fn label_answer(answer: &str, references: &[String], threshold: f64, beta: f64) -> HallucinationLabel {
    let mut best = (0.0, 0);
    for (i, r) in references.iter().enumerate() {
        let score = rouge_l_beta(answer, r, beta);
        if score > best.0 {
            best = (score, i);
        }
    }
    HallucinationLabel {
        rouge_l: best.0,
        is_hallucination: best.0 < threshold,
        matched_reference_index: best.1,
    }
}

pub fn label_record(record: &RunRecord, threshold: f64) -> HallucinationLabel {
    label_answer(&record.primary_answer, &record.references, threshold, 1.0)
}
