//! Detector evaluation. Hallucinations are the positive class: a useful
//! uncertainty score ranks them above correct answers.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::HallucinationLabel;
use crate::error::{Error, Result};

/// A method's score for one record, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodScore {
    Value(f64),
    Unavailable { unavailable: String },
}

impl MethodScore {
    pub fn unavailable(reason: impl Into<String>) -> Self {
        MethodScore::Unavailable { unavailable: reason.into() }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            MethodScore::Value(v) => Some(*v),
            MethodScore::Unavailable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub record_id: String,
    pub scores: BTreeMap<String, MethodScore>,
    pub label: HallucinationLabel,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredDataset {
    pub name: String,
    pub records: Vec<ScoredRecord>,
}

impl ScoredDataset {
    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.label.is_hallucination).collect()
    }

    /// Scores for `method`, or an error naming the first record lacking one.
    pub fn method_scores(&self, method: &str) -> std::result::Result<Vec<f64>, String> {
        self.records
            .iter()
            .map(|r| match r.scores.get(method) {
                Some(MethodScore::Value(v)) => Ok(*v),
                Some(MethodScore::Unavailable { unavailable }) => {
                    Err(format!("{method} unavailable for record {}: {unavailable}", r.record_id))
                }
                None => Err(format!("{method} missing for record {}", r.record_id)),
            })
            .collect()
    }

    pub fn method_names(&self) -> BTreeSet<String> {
        self.records.iter().flat_map(|r| r.scores.keys().cloned()).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut sink: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut sink, r).map_err(|e| Error::Format(e.to_string()))?;
            sink.write_all(b"\n")?;
        }
        sink.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(name: impl Into<String>, source: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self { name: name.into(), records })
    }
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::domain(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::domain("NaN score"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::domain("AUROC undefined: labels contain a single class"));
    }
    Ok((n_pos, n_neg))
}

/// Area under the ROC curve with hallucination as the positive class, ties
/// counted half. Mid-rank formulation, `O(n log n)`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Doubled ranks keep mid-ranks integral: a tie group occupying 1-based
    // ranks start+1..=end has doubled mid-rank start + end + 1.
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let doubled_mid = (start + end + 1) as u64;
        let positives = order[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        doubled_rank_sum += doubled_mid * positives;
        start = end;
    }
    // 2U = 2R - n_pos (n_pos + 1)
    let doubled_u = doubled_rank_sum - (n_pos * (n_pos + 1)) as u64;
    Ok((doubled_u as f64 / 2.0) / (n_pos * n_neg) as f64)
}

/// ROC operating points `(fpr, tpr)` from the strictest threshold down,
/// starting at `(0, 0)`. Tied scores form one point.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_group {
            points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    pub iterations: usize,
    /// Resamples drawn with a single class and thrown away.
    pub redraws: usize,
}

impl BootstrapInterval {
    /// More than 10% of draws were degenerate.
    pub fn redraws_excessive(&self) -> bool {
        self.redraws * 10 > self.iterations
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap 95% interval for [`auroc`], resampling records.
pub fn bootstrap_ci(scores: &[f64], labels: &[bool], iterations: usize, seed: u64) -> Result<BootstrapInterval> {
    check_inputs(scores, labels)?;
    if iterations < 100 {
        return Err(Error::domain(format!("bootstrap needs at least 100 iterations, got {iterations}")));
    }
    let n = scores.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(iterations);
    let mut redraws = 0;
    let mut s = vec![0.0; n];
    let mut l = vec![false; n];
    // Cap so a near-degenerate sample cannot loop forever.
    let max_redraws = iterations.saturating_mul(100);
    while stats.len() < iterations {
        for k in 0..n {
            let i = rng.random_range(0..n);
            s[k] = scores[i];
            l[k] = labels[i];
        }
        match auroc(&s, &l) {
            Ok(a) => stats.push(a),
            Err(_) => {
                redraws += 1;
                if redraws > max_redraws {
                    return Err(Error::domain("bootstrap resamples are almost always single-class"));
                }
            }
        }
    }
    stats.sort_by(f64::total_cmp);
    let interval = BootstrapInterval {
        low: percentile(&stats, 0.025),
        high: percentile(&stats, 0.975),
        iterations,
        redraws,
    };
    if interval.redraws_excessive() {
        log::warn!("bootstrap: {redraws} of {} draws were single-class", iterations + redraws);
    }
    Ok(interval)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    /// `(iterations, seed)` for bootstrap intervals.
    pub bootstrap: Option<(usize, u64)>,
}

/// One row of an evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub dataset: String,
    pub method: String,
    pub auroc: Option<f64>,
    pub n: usize,
    pub n_pos: usize,
    pub ci: Option<BootstrapInterval>,
    pub error: Option<String>,
}

impl EvalRow {
    fn failed(dataset: &str, method: &str, n: usize, n_pos: usize, error: String) -> Self {
        Self {
            dataset: dataset.into(),
            method: method.into(),
            auroc: None,
            n,
            n_pos,
            ci: None,
            error: Some(error),
        }
    }
}

/// AUROC per method, rows sorted by method name. A method that cannot be
/// evaluated gets an error row; the others are unaffected.
pub fn evaluate(dataset: &ScoredDataset, methods: &[String], options: EvalOptions) -> Vec<EvalRow> {
    let labels = dataset.labels();
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&l| l).count();
    let methods: BTreeSet<&String> = methods.iter().collect();
    methods
        .into_iter()
        .map(|method| {
            let scores = match dataset.method_scores(method) {
                Ok(s) => s,
                Err(e) => return EvalRow::failed(&dataset.name, method, n, n_pos, e),
            };
            let value = match auroc(&scores, &labels) {
                Ok(v) => v,
                Err(e) => return EvalRow::failed(&dataset.name, method, n, n_pos, e.to_string()),
            };
            let ci = match options.bootstrap {
                Some((iters, seed)) => match bootstrap_ci(&scores, &labels, iters, seed) {
                    Ok(ci) => Some(ci),
                    Err(e) => return EvalRow::failed(&dataset.name, method, n, n_pos, e.to_string()),
                },
                None => None,
            };
            EvalRow {
                dataset: dataset.name.clone(),
                method: method.clone(),
                auroc: Some(value),
                n,
                n_pos,
                ci,
                error: None,
            }
        })
        .collect()
}

/// Evaluates each dataset, then appends `Average` rows with the mean AUROC of
/// each method across datasets.
pub fn evaluate_many(datasets: &[ScoredDataset], methods: &[String], options: EvalOptions) -> Vec<EvalRow> {
    let mut rows: Vec<EvalRow> = datasets.iter().flat_map(|d| evaluate(d, methods, options)).collect();
    if datasets.len() > 1 {
        let names: BTreeSet<&String> = methods.iter().collect();
        for method in names {
            let per: Vec<&EvalRow> = rows.iter().filter(|r| &r.method == method).collect();
            let n: usize = per.iter().map(|r| r.n).sum();
            let n_pos: usize = per.iter().map(|r| r.n_pos).sum();
            let failed = per.iter().filter(|r| r.auroc.is_none()).count();
            let avg = if failed > 0 {
                EvalRow::failed("Average", method, n, n_pos, format!("{failed} dataset(s) failed"))
            } else {
                let mean = per.iter().filter_map(|r| r.auroc).sum::<f64>() / per.len() as f64;
                EvalRow {
                    dataset: "Average".into(),
                    method: method.clone(),
                    auroc: Some(mean),
                    n,
                    n_pos,
                    ci: None,
                    error: None,
                }
            };
            rows.push(avg);
        }
    }
    rows
}

pub fn write_eval_csv<W: Write>(rows: &[EvalRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["dataset", "method", "auroc", "n", "n_pos", "ci_low", "ci_high", "error"])
        .map_err(csv_err)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.method.clone(),
            fmt(r.auroc),
            r.n.to_string(),
            r.n_pos.to_string(),
            fmt(r.ci.map(|c| c.low)),
            fmt(r.ci.map(|c| c.high)),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
