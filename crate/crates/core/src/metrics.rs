//! Binary-classification metrics over soft predictions: ROC-AUC in its
//! rank-statistic form (ties credited 0.5) and sensitivity/specificity at
//! the fixed 0.5 decision threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores and counts of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub roc_auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|l| **l > 1) {
        return Err(Error::InvalidInput(format!("labels must be 0/1, got {l}")));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score {s}")));
    }
    let n_pos = labels.iter().filter(|l| **l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(format!(
            "ROC metrics need both classes, got {n_pos} positive / {n_neg} negative"
        )));
    }
    Ok((n_pos, n_neg))
}

/// Probability that a random positive outscores a random negative, with ties
/// credited 0.5 (the rank-sum estimator, computed in O(n log n)).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // midranks over tied groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Confusion counts and rates at the fixed threshold 0.5 (score >= 0.5 is
/// predicted positive), together with the ROC-AUC of the same scores.
pub fn confusion_at_half(scores: &[f64], labels: &[u8]) -> Result<EvalReport> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= 0.5, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(EvalReport {
        roc_auc: roc_auc(scores, labels)?,
        sensitivity: tp as f64 / n_pos as f64,
        specificity: tn as f64 / n_neg as f64,
        tp,
        fp,
        tn,
        fn_,
        n_pos,
        n_neg,
    })
}

/// Mean and standard deviation of one metric across repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MetricSummary {
        mean,
        std: var.sqrt(),
    }
}

/// Per-metric mean +/- std over repeated splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub runs: usize,
    pub roc_auc: MetricSummary,
    pub sensitivity: MetricSummary,
    pub specificity: MetricSummary,
}

pub fn summarize_reports(reports: &[EvalReport]) -> Result<SummaryReport> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no reports to summarize".into()));
    }
    let collect = |f: fn(&EvalReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    Ok(SummaryReport {
        runs: reports.len(),
        roc_auc: summarize(&collect(|r| r.roc_auc)),
        sensitivity: summarize(&collect(|r| r.sensitivity)),
        specificity: summarize(&collect(|r| r.specificity)),
    })
}
