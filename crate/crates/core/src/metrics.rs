//! Multi-label evaluation: Average Precision, 1 - Hamming Loss,
//! 1 - Ranking Loss, macro AUC, OneError and Coverage.
//!
//! Labels of a sample are ranked by descending score; equal scores are
//! ordered by label index. Pairwise statistics (ranking loss, AUC) give
//! half credit to ties.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{DclError, Result};
use crate::numerics::{map_indices, Exec, Matrix};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Column order of [`MetricsReport::csv_row`].
pub const CSV_HEADER: &str = "ap,one_minus_hl,one_minus_rl,auc,oe,cov,n_samples,n_labels,seed,epoch,auc_kind";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ap: f64,
    pub one_minus_hl: f64,
    pub one_minus_rl: f64,
    pub auc: f64,
    pub oe: f64,
    pub cov: f64,
    pub n_samples: usize,
    pub n_labels: usize,
    pub seed: Option<u64>,
    pub epoch: Option<usize>,
    /// Always "macro": AUC is averaged over labels.
    pub auc_kind: String,
}

impl MetricsReport {
    pub fn with_run(mut self, seed: u64, epoch: usize) -> Self {
        self.seed = Some(seed);
        self.epoch = Some(epoch);
        self
    }

    pub fn csv_row(&self) -> String {
        let opt = |o: Option<String>| o.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.ap,
            self.one_minus_hl,
            self.one_minus_rl,
            self.auc,
            self.oe,
            self.cov,
            self.n_samples,
            self.n_labels,
            opt(self.seed.map(|s| s.to_string())),
            opt(self.epoch.map(|e| e.to_string())),
            self.auc_kind
        )
    }

    /// One `key=value` per line.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let values = self.csv_row();
        for (k, v) in CSV_HEADER.split(',').zip(values.split(',')) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

fn check_shapes(scores: &Matrix, labels: &Matrix) -> Result<()> {
    if scores.shape() != labels.shape() {
        return Err(DclError::shape("metrics", scores.shape(), labels.shape()));
    }
    if scores.rows() == 0 || scores.cols() == 0 {
        return Err(DclError::Contract("empty evaluation set".into()));
    }
    Ok(())
}

/// Label indices of one sample from best to worst.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

fn sample_ap(scores: &[f64], labels: &[f64]) -> Option<f64> {
    let n_rel = labels.iter().filter(|&&y| y == 1.0).count();
    if n_rel == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (pos, &j) in ranking(scores).iter().enumerate() {
        if labels[j] == 1.0 {
            hits += 1;
            acc += hits as f64 / (pos + 1) as f64;
        }
    }
    Some(acc / n_rel as f64)
}

fn mean_of(values: impl Iterator<Item = Option<f64>>, what: &str) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        count += 1;
    }
    if count == 0 {
        return Err(DclError::Contract(format!("{what}: every sample/label was excluded")));
    }
    Ok(sum / count as f64)
}

/// Mean over samples with at least one relevant label.
pub fn average_precision(scores: &Matrix, labels: &Matrix) -> Result<f64> {
    average_precision_with(scores, labels, Exec::auto())
}

pub fn average_precision_with(scores: &Matrix, labels: &Matrix, exec: Exec) -> Result<f64> {
    check_shapes(scores, labels)?;
    let per = map_indices(exec, scores.rows(), |i| sample_ap(scores.row(i), labels.row(i)));
    mean_of(per.into_iter(), "average precision")
}

/// `1 - HL` with predictions `score >= threshold`.
pub fn hamming(scores: &Matrix, labels: &Matrix, threshold: f64) -> Result<f64> {
    check_shapes(scores, labels)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(DclError::Config(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let wrong = scores
        .as_slice()
        .iter()
        .zip(labels.as_slice())
        .filter(|(&t, &y)| (t >= threshold) != (y == 1.0))
        .count();
    Ok(1.0 - wrong as f64 / scores.len() as f64)
}

/// Fraction of mis-ordered (relevant, irrelevant) pairs, ties counted 1/2.
fn sample_ranking_loss(scores: &[f64], labels: &[f64]) -> Option<f64> {
    let mut irrel: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y != 1.0)
        .map(|(&s, _)| s)
        .collect();
    let rel: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1.0)
        .map(|(&s, _)| s)
        .collect();
    if rel.is_empty() || irrel.is_empty() {
        return None;
    }
    irrel.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut bad = 0.0;
    for &r in &rel {
        let below = irrel.partition_point(|&q| q < r);
        let not_above = irrel.partition_point(|&q| q <= r);
        let greater = irrel.len() - not_above;
        let equal = not_above - below;
        bad += greater as f64 + 0.5 * equal as f64;
    }
    Some(bad / (rel.len() * irrel.len()) as f64)
}

/// `1 - RL`, over samples with both relevant and irrelevant labels.
pub fn ranking_loss(scores: &Matrix, labels: &Matrix) -> Result<f64> {
    ranking_loss_with(scores, labels, Exec::auto())
}

pub fn ranking_loss_with(scores: &Matrix, labels: &Matrix, exec: Exec) -> Result<f64> {
    check_shapes(scores, labels)?;
    let per = map_indices(exec, scores.rows(), |i| {
        sample_ranking_loss(scores.row(i), labels.row(i))
    });
    Ok(1.0 - mean_of(per.into_iter(), "ranking loss")?)
}

/// Mann-Whitney statistic of one label column via midranks.
fn column_auc(scores: &[f64], labels: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let mid = (start + 1 + end) as f64 / 2.0;
        let pos_in_block = idx[start..end].iter().filter(|&&k| labels[k] == 1.0).count();
        rank_sum_pos += mid * pos_in_block as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Mean per-label AUC over labels that have both positive and negative samples.
pub fn macro_auc(scores: &Matrix, labels: &Matrix) -> Result<f64> {
    macro_auc_with(scores, labels, Exec::auto())
}

pub fn macro_auc_with(scores: &Matrix, labels: &Matrix, exec: Exec) -> Result<f64> {
    check_shapes(scores, labels)?;
    let per = map_indices(exec, scores.cols(), |j| {
        column_auc(&scores.column(j), &labels.column(j))
    });
    mean_of(per.into_iter(), "macro AUC")
}

/// Fraction of samples whose top-ranked label is not relevant.
pub fn one_error(scores: &Matrix, labels: &Matrix) -> Result<f64> {
    check_shapes(scores, labels)?;
    let wrong = (0..scores.rows())
        .filter(|&i| {
            let top = ranking(scores.row(i))[0];
            labels.get(i, top) != 1.0
        })
        .count();
    Ok(wrong as f64 / scores.rows() as f64)
}

fn sample_coverage(scores: &[f64], labels: &[f64]) -> Option<f64> {
    let order = ranking(scores);
    let worst = order.iter().rposition(|&j| labels[j] == 1.0)?;
    Some(worst as f64 / scores.len() as f64)
}

/// Mean of `(rank of the worst relevant label - 1) / C`; samples without
/// relevant labels are skipped (0 when none remain).
pub fn coverage(scores: &Matrix, labels: &Matrix) -> Result<f64> {
    check_shapes(scores, labels)?;
    let per: Vec<Option<f64>> = (0..scores.rows())
        .map(|i| sample_coverage(scores.row(i), labels.row(i)))
        .collect();
    Ok(mean_of(per.into_iter(), "coverage").unwrap_or(0.0))
}

pub fn evaluate_all(scores: &Matrix, labels: &Matrix) -> Result<MetricsReport> {
    evaluate_all_with(scores, labels, Exec::auto())
}

pub fn evaluate_all_with(scores: &Matrix, labels: &Matrix, exec: Exec) -> Result<MetricsReport> {
    check_shapes(scores, labels)?;
    Ok(MetricsReport {
        ap: average_precision_with(scores, labels, exec)?,
        one_minus_hl: hamming(scores, labels, DEFAULT_THRESHOLD)?,
        one_minus_rl: ranking_loss_with(scores, labels, exec)?,
        auc: macro_auc_with(scores, labels, exec)?,
        oe: one_error(scores, labels)?,
        cov: coverage(scores, labels)?,
        n_samples: scores.rows(),
        n_labels: scores.cols(),
        seed: None,
        epoch: None,
        auc_kind: "macro".into(),
    })
}
