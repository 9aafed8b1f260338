//! Evaluation metrics: macro/micro F1, macro/micro AUROC and precision@K.
//!
//! Conventions:
//! - A per-class F1 with a zero denominator is 0 and still counts toward the
//!   macro average.
//! - Hard predictions, when not given explicitly, come from the argmax of the
//!   scores (multiclass, two-score binary; ties to the lower class), from
//!   `score >= threshold` on a single positive-class score (binary), or from
//!   per-class `score >= threshold` (multilabel).
//! - Multiclass and multilabel AUROC are one-vs-rest: macro is the
//!   unweighted mean over classes that have both positives and negatives,
//!   micro pools every (sample, class) pair.
//! - Top-K ties are broken by ascending class index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("EmptyInput: no predictions")]
    EmptyInput,
    #[error("SingleClassOnly: AUROC needs at least one positive and one negative")]
    SingleClassOnly,
    #[error("KExceedsClasses: k = {k} but only {classes} classes")]
    KExceedsClasses { k: usize, classes: usize },
    #[error("InvalidPrediction: sample {row}: {reason}")]
    InvalidPrediction { row: usize, reason: String },
    #[error("MalformedRecord: line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
}

type Result<T, E = MetricsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Multiclass,
    Multilabel,
    Binary,
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "multiclass" => Ok(Self::Multiclass),
            "multilabel" => Ok(Self::Multilabel),
            "binary" => Ok(Self::Binary),
            other => Err(format!("unknown task kind {other:?} (expected binary|multiclass|multilabel)")),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Multiclass => "multiclass",
            Self::Multilabel => "multilabel",
            Self::Binary => "binary",
        })
    }
}

/// A class index or a set of class indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Labels {
    Single(usize),
    Set(Vec<usize>),
}

impl Labels {
    fn to_vec(&self) -> Vec<usize> {
        match self {
            Labels::Single(c) => vec![*c],
            Labels::Set(s) => s.clone(),
        }
    }
}

/// One line of the predictions JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    #[serde(rename = "true")]
    pub truth: Labels,
    pub scores: Vec<f64>,
    /// Optional explicit hard prediction; derived from scores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<Labels>,
}

/// Validated predictions with per-sample truth and predicted label masks.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    task: TaskKind,
    class_count: usize,
    /// Per-class scores (binary single-score inputs are expanded to two).
    scores: Vec<Vec<f64>>,
    truth: Vec<Vec<bool>>,
    predicted: Vec<Vec<bool>>,
}

fn mask(labels: &[usize], classes: usize) -> Vec<bool> {
    let mut m = vec![false; classes];
    for &c in labels {
        m[c] = true;
    }
    m
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

impl PredictionSet {
    pub fn new(task: TaskKind, records: &[PredictionRecord], threshold: f64) -> Result<Self> {
        let first = records.first().ok_or(MetricsError::EmptyInput)?;
        let width = first.scores.len();
        let class_count = match task {
            TaskKind::Binary => 2,
            _ => width,
        };
        let invalid = |row: usize, reason: String| MetricsError::InvalidPrediction { row, reason };
        if class_count == 0 {
            return Err(invalid(0, "empty score vector".into()));
        }

        let mut set = PredictionSet {
            task,
            class_count,
            scores: Vec::with_capacity(records.len()),
            truth: Vec::with_capacity(records.len()),
            predicted: Vec::with_capacity(records.len()),
        };
        for (row, rec) in records.iter().enumerate() {
            if rec.scores.len() != width {
                return Err(invalid(row, format!("{} scores, expected {width}", rec.scores.len())));
            }
            if task == TaskKind::Binary && !(width == 1 || width == 2) {
                return Err(invalid(row, format!("binary tasks take 1 or 2 scores, got {width}")));
            }
            if rec.scores.iter().any(|s| !s.is_finite()) {
                return Err(invalid(row, "non-finite score".into()));
            }
            let truth = rec.truth.to_vec();
            match (task, &rec.truth) {
                (TaskKind::Multilabel, _) => {}
                (_, Labels::Single(_)) => {}
                (_, Labels::Set(_)) => {
                    return Err(invalid(row, format!("{task} truth must be a single class index")));
                }
            }
            if let Some(&c) = truth.iter().find(|&&c| c >= class_count) {
                return Err(invalid(row, format!("class {c} out of range for {class_count} classes")));
            }
            let scores = if task == TaskKind::Binary && width == 1 {
                vec![1.0 - rec.scores[0], rec.scores[0]]
            } else {
                rec.scores.clone()
            };
            let predicted = match &rec.pred {
                Some(p) => {
                    let p = p.to_vec();
                    if let Some(&c) = p.iter().find(|&&c| c >= class_count) {
                        return Err(invalid(row, format!("predicted class {c} out of range")));
                    }
                    if task != TaskKind::Multilabel && p.len() != 1 {
                        return Err(invalid(row, "single-label tasks predict exactly one class".into()));
                    }
                    p
                }
                None => match task {
                    TaskKind::Multilabel => (0..class_count).filter(|&c| scores[c] >= threshold).collect(),
                    TaskKind::Binary if width == 1 => vec![usize::from(rec.scores[0] >= threshold)],
                    _ => vec![argmax(&scores)],
                },
            };
            set.truth.push(mask(&truth, class_count));
            set.predicted.push(mask(&predicted, class_count));
            set.scores.push(scores);
        }
        Ok(set)
    }

    /// Single-label predictions from hard labels only. Scores are one-hot.
    pub fn from_labels(task: TaskKind, class_count: usize, y_true: &[usize], y_pred: &[usize]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(MetricsError::InvalidPrediction {
                row: y_true.len().min(y_pred.len()),
                reason: format!("{} truths vs {} predictions", y_true.len(), y_pred.len()),
            });
        }
        let records: Vec<PredictionRecord> = y_true
            .iter()
            .zip(y_pred)
            .enumerate()
            .map(|(i, (&t, &p))| PredictionRecord {
                id: i.to_string(),
                truth: Labels::Single(t),
                scores: (0..class_count).map(|c| if c == p { 1.0 } else { 0.0 }).collect(),
                pred: Some(Labels::Single(p)),
            })
            .collect();
        Self::new(task, &records, 0.5)
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn true_sets(&self) -> Vec<Vec<usize>> {
        self.truth.iter().map(|m| (0..m.len()).filter(|&c| m[c]).collect()).collect()
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    /// Per-class (tp, fp, fn).
    fn confusion(&self) -> Vec<(u64, u64, u64)> {
        let mut counts = vec![(0u64, 0u64, 0u64); self.class_count];
        for (t, p) in self.truth.iter().zip(&self.predicted) {
            for (c, entry) in counts.iter_mut().enumerate() {
                match (t[c], p[c]) {
                    (true, true) => entry.0 += 1,
                    (false, true) => entry.1 += 1,
                    (true, false) => entry.2 += 1,
                    (false, false) => {}
                }
            }
        }
        counts
    }

    /// Fraction of samples whose predicted label set equals the true set.
    pub fn accuracy(&self) -> f64 {
        let hits = self.truth.iter().zip(&self.predicted).filter(|(t, p)| t == p).count();
        hits as f64 / self.len() as f64
    }
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

pub fn macro_f1(preds: &PredictionSet) -> Result<f64> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let per_class = preds.confusion();
    Ok(per_class.iter().map(|&(tp, fp, fn_)| f1(tp, fp, fn_)).sum::<f64>() / per_class.len() as f64)
}

pub fn micro_f1(preds: &PredictionSet) -> Result<f64> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (tp, fp, fn_) = preds.confusion().into_iter().fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    Ok(f1(tp, fp, fn_))
}

/// Mann–Whitney AUROC: the probability that a random positive scores above a
/// random negative, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(MetricsError::InvalidPrediction {
            row: scores.len().min(labels.len()),
            reason: format!("{} scores vs {} labels", scores.len(), labels.len()),
        });
    }
    if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::InvalidPrediction { row, reason: "non-finite score".into() });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClassOnly);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of tie-averaged 1-based ranks over the positives; every term is a
    // half-integer, so the sum is exact.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let shared = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += shared * pos_in_group as f64;
        start = end;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

pub fn macro_auroc(preds: &PredictionSet) -> Result<f64> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if preds.task == TaskKind::Binary {
        return binary_auroc(preds);
    }
    let mut per_class = Vec::new();
    for c in 0..preds.class_count {
        let scores: Vec<f64> = preds.scores.iter().map(|s| s[c]).collect();
        let labels: Vec<bool> = preds.truth.iter().map(|t| t[c]).collect();
        match auroc(&scores, &labels) {
            Ok(v) => per_class.push(v),
            Err(MetricsError::SingleClassOnly) => continue,
            Err(e) => return Err(e),
        }
    }
    if per_class.is_empty() {
        return Err(MetricsError::SingleClassOnly);
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

pub fn micro_auroc(preds: &PredictionSet) -> Result<f64> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if preds.task == TaskKind::Binary {
        return binary_auroc(preds);
    }
    let scores: Vec<f64> = preds.scores.iter().flatten().copied().collect();
    let labels: Vec<bool> = preds.truth.iter().flatten().copied().collect();
    auroc(&scores, &labels)
}

fn binary_auroc(preds: &PredictionSet) -> Result<f64> {
    let scores: Vec<f64> = preds.scores.iter().map(|s| s[1]).collect();
    let labels: Vec<bool> = preds.truth.iter().map(|t| t[1]).collect();
    auroc(&scores, &labels)
}

/// Mean over samples of `|top-k classes ∩ true set| / k`.
pub fn precision_at_k(scores: &[Vec<f64>], true_sets: &[Vec<usize>], k: usize) -> Result<f64> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if scores.len() != true_sets.len() {
        return Err(MetricsError::InvalidPrediction {
            row: scores.len().min(true_sets.len()),
            reason: format!("{} score rows vs {} label sets", scores.len(), true_sets.len()),
        });
    }
    let classes = scores[0].len();
    if k == 0 || k > classes {
        return Err(MetricsError::KExceedsClasses { k, classes });
    }
    let mut total = 0.0;
    for (row, (s, truth)) in scores.iter().zip(true_sets).enumerate() {
        if s.len() != classes {
            return Err(MetricsError::InvalidPrediction {
                row,
                reason: format!("{} scores, expected {classes}", s.len()),
            });
        }
        let mut order: Vec<usize> = (0..classes).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        let hits = order[..k].iter().filter(|c| truth.contains(c)).count();
        total += hits as f64 / k as f64;
    }
    Ok(total / scores.len() as f64)
}

/// Report keyed exactly as the metrics JSON interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub macro_auc: Option<f64>,
    pub micro_auc: Option<f64>,
    pub p_at_k: Option<f64>,
}

/// Computes every metric. AUROC is `None` when undefined (single-class
/// truth); P@K is `None` when `k` is not given.
pub fn evaluate(preds: &PredictionSet, k: Option<usize>) -> Result<MetricReport> {
    let optional = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricsError::SingleClassOnly) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(MetricReport {
        macro_f1: macro_f1(preds)?,
        micro_f1: micro_f1(preds)?,
        macro_auc: optional(macro_auroc(preds))?,
        micro_auc: optional(micro_auroc(preds))?,
        p_at_k: k.map(|k| precision_at_k(&preds.scores, &preds.true_sets(), k)).transpose()?,
    })
}

pub fn parse_predictions_jsonl(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line)
            .map_err(|e| MetricsError::MalformedRecord { line: idx + 1, reason: e.to_string() })?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(records)
}
