//! Confusion matrix, per-class precision/recall/F1 and binary ROC/AUC.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        for label in [truth, predicted] {
            if label >= self.k {
                return Err(Error::LabelOutOfRange { label, classes: self.k });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        self.col_sum(c) - self.counts[c][c]
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        self.row_sum(c) - self.counts[c][c]
    }

    pub fn true_negatives(&self, c: usize) -> u64 {
        self.total() + self.counts[c][c] - self.row_sum(c) - self.col_sum(c)
    }

    /// `true\pred` header row followed by one row per true class.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let name = |i: usize| class_names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut out = String::from("true\\pred");
        for j in 0..self.k {
            out.push(',');
            out.push_str(&name(j));
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&name(i));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch(truth.len(), predicted.len()));
    }
    let mut cm = ConfusionMatrix::new(k);
    for (&t, &p) in truth.iter().zip(predicted) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision, recall and F1 from raw counts; zero denominators give 0.
pub fn precision_recall_f1_counts(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, f1_score(p, r))
}

pub fn precision_recall_f1(cm: &ConfusionMatrix, class_index: usize) -> (f64, f64, f64) {
    precision_recall_f1_counts(
        cm.true_positives(class_index),
        cm.false_positives(class_index),
        cm.false_negatives(class_index),
    )
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::EmptyMatrix),
        n => Ok(cm.trace() as f64 / n as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
}

impl ClassReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for c in &self.classes {
            out.push_str(&format!("{},{},{},{},{}\n", c.class, c.precision, c.recall, c.f1, c.support));
        }
        out
    }
}

pub fn class_report(cm: &ConfusionMatrix, class_names: &[String]) -> Result<ClassReport> {
    if class_names.len() != cm.k {
        return Err(Error::LengthMismatch(class_names.len(), cm.k));
    }
    let classes = class_names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let (precision, recall, f1) = precision_recall_f1(cm, c);
            ClassMetrics {
                class: name.clone(),
                precision,
                recall,
                f1,
                support: cm.row_sum(c),
            }
        })
        .collect();
    Ok(ClassReport {
        classes,
        accuracy: accuracy(cm)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false_positive_rate, true_positive_rate)`, from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps thresholds over the distinct scores in descending order; tied
/// scores enter at one threshold. AUC by the trapezoidal rule.
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::LabelOutOfRange { label, classes: 2 });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidDistribution("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClassInput);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().expect("seeded with origin");
        let (x1, y1) = (fp as f64 / n, tp as f64 / p);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocCurve { points, auc })
}
