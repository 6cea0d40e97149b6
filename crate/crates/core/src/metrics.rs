//! Per-face classification metrics from a confusion matrix.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featuregen::{class, N_CLASSES};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("class {class} out of range for a {n}-class matrix")]
    OutOfRange { class: usize, n: usize },
    #[error("matrix sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("no data")]
    NoData,
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new(N_CLASSES)
    }
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        ConfusionMatrix { n, counts: vec![0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, MetricsError> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(MetricsError::SizeMismatch(n, r.len()));
        }
        Ok(ConfusionMatrix { n, counts: rows.concat() })
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn accumulate(&mut self, truth: usize, pred: usize) -> Result<(), MetricsError> {
        for class in [truth, pred] {
            if class >= self.n {
                return Err(MetricsError::OutOfRange { class, n: self.n });
            }
        }
        self.counts[truth * self.n + pred] += 1;
        Ok(())
    }

    pub fn merge(&mut self, o: &ConfusionMatrix) -> Result<(), MetricsError> {
        if o.n != self.n {
            return Err(MetricsError::SizeMismatch(self.n, o.n));
        }
        for (a, b) in self.counts.iter_mut().zip(&o.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, c: usize) -> u64 {
        (0..self.n).map(|p| self.get(c, p)).sum()
    }

    pub fn predicted(&self, c: usize) -> u64 {
        (0..self.n).map(|t| self.get(t, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n.max(1)).map(<[u64]>::to_vec).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub class: usize,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scores {
    /// Classes with nonzero support, in class order.
    pub per_class: Vec<ClassScores>,
    /// Classes with zero support.
    pub absent: Vec<usize>,
    pub accuracy: f64,
    pub macro_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub total: u64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn class_scores(m: &ConfusionMatrix, c: usize) -> ClassScores {
    let total = m.total();
    let tp = m.get(c, c);
    let support = m.support(c);
    let fp = m.predicted(c) - tp;
    let fn_ = support - tp;
    let tn = total - tp - fp - fn_;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    ClassScores {
        class: c,
        tp,
        fp,
        fn_,
        tn,
        accuracy: ratio(tp + tn, total),
        precision,
        recall,
        f1: harmonic(precision, recall),
        support,
    }
}

pub fn scores(m: &ConfusionMatrix) -> Result<Scores, MetricsError> {
    let total = m.total();
    if total == 0 {
        return Err(MetricsError::NoData);
    }
    let (per_class, absent): (Vec<_>, Vec<_>) = (0..m.n).map(|c| class_scores(m, c)).partition(|s| s.support > 0);
    let k = per_class.len() as f64;
    let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    let correct: u64 = (0..m.n).map(|c| m.get(c, c)).sum();
    let accuracy = ratio(correct, total);
    Ok(Scores {
        macro_accuracy: mean(|s| s.accuracy),
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        micro_precision: accuracy,
        micro_recall: accuracy,
        micro_f1: accuracy,
        accuracy,
        absent: absent.into_iter().map(|s| s.class).collect(),
        per_class,
        total,
    })
}

impl fmt::Display for Scores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |x: f64| 100.0 * x;
        writeln!(f, "{:<12}{:>8}", "Metric", "Value %")?;
        writeln!(f, "{:<12}{:>8.2}", "Accuracy", pct(self.accuracy))?;
        writeln!(f, "{:<12}{:>8.2}", "Precision", pct(self.macro_precision))?;
        writeln!(f, "{:<12}{:>8.2}", "Recall", pct(self.macro_recall))?;
        writeln!(f, "{:<12}{:>8.2}", "F1", pct(self.macro_f1))?;
        writeln!(f, "faces evaluated: {}", self.total)?;
        writeln!(f)?;
        writeln!(f, "{:<4}{:<32}{:>10}{:>10}{:>10}{:>9}", "id", "class", "precision", "recall", "f1", "support")?;
        for s in &self.per_class {
            let name = class(s.class as u8).map_or("?", |c| c.display);
            writeln!(
                f,
                "{:<4}{:<32}{:>10.4}{:>10.4}{:>10.4}{:>9}",
                s.class, name, s.precision, s.recall, s.f1, s.support
            )?;
        }
        if !self.absent.is_empty() {
            let ids: Vec<String> = self.absent.iter().map(usize::to_string).collect();
            writeln!(f, "absent: {}", ids.join(", "))?;
        }
        Ok(())
    }
}
