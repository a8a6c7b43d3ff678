//! Calibration and accuracy metrics, plus the JSON run report.
//!
//! Per-class Brier score (one-vs-all, averaged over all samples):
//! `BS_c = (1/n) * sum_i (p_ic - [y_i == c])^2`.
//!
//! Reliability bins use the top-1 confidence. Bin `b` of `B` covers
//! `(b/B, (b+1)/B]`; a confidence of exactly 0 lands in bin 0.
//! `ece = sum_b (count_b / n) * |acc_b - conf_b|`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::net::argmax;

pub const DEFAULT_NUM_BINS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("label {label} at index {index} is out of range for {n} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        n: usize,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("confusion matrix has no samples")]
    EmptyMatrix,
    #[error("row {row} is not a probability distribution (sum {sum})")]
    BadDistribution { row: usize, sum: f64 },
    #[error("number of bins must be positive")]
    ZeroBins,
    #[error("confusion matrix needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// `counts[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let n = counts.len();
        if n < 2 {
            return Err(MetricsError::TooFewClasses(n));
        }
        if let Some(row) = counts.iter().find(|r| r.len() != n) {
            return Err(MetricsError::LengthMismatch {
                left: row.len(),
                right: n,
            });
        }
        Ok(Self { n, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    /// Plain CSV, `n` rows of `n` integer columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut counts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
            counts.push(row);
        }
        Self::from_counts(counts).map_err(|e| e.to_string())
    }

    /// Aligned text table: rows are actual classes, columns predicted; each cell
    /// shows the count and its share of the row.
    pub fn render_table(&self, class_names: Option<&[String]>) -> String {
        let names: Vec<String> = match class_names {
            Some(names) if names.len() == self.n => names.to_vec(),
            _ => (0..self.n).map(|i| i.to_string()).collect(),
        };
        let cells: Vec<Vec<String>> = self
            .counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| {
                        let pct = if sum == 0 {
                            0.0
                        } else {
                            100.0 * c as f64 / sum as f64
                        };
                        format!("{c} {pct:.2}%")
                    })
                    .collect()
            })
            .collect();
        let label_w = names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("actual\\pred".len());
        let col_w: Vec<usize> = (0..self.n)
            .map(|j| {
                cells
                    .iter()
                    .map(|r| r[j].len())
                    .chain([names[j].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:<label_w$}", "actual\\pred");
        for (name, w) in names.iter().zip(&col_w) {
            let _ = write!(out, "  {name:>w$}");
        }
        out.push('\n');
        for (name, row) in names.iter().zip(&cells) {
            let _ = write!(out, "{name:<label_w$}");
            for (cell, w) in row.iter().zip(&col_w) {
                let _ = write!(out, "  {cell:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(
    pred_labels: &[usize],
    true_labels: &[usize],
    n: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    if pred_labels.len() != true_labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: pred_labels.len(),
            right: true_labels.len(),
        });
    }
    if n < 2 {
        return Err(MetricsError::TooFewClasses(n));
    }
    let mut counts = vec![vec![0u64; n]; n];
    for (index, (&p, &t)) in pred_labels.iter().zip(true_labels).enumerate() {
        for label in [p, t] {
            if label >= n {
                return Err(MetricsError::LabelOutOfRange { index, label, n });
            }
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { n, counts })
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / total as f64)
}

fn check_probs(probs: &Matrix, true_labels: &[usize]) -> Result<(), MetricsError> {
    if probs.rows() != true_labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: probs.rows(),
            right: true_labels.len(),
        });
    }
    let n = probs.cols();
    for (row, p) in probs.iter_rows().enumerate() {
        let sum: f64 = p.iter().sum();
        let in_range = p.iter().all(|v| (0.0..=1.0).contains(v));
        if !in_range || (sum - 1.0).abs() > 1e-9 {
            return Err(MetricsError::BadDistribution { row, sum });
        }
    }
    if let Some((index, &label)) = true_labels.iter().enumerate().find(|(_, &l)| l >= n) {
        return Err(MetricsError::LabelOutOfRange { index, label, n });
    }
    Ok(())
}

pub fn brier_per_class(probs: &Matrix, true_labels: &[usize]) -> Result<Vec<f64>, MetricsError> {
    check_probs(probs, true_labels)?;
    let n = probs.cols();
    let mut sums = vec![0.0; n];
    for (p, &t) in probs.iter_rows().zip(true_labels) {
        for (c, (s, &pc)) in sums.iter_mut().zip(p).enumerate() {
            let target = if c == t { 1.0 } else { 0.0 };
            *s += (pc - target) * (pc - target);
        }
    }
    let count = probs.rows().max(1) as f64;
    Ok(sums.into_iter().map(|s| s / count).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub mean_confidence: f64,
    pub accuracy: f64,
    pub count: u64,
}

fn bin_index(confidence: f64, num_bins: usize) -> usize {
    let edge = |b: usize| b as f64 / num_bins as f64;
    let mut b = ((confidence * num_bins as f64).ceil() as usize)
        .saturating_sub(1)
        .min(num_bins - 1);
    // repair rounding in the product against the exact edge values
    while b > 0 && confidence <= edge(b) {
        b -= 1;
    }
    while b + 1 < num_bins && confidence > edge(b + 1) {
        b += 1;
    }
    b
}

pub fn reliability_bins(
    probs: &Matrix,
    true_labels: &[usize],
    num_bins: usize,
) -> Result<(Vec<ReliabilityBin>, f64), MetricsError> {
    if num_bins == 0 {
        return Err(MetricsError::ZeroBins);
    }
    check_probs(probs, true_labels)?;
    let mut conf_sum = vec![0.0; num_bins];
    let mut correct = vec![0u64; num_bins];
    let mut counts = vec![0u64; num_bins];
    for (p, &t) in probs.iter_rows().zip(true_labels) {
        let top = argmax(p);
        let b = bin_index(p[top], num_bins);
        conf_sum[b] += p[top];
        counts[b] += 1;
        if top == t {
            correct[b] += 1;
        }
    }
    let total = probs.rows() as f64;
    let mut ece = 0.0;
    let bins = (0..num_bins)
        .map(|b| {
            let count = counts[b];
            let (mean_confidence, acc) = if count == 0 {
                (0.0, 0.0)
            } else {
                (conf_sum[b] / count as f64, correct[b] as f64 / count as f64)
            };
            if count > 0 {
                ece += count as f64 / total * (acc - mean_confidence).abs();
            }
            ReliabilityBin {
                lower: b as f64 / num_bins as f64,
                upper: (b + 1) as f64 / num_bins as f64,
                mean_confidence,
                accuracy: acc,
                count,
            }
        })
        .collect();
    Ok((bins, ece))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub method: String,
    pub beta: f64,
    pub seed: u64,
    pub dataset: String,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationReport {
    pub accuracy: f64,
    pub per_class_brier: Vec<f64>,
    pub mean_brier: f64,
    pub ece: f64,
    pub bins: Vec<ReliabilityBin>,
    pub confusion: ConfusionMatrix,
    pub metadata: ReportMetadata,
}

pub fn build_report(
    probs: &Matrix,
    true_labels: &[usize],
    metadata: ReportMetadata,
    num_bins: usize,
) -> Result<CalibrationReport, MetricsError> {
    check_probs(probs, true_labels)?;
    let preds: Vec<usize> = probs.iter_rows().map(argmax).collect();
    let confusion = confusion_matrix(&preds, true_labels, probs.cols())?;
    let per_class_brier = brier_per_class(probs, true_labels)?;
    let mean_brier = per_class_brier.iter().sum::<f64>() / per_class_brier.len() as f64;
    let (bins, ece) = reliability_bins(probs, true_labels, num_bins)?;
    Ok(CalibrationReport {
        accuracy: accuracy(&confusion)?,
        per_class_brier,
        mean_brier,
        ece,
        bins,
        confusion,
        metadata,
    })
}

impl CalibrationReport {
    /// Pretty JSON. `wallclock_s` always sits alone on its own line.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is always serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
