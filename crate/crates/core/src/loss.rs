//! Cross-entropy plus the class-similarity penalty.
//!
//! For one sample with logits `z`, true class `c`, `s = softmax(z)` and penalty
//! row `w = W[c]`:
//!
//! ```text
//! loss      = -ln(max(s_c, 1e-12)) + beta * (w . s)
//! dloss/dz  = (s - y) + beta * s ⊙ (w - (w . s))
//! ```
//!
//! `w . s` equals `y^T W s` for the one-hot `y`, at O(N) instead of O(N^2).

use crate::matrix::Matrix;
use crate::net::{softmax, softmax_in_place, NetError};
use crate::wmatrix::PenaltyMatrix;
use crate::MIN_CLASSES;

/// Lower bound applied to the true-class probability before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LossError {
    #[error("not a probability distribution: {0}")]
    BadDistribution(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {label} out of range for {n} classes")]
    LabelOutOfRange { label: usize, n: usize },
    #[error("beta must lie in [0, 1], got {0}")]
    InvalidBeta(f64),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl std::str::FromStr for Reduction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            other => Err(format!(
                "unknown reduction `{other}` (expected mean or sum)"
            )),
        }
    }
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Sum => "sum",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaseLoss {
    #[default]
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    beta: f64,
    pub reduction: Reduction,
    pub base: BaseLoss,
}

impl LossConfig {
    pub fn new(beta: f64, reduction: Reduction) -> Result<Self, LossError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(LossError::InvalidBeta(beta));
        }
        Ok(Self {
            beta,
            reduction,
            base: BaseLoss::CrossEntropy,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            reduction: Reduction::Mean,
            base: BaseLoss::CrossEntropy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotLabel {
    class: usize,
    n: usize,
}

impl OneHotLabel {
    pub fn new(class: usize, n: usize) -> Result<Self, LossError> {
        if n < MIN_CLASSES {
            return Err(LossError::DimensionMismatch(format!(
                "{n} classes; at least {MIN_CLASSES} required"
            )));
        }
        if class >= n {
            return Err(LossError::LabelOutOfRange { label: class, n });
        }
        Ok(Self { class, n })
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        v[self.class] = 1.0;
        v
    }
}

fn check_distribution(probs: &[f64], y: &OneHotLabel) -> Result<(), LossError> {
    if probs.len() != y.n {
        return Err(LossError::DimensionMismatch(format!(
            "{} probabilities for {} classes",
            probs.len(),
            y.n
        )));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(LossError::BadDistribution(format!(
            "entry {p} outside [0, 1]"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(LossError::BadDistribution(format!("sums to {sum}")));
    }
    Ok(())
}

fn check_penalty(w: &PenaltyMatrix, n: usize) -> Result<(), LossError> {
    if w.n() != n {
        return Err(LossError::DimensionMismatch(format!(
            "penalty matrix is {0}x{0}, expected {n}x{n}",
            w.n()
        )));
    }
    Ok(())
}

// + 0.0 turns -ln(1) = -0.0 into +0.0, so adding a zero penalty is a bitwise no-op
fn ce_from_prob(p: f64) -> f64 {
    -p.max(LOG_FLOOR).ln() + 0.0
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cross_entropy(probs: &[f64], y: &OneHotLabel) -> Result<f64, LossError> {
    check_distribution(probs, y)?;
    Ok(ce_from_prob(probs[y.class]))
}

pub fn domino_penalty(y: &OneHotLabel, probs: &[f64], w: &PenaltyMatrix) -> Result<f64, LossError> {
    check_distribution(probs, y)?;
    check_penalty(w, y.n)?;
    Ok(dot(w.row(y.class), probs))
}

pub fn domino_loss(
    logits: &[f64],
    y: &OneHotLabel,
    w: &PenaltyMatrix,
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    if logits.len() != y.n {
        return Err(LossError::DimensionMismatch(format!(
            "{} logits for {} classes",
            logits.len(),
            y.n
        )));
    }
    check_penalty(w, y.n)?;
    let s = softmax(logits)?;
    Ok(ce_from_prob(s[y.class]) + cfg.beta * dot(w.row(y.class), &s))
}

pub fn domino_loss_grad(
    logits: &[f64],
    y: &OneHotLabel,
    w: &PenaltyMatrix,
    cfg: &LossConfig,
) -> Result<Vec<f64>, LossError> {
    if logits.len() != y.n {
        return Err(LossError::DimensionMismatch(format!(
            "{} logits for {} classes",
            logits.len(),
            y.n
        )));
    }
    check_penalty(w, y.n)?;
    let mut grad = softmax(logits)?;
    loss_and_grad_in_place(&mut grad, y.class, Some(w), cfg.beta);
    Ok(grad)
}

/// Turns a probability row into the loss gradient in place and returns the loss.
/// `penalty = None` is the plain cross-entropy path.
fn loss_and_grad_in_place(
    s: &mut [f64],
    class: usize,
    penalty: Option<&PenaltyMatrix>,
    beta: f64,
) -> f64 {
    let ce = ce_from_prob(s[class]);
    match penalty {
        None => {
            s[class] -= 1.0;
            ce
        }
        Some(w) => {
            let row = w.row(class);
            let expected = dot(row, s);
            let pen_grad: Vec<f64> = s
                .iter()
                .zip(row)
                .map(|(sk, wk)| sk * (wk - expected))
                .collect();
            s[class] -= 1.0;
            for (g, pg) in s.iter_mut().zip(pen_grad) {
                *g += beta * pg;
            }
            ce + beta * expected
        }
    }
}

/// Reduced loss and its gradient with respect to every logit of a batch.
///
/// With `penalty = None` this is plain cross-entropy regardless of `cfg.beta`.
/// Reduction runs in sample order with 64-bit accumulation.
pub fn batch_loss_and_grad(
    logits: &Matrix,
    labels: &[usize],
    penalty: Option<&PenaltyMatrix>,
    cfg: &LossConfig,
) -> Result<(f64, Matrix), LossError> {
    let n = logits.cols();
    if labels.len() != logits.rows() {
        return Err(LossError::DimensionMismatch(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(w) = penalty {
        check_penalty(w, n)?;
    }
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= n {
            return Err(LossError::LabelOutOfRange { label, n });
        }
        let row = grad.row_mut(r);
        softmax_in_place(row)?;
        total += loss_and_grad_in_place(row, label, penalty, cfg.beta);
    }
    if cfg.reduction == Reduction::Mean && !labels.is_empty() {
        let scale = labels.len() as f64;
        total /= scale;
        for g in grad.as_mut_slice() {
            *g /= scale;
        }
    }
    Ok((total, grad))
}

pub fn batch_domino_loss(
    logits: &Matrix,
    labels: &[usize],
    w: &PenaltyMatrix,
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    batch_loss_and_grad(logits, labels, Some(w), cfg).map(|(l, _)| l)
}

/// Average of `W[y_i] . p_i` over predicted distributions `p_i`: the expected
/// penalty a model pays under `w` on a labeled set.
pub fn mean_domino_penalty(
    probs: &Matrix,
    labels: &[usize],
    w: &PenaltyMatrix,
) -> Result<f64, LossError> {
    check_penalty(w, probs.cols())?;
    if labels.len() != probs.rows() {
        return Err(LossError::DimensionMismatch(format!(
            "{} labels for {} probability rows",
            labels.len(),
            probs.rows()
        )));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (p, &label) in probs.iter_rows().zip(labels) {
        let y = OneHotLabel::new(label, probs.cols())?;
        total += domino_penalty(&y, p, w)?;
    }
    Ok(total / labels.len() as f64)
}

/// Per-pixel logits of a `height x width` label map.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMap {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    /// `height * width * classes`, pixel-major.
    pub data: Vec<f64>,
}

impl LogitMap {
    pub fn pixel(&self, r: usize, c: usize) -> &[f64] {
        let start = (r * self.width + c) * self.classes;
        &self.data[start..start + self.classes]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<usize>,
}

/// Mean of the per-pixel loss over every pixel of the map.
pub fn pixelwise_domino_loss(
    logit_map: &LogitMap,
    label_map: &LabelMap,
    w: &PenaltyMatrix,
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    let pixels = logit_map.height * logit_map.width;
    if logit_map.height != label_map.height
        || logit_map.width != label_map.width
        || logit_map.data.len() != pixels * logit_map.classes
        || label_map.labels.len() != pixels
    {
        return Err(LossError::DimensionMismatch(format!(
            "logit map {}x{}x{} ({} values) vs label map {}x{} ({} labels)",
            logit_map.height,
            logit_map.width,
            logit_map.classes,
            logit_map.data.len(),
            label_map.height,
            label_map.width,
            label_map.labels.len()
        )));
    }
    if pixels == 0 {
        return Err(LossError::DimensionMismatch("empty map".into()));
    }
    let mut total = 0.0;
    for (p, &label) in label_map.labels.iter().enumerate() {
        let y = OneHotLabel::new(label, logit_map.classes)?;
        let z = &logit_map.data[p * logit_map.classes..(p + 1) * logit_map.classes];
        total += domino_loss(z, &y, w, cfg)?;
    }
    Ok(total / pixels as f64)
}
