//! Deterministic mini-batch SGD with momentum, and the two-phase pipeline that
//! derives a penalty matrix from a baseline model's validation confusion.
//!
//! Update rule per parameter: `v = momentum * v + g; p = p - lr * v`.
//! Epoch order is a Fisher-Yates shuffle of sample indices drawn from
//! `SplitMix64::for_stream(seed, EPOCH_SHUFFLE)`; the last batch may be short.

use std::hash::Hasher;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::Dataset;
use crate::loss::{batch_loss_and_grad, LossConfig, LossError};
use crate::matrix::Matrix;
use crate::metrics::{
    build_report, confusion_matrix, CalibrationReport, ConfusionMatrix, MetricsError,
    ReportMetadata,
};
use crate::net::{
    argmax, backward, forward, init_params, softmax_in_place, Gradients, ModelParams, NetError,
};
use crate::rng::{streams, SplitMix64};
use crate::wmatrix::{build_w_cm, PenaltyMatrix, WMatrixError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("config does not match dataset: {0}")]
    ConfigDatasetMismatch(String),
    #[error("validation split has no samples of class {class}; cannot derive a penalty matrix")]
    DegenerateConfusion { class: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    WMatrix(#[from] WMatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Cross-entropy only.
    Baseline,
    /// Penalty from class groupings (or a hand-written matrix).
    Hc,
    /// Penalty from a baseline model's confusion matrix.
    Cm,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Hc => "hc",
            Method::Cm => "cm",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "hc" => Ok(Method::Hc),
            "cm" => Ok(Method::Cm),
            other => Err(format!(
                "unknown method `{other}` (expected baseline, hc or cm)"
            )),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub layer_sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub method: Method,
    /// Lower clamp for confusion-derived penalties.
    pub cm_floor: f64,
}

impl TrainConfig {
    pub fn new(layer_sizes: Vec<usize>, method: Method, loss: LossConfig, seed: u64) -> Self {
        Self {
            layer_sizes,
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            seed,
            loss,
            method,
            cm_floor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(0.0..1.0).contains(&self.cm_floor) {
            return bad(format!(
                "cm_floor must lie in [0, 1), got {}",
                self.cm_floor
            ));
        }
        init_params(&self.layer_sizes, self.seed)?;
        Ok(())
    }

    /// The beta actually applied: baseline runs never use the penalty.
    pub fn effective_beta(&self) -> f64 {
        match self.method {
            Method::Baseline => 0.0,
            _ => self.loss.beta(),
        }
    }

    /// FNV-1a 64 over a canonical text rendering (floats as raw bits).
    pub fn fingerprint(&self) -> u64 {
        let canonical = format!(
            "layers={:?};epochs={};batch={};lr={:016x};momentum={:016x};seed={};beta={:016x};reduction={};method={};floor={:016x}",
            self.layer_sizes,
            self.epochs,
            self.batch_size,
            self.learning_rate.to_bits(),
            self.momentum.to_bits(),
            self.seed,
            self.loss.beta().to_bits(),
            self.loss.reduction,
            self.method,
            self.cm_floor.to_bits(),
        );
        let mut h = fnv::FnvHasher::default();
        h.write(canonical.as_bytes());
        h.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the validation set is empty.
    pub val_accuracy: Option<f64>,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn total_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.wallclock_s).sum()
    }
}

fn check_compat(cfg: &TrainConfig, ds: &Dataset, what: &str) -> Result<(), TrainError> {
    if ds.feature_dim() != cfg.layer_sizes[0] {
        return Err(TrainError::ConfigDatasetMismatch(format!(
            "{what} features have dimension {}, network input is {}",
            ds.feature_dim(),
            cfg.layer_sizes[0]
        )));
    }
    let n = *cfg.layer_sizes.last().expect("validated");
    if ds.num_classes() != n {
        return Err(TrainError::ConfigDatasetMismatch(format!(
            "{what} has {} classes, network output is {n}",
            ds.num_classes()
        )));
    }
    Ok(())
}

fn gather(ds: &Dataset, indices: &[usize]) -> (Matrix, Vec<usize>) {
    let d = ds.feature_dim();
    let mut data = Vec::with_capacity(indices.len() * d);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        data.extend_from_slice(ds.features(i));
        labels.push(ds.label(i));
    }
    (
        Matrix::from_vec(indices.len(), d, data).expect("sized"),
        labels,
    )
}

fn sgd_step(
    params: &mut ModelParams,
    velocity: &mut Gradients,
    grads: &Gradients,
    lr: f64,
    momentum: f64,
) {
    let layers = velocity.weights.iter_mut().zip(velocity.biases.iter_mut());
    let grad_layers = grads.weights.iter().zip(&grads.biases);
    for (((w, b), (vw, vb)), (gw, gb)) in params.layers_mut().zip(layers).zip(grad_layers) {
        let pairs = w
            .as_mut_slice()
            .iter_mut()
            .zip(vw.as_mut_slice().iter_mut().zip(gw.as_slice()))
            .chain(b.iter_mut().zip(vb.iter_mut().zip(gb)));
        for (p, (v, g)) in pairs {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
    }
}

/// Trains from `init_params(cfg.layer_sizes, cfg.seed)`.
///
/// `penalty` must be given for `hc`/`cm` and absent for `baseline`.
pub fn train(
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    penalty: Option<&PenaltyMatrix>,
) -> Result<(Checkpoint, TrainHistory), TrainError> {
    train_observed(cfg, train_set, val_set, penalty, |_, _| {})
}

/// [`train`], calling `observer(epoch, params)` after every epoch.
pub fn train_observed(
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    penalty: Option<&PenaltyMatrix>,
    mut observer: impl FnMut(usize, &ModelParams),
) -> Result<(Checkpoint, TrainHistory), TrainError> {
    cfg.validate()?;
    check_compat(cfg, train_set, "training set")?;
    if !val_set.is_empty() {
        check_compat(cfg, val_set, "validation set")?;
    }
    let penalty = match (cfg.method, penalty) {
        (Method::Baseline, None) => None,
        (Method::Baseline, Some(_)) => {
            return Err(TrainError::Config(
                "method=baseline takes no penalty matrix".into(),
            ))
        }
        (_, None) => {
            return Err(TrainError::Config(format!(
                "method={} requires a penalty matrix",
                cfg.method
            )))
        }
        (_, Some(w)) => {
            let n = *cfg.layer_sizes.last().expect("validated");
            if w.n() != n {
                return Err(TrainError::ConfigDatasetMismatch(format!(
                    "penalty matrix is {0}x{0} but there are {n} classes",
                    w.n()
                )));
            }
            Some(w)
        }
    };

    let mut params = init_params(&cfg.layer_sizes, cfg.seed)?;
    let mut velocity = Gradients::zeros_like(&params);
    let mut rng = SplitMix64::for_stream(cfg.seed, streams::EPOCH_SHUFFLE);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = gather(train_set, chunk);
            let (logits, cache) = forward(&params, &x)?;
            let (loss, dlogits) = batch_loss_and_grad(&logits, &labels, penalty, &cfg.loss)?;
            loss_sum += match cfg.loss.reduction {
                crate::loss::Reduction::Mean => loss * chunk.len() as f64,
                crate::loss::Reduction::Sum => loss,
            };
            let grads = backward(&params, &cache, &dlogits)?;
            sgd_step(
                &mut params,
                &mut velocity,
                &grads,
                cfg.learning_rate,
                cfg.momentum,
            );
        }
        let val_accuracy = if val_set.is_empty() {
            None
        } else {
            let (_, preds) = predict_params(&params, val_set)?;
            let correct = preds
                .iter()
                .enumerate()
                .filter(|(i, &p)| val_set.label(*i) == p)
                .count();
            Some(correct as f64 / val_set.len() as f64)
        };
        history.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len().max(1) as f64,
            val_accuracy,
            wallclock_s: start.elapsed().as_secs_f64(),
        });
        observer(epoch, &params);
    }
    Ok((
        Checkpoint {
            params,
            config_fingerprint: cfg.fingerprint(),
        },
        history,
    ))
}

const PREDICT_CHUNK: usize = 1024;

fn predict_params(params: &ModelParams, data: &Dataset) -> Result<(Matrix, Vec<usize>), NetError> {
    if data.feature_dim() != params.input_dim() {
        return Err(NetError::ShapeMismatch {
            expected: format!("feature dimension {}", params.input_dim()),
            actual: format!("feature dimension {}", data.feature_dim()),
        });
    }
    let n = params.num_classes();
    let mut probs = Vec::with_capacity(data.len() * n);
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(PREDICT_CHUNK) {
        let (x, _) = gather(data, chunk);
        let (mut logits, _) = forward(params, &x)?;
        for r in 0..logits.rows() {
            softmax_in_place(logits.row_mut(r))?;
        }
        probs.extend(logits.into_vec());
    }
    let probs = Matrix::from_vec(data.len(), n, probs).expect("sized");
    let preds = probs.iter_rows().map(argmax).collect();
    Ok((probs, preds))
}

/// Softmax probabilities and argmax labels (ties to the lowest index).
pub fn predict(ckpt: &Checkpoint, data: &Dataset) -> Result<(Matrix, Vec<usize>), TrainError> {
    Ok(predict_params(&ckpt.params, data)?)
}

pub fn evaluate(
    ckpt: &Checkpoint,
    data: &Dataset,
    metadata: ReportMetadata,
    num_bins: usize,
) -> Result<CalibrationReport, TrainError> {
    let (probs, _) = predict(ckpt, data)?;
    Ok(build_report(
        &probs,
        &data.labels.labels,
        metadata,
        num_bins,
    )?)
}

#[derive(Debug, Clone)]
pub struct TwoPhaseRun {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
    pub penalty: PenaltyMatrix,
    pub confusion: ConfusionMatrix,
    pub phase1: Checkpoint,
    pub phase1_history: TrainHistory,
}

/// Baseline run (seed `cfg.seed`), validation confusion, penalty matrix, then a
/// fresh penalized run with seed `cfg.seed + 1`.
pub fn two_phase_cm_train(
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<TwoPhaseRun, TrainError> {
    if cfg.method != Method::Cm {
        return Err(TrainError::Config(format!(
            "two-phase training needs method=cm, got {}",
            cfg.method
        )));
    }
    let phase1_cfg = TrainConfig {
        method: Method::Baseline,
        ..cfg.clone()
    };
    let (phase1, phase1_history) = train(&phase1_cfg, train_set, val_set, None)?;
    let (_, preds) = predict(&phase1, val_set)?;
    let confusion = confusion_matrix(&preds, &val_set.labels.labels, val_set.num_classes())?;
    let penalty = build_w_cm(&confusion, cfg.cm_floor).map_err(|e| match e {
        WMatrixError::EmptyRow { class } => TrainError::DegenerateConfusion { class },
        other => other.into(),
    })?;
    let phase2_cfg = TrainConfig {
        seed: cfg.seed.wrapping_add(1),
        ..cfg.clone()
    };
    let (checkpoint, history) = train(&phase2_cfg, train_set, val_set, Some(&penalty))?;
    Ok(TwoPhaseRun {
        checkpoint,
        history,
        penalty,
        confusion,
        phase1,
        phase1_history,
    })
}
