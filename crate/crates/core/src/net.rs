//! Multilayer perceptron: ReLU hidden layers, linear output head.
//!
//! Weight init: for each layer in order, row-major, `w = (2u - 1) / sqrt(fan_in)`
//! with `u` from [`SplitMix64::for_stream(seed, INIT)`](crate::rng::SplitMix64::for_stream);
//! biases start at zero.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::matrix::Matrix;
use crate::rng::{streams, SplitMix64};
use crate::MIN_CLASSES;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NetError {
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("forward cache was produced by different parameters")]
    StaleCache,
    #[error("non-finite input to softmax")]
    NonFiniteInput,
}

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    seed: u64,
    // Process-unique stamp, renewed on every mutable borrow. Caches remember it.
    generation: u64,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.layer_sizes == other.layer_sizes
            && self.weights == other.weights
            && self.biases == other.biases
            && self.seed == other.seed
    }
}

fn check_architecture(layer_sizes: &[usize]) -> Result<(), NetError> {
    if layer_sizes.len() < 2 {
        return Err(NetError::BadArchitecture(format!(
            "need at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(NetError::BadArchitecture(format!(
            "zero-width layer in {layer_sizes:?}"
        )));
    }
    let n = *layer_sizes.last().expect("len >= 2");
    if n < MIN_CLASSES {
        return Err(NetError::BadArchitecture(format!(
            "output head has {n} classes; at least {MIN_CLASSES} required"
        )));
    }
    Ok(())
}

pub fn init_params(layer_sizes: &[usize], seed: u64) -> Result<ModelParams, NetError> {
    check_architecture(layer_sizes)?;
    let mut rng = SplitMix64::for_stream(seed, streams::INIT);
    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let scale = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| (2.0 * rng.next_f64() - 1.0) * scale)
            .collect();
        weights.push(Matrix::from_vec(fan_out, fan_in, data).expect("sized above"));
        biases.push(vec![0.0; fan_out]);
    }
    Ok(ModelParams {
        layer_sizes: layer_sizes.to_vec(),
        weights,
        biases,
        seed,
        generation: next_generation(),
    })
}

impl ModelParams {
    /// Assembles parameters from explicit layers (`weights[l]` is `out x in`).
    pub fn from_layers(
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Self, NetError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(NetError::BadArchitecture(format!(
                "{} weight matrices and {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut layer_sizes = vec![weights[0].cols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.cols() != *layer_sizes.last().expect("non-empty") || b.len() != w.rows() {
                return Err(NetError::ShapeMismatch {
                    expected: format!(
                        "layer {l}: {} inputs, bias of length {}",
                        layer_sizes[l],
                        w.rows()
                    ),
                    actual: format!(
                        "{}x{} weights, bias of length {}",
                        w.rows(),
                        w.cols(),
                        b.len()
                    ),
                });
            }
            layer_sizes.push(w.rows());
        }
        check_architecture(&layer_sizes)?;
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            seed,
            generation: next_generation(),
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// Mutable view of every `(weights, biases)` layer. Any forward cache taken
    /// before this call becomes stale.
    pub fn layers_mut(&mut self) -> impl Iterator<Item = (&mut Matrix, &mut Vec<f64>)> {
        self.generation = next_generation();
        self.weights.iter_mut().zip(self.biases.iter_mut())
    }

    pub fn num_parameters(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum()
    }

    fn fingerprint(&self) -> (u64, Vec<usize>) {
        (self.generation, self.layer_sizes.clone())
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: (u64, Vec<usize>),
    input: Matrix,
    /// Pre-activations per layer (`batch x out`).
    pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            weights: params
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

fn shape(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}

// out = x * W^T + b, with x: batch x in, W: out x in
fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), w.rows());
    for r in 0..x.rows() {
        let xr = x.row(r);
        let or = out.row_mut(r);
        for (o, (wrow, bias)) in or.iter_mut().zip(w.iter_rows().zip(b)) {
            *o = xr.iter().zip(wrow).fold(*bias, |acc, (a, w)| acc + a * w);
        }
    }
    out
}

fn relu(z: &Matrix) -> Matrix {
    let mut a = z.clone();
    for v in a.as_mut_slice() {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
    a
}

pub fn forward(params: &ModelParams, batch: &Matrix) -> Result<(Matrix, ForwardCache), NetError> {
    if batch.cols() != params.input_dim() {
        return Err(NetError::ShapeMismatch {
            expected: format!("batch width {}", params.input_dim()),
            actual: shape(batch.rows(), batch.cols()),
        });
    }
    let last = params.num_layers() - 1;
    let mut pre_activations = Vec::with_capacity(params.num_layers());
    let mut activation = batch.clone();
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let z = affine(&activation, w, b);
        if l < last {
            activation = relu(&z);
        }
        pre_activations.push(z);
    }
    let logits = pre_activations.last().expect("at least one layer").clone();
    Ok((
        logits,
        ForwardCache {
            fingerprint: params.fingerprint(),
            input: batch.clone(),
            pre_activations,
        },
    ))
}

/// Backpropagates `dlogits` (the gradient of some scalar with respect to the
/// logits) to every weight and bias. ReLU'(0) is taken as 0.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    dlogits: &Matrix,
) -> Result<Gradients, NetError> {
    if cache.fingerprint != params.fingerprint() {
        return Err(NetError::StaleCache);
    }
    let batch = cache.batch_size();
    if dlogits.rows() != batch || dlogits.cols() != params.num_classes() {
        return Err(NetError::ShapeMismatch {
            expected: shape(batch, params.num_classes()),
            actual: shape(dlogits.rows(), dlogits.cols()),
        });
    }
    let mut grads = Gradients::zeros_like(params);
    let mut delta = dlogits.clone();
    for l in (0..params.num_layers()).rev() {
        let w = &params.weights[l];
        let (fan_out, fan_in) = (w.rows(), w.cols());
        let input_act = if l == 0 {
            cache.input.clone()
        } else {
            relu(&cache.pre_activations[l - 1])
        };
        let gw = grads.weights[l].as_mut_slice();
        let gb = &mut grads.biases[l];
        for r in 0..batch {
            let d = delta.row(r);
            let a = input_act.row(r);
            for o in 0..fan_out {
                gb[o] += d[o];
                if d[o] != 0.0 {
                    let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                    for (g, x) in row.iter_mut().zip(a) {
                        *g += d[o] * x;
                    }
                }
            }
        }
        if l > 0 {
            let z_prev = &cache.pre_activations[l - 1];
            let mut next = Matrix::zeros(batch, fan_in);
            for r in 0..batch {
                let d = delta.row(r);
                let z = z_prev.row(r);
                let out = next.row_mut(r);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    for (i, wv) in w.row(o).iter().enumerate() {
                        out[i] += dv * wv;
                    }
                }
                for (v, &zv) in out.iter_mut().zip(z) {
                    if zv <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            delta = next;
        }
    }
    Ok(grads)
}

/// Numerically stable softmax: `exp(z_i - max z) / sum_j exp(z_j - max z)`.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, NetError> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out)?;
    Ok(out)
}

pub fn softmax_in_place(values: &mut [f64]) -> Result<(), NetError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(NetError::NonFiniteInput);
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
