//! Dense feed-forward classifier with hand-rolled backpropagation: Glorot
//! initialization, relu hidden layers, softmax output, categorical
//! cross-entropy, minibatch SGD or adaptive-moment updates, layer freezing,
//! transfer-model surgery, gradient checking, and the "EMNN" model format.
//!
//! Training is a pure function of (network, data, config): the config seed
//! drives one ChaCha8 stream used first for the validation split, then for
//! each epoch's shuffle. Updates are applied sequentially, so equal inputs
//! give bitwise-equal weights.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::num::Real;
use crate::wire;

const MAGIC: &[u8; 4] = b"EMNN";
const VERSION: u16 = 1;

/// Probabilities are clamped to this floor inside the loss so a confident
/// wrong prediction yields a large finite loss instead of infinity.
pub const PROB_FLOOR: f64 = 1e-30;

/// Adaptive-moment defaults.
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Central-difference step for gradient checking.
pub const GRAD_CHECK_H: f64 = 1e-4;

/// The default architecture: six relu hidden layers tapering from wide.
pub const DEFAULT_HIDDEN_DIMS: [usize; 6] = [512, 256, 128, 64, 32, 16];
pub const HIDDEN_LAYER_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    #[default]
    AdaptiveMoment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major out_dim×in_dim: row o holds the weights feeding output o.
    pub weights: Matrix<T>,
    pub biases: Vec<T>,
    pub activation: Activation,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork<T> {
    pub layers: Vec<Layer<T>>,
    pub input_dim: usize,
    pub n_classes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub validation_fraction: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            validation_fraction: 0.1,
            batch_size: 256,
            learning_rate: 0.001,
            optimizer: Optimizer::AdaptiveMoment,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::BadConfig {
                detail: "epochs must be at least 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::BadConfig {
                detail: format!(
                    "validation fraction {} must lie in [0, 1)",
                    self.validation_fraction
                ),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::BadConfig {
                detail: "batch size must be at least 1".into(),
            });
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::BadConfig {
                detail: format!("learning rate {} must be positive and finite", self.learning_rate),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// Absent when validation_fraction rounds to zero rows.
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// Per-layer gradients of the batch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub d_weights: Matrix<T>,
    pub d_biases: Vec<T>,
}

fn glorot_layer<T: Real>(
    rng: &mut ChaCha8Rng,
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
) -> Layer<T> {
    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let data: Vec<T> = (0..in_dim * out_dim)
        .map(|_| T::of_f64(rng.random_range(-limit..limit)))
        .collect();
    Layer {
        in_dim,
        out_dim,
        weights: Matrix::from_vec(out_dim, in_dim, data),
        biases: vec![T::zero(); out_dim],
        activation,
        trainable: true,
    }
}

/// Build a network of any depth: relu hidden layers, softmax output,
/// Glorot-uniform weights drawn row-major layer by layer, zero biases.
pub fn init_network_any_depth<T: Real>(
    input_dim: usize,
    hidden_dims: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<DenseNetwork<T>> {
    for &d in [input_dim, n_classes].iter().chain(hidden_dims) {
        if d == 0 {
            return Err(Error::BadDims {
                detail: "all layer dimensions must be at least 1".into(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(hidden_dims.len() + 1);
    let mut in_dim = input_dim;
    for &h in hidden_dims {
        layers.push(glorot_layer(&mut rng, in_dim, h, Activation::Relu));
        in_dim = h;
    }
    layers.push(glorot_layer(&mut rng, in_dim, n_classes, Activation::Softmax));
    Ok(DenseNetwork {
        layers,
        input_dim,
        n_classes,
        seed,
    })
}

/// Build the standard profile: exactly six hidden layers.
pub fn init_network<T: Real>(
    input_dim: usize,
    hidden_dims: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<DenseNetwork<T>> {
    if hidden_dims.len() != HIDDEN_LAYER_COUNT {
        return Err(Error::BadDims {
            detail: format!(
                "standard profile takes {HIDDEN_LAYER_COUNT} hidden layers, got {}",
                hidden_dims.len()
            ),
        });
    }
    init_network_any_depth(input_dim, hidden_dims, n_classes, seed)
}

/// z = x·Wᵀ + b for a whole batch.
fn affine<T: Real>(x: &Matrix<T>, layer: &Layer<T>) -> Matrix<T> {
    let mut z = Matrix::zeros(x.rows(), layer.out_dim);
    for r in 0..x.rows() {
        let xr = x.row(r);
        let zr = z.row_mut(r);
        for (o, slot) in zr.iter_mut().enumerate() {
            let wo = layer.weights.row(o);
            let mut acc = layer.biases[o];
            for (x, w) in xr.iter().zip(wo) {
                acc += *x * *w;
            }
            *slot = acc;
        }
    }
    z
}

fn activate_in_place<T: Real>(z: &mut Matrix<T>, activation: Activation) {
    match activation {
        Activation::Relu => {
            for v in z.data_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        Activation::Softmax => {
            for r in 0..z.rows() {
                let row = z.row_mut(r);
                let mut max = row[0];
                for &v in row.iter() {
                    if v > max {
                        max = v;
                    }
                }
                let mut sum = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
        }
    }
}

impl<T: Real> DenseNetwork<T> {
    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.in_dim * l.out_dim + l.out_dim)
            .sum()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.out_dim)
            .collect()
    }

    pub fn set_layer_trainable(&mut self, layer: usize, trainable: bool) {
        self.layers[layer].trainable = trainable;
    }

    /// Freeze layers 0..k (the first k layers).
    pub fn freeze_through(&mut self, k: usize) {
        for l in self.layers.iter_mut().take(k) {
            l.trainable = false;
        }
    }

    fn check_input(&self, batch: &Matrix<T>) -> Result<()> {
        if batch.cols() != self.input_dim {
            return Err(Error::DimMismatch {
                expected: self.input_dim,
                got: batch.cols(),
            });
        }
        Ok(())
    }

    /// Class probabilities, one row per input row.
    pub fn forward(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(batch)?;
        let mut a = batch.clone();
        for layer in &self.layers {
            let mut z = affine(&a, layer);
            activate_in_place(&mut z, layer.activation);
            a = z;
        }
        Ok(a)
    }

    /// Activations of the last hidden layer (input to the output layer).
    pub fn forward_hidden(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(batch)?;
        let mut a = batch.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut z = affine(&a, layer);
            activate_in_place(&mut z, layer.activation);
            a = z;
        }
        Ok(a)
    }

    /// Argmax class per row; ties break to the lowest index.
    pub fn predict(&self, batch: &Matrix<T>) -> Result<Vec<u16>> {
        let probs = self.forward(batch)?;
        Ok(argmax_rows(&probs))
    }
}

pub fn argmax_rows<T: Real>(m: &Matrix<T>) -> Vec<u16> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as u16
        })
        .collect()
}

/// Mean categorical cross-entropy −ln p_true with the probability floor.
pub fn cross_entropy_loss<T: Real>(probs: &Matrix<T>, labels: &[u16]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.rows(),
            right: labels.len(),
        });
    }
    let mut total = 0.0f64;
    for (r, &label) in labels.iter().enumerate() {
        let p = probs.row(r)[label as usize].as_f64();
        // max() would swallow a NaN probability; keep it visible instead.
        total -= if p.is_nan() { f64::NAN } else { p.max(PROB_FLOOR).ln() };
    }
    Ok(total / labels.len().max(1) as f64)
}

/// Forward pass keeping every layer's input; returns (per-layer inputs,
/// output probabilities). inputs[k] feeds layers[k].
fn forward_cached<T: Real>(net: &DenseNetwork<T>, x: &Matrix<T>) -> (Vec<Matrix<T>>, Matrix<T>) {
    let mut inputs = Vec::with_capacity(net.layers.len());
    let mut a = x.clone();
    for layer in &net.layers {
        let mut z = affine(&a, layer);
        activate_in_place(&mut z, layer.activation);
        inputs.push(a);
        a = z;
    }
    (inputs, a)
}

/// Backpropagate the mean cross-entropy loss. Entries below `lowest` are
/// None: the delta chain stops once no trainable layer lies deeper.
fn backward<T: Real>(
    net: &DenseNetwork<T>,
    x: &Matrix<T>,
    labels: &[u16],
    lowest: usize,
) -> Vec<Option<LayerGrads<T>>> {
    let batch = x.rows();
    let (inputs, probs) = forward_cached(net, x);
    let inv_b = T::of_f64(1.0 / batch as f64);

    // Softmax + cross-entropy collapse to delta = (p − onehot)/B.
    let mut delta = probs;
    for (r, &label) in labels.iter().enumerate() {
        delta.row_mut(r)[label as usize] -= T::one();
    }
    for v in delta.data_mut() {
        *v *= inv_b;
    }

    let mut grads: Vec<Option<LayerGrads<T>>> = (0..net.layers.len()).map(|_| None).collect();
    for k in (lowest..net.layers.len()).rev() {
        let layer = &net.layers[k];
        let a_in = &inputs[k];

        let mut d_w = Matrix::zeros(layer.out_dim, layer.in_dim);
        let mut d_b = vec![T::zero(); layer.out_dim];
        for r in 0..batch {
            let dr = delta.row(r);
            let ar = a_in.row(r);
            for (o, &d) in dr.iter().enumerate() {
                d_b[o] += d;
                let wrow = d_w.row_mut(o);
                for (slot, &a) in wrow.iter_mut().zip(ar) {
                    *slot += d * a;
                }
            }
        }
        grads[k] = Some(LayerGrads {
            d_weights: d_w,
            d_biases: d_b,
        });

        if k > lowest {
            // delta_prev = (delta·W) ⊙ relu'(a_in), where a_in is the relu
            // output of the previous layer, so relu' = [a_in > 0].
            let mut prev = Matrix::zeros(batch, layer.in_dim);
            for r in 0..batch {
                let dr = delta.row(r);
                let pr = prev.row_mut(r);
                for (o, &d) in dr.iter().enumerate() {
                    let wrow = net.layers[k].weights.row(o);
                    for (slot, &w) in pr.iter_mut().zip(wrow) {
                        *slot += d * w;
                    }
                }
                let ar = a_in.row(r);
                for (slot, &a) in pr.iter_mut().zip(ar) {
                    if a <= T::zero() {
                        *slot = T::zero();
                    }
                }
            }
            delta = prev;
        }
    }
    grads
}

/// Gradients of the mean loss for every layer (oracle surface; training
/// uses the truncated internal path).
pub fn gradients<T: Real>(
    net: &DenseNetwork<T>,
    x: &Matrix<T>,
    labels: &[u16],
) -> Result<Vec<LayerGrads<T>>> {
    net.check_input(x)?;
    if x.rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: labels.len(),
        });
    }
    Ok(backward(net, x, labels, 0)
        .into_iter()
        .map(|g| g.expect("lowest = 0 fills every layer"))
        .collect())
}

struct AdamState<T> {
    m_w: Matrix<T>,
    v_w: Matrix<T>,
    m_b: Vec<T>,
    v_b: Vec<T>,
}

fn apply_sgd<T: Real>(layer: &mut Layer<T>, g: &LayerGrads<T>, lr: T) {
    for (w, &d) in layer.weights.data_mut().iter_mut().zip(g.d_weights.data()) {
        *w -= lr * d;
    }
    for (b, &d) in layer.biases.iter_mut().zip(&g.d_biases) {
        *b -= lr * d;
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_step<T: Real>(w: &mut T, g: T, m: &mut T, v: &mut T, lr: T, bc1: T, bc2: T, eps: T) {
    let b1 = T::of_f64(BETA1);
    let b2 = T::of_f64(BETA2);
    *m = b1 * *m + (T::one() - b1) * g;
    *v = b2 * *v + (T::one() - b2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *w -= lr * m_hat / (v_hat.sqrt() + eps);
}

fn apply_adam<T: Real>(layer: &mut Layer<T>, g: &LayerGrads<T>, s: &mut AdamState<T>, lr: T, t: u64) {
    let bc1 = T::of_f64(1.0 - BETA1.powi(t as i32));
    let bc2 = T::of_f64(1.0 - BETA2.powi(t as i32));
    let eps = T::of_f64(ADAM_EPSILON);
    for (((w, &d), m), v) in layer
        .weights
        .data_mut()
        .iter_mut()
        .zip(g.d_weights.data())
        .zip(s.m_w.data_mut())
        .zip(s.v_w.data_mut())
    {
        adam_step(w, d, m, v, lr, bc1, bc2, eps);
    }
    for (((b, &d), m), v) in layer
        .biases
        .iter_mut()
        .zip(&g.d_biases)
        .zip(s.m_b.iter_mut())
        .zip(s.v_b.iter_mut())
    {
        adam_step(b, d, m, v, lr, bc1, bc2, eps);
    }
}

fn gather<T: Real>(features: &Matrix<T>, labels: &[u16], idx: &[usize]) -> (Matrix<T>, Vec<u16>) {
    (
        features.select_rows(idx),
        idx.iter().map(|&i| labels[i]).collect(),
    )
}

/// Loss and accuracy over `indices`, evaluated in batches.
fn evaluate<T: Real>(
    net: &DenseNetwork<T>,
    features: &Matrix<T>,
    labels: &[u16],
    indices: &[usize],
    batch_size: usize,
) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size) {
        let (x, y) = gather(features, labels, chunk);
        let probs = net.forward(&x)?;
        loss_sum += cross_entropy_loss(&probs, &y)? * y.len() as f64;
        for (p, &t) in argmax_rows(&probs).iter().zip(&y) {
            if *p == t {
                correct += 1;
            }
        }
    }
    let n = indices.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

/// Minibatch training. The validation split is the last
/// floor(validation_fraction·n) rows of one seeded shuffle; the remaining
/// rows are reshuffled each epoch from the same stream. History records
/// full-pass metrics at each epoch end. Frozen layers are never touched.
pub fn train<T: Real>(
    mut net: DenseNetwork<T>,
    features: &Matrix<T>,
    labels: &[u16],
    cfg: &TrainConfig,
) -> Result<(DenseNetwork<T>, TrainHistory)> {
    cfg.validate()?;
    net.check_input(features)?;
    if features.rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.rows(),
            right: labels.len(),
        });
    }
    if features.rows() == 0 {
        return Err(Error::BadLength {
            detail: "cannot train on an empty dataset".into(),
        });
    }
    for &l in labels {
        if l as usize >= net.n_classes {
            return Err(Error::LabelOutOfRange {
                label: l as usize,
                n_classes: net.n_classes,
            });
        }
    }

    let n = features.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = (cfg.validation_fraction * n as f64).floor() as usize;
    let n_fit = n - n_val;
    let val_idx = order.split_off(n_fit);
    let mut fit_idx = order;

    let lowest = net.layers.iter().position(|l| l.trainable);
    let lr = T::of_f64(cfg.learning_rate);
    let mut adam: Vec<Option<AdamState<T>>> = net
        .layers
        .iter()
        .map(|l| {
            (cfg.optimizer == Optimizer::AdaptiveMoment && l.trainable).then(|| AdamState {
                m_w: Matrix::zeros(l.out_dim, l.in_dim),
                v_w: Matrix::zeros(l.out_dim, l.in_dim),
                m_b: vec![T::zero(); l.out_dim],
                v_b: vec![T::zero(); l.out_dim],
            })
        })
        .collect();
    let mut step = 0u64;

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        fit_idx.shuffle(&mut rng);
        if let Some(lowest) = lowest {
            if n_fit > 0 {
                for chunk in fit_idx.chunks(cfg.batch_size) {
                    let (x, y) = gather(features, labels, chunk);
                    let grads = backward(&net, &x, &y, lowest);
                    step += 1;
                    for (k, g) in grads.into_iter().enumerate() {
                        let (Some(g), true) = (g, net.layers[k].trainable) else {
                            continue;
                        };
                        match &mut adam[k] {
                            Some(state) => apply_adam(&mut net.layers[k], &g, state, lr, step),
                            None => apply_sgd(&mut net.layers[k], &g, lr),
                        }
                    }
                }
            }
        }

        let (train_loss, train_accuracy) =
            evaluate(&net, features, labels, &fit_idx, cfg.batch_size)?;
        let (val_loss, val_accuracy) = if val_idx.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&net, features, labels, &val_idx, cfg.batch_size)?;
            (Some(l), Some(a))
        };
        if !train_loss.is_finite() || val_loss.is_some_and(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(EpochStats {
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }
    Ok((net, TrainHistory { epochs: history }))
}

/// Transfer surgery: keep the base's hidden layers frozen, drop its output
/// layer, and stack a fresh trainable relu layer plus softmax head.
pub fn build_transfer_model<T: Real>(
    base: &DenseNetwork<T>,
    n_classes_target: usize,
    transfer_dim: usize,
    seed: u64,
) -> Result<DenseNetwork<T>> {
    if base.layers.len() < 2 {
        return Err(Error::BadDims {
            detail: "transfer base needs at least one hidden layer".into(),
        });
    }
    if transfer_dim == 0 || n_classes_target == 0 {
        return Err(Error::BadDims {
            detail: "transfer head dimensions must be at least 1".into(),
        });
    }
    let mut layers: Vec<Layer<T>> = base.layers[..base.layers.len() - 1]
        .iter()
        .map(|l| {
            let mut l = l.clone();
            l.trainable = false;
            l
        })
        .collect();
    let last_hidden = layers.last().expect("nonempty").out_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    layers.push(glorot_layer(&mut rng, last_hidden, transfer_dim, Activation::Relu));
    layers.push(glorot_layer(
        &mut rng,
        transfer_dim,
        n_classes_target,
        Activation::Softmax,
    ));
    Ok(DenseNetwork {
        layers,
        input_dim: base.input_dim,
        n_classes: n_classes_target,
        seed,
    })
}

/// Max relative error between analytic gradients and central finite
/// differences (step 1e-4) over every parameter of every layer. The
/// denominator is floored at 1e-3 so dead-path parameters with near-zero
/// gradients on both sides don't amplify rounding noise.
pub fn gradient_check<T: Real>(net: &DenseNetwork<T>, x: &Matrix<T>, labels: &[u16]) -> Result<f64> {
    let analytic = gradients(net, x, labels)?;
    let mut probe = net.clone();
    let h = T::of_f64(GRAD_CHECK_H);
    let two_h = 2.0 * GRAD_CHECK_H;
    let mut worst = 0.0f64;

    let loss_of = |net: &DenseNetwork<T>, x: &Matrix<T>, labels: &[u16]| -> Result<f64> {
        cross_entropy_loss(&net.forward(x)?, labels)
    };

    for (k, analytic_layer) in analytic.iter().enumerate() {
        for p in 0..net.layers[k].weights.data().len() + net.layers[k].biases.len() {
            let read = |l: &Layer<T>, p: usize| {
                if p < l.weights.data().len() {
                    l.weights.data()[p]
                } else {
                    l.biases[p - l.weights.data().len()]
                }
            };
            let write = |l: &mut Layer<T>, p: usize, v: T| {
                let nw = l.weights.data().len();
                if p < nw {
                    l.weights.data_mut()[p] = v;
                } else {
                    l.biases[p - nw] = v;
                }
            };
            let orig = read(&probe.layers[k], p);
            write(&mut probe.layers[k], p, orig + h);
            let plus = loss_of(&probe, x, labels)?;
            write(&mut probe.layers[k], p, orig - h);
            let minus = loss_of(&probe, x, labels)?;
            write(&mut probe.layers[k], p, orig);

            let numeric = (plus - minus) / two_h;
            let a = read_grad(analytic_layer, p).as_f64();
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

fn read_grad<T: Real>(g: &LayerGrads<T>, p: usize) -> T {
    let nw = g.d_weights.data().len();
    if p < nw {
        g.d_weights.data()[p]
    } else {
        g.d_biases[p - nw]
    }
}

/// Persist as "EMNN": magic, version u16, seed u64, input_dim u32,
/// n_classes u32, n_layers u16, per-layer headers (in u32, out u32,
/// activation u8, trainable u8), then per-layer row-major little-endian
/// binary32 weights followed by biases.
pub fn save_model(net: &DenseNetwork<f32>, path: &Path) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        offset: 0,
        source: e,
    };
    wire::write_atomic_with(path, |w| {
        use std::io::Write as _;
        w.write_all(MAGIC).map_err(io_err)?;
        wire::write_u16(w, VERSION).map_err(io_err)?;
        wire::write_u64(w, net.seed).map_err(io_err)?;
        wire::write_u32(w, net.input_dim as u32).map_err(io_err)?;
        wire::write_u32(w, net.n_classes as u32).map_err(io_err)?;
        wire::write_u16(w, net.layers.len() as u16).map_err(io_err)?;
        for l in &net.layers {
            wire::write_u32(w, l.in_dim as u32).map_err(io_err)?;
            wire::write_u32(w, l.out_dim as u32).map_err(io_err)?;
            let act = match l.activation {
                Activation::Relu => 0u8,
                Activation::Softmax => 1,
            };
            w.write_all(&[act, l.trainable as u8]).map_err(io_err)?;
        }
        for l in &net.layers {
            for &v in l.weights.data() {
                wire::write_f32(w, v).map_err(io_err)?;
            }
            for &v in &l.biases {
                wire::write_f32(w, v).map_err(io_err)?;
            }
        }
        Ok(())
    })
}

pub fn load_model(path: &Path) -> Result<DenseNetwork<f32>> {
    let corrupt = |detail: String| Error::CorruptLength {
        path: path.to_path_buf(),
        detail,
    };
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            Error::Io {
                offset: 0,
                source: e,
            }
        }
    })?;
    let mut r = std::io::BufReader::new(file);
    wire::expect_magic(&mut r, MAGIC, path)?;
    wire::expect_version(&mut r, VERSION, path)?;
    let seed = wire::read_u64(&mut r, path, "seed")?;
    let input_dim = wire::read_u32(&mut r, path, "input dim")? as usize;
    let n_classes = wire::read_u32(&mut r, path, "class count")? as usize;
    let n_layers = wire::read_u16(&mut r, path, "layer count")? as usize;
    if n_layers == 0 {
        return Err(corrupt("model has no layers".into()));
    }

    struct Header {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        trainable: bool,
    }
    let mut headers = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let in_dim = wire::read_u32(&mut r, path, "layer in dim")? as usize;
        let out_dim = wire::read_u32(&mut r, path, "layer out dim")? as usize;
        let mut flags = [0u8; 2];
        r.read_exact(&mut flags)
            .map_err(|_| corrupt(format!("layer {k} header is truncated")))?;
        let activation = match flags[0] {
            0 => Activation::Relu,
            1 => Activation::Softmax,
            other => return Err(corrupt(format!("unknown activation code {other}"))),
        };
        if in_dim == 0 || out_dim == 0 {
            return Err(corrupt(format!("layer {k} has a zero dimension")));
        }
        headers.push(Header {
            in_dim,
            out_dim,
            activation,
            trainable: flags[1] != 0,
        });
    }

    let expect_last = headers.len() - 1;
    for (k, h) in headers.iter().enumerate() {
        let want_in = if k == 0 { input_dim } else { headers[k - 1].out_dim };
        if h.in_dim != want_in {
            return Err(corrupt(format!("layer {k} input dim does not chain")));
        }
        let want_act = if k == expect_last {
            Activation::Softmax
        } else {
            Activation::Relu
        };
        if h.activation != want_act {
            return Err(corrupt(format!("layer {k} has the wrong activation")));
        }
    }
    if headers[expect_last].out_dim != n_classes {
        return Err(corrupt("output layer does not match class count".into()));
    }

    let mut layers = Vec::with_capacity(n_layers);
    for (k, h) in headers.iter().enumerate() {
        let mut data = vec![0f32; h.in_dim * h.out_dim];
        let mut biases = vec![0f32; h.out_dim];
        for slot in data.iter_mut().chain(biases.iter_mut()) {
            *slot = wire::read_f32(&mut r, path, "layer parameters")?;
            if !slot.is_finite() {
                return Err(corrupt(format!("layer {k} holds a non-finite parameter")));
            }
        }
        layers.push(Layer {
            in_dim: h.in_dim,
            out_dim: h.out_dim,
            weights: Matrix::from_vec(h.out_dim, h.in_dim, data),
            biases,
            activation: h.activation,
            trainable: h.trainable,
        });
    }
    wire::expect_eof(&mut r, path)?;
    Ok(DenseNetwork {
        layers,
        input_dim,
        n_classes,
        seed,
    })
}
