//! Graph convolutional classifier over the spatio-temporal operator: a
//! one-hop stack on the normalized adjacency (variant 1) or a polynomial
//! filter stack mixing multi-hop neighborhoods (variant 2), LeakyReLU and
//! dropout between layers, a sigmoid head over the FT-dimensional output
//! signal, manual reverse-mode gradients, and mini-batch SGD with
//! cross-validated model selection on held-out ROC-AUC.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{vectorize_zeropad, Dataset, PatientRecord, SplitPlan};
use crate::error::{Error, Result};
use crate::io::{self, Meta};
use crate::metrics;
use crate::sparse::SparseMatrix;
use crate::st_graph::{normalize_adjacency, OperatorPowers, STAdjacency};

const BCE_EPS: f64 = 1e-7;

/// Which layer stack the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// One-hop propagation with the normalized self-loop operator.
    Gcnn1,
    /// Polynomial filter over operator powers 0..K-1.
    Gcnn2,
}

fn default_alpha() -> f64 {
    0.01
}
fn default_batch() -> usize {
    32
}
fn default_poly_order() -> usize {
    2
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Number of GCNN layers L.
    pub layers: usize,
    /// Width U of the hidden layers (the first and last are width 1).
    pub hidden_width: usize,
    /// Polynomial order K; only used by the second variant.
    #[serde(default = "default_poly_order")]
    pub poly_order: usize,
    #[serde(default = "default_alpha")]
    pub leaky_alpha: f64,
    pub dropout: f64,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if self.hidden_width == 0 {
            return Err(Error::Config("hidden_width must be >= 1".into()));
        }
        if self.variant == Variant::Gcnn2 && self.poly_order < 2 {
            return Err(Error::Config(format!(
                "poly_order must be >= 2 for the polynomial variant, got {}",
                self.poly_order
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.leaky_alpha.is_nan() || self.leaky_alpha <= 0.0 {
            return Err(Error::Config("leaky_alpha must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.lr_decay < 0.0 {
            return Err(Error::Config("lr_decay must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Widths U_0..U_L: 1 on both ends, `hidden_width` in between.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = vec![1];
        for _ in 1..self.layers {
            widths.push(self.hidden_width);
        }
        widths.push(1);
        widths
    }

    /// Operator powers each layer multiplies by.
    pub fn powers_used(&self) -> Vec<usize> {
        match self.variant {
            Variant::Gcnn1 => vec![1],
            Variant::Gcnn2 => (0..self.poly_order).collect(),
        }
    }

    pub fn max_power(&self) -> usize {
        *self.powers_used().iter().max().unwrap()
    }
}

/// Weights of one layer: one matrix per operator power, plus the bias row.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<Array2<f64>>,
    pub bias: Array1<f64>,
}

/// All learnable tensors of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

impl ModelParams {
    /// Seeded uniform init in +/- sqrt(6 / (U_l + U_{l+1})), zero biases.
    pub fn init(config: &ModelConfig, num_nodes: usize, rng: &mut ChaCha8Rng) -> ModelParams {
        let widths = config.layer_widths();
        let n_weights = config.powers_used().len();
        let layers = (0..config.layers)
            .map(|l| {
                let (u_in, u_out) = (widths[l], widths[l + 1]);
                let bound = (6.0 / (u_in + u_out) as f64).sqrt();
                let weights = (0..n_weights)
                    .map(|_| Array2::from_shape_fn((u_in, u_out), |_| rng.gen_range(-bound..bound)))
                    .collect();
                LayerParams {
                    weights,
                    bias: Array1::zeros(u_out),
                }
            })
            .collect();
        let head_bound = (6.0 / (num_nodes + 1) as f64).sqrt();
        ModelParams {
            layers,
            head_w: Array1::from_shape_fn(num_nodes, |_| rng.gen_range(-head_bound..head_bound)),
            head_b: 0.0,
        }
    }

    pub fn validate_shapes(&self, config: &ModelConfig, num_nodes: usize) -> Result<()> {
        config.validate()?;
        let widths = config.layer_widths();
        let n_weights = config.powers_used().len();
        if self.layers.len() != config.layers {
            return Err(Error::ModelShape(format!(
                "{} layer parameter blocks for {} configured layers",
                self.layers.len(),
                config.layers
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != n_weights {
                return Err(Error::ModelShape(format!(
                    "layer {l} holds {} weight matrices, expected {n_weights}",
                    layer.weights.len()
                )));
            }
            for w in &layer.weights {
                if w.dim() != (widths[l], widths[l + 1]) {
                    return Err(Error::ModelShape(format!(
                        "layer {l} weight is {:?}, expected ({}, {})",
                        w.dim(),
                        widths[l],
                        widths[l + 1]
                    )));
                }
            }
            if layer.bias.len() != widths[l + 1] {
                return Err(Error::ModelShape(format!(
                    "layer {l} bias has length {}, expected {}",
                    layer.bias.len(),
                    widths[l + 1]
                )));
            }
        }
        if self.head_w.len() != num_nodes {
            return Err(Error::ModelShape(format!(
                "head has {} weights for {num_nodes} graph nodes",
                self.head_w.len()
            )));
        }
        let finite = self
            .layers
            .iter()
            .all(|l| l.weights.iter().all(|w| w.iter().all(|v| v.is_finite())))
            && self.head_w.iter().all(|v| v.is_finite())
            && self.head_b.is_finite();
        if !finite {
            return Err(Error::ModelShape("non-finite parameter values".into()));
        }
        Ok(())
    }

    fn update(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                w.scaled_add(-lr, gw);
            }
            layer.bias.scaled_add(-lr, &g.bias);
        }
        self.head_w.scaled_add(-lr, &grads.head_w);
        self.head_b -= lr * grads.head_b;
    }
}

/// Gradient tensors, shaped exactly like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<Array2<f64>>,
    pub bias: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Gradients {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: l.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
            head_w: Array1::zeros(params.head_w.len()),
            head_b: 0.0,
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            for (w, o) in mine.weights.iter_mut().zip(&theirs.weights) {
                *w += o;
            }
            mine.bias += &theirs.bias;
        }
        self.head_w += &other.head_w;
        self.head_b += other.head_b;
    }

    pub fn scale(&mut self, c: f64) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                *w *= c;
            }
            layer.bias *= c;
        }
        self.head_w *= c;
        self.head_b *= c;
    }
}

/// LeakyReLU: h for positive inputs, alpha*h otherwise.
pub fn leaky_relu(h: f64, alpha: f64) -> f64 {
    if h > 0.0 {
        h
    } else {
        alpha * h
    }
}

fn leaky_relu_matrix(z: &Array2<f64>, alpha: f64) -> Array2<f64> {
    z.mapv(|v| leaky_relu(v, alpha))
}

/// Subgradient of LeakyReLU; the kink at 0 takes alpha.
fn leaky_grad(z: f64, alpha: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        alpha
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Entrywise Bernoulli masking: each entry survives with probability 1-pi.
///
/// The mask is returned so backpropagation can replay it; evaluation applies
/// no mask and no rescaling.
pub fn dropout_apply(
    h: &Array2<f64>,
    pi: f64,
    rng: &mut ChaCha8Rng,
) -> (Array2<f64>, Array2<f64>) {
    if pi == 0.0 {
        return (h.clone(), Array2::ones(h.dim()));
    }
    let mask = Array2::from_shape_fn(h.dim(), |_| if rng.gen_bool(1.0 - pi) { 1.0 } else { 0.0 });
    (h * &mask, mask)
}

fn add_bias(mut z: Array2<f64>, bias: &Array1<f64>) -> Array2<f64> {
    for mut row in z.rows_mut() {
        row += bias;
    }
    z
}

/// One one-hop layer: LeakyReLU(A_hat H W + 1 b).
pub fn gcnn1_layer(
    h: &Array2<f64>,
    a_hat: &SparseMatrix,
    w: &Array2<f64>,
    b: &Array1<f64>,
    alpha: f64,
) -> Result<Array2<f64>> {
    if h.ncols() != w.nrows() || b.len() != w.ncols() {
        return Err(Error::ModelShape(format!(
            "layer shapes disagree: H is {:?}, W is {:?}, b has {}",
            h.dim(),
            w.dim(),
            b.len()
        )));
    }
    let z = add_bias(a_hat.mul_dense(h)?.dot(w), b);
    Ok(leaky_relu_matrix(&z, alpha))
}

/// One polynomial layer: LeakyReLU(sum_k A_hat^k H W_k + 1 b).
///
/// `a_hat_powers[k]` must be the k-th power of the normalized operator.
pub fn gcnn2_layer(
    h: &Array2<f64>,
    a_hat_powers: &[SparseMatrix],
    w_list: &[Array2<f64>],
    b: &Array1<f64>,
    alpha: f64,
) -> Result<Array2<f64>> {
    if a_hat_powers.len() != w_list.len() || w_list.is_empty() {
        return Err(Error::ModelShape(format!(
            "{} operator powers vs {} weight matrices",
            a_hat_powers.len(),
            w_list.len()
        )));
    }
    let mut z: Option<Array2<f64>> = None;
    for (a_k, w_k) in a_hat_powers.iter().zip(w_list) {
        if h.ncols() != w_k.nrows() || b.len() != w_k.ncols() {
            return Err(Error::ModelShape(format!(
                "layer shapes disagree: H is {:?}, W_k is {:?}, b has {}",
                h.dim(),
                w_k.dim(),
                b.len()
            )));
        }
        let term = a_k.mul_dense(h)?.dot(w_k);
        z = Some(match z {
            None => term,
            Some(acc) => acc + term,
        });
    }
    Ok(leaky_relu_matrix(&add_bias(z.unwrap(), b), alpha))
}

/// Everything the backward pass needs to replay one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Inputs actually fed to each layer (post-dropout in training).
    pub inputs: Vec<Array2<f64>>,
    /// A_hat^k * input, per layer and per used power.
    propagated: Vec<Vec<Array2<f64>>>,
    /// Pre-activation Z of each layer.
    pub pre_activations: Vec<Array2<f64>>,
    /// Post-activation output of each layer.
    pub activations: Vec<Array2<f64>>,
    /// Dropout masks applied between consecutive layers (length L-1).
    pub masks: Vec<Array2<f64>>,
    /// Output signal h^(L) of the last layer.
    pub head_input: Array1<f64>,
    pub logit: f64,
    pub y_hat: f64,
}

/// Training applies seeded dropout between layers; evaluation is exact.
pub enum Phase<'a> {
    Eval,
    Train { rng: &'a mut ChaCha8Rng },
}

enum MaskSource<'a> {
    None,
    Sample { rng: &'a mut ChaCha8Rng, pi: f64 },
    Given(&'a [Array2<f64>]),
}

fn forward_inner(
    params: &ModelParams,
    config: &ModelConfig,
    ops: &OperatorPowers,
    x: &Array1<f64>,
    mut masks: MaskSource,
) -> Result<ForwardTrace> {
    params.validate_shapes(config, ops.num_nodes())?;
    if x.len() != ops.num_nodes() {
        return Err(Error::Dimension(format!(
            "input has {} entries for {} graph nodes",
            x.len(),
            ops.num_nodes()
        )));
    }
    if ops.max_power() < config.max_power() {
        return Err(Error::ModelShape(format!(
            "operator powers go up to {}, config needs {}",
            ops.max_power(),
            config.max_power()
        )));
    }
    let powers = config.powers_used();
    let n = x.len();
    let mut current = x.clone().into_shape_with_order((n, 1)).unwrap();

    let mut inputs = Vec::with_capacity(config.layers);
    let mut propagated = Vec::with_capacity(config.layers);
    let mut pre_activations = Vec::with_capacity(config.layers);
    let mut activations = Vec::with_capacity(config.layers);
    let mut applied_masks = Vec::new();

    for l in 0..config.layers {
        let layer = &params.layers[l];
        let mut per_power = Vec::with_capacity(powers.len());
        let mut z: Option<Array2<f64>> = None;
        for (idx, &k) in powers.iter().enumerate() {
            let prop = ops.power(k).mul_dense(&current)?;
            let term = prop.dot(&layer.weights[idx]);
            per_power.push(prop);
            z = Some(match z {
                None => term,
                Some(acc) => acc + term,
            });
        }
        let z = add_bias(z.unwrap(), &layer.bias);
        let h = leaky_relu_matrix(&z, config.leaky_alpha);

        inputs.push(current.clone());
        propagated.push(per_power);
        pre_activations.push(z);

        if l + 1 < config.layers {
            let (next, mask) = match &mut masks {
                MaskSource::None => (h.clone(), Array2::ones(h.dim())),
                MaskSource::Sample { rng, pi } => dropout_apply(&h, *pi, rng),
                MaskSource::Given(list) => {
                    let mask = list.get(l).ok_or_else(|| {
                        Error::ModelShape(format!("missing dropout mask for layer gap {l}"))
                    })?;
                    if mask.dim() != h.dim() {
                        return Err(Error::ModelShape(format!(
                            "mask {l} is {:?}, activations are {:?}",
                            mask.dim(),
                            h.dim()
                        )));
                    }
                    (&h * mask, mask.clone())
                }
            };
            applied_masks.push(mask);
            activations.push(h);
            current = next;
        } else {
            activations.push(h.clone());
            current = h;
        }
    }

    let head_input = current.column(0).to_owned();
    let logit = params.head_w.dot(&head_input) + params.head_b;
    let y_hat = sigmoid(logit);
    Ok(ForwardTrace {
        inputs,
        propagated,
        pre_activations,
        activations,
        masks: applied_masks,
        head_input,
        logit,
        y_hat,
    })
}

/// Run the layer stack and sigmoid head on one vectorized input.
pub fn forward(
    params: &ModelParams,
    config: &ModelConfig,
    ops: &OperatorPowers,
    x: &Array1<f64>,
    phase: Phase,
) -> Result<ForwardTrace> {
    let masks = match phase {
        Phase::Eval => MaskSource::None,
        Phase::Train { rng } => MaskSource::Sample {
            rng,
            pi: config.dropout,
        },
    };
    forward_inner(params, config, ops, x, masks)
}

/// Forward pass with pinned dropout masks, for gradient verification and
/// exact replays.
pub fn forward_with_masks(
    params: &ModelParams,
    config: &ModelConfig,
    ops: &OperatorPowers,
    x: &Array1<f64>,
    masks: &[Array2<f64>],
) -> Result<ForwardTrace> {
    forward_inner(params, config, ops, x, MaskSource::Given(masks))
}

/// Binary cross-entropy with the prediction clamped to [eps, 1-eps].
pub fn loss_bce(y_hat: f64, y: u8) -> f64 {
    let p = y_hat.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Exact gradients of `loss_bce(forward(x))` for every parameter tensor,
/// replaying the trace's dropout masks.
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    config: &ModelConfig,
    ops: &OperatorPowers,
    y: u8,
) -> Result<Gradients> {
    if trace.inputs.len() != config.layers {
        return Err(Error::ModelShape(format!(
            "trace records {} layers, config has {}",
            trace.inputs.len(),
            config.layers
        )));
    }
    let powers = config.powers_used();
    let d_logit = trace.y_hat - f64::from(y);

    let mut grads = Gradients::zeros_like(params);
    grads.head_w = trace.head_input.mapv(|h| h * d_logit);
    grads.head_b = d_logit;

    // gradient wrt the last layer's activations
    let n = trace.head_input.len();
    let mut d_h: Array2<f64> = params
        .head_w
        .mapv(|w| w * d_logit)
        .into_shape_with_order((n, 1))
        .unwrap();

    for l in (0..config.layers).rev() {
        let d_z = &d_h * &trace.pre_activations[l].mapv(|z| leaky_grad(z, config.leaky_alpha));

        grads.layers[l].bias = d_z.sum_axis(Axis(0));
        let mut d_input: Option<Array2<f64>> = None;
        for (idx, &k) in powers.iter().enumerate() {
            grads.layers[l].weights[idx] = trace.propagated[l][idx].t().dot(&d_z);
            let back = ops
                .power_transposed(k)
                .mul_dense(&d_z.dot(&params.layers[l].weights[idx].t()))?;
            d_input = Some(match d_input {
                None => back,
                Some(acc) => acc + back,
            });
        }
        let d_input = d_input.unwrap();
        if l > 0 {
            // undo the dropout gap between layer l-1 and layer l
            d_h = d_input * &trace.masks[l - 1];
        } else {
            d_h = d_input;
        }
    }
    Ok(grads)
}

/// Soft score and hard label (>= 0.5 maps to the positive class).
pub fn predict(
    params: &ModelParams,
    config: &ModelConfig,
    ops: &OperatorPowers,
    record: &PatientRecord,
) -> Result<(f64, u8)> {
    let x = vectorize_zeropad(record);
    let trace = forward(params, config, ops, &x, Phase::Eval)?;
    Ok((trace.y_hat, u8::from(trace.y_hat >= 0.5)))
}

/// Normalize the operator and precompute the powers a config needs.
pub fn build_operator(st: &STAdjacency, config: &ModelConfig) -> Result<OperatorPowers> {
    let normalized = normalize_adjacency(&st.matrix)?;
    OperatorPowers::new(&normalized.a_hat, config.max_power())
}

/// One row of the training log CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    /// Fold index, or "refit" for the final full-set pass.
    pub fold: String,
    pub train_loss: f64,
    pub val_roc_auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn write_csv(&self, path: &Path, meta: &Meta) -> Result<()> {
        let mut out = String::new();
        out.push_str(&meta.csv_comment());
        out.push('\n');
        out.push_str("epoch,fold,train_loss,val_roc_auc\n");
        for row in &self.rows {
            let val = row
                .val_roc_auc
                .map(|v| format!("{v}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.epoch, row.fold, row.train_loss, val
            ));
        }
        io::atomic_write(path, out.as_bytes())
    }
}

fn gather_samples(dataset: &Dataset, ids: &[String]) -> Result<(Vec<Array1<f64>>, Vec<u8>)> {
    let mut xs = Vec::with_capacity(ids.len());
    let mut ys = Vec::with_capacity(ids.len());
    for id in ids {
        let record = dataset
            .patient(id)
            .ok_or_else(|| Error::Split(format!("unknown patient id '{id}'")))?;
        xs.push(vectorize_zeropad(record));
        ys.push(record.label);
    }
    Ok((xs, ys))
}

/// SGD on the given ids; per-epoch learning rate lr/(1 + decay*epoch).
fn train_on_ids(
    dataset: &Dataset,
    ids: &[String],
    ops: &OperatorPowers,
    config: &ModelConfig,
    seed: u64,
    fold_label: &str,
    log: &mut TrainingLog,
) -> Result<ModelParams> {
    if ids.is_empty() {
        return Err(Error::Split("cannot train on an empty id list".into()));
    }
    let (xs, ys) = gather_samples(dataset, ids)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(config, ops.num_nodes(), &mut rng);

    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 0..config.epochs {
        let lr = config.learning_rate / (1.0 + config.lr_decay * epoch as f64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads: Option<Gradients> = None;
            let mut batch_loss = 0.0;
            for &i in batch {
                let trace = forward(&params, config, ops, &xs[i], Phase::Train { rng: &mut rng })?;
                batch_loss += loss_bce(trace.y_hat, ys[i]);
                let g = backward(&trace, &params, config, ops, ys[i])?;
                match &mut grads {
                    None => grads = Some(g),
                    Some(acc) => acc.accumulate(&g),
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss in epoch {epoch} ({fold_label})"
                )));
            }
            let mut grads = grads.unwrap();
            grads.scale(1.0 / batch.len() as f64);
            params.update(&grads, lr);
            epoch_loss += batch_loss;
        }
        log.rows.push(LogRow {
            epoch,
            fold: fold_label.to_string(),
            train_loss: epoch_loss / xs.len() as f64,
            val_roc_auc: None,
        });
    }
    Ok(params)
}

fn eval_auc(
    dataset: &Dataset,
    ids: &[String],
    ops: &OperatorPowers,
    config: &ModelConfig,
    params: &ModelParams,
) -> Result<Option<f64>> {
    let (xs, ys) = gather_samples(dataset, ids)?;
    if ys.iter().all(|&y| y == 1) || ys.iter().all(|&y| y == 0) {
        return Ok(None);
    }
    let mut scores = Vec::with_capacity(xs.len());
    for x in &xs {
        scores.push(forward(params, config, ops, x, Phase::Eval)?.y_hat);
    }
    Ok(Some(metrics::roc_auc(&scores, &ys)?))
}

/// Result of one full training run: selected parameters plus the log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: TrainingLog,
    /// Mean validation ROC-AUC across evaluable folds.
    pub mean_val_auc: f64,
}

/// Cross-validate one configuration and refit it on the balanced set.
///
/// Per-fold models train on the fold's training ids and are scored on its
/// validation ids in evaluation mode; the returned parameters come from a
/// final refit over all balanced training ids. Deterministic given
/// `config.seed`.
pub fn train(
    dataset: &Dataset,
    split: &SplitPlan,
    st: &STAdjacency,
    config: &ModelConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let ops = build_operator(st, config)?;
    let mut log = TrainingLog::default();

    // distinct configurations get independent init/shuffle/dropout streams
    let config_tag = io::config_hash(config)?;

    let mut fold_aucs = Vec::new();
    for (k, fold) in split.folds.iter().enumerate() {
        let label = k.to_string();
        let seed = io::derive_seed(config.seed, &format!("fold-{k}-{config_tag}"));
        let params = train_on_ids(dataset, &fold.train, &ops, config, seed, &label, &mut log)?;
        let auc = eval_auc(dataset, &fold.validate, &ops, config, &params)?;
        if let Some(row) = log.rows.last_mut() {
            row.val_roc_auc = auc;
        }
        if let Some(auc) = auc {
            fold_aucs.push(auc);
        }
    }
    if fold_aucs.is_empty() && !split.folds.is_empty() {
        return Err(Error::SingleClass(
            "no validation fold contained both classes".into(),
        ));
    }
    let mean_val_auc = if fold_aucs.is_empty() {
        f64::NAN
    } else {
        fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64
    };

    let refit_seed = io::derive_seed(config.seed, &format!("refit-{config_tag}"));
    let params = train_on_ids(
        dataset,
        &split.balanced_train_ids,
        &ops,
        config,
        refit_seed,
        "refit",
        &mut log,
    )?;
    Ok(TrainOutcome {
        params,
        log,
        mean_val_auc,
    })
}

/// Per-grid-point cross-validation scores and the selected index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub best_index: usize,
    pub mean_val_aucs: Vec<f64>,
}

/// Grid search: cross-validate every configuration, pick the best mean
/// validation ROC-AUC (ties keep the earliest grid point), refit it.
pub fn grid_search(
    dataset: &Dataset,
    split: &SplitPlan,
    st: &STAdjacency,
    grid: &[ModelConfig],
) -> Result<(GridSearchReport, TrainOutcome)> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    // grid points are independent deterministic runs; fan out on the pool
    let outcomes: Vec<TrainOutcome> = grid
        .par_iter()
        .map(|config| train(dataset, split, st, config))
        .collect::<Result<_>>()?;
    let aucs: Vec<f64> = outcomes.iter().map(|o| o.mean_val_auc).collect();
    // strict improvement only, so ties keep the earliest grid point
    let mut best_index = 0;
    for i in 1..aucs.len() {
        if aucs[i] > aucs[best_index] {
            best_index = i;
        }
    }
    let outcome = outcomes.into_iter().nth(best_index).unwrap();
    Ok((
        GridSearchReport {
            best_index,
            mean_val_aucs: aucs,
        },
        outcome,
    ))
}

// --- checkpoint file format ---------------------------------------------

#[derive(Serialize, Deserialize)]
struct TensorWire {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TensorWire {
    fn from_matrix(m: &Array2<f64>) -> TensorWire {
        TensorWire {
            shape: vec![m.nrows(), m.ncols()],
            data: m.iter().copied().collect(),
        }
    }

    fn to_matrix(&self) -> Result<Array2<f64>> {
        if self.shape.len() != 2 {
            return Err(Error::ModelShape(format!(
                "expected rank-2 tensor, got shape {:?}",
                self.shape
            )));
        }
        Array2::from_shape_vec((self.shape[0], self.shape[1]), self.data.clone())
            .map_err(|e| Error::ModelShape(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct LayerWire {
    weights: Vec<TensorWire>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsWire {
    layers: Vec<LayerWire>,
    head_w: Vec<f64>,
    head_b: f64,
}

/// Self-contained trained model: config, operator graph, and parameters.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub meta: Meta,
    pub config: ModelConfig,
    pub graph: STAdjacency,
    #[serde(with = "params_serde")]
    pub params: ModelParams,
    /// Mean validation ROC-AUC of the selected configuration.
    pub mean_val_auc: f64,
}

mod params_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        params: &ModelParams,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let wire = ParamsWire {
            layers: params
                .layers
                .iter()
                .map(|l| LayerWire {
                    weights: l.weights.iter().map(TensorWire::from_matrix).collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            head_w: params.head_w.to_vec(),
            head_b: params.head_b,
        };
        wire.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<ModelParams, D::Error> {
        let wire = ParamsWire::deserialize(d)?;
        let layers = wire
            .layers
            .into_iter()
            .map(|l| {
                Ok(LayerParams {
                    weights: l
                        .weights
                        .iter()
                        .map(TensorWire::to_matrix)
                        .collect::<Result<_>>()?,
                    bias: Array1::from_vec(l.bias),
                })
            })
            .collect::<Result<_>>()
            .map_err(serde::de::Error::custom)?;
        Ok(ModelParams {
            layers,
            head_w: Array1::from_vec(wire.head_w),
            head_b: wire.head_b,
        })
    }
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let ckpt: Checkpoint = io::read_json(path)?;
        ckpt.graph.validate()?;
        ckpt.params
            .validate_shapes(&ckpt.config, ckpt.graph.num_nodes())?;
        Ok(ckpt)
    }
}
