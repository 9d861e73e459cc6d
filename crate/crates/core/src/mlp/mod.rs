//! Feed-forward ReLU regression network `f(x) = W·h(x) + b` with manual backprop.
//!
//! `h` stacks `L` dense ReLU layers of equal width; the head is a single linear layer.
//! The training objective is
//!
//! ```text
//! (1/2M) Σ ‖f(xᵢ) − yᵢ‖² + (λ/2)(‖θ‖² + ‖W‖²_F)
//! ```
//!
//! where `θ` holds the hidden weights and, by default, the hidden biases. The head bias
//! is never penalised.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use train::{train, ProbeEntry, ProbeLog, TrainOptions, DEFAULT_PROBE_SIZE};

use rand::Rng;

use crate::error::{Error, Result};
use crate::ndstats::{gemm, Matrix};
use crate::seeds;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub target_dim: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.hidden_layers == 0
            || self.hidden_width == 0
            || self.target_dim == 0
        {
            return Err(Error::InvalidArgument(format!(
                "network dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Dense layer computing `x·Wᵀ + b` for row-vector inputs; `weights` is out×in.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// `out = x·Wᵀ + b` for a batch of `rows` inputs.
    fn apply(&self, x: &[f64], rows: usize, out: &mut [f64]) {
        let (o, i) = (self.out_dim(), self.in_dim());
        for r in out[..rows * o].chunks_exact_mut(o) {
            r.copy_from_slice(&self.bias);
        }
        gemm(
            rows,
            i,
            o,
            1.0,
            (x, i as isize, 1),
            (self.weights.as_slice(), 1, i as isize),
            1.0,
            (out, o as isize, 1),
        );
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub hidden: Vec<Dense>,
    pub head: Dense,
}

/// Parameter-shaped gradient container.
pub type Gradients = MlpModel;

/// Weight-decay settings for [`loss_with`] and [`backward_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalty {
    pub weight_decay: f64,
    pub hidden_biases: bool,
}

impl Penalty {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            weight_decay,
            hidden_biases: true,
        }
    }
}

/// Every intermediate matrix of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTrace {
    pub epoch: usize,
    pub inputs: Matrix,
    /// Pre-activations of each hidden layer.
    pub pre: Vec<Matrix>,
    /// Post-ReLU outputs of each hidden layer; the last one is `H`.
    pub post: Vec<Matrix>,
    pub predictions: Matrix,
}

impl ActivationTrace {
    /// Last-layer features `H`, the input to the linear head.
    pub fn features(&self) -> &Matrix {
        self.post.last().expect("at least one hidden layer")
    }
}

impl MlpModel {
    pub fn n_params(&self) -> usize {
        self.layers()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Hidden layers followed by the head.
    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden.iter().chain(std::iter::once(&self.head))
    }

    #[cfg(test)]
    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.head))
    }

    fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            hidden: self
                .hidden
                .iter()
                .map(|l| Dense::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            head: Dense::zeros(self.head.out_dim(), self.head.in_dim()),
        }
    }

    /// Squared norm of the penalised parameters.
    fn penalized_norm_sq(&self, hidden_biases: bool) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let mut total = sq(self.head.weights.as_slice());
        for l in &self.hidden {
            total += sq(l.weights.as_slice());
            if hidden_biases {
                total += sq(&l.bias);
            }
        }
        total
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        forward(self, inputs, false).map(|(p, _)| p)
    }
}

/// Fan-in uniform weights in `±√(6/fan_in)`, zero biases.
pub fn init_model(config: &MlpConfig) -> Result<MlpModel> {
    config.validate()?;
    let mut rng = seeds::rng(config.seed);
    let mut layer = |out_dim: usize, in_dim: usize| {
        let bound = (6.0 / in_dim as f64).sqrt();
        Dense {
            weights: Matrix::from_fn(out_dim, in_dim, |_, _| rng.gen_range(-bound..bound)),
            bias: vec![0.0; out_dim],
        }
    };
    let mut hidden = Vec::with_capacity(config.hidden_layers);
    let mut fan_in = config.input_dim;
    for _ in 0..config.hidden_layers {
        hidden.push(layer(config.hidden_width, fan_in));
        fan_in = config.hidden_width;
    }
    let head = layer(config.target_dim, config.hidden_width);
    Ok(MlpModel {
        config: *config,
        hidden,
        head,
    })
}

/// Raw buffers of one batched forward pass.
pub(crate) struct ForwardCache {
    pub rows: usize,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

impl ForwardCache {
    pub(crate) fn new(model: &MlpModel, rows: usize) -> Self {
        let w = model.config.hidden_width;
        Self {
            rows,
            pre: vec![vec![0.0; rows * w]; model.hidden.len()],
            post: vec![vec![0.0; rows * w]; model.hidden.len()],
            out: vec![0.0; rows * model.config.target_dim],
        }
    }
}

/// Forward pass into preallocated buffers sized for at least `rows` rows.
pub(crate) fn forward_into(model: &MlpModel, x: &[f64], rows: usize, cache: &mut ForwardCache) {
    cache.rows = rows;
    let w = model.config.hidden_width;
    for (l, layer) in model.hidden.iter().enumerate() {
        let (done, rest) = cache.post.split_at_mut(l);
        let input: &[f64] = if l == 0 { x } else { &done[l - 1] };
        let pre = &mut cache.pre[l];
        layer.apply(input, rows, pre);
        let post = &mut rest[0];
        for (p, &z) in post[..rows * w].iter_mut().zip(&pre[..rows * w]) {
            *p = z.max(0.0);
        }
    }
    let h = cache.post.last().expect("at least one hidden layer");
    model.head.apply(h, rows, &mut cache.out);
}

fn check_inputs(model: &MlpModel, inputs: &Matrix) -> Result<()> {
    if inputs.cols() != model.config.input_dim {
        return Err(Error::Shape(format!(
            "inputs have {} columns, network expects {}",
            inputs.cols(),
            model.config.input_dim
        )));
    }
    Ok(())
}

fn check_targets(model: &MlpModel, inputs: &Matrix, targets: &Matrix) -> Result<()> {
    check_inputs(model, inputs)?;
    if targets.rows() != inputs.rows() || targets.cols() != model.config.target_dim {
        return Err(Error::Shape(format!(
            "targets are {}x{}, expected {}x{}",
            targets.rows(),
            targets.cols(),
            inputs.rows(),
            model.config.target_dim
        )));
    }
    Ok(())
}

/// Predictions and, if `capture`, every intermediate activation.
pub fn forward(
    model: &MlpModel,
    inputs: &Matrix,
    capture: bool,
) -> Result<(Matrix, Option<ActivationTrace>)> {
    check_inputs(model, inputs)?;
    let rows = inputs.rows();
    let mut cache = ForwardCache::new(model, rows);
    forward_into(model, inputs.as_slice(), rows, &mut cache);
    let n = model.config.target_dim;
    let w = model.config.hidden_width;
    let predictions = Matrix::from_raw(rows, n, cache.out);
    let trace = capture.then(|| ActivationTrace {
        epoch: 0,
        inputs: inputs.clone(),
        pre: cache
            .pre
            .into_iter()
            .map(|v| Matrix::from_raw(rows, w, v))
            .collect(),
        post: cache
            .post
            .into_iter()
            .map(|v| Matrix::from_raw(rows, w, v))
            .collect(),
        predictions: predictions.clone(),
    });
    Ok((predictions, trace))
}

/// Regularised objective with hidden biases penalised.
pub fn loss(model: &MlpModel, inputs: &Matrix, targets: &Matrix, weight_decay: f64) -> Result<f64> {
    loss_with(model, inputs, targets, Penalty::new(weight_decay))
}

pub fn loss_with(
    model: &MlpModel,
    inputs: &Matrix,
    targets: &Matrix,
    penalty: Penalty,
) -> Result<f64> {
    check_targets(model, inputs, targets)?;
    let p = model.predict(inputs)?;
    let sse: f64 = p
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let data = sse / (2.0 * inputs.rows() as f64);
    Ok(data + 0.5 * penalty.weight_decay * model.penalized_norm_sq(penalty.hidden_biases))
}

/// Analytic gradient of [`loss`].
pub fn backward(
    model: &MlpModel,
    inputs: &Matrix,
    targets: &Matrix,
    weight_decay: f64,
) -> Result<Gradients> {
    backward_with(model, inputs, targets, Penalty::new(weight_decay))
}

pub fn backward_with(
    model: &MlpModel,
    inputs: &Matrix,
    targets: &Matrix,
    penalty: Penalty,
) -> Result<Gradients> {
    check_targets(model, inputs, targets)?;
    let rows = inputs.rows();
    let mut cache = ForwardCache::new(model, rows);
    forward_into(model, inputs.as_slice(), rows, &mut cache);
    let mut grads = model.zeros_like();
    let mut scratch = BackpropScratch::new(model, rows);
    data_gradients(
        model,
        inputs.as_slice(),
        targets.as_slice(),
        &cache,
        &mut scratch,
        &mut grads,
    );
    let lambda = penalty.weight_decay;
    if lambda != 0.0 {
        for (g, p) in grads.hidden.iter_mut().zip(&model.hidden) {
            axpy(lambda, p.weights.as_slice(), g.weights.as_mut_slice());
            if penalty.hidden_biases {
                axpy(lambda, &p.bias, &mut g.bias);
            }
        }
        axpy(
            lambda,
            model.head.weights.as_slice(),
            grads.head.weights.as_mut_slice(),
        );
    }
    Ok(grads)
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) struct BackpropScratch {
    delta: Vec<f64>,
    upstream: Vec<f64>,
    out_delta: Vec<f64>,
}

impl BackpropScratch {
    pub(crate) fn new(model: &MlpModel, rows: usize) -> Self {
        let w = model.config.hidden_width;
        Self {
            delta: vec![0.0; rows * w],
            upstream: vec![0.0; rows * w],
            out_delta: vec![0.0; rows * model.config.target_dim],
        }
    }
}

/// Gradient of `(1/2B) Σ ‖f(x) − y‖²` over the cached batch, written into `grads`.
pub(crate) fn data_gradients(
    model: &MlpModel,
    x: &[f64],
    y: &[f64],
    cache: &ForwardCache,
    scratch: &mut BackpropScratch,
    grads: &mut Gradients,
) {
    let rows = cache.rows;
    let n = model.config.target_dim;
    let w = model.config.hidden_width;
    let d_in = model.config.input_dim;
    let inv = 1.0 / rows as f64;

    let dout = &mut scratch.out_delta[..rows * n];
    for ((g, p), t) in dout
        .iter_mut()
        .zip(&cache.out[..rows * n])
        .zip(&y[..rows * n])
    {
        *g = (p - t) * inv;
    }
    let h = cache.post.last().expect("at least one hidden layer");
    layer_grads(dout, h, rows, n, w, &mut grads.head);
    // dH = dOut · W
    let delta = &mut scratch.delta[..rows * w];
    gemm(
        rows,
        n,
        w,
        1.0,
        (dout, n as isize, 1),
        (model.head.weights.as_slice(), w as isize, 1),
        0.0,
        (delta, w as isize, 1),
    );

    for l in (0..model.hidden.len()).rev() {
        let delta = &mut scratch.delta[..rows * w];
        for (g, &z) in delta.iter_mut().zip(&cache.pre[l][..rows * w]) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        let (input, in_dim): (&[f64], usize) = if l == 0 {
            (x, d_in)
        } else {
            (&cache.post[l - 1], w)
        };
        layer_grads(delta, input, rows, w, in_dim, &mut grads.hidden[l]);
        if l > 0 {
            let up = &mut scratch.upstream[..rows * w];
            gemm(
                rows,
                w,
                w,
                1.0,
                (delta, w as isize, 1),
                (model.hidden[l].weights.as_slice(), w as isize, 1),
                0.0,
                (up, w as isize, 1),
            );
            std::mem::swap(&mut scratch.delta, &mut scratch.upstream);
        }
    }
}

/// `dW = deltaᵀ·input`, `db = Σ_rows delta`.
fn layer_grads(
    delta: &[f64],
    input: &[f64],
    rows: usize,
    out_dim: usize,
    in_dim: usize,
    g: &mut Dense,
) {
    gemm(
        out_dim,
        rows,
        in_dim,
        1.0,
        (delta, 1, out_dim as isize),
        (input, in_dim as isize, 1),
        0.0,
        (g.weights.as_mut_slice(), in_dim as isize, 1),
    );
    g.bias.fill(0.0);
    for r in delta[..rows * out_dim].chunks_exact(out_dim) {
        for (b, v) in g.bias.iter_mut().zip(r) {
            *b += v;
        }
    }
}

/// Mean over rows of the squared Euclidean prediction error.
pub fn mse(predictions: &Matrix, targets: &Matrix) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(Error::Shape(format!(
            "predictions {:?} vs targets {:?}",
            predictions.shape(),
            targets.shape()
        )));
    }
    let sse: f64 = predictions
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sse / predictions.rows() as f64)
}
