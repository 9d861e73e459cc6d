use rand::seq::SliceRandom;

use super::{
    data_gradients, forward, forward_into, loss_with, ActivationTrace, BackpropScratch,
    ForwardCache, MlpModel, Penalty,
};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::ndstats::Matrix;
use crate::seeds;

/// Probe subsample size used when none is given.
pub const DEFAULT_PROBE_SIZE: usize = 2000;
/// Training aborts once the loss exceeds this multiple of its initial value.
const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub shuffle_seed: u64,
    /// Epochs after which activations are captured; 0 means before any update.
    pub probe_epochs: Vec<usize>,
    pub penalize_hidden_biases: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-2,
            weight_decay: 0.0,
            shuffle_seed: 0,
            probe_epochs: Vec::new(),
            penalize_hidden_biases: true,
        }
    }
}

impl TrainOptions {
    pub fn penalty(&self) -> Penalty {
        Penalty {
            weight_decay: self.weight_decay,
            hidden_biases: self.penalize_hidden_biases,
        }
    }

    fn validate(&self, rows: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > rows {
            return Err(Error::InvalidArgument(format!(
                "batch size {} must be in 1..={rows}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight decay {} must be non-negative",
                self.weight_decay
            )));
        }
        if self.probe_epochs.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("probe epochs must be sorted".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeEntry {
    pub epoch: usize,
    /// Full-data regularised objective at this epoch.
    pub train_loss: f64,
    pub trace: ActivationTrace,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProbeLog {
    pub entries: Vec<ProbeEntry>,
    /// Per-epoch mean of mini-batch objectives, one per completed epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD without momentum.
///
/// Each step applies `p ← p·(1 − lr·λ) − lr·∇data` to penalised parameters and
/// `p ← p − lr·∇data` to the rest, which is plain gradient descent on the regularised
/// objective. Batches are reshuffled every epoch from `shuffle_seed`.
pub fn train(
    model: &MlpModel,
    train_set: &Dataset,
    opts: &TrainOptions,
    probe_inputs: &Matrix,
) -> Result<(MlpModel, ProbeLog)> {
    let x = &train_set.inputs;
    let y = &train_set.targets;
    let rows = x.rows();
    opts.validate(rows)?;
    super::check_targets(model, x, y)?;
    super::check_inputs(model, probe_inputs)?;

    let mut model = model.clone();
    let mut log = ProbeLog::default();
    let penalty = opts.penalty();
    let mut probes = opts
        .probe_epochs
        .iter()
        .copied()
        .filter(|&e| e <= opts.epochs)
        .peekable();
    let mut capture = |model: &MlpModel, epoch: usize, log: &mut ProbeLog| -> Result<()> {
        while probes.peek() == Some(&epoch) {
            probes.next();
            let (_, trace) = forward(model, probe_inputs, true)?;
            let mut trace = trace.expect("capture requested");
            trace.epoch = epoch;
            log.entries.push(ProbeEntry {
                epoch,
                train_loss: loss_with(model, x, y, penalty)?,
                trace,
            });
        }
        Ok(())
    };
    capture(&model, 0, &mut log)?;
    if opts.epochs == 0 {
        return Ok((model, log));
    }

    let initial = loss_with(&model, x, y, penalty)?;
    let limit = if initial > 0.0 {
        DIVERGENCE_FACTOR * initial
    } else {
        f64::INFINITY
    };

    let d = model.config.input_dim;
    let n = model.config.target_dim;
    let bs = opts.batch_size;
    let lr = opts.learning_rate;
    let shrink = 1.0 - lr * opts.weight_decay;
    let mut rng = seeds::rng(opts.shuffle_seed);
    let mut order: Vec<usize> = (0..rows).collect();
    let mut xb = vec![0.0; bs * d];
    let mut yb = vec![0.0; bs * n];
    let mut cache = ForwardCache::new(&model, bs);
    let mut scratch = BackpropScratch::new(&model, bs);
    let mut grads = model.zeros_like();

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for batch in order.chunks(bs) {
            let b = batch.len();
            for (slot, &i) in batch.iter().enumerate() {
                xb[slot * d..(slot + 1) * d].copy_from_slice(x.row(i));
                yb[slot * n..(slot + 1) * n].copy_from_slice(y.row(i));
            }
            forward_into(&model, &xb, b, &mut cache);
            sse += cache.out[..b * n]
                .iter()
                .zip(&yb[..b * n])
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>();
            data_gradients(&model, &xb, &yb, &cache, &mut scratch, &mut grads);
            sgd_step(&mut model, &grads, lr, shrink, penalty.hidden_biases);
        }
        let epoch_loss = sse / (2.0 * rows as f64)
            + 0.5 * opts.weight_decay * model.penalized_norm_sq(penalty.hidden_biases);
        log.epoch_losses.push(epoch_loss);
        if !epoch_loss.is_finite() || epoch_loss > limit || !model.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss,
            });
        }
        capture(&model, epoch, &mut log)?;
    }
    Ok((model, log))
}

fn sgd_step(model: &mut MlpModel, grads: &MlpModel, lr: f64, shrink: f64, hidden_biases: bool) {
    let decayed = |p: &mut [f64], g: &[f64]| {
        for (pi, gi) in p.iter_mut().zip(g) {
            *pi = *pi * shrink - lr * gi;
        }
    };
    let plain = |p: &mut [f64], g: &[f64]| {
        for (pi, gi) in p.iter_mut().zip(g) {
            *pi -= lr * gi;
        }
    };
    for (p, g) in model.hidden.iter_mut().zip(&grads.hidden) {
        decayed(p.weights.as_mut_slice(), g.weights.as_slice());
        if hidden_biases {
            decayed(&mut p.bias, &g.bias);
        } else {
            plain(&mut p.bias, &g.bias);
        }
    }
    decayed(
        model.head.weights.as_mut_slice(),
        grads.head.weights.as_slice(),
    );
    plain(&mut model.head.bias, &grads.head.bias);
}
