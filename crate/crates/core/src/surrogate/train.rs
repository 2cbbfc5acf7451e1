//! Mini-batch training with early stopping.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{smooth_l1_term, smooth_l1_term_grad};
use super::{Grads, NormStats, OptimizerKind, SurrogateNet};
use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::synth::LabeledSet;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Patience-based early stopping that keeps a copy of the best state.
#[derive(Debug, Clone)]
pub struct EarlyStopper<T> {
    patience: usize,
    best_loss: f64,
    best_step: usize,
    epochs_since_best: usize,
    best_snapshot: T,
}

impl<T> EarlyStopper<T> {
    /// Start from an already evaluated state, recorded as step 0.
    pub fn new(patience: usize, initial_loss: f64, snapshot: T) -> Self {
        EarlyStopper {
            patience: patience.max(1),
            best_loss: initial_loss,
            best_step: 0,
            epochs_since_best: 0,
            best_snapshot: snapshot,
        }
    }

    /// Record the loss after `step`. The snapshot closure runs only on
    /// improvement. Returns `true` once patience is exhausted.
    pub fn observe(&mut self, step: usize, loss: f64, snapshot: impl FnOnce() -> T) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_step = step;
            self.epochs_since_best = 0;
            self.best_snapshot = snapshot();
        } else {
            self.epochs_since_best += 1;
        }
        self.should_stop()
    }

    pub fn should_stop(&self) -> bool {
        self.epochs_since_best >= self.patience
    }

    pub fn patience(&self) -> usize {
        self.patience
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn best_step(&self) -> usize {
        self.best_step
    }

    pub fn epochs_since_best(&self) -> usize {
        self.epochs_since_best
    }

    pub fn best(&self) -> &T {
        &self.best_snapshot
    }

    pub fn into_best(self) -> T {
        self.best_snapshot
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Validation loss of the network passed in, before any update.
    pub initial_val_loss: f64,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were restored; 0 means the initial state.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }

    /// Training loss of the restored epoch (NaN if the initial state won).
    pub fn best_train_loss(&self) -> f64 {
        self.history
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .map_or(f64::NAN, |r| r.train_loss)
    }
}

/// Mean Smooth L1 over every element of a batch and its gradient with
/// respect to `out`.
pub(crate) fn batch_loss_and_grad(out: ArrayView2<f64>, y: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let count = (out.len().max(1)) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(out.raw_dim());
    ndarray::Zip::from(&mut grad).and(out).and(y).for_each(|g, &o, &t| {
        let e = o - t;
        loss += smooth_l1_term(e);
        *g = smooth_l1_term_grad(e) / count;
    });
    (loss / count, grad)
}

/// Mean per-row Smooth L1 of the deterministic network on a labeled set.
pub fn evaluate_loss(net: &SurrogateNet, set: &LabeledSet) -> Result<f64> {
    check_dim("input columns", net.input_dim(), set.input_dim())?;
    check_dim("label columns", net.output_dim(), set.output_dim())?;
    if set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(eval_loss_unchecked(net, set))
}

fn eval_loss_unchecked(net: &SurrogateNet, set: &LabeledSet) -> f64 {
    let pred = net.predict_unchecked(set.x.view());
    let mut sum = 0.0;
    ndarray::Zip::from(&pred)
        .and(&set.y)
        .for_each(|&p, &t| sum += smooth_l1_term(p - t));
    sum / pred.len() as f64
}

/// Optimizer state plus the shuffle and dropout generators. Keeping one
/// trainer across several `fit` calls continues the same random streams and
/// Adam moments.
#[derive(Debug, Clone)]
pub struct Trainer {
    kind: OptimizerKind,
    learning_rate: f64,
    batch_size: usize,
    max_epochs: usize,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    shuffle_rng: Rng,
    dropout_rng: Rng,
}

impl Trainer {
    pub fn new(net: &SurrogateNet) -> Self {
        let cfg = net.config();
        let sizes: Vec<usize> = Grads::sizes(net);
        Trainer {
            kind: cfg.optimizer,
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            max_epochs: cfg.max_epochs,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            shuffle_rng: rng::stream(cfg.seed, Stream::NnShuffle),
            dropout_rng: rng::stream(cfg.seed, Stream::NnDropout),
        }
    }

    fn apply(&mut self, net: &mut SurrogateNet, grads: &Grads) {
        self.step += 1;
        let lr = self.learning_rate;
        let (bc1, bc2) = (
            1.0 - ADAM_BETA1.powi(self.step.min(i32::MAX as u64) as i32),
            1.0 - ADAM_BETA2.powi(self.step.min(i32::MAX as u64) as i32),
        );
        let kind = self.kind;
        for (((param, grad), m), v) in net
            .trainable_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            match kind {
                OptimizerKind::Sgd => {
                    for (p, g) in param.iter_mut().zip(grad) {
                        *p -= lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    for i in 0..param.len() {
                        let g = grad[i];
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        param[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }

    /// One epoch of shuffled mini-batch updates; returns the mean batch loss.
    fn epoch(&mut self, net: &mut SurrogateNet, train: &LabeledSet) -> f64 {
        let n = train.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.shuffle_rng);
        let (j, m) = (train.input_dim(), train.output_dim());
        let mut total = 0.0;
        for idx in order.chunks(self.batch_size) {
            let mut xb = Array2::zeros((idx.len(), j));
            let mut yb = Array2::zeros((idx.len(), m));
            for (r, &i) in idx.iter().enumerate() {
                xb.row_mut(r).assign(&train.x.row(i));
                yb.row_mut(r).assign(&train.y.row(i));
            }
            let mask = (net.config.dropout_rate > 0.0).then(|| net.sample_mask(idx.len(), &mut self.dropout_rng));
            let cache = net.forward_cached(xb.view(), mask, NormStats::Batch);
            let (loss, d_out) = batch_loss_and_grad(cache.out.view(), yb.view());
            total += loss * idx.len() as f64;
            let grads = net.backward(&cache, d_out.view());
            net.update_running_stats(&cache);
            self.apply(net, &grads);
        }
        total / n as f64
    }

    /// Train until validation loss stalls for `patience` epochs or
    /// `max_epochs` is reached, then restore the best parameters.
    pub fn fit(
        &mut self,
        net: &mut SurrogateNet,
        train: &LabeledSet,
        val: &LabeledSet,
        patience: usize,
    ) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        for set in [train, val] {
            check_dim("input columns", net.input_dim(), set.input_dim())?;
            check_dim("label columns", net.output_dim(), set.output_dim())?;
        }
        let initial_val_loss = evaluate_loss(net, val)?;
        if !initial_val_loss.is_finite() {
            return Err(Error::NanLoss { epoch: 0 });
        }
        let mut stopper = EarlyStopper::new(patience, initial_val_loss, net.clone());
        let mut history = Vec::new();
        let mut stopped_early = false;
        for epoch in 1..=self.max_epochs {
            let train_loss = self.epoch(net, train);
            let val_loss = eval_loss_unchecked(net, val);
            if !train_loss.is_finite() || !val_loss.is_finite() {
                *net = stopper.into_best();
                return Err(Error::NanLoss { epoch });
            }
            history.push(EpochRecord {
                epoch,
                train_loss,
                val_loss,
            });
            if stopper.observe(epoch, val_loss, || net.clone()) {
                stopped_early = true;
                break;
            }
        }
        let best_epoch = stopper.best_step();
        let best_val_loss = stopper.best_loss();
        *net = stopper.into_best();
        Ok(TrainReport {
            initial_val_loss,
            history,
            best_epoch,
            best_val_loss,
            stopped_early,
        })
    }
}

impl Grads {
    fn sizes(net: &SurrogateNet) -> Vec<usize> {
        vec![
            net.w1.len(),
            net.b1.len(),
            net.gain.len(),
            net.bias.len(),
            net.w2.len(),
            net.b2.len(),
        ]
    }
}

/// Train a fresh optimizer on `train`, early-stopping on `val`.
pub fn train(net: &mut SurrogateNet, train: &LabeledSet, val: &LabeledSet, patience: usize) -> Result<TrainReport> {
    Trainer::new(net).fit(net, train, val, patience)
}

/// Row-wise mean squared error of the deterministic network against labels.
pub fn mse(net: &SurrogateNet, set: &LabeledSet) -> Result<f64> {
    check_dim("input columns", net.input_dim(), set.input_dim())?;
    check_dim("label columns", net.output_dim(), set.output_dim())?;
    if set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let pred = net.predict(set.x.view())?;
    let diff = &pred - &set.y;
    Ok(diff.mapv(|d| d * d).sum() / diff.len() as f64)
}

/// Mean squared error of the risk-minimizing prediction (row mean over the
/// `M` outputs) against the row mean of the labels.
pub fn risk_min_mse(net: &SurrogateNet, set: &LabeledSet) -> Result<f64> {
    check_dim("input columns", net.input_dim(), set.input_dim())?;
    if set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let pred = net.predict(set.x.view())?.mean_axis(Axis(1)).expect("M >= 1");
    let truth = set.y.mean_axis(Axis(1)).expect("M >= 1");
    Ok((&pred - &truth).mapv(|d| d * d).mean().unwrap_or(0.0))
}
