use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, SplitKind};
use super::loss::{cross_entropy, one_hot};
use super::mlp::{HiddenLayer, Mlp};
use super::optim::{sgd_momentum_step, Hyperparams, MomentumMode, MomentumState};
use crate::error::{Error, Result};

/// Validation performance after a completed epoch (`epoch` counts
/// completed epochs, so 0 means "before any training").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

/// Accuracy (argmax hit rate) and mean cross-entropy of `net` on `split`.
pub fn evaluate(net: &Mlp, data: &Dataset, split: SplitKind, epoch: u64) -> Result<EpochMetrics> {
    let (x, labels) = data.split_batch(split);
    if labels.is_empty() {
        return Err(Error::invalid(format!("{split:?} split is empty")));
    }
    let cache = net.forward(x.view())?;
    let targets = one_hot(&labels, data.num_classes());
    let loss = cross_entropy(cache.y.view(), targets.view());
    let hits = cache
        .y
        .rows()
        .into_iter()
        .zip(&labels)
        .filter(|(row, &label)| argmax(row.iter().copied()) == label)
        .count();
    Ok(EpochMetrics {
        epoch,
        val_accuracy: hits as f64 / labels.len() as f64,
        val_loss: loss,
    })
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn minibatch_step(
    net: &mut Mlp,
    state: &mut MomentumState,
    hp: &Hyperparams,
    data: &Dataset,
    rows: &[usize],
) -> Result<()> {
    let (x, labels) = data.batch(rows);
    let targets = one_hot(&labels, data.num_classes());
    let cache = net.forward(x.view())?;
    let grads = net.backward(x.view(), &cache, targets.view())?;
    sgd_momentum_step(net, &grads, state, hp)?;
    if !net.params().is_finite() {
        return Err(Error::numeric("parameters became non-finite"));
    }
    Ok(())
}

fn shuffled_train_order(data: &Dataset, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = data.split_range(SplitKind::Train).collect();
    order.shuffle(rng);
    order
}

/// Number of optimiser steps in one epoch; the last batch may be short.
pub fn steps_per_epoch(train_size: usize, batch_size: usize) -> usize {
    train_size.div_ceil(batch_size)
}

/// One pass over the training split in a shuffled order drawn from `rng`,
/// followed by a validation evaluation labelled `epoch`.
pub fn train_epoch(
    net: &mut Mlp,
    data: &Dataset,
    hp: &Hyperparams,
    state: &mut MomentumState,
    rng: &mut ChaCha8Rng,
    epoch: u64,
) -> Result<EpochMetrics> {
    if data.split_len(SplitKind::Train) == 0 {
        return Err(Error::invalid("training split is empty"));
    }
    hp.validate(Some(data.split_len(SplitKind::Train)))?;
    let order = shuffled_train_order(data, rng);
    for rows in order.chunks(hp.batch_size) {
        minibatch_step(net, state, hp, data, rows)?;
    }
    evaluate(net, data, SplitKind::Validation, epoch)
}

/// Step-at-a-time driver over the same procedure as [`train_epoch`], so
/// training can be interrupted at any minibatch boundary.
#[derive(Debug, Clone)]
pub struct Trainer {
    net: Mlp,
    momentum: MomentumState,
    hp: Hyperparams,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    epochs_done: u64,
    steps_done: u64,
}

impl Trainer {
    pub fn new(net: Mlp, hp: Hyperparams, mode: MomentumMode, shuffle_seed: u64) -> Self {
        let momentum = MomentumState::new(&net, mode);
        Trainer {
            net,
            momentum,
            hp,
            rng: ChaCha8Rng::seed_from_u64(shuffle_seed),
            order: Vec::new(),
            cursor: 0,
            epochs_done: 0,
            steps_done: 0,
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn momentum(&self) -> &MomentumState {
        &self.momentum
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn set_hyperparams(&mut self, hp: Hyperparams) -> Result<()> {
        hp.validate(None)?;
        self.hp = hp;
        Ok(())
    }

    pub fn epochs_done(&self) -> u64 {
        self.epochs_done
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    /// True when the next step starts a fresh epoch.
    pub fn at_epoch_start(&self) -> bool {
        self.order.is_empty()
    }

    /// Runs one minibatch step. Returns the validation metrics when the
    /// step completed an epoch.
    pub fn step(&mut self, data: &Dataset) -> Result<Option<EpochMetrics>> {
        let train_size = data.split_len(SplitKind::Train);
        if train_size == 0 {
            return Err(Error::invalid("training split is empty"));
        }
        self.hp.validate(Some(train_size))?;
        if self.order.is_empty() {
            self.order = shuffled_train_order(data, &mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.hp.batch_size).min(self.order.len());
        minibatch_step(
            &mut self.net,
            &mut self.momentum,
            &self.hp,
            data,
            &self.order[self.cursor..end],
        )?;
        self.cursor = end;
        self.steps_done += 1;
        if self.cursor < self.order.len() {
            return Ok(None);
        }
        self.order.clear();
        self.cursor = 0;
        self.epochs_done += 1;
        evaluate(&self.net, data, SplitKind::Validation, self.epochs_done).map(Some)
    }

    pub fn train_epoch(&mut self, data: &Dataset) -> Result<EpochMetrics> {
        loop {
            if let Some(m) = self.step(data)? {
                return Ok(m);
            }
        }
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<EpochMetrics> {
        evaluate(&self.net, data, SplitKind::Validation, self.epochs_done)
    }

    /// Grows or shrinks (from the end) a hidden layer, keeping the momentum
    /// buffer congruent.
    pub fn resize_hidden(&mut self, layer: HiddenLayer, new_count: usize, seed: u64) -> Result<()> {
        let current = self.net.layer_sizes()[layer.number() as usize];
        if new_count < current {
            for idx in (new_count..current).rev() {
                self.remove_hidden(layer, idx)?;
            }
            return Ok(());
        }
        self.net.resize_hidden_layer(layer, new_count, seed)?;
        self.momentum.grow_hidden(layer, new_count);
        Ok(())
    }

    pub fn remove_hidden(&mut self, layer: HiddenLayer, index: usize) -> Result<()> {
        self.net.remove_hidden_unit(layer, index)?;
        self.momentum.remove_hidden(layer, index);
        Ok(())
    }
}
