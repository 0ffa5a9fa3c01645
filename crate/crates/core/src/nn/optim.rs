use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::mlp::{HiddenLayer, Mlp, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 64,
        }
    }
}

impl Hyperparams {
    /// Checks the value ranges; `train_size` bounds the batch size when known.
    pub fn validate(&self, train_size: Option<usize>) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 || train_size.is_some_and(|n| self.batch_size > n) {
            return Err(Error::invalid(format!(
                "batch size {} outside [1, {}]",
                self.batch_size,
                train_size.map_or("∞".to_string(), |n| n.to_string())
            )));
        }
        Ok(())
    }
}

/// How the momentum term is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MomentumMode {
    /// `v ← μ·v − ε·g; W ← W + v` (the buffer holds the last update).
    #[default]
    Standard,
    /// `W ← W + μ·g_prev − ε·g` (the buffer holds the last raw gradient).
    PreviousGradient,
}

/// The optimiser's per-parameter memory.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub mode: MomentumMode,
    pub buffer: Params,
}

impl MomentumState {
    pub fn new(net: &Mlp, mode: MomentumMode) -> Self {
        MomentumState {
            mode,
            buffer: Params::zeros(net.layer_sizes()),
        }
    }

    /// Mirrors a structural edit on the network: new slots start at zero.
    pub(crate) fn grow_hidden(&mut self, layer: HiddenLayer, new_count: usize) {
        let sizes = self.buffer.layer_sizes();
        let k = layer.number() as usize;
        for _ in sizes[k]..new_count {
            let sizes = self.buffer.layer_sizes();
            let incoming = ndarray::Array1::zeros(sizes[k - 1]);
            let outgoing = ndarray::Array1::zeros(sizes[k + 1]);
            self.buffer.push_hidden_unit(layer, &incoming, &outgoing, 0.0);
        }
    }

    pub(crate) fn remove_hidden(&mut self, layer: HiddenLayer, index: usize) {
        self.buffer.remove_hidden_unit(layer, index);
    }
}

/// One SGD-with-momentum update. Refuses (and leaves everything untouched)
/// if any gradient entry is non-finite.
pub fn sgd_momentum_step(
    net: &mut Mlp,
    grads: &Params,
    state: &mut MomentumState,
    hp: &Hyperparams,
) -> Result<()> {
    if !grads.congruent(net.params()) || !state.buffer.congruent(net.params()) {
        return Err(Error::shape("gradient or momentum buffer not congruent with network"));
    }
    if !grads.is_finite() {
        return Err(Error::numeric("non-finite gradient; step refused"));
    }
    let mu = hp.momentum;
    let lr = hp.learning_rate;
    let params = net.params_mut();
    let buffer = &mut state.buffer;
    match state.mode {
        MomentumMode::Standard => {
            for k in 0..3 {
                Zip::from(&mut params.weights[k])
                    .and(&mut buffer.weights[k])
                    .and(&grads.weights[k])
                    .for_each(|w, v, &g| {
                        *v = mu * *v - lr * g;
                        *w += *v;
                    });
                Zip::from(&mut params.biases[k])
                    .and(&mut buffer.biases[k])
                    .and(&grads.biases[k])
                    .for_each(|b, v, &g| {
                        *v = mu * *v - lr * g;
                        *b += *v;
                    });
            }
        }
        MomentumMode::PreviousGradient => {
            for k in 0..3 {
                Zip::from(&mut params.weights[k])
                    .and(&mut buffer.weights[k])
                    .and(&grads.weights[k])
                    .for_each(|w, prev, &g| {
                        *w += mu * *prev - lr * g;
                        *prev = g;
                    });
                Zip::from(&mut params.biases[k])
                    .and(&mut buffer.biases[k])
                    .and(&grads.biases[k])
                    .for_each(|b, prev, &g| {
                        *b += mu * *prev - lr * g;
                        *prev = g;
                    });
            }
        }
    }
    Ok(())
}
