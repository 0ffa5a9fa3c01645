use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::softmax_rows;
use crate::error::{Error, Result};

/// `[input_dim, h1, h2, output_dim]`.
pub type LayerSizes = [usize; 4];

/// One of the two editable hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HiddenLayer {
    First,
    Second,
}

impl HiddenLayer {
    /// 1-based layer number as used on the wire.
    pub fn number(self) -> u8 {
        match self {
            HiddenLayer::First => 1,
            HiddenLayer::Second => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(HiddenLayer::First),
            2 => Ok(HiddenLayer::Second),
            _ => Err(Error::invalid(format!("hidden layer must be 1 or 2, got {n}"))),
        }
    }

    fn index(self) -> usize {
        self.number() as usize - 1
    }
}

/// Addresses a single entry of one of the three weight matrices.
/// `layer` is 1-based (`W1`, `W2`, `W3`); `row` is the output unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeId {
    pub layer: u8,
    pub row: usize,
    pub col: usize,
}

/// Weight matrices and bias vectors in network layout.
///
/// Used both for the network itself and for anything congruent to it
/// (gradients, momentum buffers).
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weights: [Array2<f64>; 3],
    pub biases: [Array1<f64>; 3],
}

impl Params {
    pub fn zeros(sizes: LayerSizes) -> Self {
        Params {
            weights: [
                Array2::zeros((sizes[1], sizes[0])),
                Array2::zeros((sizes[2], sizes[1])),
                Array2::zeros((sizes[3], sizes[2])),
            ],
            biases: [
                Array1::zeros(sizes[1]),
                Array1::zeros(sizes[2]),
                Array1::zeros(sizes[3]),
            ],
        }
    }

    pub fn layer_sizes(&self) -> LayerSizes {
        [
            self.weights[0].ncols(),
            self.weights[0].nrows(),
            self.weights[1].nrows(),
            self.weights[2].nrows(),
        ]
    }

    /// True when every matrix and vector has the shape implied by
    /// [`Params::layer_sizes`].
    pub fn is_consistent(&self) -> bool {
        let s = self.layer_sizes();
        self.weights[1].ncols() == s[1]
            && self.weights[2].ncols() == s[2]
            && self.biases[0].len() == s[1]
            && self.biases[1].len() == s[2]
            && self.biases[2].len() == s[3]
    }

    pub fn congruent(&self, other: &Params) -> bool {
        self.weights
            .iter()
            .zip(&other.weights)
            .all(|(a, b)| a.dim() == b.dim())
            && self
                .biases
                .iter()
                .zip(&other.biases)
                .all(|(a, b)| a.len() == b.len())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Appends hidden unit to `layer`: a new incoming row, bias entry and
    /// outgoing column.
    pub(crate) fn push_hidden_unit(
        &mut self,
        layer: HiddenLayer,
        incoming: &Array1<f64>,
        outgoing: &Array1<f64>,
        bias: f64,
    ) {
        let k = layer.index();
        self.weights[k]
            .push_row(incoming.view())
            .expect("incoming row matches fan-in");
        self.weights[k + 1]
            .push_column(outgoing.view())
            .expect("outgoing column matches fan-out");
        let mut b = self.biases[k].to_vec();
        b.push(bias);
        self.biases[k] = Array1::from(b);
    }

    pub(crate) fn remove_hidden_unit(&mut self, layer: HiddenLayer, index: usize) {
        let k = layer.index();
        self.weights[k].remove_index(Axis(0), index);
        self.weights[k + 1].remove_index(Axis(1), index);
        self.biases[k].remove_index(Axis(0), index);
    }
}

/// Cached intermediate values of a forward pass, rows = batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub z1: Array2<f64>,
    pub h1: Array2<f64>,
    pub z2: Array2<f64>,
    pub h2: Array2<f64>,
    pub z3: Array2<f64>,
    pub y: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    params: Params,
}

fn uniform_fill(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite positive bound");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

impl Mlp {
    /// Zero biases, weights i.i.d. uniform in `±1/sqrt(fan_in)`.
    pub fn init(sizes: LayerSizes, seed: u64) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes must all be >= 1, got {sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(sizes);
        for k in 0..3 {
            params.weights[k] = uniform_fill(&mut rng, sizes[k + 1], sizes[k], sizes[k]);
        }
        Ok(Mlp { params })
    }

    pub fn from_params(params: Params) -> Result<Self> {
        if !params.is_consistent() {
            return Err(Error::shape("parameter arrays disagree on layer sizes"));
        }
        if params.layer_sizes().contains(&0) {
            return Err(Error::invalid("empty layer"));
        }
        Ok(Mlp { params })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn layer_sizes(&self) -> LayerSizes {
        self.params.layer_sizes()
    }

    pub fn weights(&self, layer: usize) -> &Array2<f64> {
        &self.params.weights[layer - 1]
    }

    pub fn biases(&self, layer: usize) -> &Array1<f64> {
        &self.params.biases[layer - 1]
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        let input_dim = self.params.weights[0].ncols();
        if x.ncols() != input_dim {
            return Err(Error::shape(format!(
                "input has {} columns, network expects {input_dim}",
                x.ncols()
            )));
        }
        let [w1, w2, w3] = &self.params.weights;
        let [b1, b2, b3] = &self.params.biases;
        let z1 = x.dot(&w1.t()) + b1;
        let h1 = relu(&z1);
        let z2 = h1.dot(&w2.t()) + b2;
        let h2 = relu(&z2);
        let z3 = h2.dot(&w3.t()) + b3;
        let y = softmax_rows(z3.view());
        Ok(ForwardCache {
            z1,
            h1,
            z2,
            h2,
            z3,
            y,
        })
    }

    /// Gradients of the batch-mean cross-entropy. Softmax and loss are
    /// fused, so the output delta is `(y - t) / batch`.
    pub fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        cache: &ForwardCache,
        targets: ArrayView2<'_, f64>,
    ) -> Result<Params> {
        let batch = x.nrows();
        if cache.y.dim() != targets.dim() || cache.z1.nrows() != batch {
            return Err(Error::shape(format!(
                "targets {:?} / cache {:?} do not match batch of {batch}",
                targets.dim(),
                cache.y.dim()
            )));
        }
        let [_, w2, w3] = &self.params.weights;
        let scale = 1.0 / batch as f64;

        let d3 = (&cache.y - &targets) * scale;
        let gw3 = d3.t().dot(&cache.h2);
        let gb3 = d3.sum_axis(Axis(0));

        let mut d2 = d3.dot(w3);
        Zip::from(&mut d2).and(&cache.z2).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        let gw2 = d2.t().dot(&cache.h1);
        let gb2 = d2.sum_axis(Axis(0));

        let mut d1 = d2.dot(w2);
        Zip::from(&mut d1).and(&cache.z1).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        let gw1 = d1.t().dot(&x);
        let gb1 = d1.sum_axis(Axis(0));

        Ok(Params {
            weights: [gw1, gw2, gw3],
            biases: [gb1, gb2, gb3],
        })
    }

    /// Grows `layer` to `new_count` units by appending freshly initialised
    /// units, or shrinks it by removing units from the end.
    pub fn resize_hidden_layer(
        &mut self,
        layer: HiddenLayer,
        new_count: usize,
        seed: u64,
    ) -> Result<()> {
        if new_count == 0 {
            return Err(Error::invalid("hidden layer needs at least one unit"));
        }
        let sizes = self.layer_sizes();
        let k = layer.index();
        let current = sizes[k + 1];
        if new_count < current {
            for idx in (new_count..current).rev() {
                self.params.remove_hidden_unit(layer, idx);
            }
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for count in current + 1..=new_count {
            let incoming = uniform_fill(&mut rng, 1, sizes[k], sizes[k]).remove_axis(Axis(0));
            let outgoing =
                uniform_fill(&mut rng, sizes[k + 2], 1, count).remove_axis(Axis(1));
            self.params.push_hidden_unit(layer, &incoming, &outgoing, 0.0);
        }
        Ok(())
    }

    /// Removes unit `index` of `layer` together with its incoming row, bias
    /// and outgoing column.
    pub fn remove_hidden_unit(&mut self, layer: HiddenLayer, index: usize) -> Result<()> {
        let count = self.layer_sizes()[layer.index() + 1];
        if count <= 1 {
            return Err(Error::invalid("cannot remove the last unit of a hidden layer"));
        }
        if index >= count {
            return Err(Error::invalid(format!(
                "unit {index} out of range for hidden layer of {count}"
            )));
        }
        self.params.remove_hidden_unit(layer, index);
        Ok(())
    }

    pub fn edge_weight(&self, id: EdgeId) -> Result<f64> {
        self.check_edge(id)?;
        Ok(self.params.weights[id.layer as usize - 1][[id.row, id.col]])
    }

    pub fn set_edge_weight(&mut self, id: EdgeId, value: f64) -> Result<()> {
        self.check_edge(id)?;
        if !value.is_finite() {
            return Err(Error::numeric(format!("edge weight {value} is not finite")));
        }
        self.params.weights[id.layer as usize - 1][[id.row, id.col]] = value;
        Ok(())
    }

    fn check_edge(&self, id: EdgeId) -> Result<()> {
        if !(1..=3).contains(&id.layer) {
            return Err(Error::invalid(format!("no weight layer {}", id.layer)));
        }
        let (rows, cols) = self.params.weights[id.layer as usize - 1].dim();
        if id.row >= rows || id.col >= cols {
            return Err(Error::invalid(format!(
                "edge ({}, {}) outside W{} of shape {rows}x{cols}",
                id.row, id.col, id.layer
            )));
        }
        Ok(())
    }

    /// Euclidean norm of the incoming `W1` row of first-layer unit `unit`.
    pub fn input_coupling(&self, unit: usize) -> f64 {
        self.params.weights[0].row(unit).dot(&self.params.weights[0].row(unit)).sqrt()
    }

    /// Euclidean norm of the outgoing `W3` column of second-layer unit `unit`.
    pub fn output_coupling(&self, unit: usize) -> f64 {
        let col = self.params.weights[2].column(unit);
        col.dot(&col).sqrt()
    }

    pub(crate) fn scale_input_coupling(&mut self, unit: usize, factor: f64) {
        self.params.weights[0].row_mut(unit).mapv_inplace(|w| w * factor);
    }

    pub(crate) fn scale_output_coupling(&mut self, unit: usize, factor: f64) {
        self.params.weights[2]
            .column_mut(unit)
            .mapv_inplace(|w| w * factor);
    }
}
