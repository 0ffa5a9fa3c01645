//! Python bindings for the aiive training engine.
//!
//! Networks, datasets, layouts and sessions are exposed as classes.
//! Commands go in and events come out as plain dicts using the same
//! field names as the wire protocol, so a Python front-end can drive a
//! session in-process exactly as a remote client would.
//!
//! ```python
//! import aiive
//! data = aiive.Dataset.synthetic(seed=1, counts=(400, 100, 50), side=12)
//! s = aiive.Session(data, hidden=(16, 8), seed=3)
//! s.run(epochs=5)
//! s.handle({"type": "pause"})
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::Serialize;

use aiive_core::layout::{self as core_layout, LayoutParams};
use aiive_core::nn::{self, HiddenLayer, Hyperparams, MomentumMode, SyntheticSpec};
use aiive_core::protocol::ServerMessage;
use aiive_core::session::trace::write_trace;
use aiive_core::session::{self as core_session, Command, Event, ScriptedCommand, SessionConfig};
use aiive_core::sonify::{self, FrequencyMapping, SignalSource, SonificationMode};

fn to_py_err(err: aiive_core::Error) -> PyErr {
    match err {
        aiive_core::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrRaise<T> {
    fn or_raise(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for aiive_core::Result<T> {
    fn or_raise(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

/// Converts any serialisable value to the equivalent Python object via JSON.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Accepts either a JSON string or a JSON-compatible Python object.
fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn event_to_py(py: Python<'_>, event: &Event) -> PyResult<Py<PyAny>> {
    to_py(py, &ServerMessage::from(event))
}

fn parse_hidden_layer(layer: u8) -> PyResult<HiddenLayer> {
    HiddenLayer::from_number(layer).or_raise()
}

fn parse_mode(mode: &str) -> PyResult<SonificationMode> {
    SonificationMode::parse(mode).or_raise()
}

fn rows_to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn array_to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Images with labels, split into train, validation and test ranges.
#[pyclass(frozen, skip_from_py_object, module = "aiive")]
#[derive(Clone)]
struct Dataset {
    inner: Arc<nn::Dataset>,
}

#[pymethods]
impl Dataset {
    /// Class-template images with per-pixel noise, reproducible from `seed`.
    #[staticmethod]
    #[pyo3(signature = (seed=1, counts=None, side=None, classes=None))]
    fn synthetic(
        seed: u64,
        counts: Option<[usize; 3]>,
        side: Option<usize>,
        classes: Option<usize>,
    ) -> PyResult<Self> {
        let defaults = SyntheticSpec::default();
        let spec = SyntheticSpec {
            seed,
            counts: counts.unwrap_or(defaults.counts),
            side: side.unwrap_or(defaults.side),
            classes: classes.unwrap_or(defaults.classes),
            ..defaults
        };
        Ok(Dataset {
            inner: Arc::new(spec.generate().or_raise()?),
        })
    }

    /// Reads `base.meta` and `base.bin`.
    #[staticmethod]
    fn load(base: PathBuf) -> PyResult<Self> {
        Ok(Dataset {
            inner: Arc::new(nn::Dataset::load(&base).or_raise()?),
        })
    }

    fn save(&self, base: PathBuf) -> PyResult<()> {
        self.inner.save(&base).or_raise()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn counts(&self) -> [usize; 3] {
        self.inner.counts()
    }

    fn labels(&self) -> Vec<u8> {
        self.inner.labels().to_vec()
    }

    /// Pixel values of image `index` in row-major order.
    fn image(&self, index: usize) -> PyResult<Vec<f32>> {
        if index >= self.inner.len() {
            return Err(PyValueError::new_err(format!(
                "image {index} out of range for {} images",
                self.inner.len()
            )));
        }
        Ok(self.inner.images().row(index).to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(images={}, input_dim={}, classes={}, counts={:?})",
            self.inner.len(),
            self.inner.input_dim(),
            self.inner.num_classes(),
            self.inner.counts()
        )
    }
}

/// Two-hidden-layer ReLU network with a softmax output.
#[pyclass(module = "aiive")]
struct Mlp {
    inner: nn::Mlp,
}

#[pymethods]
impl Mlp {
    #[new]
    #[pyo3(signature = (layer_sizes, seed=1))]
    fn new(layer_sizes: [usize; 4], seed: u64) -> PyResult<Self> {
        Ok(Mlp {
            inner: nn::Mlp::init(layer_sizes, seed).or_raise()?,
        })
    }

    #[getter]
    fn layer_sizes(&self) -> [usize; 4] {
        self.inner.layer_sizes()
    }

    /// Class probabilities for each input row.
    fn forward(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = rows_to_array(x)?;
        let cache = self.inner.forward(x.view()).or_raise()?;
        Ok(array_to_rows(&cache.y))
    }

    /// Mean cross-entropy of the predictions for `x` against `labels`.
    fn loss(&self, x: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        let x = rows_to_array(x)?;
        let classes = self.inner.layer_sizes()[3];
        if labels.len() != x.nrows() || labels.iter().any(|&l| l >= classes) {
            return Err(PyValueError::new_err("labels must match the rows and lie below the class count"));
        }
        let cache = self.inner.forward(x.view()).or_raise()?;
        Ok(nn::cross_entropy(cache.y.view(), nn::one_hot(&labels, classes).view()))
    }

    /// Weight matrix `layer` (1, 2 or 3) as rows of output units.
    fn weights(&self, layer: usize) -> PyResult<Vec<Vec<f64>>> {
        check_layer(layer)?;
        Ok(array_to_rows(self.inner.weights(layer)))
    }

    fn biases(&self, layer: usize) -> PyResult<Vec<f64>> {
        check_layer(layer)?;
        Ok(self.inner.biases(layer).to_vec())
    }

    fn set_weight(&mut self, layer: u8, row: usize, col: usize, value: f64) -> PyResult<()> {
        self.inner
            .set_edge_weight(nn::EdgeId { layer, row, col }, value)
            .or_raise()
    }

    /// Grows or shrinks hidden layer 1 or 2 to `count` units.
    #[pyo3(signature = (layer, count, seed=0))]
    fn resize_hidden(&mut self, layer: u8, count: usize, seed: u64) -> PyResult<()> {
        self.inner
            .resize_hidden_layer(parse_hidden_layer(layer)?, count, seed)
            .or_raise()
    }

    fn remove_hidden_unit(&mut self, layer: u8, index: usize) -> PyResult<()> {
        self.inner
            .remove_hidden_unit(parse_hidden_layer(layer)?, index)
            .or_raise()
    }

    fn __repr__(&self) -> String {
        format!("Mlp(layer_sizes={:?})", self.inner.layer_sizes())
    }
}

fn check_layer(layer: usize) -> PyResult<()> {
    if (1..=3).contains(&layer) {
        Ok(())
    } else {
        Err(PyValueError::new_err(format!("layer must be 1, 2 or 3, got {layer}")))
    }
}

/// Force-directed 3D layout mirroring a network.
#[pyclass(module = "aiive")]
struct LayoutGraph {
    inner: core_layout::LayoutGraph,
    params: LayoutParams,
}

#[pymethods]
impl LayoutGraph {
    #[new]
    #[pyo3(signature = (mlp, seed=1, k_a=None, k_r=None, dt=None, damping=None))]
    fn new(
        mlp: &Mlp,
        seed: u64,
        k_a: Option<f64>,
        k_r: Option<f64>,
        dt: Option<f64>,
        damping: Option<f64>,
    ) -> PyResult<Self> {
        let d = LayoutParams::default();
        let params = LayoutParams {
            k_a: k_a.unwrap_or(d.k_a),
            k_r: k_r.unwrap_or(d.k_r),
            dt: dt.unwrap_or(d.dt),
            damping: damping.unwrap_or(d.damping),
            ..d
        };
        params.validate().or_raise()?;
        let mut inner = core_layout::LayoutGraph::build(&mlp.inner, seed);
        inner.sync_weights(&mlp.inner);
        Ok(LayoutGraph { inner, params })
    }

    /// Copies the network's current weights onto the edges.
    fn sync_weights(&mut self, mlp: &Mlp) {
        self.inner.sync_weights(&mlp.inner);
    }

    /// Advances the simulation by `count` integration steps.
    #[pyo3(signature = (count=1))]
    fn step(&mut self, count: usize) -> PyResult<()> {
        for _ in 0..count {
            self.inner.step(&self.params).or_raise()?;
        }
        Ok(())
    }

    /// Net force on every node, in node order.
    fn net_forces(&self) -> PyResult<Vec<[f64; 3]>> {
        self.inner.net_forces(&self.params).or_raise()
    }

    /// Moves and pins a node. Returns `(edge, old_raw, new_raw)` for every
    /// rescaled incident edge.
    fn drag_node(&mut self, node_id: u32, position: [f64; 3]) -> PyResult<Vec<(usize, f64, f64)>> {
        let updates = self.inner.drag_node(node_id, position, &self.params).or_raise()?;
        Ok(updates.iter().map(|u| (u.edge, u.old_raw, u.new_raw)).collect())
    }

    fn release_node(&mut self, node_id: u32) -> PyResult<()> {
        self.inner.release_node(node_id).or_raise()
    }

    fn positions(&self) -> Vec<[f64; 3]> {
        self.inner.nodes().iter().map(|n| n.position).collect()
    }

    /// Raw and normalised weight of every edge, in edge order.
    fn edge_weights(&self) -> Vec<(f64, f64)> {
        self.inner
            .edges()
            .iter()
            .map(|e| (e.raw_weight, e.norm_weight))
            .collect()
    }

    fn total_momentum(&self) -> [f64; 3] {
        self.inner.total_momentum()
    }

    /// `{"nodes": [...], "edges": [...]}` as sent to clients.
    fn snapshot(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.snapshot())
    }

    fn __repr__(&self) -> String {
        format!(
            "LayoutGraph(nodes={}, edges={})",
            self.inner.nodes().len(),
            self.inner.edges().len()
        )
    }
}

/// A training session: network, trainer, layout and sonifier behind the
/// pause / edit / resume state machine.
#[pyclass(module = "aiive")]
struct Session {
    inner: core_session::Session,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (
        dataset,
        hidden=(32, 16),
        learning_rate=0.1,
        momentum=0.9,
        batch_size=64,
        seed=1,
        paper_literal_momentum=false,
        sonification="accuracy",
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dataset: &Dataset,
        hidden: (usize, usize),
        learning_rate: f64,
        momentum: f64,
        batch_size: usize,
        seed: u64,
        paper_literal_momentum: bool,
        sonification: &str,
    ) -> PyResult<Self> {
        let config = SessionConfig {
            hidden: [hidden.0, hidden.1],
            hyperparams: Hyperparams {
                learning_rate,
                momentum,
                batch_size,
            },
            momentum_mode: if paper_literal_momentum {
                MomentumMode::PreviousGradient
            } else {
                MomentumMode::Standard
            },
            seed,
            sonification: parse_mode(sonification)?,
            ..SessionConfig::default()
        };
        Ok(Session {
            inner: core_session::Session::new(dataset.inner.clone(), config).or_raise()?,
        })
    }

    /// Applies one command (a dict or JSON string such as
    /// `{"type": "set_hyperparams", "learning_rate": 0.05, "momentum": 0.8}`)
    /// and returns the resulting events.
    fn handle(&mut self, py: Python<'_>, command: &Bound<'_, PyAny>) -> PyResult<Vec<Py<PyAny>>> {
        let cmd: Command = from_py(command)?;
        self.inner
            .handle(cmd)
            .iter()
            .map(|e| event_to_py(py, e))
            .collect()
    }

    /// One layout tick, plus a training step when one is due.
    fn tick(&mut self, py: Python<'_>) -> PyResult<Vec<Py<PyAny>>> {
        self.inner.tick().iter().map(|e| event_to_py(py, e)).collect()
    }

    /// Trains until `epochs` epochs are done, firing scripted commands
    /// (`[{"at_step": n, "cmd": {...}}, ...]`) on the way. Returns the
    /// completed-epoch and error events; layout and audio frames are skipped.
    #[pyo3(signature = (epochs, script=None))]
    fn run(
        &mut self,
        py: Python<'_>,
        epochs: u64,
        script: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Vec<Py<PyAny>>> {
        let mut script: Vec<ScriptedCommand> = match script {
            Some(obj) => from_py(obj)?,
            None => Vec::new(),
        };
        script.sort_by_key(|c| c.at_step);
        let mut kept = Vec::new();
        core_session::run_script(&mut self.inner, &script, epochs, |e| {
            if !matches!(e, Event::LayoutFrame(_) | Event::Audio { .. }) {
                kept.push(e.clone());
            }
        });
        kept.iter().map(|e| event_to_py(py, e)).collect()
    }

    #[getter]
    fn state(&self) -> &'static str {
        self.inner.state().as_str()
    }

    #[getter]
    fn epochs_done(&self) -> u64 {
        self.inner.epochs_done()
    }

    #[getter]
    fn steps_done(&self) -> u64 {
        self.inner.steps_done()
    }

    #[getter]
    fn layer_sizes(&self) -> [usize; 4] {
        self.inner.layer_sizes()
    }

    #[getter]
    fn hyperparams(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.hyperparams())
    }

    /// Current `(left, right)` oscillator frequencies in Hz.
    #[getter]
    fn tones(&self) -> (f64, f64) {
        self.inner.tones()
    }

    /// Validation metrics after every epoch, starting with epoch 0.
    fn history(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.history())
    }

    /// Per-epoch trace rows with the hyperparameters in effect.
    fn trace(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.trace())
    }

    fn write_trace(&self, path: PathBuf) -> PyResult<()> {
        write_trace(&path, self.inner.trace()).or_raise()
    }

    fn evaluate(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.evaluate().or_raise()?)
    }

    fn layout_snapshot(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.layout_snapshot())
    }

    /// Copy of the current network.
    fn mlp(&self) -> Mlp {
        Mlp {
            inner: self.inner.net().clone(),
        }
    }

    /// Writes the per-epoch metric tones to a stereo 16-bit WAV.
    #[pyo3(signature = (path, seconds_per_epoch=1.0, sample_rate=sonify::WAV_SAMPLE_RATE))]
    fn write_wav(&self, path: PathBuf, seconds_per_epoch: f64, sample_rate: u32) -> PyResult<()> {
        let history = self.inner.history();
        let (left, right) = self
            .inner
            .sonifier()
            .metrics_timeline(history, seconds_per_epoch)
            .or_raise()?;
        let duration = history.len() as f64 * seconds_per_epoch;
        let frame = sonify::render(&left, &right, sample_rate, duration).or_raise()?;
        sonify::write_wav(&path, &frame).or_raise()
    }

    fn __repr__(&self) -> String {
        format!(
            "Session(state={}, layer_sizes={:?}, epochs_done={})",
            self.inner.state().as_str(),
            self.inner.layer_sizes(),
            self.inner.epochs_done()
        )
    }
}

/// Pitch in Hz for `value` of one signal: `"accuracy"`, `"loss"`,
/// `"learning_rate"` or `"momentum"`.
#[pyfunction]
#[pyo3(signature = (source, value, classes=7))]
fn map_to_freq(source: &str, value: f64, classes: usize) -> PyResult<f64> {
    let source: SignalSource = serde_json::from_value(serde_json::Value::from(source))
        .map_err(|_| PyValueError::new_err(format!("unknown signal `{source}`")))?;
    let mapping = match source {
        SignalSource::Accuracy => FrequencyMapping::accuracy(),
        SignalSource::Loss => FrequencyMapping::loss(classes),
        SignalSource::LearningRate => FrequencyMapping::learning_rate(),
        SignalSource::Momentum => FrequencyMapping::momentum(),
    };
    mapping.map_to_freq(value).or_raise()
}

/// `(left, right)` frequencies for a sonification mode.
#[pyfunction]
fn route(mode: &str, freq_accuracy: f64, freq_loss: f64) -> PyResult<(f64, f64)> {
    Ok(sonify::route(parse_mode(mode)?, freq_accuracy, freq_loss))
}

/// Renders `(start_seconds, freq)` tone timelines for each channel to a
/// stereo WAV of `duration` seconds.
#[pyfunction]
#[pyo3(signature = (path, left, right, duration, sample_rate=sonify::WAV_SAMPLE_RATE))]
fn render_wav(
    path: PathBuf,
    left: Vec<(f64, f64)>,
    right: Vec<(f64, f64)>,
    duration: f64,
    sample_rate: u32,
) -> PyResult<usize> {
    let segments = |v: Vec<(f64, f64)>| -> Vec<sonify::ToneSegment> {
        v.into_iter()
            .map(|(start, freq)| sonify::ToneSegment { start, freq })
            .collect()
    };
    let frame = sonify::render(&segments(left), &segments(right), sample_rate, duration).or_raise()?;
    sonify::write_wav(&path, &frame).or_raise()?;
    Ok(frame.len())
}

/// Raw weight after dragging an endpoint from distance `d_old` to `d_new`.
#[pyfunction]
#[pyo3(signature = (raw_weight, d_old, d_new, epsilon_dist=1e-3))]
fn weight_from_drag(raw_weight: f64, d_old: f64, d_new: f64, epsilon_dist: f64) -> f64 {
    core_layout::weight_from_drag(raw_weight, d_old, d_new, epsilon_dist)
}

#[pymodule]
pub fn aiive(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("PROTOCOL_VERSION", aiive_core::protocol::PROTOCOL_VERSION)?;
    m.add_class::<Dataset>()?;
    m.add_class::<Mlp>()?;
    m.add_class::<LayoutGraph>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(map_to_freq, m)?)?;
    m.add_function(wrap_pyfunction!(route, m)?)?;
    m.add_function(wrap_pyfunction!(render_wav, m)?)?;
    m.add_function(wrap_pyfunction!(weight_from_drag, m)?)?;
    Ok(())
}
