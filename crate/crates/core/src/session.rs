//! The steering state machine and the deterministic training loop.
//!
//! A [`Session`] owns the network, its optimiser state, the layout graph
//! and the sonifier. Commands are applied only at step boundaries; training
//! steps run only in [`SessionState::Running`]. Everything that leaves the
//! session is an immutable [`Event`].

use std::sync::mpsc::{Receiver, TryRecvError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{distance, LayerPair, LayoutGraph, LayoutParams, LayoutSnapshot, NodeKind, Vec3};
use crate::nn::{
    evaluate, Dataset, EpochMetrics, HiddenLayer, Hyperparams, LayerSizes, Mlp, MomentumMode,
    SplitKind, Trainer,
};
use crate::sonify::{SonificationMode, Sonifier};

pub mod trace;

pub use trace::TraceRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Running,
    Paused,
    EditingStructure,
    EditingWeights,
    TuningHyperparams,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Running => "running",
            SessionState::Paused => "paused",
            SessionState::EditingStructure => "editing_structure",
            SessionState::EditingWeights => "editing_weights",
            SessionState::TuningHyperparams => "tuning_hyperparams",
        }
    }
}

/// Serde adapter: hidden layers travel as the integers 1 and 2.
pub(crate) mod layer_number {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::nn::HiddenLayer;

    pub fn serialize<S: Serializer>(layer: &HiddenLayer, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(layer.number())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<HiddenLayer, D::Error> {
        let n = u8::deserialize(d)?;
        HiddenLayer::from_number(n).map_err(serde::de::Error::custom)
    }
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    Pause,
    Resume,
    SetHyperparams {
        learning_rate: f64,
        momentum: f64,
    },
    AddNeuron {
        #[serde(with = "layer_number")]
        layer: HiddenLayer,
        position: Vec3,
    },
    RemoveNeuron {
        #[serde(with = "layer_number")]
        layer: HiddenLayer,
        node_id: u32,
        position: Vec3,
    },
    DragNode {
        node_id: u32,
        position: Vec3,
    },
    ReleaseNode {
        node_id: u32,
    },
    SetSonification {
        mode: SonificationMode,
    },
    EvaluateNow,
    Shutdown,
}

/// Raw parameters, row-major, as shipped with every completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub w1_rows: usize,
    pub w1_cols: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2_rows: usize,
    pub w2_cols: usize,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3_rows: usize,
    pub w3_cols: usize,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl WeightSnapshot {
    pub fn of(net: &Mlp) -> Self {
        let flat = |layer: usize| net.weights(layer).iter().copied().collect::<Vec<f64>>();
        let bias = |layer: usize| net.biases(layer).to_vec();
        let dim = |layer: usize| net.weights(layer).dim();
        WeightSnapshot {
            w1_rows: dim(1).0,
            w1_cols: dim(1).1,
            w1: flat(1),
            b1: bias(1),
            w2_rows: dim(2).0,
            w2_cols: dim(2).1,
            w2: flat(2),
            b2: bias(2),
            w3_rows: dim(3).0,
            w3_cols: dim(3).1,
            w3: flat(3),
            b3: bias(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    StateChanged(SessionState),
    EpochCompleted {
        metrics: EpochMetrics,
        weights: Arc<WeightSnapshot>,
    },
    LayoutFrame(Arc<LayoutSnapshot>),
    HyperparamsChanged(Hyperparams),
    StructureChanged(LayerSizes),
    EvalResult(EpochMetrics),
    Audio {
        left_freq: f64,
        right_freq: f64,
    },
    Error {
        code: &'static str,
        text: String,
    },
}

impl Event {
    fn error(code: &'static str, text: impl Into<String>) -> Self {
        Event::Error {
            code,
            text: text.into(),
        }
    }

    fn from_error(err: &Error) -> Self {
        let code = match err {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric",
            Error::Format(_) => "format",
            Error::Protocol { code, .. } => *code,
            Error::Io(_) => "io",
        };
        Event::error(code, err.to_string())
    }
}

/// State reached by applying `cmd` in `state`, or the error code when the
/// pair is illegal.
pub fn transition(state: SessionState, cmd: &Command) -> Result<SessionState, &'static str> {
    use SessionState::*;
    match cmd {
        Command::Pause => match state {
            Running => Ok(Paused),
            _ => Err("not_running"),
        },
        Command::Resume => match state {
            Running => Err("already_running"),
            _ => Ok(Running),
        },
        Command::SetHyperparams { .. } => Ok(TuningHyperparams),
        Command::AddNeuron { .. } | Command::RemoveNeuron { .. } => match state {
            Running => Err("pause_first"),
            _ => Ok(EditingStructure),
        },
        Command::DragNode { .. } => match state {
            Running => Err("pause_first"),
            _ => Ok(EditingWeights),
        },
        Command::ReleaseNode { .. } => match state {
            EditingWeights => Ok(EditingWeights),
            _ => Err("not_dragging"),
        },
        Command::SetSonification { .. } | Command::EvaluateNow | Command::Shutdown => Ok(state),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub hidden: [usize; 2],
    pub hyperparams: Hyperparams,
    pub momentum_mode: MomentumMode,
    pub seed: u64,
    pub layout: LayoutParams,
    pub sonification: SonificationMode,
    /// Layout integration steps per training step.
    pub layout_ticks_per_step: u32,
    /// A layout frame is emitted every this many layout ticks.
    pub frame_every_ticks: u32,
    /// Current tones are re-sent every this many layout ticks.
    pub audio_every_ticks: u32,
    /// Neurons spawn / are deleted only within this distance of their
    /// layer's centre (layout units).
    pub edit_radius: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            hidden: [32, 16],
            hyperparams: Hyperparams::default(),
            momentum_mode: MomentumMode::Standard,
            seed: 1,
            layout: LayoutParams::default(),
            sonification: SonificationMode::AccuracyBoth,
            // 60 layout ticks per simulated second: 20 Hz frames, 10 Hz audio.
            layout_ticks_per_step: 1,
            frame_every_ticks: 3,
            audio_every_ticks: 6,
            edit_radius: 1.0,
        }
    }
}

/// Independent seeds derived from the session seed, so that e.g. layout
/// randomness never perturbs the training shuffle.
#[derive(Debug, Clone, Copy)]
pub enum SeedPurpose {
    Init,
    Shuffle,
    Layout,
    Edits,
}

pub fn derived_seed(seed: u64, purpose: SeedPurpose) -> u64 {
    match purpose {
        SeedPurpose::Init => seed,
        other => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(other as u64);
            rng.next_u64()
        }
    }
}

pub struct Session {
    config: SessionConfig,
    data: Arc<Dataset>,
    trainer: Trainer,
    layout: LayoutGraph,
    sonifier: Sonifier,
    state: SessionState,
    staged: Option<Hyperparams>,
    dragging: Option<u32>,
    edit_rng: ChaCha8Rng,
    ticks: u64,
    tones: (f64, f64),
    history: Vec<EpochMetrics>,
    trace: Vec<TraceRow>,
    shutdown: bool,
}

impl Session {
    pub fn new(data: Arc<Dataset>, config: SessionConfig) -> Result<Self> {
        config.hyperparams.validate(Some(data.split_len(SplitKind::Train)))?;
        config.layout.validate()?;
        if data.split_len(SplitKind::Train) == 0 || data.split_len(SplitKind::Validation) == 0 {
            return Err(Error::invalid("dataset needs non-empty train and validation splits"));
        }
        if config.frame_every_ticks == 0 || config.audio_every_ticks == 0 {
            return Err(Error::invalid("frame and audio cadences must be positive"));
        }
        let sizes = [data.input_dim(), config.hidden[0], config.hidden[1], data.num_classes()];
        let net = Mlp::init(sizes, derived_seed(config.seed, SeedPurpose::Init))?;
        let layout = LayoutGraph::build(&net, derived_seed(config.seed, SeedPurpose::Layout));
        let sonifier = Sonifier::new(data.num_classes(), config.sonification);
        let initial = evaluate(&net, &data, SplitKind::Validation, 0)?;
        let tones = sonifier.metric_tones(initial.val_accuracy, initial.val_loss)?;
        let trainer = Trainer::new(
            net,
            config.hyperparams,
            config.momentum_mode,
            derived_seed(config.seed, SeedPurpose::Shuffle),
        );
        Ok(Session {
            edit_rng: ChaCha8Rng::seed_from_u64(derived_seed(config.seed, SeedPurpose::Edits)),
            config,
            data,
            trainer,
            layout,
            sonifier,
            state: SessionState::Running,
            staged: None,
            dragging: None,
            ticks: 0,
            tones,
            history: vec![initial],
            trace: Vec::new(),
            shutdown: false,
        })
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn net(&self) -> &Mlp {
        self.trainer.net()
    }

    pub fn trainer(&self) -> &Trainer {
        &self.trainer
    }

    pub fn layout(&self) -> &LayoutGraph {
        &self.layout
    }

    pub fn sonifier(&self) -> &Sonifier {
        &self.sonifier
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Hyperparameters in effect for training (staged edits excluded).
    pub fn hyperparams(&self) -> Hyperparams {
        *self.trainer.hyperparams()
    }

    pub fn layer_sizes(&self) -> LayerSizes {
        self.net().layer_sizes()
    }

    pub fn steps_done(&self) -> u64 {
        self.trainer.steps_done()
    }

    pub fn epochs_done(&self) -> u64 {
        self.trainer.epochs_done()
    }

    /// Validation metrics, starting with the untrained network (epoch 0).
    pub fn history(&self) -> &[EpochMetrics] {
        &self.history
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn tones(&self) -> (f64, f64) {
        self.tones
    }

    pub fn is_shut_down(&self) -> bool {
        self.shutdown
    }

    pub fn evaluate(&self) -> Result<EpochMetrics> {
        self.trainer.evaluate(&self.data)
    }

    pub fn layout_snapshot(&self) -> LayoutSnapshot {
        self.layout.snapshot()
    }

    /// Applies one command at the current step boundary.
    pub fn handle(&mut self, cmd: Command) -> Vec<Event> {
        let next = match transition(self.state, &cmd) {
            Ok(next) => next,
            Err(code) => {
                return vec![Event::error(
                    code,
                    format!("{cmd:?} not accepted while {}", self.state.as_str()),
                )]
            }
        };
        let mut events = Vec::new();
        let outcome = match cmd {
            Command::Pause => Ok(()),
            Command::Resume => self.resume(&mut events),
            Command::SetHyperparams {
                learning_rate,
                momentum,
            } => self.stage_hyperparams(learning_rate, momentum, &mut events),
            Command::AddNeuron { layer, position } => self.add_neuron(layer, position, &mut events),
            Command::RemoveNeuron {
                layer,
                node_id,
                position,
            } => self.remove_neuron(layer, node_id, position, &mut events),
            Command::DragNode { node_id, position } => self.drag(node_id, position, &mut events),
            Command::ReleaseNode { node_id } => self.release(node_id, &mut events),
            Command::SetSonification { mode } => {
                self.sonifier.mode = mode;
                self.retune(&mut events)
            }
            Command::EvaluateNow => self.evaluate_now(&mut events),
            Command::Shutdown => {
                self.shutdown = true;
                Ok(())
            }
        };
        match outcome {
            Ok(()) => {
                if next != self.state {
                    self.state = next;
                    events.insert(0, Event::StateChanged(next));
                }
            }
            Err(e) => events.push(e),
        }
        events
    }

    fn resume(&mut self, events: &mut Vec<Event>) -> Result<(), Event> {
        if let Some(id) = self.dragging.take() {
            self.layout.release_node(id).map_err(|e| Event::from_error(&e))?;
        }
        if let Some(hp) = self.staged.take() {
            self.trainer
                .set_hyperparams(hp)
                .map_err(|e| Event::from_error(&e))?;
            events.push(Event::HyperparamsChanged(hp));
        }
        self.retune(events)
    }

    fn stage_hyperparams(
        &mut self,
        learning_rate: f64,
        momentum: f64,
        events: &mut Vec<Event>,
    ) -> Result<(), Event> {
        let current = self.staged.unwrap_or(*self.trainer.hyperparams());
        let hp = Hyperparams {
            learning_rate,
            momentum,
            ..current
        };
        hp.validate(None).map_err(|e| Event::from_error(&e))?;
        let lr_changed = (learning_rate != current.learning_rate).then_some(learning_rate);
        let mu_changed = (momentum != current.momentum).then_some(momentum);
        let base = self.metric_tones()?;
        let (left, right) = self
            .sonifier
            .tuning_tones(base, lr_changed, mu_changed)
            .map_err(|e| Event::from_error(&e))?;
        self.staged = Some(hp);
        self.tones = (left, right);
        events.push(Event::Audio {
            left_freq: left,
            right_freq: right,
        });
        Ok(())
    }

    fn check_near_center(&self, layer: HiddenLayer, position: Vec3, exclude: Option<u32>) -> Result<(), Event> {
        let members: Vec<Vec3> = self
            .layout
            .nodes()
            .iter()
            .filter(|n| n.kind == NodeKind::hidden(layer) && Some(n.id) != exclude)
            .map(|n| n.position)
            .collect();
        let center = if members.is_empty() {
            self.layout.layer_center(NodeKind::hidden(layer)).unwrap_or([0.0; 3])
        } else {
            let n = members.len() as f64;
            let mut c = [0.0; 3];
            for p in &members {
                for k in 0..3 {
                    c[k] += p[k] / n;
                }
            }
            c
        };
        let d = distance(center, position);
        if !(d <= self.config.edit_radius) {
            return Err(Event::error(
                "too_far",
                format!(
                    "position is {d:.3} from the layer {} centre (limit {})",
                    layer.number(),
                    self.config.edit_radius
                ),
            ));
        }
        Ok(())
    }

    fn add_neuron(&mut self, layer: HiddenLayer, position: Vec3, events: &mut Vec<Event>) -> Result<(), Event> {
        if self.dragging.is_some() {
            return Err(Event::error("drag_in_progress", "release the dragged node first"));
        }
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Event::error("numeric", "position is not finite"));
        }
        self.check_near_center(layer, position, None)?;
        let count = self.layer_sizes()[layer.number() as usize] + 1;
        let seed = self.edit_rng.next_u64();
        self.trainer
            .resize_hidden(layer, count, seed)
            .map_err(|e| Event::from_error(&e))?;
        self.layout.push_hidden_node(layer, position);
        self.structure_changed(events);
        Ok(())
    }

    fn remove_neuron(
        &mut self,
        layer: HiddenLayer,
        node_id: u32,
        position: Vec3,
        events: &mut Vec<Event>,
    ) -> Result<(), Event> {
        if self.dragging.is_some_and(|d| d != node_id) {
            return Err(Event::error("drag_in_progress", "release the dragged node first"));
        }
        let unit = match self.layout.hidden_position_of(node_id) {
            Some((l, unit)) if l == layer => unit,
            _ => {
                return Err(Event::error(
                    "unknown_node",
                    format!("node {node_id} is not in hidden layer {}", layer.number()),
                ))
            }
        };
        if self.layer_sizes()[layer.number() as usize] <= 1 {
            return Err(Event::error("last_neuron", "a hidden layer keeps at least one neuron"));
        }
        self.check_near_center(layer, position, Some(node_id))?;
        self.trainer
            .remove_hidden(layer, unit)
            .map_err(|e| Event::from_error(&e))?;
        self.layout
            .remove_hidden_node(layer, unit)
            .map_err(|e| Event::from_error(&e))?;
        self.dragging = None;
        self.structure_changed(events);
        Ok(())
    }

    fn structure_changed(&mut self, events: &mut Vec<Event>) {
        self.layout.sync_weights(self.trainer.net());
        events.push(Event::StructureChanged(self.layer_sizes()));
        events.push(Event::LayoutFrame(Arc::new(self.layout.snapshot())));
    }

    fn drag(&mut self, node_id: u32, position: Vec3, events: &mut Vec<Event>) -> Result<(), Event> {
        if self.dragging.is_some_and(|d| d != node_id) {
            return Err(Event::error("drag_in_progress", "another node is being dragged"));
        }
        if self.layout.node(node_id).is_none() {
            return Err(Event::error("unknown_node", format!("no node {node_id}")));
        }
        // Rescale the live weights, not the ones captured at the last frame.
        self.layout.sync_weights(self.trainer.net());
        let updates = self
            .layout
            .drag_node(node_id, position, &self.config.layout)
            .map_err(|e| Event::from_error(&e))?;
        for update in updates {
            let edge = &self.layout.edges()[update.edge];
            let factor = update.factor;
            match edge.pair {
                LayerPair::InputHidden1 => {
                    let (_, unit) = self.layout.hidden_position_of(edge.b).expect("h1 node");
                    self.trainer.net_mut().scale_input_coupling(unit, factor);
                }
                LayerPair::Hidden1Hidden2 => {
                    let (_, i) = self.layout.hidden_position_of(edge.a).expect("h1 node");
                    let (_, j) = self.layout.hidden_position_of(edge.b).expect("h2 node");
                    let id = crate::nn::EdgeId { layer: 2, row: j, col: i };
                    self.trainer
                        .net_mut()
                        .set_edge_weight(id, update.new_raw)
                        .map_err(|e| Event::from_error(&e))?;
                }
                LayerPair::Hidden2Output => {
                    let (_, unit) = self.layout.hidden_position_of(edge.a).expect("h2 node");
                    self.trainer.net_mut().scale_output_coupling(unit, factor);
                }
            }
        }
        self.layout.sync_weights(self.trainer.net());
        self.dragging = Some(node_id);
        events.push(Event::LayoutFrame(Arc::new(self.layout.snapshot())));
        Ok(())
    }

    fn release(&mut self, node_id: u32, events: &mut Vec<Event>) -> Result<(), Event> {
        if self.dragging != Some(node_id) {
            return Err(Event::error("not_dragging", format!("node {node_id} is not being dragged")));
        }
        self.layout.release_node(node_id).map_err(|e| Event::from_error(&e))?;
        self.dragging = None;
        self.evaluate_now(events)
    }

    fn evaluate_now(&mut self, events: &mut Vec<Event>) -> Result<(), Event> {
        let metrics = self.evaluate().map_err(|e| Event::from_error(&e))?;
        self.tones = self
            .sonifier
            .metric_tones(metrics.val_accuracy, metrics.val_loss)
            .map_err(|e| Event::from_error(&e))?;
        events.push(Event::EvalResult(metrics));
        events.push(self.audio_event());
        Ok(())
    }

    fn metric_tones(&self) -> Result<(f64, f64), Event> {
        let last = self.history.last().expect("initial evaluation");
        self.sonifier
            .metric_tones(last.val_accuracy, last.val_loss)
            .map_err(|e| Event::from_error(&e))
    }

    fn retune(&mut self, events: &mut Vec<Event>) -> Result<(), Event> {
        self.tones = self.metric_tones()?;
        events.push(self.audio_event());
        Ok(())
    }

    fn audio_event(&self) -> Event {
        Event::Audio {
            left_freq: self.tones.0,
            right_freq: self.tones.1,
        }
    }

    /// One training step (only while running) followed by the layout ticks
    /// that belong to it.
    pub fn tick(&mut self) -> Vec<Event> {
        let mut events = Vec::new();
        if self.state == SessionState::Running {
            match self.trainer.step(&self.data) {
                Ok(Some(metrics)) => {
                    let hp = self.trainer.hyperparams();
                    self.trace.push(TraceRow {
                        epoch: metrics.epoch,
                        val_accuracy: metrics.val_accuracy,
                        val_loss: metrics.val_loss,
                        learning_rate: hp.learning_rate,
                        momentum: hp.momentum,
                    });
                    self.history.push(metrics);
                    events.push(Event::EpochCompleted {
                        metrics,
                        weights: Arc::new(WeightSnapshot::of(self.trainer.net())),
                    });
                    if let Err(e) = self.retune(&mut events) {
                        events.push(e);
                    }
                }
                Ok(None) => {}
                Err(e) => {
                    events.push(Event::from_error(&e));
                    self.state = SessionState::Paused;
                    events.push(Event::StateChanged(SessionState::Paused));
                }
            }
        }
        for _ in 0..self.config.layout_ticks_per_step {
            self.layout.sync_weights(self.trainer.net());
            if let Err(e) = self.layout.step(&self.config.layout) {
                events.push(Event::from_error(&e));
            }
            self.ticks += 1;
            if self.ticks.is_multiple_of(self.config.frame_every_ticks as u64) {
                events.push(Event::LayoutFrame(Arc::new(self.layout.snapshot())));
            }
            if self.ticks.is_multiple_of(self.config.audio_every_ticks as u64) {
                events.push(self.audio_event());
            }
        }
        events
    }
}

/// A command scheduled before training step `at_step` (0-based count of
/// completed steps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCommand {
    pub at_step: u64,
    pub cmd: Command,
}

/// Parses a command script: one `{"at_step": n, "cmd": {...}}` per line.
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_script(text: &str) -> Result<Vec<ScriptedCommand>> {
    let mut script = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let entry: ScriptedCommand = serde_json::from_str(line)
            .map_err(|e| Error::invalid(format!("script line {}: {e}", i + 1)))?;
        script.push(entry);
    }
    script.sort_by_key(|c| c.at_step);
    Ok(script)
}

/// Drives `session` headlessly until it has completed `epochs` epochs.
///
/// Commands fire once their step index is reached. While the session is
/// not running no steps happen, so the next pending command fires
/// immediately. The run ends early on `shutdown`, or when the session is
/// paused with no commands left to resume it.
pub fn run_script(
    session: &mut Session,
    script: &[ScriptedCommand],
    epochs: u64,
    mut sink: impl FnMut(&Event),
) {
    let mut pending = script.iter().peekable();
    loop {
        while let Some(next) = pending.peek() {
            if next.at_step > session.steps_done() && session.state() == SessionState::Running {
                break;
            }
            for e in session.handle(next.cmd.clone()) {
                sink(&e);
            }
            pending.next();
            if session.is_shut_down() {
                return;
            }
        }
        if session.epochs_done() >= epochs {
            return;
        }
        if session.state() != SessionState::Running {
            if pending.peek().is_none() {
                return;
            }
            continue;
        }
        for e in session.tick() {
            sink(&e);
        }
    }
}

/// Pacing and budget for a live (served) session loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiveConfig {
    /// Layout tick rate in Hz; 0 runs training unthrottled. Idle (paused)
    /// sessions are always paced at 60 Hz.
    pub tick_hz: f64,
    /// Auto-pause once this many epochs are done. A later resume
    /// continues without a budget.
    pub epoch_budget: Option<u64>,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            tick_hz: 60.0,
            epoch_budget: None,
        }
    }
}

/// Owns `session` until a `Shutdown` arrives or every command sender is
/// dropped, applying queued commands between ticks. Returns the session.
///
/// The sink sees each event together with the session as it stands right
/// after the event was produced.
pub fn run_live(
    mut session: Session,
    commands: Receiver<Command>,
    config: LiveConfig,
    mut sink: impl FnMut(&Session, Event),
) -> Session {
    let idle_period = Duration::from_secs_f64(1.0 / 60.0);
    let period = (config.tick_hz > 0.0).then(|| Duration::from_secs_f64(1.0 / config.tick_hz));
    let mut budget = config.epoch_budget;
    loop {
        let started = Instant::now();
        loop {
            match commands.try_recv() {
                Ok(cmd) => {
                    let resumed = cmd == Command::Resume;
                    let events = session.handle(cmd);
                    if resumed && session.state() == SessionState::Running {
                        budget = None;
                    }
                    events.into_iter().for_each(|e| sink(&session, e));
                    if session.is_shut_down() {
                        return session;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return session,
            }
        }
        for event in session.tick() {
            sink(&session, event);
        }
        if budget.is_some_and(|b| session.epochs_done() >= b)
            && session.state() == SessionState::Running
        {
            for event in session.handle(Command::Pause) {
                sink(&session, event);
            }
            budget = None;
        }
        let wait = match (session.state(), period) {
            (SessionState::Running, None) => None,
            (SessionState::Running, Some(p)) => Some(p),
            (_, p) => Some(p.unwrap_or(idle_period).max(idle_period)),
        };
        if let Some(wait) = wait {
            let spent = started.elapsed();
            if spent < wait {
                std::thread::sleep(wait - spent);
            }
        }
    }
}
