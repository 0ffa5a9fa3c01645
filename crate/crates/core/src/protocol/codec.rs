//! Message schema and framing.
//!
//! Every message is a JSON object whose `type` field names the message and
//! whose remaining fields are its payload. An optional `seq` field carries
//! the per-direction sequence number. On a raw stream each body is preceded
//! by its length as a 4-byte big-endian integer; WebSocket transports carry
//! the same bodies as text frames.

use std::io::{self, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::layout::{LayoutSnapshot, Vec3};
use crate::nn::{EpochMetrics, HiddenLayer, Hyperparams, LayerSizes};
use crate::session::{layer_number, Command, Event, SessionState, WeightSnapshot};
use crate::sonify::{FrequencyMapping, SonificationMode, Sonifier};

pub const PROTOCOL_VERSION: u32 = 1;

/// Largest accepted inbound body, in bytes.
pub const MAX_FRAME_LEN: usize = 1 << 20;

/// Tags a client may send.
pub const CLIENT_TAGS: [&str; 10] = [
    "hello_ack",
    "pause",
    "resume",
    "set_hyperparams",
    "add_neuron",
    "remove_neuron",
    "drag_node",
    "release_node",
    "set_sonification",
    "evaluate_now",
];

/// Tags the server may send.
pub const SERVER_TAGS: [&str; 9] = [
    "hello",
    "state",
    "epoch",
    "layout",
    "hyperparams",
    "structure",
    "eval",
    "audio",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    HelloAck,
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
}

impl ClientMessage {
    /// The session command this message asks for; `None` for handshake
    /// acknowledgements.
    pub fn to_command(&self) -> Option<Command> {
        Some(match *self {
            ClientMessage::HelloAck => return None,
            ClientMessage::Pause => Command::Pause,
            ClientMessage::Resume => Command::Resume,
            ClientMessage::SetHyperparams {
                learning_rate,
                momentum,
            } => Command::SetHyperparams {
                learning_rate,
                momentum,
            },
            ClientMessage::AddNeuron { layer, position } => Command::AddNeuron { layer, position },
            ClientMessage::RemoveNeuron {
                layer,
                node_id,
                position,
            } => Command::RemoveNeuron {
                layer,
                node_id,
                position,
            },
            ClientMessage::DragNode { node_id, position } => Command::DragNode { node_id, position },
            ClientMessage::ReleaseNode { node_id } => Command::ReleaseNode { node_id },
            ClientMessage::SetSonification { mode } => Command::SetSonification { mode },
            ClientMessage::EvaluateNow => Command::EvaluateNow,
        })
    }

    /// Inverse of [`to_command`](Self::to_command); `None` for commands
    /// that are not exposed over the wire.
    pub fn from_command(cmd: &Command) -> Option<Self> {
        Some(match *cmd {
            Command::Pause => ClientMessage::Pause,
            Command::Resume => ClientMessage::Resume,
            Command::SetHyperparams {
                learning_rate,
                momentum,
            } => ClientMessage::SetHyperparams {
                learning_rate,
                momentum,
            },
            Command::AddNeuron { layer, position } => ClientMessage::AddNeuron { layer, position },
            Command::RemoveNeuron {
                layer,
                node_id,
                position,
            } => ClientMessage::RemoveNeuron {
                layer,
                node_id,
                position,
            },
            Command::DragNode { node_id, position } => ClientMessage::DragNode { node_id, position },
            Command::ReleaseNode { node_id } => ClientMessage::ReleaseNode { node_id },
            Command::SetSonification { mode } => ClientMessage::SetSonification { mode },
            Command::EvaluateNow => ClientMessage::EvaluateNow,
            Command::Shutdown => return None,
        })
    }
}

/// Sonification settings announced in the handshake.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SonificationInfo {
    pub mode: SonificationMode,
    pub accuracy: FrequencyMapping,
    pub loss: FrequencyMapping,
    pub learning_rate: FrequencyMapping,
    pub momentum: FrequencyMapping,
}

impl From<&Sonifier> for SonificationInfo {
    fn from(s: &Sonifier) -> Self {
        SonificationInfo {
            mode: s.mode,
            accuracy: s.accuracy,
            loss: s.loss,
            learning_rate: s.learning_rate,
            momentum: s.momentum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol_version: u32,
        layer_sizes: LayerSizes,
        hyperparams: Hyperparams,
        sonification: SonificationInfo,
    },
    State {
        value: SessionState,
    },
    Epoch {
        epoch: u64,
        accuracy: f64,
        loss: f64,
        weights: WeightSnapshot,
    },
    Layout(LayoutSnapshot),
    Hyperparams(Hyperparams),
    Structure {
        layer_sizes: LayerSizes,
    },
    Eval {
        accuracy: f64,
        loss: f64,
    },
    Audio {
        left_freq: f64,
        right_freq: f64,
    },
    Error {
        code: String,
        text: String,
    },
}

impl ServerMessage {
    pub fn hello(layer_sizes: LayerSizes, hyperparams: Hyperparams, sonifier: &Sonifier) -> Self {
        ServerMessage::Hello {
            protocol_version: PROTOCOL_VERSION,
            layer_sizes,
            hyperparams,
            sonification: sonifier.into(),
        }
    }

    pub fn error(code: &str, text: impl Into<String>) -> Self {
        ServerMessage::Error {
            code: code.to_owned(),
            text: text.into(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ServerMessage::Hello { .. } => "hello",
            ServerMessage::State { .. } => "state",
            ServerMessage::Epoch { .. } => "epoch",
            ServerMessage::Layout(_) => "layout",
            ServerMessage::Hyperparams(_) => "hyperparams",
            ServerMessage::Structure { .. } => "structure",
            ServerMessage::Eval { .. } => "eval",
            ServerMessage::Audio { .. } => "audio",
            ServerMessage::Error { .. } => "error",
        }
    }

    /// Frames that a slow client may miss without losing track of the
    /// session: they are superseded by the next frame of the same kind.
    pub fn is_droppable(&self) -> bool {
        matches!(self, ServerMessage::Layout(_) | ServerMessage::Audio { .. })
    }
}

impl From<&Event> for ServerMessage {
    fn from(event: &Event) -> Self {
        match event {
            Event::StateChanged(value) => ServerMessage::State { value: *value },
            Event::EpochCompleted { metrics, weights } => ServerMessage::Epoch {
                epoch: metrics.epoch,
                accuracy: metrics.val_accuracy,
                loss: metrics.val_loss,
                weights: (**weights).clone(),
            },
            Event::LayoutFrame(snapshot) => ServerMessage::Layout((**snapshot).clone()),
            Event::HyperparamsChanged(hp) => ServerMessage::Hyperparams(*hp),
            Event::StructureChanged(layer_sizes) => ServerMessage::Structure {
                layer_sizes: *layer_sizes,
            },
            Event::EvalResult(EpochMetrics {
                val_accuracy,
                val_loss,
                ..
            }) => ServerMessage::Eval {
                accuracy: *val_accuracy,
                loss: *val_loss,
            },
            Event::Audio {
                left_freq,
                right_freq,
            } => ServerMessage::Audio {
                left_freq: *left_freq,
                right_freq: *right_freq,
            },
            Event::Error { code, text } => ServerMessage::error(code, text.clone()),
        }
    }
}

/// A message together with its optional sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<M> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(flatten)]
    pub message: M,
}

impl<M> Envelope<M> {
    pub fn new(seq: Option<u64>, message: M) -> Self {
        Envelope { seq, message }
    }
}

/// Message families that can travel inside an [`Envelope`].
pub trait Tagged: Serialize + DeserializeOwned {
    const TAGS: &'static [&'static str];
}

impl Tagged for ClientMessage {
    const TAGS: &'static [&'static str] = &CLIENT_TAGS;
}

impl Tagged for ServerMessage {
    const TAGS: &'static [&'static str] = &SERVER_TAGS;
}

/// JSON body of `envelope`. Fails on non-finite numbers, which JSON
/// cannot carry.
pub fn encode<M: Serialize>(envelope: &Envelope<M>) -> Result<Vec<u8>> {
    let value = serde_json::to_value(envelope)
        .map_err(|e| Error::protocol("encode", e.to_string()))?;
    if has_null_number(&value) {
        return Err(Error::protocol("encode", "message contains a non-finite number"));
    }
    serde_json::to_vec(&value).map_err(|e| Error::protocol("encode", e.to_string()))
}

// serde_json turns NaN and infinities into null; no schema field is
// nullable, so any null in an encoded message is one of those.
fn has_null_number(value: &Value) -> bool {
    match value {
        Value::Null => true,
        Value::Array(items) => items.iter().any(has_null_number),
        Value::Object(map) => map.values().any(has_null_number),
        _ => false,
    }
}

/// Parses a body. Error codes: `empty_frame`, `malformed`, `missing_type`,
/// `unknown_type` and `invalid_payload`.
pub fn decode<M: Tagged>(body: &[u8]) -> Result<Envelope<M>> {
    if body.is_empty() {
        return Err(Error::protocol("empty_frame", "frame has length 0"));
    }
    let value: Value =
        serde_json::from_slice(body).map_err(|e| Error::protocol("malformed", e.to_string()))?;
    let tag = match value.get("type") {
        Some(Value::String(tag)) => tag,
        Some(_) => return Err(Error::protocol("missing_type", "`type` must be a string")),
        None if value.is_object() => {
            return Err(Error::protocol("missing_type", "message has no `type` field"))
        }
        None => return Err(Error::protocol("malformed", "message is not a JSON object")),
    };
    if !M::TAGS.contains(&tag.as_str()) {
        return Err(Error::protocol("unknown_type", format!("unknown message type `{tag}`")));
    }
    serde_json::from_value(value).map_err(|e| Error::protocol("invalid_payload", e.to_string()))
}

/// `body` preceded by its 4-byte big-endian length.
pub fn frame(body: &[u8]) -> Vec<u8> {
    let len = u32::try_from(body.len()).expect("frame body exceeds 4 GiB");
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(body);
    out
}

pub fn write_frame(writer: &mut impl Write, body: &[u8]) -> io::Result<()> {
    writer.write_all(&frame(body))?;
    writer.flush()
}

/// Reads one length-prefixed body. `Ok(None)` on a clean end of stream
/// before the prefix; a declared length above `max_len` is a
/// `frame_too_large` protocol error, after which the stream is no longer
/// aligned and must be closed.
pub fn read_frame(reader: &mut impl Read, max_len: usize) -> Result<Option<Vec<u8>>> {
    let mut prefix = [0u8; 4];
    let mut filled = 0;
    while filled < prefix.len() {
        match reader.read(&mut prefix[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(prefix) as usize;
    if len > max_len {
        return Err(Error::protocol(
            "frame_too_large",
            format!("frame of {len} bytes exceeds the {max_len}-byte limit"),
        ));
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    Ok(Some(body))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip<M: Tagged + PartialEq + std::fmt::Debug>(env: Envelope<M>) {
        let bytes = encode(&env).unwrap();
        assert_eq!(decode::<M>(&bytes).unwrap(), env);
    }

    fn code(err: Error) -> &'static str {
        match err {
            Error::Protocol { code, .. } => code,
            other => panic!("expected a protocol error, got {other:?}"),
        }
    }

    #[test]
    fn wire_shape_is_flat() {
        let env = Envelope::new(
            Some(7),
            ClientMessage::DragNode {
                node_id: 3,
                position: [1.0, -2.5, 0.0],
            },
        );
        let v: Value = serde_json::from_slice(&encode(&env).unwrap()).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"type": "drag_node", "seq": 7, "node_id": 3, "position": [1.0, -2.5, 0.0]})
        );
        let v: Value = serde_json::to_value(Envelope::new(
            None,
            ClientMessage::AddNeuron {
                layer: HiddenLayer::Second,
                position: [0.0; 3],
            },
        ))
        .unwrap();
        assert_eq!(v["layer"], 2);
        assert!(v.get("seq").is_none());
    }

    #[test]
    fn field_order_is_irrelevant() {
        let a = br#"{"learning_rate":0.5,"type":"set_hyperparams","momentum":0.25,"seq":1}"#;
        let b = br#"{"seq":1,"momentum":0.25,"type":"set_hyperparams","learning_rate":0.5}"#;
        assert_eq!(decode::<ClientMessage>(a).unwrap(), decode::<ClientMessage>(b).unwrap());
    }

    #[test]
    fn doubles_survive_exactly() {
        for x in [0.1, 1.0 / 3.0, f64::MIN_POSITIVE, f64::MAX, -5e-324, 2.0f64.sqrt()] {
            roundtrip(Envelope::new(
                Some(u64::MAX),
                ServerMessage::Eval {
                    accuracy: x,
                    loss: -x,
                },
            ));
        }
    }

    #[test]
    fn error_codes() {
        assert_eq!(code(decode::<ClientMessage>(b"").unwrap_err()), "empty_frame");
        assert_eq!(code(decode::<ClientMessage>(b"{nope").unwrap_err()), "malformed");
        assert_eq!(code(decode::<ClientMessage>(b"[1,2]").unwrap_err()), "malformed");
        assert_eq!(code(decode::<ClientMessage>(b"{}").unwrap_err()), "missing_type");
        assert_eq!(code(decode::<ClientMessage>(br#"{"type":3}"#).unwrap_err()), "missing_type");
        assert_eq!(
            code(decode::<ClientMessage>(br#"{"type":"reboot"}"#).unwrap_err()),
            "unknown_type"
        );
        assert_eq!(
            code(decode::<ClientMessage>(br#"{"type":"hello"}"#).unwrap_err()),
            "unknown_type"
        );
        assert_eq!(
            code(decode::<ClientMessage>(br#"{"type":"drag_node","node_id":-1}"#).unwrap_err()),
            "invalid_payload"
        );
        assert_eq!(
            code(decode::<ClientMessage>(br#"{"type":"add_neuron","layer":3,"position":[0,0,0]}"#).unwrap_err()),
            "invalid_payload"
        );
    }

    #[test]
    fn non_finite_numbers_are_refused() {
        let env = Envelope::new(None, ServerMessage::Audio { left_freq: f64::NAN, right_freq: 1.0 });
        assert_eq!(code(encode(&env).unwrap_err()), "encode");
    }

    #[test]
    fn framing() {
        let framed = frame(b"abc");
        assert_eq!(framed, [0, 0, 0, 3, b'a', b'b', b'c']);
        let mut stream: &[u8] = &[framed.clone(), frame(b""), framed].concat();
        assert_eq!(read_frame(&mut stream, 16).unwrap().unwrap(), b"abc");
        assert_eq!(read_frame(&mut stream, 16).unwrap().unwrap(), b"");
        assert!(read_frame(&mut stream, 2).unwrap_err().to_string().contains("frame_too_large"));
        let mut empty: &[u8] = &[];
        assert!(read_frame(&mut empty, 16).unwrap().is_none());
        let mut truncated: &[u8] = &[0, 0];
        assert!(matches!(read_frame(&mut truncated, 16), Err(Error::Io(_))));
    }

    #[test]
    fn commands_map_both_ways() {
        let cmds = [
            Command::Pause,
            Command::Resume,
            Command::EvaluateNow,
            Command::ReleaseNode { node_id: 4 },
            Command::SetSonification {
                mode: SonificationMode::LossBoth,
            },
        ];
        for cmd in cmds {
            let msg = ClientMessage::from_command(&cmd).unwrap();
            assert_eq!(msg.to_command(), Some(cmd));
        }
        assert_eq!(ClientMessage::HelloAck.to_command(), None);
        assert_eq!(ClientMessage::from_command(&Command::Shutdown), None);
    }
}
