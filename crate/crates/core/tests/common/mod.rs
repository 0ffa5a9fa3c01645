//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::io::{BufReader, ErrorKind};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::time::{Duration, Instant};

use aiive_core::nn::{Dataset, Hyperparams, SyntheticSpec};
use aiive_core::protocol::{
    decode, encode, read_frame, write_frame, ClientMessage, Envelope, ServerMessage,
};
use aiive_core::session::{Session, SessionConfig};
use aiive_core::Error;

pub fn small_data() -> Arc<Dataset> {
    Arc::new(
        SyntheticSpec {
            side: 8,
            counts: [128, 32, 16],
            seed: 3,
            ..SyntheticSpec::default()
        }
        .generate()
        .unwrap(),
    )
}

pub fn small_config() -> SessionConfig {
    SessionConfig {
        hidden: [5, 4],
        hyperparams: Hyperparams {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 16,
        },
        seed: 9,
        ..SessionConfig::default()
    }
}

pub fn small_session() -> Session {
    Session::new(small_data(), small_config()).unwrap()
}

/// Blocking client for the length-prefixed transport.
pub struct RawClient {
    pub stream: TcpStream,
    reader: BufReader<TcpStream>,
    seq: u64,
}

impl RawClient {
    pub fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        RawClient {
            stream,
            reader,
            seq: 0,
        }
    }

    pub fn send(&mut self, msg: ClientMessage) {
        self.seq += 1;
        let body = encode(&Envelope::new(Some(self.seq), msg)).unwrap();
        write_frame(&mut self.stream, &body).unwrap();
    }

    pub fn send_body(&mut self, body: &[u8]) -> std::io::Result<()> {
        write_frame(&mut self.stream, body)
    }

    /// Next message, or `None` once the server closed the connection.
    pub fn recv(&mut self) -> Option<Envelope<ServerMessage>> {
        match read_frame(&mut self.reader, usize::MAX) {
            Ok(Some(body)) => Some(decode(&body).expect("server sent an undecodable frame")),
            Ok(None) => None,
            Err(Error::Io(e)) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut => {
                panic!("timed out waiting for the server")
            }
            Err(Error::Io(_)) => None,
            Err(e) => panic!("unexpected error: {e}"),
        }
    }

    /// Skips messages until `pick` accepts one.
    pub fn recv_until<T>(
        &mut self,
        mut pick: impl FnMut(&Envelope<ServerMessage>) -> Option<T>,
    ) -> T {
        let deadline = Instant::now() + Duration::from_secs(30);
        while Instant::now() < deadline {
            let env = self.recv().expect("connection closed while waiting");
            if let Some(found) = pick(&env) {
                return found;
            }
        }
        panic!("message never arrived");
    }
}

use aiive_core::layout::{LayoutSnapshot, NodeKind, SnapshotEdge, SnapshotNode};
use aiive_core::nn::HiddenLayer;
use aiive_core::session::{SessionState, WeightSnapshot};
use aiive_core::sonify::{SonificationMode, Sonifier};

/// Every client tag, with boundary values.
pub fn client_corpus() -> Vec<Envelope<ClientMessage>> {
    let msgs = vec![
        ClientMessage::HelloAck,
        ClientMessage::Pause,
        ClientMessage::Resume,
        ClientMessage::SetHyperparams {
            learning_rate: 1e-300,
            momentum: 0.0,
        },
        ClientMessage::SetHyperparams {
            learning_rate: 1.0,
            momentum: 0.999_999_999_999_999_9,
        },
        ClientMessage::AddNeuron {
            layer: HiddenLayer::First,
            position: [0.0, -0.0, 1e308],
        },
        ClientMessage::AddNeuron {
            layer: HiddenLayer::Second,
            position: [0.1, 0.2, 0.3],
        },
        ClientMessage::RemoveNeuron {
            layer: HiddenLayer::Second,
            node_id: u32::MAX,
            position: [-1.5, 2.25, f64::MIN_POSITIVE],
        },
        ClientMessage::DragNode {
            node_id: 0,
            position: [f64::MAX, f64::MIN, 5e-324],
        },
        ClientMessage::ReleaseNode { node_id: 17 },
        ClientMessage::SetSonification {
            mode: SonificationMode::AccuracyBoth,
        },
        ClientMessage::SetSonification {
            mode: SonificationMode::Split,
        },
        ClientMessage::SetSonification {
            mode: SonificationMode::LossBoth,
        },
        ClientMessage::EvaluateNow,
    ];
    msgs.into_iter()
        .enumerate()
        .map(|(i, m)| Envelope::new((i % 2 == 0).then_some(i as u64), m))
        .collect()
}

/// Every server tag, with boundary values and empty arrays.
pub fn server_corpus() -> Vec<Envelope<ServerMessage>> {
    let empty_weights = WeightSnapshot {
        w1_rows: 0,
        w1_cols: 0,
        w1: vec![],
        b1: vec![],
        w2_rows: 0,
        w2_cols: 0,
        w2: vec![],
        b2: vec![],
        w3_rows: 0,
        w3_cols: 0,
        w3: vec![],
        b3: vec![],
    };
    let weights = WeightSnapshot {
        w1_rows: 1,
        w1_cols: 2,
        w1: vec![0.1, -1.0 / 3.0],
        b1: vec![0.0],
        w2_rows: 2,
        w2_cols: 1,
        w2: vec![1e-310, 7.0],
        b2: vec![-0.0, 2.5],
        w3_rows: 1,
        w3_cols: 2,
        w3: vec![f64::MAX, f64::EPSILON],
        b3: vec![1.0],
    };
    let mut msgs = vec![
        ServerMessage::hello(
            [2304, 32, 16, 7],
            Hyperparams::default(),
            &Sonifier::new(7, SonificationMode::Split),
        ),
        ServerMessage::Layout(LayoutSnapshot {
            nodes: vec![],
            edges: vec![],
        }),
        ServerMessage::Layout(LayoutSnapshot {
            nodes: vec![
                SnapshotNode {
                    id: 0,
                    kind: NodeKind::Input,
                    pos: [0.0, 1.0, -2.0],
                },
                SnapshotNode {
                    id: 9,
                    kind: NodeKind::Hidden2,
                    pos: [1e-9, 0.5, 3.75],
                },
            ],
            edges: vec![SnapshotEdge {
                a: 0,
                b: 9,
                w: -1.0,
            }],
        }),
        ServerMessage::Hyperparams(Hyperparams {
            learning_rate: 0.125,
            momentum: 0.0,
            batch_size: 1,
        }),
        ServerMessage::Structure {
            layer_sizes: [1, 1, 1, 2],
        },
        ServerMessage::Epoch {
            epoch: 0,
            accuracy: 0.0,
            loss: 0.0,
            weights: empty_weights,
        },
        ServerMessage::Epoch {
            epoch: u64::MAX,
            accuracy: 1.0,
            loss: 27.631021115928547,
            weights,
        },
        ServerMessage::Eval {
            accuracy: 0.142_857_142_857_142_85,
            loss: 1.945_910_149_055_313_3,
        },
        ServerMessage::Audio {
            left_freq: 220.0,
            right_freq: 880.0,
        },
        ServerMessage::error("", ""),
        ServerMessage::error("unknown_type", "quote \" backslash \\ unicode \u{e9}\u{1f50a} newline \n"),
    ];
    for value in [
        SessionState::Running,
        SessionState::Paused,
        SessionState::EditingStructure,
        SessionState::EditingWeights,
        SessionState::TuningHyperparams,
    ] {
        msgs.push(ServerMessage::State { value });
    }
    msgs.into_iter()
        .enumerate()
        .map(|(i, m)| Envelope::new((i % 3 != 1).then_some(i as u64 * 1_000_000_007), m))
        .collect()
}
