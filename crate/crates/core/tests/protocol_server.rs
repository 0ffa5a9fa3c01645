mod common;

use std::io::Write;
use std::net::TcpStream;
use std::time::Duration;

use aiive_core::protocol::{
    decode, encode, serve, ClientMessage, Envelope, ServerConfig, ServerMessage, MAX_FRAME_LEN,
    PROTOCOL_VERSION,
};
use aiive_core::session::{LiveConfig, SessionState};
use aiive_core::Error;
use common::{client_corpus, server_corpus, small_session, RawClient};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn paused_server() -> aiive_core::protocol::Server {
    let config = ServerConfig {
        live: LiveConfig {
            tick_hz: 0.0,
            epoch_budget: Some(0),
        },
        ..ServerConfig::default()
    };
    serve(small_session(), "127.0.0.1:0", config).unwrap()
}

fn error_code(env: &Envelope<ServerMessage>) -> Option<String> {
    match &env.message {
        ServerMessage::Error { code, .. } => Some(code.clone()),
        _ => None,
    }
}

fn state(env: &Envelope<ServerMessage>) -> Option<SessionState> {
    match env.message {
        ServerMessage::State { value } => Some(value),
        _ => None,
    }
}

#[test]
fn corpus_roundtrips() {
    for env in client_corpus() {
        assert_eq!(decode::<ClientMessage>(&encode(&env).unwrap()).unwrap(), env);
    }
    for env in server_corpus() {
        assert_eq!(decode::<ServerMessage>(&encode(&env).unwrap()).unwrap(), env);
    }
}

#[test]
fn decoder_survives_random_bytes() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10_000 {
        let len = rng.random_range(0..96);
        let body: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        match decode::<ClientMessage>(&body) {
            Ok(_) | Err(Error::Protocol { .. }) => {}
            Err(other) => panic!("non-protocol error {other:?}"),
        }
    }
}

#[test]
fn handshake_comes_first() {
    let server = paused_server();
    let mut client = RawClient::connect(server.local_addr());
    let hello = client.recv().unwrap();
    match hello.message {
        ServerMessage::Hello {
            protocol_version,
            layer_sizes,
            ..
        } => {
            assert_eq!(protocol_version, PROTOCOL_VERSION);
            assert_eq!(layer_sizes, [64, 5, 4, 7]);
        }
        other => panic!("expected hello, got {other:?}"),
    }
    server.shutdown();
}

#[test]
fn pause_reports_paused_state() {
    let config = ServerConfig {
        live: LiveConfig {
            tick_hz: 0.0,
            epoch_budget: None,
        },
        ..ServerConfig::default()
    };
    let server = serve(small_session(), "127.0.0.1:0", config).unwrap();
    let mut client = RawClient::connect(server.local_addr());
    client.recv().unwrap();
    client.send(ClientMessage::HelloAck);
    client.send(ClientMessage::Pause);
    assert_eq!(client.recv_until(state), SessionState::Paused);
    client.send(ClientMessage::Resume);
    assert_eq!(client.recv_until(state), SessionState::Running);
    server.shutdown();
}

#[test]
fn bad_frames_get_error_replies_and_keep_the_connection() {
    let server = paused_server();
    let mut client = RawClient::connect(server.local_addr());
    client.recv().unwrap();
    client.send_body(b"").unwrap();
    assert_eq!(client.recv_until(error_code), "empty_frame");
    client.send_body(br#"{"type":"launch_rockets"}"#).unwrap();
    assert_eq!(client.recv_until(error_code), "unknown_type");
    client.send_body(b"\xff\xfe").unwrap();
    assert_eq!(client.recv_until(error_code), "malformed");
    client.send_body(br#"{"type":"drag_node"}"#).unwrap();
    assert_eq!(client.recv_until(error_code), "invalid_payload");
    client.send_body(br#"{"type":"evaluate_now","seq":5}"#).unwrap();
    client.send_body(br#"{"type":"evaluate_now","seq":5}"#).unwrap();
    assert_eq!(client.recv_until(error_code), "seq_order");
    // Still usable.
    client.send_body(br#"{"type":"evaluate_now","seq":6}"#).unwrap();
    client.recv_until(|env| matches!(env.message, ServerMessage::Eval { .. }).then_some(()));
    server.shutdown();
}

#[test]
fn oversize_frame_closes_only_that_connection() {
    let server = paused_server();
    let mut bad = RawClient::connect(server.local_addr());
    bad.recv().unwrap();
    let len = (MAX_FRAME_LEN as u32 + 1).to_be_bytes();
    bad.stream.write_all(&len).unwrap();
    while bad.recv().is_some() {}

    let mut good = RawClient::connect(server.local_addr());
    assert!(matches!(good.recv().unwrap().message, ServerMessage::Hello { .. }));
    server.shutdown();
}

#[test]
fn two_clients_see_identical_epoch_streams() {
    let config = ServerConfig {
        live: LiveConfig {
            tick_hz: 0.0,
            epoch_budget: None,
        },
        ..ServerConfig::default()
    };
    let session = small_session();
    let server = serve(session, "127.0.0.1:0", config).unwrap();
    // Hold the session until both clients are registered.
    let mut a = RawClient::connect(server.local_addr());
    a.recv().unwrap();
    a.send(ClientMessage::Pause);
    a.recv_until(state);
    let mut b = RawClient::connect(server.local_addr());
    b.recv().unwrap();
    a.send(ClientMessage::Resume);

    let epochs = |c: &mut RawClient| {
        let mut out = Vec::new();
        while out.len() < 4 {
            let env = c.recv().unwrap();
            if matches!(env.message, ServerMessage::Epoch { .. }) {
                out.push(env);
            }
        }
        out
    };
    let (ea, eb) = (epochs(&mut a), epochs(&mut b));
    assert_eq!(ea, eb);
    for pair in ea.windows(2) {
        assert!(pair[0].seq < pair[1].seq);
        let epoch = |e: &Envelope<ServerMessage>| match e.message {
            ServerMessage::Epoch { epoch, .. } => epoch,
            _ => unreachable!(),
        };
        assert_eq!(epoch(&pair[1]), epoch(&pair[0]) + 1);
    }
    server.shutdown();
}

#[test]
fn server_seq_increases_per_client() {
    let server = paused_server();
    let mut client = RawClient::connect(server.local_addr());
    let mut last = None;
    for _ in 0..20 {
        let env = client.recv().unwrap();
        assert!(env.seq > last);
        last = env.seq;
    }
    server.shutdown();
}

#[test]
fn websocket_transport_speaks_the_same_bodies() {
    let server = paused_server();
    let url = format!("ws://{}/", server.local_addr());
    let (mut ws, _) = tungstenite::connect(url).unwrap();
    let mut next = || loop {
        if let tungstenite::Message::Text(text) = ws.read().unwrap() {
            return decode::<ServerMessage>(text.as_bytes()).unwrap();
        }
    };
    assert!(matches!(next().message, ServerMessage::Hello { protocol_version: 1, .. }));
    drop(next);
    let body = encode(&Envelope::new(Some(1), ClientMessage::Resume)).unwrap();
    ws.send(tungstenite::Message::text(String::from_utf8(body).unwrap())).unwrap();
    ws.send(tungstenite::Message::text(r#"{"type":"pause"}"#)).unwrap();
    let mut states = Vec::new();
    while states.len() < 2 {
        if let tungstenite::Message::Text(text) = ws.read().unwrap() {
            let env = decode::<ServerMessage>(text.as_bytes()).unwrap();
            states.extend(state(&env));
        }
    }
    assert_eq!(states, [SessionState::Running, SessionState::Paused]);
    ws.send(tungstenite::Message::text("{}")).unwrap();
    loop {
        if let tungstenite::Message::Text(text) = ws.read().unwrap() {
            let env = decode::<ServerMessage>(text.as_bytes()).unwrap();
            if let Some(code) = error_code(&env) {
                assert_eq!(code, "missing_type");
                break;
            }
        }
    }
    server.shutdown();
}

#[test]
fn shutdown_disconnects_clients() {
    let server = paused_server();
    let mut client = RawClient::connect(server.local_addr());
    client.recv().unwrap();
    assert_eq!(server.client_count(), 1);
    let addr = server.local_addr();
    server.shutdown();
    while client.recv().is_some() {}
    std::thread::sleep(Duration::from_millis(50));
    assert!(TcpStream::connect(addr).is_err());
}

#[test]
fn epoch_weights_match_layer_shapes() {
    use aiive_core::nn::{EpochMetrics, Mlp};
    use aiive_core::session::{Event, WeightSnapshot};
    use std::sync::Arc;

    let net = Mlp::init([2304, 3, 4, 7], 1).unwrap();
    let event = Event::EpochCompleted {
        metrics: EpochMetrics {
            epoch: 1,
            val_accuracy: 0.5,
            val_loss: 1.0,
        },
        weights: Arc::new(WeightSnapshot::of(&net)),
    };
    let body = encode(&Envelope::new(Some(0), ServerMessage::from(&event))).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let w = &v["weights"];
    let len = |k: &str| w[k].as_array().unwrap().len();
    let dim = |k: &str| w[k].as_u64().unwrap() as usize;
    assert_eq!((dim("w1_rows"), dim("w1_cols")), (3, 2304));
    assert_eq!((dim("w2_rows"), dim("w2_cols")), (4, 3));
    assert_eq!((dim("w3_rows"), dim("w3_cols")), (7, 4));
    assert_eq!((len("w1"), len("b1")), (3 * 2304, 3));
    assert_eq!((len("w2"), len("b2")), (12, 4));
    assert_eq!((len("w3"), len("b3")), (28, 7));
    // Row-major: element (r, c) of W1 sits at r * cols + c.
    assert_eq!(w["w1"][2305].as_f64().unwrap(), net.weights(1)[[1, 1]]);
}
