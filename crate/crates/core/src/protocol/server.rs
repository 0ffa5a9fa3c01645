//! TCP and WebSocket server exposing a live [`Session`].
//!
//! One acceptor thread hands each connection to its own thread. Raw
//! connections get a dedicated writer thread; WebSocket connections
//! interleave reads and writes on one thread. The session runs on its own
//! thread via [`run_live`]; its events are encoded once, stamped with a
//! server-wide sequence number and fanned out to per-client queues.

use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use tungstenite::protocol::WebSocketConfig;
use tungstenite::{Message, WebSocket};

use super::codec::{
    decode, encode, read_frame, write_frame, ClientMessage, Envelope, ServerMessage, MAX_FRAME_LEN,
};
use crate::error::{Error, Result};
use crate::session::{run_live, Command, LiveConfig, Session};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    pub live: LiveConfig,
    /// Pending outbound messages beyond which a client starts missing
    /// layout and audio frames.
    pub client_queue: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            live: LiveConfig::default(),
            client_queue: 256,
        }
    }
}

/// A running server. Dropping it without calling [`shutdown`](Self::shutdown)
/// leaves the threads running until the process exits.
pub struct Server {
    local_addr: SocketAddr,
    commands: Sender<Command>,
    hub: Arc<Hub>,
    session: JoinHandle<Session>,
    acceptor: JoinHandle<()>,
}

/// Binds `addr` and starts serving `session`.
pub fn serve(session: Session, addr: impl ToSocketAddrs, config: ServerConfig) -> Result<Server> {
    if config.client_queue == 0 {
        return Err(Error::invalid("client queue must hold at least one message"));
    }
    let listener = TcpListener::bind(addr)?;
    let local_addr = listener.local_addr()?;
    let hello = ServerMessage::hello(session.layer_sizes(), session.hyperparams(), session.sonifier());
    let hub = Arc::new(Hub::new(hello, config.client_queue));
    let (commands, rx) = mpsc::channel();

    let session = {
        let hub = Arc::clone(&hub);
        thread::Builder::new()
            .name("aiive-session".into())
            .spawn(move || {
                let session = run_live(session, rx, config.live, |session, event| {
                    hub.set_hello(ServerMessage::hello(
                        session.layer_sizes(),
                        session.hyperparams(),
                        session.sonifier(),
                    ));
                    hub.broadcast(&ServerMessage::from(&event));
                });
                hub.close(local_addr);
                session
            })?
    };
    let acceptor = {
        let hub = Arc::clone(&hub);
        let commands = commands.clone();
        thread::Builder::new()
            .name("aiive-accept".into())
            .spawn(move || accept_loop(listener, hub, commands))?
    };
    info!("serving on {local_addr}");
    Ok(Server {
        local_addr,
        commands,
        hub,
        session,
        acceptor,
    })
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// A handle for feeding commands to the session in-process.
    pub fn commands(&self) -> Sender<Command> {
        self.commands.clone()
    }

    pub fn client_count(&self) -> usize {
        self.hub.lock().clients.len()
    }

    /// Stops the session, disconnects every client and returns the session.
    pub fn shutdown(self) -> Session {
        // A send error means the session loop has already finished.
        let _ = self.commands.send(Command::Shutdown);
        self.join()
    }

    /// Blocks until the session loop ends, then tears the server down.
    pub fn join(self) -> Session {
        let Server {
            commands,
            hub,
            session,
            acceptor,
            local_addr,
        } = self;
        drop(commands);
        let session = session.join().expect("session thread panicked");
        hub.close(local_addr);
        if acceptor.join().is_err() {
            warn!("acceptor thread panicked");
        }
        session
    }
}

struct Client {
    id: u64,
    tx: Sender<Arc<str>>,
    pending: Arc<AtomicUsize>,
    stream: TcpStream,
}

struct HubState {
    next_seq: u64,
    next_id: u64,
    hello: ServerMessage,
    clients: Vec<Client>,
    closed: bool,
}

struct Hub {
    state: Mutex<HubState>,
    queue_limit: usize,
}

/// What a connection thread holds to receive its outbound bodies.
struct Outbox {
    id: u64,
    rx: Receiver<Arc<str>>,
    pending: Arc<AtomicUsize>,
}

impl Outbox {
    fn recv(&self) -> Option<Arc<str>> {
        let body = self.rx.recv().ok()?;
        self.pending.fetch_sub(1, Ordering::Relaxed);
        Some(body)
    }

    /// `Ok(None)` when nothing is queued, `Err` once the hub dropped us.
    fn try_recv(&self) -> std::result::Result<Option<Arc<str>>, ()> {
        match self.rx.try_recv() {
            Ok(body) => {
                self.pending.fetch_sub(1, Ordering::Relaxed);
                Ok(Some(body))
            }
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(()),
        }
    }
}

impl Hub {
    fn new(hello: ServerMessage, queue_limit: usize) -> Self {
        Hub {
            state: Mutex::new(HubState {
                next_seq: 0,
                next_id: 0,
                hello,
                clients: Vec::new(),
                closed: false,
            }),
            queue_limit,
        }
    }

    fn lock(&self) -> MutexGuard<'_, HubState> {
        self.state.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Stamps `msg` with the next sequence number and encodes it. A message
    /// that cannot be encoded is replaced by an error message.
    fn stamp(state: &mut HubState, msg: &ServerMessage) -> Arc<str> {
        let seq = Some(state.next_seq);
        state.next_seq += 1;
        let bytes = encode(&Envelope::new(seq, msg)).unwrap_or_else(|err| {
            warn!("dropping unencodable `{}` message: {err}", msg.tag());
            let fallback = ServerMessage::error("encode", err.to_string());
            encode(&Envelope::new(seq, fallback)).expect("error messages always encode")
        });
        String::from_utf8(bytes).expect("JSON is UTF-8").into()
    }

    /// Adds a client whose queue already holds the handshake.
    fn register(&self, stream: &TcpStream) -> io::Result<Option<Outbox>> {
        let mut state = self.lock();
        if state.closed {
            return Ok(None);
        }
        let stream = stream.try_clone()?;
        let (tx, rx) = mpsc::channel();
        let id = state.next_id;
        state.next_id += 1;
        let hello = state.hello.clone();
        let body = Self::stamp(&mut state, &hello);
        let pending = Arc::new(AtomicUsize::new(1));
        tx.send(body).expect("receiver is alive");
        state.clients.push(Client {
            id,
            tx,
            pending: Arc::clone(&pending),
            stream,
        });
        debug!("client {id} connected ({} total)", state.clients.len());
        Ok(Some(Outbox { id, rx, pending }))
    }

    fn unregister(&self, id: u64) {
        let mut state = self.lock();
        if let Some(i) = state.clients.iter().position(|c| c.id == id) {
            let client = state.clients.swap_remove(i);
            let _ = client.stream.shutdown(Shutdown::Both);
            debug!("client {id} disconnected ({} left)", state.clients.len());
        }
    }

    fn set_hello(&self, hello: ServerMessage) {
        self.lock().hello = hello;
    }

    fn broadcast(&self, msg: &ServerMessage) {
        let mut state = self.lock();
        if state.clients.is_empty() {
            return;
        }
        let body = Self::stamp(&mut state, msg);
        let droppable = msg.is_droppable();
        for client in &state.clients {
            if droppable && client.pending.load(Ordering::Relaxed) >= self.queue_limit {
                continue;
            }
            client.pending.fetch_add(1, Ordering::Relaxed);
            // A closed receiver means the connection is being torn down.
            let _ = client.tx.send(Arc::clone(&body));
        }
    }

    fn send_to(&self, id: u64, msg: &ServerMessage) {
        let mut state = self.lock();
        let body = Self::stamp(&mut state, msg);
        if let Some(client) = state.clients.iter().find(|c| c.id == id) {
            client.pending.fetch_add(1, Ordering::Relaxed);
            let _ = client.tx.send(body);
        }
    }

    fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Disconnects everybody and wakes the acceptor so that it can exit.
    fn close(&self, local_addr: SocketAddr) {
        let clients = {
            let mut state = self.lock();
            if state.closed {
                return;
            }
            state.closed = true;
            std::mem::take(&mut state.clients)
        };
        for client in clients {
            let _ = client.stream.shutdown(Shutdown::Both);
        }
        let _ = TcpStream::connect_timeout(&local_addr, Duration::from_secs(1));
    }
}

fn accept_loop(listener: TcpListener, hub: Arc<Hub>, commands: Sender<Command>) {
    for stream in listener.incoming() {
        if hub.is_closed() {
            break;
        }
        let stream = match stream {
            Ok(stream) => stream,
            Err(err) => {
                warn!("accept failed: {err}");
                continue;
            }
        };
        let hub = Arc::clone(&hub);
        let commands = commands.clone();
        let spawned = thread::Builder::new()
            .name("aiive-conn".into())
            .spawn(move || {
                if let Err(err) = connection(stream, &hub, &commands) {
                    debug!("connection ended: {err}");
                }
            });
        if let Err(err) = spawned {
            warn!("could not spawn a connection thread: {err}");
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transport {
    Raw,
    WebSocket,
}

/// How long a silent client may take before it is taken for a raw
/// connection. Browsers send their upgrade request right away, while raw
/// clients usually wait for the handshake.
const SNIFF_WINDOW: Duration = Duration::from_millis(200);

/// Tells the transports apart by whether the first bytes start an HTTP
/// upgrade request. `None` when the peer hung up first.
fn sniff(stream: &TcpStream) -> io::Result<Option<Transport>> {
    let deadline = Instant::now() + SNIFF_WINDOW;
    let mut head = [0u8; 4];
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Ok(Some(Transport::Raw));
        }
        stream.set_read_timeout(Some(left))?;
        let n = match stream.peek(&mut head) {
            Ok(n) => n,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                return Ok(Some(Transport::Raw))
            }
            Err(e) => return Err(e),
        };
        if n == 0 {
            return Ok(None);
        }
        if head[..n] != b"GET "[..n] {
            return Ok(Some(Transport::Raw));
        }
        if n == head.len() {
            return Ok(Some(Transport::WebSocket));
        }
        thread::sleep(Duration::from_millis(1));
    }
}

fn connection(stream: TcpStream, hub: &Hub, commands: &Sender<Command>) -> Result<()> {
    stream.set_nodelay(true)?;
    let Some(transport) = sniff(&stream)? else {
        return Ok(());
    };
    match transport {
        Transport::Raw => {
            stream.set_read_timeout(None)?;
            raw_connection(stream, hub, commands)
        }
        Transport::WebSocket => {
            stream.set_read_timeout(Some(Duration::from_secs(10)))?;
            websocket_connection(stream, hub, commands)
        }
    }
}

/// Per-connection inbound handling shared by both transports.
struct Inbound<'a> {
    hub: &'a Hub,
    commands: &'a Sender<Command>,
    id: u64,
    last_seq: Option<u64>,
}

impl Inbound<'_> {
    /// Applies one body. `false` once the session is gone.
    fn handle(&mut self, body: &[u8]) -> bool {
        let envelope = match decode::<ClientMessage>(body) {
            Ok(envelope) => envelope,
            Err(err) => {
                self.reply_error(err);
                return true;
            }
        };
        if let Some(seq) = envelope.seq {
            if self.last_seq.is_some_and(|last| seq <= last) {
                self.reply_error(Error::protocol(
                    "seq_order",
                    format!("seq {seq} does not follow {}", self.last_seq.unwrap_or(0)),
                ));
                return true;
            }
            self.last_seq = Some(seq);
        }
        match envelope.message.to_command() {
            Some(cmd) => self.commands.send(cmd).is_ok(),
            None => true,
        }
    }

    fn reply_error(&self, err: Error) {
        let msg = match err {
            Error::Protocol { code, text } => ServerMessage::error(code, text),
            other => ServerMessage::error("protocol", other.to_string()),
        };
        self.hub.send_to(self.id, &msg);
    }
}

fn raw_connection(stream: TcpStream, hub: &Hub, commands: &Sender<Command>) -> Result<()> {
    let Some(outbox) = hub.register(&stream)? else {
        return Ok(());
    };
    let id = outbox.id;
    let mut writer_stream = stream.try_clone()?;
    let writer = thread::Builder::new()
        .name("aiive-conn-writer".into())
        .spawn(move || {
            while let Some(body) = outbox.recv() {
                if write_frame(&mut writer_stream, body.as_bytes()).is_err() {
                    break;
                }
            }
            let _ = writer_stream.shutdown(Shutdown::Both);
        })?;

    let mut inbound = Inbound {
        hub,
        commands,
        id,
        last_seq: None,
    };
    let mut reader = io::BufReader::new(&stream);
    let result = loop {
        match read_frame(&mut reader, MAX_FRAME_LEN) {
            Ok(Some(body)) => {
                if !inbound.handle(&body) {
                    break Ok(());
                }
            }
            Ok(None) => break Ok(()),
            Err(err) => break Err(err),
        }
    };
    hub.unregister(id);
    let _ = writer.join();
    result
}

fn websocket_connection(stream: TcpStream, hub: &Hub, commands: &Sender<Command>) -> Result<()> {
    let config = WebSocketConfig::default()
        .max_message_size(Some(MAX_FRAME_LEN))
        .max_frame_size(Some(MAX_FRAME_LEN));
    let mut ws = tungstenite::accept_with_config(stream, Some(config))
        .map_err(|e| Error::protocol("handshake", e.to_string()))?;
    // Short reads let one thread alternate between both directions.
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(5)))?;
    let Some(outbox) = hub.register(ws.get_ref())? else {
        return Ok(());
    };
    let mut inbound = Inbound {
        hub,
        commands,
        id: outbox.id,
        last_seq: None,
    };
    let result = websocket_loop(&mut ws, &outbox, &mut inbound);
    hub.unregister(outbox.id);
    result
}

fn websocket_loop(
    ws: &mut WebSocket<TcpStream>,
    outbox: &Outbox,
    inbound: &mut Inbound<'_>,
) -> Result<()> {
    let ws_err = |e: tungstenite::Error| Error::protocol("websocket", e.to_string());
    loop {
        let mut wrote = false;
        loop {
            match outbox.try_recv() {
                Ok(Some(body)) => {
                    ws.write(Message::text(body.as_ref())).map_err(ws_err)?;
                    wrote = true;
                }
                Ok(None) => break,
                Err(()) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return Ok(());
                }
            }
        }
        if wrote {
            ws.flush().map_err(ws_err)?;
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                if !inbound.handle(text.as_bytes()) {
                    return Ok(());
                }
            }
            Ok(Message::Binary(bytes)) => {
                if !inbound.handle(&bytes) {
                    return Ok(());
                }
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                return Ok(())
            }
            Err(e) => return Err(ws_err(e)),
        }
    }
}
