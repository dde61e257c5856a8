use std::collections::BTreeSet;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use tungstenite::{Message, WebSocket};

use super::protocol::{read_frame, read_frame_body, write_frame, JamMessage};
use super::session::{handle_bars, SessionState, DEFAULT_STD};
use crate::error::{Error, Result};
use crate::model::FmVae;
use crate::tensor::Rng;

/// Shared read-only model plus the registry of live sessions.
pub struct Broker {
    model: Arc<FmVae>,
    seed: u64,
    default_std: f64,
    sessions: Mutex<BTreeSet<String>>,
    counter: AtomicU64,
}

impl Broker {
    pub fn new(model: Arc<FmVae>, seed: u64, default_std: f64) -> Result<Arc<Self>> {
        SessionState::new("probe", default_std)?;
        Ok(Arc::new(Self {
            model,
            seed,
            default_std,
            sessions: Mutex::new(BTreeSet::new()),
            counter: AtomicU64::new(0),
        }))
    }

    pub fn model(&self) -> &FmVae {
        &self.model
    }

    pub fn active_sessions(&self) -> Vec<String> {
        self.sessions
            .lock()
            .expect("registry lock")
            .iter()
            .cloned()
            .collect()
    }

    /// A fresh connection; its session is released when it is dropped.
    pub fn connect(self: &Arc<Self>) -> Connection {
        Connection {
            broker: Arc::clone(self),
            session: None,
        }
    }
}

struct Live {
    state: SessionState,
    rng: Rng,
}

/// One client's view of the broker: at most one session, handled one
/// message at a time.
pub struct Connection {
    broker: Arc<Broker>,
    session: Option<Live>,
}

impl Connection {
    pub fn session(&self) -> Option<&SessionState> {
        self.session.as_ref().map(|l| &l.state)
    }

    pub fn handle_body(&mut self, body: &str) -> JamMessage {
        match JamMessage::from_json(body) {
            Ok(msg) => self.handle(&msg),
            Err(e) => JamMessage::error(self.session_id(), None, e.to_string()),
        }
    }

    fn session_id(&self) -> Option<String> {
        self.session.as_ref().map(|l| l.state.id().to_string())
    }

    pub fn handle(&mut self, msg: &JamMessage) -> JamMessage {
        match msg {
            JamMessage::Hello {
                session,
                seq,
                timestamp_ms,
                std,
            } => match self.open(
                session.clone(),
                *seq,
                std.unwrap_or(self.broker.default_std),
            ) {
                Ok(id) => {
                    let cfg = self.broker.model.config();
                    JamMessage::HelloAck {
                        session: id,
                        seq: *seq,
                        timestamp_ms: *timestamp_ms,
                        kind: cfg.kind,
                        n_s: cfg.n_s,
                        n_d: cfg.n_d,
                        n_z: cfg.n_z,
                        std: self.session().map(|s| s.std()).unwrap_or_default(),
                    }
                }
                Err(e) => JamMessage::error(session.clone(), Some(*seq), e.to_string()),
            },
            JamMessage::Bars { .. } => match self.session.as_mut() {
                Some(live) => handle_bars(msg, &self.broker.model, &mut live.state, &mut live.rng),
                None => JamMessage::error(None, None, "send hello before bars"),
            },
            other => JamMessage::error(
                self.session_id(),
                None,
                format!("clients may not send {} messages", other.type_name()),
            ),
        }
    }

    fn open(&mut self, requested: Option<String>, seq: u64, std: f64) -> Result<String> {
        if self.session.is_some() {
            return Err(Error::Protocol(
                "this connection already has a session".into(),
            ));
        }
        let id = match requested {
            Some(id) if id.is_empty() => return Err(Error::Protocol("empty session id".into())),
            Some(id) => id,
            None => format!(
                "session-{}",
                self.broker.counter.fetch_add(1, Ordering::Relaxed)
            ),
        };
        let mut state = SessionState::new(id.clone(), std)?;
        state.advance_seq(seq)?;
        if !self
            .broker
            .sessions
            .lock()
            .expect("registry lock")
            .insert(id.clone())
        {
            return Err(Error::Protocol(format!("session `{id}` is already open")));
        }
        let rng = Rng::new(self.broker.seed).stream(&id);
        self.session = Some(Live { state, rng });
        Ok(id)
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(id) = self.session_id() {
            if let Ok(mut s) = self.broker.sessions.lock() {
                s.remove(&id);
            }
        }
    }
}

/// Listen addresses and session defaults.
#[derive(Clone, Debug)]
pub struct ServeConfig {
    /// Length-prefixed framing.
    pub addr: String,
    /// WebSocket framing with the same JSON bodies.
    pub ws_addr: Option<String>,
    pub std: f64,
    pub seed: u64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:7878".into(),
            ws_addr: Some("127.0.0.1:7879".into()),
            std: DEFAULT_STD,
            seed: 0,
        }
    }
}

pub struct ServerHandle {
    broker: Arc<Broker>,
    addr: SocketAddr,
    ws_addr: Option<SocketAddr>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn ws_local_addr(&self) -> Option<SocketAddr> {
        self.ws_addr
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.broker
    }

    /// Block until the accept loops exit.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Stop accepting connections. Open connections run until their
    /// clients disconnect.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for a in std::iter::once(self.addr).chain(self.ws_addr) {
            let _ = TcpStream::connect(a);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn bind(addr: &str) -> Result<TcpListener> {
    let addrs: Vec<SocketAddr> = addr
        .to_socket_addrs()
        .map_err(|e| Error::invalid(format!("cannot resolve `{addr}`: {e}")))?
        .collect();
    TcpListener::bind(&addrs[..]).map_err(|e| Error::invalid(format!("cannot bind `{addr}`: {e}")))
}

/// Bind both listeners and serve each connection on its own thread.
pub fn serve(model: Arc<FmVae>, cfg: &ServeConfig) -> Result<ServerHandle> {
    let broker = Broker::new(model, cfg.seed, cfg.std)?;
    let stop = Arc::new(AtomicBool::new(false));
    let tcp = bind(&cfg.addr)?;
    let addr = tcp.local_addr()?;
    let ws = cfg.ws_addr.as_deref().map(bind).transpose()?;
    let ws_addr = ws.as_ref().map(|l| l.local_addr()).transpose()?;

    let mut threads = vec![accept_loop(
        tcp,
        Arc::clone(&broker),
        Arc::clone(&stop),
        serve_framed,
    )];
    if let Some(ws) = ws {
        threads.push(accept_loop(
            ws,
            Arc::clone(&broker),
            Arc::clone(&stop),
            serve_websocket,
        ));
    }
    log::info!("jam broker on {addr} (ws: {ws_addr:?})");
    Ok(ServerHandle {
        broker,
        addr,
        ws_addr,
        stop,
        threads,
    })
}

fn accept_loop(
    listener: TcpListener,
    broker: Arc<Broker>,
    stop: Arc<AtomicBool>,
    handler: fn(TcpStream, Connection) -> Result<()>,
) -> JoinHandle<()> {
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let _ = stream.set_nodelay(true);
            let conn = broker.connect();
            std::thread::spawn(move || {
                if let Err(e) = handler(stream, conn) {
                    log::debug!("connection closed: {e}");
                }
            });
        }
    })
}

fn serve_framed(mut stream: TcpStream, mut conn: Connection) -> Result<()> {
    while let Some(body) = read_frame_body(&mut stream)? {
        let reply = conn.handle_body(&body);
        write_frame(&mut stream, &reply)?;
    }
    Ok(())
}

fn serve_websocket(stream: TcpStream, mut conn: Connection) -> Result<()> {
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream)
        .map_err(|e| Error::Protocol(format!("websocket handshake: {e}")))?;
    loop {
        let body = match ws.read() {
            Ok(Message::Text(t)) => t,
            Ok(Message::Binary(b)) => match String::from_utf8(b) {
                Ok(t) => t,
                Err(_) => {
                    send_ws(
                        &mut ws,
                        &JamMessage::error(None, None, "binary frame is not UTF-8"),
                    )?;
                    continue;
                }
            },
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => continue,
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                return Ok(())
            }
            Err(e) => return Err(Error::Protocol(e.to_string())),
        };
        let reply = conn.handle_body(&body);
        send_ws(&mut ws, &reply)?;
    }
}

fn send_ws(ws: &mut WebSocket<TcpStream>, msg: &JamMessage) -> Result<()> {
    ws.send(Message::Text(msg.to_json()))
        .map_err(|e| Error::Protocol(e.to_string()))
}

/// Blocking client for the length-prefixed framing.
pub struct JamClient {
    stream: TcpStream,
}

impl JamClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn send(&mut self, msg: &JamMessage) -> Result<()> {
        write_frame(&mut self.stream, msg)
    }

    pub fn recv(&mut self) -> Result<JamMessage> {
        read_frame(&mut self.stream)?
            .ok_or_else(|| Error::Protocol("server closed the connection".into()))
    }

    pub fn request(&mut self, msg: &JamMessage) -> Result<JamMessage> {
        self.send(msg)?;
        self.recv()
    }
}
