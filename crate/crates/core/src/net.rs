//! TCP loopback transport: a thread-per-connection server front end, a
//! framed client transport, and per-stage traffic accounting.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::group::GroupParams;
use crate::protocol::client::{ClientError, Transport};
pub use crate::protocol::server::wall_slot;
use crate::protocol::server::Server;
use crate::protocol::{Reason, Request, Response, Stage};
use crate::wire::{
    decode_request, decode_response, encode_request, encode_response, read_frame, FrameError,
    WireMessage, MAX_FRAME,
};

/// Traffic and time for one stage as seen from one side of the connection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageTotals {
    pub calls: u64,
    /// Framed bytes this side wrote.
    pub sent: u64,
    /// Framed bytes this side read.
    pub received: u64,
    /// Server: time spent handling. Client: time spent waiting for replies.
    pub busy: Duration,
}

/// Concurrent-safe accumulator of [`StageTotals`].
#[derive(Debug, Default)]
pub struct Metrics {
    inner: Mutex<BTreeMap<Stage, StageTotals>>,
}

impl Metrics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, stage: Stage, sent: usize, received: usize, busy: Duration) {
        let mut m = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let e = m.entry(stage).or_default();
        e.calls += 1;
        e.sent += sent as u64;
        e.received += received as u64;
        e.busy += busy;
    }

    pub fn get(&self, stage: Stage) -> StageTotals {
        self.snapshot().get(&stage).copied().unwrap_or_default()
    }

    pub fn snapshot(&self) -> BTreeMap<Stage, StageTotals> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn reset(&self) {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }
}

fn frame(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// Turns one request frame body into a reply body. `None` means the frame
/// was not a wire message at all and the connection should be dropped.
pub fn respond(server: &Server, body: &[u8]) -> Option<(Stage, Vec<u8>)> {
    let msg = WireMessage::decode(body).ok()?;
    let pp = server.params();
    let resp = match decode_request(Some(pp), &msg) {
        Ok(req) => server.handle(req),
        Err(_) => Response::Rejected(Reason::Malformed),
    };
    let reply = encode_response(Some(pp), msg.stage, &resp).ok()?;
    Some((msg.stage, reply.encode()))
}

/// Serves requests on one stream until the peer closes it or sends
/// something that is not a well-formed frame.
pub fn serve_stream(server: &Server, mut stream: TcpStream, metrics: &Metrics, cap: usize) {
    let _ = stream.set_nodelay(true);
    loop {
        let body = match read_frame(&mut stream, cap) {
            Ok(b) => b,
            Err(_) => return,
        };
        let start = Instant::now();
        let Some((stage, reply)) = respond(server, &body) else {
            return;
        };
        let busy = start.elapsed();
        if reply.len() > cap {
            return;
        }
        let out = frame(&reply);
        // recorded before the write so a client that has its reply also sees the count
        metrics.record(stage, out.len(), body.len() + 4, busy);
        if stream.write_all(&out).is_err() {
            return;
        }
    }
}

/// A listening server front end. Each accepted connection gets its own
/// thread.
pub struct NetServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl NetServer {
    pub fn start(
        server: Arc<Server>,
        addr: impl ToSocketAddrs,
        metrics: Arc<Metrics>,
        idle_timeout: Option<Duration>,
    ) -> io::Result<NetServer> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let accept = thread::spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let _ = stream.set_read_timeout(idle_timeout);
                let (server, metrics) = (server.clone(), metrics.clone());
                thread::spawn(move || serve_stream(&server, stream, &metrics, MAX_FRAME));
            }
        });
        Ok(NetServer { addr, stop, accept: Some(accept) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Stops accepting. Connections already open run until their peers close.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for NetServer {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

/// Wall-clock slot number: seconds since the epoch divided by the slot
/// length.
/// Keeps the server clock at [`wall_slot`] until `stop` is set.
pub fn spawn_clock(server: Arc<Server>, stop: Arc<AtomicBool>) -> JoinHandle<()> {
    let len = server.config().slot_length;
    thread::spawn(move || {
        while !stop.load(Ordering::SeqCst) {
            server.advance_to(wall_slot(len));
            thread::sleep(Duration::from_millis(200));
        }
    })
}

/// Client side of the framed TCP transport.
pub struct TcpTransport {
    stream: TcpStream,
    params: Option<GroupParams>,
    metrics: Option<Arc<Metrics>>,
    cap: usize,
}

fn transport_err(e: impl std::fmt::Display) -> ClientError {
    ClientError::Transport(e.to_string())
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<TcpTransport> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(TcpTransport { stream, params: None, metrics: None, cap: MAX_FRAME })
    }

    /// Group parameters for encoding. Learned automatically from a setup
    /// reply.
    pub fn with_params(mut self, params: GroupParams) -> Self {
        self.params = Some(params);
        self
    }

    pub fn with_metrics(mut self, metrics: Arc<Metrics>) -> Self {
        self.metrics = Some(metrics);
        self
    }

    pub fn with_timeout(self, timeout: Option<Duration>) -> io::Result<Self> {
        self.stream.set_read_timeout(timeout)?;
        Ok(self)
    }
}

impl Transport for TcpTransport {
    fn call(&mut self, req: Request) -> Result<Response, ClientError> {
        let stage = req.stage();
        let msg = encode_request(self.params.as_ref(), &req).map_err(transport_err)?;
        let body = msg.encode();
        if body.len() > self.cap {
            return Err(transport_err(FrameError::TooLarge(body.len())));
        }
        let out = frame(&body);
        let start = Instant::now();
        self.stream.write_all(&out).map_err(transport_err)?;
        let reply = read_frame(&mut self.stream, self.cap).map_err(transport_err)?;
        let wait = start.elapsed();
        if let Some(m) = &self.metrics {
            m.record(stage, out.len(), reply.len() + 4, wait);
        }
        let msg = WireMessage::decode(&reply).map_err(transport_err)?;
        let resp = decode_response(self.params.as_ref(), stage, &msg).map_err(transport_err)?;
        if let Response::Setup(b) = &resp {
            self.params = Some(b.params()?);
        }
        Ok(resp)
    }
}
