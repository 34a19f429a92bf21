//! How the controller writes to agent sessions.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tracing::{debug, info, warn};

use super::{Ric, SessionId};

pub trait SessionTransport: Send + Sync {
    fn send(&self, session: SessionId, bytes: Vec<u8>);
    fn close(&self, session: SessionId);
}

/// Collects outbound bytes per session for a caller to pump.
#[derive(Debug, Default)]
pub struct MemoryTransport {
    queues: Mutex<HashMap<SessionId, VecDeque<Vec<u8>>>>,
    closed: Mutex<HashSet<SessionId>>,
}

impl MemoryTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Everything sent to `session` since the last call, in order.
    pub fn take(&self, session: SessionId) -> Vec<Vec<u8>> {
        self.queues
            .lock()
            .unwrap()
            .get_mut(&session)
            .map(|q| q.drain(..).collect())
            .unwrap_or_default()
    }

    pub fn is_closed(&self, session: SessionId) -> bool {
        self.closed.lock().unwrap().contains(&session)
    }
}

impl SessionTransport for MemoryTransport {
    fn send(&self, session: SessionId, bytes: Vec<u8>) {
        self.queues
            .lock()
            .unwrap()
            .entry(session)
            .or_default()
            .push_back(bytes);
    }

    fn close(&self, session: SessionId) {
        self.closed.lock().unwrap().insert(session);
    }
}

/// Writes to TCP streams registered per session.
#[derive(Debug, Default)]
pub struct TcpTransport {
    streams: Mutex<HashMap<SessionId, TcpStream>>,
}

impl TcpTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, session: SessionId, stream: TcpStream) {
        self.streams.lock().unwrap().insert(session, stream);
    }

    fn forget(&self, session: SessionId) {
        self.streams.lock().unwrap().remove(&session);
    }
}

impl SessionTransport for TcpTransport {
    fn send(&self, session: SessionId, bytes: Vec<u8>) {
        let mut streams = self.streams.lock().unwrap();
        if let Some(stream) = streams.get_mut(&session) {
            if let Err(e) = stream.write_all(&bytes) {
                warn!(session, error = %e, "write to agent failed");
            }
        }
    }

    fn close(&self, session: SessionId) {
        if let Some(stream) = self.streams.lock().unwrap().remove(&session) {
            let _ = stream.shutdown(Shutdown::Both);
        }
    }
}

/// Accept agent connections on `listener` until `stop` is raised.
///
/// Each session gets a reader thread feeding [`Ric::on_bytes`]; a timer
/// thread expires overdue controls every 10 ms.
pub fn serve_tcp(
    ric: Ric,
    transport: Arc<TcpTransport>,
    listener: TcpListener,
    stop: Arc<AtomicBool>,
) -> std::io::Result<JoinHandle<()>> {
    listener.set_nonblocking(true)?;
    let timer_ric = ric.clone();
    let timer_stop = stop.clone();
    thread::Builder::new()
        .name("ric-timer".into())
        .spawn(move || {
            while !timer_stop.load(Ordering::Relaxed) {
                timer_ric.poll_timeouts();
                thread::sleep(Duration::from_millis(10));
            }
        })?;
    thread::Builder::new().name("ric-accept".into()).spawn(move || {
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    let _ = stream.set_nodelay(true);
                    let _ = stream.set_nonblocking(false);
                    let Ok(writer) = stream.try_clone() else { continue };
                    let session = ric.on_connect();
                    transport.register(session, writer);
                    info!(session, %peer, "agent connected");
                    let ric = ric.clone();
                    let transport = transport.clone();
                    let stop = stop.clone();
                    let _ = thread::Builder::new()
                        .name(format!("ric-session-{session}"))
                        .spawn(move || session_reader(ric, transport, session, stream, stop));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => {
                    warn!(error = %e, "accept failed");
                    thread::sleep(Duration::from_millis(50));
                }
            }
        }
    })
}

fn session_reader(
    ric: Ric,
    transport: Arc<TcpTransport>,
    session: SessionId,
    mut stream: TcpStream,
    stop: Arc<AtomicBool>,
) {
    let _ = stream.set_read_timeout(Some(Duration::from_millis(50)));
    let mut buf = [0u8; 4096];
    loop {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                if !ric.on_bytes(session, &buf[..n]) {
                    break;
                }
            }
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) => {}
            Err(e) => {
                debug!(session, error = %e, "session read error");
                break;
            }
        }
    }
    ric.on_disconnect(session);
    transport.forget(session);
}
