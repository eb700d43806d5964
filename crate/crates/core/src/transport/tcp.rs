use std::collections::BTreeSet;
use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use super::frame::{decode, encode, WireMessage};
use crate::error::{Error, Result};

pub const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);

/// Framed, bidirectional message channel over one TCP stream.
#[derive(Debug)]
pub struct Connection {
    stream: TcpStream,
    buf: Vec<u8>,
    peer: String,
}

impl Connection {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_else(|_| "?".into());
        Ok(Self { stream, buf: Vec::new(), peer })
    }

    pub fn peer(&self) -> &str {
        &self.peer
    }

    pub fn set_timeout(&self, timeout: Option<Duration>) -> Result<()> {
        self.stream.set_read_timeout(timeout)?;
        Ok(())
    }

    pub fn send(&mut self, message: &WireMessage) -> Result<()> {
        let bytes = encode(message)?;
        self.stream.write_all(&bytes).map_err(|e| Error::Connection(format!("send to {}: {e}", self.peer)))
    }

    pub fn recv(&mut self) -> Result<WireMessage> {
        let mut chunk = [0u8; 64 * 1024];
        loop {
            if let Some((msg, used)) = decode(&self.buf)? {
                self.buf.drain(..used);
                return Ok(msg);
            }
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(Error::Connection(format!("{} disconnected", self.peer))),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    return Err(Error::Connection(format!("timed out waiting for {}", self.peer)))
                }
                Err(e) => return Err(Error::Connection(format!("receive from {}: {e}", self.peer))),
            }
        }
    }
}

fn resolve(address: &str) -> Result<SocketAddr> {
    address
        .to_socket_addrs()
        .map_err(|e| Error::Config(format!("bad address '{address}': {e}")))?
        .next()
        .ok_or_else(|| Error::Config(format!("address '{address}' resolves to nothing")))
}

/// Client side of the handshake: sends `HELLO` and waits for `CONFIG`.
///
/// Connection attempts are retried until `timeout` so that workers may start
/// before the server. Returns the channel and the configuration text.
pub fn connect(address: &str, client_id: u16, timeout: Duration) -> Result<(Connection, String)> {
    let addr = resolve(address)?;
    let deadline = Instant::now() + timeout;
    let stream = loop {
        match TcpStream::connect_timeout(&addr, timeout) {
            Ok(s) => break s,
            Err(e) if Instant::now() < deadline => {
                log::debug!("connect to {addr} failed ({e}), retrying");
                thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(Error::Connection(format!("connect to {addr}: {e}"))),
        }
    };
    let mut conn = Connection::new(stream)?;
    conn.set_timeout(Some(timeout))?;
    conn.send(&WireMessage::Hello { client_id })?;
    let text = match conn.recv()? {
        WireMessage::Config { text } => text,
        WireMessage::Bye => return Err(Error::Protocol(format!("server rejected client id {client_id}"))),
        other => return Err(Error::Protocol(format!("expected CONFIG, got {:?}", other.tag()))),
    };
    conn.set_timeout(None)?;
    Ok((conn, text))
}

/// Server side of the handshake for one connection: reads `HELLO` and checks
/// the id is new and below `max_clients`. Rejected peers receive `BYE`.
pub fn accept_hello(conn: &mut Connection, seen: &BTreeSet<u16>, max_clients: usize, timeout: Duration) -> Result<u16> {
    conn.set_timeout(Some(timeout))?;
    let id = match conn.recv()? {
        WireMessage::Hello { client_id } => client_id,
        other => {
            let _ = conn.send(&WireMessage::Bye);
            return Err(Error::Protocol(format!("expected HELLO, got {:?}", other.tag())));
        }
    };
    let problem = if seen.contains(&id) {
        Some(format!("duplicate client id {id}"))
    } else if id as usize >= max_clients {
        Some(format!("client id {id} outside [0, {max_clients})"))
    } else {
        None
    };
    if let Some(p) = problem {
        let _ = conn.send(&WireMessage::Bye);
        return Err(Error::Protocol(p));
    }
    conn.set_timeout(None)?;
    Ok(id)
}

/// Listening endpoint that gathers one connection per client id.
pub struct Server {
    listener: TcpListener,
}

impl Server {
    pub fn bind(address: &str) -> Result<Self> {
        let listener = TcpListener::bind(resolve(address)?)
            .map_err(|e| Error::Connection(format!("bind {address}: {e}")))?;
        Ok(Self { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts until ids `0..num_clients` have all said `HELLO`, answering
    /// each with `CONFIG { config_text }`, and returns the connections ordered
    /// by id. Peers that fail the handshake are dropped and logged; accepting
    /// continues until `timeout` elapses.
    pub fn accept_clients(&self, num_clients: usize, config_text: &str, timeout: Duration) -> Result<Vec<Connection>> {
        let deadline = Instant::now() + timeout;
        let mut seen = BTreeSet::new();
        let mut conns: Vec<(u16, Connection)> = Vec::with_capacity(num_clients);
        self.listener.set_nonblocking(true)?;
        while conns.len() < num_clients {
            match self.listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    let mut conn = Connection::new(stream)?;
                    match accept_hello(&mut conn, &seen, num_clients, HANDSHAKE_TIMEOUT) {
                        Ok(id) => {
                            conn.send(&WireMessage::Config { text: config_text.to_owned() })?;
                            seen.insert(id);
                            conns.push((id, conn));
                        }
                        Err(e) => log::warn!("rejected {}: {e}", conn.peer()),
                    }
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(Error::Connection(format!(
                            "only {} of {num_clients} clients connected before timeout",
                            conns.len()
                        )));
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }
        self.listener.set_nonblocking(false)?;
        conns.sort_by_key(|(id, _)| *id);
        Ok(conns.into_iter().map(|(_, c)| c).collect())
    }
}
