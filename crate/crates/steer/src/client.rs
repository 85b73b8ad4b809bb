//! Blocking clients for scripts and tests: one over an in-process manager,
//! one over the TCP transport. Both set request ids and keep unrelated
//! messages (stream updates, stop notices) in an event queue.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::manager::SessionManager;
use crate::protocol::{decode_message, encode_request, Command, Message, Request};
use crate::session::Outbox;

#[derive(Debug)]
pub enum ClientError {
    Timeout,
    Disconnected,
    Io(std::io::Error),
    Decode(String),
}

impl std::fmt::Display for ClientError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClientError::Timeout => write!(f, "timed out waiting for the service"),
            ClientError::Disconnected => write!(f, "service disconnected"),
            ClientError::Io(e) => write!(f, "{e}"),
            ClientError::Decode(e) => write!(f, "undecodable message: {e}"),
        }
    }
}

impl std::error::Error for ClientError {}

trait Transport {
    fn send(&mut self, request: Request) -> Result<(), ClientError>;
    fn receive(&mut self, timeout: Duration) -> Result<Message, ClientError>;
}

struct Correlator<T> {
    transport: T,
    next_id: u64,
    events: VecDeque<Message>,
    timeout: Duration,
}

impl<T: Transport> Correlator<T> {
    fn request(&mut self, command: Command) -> Result<Message, ClientError> {
        self.next_id += 1;
        let id = self.next_id;
        self.transport.send(Request { id: Some(id), command })?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let message = self.transport.receive(left)?;
            if message.id() == Some(id) {
                return Ok(message);
            }
            self.events.push_back(message);
        }
    }

    fn next_event(&mut self, timeout: Duration) -> Result<Message, ClientError> {
        match self.events.pop_front() {
            Some(m) => Ok(m),
            None => self.transport.receive(timeout),
        }
    }
}

struct Local {
    manager: Arc<SessionManager>,
    outbox: Outbox,
    inbox: Receiver<Message>,
}

impl Transport for Local {
    fn send(&mut self, request: Request) -> Result<(), ClientError> {
        self.manager.handle(request, &self.outbox);
        Ok(())
    }

    fn receive(&mut self, timeout: Duration) -> Result<Message, ClientError> {
        self.inbox.recv_timeout(timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => ClientError::Timeout,
            RecvTimeoutError::Disconnected => ClientError::Disconnected,
        })
    }
}

/// Talks to a manager in the same process, skipping serialization.
pub struct LocalClient(Correlator<Local>);

impl LocalClient {
    pub fn new(manager: Arc<SessionManager>) -> Self {
        let (outbox, inbox) = mpsc::channel();
        Self(Correlator {
            transport: Local { manager, outbox, inbox },
            next_id: 0,
            events: VecDeque::new(),
            timeout: Duration::from_secs(60),
        })
    }

    /// Sends a command and waits for its reply.
    pub fn request(&mut self, command: Command) -> Result<Message, ClientError> {
        self.0.request(command)
    }

    /// The next message that was not a reply.
    pub fn next_event(&mut self, timeout: Duration) -> Result<Message, ClientError> {
        self.0.next_event(timeout)
    }
}

struct Tcp {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

impl Transport for Tcp {
    fn send(&mut self, request: Request) -> Result<(), ClientError> {
        let mut line = encode_request(&request);
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(ClientError::Io)
    }

    fn receive(&mut self, timeout: Duration) -> Result<Message, ClientError> {
        self.reader
            .get_ref()
            .set_read_timeout(Some(timeout.max(Duration::from_millis(1))))
            .map_err(ClientError::Io)?;
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => Err(ClientError::Disconnected),
            Ok(_) => decode_message(line.trim_end()).map_err(ClientError::Decode),
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                Err(ClientError::Timeout)
            }
            Err(e) => Err(ClientError::Io(e)),
        }
    }
}

/// Line-delimited JSON over TCP.
pub struct TcpClient(Correlator<Tcp>);

impl TcpClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr).map_err(ClientError::Io)?;
        let reader = BufReader::new(stream.try_clone().map_err(ClientError::Io)?);
        Ok(Self(Correlator {
            transport: Tcp { writer: stream, reader },
            next_id: 0,
            events: VecDeque::new(),
            timeout: Duration::from_secs(60),
        }))
    }

    pub fn request(&mut self, command: Command) -> Result<Message, ClientError> {
        self.0.request(command)
    }

    pub fn next_event(&mut self, timeout: Duration) -> Result<Message, ClientError> {
        self.0.next_event(timeout)
    }

    /// Writes a raw line, for exercising the decoder.
    pub fn send_raw(&mut self, line: &str) -> Result<(), ClientError> {
        let t = &mut self.0.transport;
        t.writer.write_all(line.as_bytes()).map_err(ClientError::Io)?;
        t.writer.write_all(b"\n").map_err(ClientError::Io)
    }
}
