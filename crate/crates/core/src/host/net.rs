//! Socket transport for two-process runs: frames over TCP and a small
//! line-based RPC for the shared ledger.
//!
//! Ledger requests and replies are single lines:
//!
//! ```text
//! submit <tx hex>      -> ok <txid> | rejected <reason>
//! find <txid>          -> tx <tx hex> | none
//! height               -> height <n>
//! since <cursor>       -> txs [<tx hex> ...]
//! advance <blocks>     -> height <n>
//! digest               -> digest <hex>
//! dump                 -> dump <hex of the ledger snapshot text>
//! ```

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::crypto::{self, Digest};
use crate::ledger::{RejectReason, Transaction};

use super::frame::{Frame, FrameKind};
use super::ledger_client::{LedgerClient, SharedLedger};
use super::node::{NodeState, PartyNode};

/// Wall-clock milliseconds per logical tick on a real socket. Loopback
/// round trips are far shorter, so go-back-n never times out spuriously.
pub const TICK: Duration = Duration::from_millis(50);

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("peer closed the connection")]
    Closed,
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("ledger service: {0}")]
    Protocol(String),
}

/// A framed duplex connection. A reader thread decodes incoming frames into
/// a queue, so the party actor never blocks on a half-read frame.
pub struct FrameLink {
    writer: BufWriter<TcpStream>,
    incoming: Receiver<io::Result<Frame>>,
    closed: bool,
    sent: [u64; 3],
}

impl FrameLink {
    pub fn new(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || loop {
            match Frame::read_from(&mut reader) {
                Ok(Some(f)) => {
                    if tx.send(Ok(f)).is_err() {
                        return;
                    }
                }
                Ok(None) => return,
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            }
        });
        Ok(Self {
            writer: BufWriter::new(stream),
            incoming: rx,
            closed: false,
            sent: [0; 3],
        })
    }

    /// Connects to `addr`, retrying until `budget` runs out.
    pub fn connect(addr: impl ToSocketAddrs + Clone, budget: Duration) -> Result<Self, NetError> {
        let deadline = Instant::now() + budget;
        loop {
            match TcpStream::connect(addr.clone()) {
                Ok(s) => return Ok(Self::new(s)?),
                Err(e) if Instant::now() >= deadline => return Err(e.into()),
                Err(_) => thread::sleep(Duration::from_millis(20)),
            }
        }
    }

    pub fn accept(listener: &TcpListener) -> io::Result<Self> {
        let (s, _) = listener.accept()?;
        Self::new(s)
    }

    pub fn send(&mut self, frames: &[Frame]) -> io::Result<()> {
        if frames.is_empty() {
            return Ok(());
        }
        for f in frames {
            f.write_to(&mut self.writer)?;
            self.sent[f.kind as usize] += 1;
        }
        self.writer.flush()
    }

    /// Next frame, waiting at most `wait`. `Ok(None)` on timeout.
    pub fn recv(&mut self, wait: Duration) -> Result<Option<Frame>, NetError> {
        if self.closed {
            return Err(NetError::Closed);
        }
        match self.incoming.recv_timeout(wait) {
            Ok(Ok(f)) => Ok(Some(f)),
            Ok(Err(e)) => {
                self.closed = true;
                Err(e.into())
            }
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                self.closed = true;
                Err(NetError::Closed)
            }
        }
    }

    /// Frames of `kind` written so far.
    pub fn sent(&self, kind: FrameKind) -> u64 {
        self.sent[kind as usize]
    }

    /// Closes the sending half so the peer sees end of stream.
    pub fn shutdown(&mut self) {
        let _ = self.writer.flush();
        let _ = self.writer.get_ref().shutdown(std::net::Shutdown::Write);
    }
}

/// Drives a [`PartyNode`] over a [`FrameLink`] on a wall-clock-derived
/// logical clock.
pub struct Driver<L> {
    pub node: PartyNode<L>,
    pub link: FrameLink,
    started: Instant,
}

impl<L: LedgerClient> Driver<L> {
    pub fn new(node: PartyNode<L>, link: FrameLink) -> Self {
        Self {
            node,
            link,
            started: Instant::now(),
        }
    }

    pub fn now(&self) -> u64 {
        (self.started.elapsed().as_millis() / TICK.as_millis()) as u64
    }

    /// Sends whatever the node has queued, then handles at most one batch of
    /// incoming frames, waiting up to `wait` for the first.
    pub fn pump(&mut self, wait: Duration) -> Result<(), NetError> {
        let out = self.node.poll(self.now());
        self.link.send(&out)?;
        let Some(first) = self.link.recv(wait)? else {
            return Ok(());
        };
        self.node.handle_frame(first);
        while let Some(f) = self.link.recv(Duration::ZERO)? {
            self.node.handle_frame(f);
        }
        let out = self.node.poll(self.now());
        self.link.send(&out)?;
        Ok(())
    }

    /// Pumps until `done` holds or `budget` elapses.
    pub fn run_until(
        &mut self,
        budget: Duration,
        mut done: impl FnMut(&mut PartyNode<L>) -> bool,
    ) -> Result<(), NetError> {
        let deadline = Instant::now() + budget;
        while !done(&mut self.node) {
            if Instant::now() >= deadline {
                return Err(NetError::Timeout(budget));
            }
            self.pump(Duration::from_millis(2))?;
        }
        Ok(())
    }

    /// Runs the handshake. Returns the node's terminal state on failure.
    pub fn establish(&mut self, budget: Duration) -> Result<(), EstablishFailure> {
        self.node.start();
        self.run_until(budget, |n| {
            n.is_open() || matches!(n.state(), NodeState::Failed(_))
        })?;
        match self.node.state() {
            NodeState::Failed(e) => Err(EstablishFailure::Protocol(e.clone())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EstablishFailure {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("handshake failed: {0}")]
    Protocol(super::node::EstablishError),
}

/// Serves `ledger` to any number of clients, one thread per connection.
pub fn serve_ledger(listener: TcpListener, ledger: SharedLedger) -> JoinHandle<()> {
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let ledger = ledger.clone();
            thread::spawn(move || {
                let _ = serve_client(stream, ledger);
            });
        }
    })
}

fn serve_client(stream: TcpStream, ledger: SharedLedger) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    for line in reader.lines() {
        let reply = answer(&line?, &ledger);
        writeln!(writer, "{reply}")?;
        writer.flush()?;
    }
    Ok(())
}

fn answer(line: &str, ledger: &SharedLedger) -> String {
    let mut parts = line.split_whitespace();
    let cmd = parts.next().unwrap_or("");
    let arg = parts.next();
    let mut l = ledger.lock();
    match (cmd, arg) {
        ("submit", Some(h)) => match decode_tx(h) {
            Some(tx) => match l.submit(&tx) {
                Ok(id) => format!("ok {id}"),
                Err(r) => format!("rejected {}", r.name()),
            },
            None => "error bad transaction".into(),
        },
        ("find", Some(h)) => match Digest::from_hex(h).and_then(|d| l.find_by_hash(&d).cloned()) {
            Some(tx) => format!("tx {}", hex::encode(tx.to_bytes())),
            None => "none".into(),
        },
        ("height", None) => format!("height {}", l.height()),
        ("advance", Some(n)) => match n.parse() {
            Ok(n) => format!("height {}", l.advance_height(n)),
            Err(_) => "error bad count".into(),
        },
        ("since", Some(n)) => match n.parse::<usize>() {
            Ok(n) => {
                let mut out = String::from("txs");
                for tx in l.confirmed().get(n..).unwrap_or_default() {
                    out.push(' ');
                    out.push_str(&hex::encode(tx.to_bytes()));
                }
                out
            }
            Err(_) => "error bad cursor".into(),
        },
        ("digest", None) => format!("digest {}", crypto::hash(l.dump().as_bytes())),
        ("dump", None) => format!("dump {}", hex::encode(l.dump())),
        _ => format!("error unknown request {line:?}"),
    }
}

fn decode_tx(h: &str) -> Option<Transaction> {
    Transaction::from_bytes(&hex::decode(h).ok()?).ok()
}

/// Ledger client speaking the RPC above. A failed connection panics the
/// caller's actor: a party without its ledger cannot act safely.
pub struct RemoteLedger {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl RemoteLedger {
    pub fn connect(addr: impl ToSocketAddrs + Clone, budget: Duration) -> Result<Self, NetError> {
        let deadline = Instant::now() + budget;
        let stream = loop {
            match TcpStream::connect(addr.clone()) {
                Ok(s) => break s,
                Err(e) if Instant::now() >= deadline => return Err(e.into()),
                Err(_) => thread::sleep(Duration::from_millis(20)),
            }
        };
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }

    pub fn request(&mut self, line: &str) -> Result<String, NetError> {
        writeln!(self.writer, "{line}")?;
        self.writer.flush()?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(NetError::Closed);
        }
        let reply = reply.trim_end().to_string();
        if let Some(msg) = reply.strip_prefix("error ") {
            return Err(NetError::Protocol(msg.to_string()));
        }
        Ok(reply)
    }

    fn call(&mut self, line: &str) -> String {
        self.request(line)
            .unwrap_or_else(|e| panic!("ledger service unavailable: {e}"))
    }

    pub fn digest(&mut self) -> Result<Digest, NetError> {
        let reply = self.request("digest")?;
        reply
            .strip_prefix("digest ")
            .and_then(Digest::from_hex)
            .ok_or(NetError::Protocol(reply))
    }

    /// The service's ledger in [`Ledger::dump`](crate::ledger::Ledger::dump) format.
    pub fn dump(&mut self) -> Result<String, NetError> {
        let reply = self.request("dump")?;
        reply
            .strip_prefix("dump ")
            .and_then(|h| String::from_utf8(hex::decode(h).ok()?).ok())
            .ok_or(NetError::Protocol(reply))
    }

    pub fn advance(&mut self, blocks: u64) -> Result<u64, NetError> {
        let reply = self.request(&format!("advance {blocks}"))?;
        reply
            .strip_prefix("height ")
            .and_then(|n| n.parse().ok())
            .ok_or(NetError::Protocol(reply))
    }
}

impl LedgerClient for RemoteLedger {
    fn submit(&mut self, tx: &Transaction) -> Result<Digest, RejectReason> {
        let reply = self.call(&format!("submit {}", hex::encode(tx.to_bytes())));
        if let Some(id) = reply.strip_prefix("ok ").and_then(Digest::from_hex) {
            return Ok(id);
        }
        match reply
            .strip_prefix("rejected ")
            .and_then(RejectReason::from_name)
        {
            Some(r) => Err(r),
            None => panic!("ledger service: unexpected reply {reply:?}"),
        }
    }

    fn find_by_hash(&mut self, txid: &Digest) -> Option<Transaction> {
        let reply = self.call(&format!("find {txid}"));
        reply.strip_prefix("tx ").and_then(decode_tx)
    }

    fn height(&mut self) -> u64 {
        let reply = self.call("height");
        reply
            .strip_prefix("height ")
            .and_then(|n| n.parse().ok())
            .unwrap_or_else(|| panic!("ledger service: unexpected reply {reply:?}"))
    }

    fn confirmed_since(&mut self, cursor: usize) -> Vec<Transaction> {
        let reply = self.call(&format!("since {cursor}"));
        let body = reply
            .strip_prefix("txs")
            .unwrap_or_else(|| panic!("ledger service: unexpected reply {reply:?}"));
        body.split_whitespace()
            .map(|h| decode_tx(h).expect("ledger service sent a valid transaction"))
            .collect()
    }
}
