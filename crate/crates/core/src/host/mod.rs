//! Untrusted party hosts: handshake driving, reliable transport and ledger
//! interaction around an [`Enclave`](crate::enclave::Enclave).
//!
//! The handshake framing is this crate's own. Each side sends an
//! attestation frame; the broadcast side sends its encrypted secrets after
//! accepting the peer, the hash side answers with its own after importing,
//! and the broadcast side then publishes the setup transaction.

pub mod frame;
pub mod gbn;
mod ledger_client;
pub mod net;
mod node;

pub use frame::{Frame, FrameKind, HandshakeMsg};
pub use ledger_client::{LedgerClient, SharedLedger};
pub use node::{
    EstablishError, HostError, NodeConfig, NodeEvent, NodeState, NodeStats, PartyNode, Submission,
};

/// Ticks [`LocalLink::establish`] allows before reporting a timeout.
pub const ESTABLISH_BUDGET: u64 = 1024;

/// A perfect in-memory link between two nodes on a shared logical clock.
/// Frames cross as bytes so the wire format is exercised.
#[derive(Debug, Default)]
pub struct LocalLink {
    pub now: u64,
    pub frames_carried: u64,
}

impl LocalLink {
    pub fn new() -> Self {
        Self::default()
    }

    /// Moves everything both nodes want to send at the current tick and
    /// returns the number of frames carried.
    pub fn round<L: LedgerClient>(&mut self, a: &mut PartyNode<L>, b: &mut PartyNode<L>) -> usize {
        let from_a = a.poll(self.now);
        let from_b = b.poll(self.now);
        let n = from_a.len() + from_b.len();
        for f in from_a {
            b.handle_frame(Frame::from_bytes(&f.to_bytes()).expect("own encoding"));
        }
        for f in from_b {
            a.handle_frame(Frame::from_bytes(&f.to_bytes()).expect("own encoding"));
        }
        self.frames_carried += n as u64;
        n
    }

    /// Runs rounds at the current tick until neither side has anything to
    /// send, then advances the clock.
    pub fn flush<L: LedgerClient>(&mut self, a: &mut PartyNode<L>, b: &mut PartyNode<L>) {
        while self.round(a, b) > 0 {}
        self.now += 1;
    }

    /// Runs the handshake to completion. `a` and `b` may hold either role.
    pub fn establish<L: LedgerClient>(
        &mut self,
        a: &mut PartyNode<L>,
        b: &mut PartyNode<L>,
    ) -> Result<(), EstablishError> {
        a.start();
        b.start();
        let deadline = self.now + ESTABLISH_BUDGET;
        while self.now < deadline {
            self.flush(a, b);
            for n in [&*a, &*b] {
                if let NodeState::Failed(e) = n.state() {
                    return Err(e.clone());
                }
            }
            if a.is_open() && b.is_open() {
                return Ok(());
            }
        }
        Err(EstablishError::Timeout)
    }
}

#[cfg(test)]
mod tests;
