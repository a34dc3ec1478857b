use std::fmt;

use crate::crypto::{Ciphertext, Digest};
use crate::enclave::{self, Enclave, EnclaveError, ImportOutcome, Role, Status};
use crate::ledger::{self, RejectReason, Satoshi, Transaction};

use super::frame::{Frame, FrameKind, HandshakeMsg};
use super::gbn::{Arrival, GbnReceiver, GbnSender, DEFAULT_RTO, DEFAULT_WINDOW};
use super::ledger_client::LedgerClient;

#[derive(Clone, Debug)]
pub struct NodeConfig {
    pub role: Role,
    pub expected_measurement: Digest,
    pub window: usize,
    pub rto: u64,
    /// Ticks the hash side waits for the setup transaction to confirm.
    pub setup_timeout: u64,
    /// Broadcast a mauled copy of the setup transaction (adversarial host).
    pub maul_setup: bool,
}

impl NodeConfig {
    pub fn new(role: Role) -> Self {
        Self {
            role,
            expected_measurement: enclave::expected_measurement(),
            window: DEFAULT_WINDOW,
            rto: DEFAULT_RTO,
            setup_timeout: 256,
            maul_setup: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EstablishError {
    #[error("peer attestation failed")]
    AttestationFailed,
    #[error("enclave refused the handshake: {0}")]
    Enclave(EnclaveError),
    #[error("setup transaction did not confirm in time")]
    Timeout,
    #[error("setup transaction was mauled to {observed}; immediate refund {}", verdict_str(.recovery))]
    MaulDetected {
        observed: Digest,
        recovery: Result<Digest, RejectReason>,
    },
    #[error("ledger rejected the setup transaction: {0}")]
    SetupRejected(RejectReason),
}

fn verdict_str(v: &Result<Digest, RejectReason>) -> String {
    match v {
        Ok(id) => format!("accepted as {id}"),
        Err(r) => format!("rejected ({r})"),
    }
}

impl From<EnclaveError> for EstablishError {
    fn from(e: EnclaveError) -> Self {
        match e {
            EnclaveError::AttestationFailed => EstablishError::AttestationFailed,
            e => EstablishError::Enclave(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum HostError {
    #[error("channel is not open")]
    ChannelClosed,
    #[error("no refund transaction held")]
    NoRefund,
    #[error(transparent)]
    Enclave(#[from] EnclaveError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeState {
    Handshaking,
    /// Hash side only: secrets exchanged, waiting for the setup on chain.
    AwaitingSetup,
    Open,
    Closed,
    Failed(EstablishError),
}

impl NodeState {
    fn is_terminal(&self) -> bool {
        matches!(self, NodeState::Closed | NodeState::Failed(_))
    }
}

/// A transaction handed to the ledger and what the ledger said.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submission {
    pub tx: Transaction,
    pub verdict: Result<Digest, RejectReason>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeEvent {
    PeerAccepted,
    SecretsSent,
    SetupBroadcast {
        txid: Digest,
        verdict: Result<Digest, RejectReason>,
    },
    SetupSeen {
        txid: Digest,
    },
    Opened,
    Failed(EstablishError),
    PaymentSent {
        counter: u64,
        amount: Satoshi,
    },
    PaymentAccepted {
        amount: Satoshi,
        balance: Satoshi,
    },
    PaymentRejected {
        seq: u64,
        error: EnclaveError,
    },
    Submitted {
        what: &'static str,
        verdict: Result<Digest, RejectReason>,
    },
}

impl fmt::Display for NodeEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn verdict(v: &Result<Digest, RejectReason>) -> String {
            match v {
                Ok(id) => format!("accepted txid={id}"),
                Err(r) => format!("rejected reason={}", r.name()),
            }
        }
        match self {
            NodeEvent::PeerAccepted => write!(f, "peer-accepted"),
            NodeEvent::SecretsSent => write!(f, "secrets-sent"),
            NodeEvent::SetupBroadcast { txid, verdict: v } => {
                write!(f, "setup-broadcast id={txid} {}", verdict(v))
            }
            NodeEvent::SetupSeen { txid } => write!(f, "setup-seen txid={txid}"),
            NodeEvent::Opened => write!(f, "opened"),
            NodeEvent::Failed(e) => write!(f, "failed error=\"{e}\""),
            NodeEvent::PaymentSent { counter, amount } => {
                write!(f, "pay counter={counter} amount={amount}")
            }
            NodeEvent::PaymentAccepted { amount, balance } => {
                write!(f, "recv amount={amount} balance={balance}")
            }
            NodeEvent::PaymentRejected { seq, error } => {
                write!(f, "recv-rejected seq={seq} error=\"{error}\"")
            }
            NodeEvent::Submitted { what, verdict: v } => write!(f, "submit {what} {}", verdict(v)),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub payments_sent: u64,
    pub amount_sent: Satoshi,
    pub payments_received: u64,
    pub amount_received: Satoshi,
    pub payments_rejected: u64,
    pub frames_out: u64,
}

/// The untrusted host of one party: owns the enclave, a go-back-n endpoint
/// and a ledger connection. Frames go in through [`PartyNode::handle_frame`]
/// and come out of [`PartyNode::poll`]; the node never touches a socket.
pub struct PartyNode<L> {
    config: NodeConfig,
    enclave: Enclave,
    ledger: L,
    sender: GbnSender,
    receiver: GbnReceiver,
    pending_ack: bool,
    state: NodeState,
    started: bool,
    now: u64,
    awaiting_since: u64,
    chain_cursor: usize,
    setup_txid: Option<Digest>,
    refund_tx: Option<Transaction>,
    events: Vec<NodeEvent>,
    stats: NodeStats,
}

impl<L: LedgerClient> PartyNode<L> {
    /// `enclave` must already be provisioned for `config.role`.
    pub fn new(enclave: Enclave, ledger: L, config: NodeConfig) -> Self {
        Self {
            sender: GbnSender::new(config.window, config.rto),
            config,
            enclave,
            ledger,
            receiver: GbnReceiver::default(),
            pending_ack: false,
            state: NodeState::Handshaking,
            started: false,
            now: 0,
            awaiting_since: 0,
            chain_cursor: 0,
            setup_txid: None,
            refund_tx: None,
            events: Vec::new(),
            stats: NodeStats::default(),
        }
    }

    pub fn role(&self) -> Role {
        self.config.role
    }

    pub fn state(&self) -> &NodeState {
        &self.state
    }

    pub fn is_open(&self) -> bool {
        self.state == NodeState::Open
    }

    pub fn status(&self) -> Status {
        self.enclave.status()
    }

    pub fn enclave(&self) -> &Enclave {
        &self.enclave
    }

    pub fn ledger(&mut self) -> &mut L {
        &mut self.ledger
    }

    pub fn stats(&self) -> NodeStats {
        self.stats
    }

    pub fn sender(&self) -> &GbnSender {
        &self.sender
    }

    /// Makes this host publish a mauled setup transaction, as a malicious
    /// broadcast side would. Only effective before the setup is published.
    pub fn set_maul_setup(&mut self, on: bool) {
        self.config.maul_setup = on;
    }

    /// Sequence number the receiving half will deliver next.
    pub fn next_expected_seq(&self) -> u64 {
        self.receiver.expected()
    }

    pub fn refund_tx(&self) -> Option<&Transaction> {
        self.refund_tx.as_ref()
    }

    /// The setup transaction id both enclaves derived, once known.
    pub fn setup_txid(&self) -> Option<Digest> {
        self.setup_txid
    }

    pub fn drain_events(&mut self) -> Vec<NodeEvent> {
        std::mem::take(&mut self.events)
    }

    /// True when nothing is waiting for an ack or to be sent.
    pub fn is_quiet(&self) -> bool {
        self.sender.is_idle() && !self.pending_ack
    }

    /// Sends this party's attestation. Idempotent.
    pub fn start(&mut self) {
        if self.started || self.state.is_terminal() {
            return;
        }
        match self.enclave.get_attestation() {
            Ok(att) => {
                self.started = true;
                self.sender.push(
                    FrameKind::Handshake,
                    HandshakeMsg::Attestation(att).to_bytes(),
                );
            }
            Err(e) => self.fail(e.into()),
        }
    }

    /// Frames to transmit at logical time `now`. Also where the hash side
    /// watches the ledger while waiting for the setup transaction.
    pub fn poll(&mut self, now: u64) -> Vec<Frame> {
        self.now = now;
        if self.state == NodeState::AwaitingSetup {
            self.watch_ledger();
        }
        let mut out = Vec::new();
        if self.pending_ack {
            self.pending_ack = false;
            out.push(Frame::ack(self.receiver.expected()));
        }
        out.extend(self.sender.poll(now));
        self.stats.frames_out += out.len() as u64;
        out
    }

    pub fn handle_frame(&mut self, frame: Frame) {
        if frame.kind == FrameKind::Ack {
            self.sender.on_ack(frame.seq, self.now);
            return;
        }
        self.pending_ack = true;
        if self.receiver.classify(frame.seq) != Arrival::InOrder {
            return;
        }
        if self.consume(&frame) {
            self.receiver.advance();
        }
    }

    /// Processes an in-order data frame. Returns false to leave it
    /// undelivered so that the genuine retransmission is processed later.
    fn consume(&mut self, frame: &Frame) -> bool {
        if self.state.is_terminal() {
            return true;
        }
        match frame.kind {
            FrameKind::Handshake => match HandshakeMsg::from_bytes(&frame.payload) {
                Ok(msg) => self.on_handshake(msg),
                Err(_) => false,
            },
            FrameKind::Payment => {
                if self.state != NodeState::Open {
                    return false;
                }
                self.on_payment(frame)
            }
            FrameKind::Ack => unreachable!(),
        }
    }

    fn on_payment(&mut self, frame: &Frame) -> bool {
        let before = self.enclave.status().balance_mine;
        let result = Ciphertext::from_bytes(&frame.payload)
            .map_err(|_| EnclaveError::Malformed)
            .and_then(|ct| self.enclave.receive_payment(&ct));
        match result {
            Ok(balance) => {
                let amount = balance - before;
                self.stats.payments_received += 1;
                self.stats.amount_received += amount;
                self.events
                    .push(NodeEvent::PaymentAccepted { amount, balance });
                true
            }
            Err(error) => {
                self.stats.payments_rejected += 1;
                self.events.push(NodeEvent::PaymentRejected {
                    seq: frame.seq,
                    error,
                });
                false
            }
        }
    }

    fn on_handshake(&mut self, msg: HandshakeMsg) -> bool {
        // Genuine handshake frames all precede the first payment, so one
        // showing up later in sequence is forged.
        if self.state != NodeState::Handshaking {
            return false;
        }
        match msg {
            HandshakeMsg::Attestation(att) => {
                self.start();
                if self.state.is_terminal() {
                    return true;
                }
                if let Err(e) = self.enclave.accept_peer(
                    &att.quote,
                    att.enc_pk,
                    att.sign_pk,
                    &self.config.expected_measurement,
                ) {
                    self.fail(e.into());
                    return true;
                }
                self.events.push(NodeEvent::PeerAccepted);
                if self.config.role == Role::BroadcastSide {
                    self.send_secrets();
                }
                true
            }
            HandshakeMsg::Secrets(ct) => {
                match self.enclave.import_secrets(&ct) {
                    // Corruption in transit; wait for the retransmission.
                    Err(EnclaveError::DecryptFailed) => return false,
                    Err(e) => self.fail(e.into()),
                    Ok(ImportOutcome::HashSide {
                        setup_hash,
                        refund_tx,
                    }) => {
                        self.setup_txid = Some(setup_hash);
                        self.refund_tx = Some(refund_tx);
                        self.send_secrets();
                        if !self.state.is_terminal() {
                            self.state = NodeState::AwaitingSetup;
                            self.awaiting_since = self.now;
                        }
                    }
                    Ok(ImportOutcome::BroadcastSide {
                        setup_tx,
                        refund_tx,
                    }) => {
                        self.setup_txid = Some(setup_tx.txid());
                        self.refund_tx = Some(refund_tx);
                        self.broadcast_setup(setup_tx);
                    }
                }
                true
            }
        }
    }

    fn send_secrets(&mut self) {
        match self.enclave.export_secrets() {
            Ok(ct) => {
                self.sender
                    .push(FrameKind::Handshake, HandshakeMsg::Secrets(ct).to_bytes());
                self.events.push(NodeEvent::SecretsSent);
            }
            Err(e) => self.fail(e.into()),
        }
    }

    fn broadcast_setup(&mut self, setup_tx: Transaction) {
        let tx = if self.config.maul_setup {
            ledger::maul(&setup_tx)
        } else {
            setup_tx
        };
        let verdict = self.ledger.submit(&tx);
        self.events.push(NodeEvent::SetupBroadcast {
            txid: tx.txid(),
            verdict,
        });
        match verdict {
            Ok(_) => self.open(),
            Err(r) => self.fail(EstablishError::SetupRejected(r)),
        }
    }

    fn watch_ledger(&mut self) {
        let setup_txid = self.setup_txid.expect("awaiting setup");
        if self.ledger.find_by_hash(&setup_txid).is_some() {
            self.events.push(NodeEvent::SetupSeen { txid: setup_txid });
            self.open();
            return;
        }
        let channel = self.enclave.channel_condition();
        let fresh = self.ledger.confirmed_since(self.chain_cursor);
        self.chain_cursor += fresh.len();
        for tx in fresh {
            let funds_channel = tx
                .outputs
                .first()
                .is_some_and(|o| Some(&o.condition) == channel.as_ref());
            if !funds_channel {
                continue;
            }
            if let Ok(refund) = self.enclave.reissue_refund(&tx) {
                let recovery = self.ledger.submit(&refund);
                self.events.push(NodeEvent::Submitted {
                    what: "immediate-refund",
                    verdict: recovery,
                });
                self.refund_tx = Some(refund);
                self.fail(EstablishError::MaulDetected {
                    observed: tx.txid(),
                    recovery,
                });
                return;
            }
        }
        if self.now.saturating_sub(self.awaiting_since) >= self.config.setup_timeout {
            self.fail(EstablishError::Timeout);
        }
    }

    fn open(&mut self) {
        self.state = NodeState::Open;
        self.events.push(NodeEvent::Opened);
    }

    fn fail(&mut self, e: EstablishError) {
        self.events.push(NodeEvent::Failed(e.clone()));
        self.state = NodeState::Failed(e);
    }

    /// Debits `amount` in the enclave and queues the authorization for the
    /// peer. Returns the frame's sequence number. The debit stands whether
    /// or not the frame is ever delivered.
    pub fn pay(&mut self, amount: Satoshi) -> Result<u64, HostError> {
        if self.state != NodeState::Open {
            return Err(HostError::ChannelClosed);
        }
        let ct = self.enclave.pay(amount)?;
        let seq = self.sender.push(FrameKind::Payment, ct.to_bytes());
        self.stats.payments_sent += 1;
        self.stats.amount_sent += amount;
        self.events.push(NodeEvent::PaymentSent {
            counter: self.enclave.status().send_counter,
            amount,
        });
        Ok(seq)
    }

    /// Asks the enclave for the settlement transaction and broadcasts it.
    /// A rejection (the peer settled first, or a refund confirmed) is
    /// reported in the verdict rather than as an error.
    pub fn terminate(&mut self) -> Result<Submission, HostError> {
        let tx = self.enclave.settle().map_err(|e| match e {
            EnclaveError::WrongPhase(_) => HostError::ChannelClosed,
            e => HostError::Enclave(e),
        })?;
        let verdict = self.ledger.submit(&tx);
        self.events.push(NodeEvent::Submitted {
            what: "settlement",
            verdict,
        });
        self.state = NodeState::Closed;
        Ok(Submission { tx, verdict })
    }

    /// Broadcasts the time-locked refund. The ledger decides whether it is
    /// valid yet and whether the channel output is still unspent.
    pub fn refund_after_timeout(&mut self) -> Result<Submission, HostError> {
        let tx = self.refund_tx.clone().ok_or(HostError::NoRefund)?;
        let verdict = self.ledger.submit(&tx);
        self.events.push(NodeEvent::Submitted {
            what: "refund",
            verdict,
        });
        if verdict.is_ok() {
            self.state = NodeState::Closed;
        }
        Ok(Submission { tx, verdict })
    }
}

impl<L> fmt::Debug for PartyNode<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartyNode")
            .field("role", &self.config.role)
            .field("state", &self.state)
            .field("enclave", &self.enclave)
            .finish_non_exhaustive()
    }
}
