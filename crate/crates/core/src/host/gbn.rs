//! Go-back-n over an unreliable, reordering link.
//!
//! Sequence numbers start at 0 in each direction. Acks are cumulative: an
//! ack carrying `n` confirms every frame below `n`. Timers run on the
//! caller's logical clock.
//!
//! A timeout resends the whole window. If the next timeout passes without
//! progress, only the base frame is resent until an ack moves the window;
//! this breaks lock-step with periodic loss patterns.

use std::collections::VecDeque;

use super::frame::{Frame, FrameKind};

pub const DEFAULT_WINDOW: usize = 32;
pub const DEFAULT_RTO: u64 = 4;

#[derive(Debug)]
pub struct GbnSender {
    window: usize,
    rto: u64,
    next_seq: u64,
    in_flight: VecDeque<Frame>,
    backlog: VecDeque<Frame>,
    timer: Option<u64>,
    stalled: bool,
    transmissions: u64,
    retransmissions: u64,
}

impl Default for GbnSender {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW, DEFAULT_RTO)
    }
}

impl GbnSender {
    pub fn new(window: usize, rto: u64) -> Self {
        assert!(window > 0, "window must be positive");
        Self {
            window,
            rto: rto.max(1),
            next_seq: 0,
            in_flight: VecDeque::new(),
            backlog: VecDeque::new(),
            timer: None,
            stalled: false,
            transmissions: 0,
            retransmissions: 0,
        }
    }

    /// Queues a payload and returns its sequence number.
    pub fn push(&mut self, kind: FrameKind, payload: Vec<u8>) -> u64 {
        debug_assert_ne!(kind, FrameKind::Ack);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.backlog.push_back(Frame { kind, seq, payload });
        seq
    }

    /// Frames to put on the wire at logical time `now`: retransmissions if
    /// the timer expired, then any newly admitted frames.
    pub fn poll(&mut self, now: u64) -> Vec<Frame> {
        let mut out = Vec::new();
        if let Some(started) = self.timer {
            if now >= started + self.rto && !self.in_flight.is_empty() {
                let burst = if self.stalled {
                    1
                } else {
                    self.in_flight.len()
                };
                out.extend(self.in_flight.iter().take(burst).cloned());
                self.retransmissions += burst as u64;
                self.stalled = true;
                self.timer = Some(now);
            }
        }
        while self.in_flight.len() < self.window {
            let Some(frame) = self.backlog.pop_front() else {
                break;
            };
            out.push(frame.clone());
            self.in_flight.push_back(frame);
            self.timer.get_or_insert(now);
        }
        self.transmissions += out.len() as u64;
        out
    }

    /// Processes a cumulative ack. Returns how many frames it newly confirmed.
    pub fn on_ack(&mut self, next_expected: u64, now: u64) -> usize {
        let mut confirmed = 0;
        while self
            .in_flight
            .front()
            .is_some_and(|f| f.seq < next_expected)
        {
            self.in_flight.pop_front();
            confirmed += 1;
        }
        if confirmed > 0 {
            self.stalled = false;
            self.timer = if self.in_flight.is_empty() {
                None
            } else {
                Some(now)
            };
        }
        confirmed
    }

    /// Lowest unacknowledged sequence number.
    pub fn base(&self) -> u64 {
        self.in_flight
            .front()
            .or(self.backlog.front())
            .map_or(self.next_seq, |f| f.seq)
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight.is_empty() && self.backlog.is_empty()
    }

    pub fn transmissions(&self) -> u64 {
        self.transmissions
    }

    pub fn retransmissions(&self) -> u64 {
        self.retransmissions
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arrival {
    InOrder,
    Duplicate,
    Ahead,
}

#[derive(Debug, Default)]
pub struct GbnReceiver {
    expected: u64,
}

impl GbnReceiver {
    pub fn classify(&self, seq: u64) -> Arrival {
        match seq.cmp(&self.expected) {
            std::cmp::Ordering::Equal => Arrival::InOrder,
            std::cmp::Ordering::Less => Arrival::Duplicate,
            std::cmp::Ordering::Greater => Arrival::Ahead,
        }
    }

    pub fn advance(&mut self) {
        self.expected += 1;
    }

    /// The sequence number this receiver will deliver next; also the value
    /// of its cumulative ack.
    pub fn expected(&self) -> u64 {
        self.expected
    }
}
