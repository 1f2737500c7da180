//! IEEE 802.11 DCF station state: interface queue, contention state,
//! virtual carrier sense and the frames that go on the air.
//!
//! The event-driven behaviour (contention, the RTS/CTS/DATA/ACK exchange,
//! timeouts) lives in [`dcf`] as methods on the network, since every step
//! interacts with the shared medium.

pub(crate) mod dcf;

use std::collections::{BTreeMap, VecDeque};

use crate::engine::{EventHandle, SimTime};
use crate::phy::FrameKind;
use crate::routing::Packet;
use crate::NodeId;

/// Default interface queue capacity, in frames.
pub const DEFAULT_QUEUE_CAPACITY: usize = 50;

/// A unit handed down by the routing layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MacSdu {
    /// `None` for broadcast.
    pub next_hop: Option<NodeId>,
    pub packet: Packet,
    /// Set once the frame has been transmitted at least once.
    pub(crate) on_air: bool,
    pub(crate) seq: u16,
}

impl MacSdu {
    pub fn unicast(next_hop: NodeId, packet: Packet) -> Self {
        MacSdu {
            next_hop: Some(next_hop),
            packet,
            on_air: false,
            seq: 0,
        }
    }

    pub fn broadcast(packet: Packet) -> Self {
        MacSdu {
            next_hop: None,
            packet,
            on_air: false,
            seq: 0,
        }
    }

    pub fn size(&self) -> u32 {
        self.packet.size()
    }
}

/// A frame as transmitted.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub transmitter: NodeId,
    /// `None` for broadcast.
    pub receiver: Option<NodeId>,
    pub payload_bytes: u32,
    /// Virtual carrier-sense reservation carried by the frame.
    pub nav: SimTime,
    pub seq: u16,
    /// Upper-layer packet, present on DATA and BCAST frames.
    pub body: Option<Packet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacPhase {
    /// Nothing queued.
    Idle,
    /// Waiting for DIFS + backoff (possibly frozen).
    Contend,
    AwaitCts,
    /// CTS received; DATA goes out after SIFS.
    SendData,
    AwaitAck,
    Broadcasting,
}

/// Counters used by tests and diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MacStats {
    pub backoff_slots_drawn: u64,
    pub backoff_slots_consumed: u64,
    pub tx_frames: u64,
    pub queue_drops: u64,
    pub retry_drops: u64,
    pub rx_collisions: u64,
}

#[derive(Debug, Clone)]
pub struct Mac {
    queue: VecDeque<MacSdu>,
    capacity: usize,
    pub(crate) phase: MacPhase,
    pub(crate) backoff_remaining: u32,
    pub(crate) contention_window: u32,
    pub(crate) short_retries: u32,
    pub(crate) long_retries: u32,
    pub(crate) used_rts: bool,
    pub(crate) nav_until: SimTime,
    pub(crate) nav_timer: Option<EventHandle>,
    /// Pending contention timer and the instant DIFS started.
    pub(crate) contention: Option<(EventHandle, SimTime, SimTime)>,
    pub(crate) response_timer: Option<EventHandle>,
    /// A SIFS-delayed CTS/DATA/ACK is scheduled.
    pub(crate) responding: Option<EventHandle>,
    pub(crate) transmitting: Option<u64>,
    pub(crate) sensed: u32,
    /// Transmission currently being decoded and whether it is still clean.
    pub(crate) rx_lock: Option<(u64, bool)>,
    pub(crate) busy: bool,
    pub(crate) busy_since: SimTime,
    pub(crate) next_seq: u16,
    pub(crate) last_seq_from: BTreeMap<NodeId, u16>,
    pub stats: MacStats,
}

impl Mac {
    pub fn new(capacity: usize, cw_min: u32) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Mac {
            queue: VecDeque::with_capacity(capacity),
            capacity,
            phase: MacPhase::Idle,
            backoff_remaining: 0,
            contention_window: cw_min,
            short_retries: 0,
            long_retries: 0,
            used_rts: false,
            nav_until: SimTime::ZERO,
            nav_timer: None,
            contention: None,
            response_timer: None,
            responding: None,
            transmitting: None,
            sensed: 0,
            rx_lock: None,
            busy: false,
            busy_since: SimTime::ZERO,
            next_seq: 0,
            last_seq_from: BTreeMap::new(),
            stats: MacStats::default(),
        }
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn phase(&self) -> MacPhase {
        self.phase
    }

    pub fn contention_window(&self) -> u32 {
        self.contention_window
    }

    pub fn nav_until(&self) -> SimTime {
        self.nav_until
    }

    pub fn queued(&self) -> impl Iterator<Item = &MacSdu> {
        self.queue.iter()
    }

    pub(crate) fn head(&self) -> Option<&MacSdu> {
        self.queue.front()
    }

    pub(crate) fn head_mut(&mut self) -> Option<&mut MacSdu> {
        self.queue.front_mut()
    }

    pub(crate) fn pop_head(&mut self) -> Option<MacSdu> {
        self.queue.pop_front()
    }

    /// True while the head frame is inside an exchange and must stay first.
    fn head_locked(&self) -> bool {
        !matches!(self.phase, MacPhase::Idle | MacPhase::Contend)
            || self.short_retries > 0
            || self.long_retries > 0
            || self.queue.front().is_some_and(|h| h.on_air)
    }

    /// Appends `sdu`; routing control traffic jumps ahead of queued data
    /// (but never ahead of a frame already in an exchange). Returns the
    /// frame back when the queue is full.
    pub fn push(&mut self, mut sdu: MacSdu) -> Result<(), MacSdu> {
        if self.queue.len() >= self.capacity {
            self.stats.queue_drops += 1;
            return Err(sdu);
        }
        sdu.seq = self.take_seq();
        if sdu.packet.is_control() {
            let floor = usize::from(self.head_locked() && !self.queue.is_empty());
            let at = self
                .queue
                .iter()
                .enumerate()
                .skip(floor)
                .find(|(_, q)| !q.packet.is_control())
                .map_or(self.queue.len(), |(i, _)| i);
            self.queue.insert(at, sdu);
        } else {
            self.queue.push_back(sdu);
        }
        Ok(())
    }

    /// Removes every queued frame addressed to `next_hop`, except a head
    /// frame that is mid-exchange.
    pub fn purge_next_hop(&mut self, next_hop: NodeId) -> Vec<MacSdu> {
        let keep_head = self.head_locked();
        let mut out = Vec::new();
        let mut kept = VecDeque::with_capacity(self.queue.len());
        for (i, sdu) in self.queue.drain(..).enumerate() {
            if sdu.next_hop == Some(next_hop) && !(keep_head && i == 0) {
                out.push(sdu);
            } else {
                kept.push_back(sdu);
            }
        }
        self.queue = kept;
        out
    }

    /// Drains everything left, for end-of-run accounting.
    pub fn drain_all(&mut self) -> Vec<MacSdu> {
        self.queue.drain(..).collect()
    }

    pub(crate) fn take_seq(&mut self) -> u16 {
        let s = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        s
    }

    /// Returns true if this (transmitter, seq) pair was the last one seen,
    /// i.e. the frame is a retransmission of something already delivered.
    pub(crate) fn is_duplicate(&mut self, from: NodeId, seq: u16) -> bool {
        match self.last_seq_from.insert(from, seq) {
            Some(prev) => prev == seq,
            None => false,
        }
    }
}
