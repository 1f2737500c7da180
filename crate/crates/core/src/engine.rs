//! Deterministic discrete-event core: integer microsecond clock, a
//! cancellable event queue with FIFO tie-breaking, and seeded random
//! substreams.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Simulation time in whole microseconds since the start of the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond.
    pub fn from_secs_f64(s: f64) -> Self {
        assert!(s >= 0.0 && s.is_finite(), "negative or non-finite time {s}");
        SimTime((s * 1e6).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("SimTime subtraction underflow"))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

/// Opaque handle to a scheduled event, used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn sequence(self) -> u64 {
        self.0
    }
}

struct Entry<E> {
    at: SimTime,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Event queue ordered by `(fire_at, sequence)`.
///
/// Cancellation is lazy: a cancelled handle is removed from the pending set
/// and its heap entry is skipped when it surfaces.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Entry<E>>>,
    pending: HashSet<u64>,
    dispatched: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashSet::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Total events dispatched over the scheduler's lifetime.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Schedules `payload` at absolute time `at`.
    ///
    /// Panics if `at` lies in the past: that is a logic error in the caller
    /// and continuing would break causality.
    pub fn schedule(&mut self, at: SimTime, payload: E) -> EventHandle {
        assert!(
            at >= self.now,
            "event scheduled in the past: at={} now={}",
            at,
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { at, seq, payload }));
        self.pending.insert(seq);
        EventHandle(seq)
    }

    pub fn schedule_in(&mut self, delay: SimTime, payload: E) -> EventHandle {
        self.schedule(self.now + delay, payload)
    }

    /// Returns true iff the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains(&handle.0)
    }

    /// Pops the next live event with `fire_at <= t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<(SimTime, E)> {
        loop {
            let head = self.heap.peek()?;
            if head.0.at > t_end {
                return None;
            }
            let Reverse(entry) = self.heap.pop().expect("peeked");
            if !self.pending.remove(&entry.seq) {
                continue;
            }
            debug_assert!(entry.at >= self.now);
            self.now = entry.at;
            self.dispatched += 1;
            return Some((entry.at, entry.payload));
        }
    }

    /// Moves the clock forward to `t` without dispatching anything.
    pub fn advance_to(&mut self, t: SimTime) {
        assert!(t >= self.now, "cannot move time backwards");
        self.now = t;
    }

    /// Dispatches every event with `fire_at <= t_end` through `handler`,
    /// then sets the clock to `t_end`. Returns the number dispatched.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Scheduler<E>, E),
    {
        assert!(t_end >= self.now, "run_until target lies in the past");
        let mut count = 0;
        while let Some((_, ev)) = self.pop_until(t_end) {
            handler(self, ev);
            count += 1;
        }
        self.now = t_end;
        count
    }
}

/// Purpose tags that select independent random substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Backoff,
    Mobility,
    Jitter,
    Placement,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Backoff => 0x6261_636b,
            StreamPurpose::Mobility => 0x6d6f_6269,
            StreamPurpose::Jitter => 0x6a69_7474,
            StreamPurpose::Placement => 0x706c_6163,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Master seed from which per-node, per-purpose generators are derived.
///
/// Substreams depend only on `(seed, node, purpose)`, so adding a node does
/// not perturb the draws of any other node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self, node: u32, purpose: StreamPurpose) -> ChaCha8Rng {
        let mixed = splitmix64(splitmix64(self.seed ^ purpose.tag()) ^ u64::from(node));
        ChaCha8Rng::seed_from_u64(mixed)
    }
}
