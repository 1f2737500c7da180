//! Passive available-bandwidth estimation.
//!
//! Each node keeps the periods during which it perceived the medium busy
//! (its own transmissions, anything sensed inside the interference disc,
//! and virtual carrier sense) over a sliding observation window. The busy
//! fraction of that window is the channel occupation factor; combined with
//! the per-hop capacity of a path it gives the bandwidth left for a new flow.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::phy::PhyParams;

/// Default observation window: one second.
pub const DEFAULT_WINDOW: SimTime = SimTime::from_secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusyInterval {
    pub start: SimTime,
    pub end: SimTime,
}

impl BusyInterval {
    pub fn new(start: SimTime, end: SimTime) -> Self {
        assert!(start <= end, "busy interval ends before it starts");
        BusyInterval { start, end }
    }

    pub fn len(&self) -> u64 {
        self.end.0 - self.start.0
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Fraction of the observation window during which the medium was busy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyFactor {
    value: f64,
    pub as_of: SimTime,
}

impl OccupancyFactor {
    /// Clamps into `[0, 1]`.
    pub fn new(value: f64, as_of: SimTime) -> Self {
        OccupancyFactor {
            value: value.clamp(0.0, 1.0),
            as_of,
        }
    }

    pub fn idle() -> Self {
        OccupancyFactor::new(0.0, SimTime::ZERO)
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// Sliding-window record of busy periods seen by one node.
#[derive(Debug, Clone)]
pub struct ChannelMonitor {
    window: SimTime,
    // sorted, disjoint, non-touching
    intervals: VecDeque<BusyInterval>,
    open_since: Option<SimTime>,
}

impl Default for ChannelMonitor {
    fn default() -> Self {
        ChannelMonitor::new(DEFAULT_WINDOW)
    }
}

impl ChannelMonitor {
    pub fn new(window: SimTime) -> Self {
        assert!(window.0 > 0, "observation window must be positive");
        ChannelMonitor {
            window,
            intervals: VecDeque::new(),
            open_since: None,
        }
    }

    pub fn window(&self) -> SimTime {
        self.window
    }

    pub fn intervals(&self) -> impl Iterator<Item = &BusyInterval> {
        self.intervals.iter()
    }

    /// Merges a completed busy period into the record.
    pub fn record_busy(&mut self, iv: BusyInterval) {
        if iv.is_empty() {
            return;
        }
        // first stored interval that could touch `iv`
        let lo = self.intervals.partition_point(|s| s.end < iv.start);
        let mut hi = lo;
        let mut merged = iv;
        while hi < self.intervals.len() && self.intervals[hi].start <= iv.end {
            merged.start = merged.start.min(self.intervals[hi].start);
            merged.end = merged.end.max(self.intervals[hi].end);
            hi += 1;
        }
        self.intervals.drain(lo..hi);
        self.intervals.insert(lo, merged);
        self.prune(
            merged
                .end
                .max(self.intervals.back().map_or(merged.end, |b| b.end)),
        );
    }

    /// Marks the start of a busy period that is still in progress.
    pub fn begin_busy(&mut self, at: SimTime) {
        if self.open_since.is_none() {
            self.open_since = Some(at);
        }
    }

    /// Closes the in-progress busy period, if any.
    pub fn end_busy(&mut self, at: SimTime) {
        if let Some(start) = self.open_since.take() {
            self.record_busy(BusyInterval::new(start, at));
        }
    }

    fn prune(&mut self, latest: SimTime) {
        let horizon = latest.saturating_sub(self.window);
        while let Some(front) = self.intervals.front() {
            if front.end <= horizon {
                self.intervals.pop_front();
            } else {
                break;
            }
        }
    }

    /// Busy microseconds inside `[now - window, now]`, counting an
    /// in-progress period up to `now`.
    pub fn busy_time(&self, now: SimTime) -> u64 {
        let from = now.saturating_sub(self.window);
        let clip = |s: SimTime, e: SimTime| -> u64 {
            let s = s.max(from);
            let e = e.min(now);
            e.0.saturating_sub(s.0)
        };
        let mut total: u64 = self.intervals.iter().map(|iv| clip(iv.start, iv.end)).sum();
        if let Some(open) = self.open_since {
            // an open period never overlaps stored ones: it began after the
            // last recorded end
            total += clip(open, now);
        }
        total.min(self.window.0)
    }

    /// Busy fraction of the window ending at `now`. Before a full window
    /// has elapsed, the unobserved prefix counts as idle.
    pub fn occupancy(&self, now: SimTime) -> OccupancyFactor {
        OccupancyFactor::new(self.busy_time(now) as f64 / self.window.0 as f64, now)
    }
}

/// Throughput a `hops`-hop path can carry when every hop shares one
/// interference zone: the single-hop saturation throughput divided by `hops`.
pub fn hop_capacity(hops: u32, payload_bytes: u32, phy: &PhyParams) -> f64 {
    assert!(hops >= 1, "hop count must be at least 1");
    phy.saturation_throughput(payload_bytes) / f64::from(hops)
}

/// Bandwidth left for a new flow: the idle share of the channel times the
/// hop capacity.
pub fn available_bandwidth(
    occupancy: OccupancyFactor,
    hops: u32,
    payload_bytes: u32,
    phy: &PhyParams,
) -> f64 {
    (1.0 - occupancy.value()) * hop_capacity(hops, payload_bytes, phy)
}
