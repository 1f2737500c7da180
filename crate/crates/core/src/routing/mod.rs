//! On-demand distance-vector routing: messages, route table and the
//! per-node protocol state. Event handling is in [`aodv`].

pub(crate) mod aodv;

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::engine::{EventHandle, SimTime};
use crate::qos::FlowId;
use crate::NodeId;

/// Route lifetime, refreshed whenever the route carries data.
pub const ACTIVE_ROUTE_TIMEOUT: SimTime = SimTime::from_secs(3);
pub const DISCOVERY_TIMEOUT: SimTime = SimTime::from_secs(1);
/// Floods after the first one before a discovery is abandoned.
pub const DISCOVERY_RETRIES: u32 = 2;
/// Packets buffered per destination while a discovery is pending.
pub const DISCOVERY_BUFFER: usize = 64;
/// Upper bound of the random delay before re-broadcasting a RREQ.
pub const BROADCAST_JITTER: SimTime = SimTime::from_millis(10);

// IP header plus the message body, including the bandwidth extension.
const RREQ_BYTES: u32 = 20 + 24 + 8;
const RREP_BYTES: u32 = 20 + 20 + 12;
const RERR_BASE_BYTES: u32 = 20 + 4;
const RERR_PER_DEST: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPacket {
    pub flow: FlowId,
    pub seq: u64,
    pub src: NodeId,
    pub dst: NodeId,
    /// payload bytes
    pub size: u32,
    pub emitted_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRequest {
    pub origin: NodeId,
    pub origin_seq: u32,
    pub destination: NodeId,
    pub dest_seq: u32,
    pub rreq_id: u32,
    /// Hops travelled so far; 0 as sent by the origin.
    pub hop_count: u32,
    /// bits/s; 0 disables admission control.
    pub requested_bw: f64,
    pub packet_size: u32,
    pub flow: Option<FlowId>,
    /// Route repair for a flow that is already admitted: nodes reserve
    /// without re-running admission control.
    #[serde(default)]
    pub repair: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteReply {
    pub origin: NodeId,
    pub destination: NodeId,
    pub dest_seq: u32,
    /// Hops from the destination to the current holder.
    pub hop_count: u32,
    /// Full path length, fixed by the destination.
    pub path_hop_total: u32,
    pub requested_bw: f64,
    pub packet_size: u32,
    pub flow: Option<FlowId>,
    #[serde(default)]
    pub repair: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteError {
    /// (destination, sequence number)
    pub unreachable: Vec<(NodeId, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Data(DataPacket),
    Rreq(RouteRequest),
    Rrep(RouteReply),
    Rerr(RouteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlKind {
    Rreq,
    Rrep,
    Rerr,
}

impl Packet {
    pub fn size(&self) -> u32 {
        match self {
            Packet::Data(d) => d.size,
            Packet::Rreq(_) => RREQ_BYTES,
            Packet::Rrep(_) => RREP_BYTES,
            Packet::Rerr(e) => RERR_BASE_BYTES + RERR_PER_DEST * e.unreachable.len() as u32,
        }
    }

    pub fn is_control(&self) -> bool {
        !matches!(self, Packet::Data(_))
    }

    pub fn control_kind(&self) -> Option<ControlKind> {
        match self {
            Packet::Data(_) => None,
            Packet::Rreq(_) => Some(ControlKind::Rreq),
            Packet::Rrep(_) => Some(ControlKind::Rrep),
            Packet::Rerr(_) => Some(ControlKind::Rerr),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub dest_seq: u32,
    pub hop_count: u32,
    pub expires: SimTime,
    pub valid: bool,
    /// Upstream neighbours that forward through this route.
    pub precursors: BTreeSet<NodeId>,
}

impl RouteEntry {
    pub fn usable(&self, now: SimTime) -> bool {
        self.valid && now < self.expires
    }
}

#[derive(Debug, Clone, Default)]
pub struct RouteTable {
    entries: BTreeMap<NodeId, RouteEntry>,
}

impl RouteTable {
    pub fn get(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.entries.get(&dest)
    }

    pub fn get_mut(&mut self, dest: NodeId) -> Option<&mut RouteEntry> {
        self.entries.get_mut(&dest)
    }

    /// Only valid, unexpired entries.
    pub fn lookup(&self, dest: NodeId, now: SimTime) -> Option<&RouteEntry> {
        self.entries.get(&dest).filter(|e| e.usable(now))
    }

    /// Installs or updates a route when the offer is fresher (higher
    /// sequence number) or equally fresh and shorter, or when the current
    /// entry is unusable. Returns true if the table changed.
    pub fn offer(
        &mut self,
        dest: NodeId,
        next_hop: NodeId,
        hop_count: u32,
        dest_seq: u32,
        now: SimTime,
    ) -> bool {
        let expires = now + ACTIVE_ROUTE_TIMEOUT;
        match self.entries.get_mut(&dest) {
            Some(e) => {
                let better = !e.usable(now)
                    || dest_seq > e.dest_seq
                    || (dest_seq == e.dest_seq && hop_count < e.hop_count);
                if better {
                    if e.next_hop != next_hop {
                        e.precursors.clear();
                    }
                    e.next_hop = next_hop;
                    e.hop_count = hop_count;
                    e.dest_seq = dest_seq;
                    e.expires = expires;
                    e.valid = true;
                } else if e.next_hop == next_hop && e.dest_seq == dest_seq {
                    e.expires = e.expires.max(expires);
                }
                better
            }
            None => {
                self.entries.insert(
                    dest,
                    RouteEntry {
                        destination: dest,
                        next_hop,
                        dest_seq,
                        hop_count,
                        expires,
                        valid: true,
                        precursors: BTreeSet::new(),
                    },
                );
                true
            }
        }
    }

    pub fn refresh(&mut self, dest: NodeId, now: SimTime) {
        if let Some(e) = self.entries.get_mut(&dest) {
            if e.usable(now) {
                e.expires = e.expires.max(now + ACTIVE_ROUTE_TIMEOUT);
            }
        }
    }

    /// Invalidates every usable route through `next_hop`, bumping its
    /// sequence number. Returns (destination, new seq, precursors).
    pub fn invalidate_via(&mut self, next_hop: NodeId, now: SimTime) -> Vec<(NodeId, u32, BTreeSet<NodeId>)> {
        let mut out = Vec::new();
        for e in self.entries.values_mut() {
            if e.next_hop == next_hop && e.usable(now) {
                e.valid = false;
                e.dest_seq = e.dest_seq.wrapping_add(1);
                out.push((e.destination, e.dest_seq, std::mem::take(&mut e.precursors)));
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.values()
    }
}

/// Identifies a route discovery at its origin. Admission-controlled flows
/// discover per flow; best-effort traffic per destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DiscoveryKey {
    pub destination: NodeId,
    pub flow: Option<FlowId>,
}

#[derive(Debug, Clone)]
pub struct Discovery {
    pub attempts: u32,
    pub requested_bw: f64,
    pub packet_size: u32,
    pub timer: EventHandle,
}

/// Per-node routing state.
#[derive(Debug, Clone, Default)]
pub struct Aodv {
    pub seq_no: u32,
    pub rreq_id: u32,
    pub routes: RouteTable,
    seen: HashSet<(NodeId, u32)>,
    pub discoveries: BTreeMap<DiscoveryKey, Discovery>,
    /// Packets waiting for a route, keyed like discoveries.
    pub buffers: BTreeMap<DiscoveryKey, VecDeque<DataPacket>>,
}

impl Aodv {
    /// Records `(origin, rreq_id)`; returns false if it was already seen.
    pub fn mark_seen(&mut self, origin: NodeId, rreq_id: u32) -> bool {
        self.seen.insert((origin, rreq_id))
    }

    pub fn next_rreq_id(&mut self) -> u32 {
        self.rreq_id = self.rreq_id.wrapping_add(1);
        self.rreq_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offer_prefers_fresher_then_shorter() {
        let mut t = RouteTable::default();
        let now = SimTime::ZERO;
        assert!(t.offer(9, 1, 3, 5, now));
        assert!(!t.offer(9, 2, 4, 5, now), "longer, same seq");
        assert!(t.offer(9, 2, 2, 5, now), "shorter, same seq");
        assert!(t.offer(9, 3, 6, 6, now), "fresher wins even if longer");
        assert_eq!(t.lookup(9, now).unwrap().next_hop, 3);
        assert!(!t.offer(9, 4, 1, 4, now), "stale seq");
    }

    #[test]
    fn expiry_and_refresh() {
        let mut t = RouteTable::default();
        t.offer(9, 1, 1, 1, SimTime::ZERO);
        assert!(t.lookup(9, SimTime::from_millis(2_999)).is_some());
        t.refresh(9, SimTime::from_secs(2));
        assert!(t.lookup(9, SimTime::from_millis(4_999)).is_some());
        assert!(t.lookup(9, SimTime::from_secs(5)).is_none());
        // expired entries accept any offer
        assert!(t.offer(9, 2, 5, 0, SimTime::from_secs(6)));
    }

    #[test]
    fn invalidate_via_next_hop() {
        let mut t = RouteTable::default();
        let now = SimTime::ZERO;
        t.offer(7, 1, 2, 3, now);
        t.offer(8, 1, 2, 4, now);
        t.offer(9, 2, 2, 4, now);
        t.get_mut(7).unwrap().precursors.insert(5);
        let gone = t.invalidate_via(1, now);
        assert_eq!(gone.len(), 2);
        assert_eq!(gone[0], (7, 4, BTreeSet::from([5])));
        assert!(t.lookup(7, now).is_none());
        assert!(t.lookup(9, now).is_some());
        assert!(t.invalidate_via(1, now).is_empty());
    }

    #[test]
    fn duplicate_cache() {
        let mut a = Aodv::default();
        assert!(a.mark_seen(3, 1));
        assert!(!a.mark_seen(3, 1));
        assert!(a.mark_seen(3, 2));
    }
}
