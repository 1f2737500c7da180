//! Call admission control and bandwidth reservation.
//!
//! A node admits a flow when the bandwidth it estimates as available covers
//! the request. Grants younger than the guard window are subtracted from
//! that estimate, since their traffic is not yet visible in the node's
//! occupancy measurement.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::estimator::{available_bandwidth, OccupancyFactor};
use crate::phy::PhyParams;
use crate::NodeId;

/// Default guard window for counting fresh grants.
pub const DEFAULT_GUARD: SimTime = SimTime::from_secs(2);
/// Reservations with no data for this long are released.
pub const DEFAULT_INACTIVITY: SimTime = SimTime::from_secs(3);

pub type FlowId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservation {
    pub flow_id: FlowId,
    /// bits/s
    pub granted_bw: f64,
    pub instant_reservation: SimTime,
    pub destination: NodeId,
    /// `None` at the flow's destination, which forwards nothing.
    pub next_hop: Option<NodeId>,
    pub last_data_seen: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Admit,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionDecision {
    /// bits/s after subtracting fresh grants
    pub available: f64,
    /// bits/s
    pub requested: f64,
    pub verdict: Verdict,
    pub evaluated_at: SimTime,
    pub k_used: u32,
}

impl AdmissionDecision {
    pub fn admitted(&self) -> bool {
        self.verdict == Verdict::Admit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseReason {
    RouteBroken,
    Inactivity,
    FlowEnd,
}

/// Per-node set of granted reservations.
#[derive(Debug, Clone)]
pub struct ReservationLedger {
    guard: SimTime,
    inactivity: SimTime,
    reservations: Vec<Reservation>,
}

impl Default for ReservationLedger {
    fn default() -> Self {
        ReservationLedger::new(DEFAULT_GUARD, DEFAULT_INACTIVITY)
    }
}

impl ReservationLedger {
    pub fn new(guard: SimTime, inactivity: SimTime) -> Self {
        ReservationLedger {
            guard,
            inactivity,
            reservations: Vec::new(),
        }
    }

    pub fn guard(&self) -> SimTime {
        self.guard
    }

    pub fn inactivity(&self) -> SimTime {
        self.inactivity
    }

    pub fn reservations(&self) -> &[Reservation] {
        &self.reservations
    }

    pub fn get(&self, flow: FlowId) -> Option<&Reservation> {
        self.reservations.iter().find(|r| r.flow_id == flow)
    }

    /// Sum of grants made within the guard window, inclusive at both ends.
    pub fn recent_grants(&self, now: SimTime) -> f64 {
        self.recent_grants_except(now, None)
    }

    /// As [`recent_grants`](Self::recent_grants), leaving out the grant of
    /// `flow`: a flow re-requesting bandwidth replaces its old grant rather
    /// than competing with it.
    pub fn recent_grants_except(&self, now: SimTime, flow: Option<FlowId>) -> f64 {
        self.reservations
            .iter()
            .filter(|r| Some(r.flow_id) != flow)
            .filter(|r| now >= r.instant_reservation && now <= r.instant_reservation + self.guard)
            .map(|r| r.granted_bw)
            .sum()
    }

    /// Installs (or replaces) the reservation for `res.flow_id`.
    pub fn reserve(&mut self, res: Reservation) {
        assert!(res.granted_bw > 0.0, "reservation must grant bandwidth");
        self.reservations.retain(|r| r.flow_id != res.flow_id);
        self.reservations.push(res);
    }

    pub fn release(&mut self, flow: FlowId) -> Option<Reservation> {
        let idx = self.reservations.iter().position(|r| r.flow_id == flow)?;
        Some(self.reservations.remove(idx))
    }

    /// Releases reservations bound to a route through `next_hop` toward
    /// `destination`.
    pub fn release_route(&mut self, destination: NodeId, next_hop: NodeId) -> Vec<Reservation> {
        let (gone, keep) = std::mem::take(&mut self.reservations)
            .into_iter()
            .partition(|r| r.destination == destination && r.next_hop == Some(next_hop));
        self.reservations = keep;
        gone
    }

    pub fn touch(&mut self, flow: FlowId, now: SimTime) {
        if let Some(r) = self.reservations.iter_mut().find(|r| r.flow_id == flow) {
            r.last_data_seen = r.last_data_seen.max(now);
        }
    }

    /// Drops reservations idle for longer than the inactivity timeout.
    pub fn expire(&mut self, now: SimTime) -> Vec<Reservation> {
        let limit = self.inactivity;
        let (gone, keep) = std::mem::take(&mut self.reservations)
            .into_iter()
            .partition(|r| now > r.last_data_seen + limit);
        self.reservations = keep;
        gone
    }
}

/// What a flow asks of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissionRequest {
    pub flow: FlowId,
    /// bits/s
    pub bandwidth: f64,
    pub hops: u32,
    pub payload_bytes: u32,
}

/// Admission check for `req` at a node with the given occupancy and
/// ledger.
pub fn cac(
    occupancy: OccupancyFactor,
    ledger: &ReservationLedger,
    req: &AdmissionRequest,
    phy: &PhyParams,
    now: SimTime,
) -> AdmissionDecision {
    let AdmissionRequest {
        flow,
        bandwidth: requested,
        hops,
        payload_bytes,
    } = *req;
    assert!(hops >= 1, "hop count must be at least 1");
    let estimate = available_bandwidth(occupancy, hops, payload_bytes, phy);
    let available = (estimate - ledger.recent_grants_except(now, Some(flow))).max(0.0);
    let verdict = if available >= requested {
        Verdict::Admit
    } else {
        Verdict::Reject
    };
    AdmissionDecision {
        available,
        requested,
        verdict,
        evaluated_at: now,
        k_used: hops,
    }
}
