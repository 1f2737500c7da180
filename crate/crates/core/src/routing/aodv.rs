//! Route discovery, data forwarding and route maintenance, with the
//! admission-control hooks on the request and reply paths.

use std::collections::BTreeMap;

use super::{
    DataPacket, Discovery, DiscoveryKey, Packet, RouteError, RouteReply, RouteRequest, BROADCAST_JITTER,
    DISCOVERY_BUFFER, DISCOVERY_RETRIES, DISCOVERY_TIMEOUT,
};
use crate::engine::SimTime;
use crate::mac::MacSdu;
use crate::metrics::{AdmissionPhase, DropReason, TraceEvent};
use crate::network::{Admission, Event, Network};
use crate::qos::{cac, AdmissionDecision, AdmissionRequest, ReleaseReason, Reservation, Verdict};
use crate::scenario::Protocol;
use crate::NodeId;

impl Network {
    pub(crate) fn routing_receive(&mut self, node: NodeId, from: NodeId, packet: Packet) {
        match packet {
            Packet::Data(p) => self.on_data(node, from, p),
            Packet::Rreq(r) => self.on_rreq(node, from, r),
            Packet::Rrep(r) => self.on_rrep(node, from, r),
            Packet::Rerr(e) => self.on_rerr(node, from, e),
        }
    }

    fn discovery_key(&self, p: &DataPacket) -> DiscoveryKey {
        let qos = self.flow_index(p.flow).is_some_and(|i| self.flows[i].qos);
        DiscoveryKey {
            destination: p.dst,
            flow: qos.then_some(p.flow),
        }
    }

    /// Sends a locally generated packet, discovering a route if needed.
    pub(crate) fn originate(&mut self, node: NodeId, p: DataPacket) {
        let now = self.now();
        let aodv = &mut self.nodes[node as usize].aodv;
        if let Some(next) = aodv.routes.lookup(p.dst, now).map(|e| e.next_hop) {
            aodv.routes.refresh(p.dst, now);
            self.send_data(node, next, p);
            return;
        }
        let key = self.discovery_key(&p);
        let aodv = &mut self.nodes[node as usize].aodv;
        let buf = aodv.buffers.entry(key).or_default();
        if buf.len() >= DISCOVERY_BUFFER {
            self.drop_data(node, &p, DropReason::Queue);
        } else {
            buf.push_back(p.clone());
        }
        let (bw, size) = match key.flow.and_then(|f| self.flow_index(f)) {
            Some(i) => (self.flows[i].spec.requested_bw(), self.flows[i].spec.packet_size),
            None => (0.0, p.size),
        };
        self.start_discovery(node, key, bw, size);
    }

    fn send_data(&mut self, node: NodeId, next: NodeId, p: DataPacket) {
        let now = self.now();
        self.nodes[node as usize].ledger.touch(p.flow, now);
        if let Err(sdu) = self.mac_send(node, MacSdu::unicast(next, Packet::Data(p))) {
            if let Packet::Data(p) = sdu.packet {
                self.drop_data(node, &p, DropReason::Queue);
            }
        }
    }

    fn send_control(&mut self, node: NodeId, to: Option<NodeId>, packet: Packet) {
        let sdu = match to {
            Some(n) => MacSdu::unicast(n, packet),
            None => MacSdu::broadcast(packet),
        };
        // a full queue silently loses control traffic
        let _ = self.mac_send(node, sdu);
    }

    /// Begins a discovery unless one is already running for `key`.
    pub(crate) fn start_discovery(&mut self, node: NodeId, key: DiscoveryKey, bw: f64, size: u32) {
        if self.nodes[node as usize].aodv.discoveries.contains_key(&key) {
            return;
        }
        let timer = self.send_rreq(node, key, bw, size);
        self.nodes[node as usize].aodv.discoveries.insert(
            key,
            Discovery {
                attempts: 1,
                requested_bw: bw,
                packet_size: size,
                timer,
            },
        );
    }

    fn send_rreq(
        &mut self,
        node: NodeId,
        key: DiscoveryKey,
        bw: f64,
        size: u32,
    ) -> crate::engine::EventHandle {
        let now = self.now();
        let repair = key
            .flow
            .and_then(|f| self.flow_index(f))
            .is_some_and(|i| self.flows[i].admission == Admission::Admitted);
        let aodv = &mut self.nodes[node as usize].aodv;
        aodv.seq_no = aodv.seq_no.wrapping_add(1);
        let id = aodv.next_rreq_id();
        aodv.mark_seen(node, id);
        let rreq = RouteRequest {
            origin: node,
            origin_seq: aodv.seq_no,
            destination: key.destination,
            dest_seq: aodv.routes.get(key.destination).map_or(0, |e| e.dest_seq),
            rreq_id: id,
            hop_count: 0,
            requested_bw: bw,
            packet_size: size,
            flow: key.flow,
            repair,
        };
        // Originated floods are jittered like forwarded ones; otherwise a
        // retry one timeout later repeats the same phase against periodic
        // neighbour traffic.
        let delay = self.jitter(node, BROADCAST_JITTER);
        self.schedule(now + delay, Event::Rebroadcast { node, rreq });
        self.schedule(now + DISCOVERY_TIMEOUT, Event::DiscoveryTimeout { node, key })
    }

    pub(crate) fn on_discovery_timeout(&mut self, node: NodeId, key: DiscoveryKey) {
        let Some(d) = self.nodes[node as usize].aodv.discoveries.get(&key) else {
            return;
        };
        if d.attempts <= DISCOVERY_RETRIES {
            let (bw, size, attempts) = (d.requested_bw, d.packet_size, d.attempts);
            let timer = self.send_rreq(node, key, bw, size);
            let d = self.nodes[node as usize]
                .aodv
                .discoveries
                .get_mut(&key)
                .expect("still pending");
            d.attempts = attempts + 1;
            d.timer = timer;
            return;
        }
        self.nodes[node as usize].aodv.discoveries.remove(&key);
        let buffered = self.nodes[node as usize].aodv.buffers.remove(&key);
        for p in buffered.into_iter().flatten() {
            self.drop_data(node, &p, DropReason::NoRoute);
        }
        if let Some(idx) = key.flow.and_then(|f| self.flow_index(f)) {
            self.reject_flow(idx);
        }
    }

    /// Refusal is final: the source stays silent for the rest of the run.
    fn reject_flow(&mut self, idx: usize) {
        let f = &mut self.flows[idx];
        if f.admission == Admission::Rejected {
            return;
        }
        f.admission = Admission::Rejected;
        let (src, id) = (f.src, f.spec.id);
        let held = std::mem::take(&mut f.held);
        self.record(src, TraceEvent::FlowRejected { flow: id });
        for p in held {
            self.record(
                src,
                TraceEvent::Blocked {
                    flow: p.flow,
                    seq: p.seq,
                },
            );
        }
    }

    pub(crate) fn on_rebroadcast(&mut self, node: NodeId, rreq: RouteRequest) {
        self.send_control(node, None, Packet::Rreq(rreq));
    }

    fn qos_active(&self, requested_bw: f64, flow: Option<u32>) -> bool {
        self.cfg.protocol == Protocol::AodvQos && requested_bw > 0.0 && flow.is_some()
    }

    fn expire_reservations(&mut self, node: NodeId) {
        let now = self.now();
        let gone = self.nodes[node as usize].ledger.expire(now);
        for r in gone {
            self.record(
                node,
                TraceEvent::Release {
                    flow: r.flow_id,
                    reason: ReleaseReason::Inactivity,
                },
            );
        }
    }

    fn admission_check(
        &mut self,
        node: NodeId,
        flow: u32,
        requested: f64,
        k: u32,
        size: u32,
        phase: AdmissionPhase,
    ) -> AdmissionDecision {
        self.expire_reservations(node);
        let now = self.now();
        let n = &self.nodes[node as usize];
        let req = AdmissionRequest {
            flow,
            bandwidth: requested,
            hops: k,
            payload_bytes: size,
        };
        let d = cac(n.monitor.occupancy(now), &n.ledger, &req, &self.cfg.phy, now);
        self.record(
            node,
            TraceEvent::Admission {
                flow,
                phase,
                verdict: d.verdict,
                available: d.available,
                requested,
                k,
            },
        );
        d
    }

    fn reserve(
        &mut self,
        node: NodeId,
        flow: u32,
        bw: f64,
        k: u32,
        destination: NodeId,
        next_hop: Option<NodeId>,
    ) {
        let now = self.now();
        self.nodes[node as usize].ledger.reserve(Reservation {
            flow_id: flow,
            granted_bw: bw,
            instant_reservation: now,
            destination,
            next_hop,
            last_data_seen: now,
        });
        self.record(node, TraceEvent::Reserve { flow, bw, k });
        self.schedule_reservation_check(node, flow, now, now);
    }

    fn schedule_reservation_check(&mut self, node: NodeId, flow: u32, granted: SimTime, last_data: SimTime) {
        // expiry is strict: idle for longer than the timeout
        let at = last_data + self.nodes[node as usize].ledger.inactivity() + SimTime(1);
        self.schedule(at, Event::ReservationCheck { node, flow, granted });
    }

    pub(crate) fn on_reservation_check(&mut self, node: NodeId, flow: u32, granted: SimTime) {
        self.expire_reservations(node);
        let still_held = self.nodes[node as usize]
            .ledger
            .get(flow)
            .filter(|r| r.instant_reservation == granted)
            .map(|r| r.last_data_seen);
        if let Some(last_data) = still_held {
            self.schedule_reservation_check(node, flow, granted, last_data);
        }
    }

    fn on_rreq(&mut self, node: NodeId, from: NodeId, r: RouteRequest) {
        let now = self.now();
        if r.origin == node || !self.nodes[node as usize].aodv.mark_seen(r.origin, r.rreq_id) {
            return;
        }
        let hops = r.hop_count + 1;
        self.nodes[node as usize]
            .aodv
            .routes
            .offer(r.origin, from, hops, r.origin_seq, now);

        let at_destination = node == r.destination;
        if self.qos_active(r.requested_bw, r.flow) {
            let phase = if at_destination {
                AdmissionPhase::Destination
            } else {
                AdmissionPhase::Rreq
            };
            let flow = r.flow.expect("qos discovery names its flow");
            // A repair carries a flow whose traffic is already part of the
            // measured occupancy; testing it again would count it twice.
            if !r.repair {
                let d = self.admission_check(node, flow, r.requested_bw, hops, r.packet_size, phase);
                if d.verdict == Verdict::Reject {
                    return;
                }
            }
            if at_destination {
                self.reserve(node, flow, r.requested_bw, hops, node, None);
            }
        }

        if at_destination {
            let aodv = &mut self.nodes[node as usize].aodv;
            aodv.seq_no = aodv.seq_no.max(r.dest_seq).wrapping_add(1);
            let rrep = RouteReply {
                origin: r.origin,
                destination: node,
                dest_seq: aodv.seq_no,
                hop_count: 0,
                path_hop_total: hops,
                requested_bw: r.requested_bw,
                packet_size: r.packet_size,
                flow: r.flow,
                repair: r.repair,
            };
            self.send_control(node, Some(from), Packet::Rrep(rrep));
        } else {
            let delay = self.jitter(node, BROADCAST_JITTER);
            let rreq = RouteRequest { hop_count: hops, ..r };
            self.schedule(now + delay, Event::Rebroadcast { node, rreq });
        }
    }

    fn on_rrep(&mut self, node: NodeId, from: NodeId, r: RouteReply) {
        let now = self.now();
        if self.qos_active(r.requested_bw, r.flow) {
            let flow = r.flow.expect("qos discovery names its flow");
            let k = r.path_hop_total;
            if !r.repair {
                let d =
                    self.admission_check(node, flow, r.requested_bw, k, r.packet_size, AdmissionPhase::Rrep);
                if d.verdict == Verdict::Reject {
                    return;
                }
            }
            self.reserve(node, flow, r.requested_bw, k, r.destination, Some(from));
        }
        let fwd_hops = r.hop_count + 1;
        let routes = &mut self.nodes[node as usize].aodv.routes;
        routes.offer(r.destination, from, fwd_hops, r.dest_seq, now);
        if node == r.origin {
            self.route_ready(node, &r);
            return;
        }
        let Some(back) = routes.lookup(r.origin, now).map(|e| e.next_hop) else {
            return;
        };
        routes.refresh(r.origin, now);
        if let Some(e) = routes.get_mut(r.destination) {
            e.precursors.insert(back);
        }
        let rrep = RouteReply {
            hop_count: fwd_hops,
            ..r
        };
        self.send_control(node, Some(back), Packet::Rrep(rrep));
    }

    /// A reply reached the origin: finish the discovery, admit the flow and
    /// release buffered traffic.
    fn route_ready(&mut self, node: NodeId, r: &RouteReply) {
        let key = DiscoveryKey {
            destination: r.destination,
            flow: r.flow,
        };
        if let Some(d) = self.nodes[node as usize].aodv.discoveries.remove(&key) {
            self.sched.cancel(d.timer);
        }
        if let Some(idx) = r.flow.and_then(|f| self.flow_index(f)) {
            let f = &mut self.flows[idx];
            if f.qos && f.admission == Admission::Pending && f.src == node {
                f.admission = Admission::Admitted;
                let held = std::mem::take(&mut f.held);
                let id = f.spec.id;
                self.record(node, TraceEvent::FlowAdmitted { flow: id });
                for p in held {
                    self.emit(p);
                }
            }
        }
        let ready: Vec<DiscoveryKey> = self.nodes[node as usize]
            .aodv
            .buffers
            .keys()
            .filter(|k| k.destination == r.destination)
            .copied()
            .collect();
        for k in ready {
            let buffered = self.nodes[node as usize].aodv.buffers.remove(&k);
            for p in buffered.into_iter().flatten() {
                self.originate(node, p);
            }
        }
    }

    fn on_data(&mut self, node: NodeId, from: NodeId, p: DataPacket) {
        let now = self.now();
        if p.dst == node {
            let fresh = self.nodes[node as usize].delivered.insert((p.flow, p.seq));
            self.nodes[node as usize].ledger.touch(p.flow, now);
            if fresh {
                self.record(
                    node,
                    TraceEvent::Deliver {
                        flow: p.flow,
                        seq: p.seq,
                        emitted_at: p.emitted_at,
                        bytes: p.size,
                    },
                );
            }
            return;
        }
        let routes = &mut self.nodes[node as usize].aodv.routes;
        let Some(entry) = routes.lookup(p.dst, now).cloned() else {
            let seq = routes.get(p.dst).map_or(0, |e| e.dest_seq);
            self.drop_data(node, &p, DropReason::NoRoute);
            let rerr = RouteError {
                unreachable: vec![(p.dst, seq)],
            };
            self.send_control(node, Some(from), Packet::Rerr(rerr));
            return;
        };
        routes.refresh(p.dst, now);
        routes.refresh(p.src, now);
        self.check_loop_freedom(&entry, p.dst, now);
        self.send_data(node, entry.next_hop, p);
    }

    /// Along a forwarding chain (dest_seq, -hop_count) must not decrease.
    fn check_loop_freedom(&mut self, here: &super::RouteEntry, dst: NodeId, now: SimTime) {
        if here.next_hop == dst {
            return;
        }
        let next = &self.nodes[here.next_hop as usize].aodv.routes;
        if let Some(there) = next.lookup(dst, now) {
            let ok = there.dest_seq > here.dest_seq
                || (there.dest_seq == here.dest_seq && there.hop_count < here.hop_count);
            if !ok {
                self.diag.loop_violations += 1;
            }
        }
    }

    fn on_rerr(&mut self, node: NodeId, from: NodeId, e: RouteError) {
        let now = self.now();
        let mut notify: BTreeMap<NodeId, Vec<(NodeId, u32)>> = BTreeMap::new();
        let mut broken = Vec::new();
        let routes = &mut self.nodes[node as usize].aodv.routes;
        for (dst, seq) in e.unreachable {
            let Some(entry) = routes.get_mut(dst) else {
                continue;
            };
            if !(entry.usable(now) && entry.next_hop == from) {
                continue;
            }
            entry.valid = false;
            entry.dest_seq = entry.dest_seq.max(seq);
            for p in std::mem::take(&mut entry.precursors) {
                notify.entry(p).or_default().push((dst, entry.dest_seq));
            }
            broken.push(dst);
        }
        for dst in broken {
            self.release_route(node, dst, from);
        }
        for (p, unreachable) in notify {
            self.send_control(node, Some(p), Packet::Rerr(RouteError { unreachable }));
        }
    }

    fn release_route(&mut self, node: NodeId, dst: NodeId, next_hop: NodeId) {
        let gone = self.nodes[node as usize].ledger.release_route(dst, next_hop);
        for r in gone {
            self.record(
                node,
                TraceEvent::Release {
                    flow: r.flow_id,
                    reason: ReleaseReason::RouteBroken,
                },
            );
        }
    }

    /// The MAC gave up on `next_hop`.
    pub(crate) fn on_link_failure(&mut self, node: NodeId, next_hop: NodeId, failed: MacSdu) {
        let now = self.now();
        let label = self.label(next_hop);
        self.record(node, TraceEvent::LinkFailure { next_hop: label });
        if let Packet::Data(p) = &failed.packet {
            self.drop_data(node, p, DropReason::Retry);
        }
        let invalidated = self.nodes[node as usize]
            .aodv
            .routes
            .invalidate_via(next_hop, now);
        let mut notify: BTreeMap<NodeId, Vec<(NodeId, u32)>> = BTreeMap::new();
        for (dst, seq, precursors) in invalidated {
            self.release_route(node, dst, next_hop);
            for p in precursors {
                notify.entry(p).or_default().push((dst, seq));
            }
        }
        for (p, unreachable) in notify {
            self.send_control(node, Some(p), Packet::Rerr(RouteError { unreachable }));
        }
        let stranded = self.nodes[node as usize].mac.purge_next_hop(next_hop);
        for sdu in stranded {
            if let Packet::Data(p) = sdu.packet {
                if p.src == node {
                    self.originate(node, p);
                } else {
                    self.drop_data(node, &p, DropReason::NoRoute);
                }
            }
        }
        self.kick(node);
    }
}
