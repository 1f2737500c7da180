//! Distributed coordination function: carrier sense, backoff, the
//! RTS/CTS/DATA/ACK exchange and the shared medium.

use rand::Rng;

use super::{Frame, MacPhase, MacSdu};
use crate::engine::SimTime;
use crate::estimator::BusyInterval;
use crate::metrics::TraceEvent;
use crate::network::{Event, Network, Transmission};
use crate::phy::{FrameKind, Reach};
use crate::NodeId;

impl Network {
    /// Queues `sdu` at `node`. Gives the frame back when the queue is full.
    pub(crate) fn mac_send(&mut self, node: NodeId, sdu: MacSdu) -> Result<(), MacSdu> {
        self.nodes[node as usize].mac.push(sdu)?;
        self.kick(node);
        Ok(())
    }

    /// Starts contention if frames wait and the station is idle, or goes
    /// idle if the queue has emptied.
    pub(crate) fn kick(&mut self, node: NodeId) {
        let mac = &mut self.nodes[node as usize].mac;
        match mac.phase {
            MacPhase::Idle if mac.queue_len() > 0 => {
                mac.phase = MacPhase::Contend;
                self.draw_backoff(node);
                self.resume_contention(node);
            }
            MacPhase::Contend if mac.queue_len() == 0 => {
                if let Some((h, _, _)) = mac.contention.take() {
                    self.sched.cancel(h);
                }
                mac.phase = MacPhase::Idle;
            }
            _ => {}
        }
    }

    fn draw_backoff(&mut self, node: NodeId) {
        let n = &mut self.nodes[node as usize];
        let slots = n.backoff_rng.gen_range(0..=n.mac.contention_window);
        n.mac.backoff_remaining = slots;
        n.mac.stats.backoff_slots_drawn += u64::from(slots);
    }

    /// Arms the DIFS + remaining-backoff timer when the medium is idle.
    fn resume_contention(&mut self, node: NodeId) {
        let now = self.now();
        let phy = self.cfg.phy;
        let mac = &mut self.nodes[node as usize].mac;
        if mac.phase != MacPhase::Contend || mac.contention.is_some() || mac.busy {
            return;
        }
        let fire_at = now + SimTime(phy.difs_us + u64::from(mac.backoff_remaining) * phy.slot_us);
        let h = self.sched.schedule(fire_at, Event::ContentionDone(node));
        mac.contention = Some((h, fire_at, now));
    }

    /// Stops the countdown, keeping the slots not yet elapsed. A timer due
    /// at this very instant is not frozen: its slot boundary coincides with
    /// the busy start and the station transmits.
    fn freeze_contention(&mut self, node: NodeId) {
        let now = self.now();
        let phy = self.cfg.phy;
        let mac = &mut self.nodes[node as usize].mac;
        let Some((h, fire_at, origin)) = mac.contention else {
            return;
        };
        if fire_at == now {
            return;
        }
        self.sched.cancel(h);
        mac.contention = None;
        let counting_from = origin + SimTime(phy.difs_us);
        let consumed = if now > counting_from {
            ((now - counting_from).0 / phy.slot_us) as u32
        } else {
            0
        };
        let consumed = consumed.min(mac.backoff_remaining);
        mac.backoff_remaining -= consumed;
        mac.stats.backoff_slots_consumed += u64::from(consumed);
    }

    /// Recomputes the busy state and acts on edges.
    pub(crate) fn refresh_busy(&mut self, node: NodeId) {
        let now = self.now();
        let n = &mut self.nodes[node as usize];
        let m = &n.mac;
        let busy = m.transmitting.is_some() || m.sensed > 0 || m.nav_until > now || m.responding.is_some();
        if busy == m.busy {
            return;
        }
        n.mac.busy = busy;
        if busy {
            n.mac.busy_since = now;
            n.monitor.begin_busy(now);
            self.freeze_contention(node);
        } else {
            n.monitor.end_busy(now);
            let since = n.mac.busy_since;
            if let Some(log) = n.busy_log.as_mut() {
                log.push(BusyInterval::new(since, now));
            }
            self.resume_contention(node);
        }
    }

    pub(crate) fn on_contention_done(&mut self, node: NodeId) {
        let now = self.now();
        let phy = self.cfg.phy;
        let rts_cts = self.cfg.rts_cts;
        let n = &mut self.nodes[node as usize];
        let mac = &mut n.mac;
        mac.contention = None;
        assert!(
            !mac.busy || mac.busy_since == now,
            "node {} transmitting into a busy medium",
            n.label
        );
        assert!(mac.nav_until <= now || mac.busy_since == now, "NAV still set");
        mac.stats.backoff_slots_consumed += u64::from(mac.backoff_remaining);
        mac.backoff_remaining = 0;
        let Some(head) = mac.head() else {
            mac.phase = MacPhase::Idle;
            return;
        };
        let head = head.clone();
        let size = head.size();
        let frame = match head.next_hop {
            None => {
                mac.phase = MacPhase::Broadcasting;
                Frame {
                    kind: FrameKind::Bcast,
                    transmitter: node,
                    receiver: None,
                    payload_bytes: size,
                    nav: SimTime::ZERO,
                    seq: head.seq,
                    body: Some(head.packet),
                }
            }
            Some(to) if rts_cts => {
                mac.phase = MacPhase::AwaitCts;
                mac.used_rts = true;
                Frame {
                    kind: FrameKind::Rts,
                    transmitter: node,
                    receiver: Some(to),
                    payload_bytes: 0,
                    nav: phy.rts_nav(size),
                    seq: 0,
                    body: None,
                }
            }
            Some(to) => {
                mac.phase = MacPhase::AwaitAck;
                mac.used_rts = false;
                Frame {
                    kind: FrameKind::Data,
                    transmitter: node,
                    receiver: Some(to),
                    payload_bytes: size,
                    nav: phy.data_nav(),
                    seq: head.seq,
                    body: Some(head.packet),
                }
            }
        };
        self.start_tx(node, frame);
    }

    /// Notes the first transmission of the head packet for overhead
    /// accounting.
    fn mark_head_on_air(&mut self, node: NodeId) {
        let head = self.nodes[node as usize]
            .mac
            .head_mut()
            .expect("frame body comes from the queue head");
        if head.on_air {
            return;
        }
        head.on_air = true;
        if let Some(kind) = head.packet.control_kind() {
            self.record(node, TraceEvent::RoutingTx { packet: kind });
        }
    }

    fn start_tx(&mut self, node: NodeId, frame: Frame) {
        let now = self.now();
        if frame.body.is_some() {
            self.mark_head_on_air(node);
        }
        let airtime = self.cfg.phy.airtime(frame.kind, frame.payload_bytes);
        let origin = self.nodes[node as usize].pos;
        let ranges = self.cfg.ranges;
        let mut audience = Vec::new();
        let mut decodable = Vec::new();
        for (j, other) in self.nodes.iter().enumerate() {
            if j == node as usize {
                continue;
            }
            match ranges.reach(origin, other.pos) {
                Reach::Out => {}
                r => {
                    audience.push(j as NodeId);
                    decodable.push(r == Reach::InTx);
                }
            }
        }
        let id = self.allocate_tx(Transmission::new(frame, audience.clone()));
        {
            let me = &mut self.nodes[node as usize].mac;
            debug_assert!(me.transmitting.is_none(), "already transmitting");
            me.transmitting = Some(id);
            me.rx_lock = None;
            me.stats.tx_frames += 1;
        }
        for (&j, &in_tx) in audience.iter().zip(&decodable) {
            let mac = &mut self.nodes[j as usize].mac;
            mac.sensed += 1;
            match mac.rx_lock.as_mut() {
                Some((_, clean)) => {
                    if *clean {
                        mac.stats.rx_collisions += 1;
                    }
                    *clean = false;
                }
                None => {
                    if in_tx && mac.transmitting.is_none() && mac.sensed == 1 {
                        mac.rx_lock = Some((id, true));
                    }
                }
            }
        }
        self.sched.schedule(now + airtime, Event::TxEnd(id));
        self.refresh_busy(node);
        for j in audience {
            self.refresh_busy(j);
        }
    }

    pub(crate) fn on_tx_end(&mut self, id: u64) {
        let tx = self.air.remove(&id).expect("known transmission");
        let sender = tx.frame.transmitter;
        self.nodes[sender as usize].mac.transmitting = None;
        let mut receivers = Vec::new();
        for &j in &tx.audience {
            let mac = &mut self.nodes[j as usize].mac;
            mac.sensed -= 1;
            if let Some((lock, clean)) = mac.rx_lock {
                if lock == id {
                    mac.rx_lock = None;
                    if clean {
                        receivers.push(j);
                    }
                }
            }
        }
        self.sender_done(sender, &tx.frame);
        for j in receivers {
            self.mac_receive(j, &tx.frame);
        }
        self.refresh_busy(sender);
        for &j in &tx.audience {
            self.refresh_busy(j);
        }
    }

    fn sender_done(&mut self, node: NodeId, frame: &Frame) {
        let now = self.now();
        let phy = self.cfg.phy;
        match frame.kind {
            FrameKind::Rts => {
                let h = self.sched.schedule(
                    now + phy.response_timeout(FrameKind::Cts),
                    Event::ResponseTimeout(node),
                );
                self.nodes[node as usize].mac.response_timer = Some(h);
            }
            FrameKind::Data => {
                let h = self.sched.schedule(
                    now + phy.response_timeout(FrameKind::Ack),
                    Event::ResponseTimeout(node),
                );
                let mac = &mut self.nodes[node as usize].mac;
                mac.phase = MacPhase::AwaitAck;
                mac.response_timer = Some(h);
            }
            FrameKind::Bcast => self.complete_head(node, true),
            FrameKind::Cts | FrameKind::Ack => {}
        }
    }

    fn set_nav(&mut self, node: NodeId, until: SimTime) {
        let mac = &mut self.nodes[node as usize].mac;
        if until <= mac.nav_until {
            return;
        }
        mac.nav_until = until;
        if let Some(h) = mac.nav_timer.take() {
            self.sched.cancel(h);
        }
        let h = self.sched.schedule(until, Event::NavExpire(node));
        self.nodes[node as usize].mac.nav_timer = Some(h);
    }

    pub(crate) fn on_nav_expire(&mut self, node: NodeId) {
        self.nodes[node as usize].mac.nav_timer = None;
        self.refresh_busy(node);
    }

    fn schedule_response(&mut self, node: NodeId, kind: FrameKind, to: NodeId, nav: SimTime) {
        let at = self.now() + SimTime(self.cfg.phy.sifs_us);
        let h = self.sched.schedule(at, Event::Respond { node, kind, to, nav });
        self.nodes[node as usize].mac.responding = Some(h);
    }

    fn mac_receive(&mut self, node: NodeId, frame: &Frame) {
        let now = self.now();
        let phy = self.cfg.phy;
        let for_me = frame.receiver == Some(node);
        match frame.kind {
            FrameKind::Rts if for_me => {
                let mac = &self.nodes[node as usize].mac;
                let free = mac.nav_until <= now
                    && matches!(mac.phase, MacPhase::Idle | MacPhase::Contend)
                    && mac.responding.is_none()
                    && mac.transmitting.is_none();
                if free {
                    self.schedule_response(node, FrameKind::Cts, frame.transmitter, phy.cts_nav(frame.nav));
                }
            }
            FrameKind::Cts if for_me => {
                let mac = &mut self.nodes[node as usize].mac;
                if mac.phase == MacPhase::AwaitCts {
                    if let Some(h) = mac.response_timer.take() {
                        self.sched.cancel(h);
                    }
                    self.nodes[node as usize].mac.phase = MacPhase::SendData;
                    self.schedule_response(node, FrameKind::Data, frame.transmitter, phy.data_nav());
                }
            }
            FrameKind::Data if for_me => {
                self.schedule_response(node, FrameKind::Ack, frame.transmitter, SimTime::ZERO);
                let dup = self.nodes[node as usize]
                    .mac
                    .is_duplicate(frame.transmitter, frame.seq);
                if !dup {
                    let body = frame.body.clone().expect("DATA carries a packet");
                    self.routing_receive(node, frame.transmitter, body);
                }
            }
            FrameKind::Ack if for_me => {
                let mac = &mut self.nodes[node as usize].mac;
                if mac.phase == MacPhase::AwaitAck {
                    if let Some(h) = mac.response_timer.take() {
                        self.sched.cancel(h);
                    }
                    self.complete_head(node, true);
                }
            }
            FrameKind::Bcast => {
                let body = frame.body.clone().expect("broadcast carries a packet");
                self.routing_receive(node, frame.transmitter, body);
            }
            _ => {
                if frame.nav > SimTime::ZERO {
                    self.set_nav(node, now + frame.nav);
                }
            }
        }
    }

    pub(crate) fn on_respond(&mut self, node: NodeId, kind: FrameKind, to: NodeId, nav: SimTime) {
        let mac = &mut self.nodes[node as usize].mac;
        mac.responding = None;
        if mac.transmitting.is_some() {
            self.diag.responses_suppressed += 1;
            self.refresh_busy(node);
            return;
        }
        let frame = match kind {
            FrameKind::Data => {
                let head = mac.head().expect("DATA follows CTS for the head frame");
                Frame {
                    kind,
                    transmitter: node,
                    receiver: Some(to),
                    payload_bytes: head.size(),
                    nav,
                    seq: head.seq,
                    body: Some(head.packet.clone()),
                }
            }
            _ => Frame {
                kind,
                transmitter: node,
                receiver: Some(to),
                payload_bytes: 0,
                nav,
                seq: 0,
                body: None,
            },
        };
        self.start_tx(node, frame);
    }

    pub(crate) fn on_response_timeout(&mut self, node: NodeId) {
        let phy = self.cfg.phy;
        let mac = &mut self.nodes[node as usize].mac;
        mac.response_timer = None;
        let exhausted = match mac.phase {
            MacPhase::AwaitCts => {
                mac.short_retries += 1;
                mac.short_retries >= phy.short_retry_limit
            }
            MacPhase::AwaitAck if mac.used_rts => {
                mac.long_retries += 1;
                mac.long_retries >= phy.long_retry_limit
            }
            MacPhase::AwaitAck => {
                mac.short_retries += 1;
                mac.short_retries >= phy.short_retry_limit
            }
            other => panic!("response timeout in phase {other:?}"),
        };
        if exhausted {
            self.complete_head(node, false);
        } else {
            mac.contention_window = phy.next_cw(mac.contention_window);
            mac.phase = MacPhase::Contend;
            self.draw_backoff(node);
            self.resume_contention(node);
        }
    }

    /// Finishes the head frame, successfully or after the retry limit.
    fn complete_head(&mut self, node: NodeId, success: bool) {
        let cw_min = self.cfg.phy.cw_min;
        let mac = &mut self.nodes[node as usize].mac;
        let sdu = mac.pop_head().expect("completing a queued frame");
        mac.contention_window = cw_min;
        mac.short_retries = 0;
        mac.long_retries = 0;
        mac.phase = MacPhase::Idle;
        if !success {
            mac.stats.retry_drops += 1;
            if let Some(next_hop) = sdu.next_hop {
                self.on_link_failure(node, next_hop, sdu);
            }
        }
        self.kick(node);
    }
}
