//! The simulated world: nodes, the shared medium and the event loop that
//! ties the MAC, routing, admission control and traffic together.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{EventHandle, RandomStream, Scheduler, SimTime, StreamPurpose};
use crate::estimator::{BusyInterval, ChannelMonitor};
use crate::mac::{Frame, Mac};
use crate::metrics::{compute_report, DropReason, FlowInfo, MetricsReport, RunInfo, Trace, TraceEvent};
use crate::mobility::{WaypointWalker, MOBILITY_TICK};
use crate::phy::{FrameKind, PhyParams, Position, RangeModel};
use crate::qos::{FlowId, ReservationLedger};
use crate::routing::{Aodv, DataPacket, DiscoveryKey, Packet, RouteRequest};
use crate::scenario::{Protocol, Scenario};
use crate::traffic::FlowSpec;
use crate::NodeId;

#[derive(Debug, Clone)]
pub(crate) enum Event {
    TxEnd(u64),
    ContentionDone(NodeId),
    NavExpire(NodeId),
    /// SIFS-delayed CTS, DATA or ACK.
    Respond {
        node: NodeId,
        kind: FrameKind,
        to: NodeId,
        nav: SimTime,
    },
    ResponseTimeout(NodeId),
    FlowTick {
        flow: usize,
        segment: usize,
        index: u64,
    },
    Rebroadcast {
        node: NodeId,
        rreq: RouteRequest,
    },
    DiscoveryTimeout {
        node: NodeId,
        key: DiscoveryKey,
    },
    /// Releases the reservation granted to `flow` at `granted` once its
    /// data has been quiet for the inactivity timeout.
    ReservationCheck {
        node: NodeId,
        flow: FlowId,
        granted: SimTime,
    },
    MobilityTick,
}

#[derive(Debug, Clone)]
pub(crate) struct Transmission {
    pub frame: Frame,
    /// Nodes within interference range when the frame started.
    pub audience: Vec<NodeId>,
}

pub(crate) struct Node {
    pub label: u32,
    pub pos: Position,
    pub walker: Option<WaypointWalker>,
    pub mac: Mac,
    pub monitor: ChannelMonitor,
    pub aodv: Aodv,
    pub ledger: ReservationLedger,
    pub backoff_rng: ChaCha8Rng,
    pub jitter_rng: ChaCha8Rng,
    pub mobility_rng: ChaCha8Rng,
    /// Data packets already handed to the application here.
    pub delivered: std::collections::HashSet<(FlowId, u64)>,
    /// Complete busy history, kept only when requested.
    pub busy_log: Option<Vec<BusyInterval>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Admission {
    /// Best-effort flow, or a QoS flow that has not asked yet.
    Open,
    Pending,
    Admitted,
    Rejected,
}

pub(crate) struct FlowState {
    pub spec: FlowSpec,
    pub src: NodeId,
    pub dst: NodeId,
    pub qos: bool,
    pub next_seq: u64,
    pub admission: Admission,
    /// Generated while admission is pending; not yet emitted.
    pub held: Vec<DataPacket>,
}

/// Model parameters copied from the scenario.
#[derive(Debug, Clone)]
pub(crate) struct Config {
    pub phy: PhyParams,
    pub ranges: RangeModel,
    pub rts_cts: bool,
    pub protocol: Protocol,
    pub duration: SimTime,
}

/// Internal consistency counters. Zero in a correct run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub loop_violations: u64,
    pub responses_suppressed: u64,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: Trace,
    pub info: RunInfo,
    pub diagnostics: Diagnostics,
    pub events_dispatched: u64,
    /// Per node, by scenario id: busy intervals, if logging was enabled.
    pub busy_logs: Vec<(u32, Vec<BusyInterval>)>,
}

pub struct Network {
    pub(crate) sched: Scheduler<Event>,
    pub(crate) cfg: Config,
    pub(crate) nodes: Vec<Node>,
    pub(crate) air: HashMap<u64, Transmission>,
    next_tx: u64,
    pub(crate) flows: Vec<FlowState>,
    pub(crate) trace: Trace,
    pub(crate) diag: Diagnostics,
    info: RunInfo,
}

impl Network {
    /// Builds the world. The scenario must already be validated.
    pub fn new(scenario: &Scenario) -> Network {
        let streams = RandomStream::new(scenario.seed);
        let window = SimTime::from_secs_f64(scenario.estimator.window);
        let guard = SimTime::from_secs_f64(scenario.admission.guard);
        let inactivity = SimTime::from_secs_f64(scenario.admission.inactivity);
        let nodes: Vec<Node> = scenario
            .nodes
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let idx = i as u32;
                let pos = spec.position();
                Node {
                    label: spec.id,
                    pos,
                    walker: spec
                        .mobility
                        .is_mobile()
                        .then(|| WaypointWalker::new(spec.mobility, scenario.area, pos)),
                    mac: Mac::new(scenario.mac.queue_capacity, scenario.phy.cw_min),
                    monitor: ChannelMonitor::new(window),
                    aodv: Aodv::default(),
                    ledger: ReservationLedger::new(guard, inactivity),
                    backoff_rng: streams.substream(idx, StreamPurpose::Backoff),
                    jitter_rng: streams.substream(idx, StreamPurpose::Jitter),
                    mobility_rng: streams.substream(idx, StreamPurpose::Mobility),
                    delivered: Default::default(),
                    busy_log: None,
                }
            })
            .collect();
        let index_of = |label: u32| {
            scenario
                .nodes
                .iter()
                .position(|n| n.id == label)
                .expect("flow endpoints refer to known nodes") as NodeId
        };
        let qos_protocol = scenario.protocol == Protocol::AodvQos;
        let flows: Vec<FlowState> = scenario
            .flows
            .iter()
            .map(|f| FlowState {
                spec: f.clone(),
                src: index_of(f.source),
                dst: index_of(f.destination),
                qos: qos_protocol && f.requested_bw() > 0.0,
                next_seq: 0,
                admission: Admission::Open,
                held: Vec::new(),
            })
            .collect();
        let info = RunInfo {
            scenario: scenario.name.clone(),
            protocol: scenario.protocol.name().to_string(),
            seed: scenario.seed,
            duration_s: scenario.duration,
            flows: scenario
                .flows
                .iter()
                .map(|f| FlowInfo {
                    flow_id: f.id,
                    source: f.source,
                    destination: f.destination,
                    requested_bw: f.requested_bw(),
                })
                .collect(),
        };

        let mut net = Network {
            sched: Scheduler::new(),
            cfg: Config {
                phy: scenario.phy,
                ranges: scenario.ranges,
                rts_cts: scenario.mac.rts_cts,
                protocol: scenario.protocol,
                duration: scenario.duration_time(),
            },
            nodes,
            air: HashMap::new(),
            next_tx: 0,
            flows,
            trace: Trace::default(),
            diag: Diagnostics::default(),
            info,
        };
        for (i, f) in net.flows.iter().enumerate() {
            let first = f.spec.schedule[0].emission_time(0);
            net.sched.schedule(
                first,
                Event::FlowTick {
                    flow: i,
                    segment: 0,
                    index: 0,
                },
            );
        }
        if net.nodes.iter().any(|n| n.walker.is_some()) {
            net.sched.schedule(MOBILITY_TICK, Event::MobilityTick);
        }
        net
    }

    /// Keeps every node's full busy history for [`RunOutput::busy_logs`].
    pub fn enable_busy_log(&mut self) {
        for n in &mut self.nodes {
            n.busy_log.get_or_insert_with(Vec::new);
        }
    }

    pub(crate) fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub(crate) fn record(&mut self, node: NodeId, event: TraceEvent) {
        let label = self.nodes[node as usize].label;
        self.trace.push(self.sched.now(), label, event);
    }

    pub(crate) fn label(&self, node: NodeId) -> u32 {
        self.nodes[node as usize].label
    }

    /// Runs to the scenario duration and computes the metrics.
    pub fn run(mut self) -> RunOutput {
        let end = self.cfg.duration;
        while let Some((_, ev)) = self.sched.pop_until(end) {
            self.dispatch(ev);
        }
        self.sched.advance_to(end);
        self.finish()
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::TxEnd(id) => self.on_tx_end(id),
            Event::ContentionDone(n) => self.on_contention_done(n),
            Event::NavExpire(n) => self.on_nav_expire(n),
            Event::Respond { node, kind, to, nav } => self.on_respond(node, kind, to, nav),
            Event::ResponseTimeout(n) => self.on_response_timeout(n),
            Event::FlowTick { flow, segment, index } => self.on_flow_tick(flow, segment, index),
            Event::Rebroadcast { node, rreq } => self.on_rebroadcast(node, rreq),
            Event::DiscoveryTimeout { node, key } => self.on_discovery_timeout(node, key),
            Event::ReservationCheck { node, flow, granted } => self.on_reservation_check(node, flow, granted),
            Event::MobilityTick => self.on_mobility_tick(),
        }
    }

    pub(crate) fn allocate_tx(&mut self, tx: Transmission) -> u64 {
        let id = self.next_tx;
        self.next_tx += 1;
        self.air.insert(id, tx);
        id
    }

    pub(crate) fn jitter(&mut self, node: NodeId, max: SimTime) -> SimTime {
        SimTime(self.nodes[node as usize].jitter_rng.gen_range(0..=max.0))
    }

    pub(crate) fn schedule(&mut self, at: SimTime, ev: Event) -> EventHandle {
        self.sched.schedule(at, ev)
    }

    fn on_mobility_tick(&mut self) {
        let now = self.now();
        for n in &mut self.nodes {
            if let Some(w) = n.walker.as_mut() {
                n.pos = w.advance(now, &mut n.mobility_rng);
            }
        }
        self.sched.schedule_in(MOBILITY_TICK, Event::MobilityTick);
    }

    fn on_flow_tick(&mut self, flow: usize, segment: usize, index: u64) {
        let now = self.now();
        let spec = &self.flows[flow].spec;
        let seg = spec.schedule[segment];
        let next = seg.emission_time(index + 1);
        if next < seg.stop_time() {
            self.sched.schedule(
                next,
                Event::FlowTick {
                    flow,
                    segment,
                    index: index + 1,
                },
            );
        } else if let Some(following) = spec.schedule.get(segment + 1) {
            let at = following.emission_time(0).max(now);
            self.sched.schedule(
                at,
                Event::FlowTick {
                    flow,
                    segment: segment + 1,
                    index: 0,
                },
            );
        }

        let f = &mut self.flows[flow];
        let packet = DataPacket {
            flow: f.spec.id,
            seq: f.next_seq,
            src: f.src,
            dst: f.dst,
            size: f.spec.packet_size,
            emitted_at: now,
        };
        f.next_seq += 1;
        let src = f.src;
        if !f.qos {
            self.emit(packet);
            return;
        }
        match f.admission {
            Admission::Admitted => self.emit(packet),
            Admission::Pending => f.held.push(packet),
            Admission::Rejected => {
                let ev = TraceEvent::Blocked {
                    flow: packet.flow,
                    seq: packet.seq,
                };
                self.record(src, ev);
            }
            Admission::Open => {
                f.admission = Admission::Pending;
                f.held.push(packet);
                let key = DiscoveryKey {
                    destination: f.dst,
                    flow: Some(f.spec.id),
                };
                let (bw, size) = (f.spec.requested_bw(), f.spec.packet_size);
                self.start_discovery(src, key, bw, size);
            }
        }
    }

    /// Hands a data packet to its source's routing layer and traces it as
    /// emitted.
    pub(crate) fn emit(&mut self, p: DataPacket) {
        let src = p.src;
        let ev = TraceEvent::Emit {
            flow: p.flow,
            seq: p.seq,
            emitted_at: p.emitted_at,
            bytes: p.size,
        };
        self.record(src, ev);
        self.originate(src, p);
    }

    pub(crate) fn flow_index(&self, id: FlowId) -> Option<usize> {
        self.flows.iter().position(|f| f.spec.id == id)
    }

    pub(crate) fn drop_data(&mut self, node: NodeId, p: &DataPacket, reason: DropReason) {
        let ev = TraceEvent::Drop {
            flow: p.flow,
            seq: p.seq,
            reason,
        };
        self.record(node, ev);
    }

    fn finish(mut self) -> RunOutput {
        // whatever is still queued or buffered did not make it in time
        for i in 0..self.nodes.len() {
            let node = i as NodeId;
            let queued = self.nodes[i].mac.drain_all();
            for sdu in queued {
                if let Packet::Data(p) = sdu.packet {
                    self.drop_data(node, &p, DropReason::InFlight);
                }
            }
            let buffers = std::mem::take(&mut self.nodes[i].aodv.buffers);
            for p in buffers.into_values().flatten() {
                self.drop_data(node, &p, DropReason::InFlight);
            }
        }
        let now = self.now();
        for n in &mut self.nodes {
            if n.mac.busy {
                if let Some(log) = n.busy_log.as_mut() {
                    log.push(BusyInterval::new(n.mac.busy_since, now));
                }
            }
        }
        let report = compute_report(&self.info, &self.trace);
        let busy_logs = self
            .nodes
            .iter_mut()
            .filter_map(|n| n.busy_log.take().map(|l| (n.label, l)))
            .collect();
        RunOutput {
            report,
            trace: self.trace,
            info: self.info,
            diagnostics: self.diag,
            events_dispatched: self.sched.dispatched(),
            busy_logs,
        }
    }

    /// Read access for tests and tools.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Builds and runs one scenario.
pub fn simulate(scenario: &Scenario) -> RunOutput {
    Network::new(scenario).run()
}

impl Transmission {
    pub(crate) fn new(frame: Frame, audience: Vec<NodeId>) -> Self {
        Transmission { frame, audience }
    }
}
