//! Event trace and the evaluation metrics derived from it: delivery ratio,
//! useful throughput series, end-to-end delay and routing overhead.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::qos::{FlowId, ReleaseReason, Verdict};
use crate::routing::ControlKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Interface queue or discovery buffer full.
    Queue,
    /// MAC retry limit reached.
    Retry,
    /// No route at a relay, or route discovery gave up.
    NoRoute,
    /// Still queued somewhere when the run ended.
    InFlight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissionPhase {
    Rreq,
    Destination,
    Rrep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Emit {
        flow: FlowId,
        seq: u64,
        emitted_at: SimTime,
        bytes: u32,
    },
    Deliver {
        flow: FlowId,
        seq: u64,
        emitted_at: SimTime,
        bytes: u32,
    },
    Drop {
        flow: FlowId,
        seq: u64,
        reason: DropReason,
    },
    /// Generated while the flow was refused admission; never emitted.
    Blocked {
        flow: FlowId,
        seq: u64,
    },
    RoutingTx {
        packet: ControlKind,
    },
    Admission {
        flow: FlowId,
        phase: AdmissionPhase,
        verdict: Verdict,
        available: f64,
        requested: f64,
        k: u32,
    },
    FlowAdmitted {
        flow: FlowId,
    },
    FlowRejected {
        flow: FlowId,
    },
    Reserve {
        flow: FlowId,
        bw: f64,
        k: u32,
    },
    Release {
        flow: FlowId,
        reason: ReleaseReason,
    },
    LinkFailure {
        next_hop: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(rename = "t_us")]
    pub time: SimTime,
    pub node: u32,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, time: SimTime, node: u32, event: TraceEvent) {
        self.records.push(TraceRecord { time, node, event });
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = serde_json::to_string(r).expect("trace records serialize");
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Trace { records })
    }
}

/// Static facts about the run needed to interpret the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowInfo {
    pub flow_id: FlowId,
    pub source: u32,
    pub destination: u32,
    pub requested_bw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub scenario: String,
    pub protocol: String,
    pub seed: u64,
    pub duration_s: f64,
    pub flows: Vec<FlowInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DropBreakdown {
    pub queue: u64,
    pub retry: u64,
    pub no_route: u64,
    pub in_flight: u64,
    /// Packets the source generated but never emitted because the flow was
    /// refused admission. Not part of the emitted total.
    pub rejected_by_cac: u64,
}

impl DropBreakdown {
    /// Emitted packets that were not delivered.
    pub fn lost(&self) -> u64 {
        self.queue + self.retry + self.no_route + self.in_flight
    }

    fn add(&mut self, reason: DropReason) {
        match reason {
            DropReason::Queue => self.queue += 1,
            DropReason::Retry => self.retry += 1,
            DropReason::NoRoute => self.no_route += 1,
            DropReason::InFlight => self.in_flight += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputBin {
    pub bin_start_s: f64,
    pub bits_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub flow_id: FlowId,
    pub source: u32,
    /// Receiver at which throughput is measured.
    pub destination: u32,
    pub requested_bw: f64,
    pub emitted: u64,
    pub received: u64,
    /// percent; absent when nothing was emitted
    pub pdr: Option<f64>,
    /// seconds; absent when nothing was received
    pub avg_delay_s: Option<f64>,
    pub drops: DropBreakdown,
    /// First admission instant in seconds, if the flow was ever admitted.
    pub admitted_at_s: Option<f64>,
    pub rejected: bool,
    pub throughput: Vec<ThroughputBin>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Overhead {
    pub rreq: u64,
    pub rrep: u64,
    pub rerr: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AdmissionSummary {
    pub admit_decisions: u64,
    pub reject_decisions: u64,
    pub flows_admitted: u64,
    pub flows_rejected: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub emitted: u64,
    pub received: u64,
    pub pdr: Option<f64>,
    pub avg_delay_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub protocol: String,
    pub seed: u64,
    pub duration_s: f64,
    pub aggregate: Aggregate,
    pub flows: Vec<FlowReport>,
    pub overhead: Overhead,
    pub drops: DropBreakdown,
    pub admissions: AdmissionSummary,
}

impl MetricsReport {
    pub fn flow(&self, id: FlowId) -> Option<&FlowReport> {
        self.flows.iter().find(|f| f.flow_id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn pdr_percent(received: u64, emitted: u64) -> Option<f64> {
    (emitted > 0).then(|| received as f64 / emitted as f64 * 100.0)
}

#[derive(Default)]
struct PacketFate {
    emitted_at: Option<SimTime>,
    delivered_at: Option<SimTime>,
    last_drop: Option<DropReason>,
}

/// Builds the report from a complete trace.
pub fn compute_report(info: &RunInfo, trace: &Trace) -> MetricsReport {
    let bins = info.duration_s.ceil().max(0.0) as usize;
    let mut fates: HashMap<(FlowId, u64), PacketFate> = HashMap::new();
    let mut blocked: BTreeMap<FlowId, u64> = BTreeMap::new();
    let mut admitted_at: BTreeMap<FlowId, SimTime> = BTreeMap::new();
    let mut rejected: BTreeMap<FlowId, bool> = BTreeMap::new();
    let mut overhead = Overhead::default();
    let mut admissions = AdmissionSummary::default();
    let mut delivered_bits: BTreeMap<FlowId, Vec<u64>> = BTreeMap::new();

    for rec in &trace.records {
        match &rec.event {
            TraceEvent::Emit {
                flow,
                seq,
                emitted_at,
                ..
            } => {
                fates.entry((*flow, *seq)).or_default().emitted_at = Some(*emitted_at);
            }
            TraceEvent::Deliver { flow, seq, bytes, .. } => {
                let fate = fates.entry((*flow, *seq)).or_default();
                if fate.delivered_at.is_none() {
                    fate.delivered_at = Some(rec.time);
                    let series = delivered_bits
                        .entry(*flow)
                        .or_insert_with(|| vec![0; bins.max(1)]);
                    let bin = (rec.time.0 / 1_000_000) as usize;
                    if bin < series.len() {
                        series[bin] += u64::from(*bytes) * 8;
                    }
                }
            }
            TraceEvent::Drop { flow, seq, reason } => {
                fates.entry((*flow, *seq)).or_default().last_drop = Some(*reason);
            }
            TraceEvent::Blocked { flow, .. } => *blocked.entry(*flow).or_default() += 1,
            TraceEvent::RoutingTx { packet } => {
                match packet {
                    ControlKind::Rreq => overhead.rreq += 1,
                    ControlKind::Rrep => overhead.rrep += 1,
                    ControlKind::Rerr => overhead.rerr += 1,
                }
                overhead.total += 1;
            }
            TraceEvent::Admission { verdict, .. } => match verdict {
                Verdict::Admit => admissions.admit_decisions += 1,
                Verdict::Reject => admissions.reject_decisions += 1,
            },
            TraceEvent::FlowAdmitted { flow } => {
                admitted_at.entry(*flow).or_insert(rec.time);
            }
            TraceEvent::FlowRejected { flow } => {
                rejected.insert(*flow, true);
            }
            _ => {}
        }
    }
    admissions.flows_admitted = admitted_at.len() as u64;
    admissions.flows_rejected = rejected.len() as u64;

    struct Acc {
        emitted: u64,
        received: u64,
        // integer microseconds, so the sum is independent of visit order
        delay_us: u128,
        drops: DropBreakdown,
    }
    let mut per_flow: BTreeMap<FlowId, Acc> = BTreeMap::new();
    for ((flow, _), fate) in &fates {
        let Some(te) = fate.emitted_at else { continue };
        let acc = per_flow.entry(*flow).or_insert(Acc {
            emitted: 0,
            received: 0,
            delay_us: 0,
            drops: DropBreakdown::default(),
        });
        acc.emitted += 1;
        if let Some(tr) = fate.delivered_at {
            acc.received += 1;
            acc.delay_us += u128::from((tr - te).0);
        } else {
            acc.drops.add(fate.last_drop.unwrap_or(DropReason::InFlight));
        }
    }

    let mut flows = Vec::with_capacity(info.flows.len());
    let mut total = DropBreakdown::default();
    let (mut emitted, mut received, mut delay_us) = (0u64, 0u64, 0u128);
    for f in &info.flows {
        let acc = per_flow.remove(&f.flow_id);
        let (e, r, d, mut drops) = acc.map_or((0, 0, 0, DropBreakdown::default()), |a| {
            (a.emitted, a.received, a.delay_us, a.drops)
        });
        drops.rejected_by_cac = blocked.get(&f.flow_id).copied().unwrap_or(0);
        total.queue += drops.queue;
        total.retry += drops.retry;
        total.no_route += drops.no_route;
        total.in_flight += drops.in_flight;
        total.rejected_by_cac += drops.rejected_by_cac;
        emitted += e;
        received += r;
        delay_us += d;
        let series = delivered_bits.get(&f.flow_id);
        let throughput = (0..bins)
            .map(|b| ThroughputBin {
                bin_start_s: b as f64,
                bits_per_s: series.map_or(0.0, |s| s[b] as f64),
            })
            .collect();
        flows.push(FlowReport {
            flow_id: f.flow_id,
            source: f.source,
            destination: f.destination,
            requested_bw: f.requested_bw,
            emitted: e,
            received: r,
            pdr: pdr_percent(r, e),
            avg_delay_s: (r > 0).then(|| d as f64 / 1e6 / r as f64),
            drops,
            admitted_at_s: admitted_at.get(&f.flow_id).map(|t| t.as_secs_f64()),
            rejected: rejected.contains_key(&f.flow_id),
            throughput,
        });
    }

    MetricsReport {
        scenario: info.scenario.clone(),
        protocol: info.protocol.clone(),
        seed: info.seed,
        duration_s: info.duration_s,
        aggregate: Aggregate {
            emitted,
            received,
            pdr: pdr_percent(received, emitted),
            avg_delay_s: (received > 0).then(|| delay_us as f64 / 1e6 / received as f64),
        },
        flows,
        overhead,
        drops: total,
        admissions,
    }
}

/// CSV for one throughput series.
pub fn series_csv(bins: &[ThroughputBin]) -> String {
    let mut out = String::from("bin_start_s,bits_per_s\n");
    for b in bins {
        let _ = writeln!(out, "{},{}", b.bin_start_s, b.bits_per_s);
    }
    out
}

/// Mean delivered throughput of a series over `[from, to)` seconds.
pub fn mean_throughput(bins: &[ThroughputBin], from: f64, to: f64) -> f64 {
    let sel: Vec<f64> = bins
        .iter()
        .filter(|b| b.bin_start_s >= from && b.bin_start_s < to)
        .map(|b| b.bits_per_s)
        .collect();
    if sel.is_empty() {
        0.0
    } else {
        sel.iter().sum::<f64>() / sel.len() as f64
    }
}
