//! Built-in scenarios for the evaluation experiments: saturation, shared
//! medium, interference, hop capacity, and the admission-control studies.
//!
//! Sweeps (several runs differing in one parameter) are returned as a list
//! of scenarios by [`paper_sweep`]; [`paper_scenario`] returns a single
//! representative run for every name.

use std::fmt;

use crate::engine::{RandomStream, StreamPurpose};
use crate::mobility::{Area, MobilityModel};
use crate::scenario::{NodeSpec, Protocol, Scenario};
use crate::traffic::{FlowSpec, RateSegment};

pub const NAMES: [&str; 10] = [
    "fig2_saturation",
    "fig3_packet_sizes",
    "fig5_shared_400m",
    "fig7_two_pairs",
    "fig8_interference_pdr",
    "fig10_distance_sweep",
    "fig15_hop_chain",
    "scenario1_static7",
    "scenario2_rwp50",
    "fig27_overhead_sweep",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct UnknownScenario(pub String);

impl fmt::Display for UnknownScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown scenario {:?}; available: {}",
            self.0,
            NAMES.join(", ")
        )
    }
}

const SEED: u64 = 1;

/// Packets per second carrying `kbps` kilobits per second of `size`-byte
/// payloads.
pub fn rate_for(kbps: f64, size: u32) -> f64 {
    kbps * 1000.0 / (f64::from(size) * 8.0)
}

fn segment(start: f64, stop: f64, kbps: f64, size: u32) -> RateSegment {
    RateSegment {
        start,
        stop,
        rate: rate_for(kbps, size),
    }
}

fn flow(id: u32, source: u32, destination: u32, size: u32, schedule: Vec<RateSegment>) -> FlowSpec {
    FlowSpec {
        id,
        source,
        destination,
        packet_size: size,
        schedule,
        requested_bw: None,
    }
}

/// Lone pair 200 m apart; 500 B offered load stepping 100 -> 1600 Kb/s in
/// 10 s segments.
pub fn saturation_ramp() -> Scenario {
    let mut s = Scenario::new("fig2_saturation", Protocol::Aodv, 160.0, SEED);
    s.nodes = vec![NodeSpec::fixed(0, 650.0, 250.0), NodeSpec::fixed(1, 850.0, 250.0)];
    let schedule = (0..16)
        .map(|i| {
            let t = f64::from(i) * 10.0;
            segment(t, t + 10.0, 100.0 * f64::from(i + 1), 500)
        })
        .collect();
    s.flows = vec![flow(1, 0, 1, 500, schedule)];
    s
}

/// Three independent saturated pairs, 650 m apart, with 250, 500 and
/// 1000 byte packets.
pub fn packet_sizes() -> Scenario {
    let mut s = Scenario::new("fig3_packet_sizes", Protocol::Aodv, 30.0, SEED);
    let sizes = [250u32, 500, 1000];
    for (i, &size) in sizes.iter().enumerate() {
        let x = 100.0 + 650.0 * i as f64;
        let (a, b) = (2 * i as u32, 2 * i as u32 + 1);
        s.nodes.push(NodeSpec::fixed(a, x, 150.0));
        s.nodes.push(NodeSpec::fixed(b, x, 350.0));
        s.flows.push(flow(
            i as u32 + 1,
            a,
            b,
            size,
            vec![segment(0.5, 30.0, 3000.0, size)],
        ));
    }
    s
}

/// Two vertical 200 m pairs whose sources are 400 m apart, under the
/// stepped schedule of the shared-medium study.
pub fn shared_medium() -> Scenario {
    let mut s = Scenario::new("fig5_shared_400m", Protocol::Aodv, 300.0, SEED);
    s.nodes = vec![
        NodeSpec::fixed(1, 550.0, 100.0),
        NodeSpec::fixed(2, 550.0, 300.0),
        NodeSpec::fixed(3, 950.0, 300.0),
        NodeSpec::fixed(4, 950.0, 100.0),
    ];
    s.flows = vec![
        flow(
            1,
            2,
            1,
            500,
            vec![
                segment(50.0, 100.0, 200.0, 500),
                segment(100.0, 150.0, 400.0, 500),
                segment(150.0, 200.0, 600.0, 500),
                segment(200.0, 250.0, 800.0, 500),
            ],
        ),
        flow(2, 3, 4, 500, vec![segment(70.0, 250.0, 600.0, 500)]),
    ];
    s
}

/// Two saturated pairs with sources 400 m apart: the first flow runs from
/// 50 s, the second joins at 150 s.
pub fn two_pairs(size: u32) -> Scenario {
    let mut s = Scenario::new(format!("fig7_two_pairs_{size}b"), Protocol::Aodv, 250.0, SEED);
    s.nodes = vec![
        NodeSpec::fixed(1, 550.0, 100.0),
        NodeSpec::fixed(2, 550.0, 300.0),
        NodeSpec::fixed(3, 950.0, 300.0),
        NodeSpec::fixed(4, 950.0, 100.0),
    ];
    s.flows = vec![
        flow(1, 2, 1, size, vec![segment(50.0, 250.0, 2000.0, size)]),
        flow(2, 3, 4, size, vec![segment(150.0, 250.0, 2000.0, size)]),
    ];
    s
}

/// Observed pair 1 -> 2 and a second pair 3 -> 4 whose sender sits 450 m
/// from node 2: close enough to corrupt node 2's receptions, too far from
/// node 1 to be sensed by it.
pub fn interference_pdr() -> Scenario {
    let mut s = Scenario::new("fig8_interference_pdr", Protocol::Aodv, 100.0, SEED);
    s.nodes = vec![
        NodeSpec::fixed(1, 150.0, 250.0),
        NodeSpec::fixed(2, 350.0, 250.0),
        NodeSpec::fixed(3, 800.0, 250.0),
        NodeSpec::fixed(4, 1000.0, 250.0),
    ];
    s.flows = vec![
        flow(1, 1, 2, 500, vec![segment(1.0, 100.0, 400.0, 500)]),
        flow(2, 3, 4, 500, vec![segment(1.0, 100.0, 400.0, 500)]),
    ];
    s
}

/// Pair separations of the interference-threshold sweep, in metres.
pub const SEPARATIONS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

/// Two vertical 100 m pairs `separation` metres apart, each offered
/// 1000 Kb/s of 1000 B packets.
pub fn pair_separation(separation: f64) -> Scenario {
    let mut s = Scenario::new(
        format!("fig10_distance_{}m", separation.round()),
        Protocol::Aodv,
        40.0,
        SEED,
    );
    let x0 = 300.0;
    s.nodes = vec![
        NodeSpec::fixed(0, x0, 200.0),
        NodeSpec::fixed(1, x0, 300.0),
        NodeSpec::fixed(2, x0 + separation, 200.0),
        NodeSpec::fixed(3, x0 + separation, 300.0),
    ];
    s.flows = vec![
        flow(1, 0, 1, 1000, vec![segment(0.5, 40.0, 1000.0, 1000)]),
        flow(2, 2, 3, 1000, vec![segment(0.5, 40.0, 1000.0, 1000)]),
    ];
    s
}

/// Radius and angular step of the hop-chain arc: neighbours are 230 m
/// apart (in range), every other pair is beyond 250 m, and every pair is
/// within the 550 m interference range.
const ARC_RADIUS: f64 = 272.0;
const ARC_STEP_DEG: f64 = 50.0;

/// Saturated 500 B flow over a `hops`-hop chain laid on an arc so that all
/// nodes share one interference zone yet each hop is forced.
pub fn hop_chain(hops: u32) -> Scenario {
    assert!((1..=6).contains(&hops), "the arc fits at most 6 hops");
    let mut s = Scenario::new(format!("fig15_hop_chain_{hops}"), Protocol::Aodv, 40.0, SEED);
    s.area = Area {
        width: 1500.0,
        height: 600.0,
    };
    let (cx, cy) = (750.0, 300.0);
    let start = -(f64::from(hops) * ARC_STEP_DEG) / 2.0;
    for i in 0..=hops {
        let a = (start + f64::from(i) * ARC_STEP_DEG).to_radians();
        s.nodes.push(NodeSpec::fixed(
            i,
            cx + ARC_RADIUS * a.sin(),
            cy - ARC_RADIUS * a.cos(),
        ));
    }
    s.flows = vec![flow(1, 0, hops, 500, vec![segment(0.5, 40.0, 1600.0, 500)])];
    s
}

/// Seven static nodes, all within one carrier-sense zone: S1 -> A -> B -> D
/// is a three-hop line of 180 m hops and S2 joins it at A through C, four
/// hops in total. E is an idle node that only lengthens the flood.
pub fn static_seven(protocol: Protocol) -> Scenario {
    let mut s = Scenario::new("scenario1_static7", protocol, 50.0, SEED);
    s.nodes = vec![
        NodeSpec::fixed(1, 150.0, 100.0), // S1
        NodeSpec::fixed(2, 330.0, 100.0), // A
        NodeSpec::fixed(3, 510.0, 100.0), // B
        NodeSpec::fixed(4, 690.0, 100.0), // D
        NodeSpec::fixed(5, 330.0, 460.0), // S2
        NodeSpec::fixed(6, 330.0, 280.0), // C
        NodeSpec::fixed(7, 870.0, 100.0), // E
    ];
    s.flows = vec![
        flow(1, 1, 4, 500, vec![segment(0.0, 50.0, 200.0, 500)]),
        flow(2, 5, 4, 500, vec![segment(25.0, 50.0, 200.0, 500)]),
    ];
    s
}

/// Random-waypoint mobility used by the mobile scenarios.
pub const RWP: MobilityModel = MobilityModel::RandomWaypoint {
    v_min: 1.0,
    v_max: 20.0,
    pause: 10.0,
};

fn mobile_nodes(count: u32, area: Area, placement_seed: u64) -> Vec<NodeSpec> {
    let mut rng = RandomStream::new(placement_seed).substream(0, StreamPurpose::Placement);
    (0..count)
        .map(|id| {
            let p = area.sample(&mut rng);
            NodeSpec {
                id,
                x: (p.x * 10.0).round() / 10.0,
                y: (p.y * 10.0).round() / 10.0,
                mobility: RWP,
            }
        })
        .collect()
}

/// 50 random-waypoint nodes and four 100 Kb/s flows starting at 5, 15, 30
/// and 45 s. With `background`, a best-effort 800 Kb/s flow (outside
/// admission control) loads the network from the start.
pub fn rwp_fifty(protocol: Protocol, background: bool) -> Scenario {
    let name = if background {
        "scenario2_rwp50_background"
    } else {
        "scenario2_rwp50"
    };
    let mut s = Scenario::new(name, protocol, 60.0, SEED);
    s.nodes = mobile_nodes(50, s.area, 50);
    let starts = [5.0, 15.0, 30.0, 45.0];
    for (i, &start) in starts.iter().enumerate() {
        let i = i as u32;
        s.flows.push(flow(
            i + 1,
            2 * i,
            2 * i + 1,
            500,
            vec![segment(start, 60.0, 100.0, 500)],
        ));
    }
    if background {
        let mut bg = flow(9, 20, 21, 500, vec![segment(1.0, 60.0, 800.0, 500)]);
        bg.requested_bw = Some(0.0);
        s.flows.push(bg);
    }
    s
}

pub const NODE_COUNTS: [u32; 5] = [10, 20, 30, 40, 50];

/// `nodes` random-waypoint nodes with two 200 Kb/s flows for 100 s.
pub fn overhead_network(nodes: u32, protocol: Protocol) -> Scenario {
    let mut s = Scenario::new(format!("fig27_overhead_{nodes}"), protocol, 100.0, SEED);
    s.nodes = mobile_nodes(nodes, s.area, u64::from(nodes));
    s.flows = vec![
        flow(1, 0, 1, 500, vec![segment(1.0, 100.0, 200.0, 500)]),
        flow(2, 2, 3, 500, vec![segment(1.0, 100.0, 200.0, 500)]),
    ];
    s
}

/// The representative single run for `name`.
pub fn paper_scenario(name: &str) -> Result<Scenario, UnknownScenario> {
    Ok(match name {
        "fig2_saturation" => saturation_ramp(),
        "fig3_packet_sizes" => packet_sizes(),
        "fig5_shared_400m" => shared_medium(),
        "fig7_two_pairs" => two_pairs(1000),
        "fig8_interference_pdr" => interference_pdr(),
        "fig10_distance_sweep" => pair_separation(400.0),
        "fig15_hop_chain" => hop_chain(3),
        "scenario1_static7" => static_seven(Protocol::AodvQos),
        "scenario2_rwp50" => rwp_fifty(Protocol::AodvQos, false),
        "fig27_overhead_sweep" => overhead_network(30, Protocol::AodvQos),
        other => return Err(UnknownScenario(other.to_string())),
    })
}

/// Every run behind `name`: parameter sweeps expand to one scenario per
/// point, and the routing comparisons to one per protocol.
pub fn paper_sweep(name: &str) -> Result<Vec<Scenario>, UnknownScenario> {
    let both = |f: fn(Protocol) -> Scenario| vec![f(Protocol::Aodv), f(Protocol::AodvQos)];
    Ok(match name {
        "fig7_two_pairs" => vec![two_pairs(500), two_pairs(1000)],
        "fig10_distance_sweep" => SEPARATIONS.iter().map(|&d| pair_separation(d)).collect(),
        "fig15_hop_chain" => (1..=5).map(hop_chain).collect(),
        "scenario1_static7" => both(static_seven),
        "scenario2_rwp50" => vec![
            rwp_fifty(Protocol::Aodv, false),
            rwp_fifty(Protocol::AodvQos, false),
            rwp_fifty(Protocol::AodvQos, true),
        ],
        "fig27_overhead_sweep" => NODE_COUNTS
            .iter()
            .flat_map(|&n| {
                [
                    overhead_network(n, Protocol::Aodv),
                    overhead_network(n, Protocol::AodvQos),
                ]
            })
            .collect(),
        other => vec![paper_scenario(other)?],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{RangeModel, Reach};

    #[test]
    fn every_name_builds_a_valid_scenario() {
        for name in NAMES {
            for s in paper_sweep(name).unwrap() {
                s.validate().unwrap_or_else(|e| panic!("{}: {e}", s.name));
            }
        }
        assert!(paper_scenario("fig99").is_err());
    }

    #[test]
    fn hop_chain_geometry_forces_every_hop() {
        let r = RangeModel::default();
        for k in 1..=5 {
            let s = hop_chain(k);
            for (i, a) in s.nodes.iter().enumerate() {
                for (j, b) in s.nodes.iter().enumerate().skip(i + 1) {
                    let reach = r.reach(a.position(), b.position());
                    if j == i + 1 {
                        assert_eq!(reach, Reach::InTx);
                    } else {
                        assert_eq!(reach, Reach::InInterference, "k={k} {i}-{j}");
                    }
                }
            }
        }
    }

    #[test]
    fn static_seven_paths() {
        let r = RangeModel::default();
        let s = static_seven(Protocol::Aodv);
        let pos = |id: u32| s.nodes.iter().find(|n| n.id == id).unwrap().position();
        let reach = |a, b| r.reach(pos(a), pos(b));
        let linked = |a, b| reach(a, b) == Reach::InTx;
        // S1 A B D line
        assert!(linked(1, 2) && linked(2, 3) && linked(3, 4));
        assert!(!linked(1, 3) && !linked(2, 4));
        // S2 C A, with no shortcut past A
        assert!(linked(5, 6) && linked(6, 2));
        for (a, b) in [(5, 2), (5, 1), (5, 3), (6, 1), (6, 3), (6, 4)] {
            assert!(!linked(a, b), "{a}-{b}");
        }
        // path nodes share one carrier-sense zone
        for a in 1..=6 {
            for b in a + 1..=6 {
                assert_ne!(reach(a, b), Reach::Out, "{a}-{b}");
            }
        }
    }

    #[test]
    fn interferer_is_hidden_from_the_observed_sender() {
        let r = RangeModel::default();
        let s = interference_pdr();
        let p: Vec<_> = s.nodes.iter().map(NodeSpec::position).collect();
        assert_eq!(r.reach(p[0], p[2]), Reach::Out);
        assert_eq!(r.reach(p[1], p[2]), Reach::InInterference);
        assert_eq!(p[1].distance(p[2]), 450.0);
    }
}
