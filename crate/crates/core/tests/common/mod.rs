#![allow(dead_code)]

use manet_qos::scenario::NodeSpec;
use manet_qos::traffic::{FlowSpec, RateSegment};
use manet_qos::{Protocol, Scenario};

pub fn cbr(id: u32, source: u32, destination: u32, size: u32, start: f64, stop: f64, rate: f64) -> FlowSpec {
    FlowSpec {
        id,
        source,
        destination,
        packet_size: size,
        schedule: vec![RateSegment { start, stop, rate }],
        requested_bw: None,
    }
}

/// Static nodes at the given coordinates, labelled 0, 1, ...
pub fn fixed_scenario(protocol: Protocol, duration: f64, at: &[(f64, f64)]) -> Scenario {
    let mut s = Scenario::new("test", protocol, duration, 1);
    s.nodes = at
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| NodeSpec::fixed(i as u32, x, y))
        .collect();
    s
}

/// `n` nodes on a circle of radius 100 m: every pair is in range.
pub fn clique(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / n as f64;
            (750.0 + 100.0 * a.cos(), 250.0 + 100.0 * a.sin())
        })
        .collect()
}

/// Straight chain with `spacing` metres between neighbours.
pub fn line(n: usize, spacing: f64) -> Vec<(f64, f64)> {
    (0..n).map(|i| (100.0 + spacing * i as f64, 250.0)).collect()
}
