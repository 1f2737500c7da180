//! Scenario description: topology, mobility, traffic, protocol and model
//! parameters. Stored as TOML.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::estimator::DEFAULT_WINDOW;
use crate::mac::DEFAULT_QUEUE_CAPACITY;
use crate::mobility::{Area, MobilityModel};
use crate::phy::{PhyParams, Position, RangeModel};
use crate::qos::{DEFAULT_GUARD, DEFAULT_INACTIVITY};
use crate::traffic::FlowSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Plain on-demand routing.
    Aodv,
    /// On-demand routing with admission control and reservations.
    AodvQos,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Aodv => "aodv",
            Protocol::AodvQos => "aodv_qos",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacConfig {
    pub rts_cts: bool,
    pub queue_capacity: usize,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            rts_cts: true,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// seconds
    pub window: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            window: DEFAULT_WINDOW.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmissionConfig {
    /// seconds during which a fresh grant is subtracted from estimates
    pub guard: f64,
    /// seconds without data before a reservation is released
    pub inactivity: f64,
}

impl Default for AdmissionConfig {
    fn default() -> Self {
        AdmissionConfig {
            guard: DEFAULT_GUARD.as_secs_f64(),
            inactivity: DEFAULT_INACTIVITY.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "is_static")]
    pub mobility: MobilityModel,
}

fn is_static(m: &MobilityModel) -> bool {
    *m == MobilityModel::Static
}

impl NodeSpec {
    pub fn fixed(id: u32, x: f64, y: f64) -> Self {
        NodeSpec {
            id,
            x,
            y,
            mobility: MobilityModel::Static,
        }
    }

    pub fn position(&self) -> Position {
        Position::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    /// seconds
    pub duration: f64,
    pub seed: u64,
    pub protocol: Protocol,
    #[serde(default)]
    pub area: Area,
    #[serde(default)]
    pub phy: PhyParams,
    #[serde(default)]
    pub ranges: RangeModel,
    #[serde(default)]
    pub mac: MacConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub admission: AdmissionConfig,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ScenarioError {
    /// Dotted location of the offending field.
    pub fn path(&self) -> &str {
        match self {
            ScenarioError::Parse { path, .. } | ScenarioError::Invalid { path, .. } => path,
        }
    }

    fn invalid(path: impl Into<String>, message: impl fmt::Display) -> Self {
        ScenarioError::Invalid {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl Scenario {
    pub fn new(name: impl Into<String>, protocol: Protocol, duration: f64, seed: u64) -> Self {
        Scenario {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            duration,
            seed,
            protocol,
            area: Area::default(),
            phy: PhyParams::default(),
            ranges: RangeModel::default(),
            mac: MacConfig::default(),
            estimator: EstimatorConfig::default(),
            admission: AdmissionConfig::default(),
            nodes: Vec::new(),
            flows: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ScenarioError::Parse {
            path: ".".into(),
            message: e.message().to_string(),
        })?;
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::Parse {
                path,
                message: e.into_inner().message().to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes to TOML")
    }

    pub fn duration_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::invalid(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(ScenarioError::invalid("duration", "must be positive"));
        }
        if !(self.area.width > 0.0 && self.area.height > 0.0) {
            return Err(ScenarioError::invalid(
                "area",
                "width and height must be positive",
            ));
        }
        self.phy
            .validate()
            .map_err(|e| ScenarioError::invalid("phy", e))?;
        if !self.ranges.is_valid() {
            return Err(ScenarioError::invalid(
                "ranges",
                "need 0 < tx_range <= interference_range",
            ));
        }
        if self.mac.queue_capacity == 0 {
            return Err(ScenarioError::invalid("mac.queue_capacity", "must be positive"));
        }
        if !(self.estimator.window > 0.0) {
            return Err(ScenarioError::invalid("estimator.window", "must be positive"));
        }
        if !(self.admission.guard >= 0.0) {
            return Err(ScenarioError::invalid("admission.guard", "must not be negative"));
        }
        if !(self.admission.inactivity > 0.0) {
            return Err(ScenarioError::invalid("admission.inactivity", "must be positive"));
        }
        if self.nodes.is_empty() {
            return Err(ScenarioError::invalid("nodes", "at least one node is required"));
        }
        let mut ids = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !ids.insert(n.id) {
                return Err(ScenarioError::invalid(
                    format!("nodes[{i}].id"),
                    format!("duplicate id {}", n.id),
                ));
            }
            if !self.area.contains(n.position()) {
                return Err(ScenarioError::invalid(
                    format!("nodes[{i}]"),
                    "position outside the area",
                ));
            }
            if !n.mobility.is_valid() {
                return Err(ScenarioError::invalid(
                    format!("nodes[{i}].mobility"),
                    "need 0 <= v_min <= v_max and pause >= 0",
                ));
            }
        }
        let mut flow_ids = BTreeSet::new();
        for (i, f) in self.flows.iter().enumerate() {
            if !flow_ids.insert(f.id) {
                return Err(ScenarioError::invalid(
                    format!("flows[{i}].id"),
                    format!("duplicate id {}", f.id),
                ));
            }
            f.validate()
                .map_err(|e| ScenarioError::invalid(format!("flows[{i}]"), e))?;
            if !ids.contains(&f.source) {
                return Err(ScenarioError::invalid(
                    format!("flows[{i}].source"),
                    format!("unknown node {}", f.source),
                ));
            }
            if !ids.contains(&f.destination) {
                return Err(ScenarioError::invalid(
                    format!("flows[{i}].destination"),
                    format!("unknown node {}", f.destination),
                ));
            }
            if f.source == f.destination {
                return Err(ScenarioError::invalid(
                    format!("flows[{i}]"),
                    "source equals destination",
                ));
            }
            if f.schedule.iter().any(|s| s.stop > self.duration) {
                return Err(ScenarioError::invalid(
                    format!("flows[{i}].schedule"),
                    "extends past the scenario duration",
                ));
            }
            if matches!(f.requested_bw, Some(bw) if !(bw >= 0.0 && bw.is_finite())) {
                return Err(ScenarioError::invalid(
                    format!("flows[{i}].requested_bw"),
                    "must be a non-negative number",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "pair"
duration = 10.0
seed = 7
protocol = "aodv"

[[nodes]]
id = 0
x = 100.0
y = 100.0

[[nodes]]
id = 1
x = 300.0
y = 100.0

[[flows]]
id = 1
source = 0
destination = 1
packet_size = 500
schedule = [{ start = 1.0, stop = 9.0, rate = 50.0 }]
"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.phy, PhyParams::default());
        assert_eq!(s.mac.queue_capacity, 50);
        assert!(s.mac.rts_cts);
        assert_eq!(s.flows[0].requested_bw(), 200_000.0);
        assert_eq!(s.area, Area::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut s = Scenario::from_toml(MINIMAL).unwrap();
        s.nodes[1].mobility = MobilityModel::RandomWaypoint {
            v_min: 1.0,
            v_max: 5.0,
            pause: 2.0,
        };
        let back = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn type_errors_carry_the_field_path() {
        let bad = MINIMAL.replace("packet_size = 500", "packet_size = \"big\"");
        let err = Scenario::from_toml(&bad).unwrap_err();
        assert_eq!(err.path(), "flows[0].packet_size");

        let bad = MINIMAL.replace("protocol = \"aodv\"", "protocol = \"olsr\"");
        assert_eq!(Scenario::from_toml(&bad).unwrap_err().path(), "protocol");

        let bad = MINIMAL.replace("seed = 7", "seed = 7\nwarp = 9");
        assert!(matches!(
            Scenario::from_toml(&bad),
            Err(ScenarioError::Parse { .. })
        ));
    }

    #[test]
    fn semantic_errors_carry_the_field_path() {
        let bad = MINIMAL.replace("destination = 1", "destination = 9");
        assert_eq!(
            Scenario::from_toml(&bad).unwrap_err().path(),
            "flows[0].destination"
        );

        let bad = MINIMAL.replace("stop = 9.0", "stop = 11.0");
        assert_eq!(Scenario::from_toml(&bad).unwrap_err().path(), "flows[0].schedule");

        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert_eq!(Scenario::from_toml(&bad).unwrap_err().path(), "schema_version");

        let bad = MINIMAL.replace("x = 300.0", "x = 3000.0");
        assert_eq!(Scenario::from_toml(&bad).unwrap_err().path(), "nodes[1]");
    }
}
