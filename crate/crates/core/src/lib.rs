//! Deterministic discrete-event simulator of IEEE 802.11 DCF ad hoc
//! networks, with passive available-bandwidth estimation and an
//! admission-controlled variant of AODV routing.
//!
//! A run is fully described by a [`Scenario`]; [`simulate`] executes it and
//! returns the event trace and a [`MetricsReport`]. Identical scenarios
//! (including the seed) produce identical traces.
//!
//! ```no_run
//! use manet_qos::{simulate, Scenario};
//!
//! let text = std::fs::read_to_string("scenario.toml").unwrap();
//! let scenario = Scenario::from_toml(&text).unwrap();
//! let out = simulate(&scenario);
//! println!("{}", out.report.to_json());
//! ```

pub mod batch;
pub mod engine;
pub mod estimator;
pub mod mac;
pub mod metrics;
pub mod mobility;
pub mod network;
pub mod paper;
pub mod phy;
pub mod qos;
pub mod routing;
pub mod scenario;
pub mod traffic;

/// Dense node index inside a run (position in the scenario's node list).
pub type NodeId = u32;

pub use engine::SimTime;
pub use metrics::{MetricsReport, Trace};
pub use network::{simulate, Network, RunOutput};
pub use scenario::{Protocol, Scenario, ScenarioError};
