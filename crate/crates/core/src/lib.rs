//! Deterministic discrete-event simulator for mobile ad hoc networks running
//! AODV or SD-AODV, with wormhole, byzantine and blackhole adversaries.
//!
//! A run is a [`world::World`] built from a [`config::ScenarioConfig`]; the
//! [`harness`] module turns runs and sweeps into STAT files and CSV tables.

use serde::{Deserialize, Serialize};

pub mod adversary;
pub mod aodv;
pub mod config;
pub mod field;
pub mod harness;
pub mod medium;
pub mod packet;
pub mod sdaodv;
pub mod sim;
pub mod telemetry;
pub mod world;

pub use config::{Protocol, ScenarioConfig};
pub use sim::SimTime;
pub use world::World;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
