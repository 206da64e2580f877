//! Discrete-time multi-agent availability simulator for reconfigurable
//! networked software systems.
//!
//! Systems are modeled as a graph of failable component and connector agents
//! carrying a service/business workload layer and a reconfiguration rule
//! table. Seeded Monte Carlo runs report operational availability
//! A0 = MUT / (MUT + MDT) over time, and small models can be verified against
//! an exact analytic oracle.

pub mod cli;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod reconfig;
pub mod scenario;
