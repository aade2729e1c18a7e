//! Seeded agent-based simulation of belief and source-trust dynamics.
//!
//! Agents hold a credence in a binary hypothesis `H` and, per source, a
//! model of that source's reliability. Trust updaters maintain a discretized
//! reliability density and revise it from the fit between each report and
//! their current belief; fixed-trust agents keep a constant reliability.
//! Agents learn from noisy world data and, when networked, from neighbours'
//! assertions over a Watts-Strogatz small world. Each networked condition
//! has a shadow condition that sees the same world data but never talks.
//!
//! Module map:
//!
//! - [`model`]: update rules, trust grids, assertion rule, outcome baseline
//! - [`agent`]: agent state and report processing
//! - [`topology`]: ring lattices and small-world graphs
//! - [`engine`]: scheduler, runs and batches
//! - [`metrics`]: scores and aggregation
//! - [`config`], [`presets`], [`output`]: configuration, experiments, CSV
//! - [`seed`]: sub-seeding of all random streams

pub mod agent;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod output;
pub mod presets;
pub mod prob;
pub mod seed;
pub mod topology;

pub use agent::{receive_report, AgentState, Report, SourceId};
pub use config::{parse_config, Condition, ConfigError, ConfigLayer, SimConfig};
pub use engine::{run, run_batch, EngineError, RunOutput, Simulator, Trajectory};
pub use model::{
    decide_assertion, expected_trust, make_beta_grid, outcome_posterior, update_belief, update_trust_grid, Claim,
    ModelError, TrustGrid, TrustModel,
};
pub use presets::{run_experiment, run_preset, ExperimentPreset, ExperimentRequest};
pub use prob::Probability;
