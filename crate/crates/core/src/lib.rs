//! Federated multi-agent reinforcement learning for dynamic spectrum access.
//!
//! Secondary-user pairs learn channel-access policies with REINFORCE on a
//! shared set of channels that primary users occupy intermittently. In
//! federated mode a server periodically averages the policies of a random
//! subset of agents; in distributed mode the agents never communicate.
//!
//! Modules, bottom-up:
//! - [`channel`]: path loss, Rician fading, SINR and Shannon throughput.
//! - [`spectrum_env`]: PU Markov occupancy and the multi-agent step.
//! - [`policy_agent`]: two-layer softmax policy and its gradient.
//! - [`federation`]: participant sampling and parameter averaging.
//! - [`harness`]: configuration, seeded streams, the run loop and CSV output.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod federation;
pub mod harness;
pub mod policy_agent;
pub mod spectrum_env;

pub use error::{Error, Result};
pub use federation::{aggregate, fl_round, select_participants, GlobalModel, RoundPlan};
pub use harness::{
    load_config, read_csv, rng_fork, run_experiment, write_csv, MetricsRecord, Mode,
    ScenarioConfig, Simulation,
};
pub use policy_agent::{GradientVector, PolicyDims, PolicyParams, Trajectory};
pub use spectrum_env::{ActionCode, Observation, PuState, ScenarioTopology, SpectrumEnv};
