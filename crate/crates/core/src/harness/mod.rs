//! Run configuration, seeding, the training loop and metrics output.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod rng;

pub use config::{load_config, Mode, ScenarioConfig};
pub use experiment::{
    run_experiment, run_experiment_with, trailing_mean_reward, NoopObserver, RunObserver,
    Simulation,
};
pub use metrics::{read_csv, write_csv, MetricsRecord, MetricsWriter, CSV_HEADER};
pub use rng::{rng_fork, SimRng};
