//! Data simulation, reference oracles and benchmark harnesses.

pub mod bench;
pub mod clt;
pub mod config;
pub mod datasets;
pub mod kalman;
pub mod oracles;
pub mod report;

pub use bench::{abs_coverage_check, bench_estimators, bench_filters, run_replicates, FilterVariant, ReplicateSet};
pub use clt::{clt_rate_check, CltResult};
pub use config::RunConfig;
pub use datasets::{simulate_cox_dataset, simulate_ou_dataset, simulate_sine_dataset, Dataset, ModelSpec, Regime};
pub use kalman::{kalman_oracle, KalmanState};
pub use oracles::{classified_bridge_oracle, fine_grid_mu};
pub use report::{render_records, BenchmarkReport, OutputFormat};
