//! Round-based training strategies over the split model.
//!
//! A [`Coordinator`] owns the shared server model and drives one round at a
//! time over a slice of [`ClientLink`]s, which hide whether a client lives in
//! this process or behind a TCP connection.

mod config;
mod fedavg;
mod links;
mod report;
mod rounds;
mod world;

pub use config::{derive_seed, DatasetSpec, ExperimentConfig, GdaMode, Strategy, StrategyKind};
pub use fedavg::fedavg;
pub use links::{serve_client, ClientLink, InProcLink, TcpLink};
pub use report::RoundReport;
pub use rounds::{inproc_links, run_experiment, run_with_links, Coordinator};
pub use world::{ClientWorker, World};
