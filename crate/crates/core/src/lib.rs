//! Federated learning with a hovering UAV as the parameter server.
//!
//! The UAV broadcasts a global model over an air-to-ground link, a random
//! fraction of terrestrial UEs train it locally and upload their models over
//! equally shared OFDMA subchannels, and the UAV averages them. Every round is
//! charged in wall-clock time and UAV energy (hover propulsion plus broadcast
//! transmission).
//!
//! Module map:
//! - [`channel`]: link budget and Shannon rates
//! - [`fl`]: datasets, the classifier, local SGD and FedAvg
//! - [`energy`]: round latency and UAV energy
//! - [`config`], [`sim`]: scenario setup and the round loop
//! - [`telemetry`]: CSV/JSON output

pub mod channel;
pub mod config;
pub mod energy;
pub mod error;
pub mod fl;
pub mod rng;
pub mod sim;
pub mod telemetry;

pub use config::ScenarioConfig;
pub use error::{Error, IdxError, Result};
pub use sim::{build_scenario, run_config, Execution, RoundRecord, RunResult, Scenario};
