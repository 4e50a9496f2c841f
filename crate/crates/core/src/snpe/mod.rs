//! The sequential training loop and its building blocks.

mod config;
mod loss;
mod proposal;
mod runner;
mod store;

pub use config::TrainConfig;
pub use loss::{validation_loss, weighted_loss, Example, GRAD_CHUNKS};
pub use proposal::{defensive_proposal_logpdf, defensive_proposal_sample, Proposal};
pub use runner::{posterior_samples, Costs, RoundDiagnostics, Snpe, SnpeCheckpoint, CHECKPOINT_VERSION};
pub use store::{balance_heuristic_log_weight, balance_heuristic_omegas, RoundRecord, RoundStore};
