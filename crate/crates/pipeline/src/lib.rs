//! Batch corpus generation, evaluation and the external service clients behind them.

pub mod client;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod generate;
pub mod ledger;
pub mod oracle_inputs;
pub mod services;

pub use client::{Client, Clients, Role};
pub use config::PipelineConfig;
pub use error::PipelineError;
pub use evaluate::{run_evaluate, Evaluation};
pub use generate::{read_corpus, run_generate, GenerateOptions, RunSummary};
pub use oracle_inputs::{write_oracle_inputs, OracleInputs};
