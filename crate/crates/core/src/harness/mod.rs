//! Experiment orchestration: configuration, bidder pipelines, metrics and
//! run artifacts.

pub mod artifacts;
pub mod config;
pub mod experiments;
pub mod metrics;
pub mod synthetic;

use std::io;
use std::sync::Arc;

use thiserror::Error;

use crate::engine::{EngineError, ProxyError};
use crate::llm::{Gateway, GatewayConfig, LlmError, RecordingBackend};
use crate::scenario::ScenarioError;
use crate::wdp::WdpError;

pub use artifacts::BidderRecord;
pub use config::{BackendConfig, ExperimentConfig, LearnConfig, SyntheticConfig};
pub use experiments::{
    build_bidders, generate_seeds, load_bidders, load_seed, run_auction_experiment, run_coherence_experiment,
    run_learning_experiment, run_robustness_experiment, AnyProxy, AuctionReport,
};
pub use metrics::{efficiency_curve, optimal_welfare, Aggregation, CurvePoint, EfficiencyRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid bidders: {0}")]
    Bidders(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Proxy(#[from] ProxyError),
    #[error("auction of tranche {tranche} failed: {source}")]
    Engine { tranche: usize, source: EngineError },
    #[error(transparent)]
    Wdp(#[from] WdpError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A gateway over `backend`, optionally recording every response.
pub fn open_gateway(
    backend: &BackendConfig,
    config: &GatewayConfig,
    record: bool,
) -> Result<(Arc<Gateway>, Option<Arc<RecordingBackend>>), HarnessError> {
    let inner = backend.build()?;
    if record {
        let recorder = Arc::new(RecordingBackend::new(inner));
        Ok((Arc::new(Gateway::new(recorder.clone(), config.clone())), Some(recorder)))
    } else {
        Ok((Arc::new(Gateway::new(inner, config.clone())), None))
    }
}
