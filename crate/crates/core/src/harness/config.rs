//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::llm::{GatewayConfig, LlmBackend, RemoteBackend, RemoteConfig, ScriptedBackend};
use crate::money::Ratio;
use crate::proxies::{ProxyKind, ProxyParams};
use crate::scenario::Scenario;
use crate::wdp::{ORACLE_MAX_BIDDERS, ORACLE_MAX_GOODS};

use super::metrics::Aggregation;
use super::HarnessError;

/// Where completions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    /// Fixture replay; without a directory every request is a miss.
    Scripted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fixtures: Option<PathBuf>,
    },
    /// An OpenAI-compatible chat-completions endpoint.
    Remote(RemoteConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Scripted { fixtures: None }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        match self {
            BackendConfig::Scripted { fixtures: Some(dir) } if !dir.is_dir() => {
                Err(HarnessError::Config(format!("fixture directory {} does not exist", dir.display())))
            }
            BackendConfig::Remote(remote) => {
                if std::env::var(&remote.api_key_env).map_or(true, |k| k.is_empty()) {
                    return Err(HarnessError::Config(format!(
                        "remote backend needs an API key in ${}",
                        remote.api_key_env
                    )));
                }
                if !(0.0..=2.0).contains(&remote.temperature) {
                    return Err(HarnessError::Config(format!("temperature {} is outside [0, 2]", remote.temperature)));
                }
                Ok(())
            }
            BackendConfig::Scripted { .. } => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn LlmBackend>, HarnessError> {
        match self {
            BackendConfig::Scripted { fixtures: None } => Ok(Arc::new(ScriptedBackend::new())),
            BackendConfig::Scripted { fixtures: Some(dir) } => ScriptedBackend::from_dir(dir)
                .map(|b| Arc::new(b) as Arc<dyn LlmBackend>)
                .map_err(|e| HarnessError::Config(format!("cannot load fixtures from {}: {e}", dir.display()))),
            BackendConfig::Remote(remote) => RemoteBackend::from_env(remote.clone())
                .map(|b| Arc::new(b) as Arc<dyn LlmBackend>)
                .map_err(|e| HarnessError::Config(e.to_string())),
        }
    }
}

/// Randomly generated bidders, used when no bidder file is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub max_atoms: usize,
    pub max_value_dollars: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { max_atoms: 4, max_value_dollars: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    /// Safety cap on message rounds per person.
    pub max_steps: usize,
    /// Average the error over single items instead of all bundles.
    pub items_only: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig { max_steps: 1000, items_only: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// A shipped scenario name or a path to a scenario file.
    pub scenario: String,
    pub proxy: ProxyKind,
    pub tranches: usize,
    pub tranche_size: usize,
    pub max_iterations: usize,
    pub rng_seed: u64,
    /// How per-person interaction counts are combined for the efficiency curve.
    pub aggregation: Aggregation,
    /// Last interaction budget of the efficiency curve; defaults to the
    /// largest count observed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_budget: Option<u64>,
    /// Seed file written by `seed-gen`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<PathBuf>,
    /// Bidder file written by `build-bidders`; synthetic bidders otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bidders: Option<PathBuf>,
    /// Which seed the robustness and coherence experiments use.
    pub seed_index: usize,
    pub repetitions: usize,
    /// Keep every backend response as a replayable fixture.
    pub record_fixtures: bool,
    pub params: ProxyParams,
    pub backend: BackendConfig,
    /// Second backend of the robustness comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend_b: Option<BackendConfig>,
    pub gateway: GatewayConfig,
    pub synthetic: SyntheticConfig,
    pub learn: LearnConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: "electronics".to_string(),
            proxy: ProxyKind::Xor,
            tranches: 3,
            tranche_size: 3,
            max_iterations: crate::engine::DEFAULT_MAX_ITERATIONS,
            rng_seed: 0,
            aggregation: Aggregation::Max,
            max_budget: None,
            seeds: None,
            bidders: None,
            seed_index: 0,
            repetitions: 10,
            record_fixtures: false,
            params: ProxyParams::default(),
            backend: BackendConfig::default(),
            backend_b: None,
            gateway: GatewayConfig::default(),
            synthetic: SyntheticConfig::default(),
            learn: LearnConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    pub fn persons(&self) -> usize {
        self.tranches * self.tranche_size
    }

    pub fn scenario(&self) -> Result<Scenario, HarnessError> {
        Scenario::resolve(&self.scenario).map_err(|e| HarnessError::Config(format!("scenario `{}`: {e}", self.scenario)))
    }

    /// Checks shared by every experiment.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let scenario = self.scenario()?;
        if self.tranches == 0 || self.tranche_size == 0 {
            return bad("tranches and tranche_size must be positive".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        let p = &self.params;
        if p.epsilon == Ratio::new(0, 1) || p.epsilon.numer() > p.epsilon.denom() {
            return bad(format!("epsilon {} must lie in (0, 1]", p.epsilon));
        }
        if p.delta.numer() == 0 || p.delta.numer() >= p.delta.denom() {
            return bad(format!("delta {} must lie in (0, 1)", p.delta));
        }
        if p.gamma_refresh_period == 0 {
            return bad("gamma_refresh_period must be positive".into());
        }
        if self.gateway.parse_attempts == 0 {
            return bad("gateway.parse_attempts must be positive".into());
        }
        for path in self.seeds.iter().chain(&self.bidders) {
            if !path.is_file() {
                return bad(format!("{} does not exist", path.display()));
            }
        }
        if scenario.num_goods() > ORACLE_MAX_GOODS {
            return bad(format!(
                "scenario has {} goods; optimal welfare is computed for at most {ORACLE_MAX_GOODS}",
                scenario.num_goods()
            ));
        }
        self.backend.validate()
    }

    /// Additional checks for the auction experiment.
    pub fn validate_auction(&self) -> Result<(), HarnessError> {
        self.validate()?;
        if self.tranche_size > ORACLE_MAX_BIDDERS {
            return Err(HarnessError::Config(format!(
                "tranche_size {} exceeds the {ORACLE_MAX_BIDDERS} bidders the welfare oracle supports",
                self.tranche_size
            )));
        }
        Ok(())
    }
}
