//! Iterative combinatorial auctions with preference-eliciting proxies.
//!
//! The crate bundles the auction engine and its exact winner determination,
//! the classical DNF learning proxy, proxies that talk to their person
//! through a language model, an LLM gateway with scripted and remote
//! backends, LLM-simulated people, and the experiment harness.

pub mod bundle;
pub mod demand;
pub mod dnf;
pub mod engine;
pub mod harness;
pub mod llm;
pub mod money;
pub mod person;
pub mod proxies;
pub mod scenario;
pub mod sim;
pub mod wdp;
pub mod xor;

pub use bundle::Bundle;
pub use demand::{best_demanded, demand_set, respond_to_demand, DemandResponse, PriceFunction};
pub use dnf::{dnf_handle_message, learn_step, learn_xor_full, DnfProxy};
pub use engine::{
    check_equilibrium, run_ceca, AuctionOutcome, EngineError, IterationRecord, Proxy, ProxyError, Termination,
    DEFAULT_MAX_ITERATIONS,
};
pub use llm::{Gateway, GatewayConfig, LlmBackend, LlmError, TemplateId, Transcript};
pub use money::{Money, Ratio};
pub use person::{PersonChannel, PersonError, QueryCounts, ScriptedPerson};
pub use proxies::{vd2_infer_bid, InferenceFunction, LlmProxy, ProxyKind, ProxyParams};
pub use scenario::{Good, Scenario};
pub use sim::{build_cached_bid, generate_seed, Seed, SimPerson};
pub use wdp::{brute_force_wdp, lindahl_prices, solve_wdp, Allocation, WdpSolution};
pub use xor::{Atom, Valuation, XorBid};
