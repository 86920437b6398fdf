//! The four experiments: auctions, learning curves, cross-model robustness
//! and valuation coherence, plus the seed and bidder pipelines feeding them.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::demand::PriceFunction;
use crate::dnf::DnfProxy;
use crate::engine::{check_equilibrium, run_ceca, AuctionOutcome, IterationRecord, Proxy, ProxyError, Termination};
use crate::llm::{Gateway, Transcript};
use crate::money::Money;
use crate::person::QueryCounts;
use crate::proxies::{LlmProxy, ProxyKind, ProxyParams};
use crate::scenario::{BidRecord, Scenario};
use crate::sim::{build_cached_bid, generate_seed, value_bundle, Seed, SimPerson, SEED_VERSIONS};
use crate::wdp::lindahl_prices;
use crate::xor::XorBid;

use super::artifacts::{read_jsonl, write_json, write_jsonl, BidderRecord};
use super::config::ExperimentConfig;
use super::metrics::{
    curve_points, efficiency_curve, efficiency_table, mean_abs_error, optimal_welfare, write_efficiency_csv,
    CurvePoint, EfficiencyRow,
};
use super::synthetic::synthetic_bidders;
use super::HarnessError;

/// Either kind of proxy, so one auction can be run over a uniform slice.
#[allow(clippy::large_enum_variant)]
pub enum AnyProxy {
    Dnf(DnfProxy<SimPerson>),
    Llm(Box<LlmProxy<SimPerson>>),
}

impl AnyProxy {
    pub fn new(kind: ProxyKind, params: ProxyParams, person: SimPerson, gateway: Arc<Gateway>) -> Self {
        match kind {
            ProxyKind::Xor => AnyProxy::Dnf(DnfProxy::new(person)),
            _ => {
                let scenario = Arc::new(person.scenario().clone());
                AnyProxy::Llm(Box::new(LlmProxy::new(kind, params, person, scenario, gateway)))
            }
        }
    }

    pub fn candidate(&self) -> &XorBid {
        match self {
            AnyProxy::Dnf(p) => p.state(),
            AnyProxy::Llm(p) => p.candidate(),
        }
    }

    pub fn transcript(&self) -> Option<&Transcript> {
        match self {
            AnyProxy::Dnf(_) => None,
            AnyProxy::Llm(p) => Some(p.transcript()),
        }
    }
}

impl Proxy for AnyProxy {
    fn goods(&self) -> usize {
        match self {
            AnyProxy::Dnf(p) => p.goods(),
            AnyProxy::Llm(p) => p.goods(),
        }
    }

    fn handle_message(&mut self, offered: Bundle, prices: &PriceFunction) -> Result<(bool, XorBid), ProxyError> {
        match self {
            AnyProxy::Dnf(p) => p.handle_message(offered, prices),
            AnyProxy::Llm(p) => p.handle_message(offered, prices),
        }
    }

    fn counts(&self) -> QueryCounts {
        match self {
            AnyProxy::Dnf(p) => p.counts(),
            AnyProxy::Llm(p) => p.counts(),
        }
    }
}

/// Generate `tranches × tranche_size` seeds; the step-1 version of each is
/// drawn from a generator seeded with `rng_seed`.
pub fn generate_seeds(config: &ExperimentConfig, scenario: &Scenario, gateway: &Gateway) -> Result<Vec<Seed>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut seeds = Vec::with_capacity(config.persons());
    for tranche in 0..config.tranches {
        for index in 0..config.tranche_size {
            let choice = rng.gen_range(0..SEED_VERSIONS);
            log::info!("generating seed {tranche}/{index}");
            seeds.push(generate_seed(scenario, gateway, choice, tranche, index)?);
        }
    }
    Ok(seeds)
}

/// Build the cached bid of every seed.
pub fn build_bidders(scenario: &Scenario, seeds: &[Seed], gateway: &Gateway) -> Result<Vec<BidderRecord>, HarnessError> {
    seeds
        .iter()
        .map(|seed| {
            log::info!("valuing all bundles for {}", seed.id());
            let bid = build_cached_bid(seed, scenario, gateway)?;
            Ok(BidderRecord::new(scenario, seed.clone(), &bid))
        })
        .collect()
}

/// The configured bidders: the bidder file if one is given, random ones
/// otherwise. Exactly `tranches × tranche_size` are returned.
pub fn load_bidders(config: &ExperimentConfig, scenario: &Scenario) -> Result<Vec<BidderRecord>, HarnessError> {
    let wanted = config.persons();
    let Some(path) = &config.bidders else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let s = config.synthetic;
        return Ok(synthetic_bidders(&mut rng, scenario, config.tranches, config.tranche_size, s.max_atoms, s.max_value_dollars));
    };
    let mut bidders: Vec<BidderRecord> = read_jsonl(path)?;
    if bidders.len() < wanted {
        return Err(HarnessError::Bidders(format!(
            "{} holds {} bidders but {} tranches of {} need {wanted}",
            path.display(),
            bidders.len(),
            config.tranches,
            config.tranche_size
        )));
    }
    bidders.truncate(wanted);
    for b in &bidders {
        if b.seed.provenance.scenario != scenario.name {
            return Err(HarnessError::Bidders(format!(
                "bidder {} belongs to scenario `{}`, not `{}`",
                b.id, b.seed.provenance.scenario, scenario.name
            )));
        }
        b.bid(scenario)?;
    }
    Ok(bidders)
}

/// The seed used by the single-seed experiments.
pub fn load_seed(config: &ExperimentConfig) -> Result<Seed, HarnessError> {
    let seeds: Vec<Seed> = match (&config.seeds, &config.bidders) {
        (Some(path), _) => read_jsonl(path)?,
        (None, Some(path)) => read_jsonl::<BidderRecord>(path)?.into_iter().map(|b| b.seed).collect(),
        (None, None) => return Err(HarnessError::Config("a seed file or bidder file is required".into())),
    };
    let count = seeds.len();
    seeds.into_iter().nth(config.seed_index).ok_or_else(|| {
        HarnessError::Config(format!("seed_index {} is out of range ({count} seeds)", config.seed_index))
    })
}

/// One auction over one tranche.
#[derive(Debug, Clone)]
pub struct TrancheRun {
    pub tranche: usize,
    pub bidder_ids: Vec<String>,
    pub true_bids: Vec<XorBid>,
    pub optimum: Money,
    pub outcome: AuctionOutcome,
    pub points: Vec<CurvePoint>,
    pub equilibrium: bool,
    pub transcripts: Vec<Option<Transcript>>,
}

impl TrancheRun {
    pub fn final_efficiency(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.efficiency)
    }
}

#[derive(Debug, Clone)]
pub struct AuctionReport {
    pub proxy: ProxyKind,
    pub tranches: Vec<TrancheRun>,
    pub max_budget: u64,
    pub table: Vec<EfficiencyRow>,
}

/// Combine per-tranche curve points into the efficiency table.
pub fn tabulate(points: &[Vec<CurvePoint>], max_budget: Option<u64>) -> (u64, Vec<EfficiencyRow>) {
    let budget = max_budget.unwrap_or_else(|| {
        points.iter().filter_map(|p| p.last()).map(|p| p.interactions.ceil() as u64).max().unwrap_or(0)
    });
    let budget = budget.max(1);
    let curves: Vec<Vec<f64>> = points.iter().map(|p| efficiency_curve(p, budget)).collect();
    (budget, efficiency_table(&curves))
}

/// Run one auction per tranche and measure it against the true optimum.
pub fn run_auction_experiment(
    config: &ExperimentConfig,
    scenario: &Arc<Scenario>,
    bidders: &[BidderRecord],
    gateway: &Arc<Gateway>,
) -> Result<AuctionReport, HarnessError> {
    let mut tranches = Vec::new();
    for (tranche, group) in bidders.chunks(config.tranche_size).take(config.tranches).enumerate() {
        let true_bids = group.iter().map(|b| b.bid(scenario)).collect::<Result<Vec<_>, _>>()?;
        let optimum = optimal_welfare(&true_bids)?;
        let mut proxies: Vec<AnyProxy> = group
            .iter()
            .zip(&true_bids)
            .map(|(b, truth)| {
                let person = SimPerson::from_cached(Arc::clone(scenario), b.seed.clone(), truth.clone(), Arc::clone(gateway));
                AnyProxy::new(config.proxy, config.params, person, Arc::clone(gateway))
            })
            .collect();
        log::info!("tranche {tranche}: {} auction over {} bidders", config.proxy, group.len());
        let outcome =
            run_ceca(&mut proxies, config.max_iterations).map_err(|source| HarnessError::Engine { tranche, source })?;
        let points = curve_points(&outcome.records, &true_bids, optimum, config.aggregation);
        tranches.push(TrancheRun {
            tranche,
            bidder_ids: group.iter().map(|b| b.id.clone()).collect(),
            equilibrium: check_equilibrium(&outcome, &true_bids),
            transcripts: proxies.iter().map(|p| p.transcript().cloned()).collect(),
            true_bids,
            optimum,
            outcome,
            points,
        });
    }
    let points: Vec<Vec<CurvePoint>> = tranches.iter().map(|t| t.points.clone()).collect();
    let (max_budget, table) = tabulate(&points, config.max_budget);
    Ok(AuctionReport { proxy: config.proxy, tranches, max_budget, table })
}

/// Per-tranche facts persisted next to the iteration records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrancheSummary {
    pub tranche: usize,
    pub bidder_ids: Vec<String>,
    pub true_bids: Vec<BidRecord>,
    pub optimum_cents: u64,
    pub terminated: Termination,
    pub iterations: usize,
    pub final_efficiency: f64,
    pub equilibrium: bool,
    pub initial_interactions: Vec<u64>,
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrancheRecord {
    pub tranche: usize,
    pub record: IterationRecord,
}

impl AuctionReport {
    pub fn mean_final_efficiency(&self) -> f64 {
        self.tranches.iter().map(TrancheRun::final_efficiency).sum::<f64>() / self.tranches.len().max(1) as f64
    }

    /// Write tranche summaries, iteration records, transcripts and the
    /// efficiency table into `dir`.
    pub fn write(&self, dir: &Path, scenario: &Scenario) -> Result<(), HarnessError> {
        let summaries: Vec<TrancheSummary> = self
            .tranches
            .iter()
            .map(|t| TrancheSummary {
                tranche: t.tranche,
                bidder_ids: t.bidder_ids.clone(),
                true_bids: t.true_bids.iter().map(|b| scenario.bid_record(b)).collect(),
                optimum_cents: t.optimum.cents(),
                terminated: t.outcome.terminated,
                iterations: t.outcome.records.len(),
                final_efficiency: t.final_efficiency(),
                equilibrium: t.equilibrium,
                initial_interactions: t.outcome.initial_interactions.clone(),
            })
            .collect();
        write_jsonl(&dir.join("tranches.jsonl"), &summaries)?;
        let records: Vec<TrancheRecord> = self
            .tranches
            .iter()
            .flat_map(|t| t.outcome.records.iter().map(|r| TrancheRecord { tranche: t.tranche, record: r.clone() }))
            .collect();
        write_jsonl(&dir.join("records.jsonl"), &records)?;
        let transcripts = dir.join("transcripts");
        for t in &self.tranches {
            for (i, transcript) in t.transcripts.iter().enumerate() {
                if let Some(transcript) = transcript {
                    fs::create_dir_all(&transcripts)?;
                    write_jsonl(&transcripts.join(format!("tranche{}-bidder{i}.jsonl", t.tranche)), transcript.events())?;
                }
            }
        }
        let file = fs::File::create(dir.join("efficiency.csv"))?;
        write_efficiency_csv(file, &self.table, self.tranches.len())?;
        Ok(())
    }
}

/// Recompute the efficiency table of a written auction run.
pub fn efficiency_from_run(
    dir: &Path,
    scenario: &Scenario,
    config: &ExperimentConfig,
) -> Result<(u64, Vec<EfficiencyRow>, usize), HarnessError> {
    let summaries: Vec<TrancheSummary> = read_jsonl(&dir.join("tranches.jsonl"))?;
    let records: Vec<TrancheRecord> = read_jsonl(&dir.join("records.jsonl"))?;
    let mut points = Vec::with_capacity(summaries.len());
    for s in &summaries {
        let truths = s.true_bids.iter().map(|b| scenario.bid_from_record(b)).collect::<Result<Vec<_>, _>>()?;
        let mine: Vec<IterationRecord> =
            records.iter().filter(|r| r.tranche == s.tranche).map(|r| r.record.clone()).collect();
        points.push(curve_points(&mine, &truths, Money::from_cents(s.optimum_cents), config.aggregation));
    }
    let (budget, table) = tabulate(&points, config.max_budget);
    Ok((budget, table, summaries.len()))
}

/// One message round of the learning experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnStep {
    pub step: usize,
    pub interactions: u64,
    /// Error of the candidate under the configured metric, in cents.
    pub error_cents: f64,
    pub all_bundles_error_cents: f64,
    pub items_only_error_cents: f64,
    /// Error of the bid the proxy reported, under the configured metric.
    pub reported_error_cents: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnTrace {
    pub bidder: String,
    pub steps: Vec<LearnStep>,
    /// Whether the proxy finished before the step cap.
    pub completed: bool,
}

/// Elicit each bidder alone: the proxy is always offered the empty bundle at
/// prices equal to its own candidate bid.
///
/// A DNF proxy finishes once its person is satisfied; a hybrid proxy also
/// needs its reported bid to have collapsed onto the candidate.
pub fn run_learning_experiment(
    config: &ExperimentConfig,
    scenario: &Arc<Scenario>,
    bidders: &[BidderRecord],
    gateway: &Arc<Gateway>,
) -> Result<Vec<LearnTrace>, HarnessError> {
    if !matches!(config.proxy, ProxyKind::Xor | ProxyKind::Hybrid) {
        return Err(HarnessError::Config(format!("the learning experiment runs xor or hybrid, not {}", config.proxy)));
    }
    let items_only = config.learn.items_only;
    let mut traces = Vec::with_capacity(bidders.len());
    for bidder in bidders {
        let truth = bidder.bid(scenario)?;
        let person = SimPerson::from_cached(Arc::clone(scenario), bidder.seed.clone(), truth.clone(), Arc::clone(gateway));
        let mut proxy = AnyProxy::new(config.proxy, config.params, person, Arc::clone(gateway));
        let step = |step, interactions, candidate: &XorBid, reported: &XorBid| LearnStep {
            step,
            interactions,
            error_cents: mean_abs_error(&truth, candidate, items_only),
            all_bundles_error_cents: mean_abs_error(&truth, candidate, false),
            items_only_error_cents: mean_abs_error(&truth, candidate, true),
            reported_error_cents: mean_abs_error(&truth, reported, items_only),
        };
        let empty = XorBid::new(scenario.num_goods());
        let mut steps = vec![step(0, 0, &empty, &empty)];
        let mut completed = false;
        for n in 1..=config.learn.max_steps {
            let prices = lindahl_prices(proxy.candidate(), Money::ZERO);
            let (flag, reported) = proxy.handle_message(Bundle::EMPTY, &prices)?;
            steps.push(step(n, proxy.interactions(), proxy.candidate(), &reported));
            if flag && (config.proxy == ProxyKind::Xor || &reported == proxy.candidate()) {
                completed = true;
                break;
            }
        }
        if !completed {
            log::warn!("{} did not finish within {} steps", bidder.id, config.learn.max_steps);
        }
        traces.push(LearnTrace { bidder: bidder.id.clone(), steps, completed });
    }
    Ok(traces)
}

pub fn write_error_csv<W: std::io::Write>(out: W, traces: &[LearnTrace]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "bidder",
        "step",
        "interactions",
        "mean_abs_error",
        "all_bundles_error",
        "items_only_error",
        "reported_error",
    ])?;
    let dollars = |cents: f64| format!("{:.6}", cents / 100.0);
    for trace in traces {
        for s in &trace.steps {
            w.write_record([
                trace.bidder.clone(),
                s.step.to_string(),
                s.interactions.to_string(),
                dollars(s.error_cents),
                dollars(s.all_bundles_error_cents),
                dollars(s.items_only_error_cents),
                dollars(s.reported_error_cents),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RobustnessRow {
    pub bundle: Bundle,
    pub value_a: Money,
    pub value_b: Money,
}

/// Value every bundle of one seed under two backends.
pub fn run_robustness_experiment(
    scenario: &Scenario,
    seed: &Seed,
    gateway_a: &Gateway,
    gateway_b: &Gateway,
) -> Result<Vec<RobustnessRow>, HarnessError> {
    let a = build_cached_bid(seed, scenario, gateway_a)?;
    let b = build_cached_bid(seed, scenario, gateway_b)?;
    Ok(Bundle::all(scenario.num_goods())
        .map(|bundle| RobustnessRow { bundle, value_a: a.induced_value(bundle), value_b: b.induced_value(bundle) })
        .collect())
}

/// Codes joined by `+`; `EMPTY` for the empty bundle.
pub fn bundle_column(scenario: &Scenario, bundle: Bundle) -> String {
    if bundle.is_empty() {
        "EMPTY".to_string()
    } else {
        bundle.goods().map(|g| scenario.goods[g].code.as_str()).collect::<Vec<_>>().join("+")
    }
}

pub fn write_robustness_csv<W: std::io::Write>(out: W, scenario: &Scenario, rows: &[RobustnessRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bundle", "value_a_cents", "value_b_cents"])?;
    for r in rows {
        w.write_record([bundle_column(scenario, r.bundle), r.value_a.cents().to_string(), r.value_b.cents().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Add goods one at a time from the empty bundle up to the full set, then
/// remove them in the same order: `2n + 1` bundles.
pub fn coherence_walk(goods: usize) -> Vec<Bundle> {
    let mut walk = Vec::with_capacity(2 * goods + 1);
    let mut current = Bundle::EMPTY;
    walk.push(current);
    for g in 0..goods {
        current = current.with(g);
        walk.push(current);
    }
    for g in 0..goods {
        current = current.without(g);
        walk.push(current);
    }
    walk
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoherenceSample {
    pub step: usize,
    pub repetition: usize,
    pub bundle: Bundle,
    pub value: Money,
}

/// Fresh valuations, bypassing any cached bid, along the coherence walk.
pub fn run_coherence_experiment(
    scenario: &Scenario,
    seed: &Seed,
    gateway: &Gateway,
    repetitions: usize,
) -> Result<Vec<CoherenceSample>, HarnessError> {
    let walk = coherence_walk(scenario.num_goods());
    let mut samples = Vec::with_capacity(walk.len() * repetitions);
    for repetition in 0..repetitions {
        let variant = format!("coherence-{repetition}");
        for (step, &bundle) in walk.iter().enumerate() {
            let value = value_bundle(scenario, gateway, &seed.text, bundle, Some(&variant))?;
            samples.push(CoherenceSample { step, repetition, bundle, value });
        }
    }
    Ok(samples)
}

pub fn write_coherence_csv<W: std::io::Write>(out: W, scenario: &Scenario, samples: &[CoherenceSample]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "repetition", "value_cents", "bundle"])?;
    for s in samples {
        w.write_record([
            s.step.to_string(),
            s.repetition.to_string(),
            s.value.cents().to_string(),
            bundle_column(scenario, s.bundle),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write the gateway's exchange log.
pub fn write_exchanges(dir: &Path, gateway: &Gateway) -> Result<(), HarnessError> {
    write_jsonl(&dir.join("exchanges.jsonl"), &gateway.exchanges())?;
    Ok(())
}

/// Run-level summary for `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionSummary {
    pub scenario: String,
    pub proxy: ProxyKind,
    pub tranches: usize,
    pub max_budget: u64,
    pub mean_final_efficiency: f64,
    pub converged_tranches: usize,
    pub equilibrium_tranches: usize,
}

impl AuctionSummary {
    pub fn new(scenario: &Scenario, report: &AuctionReport) -> Self {
        AuctionSummary {
            scenario: scenario.name.clone(),
            proxy: report.proxy,
            tranches: report.tranches.len(),
            max_budget: report.max_budget,
            mean_final_efficiency: report.mean_final_efficiency(),
            converged_tranches: report.tranches.iter().filter(|t| t.outcome.converged()).count(),
            equilibrium_tranches: report.tranches.iter().filter(|t| t.equilibrium).count(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        write_json(&dir.join("summary.json"), self)?;
        Ok(())
    }
}
