//! `proxylab`: run the seed, bidder and auction pipelines from the shell.

mod run_dir;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use proxylab_core::harness::artifacts::{read_jsonl, write_jsonl, write_seed_dir, BidderRecord};
use proxylab_core::harness::experiments::{
    efficiency_from_run, write_coherence_csv, write_error_csv, write_exchanges, write_robustness_csv, AuctionSummary,
    TrancheRecord,
};
use proxylab_core::harness::metrics::write_efficiency_csv;
use proxylab_core::harness::{
    build_bidders, generate_seeds, load_bidders, load_seed, open_gateway, run_auction_experiment,
    run_coherence_experiment, run_learning_experiment, run_robustness_experiment, Aggregation, BackendConfig,
    ExperimentConfig, HarnessError,
};
use proxylab_core::llm::RecordingBackend;
use proxylab_core::{ProxyKind, Scenario, Seed};

use run_dir::RunDir;

#[derive(Parser)]
#[command(name = "proxylab", version, about = "Preference elicitation experiments for combinatorial auctions")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand; flags override the config file.
#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Write the run here instead of runs/<command>-<timestamp>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parent directory of timestamped run directories.
    #[arg(long, global = true, default_value = "runs")]
    runs_root: PathBuf,
    /// Shipped scenario name or path to a scenario file.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Proxy design: xor, vd1, vd2, nvd or hybrid.
    #[arg(long, global = true, value_parser = parse_proxy)]
    proxy: Option<ProxyKind>,
    /// Auction iteration cap.
    #[arg(long = "max-iter", global = true)]
    max_iterations: Option<usize>,
    /// Seed of every random choice of the run.
    #[arg(long, global = true)]
    rng_seed: Option<u64>,
    /// Number of independent auctions.
    #[arg(long, global = true)]
    tranches: Option<usize>,
    /// Bidders per auction.
    #[arg(long, global = true)]
    tranche_size: Option<usize>,
    /// Bidder file written by build-bidders.
    #[arg(long, global = true)]
    bidders: Option<PathBuf>,
    /// Seed file written by seed-gen.
    #[arg(long, global = true)]
    seeds: Option<PathBuf>,
    /// Replay completions from this fixture directory.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Save every completion as a replayable fixture in the run directory.
    #[arg(long, global = true)]
    record: bool,
    /// How per-bidder interaction counts combine: max or mean.
    #[arg(long, global = true, value_parser = parse_aggregation)]
    aggregation: Option<Aggregation>,
    /// Last interaction budget of the efficiency table.
    #[arg(long, global = true)]
    max_budget: Option<u64>,
    /// More log output (repeatable).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Generate preference seeds.
    SeedGen,
    /// Value every bundle for each seed and cache the resulting bids.
    BuildBidders,
    /// Run one auction per tranche and tabulate efficiency.
    RunAuction,
    /// Elicit each bidder alone and trace the learning error.
    Learn {
        /// Average the error over single items instead of all bundles.
        #[arg(long)]
        items_only: bool,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Compare the valuations of one seed under two backends.
    Robustness {
        /// Fixture directory of the second backend.
        #[arg(long)]
        fixtures_b: Option<PathBuf>,
        #[arg(long)]
        seed_index: Option<usize>,
    },
    /// Repeatedly value bundles along an add-then-remove walk.
    Coherence {
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        seed_index: Option<usize>,
    },
    /// Recompute the efficiency table of an auction run.
    Metrics { run_dir: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SeedGen => "seed-gen",
            Command::BuildBidders => "build-bidders",
            Command::RunAuction => "run-auction",
            Command::Learn { .. } => "learn",
            Command::Robustness { .. } => "robustness",
            Command::Coherence { .. } => "coherence",
            Command::Metrics { .. } => "metrics",
        }
    }
}

fn parse_proxy(s: &str) -> Result<ProxyKind, String> {
    s.parse()
}

fn parse_aggregation(s: &str) -> Result<Aggregation, String> {
    match s {
        "max" => Ok(Aggregation::Max),
        "mean" => Ok(Aggregation::Mean),
        _ => Err(format!("unknown aggregation `{s}` (expected max or mean)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn base_config(common: &Common, command: &Command) -> Result<ExperimentConfig> {
    let mut config = match (&common.config, command) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        // A metrics run defaults to the snapshot of the run it reads.
        (None, Command::Metrics { run_dir }) if run_dir.join("config.toml").is_file() => {
            ExperimentConfig::load(&run_dir.join("config.toml"))?
        }
        (None, _) => ExperimentConfig::default(),
    };
    if let Some(v) = &common.scenario {
        config.scenario = v.clone();
    }
    if let Some(v) = common.proxy {
        config.proxy = v;
    }
    if let Some(v) = common.max_iterations {
        config.max_iterations = v;
    }
    if let Some(v) = common.rng_seed {
        config.rng_seed = v;
    }
    if let Some(v) = common.tranches {
        config.tranches = v;
    }
    if let Some(v) = common.tranche_size {
        config.tranche_size = v;
    }
    if let Some(v) = &common.bidders {
        config.bidders = Some(v.clone());
    }
    if let Some(v) = &common.seeds {
        config.seeds = Some(v.clone());
    }
    if let Some(v) = &common.fixtures {
        config.backend = BackendConfig::Scripted { fixtures: Some(v.clone()) };
    }
    if common.record {
        config.record_fixtures = true;
    }
    if let Some(v) = common.aggregation {
        config.aggregation = v;
    }
    if let Some(v) = common.max_budget {
        config.max_budget = Some(v);
    }
    match command {
        Command::Learn { items_only, max_steps } => {
            config.learn.items_only |= *items_only;
            if let Some(v) = max_steps {
                config.learn.max_steps = *v;
            }
        }
        Command::Robustness { fixtures_b, seed_index } => {
            if let Some(v) = fixtures_b {
                config.backend_b = Some(BackendConfig::Scripted { fixtures: Some(v.clone()) });
            }
            if let Some(v) = seed_index {
                config.seed_index = *v;
            }
        }
        Command::Coherence { repetitions, seed_index } => {
            if let Some(v) = repetitions {
                config.repetitions = *v;
            }
            if let Some(v) = seed_index {
                config.seed_index = *v;
            }
        }
        _ => {}
    }
    Ok(config)
}

/// Everything that can be checked before the first backend call.
fn validate(config: &ExperimentConfig, command: &Command) -> Result<(), HarnessError> {
    match command {
        Command::RunAuction => config.validate_auction(),
        Command::BuildBidders if config.seeds.is_none() => {
            Err(HarnessError::Config("build-bidders needs a seed file (--seeds)".into()))
        }
        Command::Learn { .. } if !matches!(config.proxy, ProxyKind::Xor | ProxyKind::Hybrid) => Err(
            HarnessError::Config(format!("learn runs the xor or hybrid proxy, not {}", config.proxy)),
        ),
        Command::Robustness { .. } => {
            let Some(b) = &config.backend_b else {
                return Err(HarnessError::Config("robustness needs a second backend (backend_b or --fixtures-b)".into()));
            };
            if *b == config.backend {
                return Err(HarnessError::Config("the two robustness backends are identical".into()));
            }
            b.validate()?;
            config.validate()
        }
        Command::Coherence { .. } if config.repetitions == 0 => {
            Err(HarnessError::Config("repetitions must be positive".into()))
        }
        Command::Metrics { run_dir } if !run_dir.join("records.jsonl").is_file() => {
            Err(HarnessError::Config(format!("{} is not an auction run directory", run_dir.display())))
        }
        _ => config.validate(),
    }
}

fn run(cli: Cli) -> Result<PathBuf> {
    let config = base_config(&cli.common, &cli.command)?;
    validate(&config, &cli.command)?;
    let scenario = Arc::new(config.scenario()?);
    let run = RunDir::create(cli.common.out.as_deref(), &cli.common.runs_root, cli.command.name())?;
    fs::write(run.path().join("config.toml"), config.to_toml())?;
    let dir = run.path();

    match &cli.command {
        Command::SeedGen => {
            let (gateway, recorder) = open_gateway(&config.backend, &config.gateway, config.record_fixtures)?;
            let result = generate_seeds(&config, &scenario, &gateway);
            finish_llm(dir, &gateway, recorder.as_deref())?;
            let seeds = result?;
            for seed in &seeds {
                write_seed_dir(&dir.join("seeds"), seed, None)?;
            }
            write_jsonl(&dir.join("seeds.jsonl"), &seeds)?;
        }
        Command::BuildBidders => {
            let seeds: Vec<Seed> = read_seeds(config.seeds.as_deref().expect("validated"))?;
            let (gateway, recorder) = open_gateway(&config.backend, &config.gateway, config.record_fixtures)?;
            let result = build_bidders(&scenario, &seeds, &gateway);
            finish_llm(dir, &gateway, recorder.as_deref())?;
            let bidders = result?;
            for b in &bidders {
                write_seed_dir(&dir.join("seeds"), &b.seed, Some(&b.cached_bid))?;
            }
            write_jsonl(&dir.join("bidders.jsonl"), &bidders)?;
        }
        Command::RunAuction => {
            let bidders = load_bidders(&config, &scenario)?;
            write_jsonl(&dir.join("bidders.jsonl"), &bidders)?;
            let (gateway, recorder) = open_gateway(&config.backend, &config.gateway, config.record_fixtures)?;
            let result = run_auction_experiment(&config, &scenario, &bidders, &gateway);
            finish_llm(dir, &gateway, recorder.as_deref())?;
            match result {
                Ok(report) => {
                    report.write(dir, &scenario)?;
                    AuctionSummary::new(&scenario, &report).write(dir)?;
                }
                Err(HarnessError::Engine { tranche, source }) => {
                    if let Some(partial) = source.partial() {
                        let records: Vec<TrancheRecord> = partial
                            .records
                            .iter()
                            .map(|r| TrancheRecord { tranche, record: r.clone() })
                            .collect();
                        write_jsonl(&dir.join(format!("partial-tranche{tranche}.jsonl")), &records)?;
                    }
                    bail!("auction of tranche {tranche} failed: {source} (partial records in {})", dir.display());
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Learn { .. } => {
            let bidders = load_bidders(&config, &scenario)?;
            let (gateway, recorder) = open_gateway(&config.backend, &config.gateway, config.record_fixtures)?;
            let result = run_learning_experiment(&config, &scenario, &bidders, &gateway);
            finish_llm(dir, &gateway, recorder.as_deref())?;
            let traces = result?;
            write_jsonl(&dir.join("learn.jsonl"), &traces)?;
            write_error_csv(fs::File::create(dir.join("error.csv"))?, &traces)?;
        }
        Command::Robustness { .. } => {
            let seed = load_seed(&config)?;
            let backend_b = config.backend_b.as_ref().expect("validated");
            let (a, _) = open_gateway(&config.backend, &config.gateway, false)?;
            let (b, _) = open_gateway(backend_b, &config.gateway, false)?;
            let rows = run_robustness_experiment(&scenario, &seed, &a, &b)?;
            write_robustness_csv(fs::File::create(dir.join("robustness.csv"))?, &scenario, &rows)?;
        }
        Command::Coherence { .. } => {
            let seed = load_seed(&config)?;
            let (gateway, recorder) = open_gateway(&config.backend, &config.gateway, config.record_fixtures)?;
            let result = run_coherence_experiment(&scenario, &seed, &gateway, config.repetitions);
            finish_llm(dir, &gateway, recorder.as_deref())?;
            let samples = result?;
            write_coherence_csv(fs::File::create(dir.join("coherence.csv"))?, &scenario, &samples)?;
        }
        Command::Metrics { run_dir } => {
            let (_, table, tranches) = efficiency_from_run(run_dir, &scenario_of_run(run_dir, &scenario)?, &config)?;
            write_efficiency_csv(fs::File::create(dir.join("efficiency.csv"))?, &table, tranches)?;
        }
    }
    Ok(run.into_path())
}

fn read_seeds(path: &Path) -> Result<Vec<Seed>> {
    read_jsonl(path).with_context(|| format!("reading seeds from {}", path.display()))
}

/// The scenario an auction run was made for, taken from its bidder file.
fn scenario_of_run(run_dir: &Path, configured: &Scenario) -> Result<Scenario> {
    let path = run_dir.join("bidders.jsonl");
    if !path.is_file() {
        return Ok(configured.clone());
    }
    let bidders: Vec<BidderRecord> = read_jsonl(&path)?;
    match bidders.first() {
        Some(b) if b.seed.provenance.scenario != configured.name => Ok(Scenario::resolve(&b.seed.provenance.scenario)?),
        _ => Ok(configured.clone()),
    }
}

/// Persist the exchange log and any recorded fixtures, even after a failure.
fn finish_llm(dir: &Path, gateway: &proxylab_core::Gateway, recorder: Option<&RecordingBackend>) -> Result<()> {
    write_exchanges(dir, gateway)?;
    if let Some(recorder) = recorder {
        let fixtures = dir.join("fixtures");
        fs::create_dir_all(&fixtures)?;
        recorder.fixtures().save(&fixtures.join("fixtures.jsonl"))?;
    }
    Ok(())
}
