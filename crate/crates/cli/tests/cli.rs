use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use proxylab_core::harness::artifacts::read_jsonl;
use proxylab_core::harness::experiments::TrancheRecord;
use proxylab_core::harness::{build_bidders, generate_seeds, BidderRecord, ExperimentConfig};
use proxylab_core::llm::{BackendError, FnBackend, RecordingBackend, Request};
use proxylab_core::{Bundle, Gateway, Scenario, Seed, TemplateId};

fn proxylab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxylab")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn unknown_proxy_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = proxylab(&["run-auction", "--proxy", "vd9"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown proxy"), "{}", stderr(&out));
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn auction_respects_the_iteration_cap_and_metrics_reproduce_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = proxylab(&["run-auction", "--proxy", "xor", "--max-iter", "2", "--rng-seed", "4", "--out", "a"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let run = tmp.path().join("a");
    for file in ["config.toml", "bidders.jsonl", "tranches.jsonl", "records.jsonl", "efficiency.csv", "summary.json"] {
        assert!(run.join(file).is_file(), "missing {file}");
    }
    let records: Vec<TrancheRecord> = read_jsonl(&run.join("records.jsonl")).unwrap();
    for tranche in 0..3 {
        let n = records.iter().filter(|r| r.tranche == tranche).count();
        assert!((1..=2).contains(&n), "tranche {tranche} has {n} records");
    }
    let table = fs::read_to_string(run.join("efficiency.csv")).unwrap();
    assert!(table.starts_with("budget,mean_efficiency,tranche_0,tranche_1,tranche_2\n"), "{table}");

    let out = proxylab(&["metrics", "a", "--out", "m"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(tmp.path().join("m/efficiency.csv")).unwrap(), table);

    let out = proxylab(&["metrics", "a", "--aggregation", "mean", "--out", "mean"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("mean/efficiency.csv").is_file());
}

#[test]
fn timestamped_run_directories_do_not_collide() {
    let tmp = tempfile::tempdir().unwrap();
    for _ in 0..2 {
        let out = proxylab(&["run-auction", "--tranches", "1", "--max-iter", "1"], tmp.path());
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let runs: Vec<_> = fs::read_dir(tmp.path().join("runs")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(runs.len(), 2);
    assert!(runs.iter().all(|r| r.to_string_lossy().starts_with("run-auction-")));
}

#[test]
fn invalid_configuration_fails_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["run-auction", "--tranche-size", "9"],
        &["run-auction", "--scenario", "groceries"],
        &["learn", "--proxy", "nvd"],
        &["build-bidders"],
        &["robustness"],
    ];
    for args in cases {
        let mut full = args.to_vec();
        full.extend(["--out", "never"]);
        let out = proxylab(&full, tmp.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).starts_with("error: "), "{args:?}: {}", stderr(&out));
        assert!(!tmp.path().join("never").exists(), "{args:?} created its run directory");
    }
}

#[test]
fn non_empty_output_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("busy")).unwrap();
    fs::write(tmp.path().join("busy/keep.txt"), "x").unwrap();
    let out = proxylab(&["run-auction", "--out", "busy"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("not empty"), "{}", stderr(&out));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("exp.toml"),
        "scenario = \"preserves\"\nproxy = \"xor\"\ntranches = 1\ntranche_size = 2\nmax_iterations = 5\n\n[params]\nalpha = 4\n",
    )
    .unwrap();
    let out = proxylab(&["run-auction", "-c", "exp.toml", "--max-iter", "3", "--out", "r"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let config = ExperimentConfig::load(&tmp.path().join("r/config.toml")).unwrap();
    assert_eq!(config.scenario, "preserves");
    assert_eq!(config.max_iterations, 3);
    assert_eq!(config.params.alpha, 4);
    let bidders: Vec<BidderRecord> = read_jsonl(&tmp.path().join("r/bidders.jsonl")).unwrap();
    assert_eq!(bidders.len(), 2);

    fs::write(tmp.path().join("bad.toml"), "proxy = \"xor\"\nmystery = 1\n").unwrap();
    let out = proxylab(&["run-auction", "-c", "bad.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("mystery"), "{}", stderr(&out));
}

#[test]
fn missing_fixture_aborts_with_partial_records() {
    let tmp = tempfile::tempdir().unwrap();
    let out = proxylab(&["run-auction", "--proxy", "nvd", "--tranches", "1", "--out", "p"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no fixture for"), "{}", stderr(&out));
    assert!(tmp.path().join("p/exchanges.jsonl").is_file());
    assert!(tmp.path().join("p/partial-tranche0.jsonl").is_file());
}

fn pipeline_oracle(scenario: Arc<Scenario>) -> FnBackend {
    FnBackend::new("pipeline-oracle", move |r: &Request<'_>| {
        let tranche = r.bindings.get("tranche").unwrap_or("?");
        let index = r.bindings.get("index").unwrap_or("?");
        Ok(match r.template {
            TemplateId::SeedStep1 => format!(
                "Version 1: A commuter ({tranche}/{index}).\nVersion 2: A student ({tranche}/{index}).\nVersion 3: A parent ({tranche}/{index})."
            ),
            TemplateId::SeedStep2 => "They need first of all a laptop.".to_string(),
            TemplateId::SeedStep3 => "They need first of all a laptop, and a tablet second.".to_string(),
            TemplateId::SeedStep4 => "Each further item is worth little to them.".to_string(),
            TemplateId::BundleValue => {
                let label = r.bindings.get("bundle_codes").unwrap_or_default();
                let bundle = if label == scenario.bundle_label(Bundle::EMPTY) {
                    Bundle::EMPTY
                } else {
                    scenario.bundle_from_codes(&label.split(", ").collect::<Vec<_>>()).unwrap()
                };
                format!("Bundle value: ${}", 40 * bundle.len() + 15 * usize::from(bundle.contains(0)))
            }
            other => return Err(BackendError::Fatal(format!("unexpected {other}"))),
        })
    })
}

#[test]
fn seed_and_bidder_pipeline_replays_from_fixtures() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let scenario = Arc::new(Scenario::shipped("electronics").unwrap());
    let config = ExperimentConfig { tranches: 1, tranche_size: 2, rng_seed: 3, ..Default::default() };
    let recorder = Arc::new(RecordingBackend::new(Arc::new(pipeline_oracle(scenario.clone()))));
    let gateway = Gateway::new(recorder.clone(), config.gateway.clone());
    let seeds = generate_seeds(&config, &scenario, &gateway).unwrap();
    let bidders = build_bidders(&scenario, &seeds, &gateway).unwrap();
    fs::create_dir(root.join("fx")).unwrap();
    recorder.fixtures().save(&root.join("fx/all.jsonl")).unwrap();

    let common = ["--tranches", "1", "--tranche-size", "2", "--rng-seed", "3", "--fixtures", "fx"];
    let mut args = vec!["seed-gen", "--out", "s"];
    args.extend(common);
    let out = proxylab(&args, root);
    assert!(out.status.success(), "{}", stderr(&out));
    let replayed: Vec<Seed> = read_jsonl(&root.join("s/seeds.jsonl")).unwrap();
    assert_eq!(replayed.len(), 2);
    for (a, b) in replayed.iter().zip(&seeds) {
        assert_eq!(a.text, b.text);
        assert_eq!(a.stages.len(), 4);
        assert!(root.join(format!("s/seeds/{}/stage4.txt", a.id())).is_file());
    }

    let mut args = vec!["build-bidders", "--seeds", "s/seeds.jsonl", "--out", "b"];
    args.extend(common);
    let out = proxylab(&args, root);
    assert!(out.status.success(), "{}", stderr(&out));
    let built: Vec<BidderRecord> = read_jsonl(&root.join("b/bidders.jsonl")).unwrap();
    assert_eq!(built.len(), 2);
    for (a, b) in built.iter().zip(&bidders) {
        assert_eq!(a.cached_bid, b.cached_bid);
        assert!(root.join(format!("b/seeds/{}/cached_bid.json", a.id)).is_file());
    }

    let out = proxylab(
        &["run-auction", "--bidders", "b/bidders.jsonl", "--proxy", "xor", "--tranches", "1", "--tranche-size", "2", "--out", "r"],
        root,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = fs::read_to_string(root.join("r/summary.json")).unwrap();
    assert!(summary.contains("\"xor\""), "{summary}");
}

#[test]
fn recording_a_run_yields_replayable_fixtures() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let out = proxylab(&["learn", "--proxy", "xor", "--tranches", "1", "--record", "--out", "l"], root);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(root.join("l/error.csv")).unwrap();
    assert!(csv.starts_with("bidder,step,interactions,mean_abs_error"), "{csv}");
    assert!(root.join("l/fixtures/fixtures.jsonl").is_file());
}
