//! Run artifacts: line-delimited JSON records and per-seed text files.

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::scenario::{BidRecord, Scenario, ScenarioError};
use crate::sim::Seed;
use crate::xor::XorBid;

/// A simulated bidder: its seed plus the cached, fully elicited bid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidderRecord {
    pub id: String,
    pub seed: Seed,
    pub cached_bid: BidRecord,
}

impl BidderRecord {
    pub fn new(scenario: &Scenario, seed: Seed, bid: &XorBid) -> Self {
        BidderRecord { id: seed.id(), cached_bid: scenario.bid_record(bid), seed }
    }

    pub fn bid(&self, scenario: &Scenario) -> Result<XorBid, ScenarioError> {
        scenario.bid_from_record(&self.cached_bid)
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let reader = io::BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}

/// `dir/<seed id>/` with one file per pipeline stage, the final seed and,
/// when known, the cached bid.
pub fn write_seed_dir(dir: &Path, seed: &Seed, cached_bid: Option<&BidRecord>) -> io::Result<()> {
    let dir = dir.join(seed.id());
    fs::create_dir_all(&dir)?;
    for (i, stage) in seed.stages.iter().enumerate() {
        fs::write(dir.join(format!("stage{}.txt", i + 1)), stage)?;
    }
    fs::write(dir.join("seed.txt"), &seed.text)?;
    if let Some(bid) = cached_bid {
        write_json(&dir.join("cached_bid.json"), bid)?;
    }
    Ok(())
}
