//! Efficiency curves and learning error.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::engine::{AuctionOutcome, IterationRecord};
use crate::money::Money;
use crate::wdp::{brute_force_wdp, Allocation, WdpError};
use crate::xor::XorBid;

/// How the per-person interaction counts of one iteration are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl Aggregation {
    pub fn apply(self, counts: &[u64]) -> f64 {
        match self {
            Aggregation::Max => counts.iter().copied().max().unwrap_or(0) as f64,
            Aggregation::Mean if counts.is_empty() => 0.0,
            Aggregation::Mean => counts.iter().sum::<u64>() as f64 / counts.len() as f64,
        }
    }
}

/// Full-information optimal welfare: the denominator of every efficiency.
pub fn optimal_welfare(true_bids: &[XorBid]) -> Result<Money, WdpError> {
    Ok(brute_force_wdp(true_bids)?.welfare)
}

/// Welfare of `allocation` under the true valuations.
pub fn true_welfare(allocation: &Allocation, true_bids: &[XorBid]) -> Money {
    allocation.bundles.iter().zip(true_bids).map(|(b, bid)| bid.induced_value(*b)).sum()
}

/// Achieved over optimal welfare; a zero optimum counts as fully efficient.
pub fn efficiency(welfare: Money, optimum: Money) -> f64 {
    if optimum == Money::ZERO {
        1.0
    } else {
        welfare.cents() as f64 / optimum.cents() as f64
    }
}

/// One auction iteration as seen by the efficiency curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub interactions: f64,
    pub efficiency: f64,
}

/// Curve points of a run: the aggregated cumulative interactions and the true
/// efficiency of each iteration's allocation.
pub fn curve_points(
    records: &[IterationRecord],
    true_bids: &[XorBid],
    optimum: Money,
    aggregation: Aggregation,
) -> Vec<CurvePoint> {
    records
        .iter()
        .map(|r| CurvePoint {
            interactions: aggregation.apply(&r.cumulative_interactions),
            efficiency: efficiency(true_welfare(&r.allocation, true_bids), optimum),
        })
        .collect()
}

/// Efficiency at budgets `1..=max_budget`.
///
/// Budget `i` takes the efficiency of the iteration with the smallest
/// interaction count strictly above `i` (the earliest such iteration on
/// ties); once no iteration exceeds `i`, the final efficiency carries over.
pub fn efficiency_curve(points: &[CurvePoint], max_budget: u64) -> Vec<f64> {
    let Some(last) = points.last() else { return vec![0.0; max_budget as usize] };
    (1..=max_budget)
        .map(|i| {
            let i = i as f64;
            let mut best: Option<&CurvePoint> = None;
            for p in points.iter().filter(|p| p.interactions > i) {
                if best.is_none_or(|b| p.interactions < b.interactions) {
                    best = Some(p);
                }
            }
            best.unwrap_or(last).efficiency
        })
        .collect()
}

/// Largest aggregated interaction count of a run, rounded up.
pub fn final_interactions(outcome: &AuctionOutcome, aggregation: Aggregation) -> u64 {
    outcome.last().map_or(0, |r| aggregation.apply(&r.cumulative_interactions).ceil() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub budget: u64,
    pub mean_efficiency: f64,
    pub per_tranche: Vec<f64>,
}

/// Align per-tranche curves by budget and average them.
pub fn efficiency_table(curves: &[Vec<f64>]) -> Vec<EfficiencyRow> {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let per_tranche: Vec<f64> = curves.iter().map(|c| c.get(i).or(c.last()).copied().unwrap_or(0.0)).collect();
            let mean_efficiency = per_tranche.iter().sum::<f64>() / per_tranche.len().max(1) as f64;
            EfficiencyRow { budget: i as u64 + 1, mean_efficiency, per_tranche }
        })
        .collect()
}

pub fn write_efficiency_csv<W: Write>(out: W, rows: &[EfficiencyRow], tranches: usize) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["budget".to_string(), "mean_efficiency".to_string()];
    header.extend((0..tranches).map(|t| format!("tranche_{t}")));
    w.write_record(&header)?;
    for row in rows {
        let mut record = vec![row.budget.to_string(), format!("{:.6}", row.mean_efficiency)];
        record.extend(row.per_tranche.iter().map(|e| format!("{e:.6}")));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean absolute difference, in cents, between the induced values of `truth`
/// and `candidate` over every bundle, or over single items only.
pub fn mean_abs_error(truth: &XorBid, candidate: &XorBid, items_only: bool) -> f64 {
    let bundles: Vec<Bundle> = if items_only {
        (0..truth.goods()).map(Bundle::singleton).collect()
    } else {
        Bundle::all(truth.goods()).collect()
    };
    let total: u64 = bundles
        .iter()
        .map(|&b| truth.induced_value(b).diff(candidate.induced_value(b)).unsigned_abs())
        .sum();
    total as f64 / bundles.len().max(1) as f64
}
