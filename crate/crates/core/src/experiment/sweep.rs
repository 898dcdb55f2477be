use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SweepConfig;
use super::metrics::{mean_std, sensors_to_reach, Reach};
use super::run::{run_from_base, run_total_baseline, train_base, Context, IterationRecord, RunOutput, TotalRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub runs: Vec<RunOutput>,
    pub totals: Vec<TotalRecord>,
}

impl SweepOutput {
    pub fn records(&self) -> impl Iterator<Item = &IterationRecord> {
        self.runs.iter().flat_map(|r| &r.records)
    }
}

/// Runs every arm. Base models are trained once per seed and shared, so all
/// series with the same seed start from the same iteration-0 state.
pub fn run_sweep(ctx: &Context, sweep: &SweepConfig) -> Result<SweepOutput> {
    let v = sweep.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    let mut seeds: Vec<u64> = sweep.arms.iter().flat_map(|a| a.seeds.iter().copied()).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let bases: BTreeMap<u64, _> = seeds
        .par_iter()
        .map(|&s| train_base(ctx, s).map(|b| (s, b)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let jobs: Vec<_> = sweep
        .arms
        .iter()
        .flat_map(|a| a.seeds.iter().map(move |&s| (a.function, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(f, s)| run_from_base(ctx, f, &bases[&s]))
        .collect::<Result<Vec<_>>>()?;
    let totals = sweep
        .total_seeds
        .par_iter()
        .map(|&s| run_total_baseline(ctx, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepOutput { runs, totals })
}

/// Mean and spread of one series at one iteration for one appliance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub appliance: String,
    pub series: String,
    pub iteration: usize,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn compare<'a>(records: impl IntoIterator<Item = &'a IterationRecord>) -> Vec<ComparisonRow> {
    let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        for (a, &v) in &r.rmse {
            groups.entry((a.clone(), r.series.clone(), r.iteration)).or_default().push(v);
        }
    }
    groups
        .into_iter()
        .map(|((appliance, series, iteration), vals)| {
            let (mean, std) = mean_std(&vals);
            ComparisonRow {
                appliance,
                series,
                iteration,
                runs: vals.len(),
                mean,
                std,
            }
        })
        .collect()
}

/// Mean total-baseline RMSE per appliance.
pub fn total_means(totals: &[TotalRecord]) -> BTreeMap<String, (f64, f64)> {
    let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in totals {
        for (a, &v) in &t.rmse {
            by.entry(a.clone()).or_default().push(v);
        }
    }
    by.into_iter().map(|(a, v)| (a, mean_std(&v))).collect()
}

/// Mean RMSE per iteration of one series and appliance, in iteration order.
pub fn mean_curve(rows: &[ComparisonRow], series: &str, appliance: &str) -> Vec<f64> {
    let mut pts: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.series == series && r.appliance == appliance)
        .map(|r| (r.iteration, r.mean))
        .collect();
    pts.sort_by_key(|p| p.0);
    pts.into_iter().map(|p| p.1).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRow {
    pub appliance: String,
    pub series: String,
    pub threshold: f64,
    pub total_rmse: f64,
    pub sensors: String,
}

/// Sensors each series needs, on its mean curve, to come within each
/// threshold of the mean total-baseline RMSE.
pub fn sensor_table(rows: &[ComparisonRow], totals: &[TotalRecord], thresholds: &[f64]) -> Vec<SensorRow> {
    let means = total_means(totals);
    let mut series: Vec<&str> = rows.iter().map(|r| r.series.as_str()).collect();
    series.sort_unstable();
    series.dedup();
    let mut out = Vec::new();
    for (a, &(total, _)) in &means {
        for s in &series {
            let curve = mean_curve(rows, s, a);
            if curve.is_empty() {
                continue;
            }
            for &f in thresholds {
                out.push(SensorRow {
                    appliance: a.clone(),
                    series: s.to_string(),
                    threshold: f,
                    total_rmse: total,
                    sensors: sensors_to_reach(f, &curve, total).to_string(),
                });
            }
        }
    }
    out
}

pub fn reach(rows: &[ComparisonRow], series: &str, appliance: &str, fraction: f64, total: f64) -> Reach {
    sensors_to_reach(fraction, &mean_curve(rows, series, appliance), total)
}
