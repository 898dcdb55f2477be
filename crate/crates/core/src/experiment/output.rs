use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{IterationRecord, ModelSnapshot, RunOutput, TotalRecord};
use super::sweep::{compare, sensor_table, total_means, ComparisonRow, SweepOutput};
use crate::error::{Error, Result};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const CONFIG_FILE: &str = "resolved_config.toml";
pub const TOTALS_FILE: &str = "total_baseline.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const SENSORS_FILE: &str = "sensors.csv";
pub const PLOTS_DIR: &str = "plots";

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Validation(format!("writing {}: {e}", path.display()))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    series: &'a str,
    seed: u64,
    iteration: usize,
    cursor_day: i64,
    appliance: &'a str,
    rmse: f64,
    selected_house: Option<u32>,
    train_windows: usize,
    intersection: Option<usize>,
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    series: &'a str,
    seed: u64,
    iteration: usize,
    track: &'a str,
    house: u32,
    appliance: &'a str,
    score: f64,
    rank: usize,
    combined: f64,
    selected: bool,
}

#[derive(Serialize)]
struct TotalLine<'a> {
    seed: u64,
    appliance: &'a str,
    rmse: f64,
    train_windows: usize,
}

fn write_records<'a>(dir: &Path, records: impl Iterator<Item = &'a IterationRecord> + Clone) -> Result<()> {
    let path = dir.join(RECORDS_FILE);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    for r in records.clone() {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))?;
    }
    let summary = records.clone().flat_map(|r| {
        r.rmse.iter().map(move |(a, &v)| SummaryRow {
            series: &r.series,
            seed: r.seed,
            iteration: r.iteration,
            cursor_day: r.cursor_day,
            appliance: a,
            rmse: v,
            selected_house: r.selected_house.or_else(|| r.selected_by_appliance.get(a).copied()),
            train_windows: r.train_windows,
            intersection: r.intersection,
        })
    });
    write_rows(&dir.join(SUMMARY_FILE), summary)?;
    let scores = records.flat_map(|r| {
        r.scores.iter().map(move |s| ScoreLine {
            series: &r.series,
            seed: r.seed,
            iteration: r.iteration,
            track: &s.track,
            house: s.house,
            appliance: &s.appliance,
            score: s.score,
            rank: s.rank,
            combined: s.combined,
            selected: s.selected,
        })
    });
    write_rows(&dir.join(SCORES_FILE), scores)
}

fn write_snapshots(dir: &Path, snapshots: &[ModelSnapshot]) -> Result<()> {
    if snapshots.is_empty() {
        return Ok(());
    }
    let cdir = dir.join("checkpoints");
    fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
    for s in snapshots {
        let path = cdir.join(format!("{}_seed{}_iter{}_{}.json", s.series, s.seed, s.iteration, s.track));
        fs::write(&path, serde_json::to_string(s).expect("snapshot serializes")).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn prepare(dir: &Path, config: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, config.to_toml()).map_err(|e| Error::io(&path, e))
}

/// Writes the per-iteration records, CSV summaries and resolved config.
pub fn write_run(dir: &Path, config: &ExperimentConfig, runs: &[RunOutput]) -> Result<()> {
    prepare(dir, config)?;
    write_records(dir, runs.iter().flat_map(|r| &r.records))?;
    for r in runs {
        write_snapshots(dir, &r.snapshots)?;
    }
    Ok(())
}

/// Writes the total-baseline table and the resolved config.
pub fn write_totals(dir: &Path, config: &ExperimentConfig, totals: &[TotalRecord]) -> Result<()> {
    prepare(dir, config)?;
    let rows = totals.iter().flat_map(|t| {
        t.rmse.iter().map(move |(a, &v)| TotalLine {
            seed: t.seed,
            appliance: a,
            rmse: v,
            train_windows: t.train_windows,
        })
    });
    write_rows(&dir.join(TOTALS_FILE), rows)
}

/// Everything [`write_run`] writes plus the comparison, sensor and plot tables.
pub fn write_sweep(dir: &Path, config: &ExperimentConfig, sweep: &SweepOutput) -> Result<()> {
    write_run(dir, config, &sweep.runs)?;
    let rows = compare(sweep.records());
    write_comparison(dir, &rows)?;
    if !sweep.totals.is_empty() {
        write_totals(dir, config, &sweep.totals)?;
        write_rows(
            &dir.join(SENSORS_FILE),
            sensor_table(&rows, &sweep.totals, &config.evaluation.thresholds),
        )?;
    }
    export_plots(&dir.join(PLOTS_DIR), &rows, &sweep.totals)
}

pub fn write_comparison(dir: &Path, rows: &[ComparisonRow]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rows(&dir.join(COMPARISON_FILE), rows)
}

#[derive(Serialize)]
struct PlotLine<'a> {
    series: &'a str,
    iteration: usize,
    mean: f64,
    lower: f64,
    upper: f64,
}

/// One CSV per appliance with (series, iteration, mean, mean ± std). The
/// total baseline, when present, appears as a flat series.
pub fn export_plots(dir: &Path, rows: &[ComparisonRow], totals: &[TotalRecord]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut by: BTreeMap<&str, Vec<&ComparisonRow>> = BTreeMap::new();
    for r in rows {
        by.entry(&r.appliance).or_default().push(r);
    }
    let means = total_means(totals);
    for (a, rs) in by {
        let mut lines: Vec<PlotLine> = rs
            .iter()
            .map(|r| PlotLine {
                series: &r.series,
                iteration: r.iteration,
                mean: r.mean,
                lower: r.mean - r.std,
                upper: r.mean + r.std,
            })
            .collect();
        if let Some(&(m, s)) = means.get(a) {
            let mut its: Vec<usize> = rs.iter().map(|r| r.iteration).collect();
            its.sort_unstable();
            its.dedup();
            lines.extend(its.into_iter().map(|iteration| PlotLine {
                series: "total",
                iteration,
                mean: m,
                lower: m - s,
                upper: m + s,
            }));
        }
        write_rows(&dir.join(format!("{a}.csv")), lines)?;
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<IterationRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i as u64 + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct TotalIn {
    seed: u64,
    appliance: String,
    rmse: f64,
    train_windows: usize,
}

pub fn read_totals(path: &Path) -> Result<Vec<TotalRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let mut by: BTreeMap<u64, TotalRecord> = BTreeMap::new();
    for (i, row) in r.deserialize::<TotalIn>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: i as u64 + 2,
            message: e.to_string(),
        })?;
        by.entry(row.seed)
            .or_insert_with(|| TotalRecord {
                seed: row.seed,
                rmse: BTreeMap::new(),
                train_windows: row.train_windows,
            })
            .rmse
            .insert(row.appliance, row.rmse);
    }
    Ok(by.into_values().collect())
}
