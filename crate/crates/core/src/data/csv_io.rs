//! CSV ingest and export.
//!
//! The canonical layout is wide: one row per (house, minute) with columns
//! `timestamp`, `house_id`, `mains_w` and one `<appliance>_w` column per
//! appliance. A long layout with one row per (house, minute, channel) is
//! accepted too. Timestamps are either integer epoch minutes or ISO-8601.
//! Gaps are rejected rather than imputed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{Dataset, PowerSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CsvLayout {
    #[default]
    Wide,
    Long,
}

/// Maps logical fields onto CSV column names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub layout: CsvLayout,
    pub timestamp: String,
    pub house_id: String,
    /// Mains column (wide) or the channel value that marks mains rows (long).
    pub mains: String,
    /// Suffix identifying appliance columns in the wide layout.
    pub appliance_suffix: String,
    /// Channel and value columns for the long layout.
    pub channel: String,
    pub value: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            layout: CsvLayout::Wide,
            timestamp: "timestamp".into(),
            house_id: "house_id".into(),
            mains: "mains_w".into(),
            appliance_suffix: "_w".into(),
            channel: "channel".into(),
            value: "power_w".into(),
        }
    }
}

/// Parses `timestamp` as epoch minutes or an ISO-8601 instant (naive values are UTC).
pub fn parse_timestamp(raw: &str) -> std::result::Result<i64, String> {
    let raw = raw.trim();
    if let Ok(m) = raw.parse::<i64>() {
        return Ok(m);
    }
    let seconds = if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        dt.timestamp()
    } else {
        const FORMATS: [&str; 4] = [
            "%Y-%m-%dT%H:%M:%S",
            "%Y-%m-%d %H:%M:%S",
            "%Y-%m-%dT%H:%M",
            "%Y-%m-%d %H:%M",
        ];
        FORMATS
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
            .map(|dt| dt.and_utc().timestamp())
            .ok_or_else(|| format!("unrecognised timestamp `{raw}`"))?
    };
    if seconds.rem_euclid(60) != 0 {
        return Err(format!("timestamp `{raw}` is not on a whole minute"));
    }
    Ok(seconds.div_euclid(60))
}

struct HouseRows {
    first_line: u64,
    timestamps: Vec<i64>,
    mains: Vec<f64>,
    appliances: Vec<Vec<Option<f64>>>,
}

fn parse_field<T: std::str::FromStr>(raw: &str, what: &str, line: u64) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} from `{raw}`"),
    })
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("missing column `{name}`"),
    })
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    match schema.layout {
        CsvLayout::Wide => ingest_wide(path.as_ref(), schema),
        CsvLayout::Long => ingest_long(path.as_ref(), schema),
    }
}

fn ingest_wide(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let ts_col = column(&headers, &schema.timestamp)?;
    let house_col = column(&headers, &schema.house_id)?;
    let mains_col = column(&headers, &schema.mains)?;
    let appliance_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, h)| {
            *i != mains_col && *i != ts_col && *i != house_col && h.ends_with(&schema.appliance_suffix)
        })
        .map(|(i, h)| (i, h[..h.len() - schema.appliance_suffix.len()].to_string()))
        .collect();

    let mut houses: BTreeMap<u32, HouseRows> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let ts = parse_timestamp(&record[ts_col]).map_err(|message| Error::Parse { line, message })?;
        let house: u32 = parse_field(&record[house_col], "house_id", line)?;
        let mains: f64 = parse_field(&record[mains_col], "mains", line)?;
        let rows = houses.entry(house).or_insert_with(|| HouseRows {
            first_line: line,
            timestamps: Vec::new(),
            mains: Vec::new(),
            appliances: vec![Vec::new(); appliance_cols.len()],
        });
        rows.timestamps.push(ts);
        rows.mains.push(mains);
        for (slot, (col, name)) in rows.appliances.iter_mut().zip(&appliance_cols) {
            let raw = &record[*col];
            slot.push(if raw.is_empty() {
                None
            } else {
                Some(parse_field(raw, name, line)?)
            });
        }
    }

    let names: Vec<String> = appliance_cols.into_iter().map(|(_, n)| n).collect();
    let series = houses
        .into_iter()
        .map(|(house, rows)| assemble(house, rows, &names))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(series)
}

fn assemble(house: u32, rows: HouseRows, names: &[String]) -> Result<PowerSeries> {
    check_cadence(house, &rows.timestamps)?;
    let mut appliances = BTreeMap::new();
    for (name, values) in names.iter().zip(rows.appliances) {
        let present = values.iter().filter(|v| v.is_some()).count();
        if present == 0 {
            continue;
        }
        if present != values.len() {
            let idx = values.iter().position(Option::is_none).unwrap_or(0);
            return Err(Error::Validation(format!(
                "house {house}: appliance `{name}` is blank at minute {} but present elsewhere",
                rows.timestamps[idx]
            )));
        }
        appliances.insert(name.clone(), values.into_iter().flatten().collect());
    }
    PowerSeries::new(house, rows.timestamps[0], rows.mains, appliances).map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{m} (house first seen at line {})", rows.first_line)),
        other => other,
    })
}

fn check_cadence(house: u32, timestamps: &[i64]) -> Result<()> {
    for pair in timestamps.windows(2) {
        let (prev, next) = (pair[0], pair[1]);
        if next <= prev {
            return Err(Error::Validation(format!(
                "house {house}: timestamps not strictly increasing ({prev} then {next})"
            )));
        }
        if next > prev + 1 {
            return Err(Error::Gap {
                house,
                timestamp: prev + 1,
            });
        }
    }
    Ok(())
}

fn ingest_long(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let ts_col = column(&headers, &schema.timestamp)?;
    let house_col = column(&headers, &schema.house_id)?;
    let channel_col = column(&headers, &schema.channel)?;
    let value_col = column(&headers, &schema.value)?;

    // house -> channel -> minute -> watts
    let mut cells: BTreeMap<u32, BTreeMap<String, BTreeMap<i64, f64>>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let ts = parse_timestamp(&record[ts_col]).map_err(|message| Error::Parse { line, message })?;
        let house: u32 = parse_field(&record[house_col], "house_id", line)?;
        let channel = record[channel_col].to_string();
        let value: f64 = parse_field(&record[value_col], &channel, line)?;
        let slot = cells.entry(house).or_default().entry(channel.clone()).or_default();
        if slot.insert(ts, value).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate `{channel}` reading for house {house} at minute {ts}"),
            });
        }
    }

    let mut series = Vec::with_capacity(cells.len());
    for (house, mut channels) in cells {
        let mains = channels.remove(&schema.mains).ok_or_else(|| {
            Error::Validation(format!("house {house}: no `{}` rows", schema.mains))
        })?;
        let timestamps: Vec<i64> = mains.keys().copied().collect();
        check_cadence(house, &timestamps)?;
        let mut appliances = BTreeMap::new();
        for (name, values) in channels {
            if let Some(ts) = timestamps.iter().find(|t| !values.contains_key(t)) {
                return Err(Error::Validation(format!(
                    "house {house}: appliance `{name}` missing at minute {ts}"
                )));
            }
            if values.len() != timestamps.len() {
                return Err(Error::Validation(format!(
                    "house {house}: appliance `{name}` has readings outside the mains coverage"
                )));
            }
            appliances.insert(name, values.into_values().collect());
        }
        series.push(PowerSeries::new(
            house,
            timestamps[0],
            mains.into_values().collect(),
            appliances,
        )?);
    }
    Dataset::new(series)
}

/// Writes `dataset` in the canonical wide layout with epoch-minute timestamps.
/// Absent appliances are left blank.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_wide(dataset, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn write_wide(dataset: &Dataset, out: &mut impl Write) -> std::io::Result<()> {
    let names = dataset.appliance_names();
    write!(out, "timestamp,house_id,mains_w")?;
    for n in &names {
        write!(out, ",{n}_w")?;
    }
    writeln!(out)?;
    for s in dataset.houses() {
        let traces: Vec<Option<&[f64]>> = names.iter().map(|n| s.appliance(n)).collect();
        for (i, ts) in s.timestamps().enumerate() {
            write!(out, "{ts},{},{}", s.house_id(), s.mains()[i])?;
            for t in &traces {
                match t {
                    Some(v) => write!(out, ",{}", v[i])?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
