use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: i64 = 1440;

/// Mains and per-appliance power of one house at a fixed 1-minute cadence.
///
/// Timestamps are integer minutes since the Unix epoch. Sample `i` sits at
/// `start + i`, so the constant-step invariant holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    house_id: u32,
    start: i64,
    mains: Vec<f64>,
    appliances: BTreeMap<String, Vec<f64>>,
}

impl PowerSeries {
    pub fn new(
        house_id: u32,
        start: i64,
        mains: Vec<f64>,
        appliances: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        if mains.is_empty() {
            return Err(Error::Validation(format!("house {house_id}: empty mains trace")));
        }
        check_power(house_id, "mains", start, &mains)?;
        for (name, trace) in &appliances {
            if trace.len() != mains.len() {
                return Err(Error::Validation(format!(
                    "house {house_id}: appliance `{name}` has {} samples, mains has {}",
                    trace.len(),
                    mains.len()
                )));
            }
            check_power(house_id, name, start, trace)?;
        }
        Ok(Self {
            house_id,
            start,
            mains,
            appliances,
        })
    }

    pub fn house_id(&self) -> u32 {
        self.house_id
    }

    /// First timestamp (inclusive).
    pub fn start(&self) -> i64 {
        self.start
    }

    /// One past the last timestamp.
    pub fn end(&self) -> i64 {
        self.start + self.mains.len() as i64
    }

    pub fn len(&self) -> usize {
        self.mains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mains.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = i64> + '_ {
        self.start..self.end()
    }

    pub fn mains(&self) -> &[f64] {
        &self.mains
    }

    pub fn appliance(&self, name: &str) -> Option<&[f64]> {
        self.appliances.get(name).map(Vec::as_slice)
    }

    pub fn appliance_names(&self) -> impl Iterator<Item = &str> {
        self.appliances.keys().map(String::as_str)
    }

    pub fn has_appliance(&self, name: &str) -> bool {
        self.appliances.contains_key(name)
    }

    /// Index of `minute` in the traces, if covered.
    pub fn index_of(&self, minute: i64) -> Option<usize> {
        (minute >= self.start && minute < self.end()).then(|| (minute - self.start) as usize)
    }

    /// Clamps `[start, end)` to the covered minutes and returns it as an index range.
    pub fn clamp_range(&self, start: i64, end: i64) -> std::ops::Range<usize> {
        let lo = start.clamp(self.start, self.end());
        let hi = end.clamp(lo, self.end());
        (lo - self.start) as usize..(hi - self.start) as usize
    }
}

fn check_power(house: u32, what: &str, start: i64, values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Validation(format!(
                "house {house}: {what} = {v} W at minute {} (power must be finite and >= 0)",
                start + i as i64
            )));
        }
    }
    Ok(())
}

/// Immutable collection of houses keyed by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    houses: BTreeMap<u32, PowerSeries>,
}

impl Dataset {
    pub fn new(series: impl IntoIterator<Item = PowerSeries>) -> Result<Self> {
        let mut houses = BTreeMap::new();
        for s in series {
            let id = s.house_id();
            if houses.insert(id, s).is_some() {
                return Err(Error::Validation(format!("duplicate house {id}")));
            }
        }
        if houses.is_empty() {
            return Err(Error::Validation("dataset has no houses".into()));
        }
        Ok(Self { houses })
    }

    pub fn house(&self, id: u32) -> Option<&PowerSeries> {
        self.houses.get(&id)
    }

    pub fn houses(&self) -> impl Iterator<Item = &PowerSeries> {
        self.houses.values()
    }

    pub fn house_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.houses.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.houses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.houses.is_empty()
    }

    /// Union of appliance names over all houses, sorted.
    pub fn appliance_names(&self) -> Vec<String> {
        let names: BTreeSet<&str> = self.houses.values().flat_map(|s| s.appliance_names()).collect();
        names.into_iter().map(str::to_owned).collect()
    }

    /// Earliest timestamp across houses; day offsets in experiment configs count from here.
    pub fn start(&self) -> i64 {
        self.houses.values().map(PowerSeries::start).min().unwrap_or(0)
    }

    /// Latest end (exclusive) across houses.
    pub fn end(&self) -> i64 {
        self.houses.values().map(PowerSeries::end).max().unwrap_or(0)
    }

    /// Last instant (exclusive) covered by every house.
    pub fn common_end(&self) -> i64 {
        self.houses.values().map(PowerSeries::end).min().unwrap_or(0)
    }

    /// First instant covered by every house.
    pub fn common_start(&self) -> i64 {
        self.houses.values().map(PowerSeries::start).max().unwrap_or(0)
    }
}
