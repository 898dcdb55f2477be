//! Access-controlled, audited reads of a [`Dataset`].
//!
//! Experiment code never touches a `Dataset` directly: it goes through a
//! [`DatasetView`] that knows, per house, from which minute appliance data
//! may be read. Every read is appended to a shared [`AuditLog`] tagged with
//! the phase that issued it.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use super::{Dataset, PowerSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Acquisition,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Channel {
    Mains,
    Appliance(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReadEvent {
    pub phase: Phase,
    pub house: u32,
    pub channel: Channel,
    pub start: i64,
    pub end: i64,
}

#[derive(Debug, Default)]
pub struct AuditLog {
    events: Mutex<Vec<ReadEvent>>,
}

impl AuditLog {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    fn record(&self, event: ReadEvent) {
        self.events.lock().expect("audit log poisoned").push(event);
    }

    pub fn events(&self) -> Vec<ReadEvent> {
        self.events.lock().expect("audit log poisoned").clone()
    }
}

#[derive(Debug, Clone)]
pub struct DatasetView {
    dataset: Arc<Dataset>,
    phase: Phase,
    /// Appliance data of a house is readable from this minute onwards.
    grants: BTreeMap<u32, i64>,
    log: Option<Arc<AuditLog>>,
}

impl DatasetView {
    pub fn new(dataset: Arc<Dataset>, phase: Phase) -> Self {
        Self {
            dataset,
            phase,
            grants: BTreeMap::new(),
            log: None,
        }
    }

    pub fn with_log(mut self, log: Arc<AuditLog>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn grant(&mut self, house: u32, from: i64) {
        self.grants.insert(house, from);
    }

    pub fn grants(&self) -> &BTreeMap<u32, i64> {
        &self.grants
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Same grants and log, different phase tag.
    pub fn for_phase(&self, phase: Phase) -> Self {
        Self {
            phase,
            ..self.clone()
        }
    }

    fn series(&self, house: u32) -> Result<&PowerSeries> {
        self.dataset
            .house(house)
            .ok_or_else(|| Error::Validation(format!("unknown house {house}")))
    }

    /// Coverage `[start, end)` of a house.
    pub fn coverage(&self, house: u32) -> Result<(i64, i64)> {
        let s = self.series(house)?;
        Ok((s.start(), s.end()))
    }

    pub fn has_appliance(&self, house: u32, appliance: &str) -> Result<bool> {
        Ok(self.series(house)?.has_appliance(appliance))
    }

    fn record(&self, house: u32, channel: Channel, start: i64, end: i64) {
        if let Some(log) = &self.log {
            log.record(ReadEvent {
                phase: self.phase,
                house,
                channel,
                start,
                end,
            });
        }
    }

    /// Mains over `[start, end)` clamped to coverage, with the clamped start.
    pub fn mains(&self, house: u32, start: i64, end: i64) -> Result<(i64, &[f64])> {
        let s = self.series(house)?;
        let r = s.clamp_range(start, end);
        let from = s.start() + r.start as i64;
        self.record(house, Channel::Mains, from, s.start() + r.end as i64);
        Ok((from, &s.mains()[r]))
    }

    /// Appliance trace over `[start, end)` clamped to coverage. Reading before
    /// the house's grant, or from a house without one, is refused.
    pub fn appliance(&self, house: u32, appliance: &str, start: i64, end: i64) -> Result<Option<&[f64]>> {
        let s = self.series(house)?;
        let r = s.clamp_range(start, end);
        let from = s.start() + r.start as i64;
        match self.grants.get(&house) {
            Some(&g) if from >= g || r.is_empty() => {}
            _ => {
                return Err(Error::Leakage(format!(
                    "{:?} read of `{appliance}` for house {house} from minute {from} is not granted",
                    self.phase
                )))
            }
        }
        self.record(house, Channel::Appliance(appliance.to_string()), from, s.start() + r.end as i64);
        Ok(s.appliance(appliance).map(|t| &t[r]))
    }
}
