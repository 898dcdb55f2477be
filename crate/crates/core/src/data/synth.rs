//! Synthetic household load generator.
//!
//! Produces 1-minute mains and sub-metered traces for the five appliance types
//! used throughout the crate. Outdoor temperature ramps linearly over the
//! span (plus a diurnal swing and a per-day offset), so air conditioning is
//! rare early on and heavy later while the furnace does the opposite.
//! Mains is built as `baseline + Σ appliances + noise` with the noise bound
//! strictly below the smallest baseline, so mains never drops below the
//! appliance sum.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Dataset, PowerSeries, MINUTES_PER_DAY};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

pub const AIR_CONDITIONER: &str = "air_conditioner";
pub const FURNACE: &str = "furnace";
pub const REFRIGERATOR: &str = "refrigerator";
pub const DISHWASHER: &str = "dishwasher";
pub const CLOTHES_WASHER: &str = "clothes_washer";

/// The five appliances in generation order.
pub const APPLIANCES: [&str; 5] = [AIR_CONDITIONER, FURNACE, REFRIGERATOR, DISHWASHER, CLOTHES_WASHER];

/// 2018-03-01T00:00Z in epoch minutes.
pub const DEFAULT_START: i64 = 25_331_040;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub houses: u32,
    pub first_house_id: u32,
    /// Epoch minute of the first sample; should fall on midnight.
    pub start: i64,
    pub days: u32,
    pub temperature: TemperatureConfig,
    pub baseline: BaselineConfig,
    pub air_conditioner: ThermostatConfig,
    pub furnace: ThermostatConfig,
    pub refrigerator: RefrigeratorConfig,
    pub dishwasher: EventApplianceConfig,
    pub clothes_washer: EventApplianceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureConfig {
    /// Mean outdoor temperature on the first and last day (°C).
    pub start_c: f64,
    pub end_c: f64,
    /// Half peak-to-peak of the daily cycle; peak at 15:00.
    pub diurnal_amplitude_c: f64,
    /// Std of an independent per-day offset.
    pub daily_noise_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Per-house always-on load is drawn uniformly from this range.
    pub always_on_w: [f64; 2],
    /// Evening bump added on top of the always-on load.
    pub evening_w: [f64; 2],
    /// Unmetered activity bursts (cooking, lighting).
    pub activity_per_day: f64,
    pub activity_w: [f64; 2],
    pub activity_minutes: [u32; 2],
    /// Noise is uniform on [-noise_w, noise_w]; must stay below `always_on_w[0]`.
    pub noise_w: f64,
}

/// Duty-cycled appliance whose demand follows the temperature error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermostatConfig {
    pub presence: f64,
    pub rated_w: [f64; 2],
    pub setpoint_c: [f64; 2],
    /// Duty cycle gained per degree of error.
    pub duty_per_degree: f64,
    pub cycle_minutes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefrigeratorConfig {
    pub presence: f64,
    pub on_w: [f64; 2],
    pub duty_cycle: [f64; 2],
    pub period_minutes: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub power_w: f64,
    pub minutes: u32,
}

/// Sparse appliance that runs a fixed multi-phase program per event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventApplianceConfig {
    pub presence: f64,
    pub events_per_day: f64,
    /// Event start hour is uniform in `[start_hour[0], start_hour[1])`.
    pub start_hour: [f64; 2],
    /// Per-house multiplicative power factor range.
    pub power_scale: [f64; 2],
    pub phases: Vec<Phase>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            houses: 15,
            first_house_id: 1,
            start: DEFAULT_START,
            days: 30,
            temperature: TemperatureConfig::default(),
            baseline: BaselineConfig::default(),
            air_conditioner: ThermostatConfig {
                presence: 1.0,
                rated_w: [800.0, 4000.0],
                setpoint_c: [21.0, 28.0],
                duty_per_degree: 0.12,
                cycle_minutes: 20,
            },
            furnace: ThermostatConfig {
                presence: 1.0,
                rated_w: [350.0, 700.0],
                setpoint_c: [17.0, 20.0],
                duty_per_degree: 0.15,
                cycle_minutes: 15,
            },
            refrigerator: RefrigeratorConfig::default(),
            dishwasher: EventApplianceConfig {
                presence: 1.0,
                events_per_day: 0.7,
                start_hour: [18.0, 23.0],
                power_scale: [0.8, 1.2],
                phases: vec![
                    Phase { power_w: 1200.0, minutes: 20 },
                    Phase { power_w: 150.0, minutes: 30 },
                    Phase { power_w: 1200.0, minutes: 15 },
                    Phase { power_w: 60.0, minutes: 20 },
                ],
            },
            clothes_washer: EventApplianceConfig {
                presence: 1.0,
                events_per_day: 0.5,
                start_hour: [8.0, 20.0],
                power_scale: [0.8, 1.2],
                phases: vec![
                    Phase { power_w: 250.0, minutes: 20 },
                    Phase { power_w: 500.0, minutes: 8 },
                    Phase { power_w: 200.0, minutes: 15 },
                    Phase { power_w: 550.0, minutes: 10 },
                ],
            },
        }
    }
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        Self {
            start_c: 12.0,
            end_c: 32.0,
            diurnal_amplitude_c: 5.0,
            daily_noise_c: 1.5,
        }
    }
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            always_on_w: [80.0, 250.0],
            evening_w: [50.0, 300.0],
            activity_per_day: 3.0,
            activity_w: [100.0, 1500.0],
            activity_minutes: [5, 45],
            noise_w: 20.0,
        }
    }
}

impl Default for ThermostatConfig {
    fn default() -> Self {
        SynthConfig::default().air_conditioner
    }
}

impl Default for RefrigeratorConfig {
    fn default() -> Self {
        Self {
            presence: 1.0,
            on_w: [90.0, 200.0],
            duty_cycle: [0.3, 0.6],
            period_minutes: [40, 90],
        }
    }
}

impl Default for EventApplianceConfig {
    fn default() -> Self {
        SynthConfig::default().dishwasher
    }
}

impl SynthConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.houses == 0 {
            v.push("synth: houses must be > 0".into());
        }
        if self.days == 0 {
            v.push("synth: days must be > 0 (empty date range)".into());
        }
        if self.baseline.noise_w < 0.0 || self.baseline.noise_w >= self.baseline.always_on_w[0] {
            v.push("synth: baseline.noise_w must be in [0, always_on_w[0])".into());
        }
        let ranges = [
            ("baseline.always_on_w", self.baseline.always_on_w),
            ("baseline.evening_w", self.baseline.evening_w),
            ("baseline.activity_w", self.baseline.activity_w),
            ("air_conditioner.rated_w", self.air_conditioner.rated_w),
            ("air_conditioner.setpoint_c", self.air_conditioner.setpoint_c),
            ("furnace.rated_w", self.furnace.rated_w),
            ("furnace.setpoint_c", self.furnace.setpoint_c),
            ("refrigerator.on_w", self.refrigerator.on_w),
            ("refrigerator.duty_cycle", self.refrigerator.duty_cycle),
            ("dishwasher.start_hour", self.dishwasher.start_hour),
            ("dishwasher.power_scale", self.dishwasher.power_scale),
            ("clothes_washer.start_hour", self.clothes_washer.start_hour),
            ("clothes_washer.power_scale", self.clothes_washer.power_scale),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                v.push(format!("synth: {name} must be a finite [lo, hi] range"));
            }
        }
        let non_negative = [
            self.baseline.always_on_w[0],
            self.baseline.evening_w[0],
            self.baseline.activity_w[0],
            self.air_conditioner.rated_w[0],
            self.furnace.rated_w[0],
            self.refrigerator.on_w[0],
            self.dishwasher.power_scale[0],
            self.clothes_washer.power_scale[0],
        ];
        if non_negative.iter().any(|x| *x < 0.0) {
            v.push("synth: power ranges must be non-negative".into());
        }
        let [dlo, dhi] = self.refrigerator.duty_cycle;
        if dlo < 0.0 || dhi > 1.0 {
            v.push("synth: refrigerator.duty_cycle must lie in [0, 1]".into());
        }
        if self.refrigerator.period_minutes[0] == 0
            || self.refrigerator.period_minutes[0] > self.refrigerator.period_minutes[1]
        {
            v.push("synth: refrigerator.period_minutes must be a positive [lo, hi] range".into());
        }
        if self.baseline.activity_minutes[0] == 0
            || self.baseline.activity_minutes[0] > self.baseline.activity_minutes[1]
        {
            v.push("synth: baseline.activity_minutes must be a positive [lo, hi] range".into());
        }
        for (name, t) in [("air_conditioner", &self.air_conditioner), ("furnace", &self.furnace)] {
            if t.cycle_minutes == 0 {
                v.push(format!("synth: {name}.cycle_minutes must be > 0"));
            }
            if !(0.0..=1.0).contains(&t.presence) {
                v.push(format!("synth: {name}.presence must lie in [0, 1]"));
            }
        }
        for (name, e) in [("dishwasher", &self.dishwasher), ("clothes_washer", &self.clothes_washer)] {
            if e.events_per_day < 0.0 || !(0.0..=1.0).contains(&e.presence) {
                v.push(format!("synth: {name} rate/presence out of range"));
            }
            if e.phases.iter().any(|p| p.power_w < 0.0) {
                v.push(format!("synth: {name} phase power must be >= 0"));
            }
        }
        v
    }

    /// Reads a synthesizer config from TOML; missing keys take defaults.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn total_minutes(&self) -> usize {
        self.days as usize * MINUTES_PER_DAY as usize
    }
}

/// One generated house with the internal components that sum to its mains.
#[derive(Debug, Clone)]
pub struct SynthHouse {
    pub series: PowerSeries,
    pub baseline: Vec<f64>,
    pub noise: Vec<f64>,
}

impl SynthHouse {
    /// Recomputes mains from its parts in generation order.
    pub fn recompose(&self, t: usize) -> f64 {
        let mut total = self.baseline[t];
        for name in APPLIANCES {
            if let Some(trace) = self.series.appliance(name) {
                total += trace[t];
            }
        }
        total + self.noise[t]
    }
}

pub fn synthesize(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    let houses = synthesize_detailed(config, seed)?;
    Dataset::new(houses.into_iter().map(|h| h.series))
}

pub fn synthesize_detailed(config: &SynthConfig, seed: u64) -> Result<Vec<SynthHouse>> {
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let temperature = outdoor_temperature(config, seed);
    (0..config.houses)
        .map(|i| synth_house(config, seed, config.first_house_id + i, &temperature))
        .collect()
}

/// Outdoor temperature per minute, shared by all houses.
pub fn outdoor_temperature(config: &SynthConfig, seed: u64) -> Vec<f64> {
    let t = &config.temperature;
    let mut rng = stream(seed, &[0x7E4D]);
    let daily = Normal::new(0.0, t.daily_noise_c.max(0.0)).expect("finite std");
    let offsets: Vec<f64> = (0..config.days).map(|_| daily.sample(&mut rng)).collect();
    let n = config.total_minutes();
    let span = (n.max(2) - 1) as f64;
    (0..n)
        .map(|m| {
            let trend = t.start_c + (t.end_c - t.start_c) * m as f64 / span;
            let hour = (m as i64 % MINUTES_PER_DAY) as f64 / 60.0;
            let diurnal = t.diurnal_amplitude_c * (2.0 * PI * (hour - 9.0) / 24.0).sin();
            trend + diurnal + offsets[m / MINUTES_PER_DAY as usize]
        })
        .collect()
}

fn uniform(rng: &mut StreamRng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn synth_house(config: &SynthConfig, seed: u64, house: u32, temperature: &[f64]) -> Result<SynthHouse> {
    let n = config.total_minutes();
    let mut rng = stream(seed, &[0x4855, house as u64]);

    let baseline = baseline_trace(&config.baseline, config.days, &mut rng);
    let bound = config.baseline.noise_w;
    let noise: Vec<f64> = (0..n)
        .map(|_| if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 })
        .collect();

    let mut appliances = BTreeMap::new();
    if rng.random_bool(config.air_conditioner.presence) {
        let trace = thermostat_trace(&config.air_conditioner, temperature, true, &mut rng);
        appliances.insert(AIR_CONDITIONER.to_string(), trace);
    }
    if rng.random_bool(config.furnace.presence) {
        let trace = thermostat_trace(&config.furnace, temperature, false, &mut rng);
        appliances.insert(FURNACE.to_string(), trace);
    }
    if rng.random_bool(config.refrigerator.presence) {
        let trace = refrigerator_trace(&config.refrigerator, n, &mut rng);
        appliances.insert(REFRIGERATOR.to_string(), trace);
    }
    if rng.random_bool(config.dishwasher.presence) {
        let trace = event_trace(&config.dishwasher, config.days, &mut rng);
        appliances.insert(DISHWASHER.to_string(), trace);
    }
    if rng.random_bool(config.clothes_washer.presence) {
        let trace = event_trace(&config.clothes_washer, config.days, &mut rng);
        appliances.insert(CLOTHES_WASHER.to_string(), trace);
    }

    let mains: Vec<f64> = (0..n)
        .map(|t| {
            let mut total = baseline[t];
            for name in APPLIANCES {
                if let Some(trace) = appliances.get(name) {
                    total += trace[t];
                }
            }
            total + noise[t]
        })
        .collect();

    let series = PowerSeries::new(house, config.start, mains, appliances)?;
    Ok(SynthHouse {
        series,
        baseline,
        noise,
    })
}

fn baseline_trace(cfg: &BaselineConfig, days: u32, rng: &mut StreamRng) -> Vec<f64> {
    let always_on = uniform(rng, cfg.always_on_w);
    let evening = uniform(rng, cfg.evening_w);
    let per_day = MINUTES_PER_DAY as usize;
    let mut trace: Vec<f64> = (0..days as usize * per_day)
        .map(|m| {
            let hour = (m % per_day) as f64 / 60.0;
            // Smooth bump centred on 20:00, zero outside 16:00-24:00.
            let bump = if (16.0..24.0).contains(&hour) {
                0.5 - 0.5 * (2.0 * PI * (hour - 16.0) / 8.0).cos()
            } else {
                0.0
            };
            always_on + evening * bump
        })
        .collect();
    if cfg.activity_per_day > 0.0 {
        let events = Poisson::new(cfg.activity_per_day).expect("positive rate");
        for day in 0..days as usize {
            let count = events.sample(rng) as usize;
            for _ in 0..count {
                let start = day * per_day + rng.random_range(6 * 60..23 * 60);
                let [lo, hi] = cfg.activity_minutes;
                let len = rng.random_range(lo..=hi) as usize;
                let power = uniform(rng, cfg.activity_w);
                for v in trace.iter_mut().skip(start).take(len) {
                    *v += power;
                }
            }
        }
    }
    trace
}

fn thermostat_trace(cfg: &ThermostatConfig, temperature: &[f64], cooling: bool, rng: &mut StreamRng) -> Vec<f64> {
    let rated = uniform(rng, cfg.rated_w);
    let setpoint = uniform(rng, cfg.setpoint_c);
    let cycle = cfg.cycle_minutes as usize;
    let phase = rng.random_range(0..cycle);
    let mut trace = vec![0.0; temperature.len()];
    let mut t = 0;
    // The first cycle is shortened by the random phase so houses do not switch in lockstep.
    let mut len = cycle - phase;
    while t < temperature.len() {
        let error = if cooling {
            temperature[t] - setpoint
        } else {
            setpoint - temperature[t]
        };
        let duty = (cfg.duty_per_degree * error).clamp(0.0, 1.0);
        let on = (duty * len as f64).round() as usize;
        for v in trace.iter_mut().skip(t).take(on) {
            *v = rated;
        }
        t += len;
        len = cycle;
    }
    trace
}

fn refrigerator_trace(cfg: &RefrigeratorConfig, n: usize, rng: &mut StreamRng) -> Vec<f64> {
    let on_w = uniform(rng, cfg.on_w);
    let duty = uniform(rng, cfg.duty_cycle);
    let [plo, phi] = cfg.period_minutes;
    let period = rng.random_range(plo..=phi) as usize;
    let on_minutes = (duty * period as f64).round() as usize;
    let phase = rng.random_range(0..period);
    (0..n)
        .map(|t| if (t + phase) % period < on_minutes { on_w } else { 0.0 })
        .collect()
}

fn event_trace(cfg: &EventApplianceConfig, days: u32, rng: &mut StreamRng) -> Vec<f64> {
    let per_day = MINUTES_PER_DAY as usize;
    let n = days as usize * per_day;
    let mut trace = vec![0.0; n];
    let scale = uniform(rng, cfg.power_scale);
    let program: usize = cfg.phases.iter().map(|p| p.minutes as usize).sum();
    if cfg.events_per_day <= 0.0 || program == 0 {
        return trace;
    }
    let events = Poisson::new(cfg.events_per_day).expect("positive rate");
    let mut busy_until = 0usize;
    for day in 0..days as usize {
        let count = events.sample(rng) as usize;
        let mut starts: Vec<usize> = (0..count)
            .map(|_| day * per_day + (uniform(rng, cfg.start_hour) * 60.0) as usize)
            .collect();
        starts.sort_unstable();
        for start in starts {
            if start < busy_until {
                continue;
            }
            let mut t = start;
            for phase in &cfg.phases {
                for _ in 0..phase.minutes {
                    if t < n {
                        trace[t] = phase.power_w * scale;
                    }
                    t += 1;
                }
            }
            busy_until = t;
        }
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(days: u32) -> SynthConfig {
        SynthConfig {
            houses: 3,
            days,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = small(2);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        super::super::write_csv(&synthesize(&cfg, 7).unwrap(), &a).unwrap();
        super::super::write_csv(&synthesize(&cfg, 7).unwrap(), &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = small(1);
        assert_ne!(synthesize(&cfg, 1).unwrap(), synthesize(&cfg, 2).unwrap());
    }

    #[test]
    fn mains_dominates_appliance_sum_and_recomposes_exactly() {
        for house in synthesize_detailed(&small(3), 11).unwrap() {
            let s = &house.series;
            for t in 0..s.len() {
                let parts: f64 = s.appliance_names().map(|n| s.appliance(n).unwrap()[t]).sum();
                assert!(s.mains()[t] >= parts, "house {} minute {t}", s.house_id());
                assert_eq!(s.mains()[t] - house.recompose(t), 0.0);
            }
        }
    }

    #[test]
    fn fridge_duty_cycle_mean() {
        let mut cfg = small(2);
        cfg.houses = 1;
        cfg.refrigerator = RefrigeratorConfig {
            presence: 1.0,
            on_w: [150.0, 150.0],
            duty_cycle: [0.5, 0.5],
            period_minutes: [60, 60],
        };
        let ds = synthesize(&cfg, 3).unwrap();
        let fridge = ds.houses().next().unwrap().appliance(REFRIGERATOR).unwrap().to_vec();
        let mean = fridge.iter().sum::<f64>() / fridge.len() as f64;
        assert!((mean - 75.0).abs() <= 0.05 * 75.0, "mean {mean}");
        // Runs of identical state are 30 minutes long away from the edges.
        let mut runs = Vec::new();
        let mut len = 1;
        for w in fridge.windows(2) {
            if w[0] == w[1] {
                len += 1;
            } else {
                runs.push(len);
                len = 1;
            }
        }
        assert!(runs[1..].iter().all(|&r| r == 30), "{runs:?}");
    }

    #[test]
    fn air_conditioning_grows_with_season() {
        let ds = synthesize(&small(30), 5).unwrap();
        let day = MINUTES_PER_DAY as usize;
        let (mut early, mut late) = (0.0, 0.0);
        for s in ds.houses() {
            let ac = s.appliance(AIR_CONDITIONER).unwrap();
            early += ac[..5 * day].iter().sum::<f64>();
            late += ac[25 * day..].iter().sum::<f64>();
        }
        assert!(late > 10.0 * early.max(1.0), "early {early} late {late}");
    }

    #[test]
    fn degenerate_configs_rejected() {
        let mut cfg = small(1);
        cfg.houses = 0;
        assert!(matches!(synthesize(&cfg, 0), Err(Error::Config(_))));
        let mut cfg = small(1);
        cfg.days = 0;
        assert!(matches!(synthesize(&cfg, 0), Err(Error::Config(_))));
    }
}
