use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weighting of days inside an aggregation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    Uniform,
    #[default]
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// Fixed `[start_day, end_day]`.
    Static,
    /// `[T - half_width, T + half_width]` around the cursor day T.
    #[default]
    Dynamic,
}

/// Which days a pool house's scores are averaged over.
///
/// Days are integer offsets from the dataset start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationWindow {
    pub mode: WindowMode,
    pub half_width: i64,
    pub start_day: i64,
    pub end_day: i64,
    pub kernel: Kernel,
    /// Drop days after the cursor.
    pub causal_only: bool,
}

impl Default for AggregationWindow {
    fn default() -> Self {
        Self::dynamic(7, Kernel::Triangle)
    }
}

impl AggregationWindow {
    pub fn dynamic(half_width: i64, kernel: Kernel) -> Self {
        Self {
            mode: WindowMode::Dynamic,
            half_width,
            start_day: 0,
            end_day: 0,
            kernel,
            causal_only: false,
        }
    }

    pub fn fixed(start_day: i64, end_day: i64, kernel: Kernel) -> Self {
        Self {
            mode: WindowMode::Static,
            half_width: 0,
            start_day,
            end_day,
            kernel,
            causal_only: false,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        match self.mode {
            WindowMode::Static if self.end_day < self.start_day => v.push(format!(
                "static window end_day {} is before start_day {}",
                self.end_day, self.start_day
            )),
            WindowMode::Dynamic if self.half_width < 0 => {
                v.push(format!("window half_width must be >= 0, got {}", self.half_width))
            }
            _ => {}
        }
        v
    }

    /// Inclusive day range at cursor day `t`.
    pub fn days(&self, t: i64) -> (i64, i64) {
        let (lo, hi) = match self.mode {
            WindowMode::Static => (self.start_day, self.end_day),
            WindowMode::Dynamic => (t - self.half_width, t + self.half_width),
        };
        if self.causal_only {
            (lo, hi.min(t))
        } else {
            (lo, hi)
        }
    }

    /// Kernel weight of `day` at cursor `t`, 0 outside the window.
    pub fn weight(&self, day: i64, t: i64) -> f64 {
        let (lo, hi) = self.days(t);
        if day < lo || day > hi {
            return 0.0;
        }
        match self.kernel {
            Kernel::Uniform => 1.0,
            Kernel::Triangle => {
                let (centre, denom) = match self.mode {
                    WindowMode::Dynamic => (t as f64, self.half_width as f64 + 1.0),
                    WindowMode::Static => {
                        let half = (self.end_day - self.start_day) as f64 / 2.0;
                        (self.start_day as f64 + half, half + 1.0)
                    }
                };
                1.0 - (day as f64 - centre).abs() / denom
            }
        }
    }

    pub fn describe(&self, t: i64) -> String {
        let (lo, hi) = self.days(t);
        format!("days {lo}..={hi} ({:?} kernel)", self.kernel)
    }
}

/// Kernel-weighted mean of `(day, score)` points inside the window at `t`.
pub fn aggregate_house_score(house: u32, points: &[(i64, f64)], window: &AggregationWindow, t: i64) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for &(day, s) in points {
        let w = window.weight(day, t);
        if w > 0.0 {
            num += w * s;
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::EmptyWindow {
            house,
            window: window.describe(t),
        });
    }
    Ok(num / den)
}
