use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Root mean squared error, in the units of the inputs.
pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape {
            expected: predictions.len(),
            actual: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Validation("rmse of zero points".into()));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

/// Outcome of [`sensors_to_reach`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reach {
    Sensors(usize),
    Unreachable,
}

impl std::fmt::Display for Reach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reach::Sensors(n) => write!(f, "{n}"),
            Reach::Unreachable => f.write_str("N.A."),
        }
    }
}

/// First iteration whose RMSE is within `fraction` above the total-baseline
/// RMSE. `curve[i]` is the RMSE after `i` queried houses.
pub fn sensors_to_reach(fraction: f64, curve: &[f64], total: f64) -> Reach {
    let limit = (1.0 + fraction) * total;
    curve
        .iter()
        .position(|&r| r <= limit)
        .map_or(Reach::Unreachable, Reach::Sensors)
}

/// Sample mean and standard deviation (n - 1 denominator, 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
