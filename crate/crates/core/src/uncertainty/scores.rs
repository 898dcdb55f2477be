use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mixture::{gaussian_entropy, GaussianMixture};
use crate::error::{Error, Result};

/// Which expected-conditional-entropy term the MI estimate subtracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MiFormula {
    /// (1/F)·Σᵢ ½·ln(2πe·σᵢ²), the mean differential entropy of the components.
    #[default]
    Corrected,
    /// Σᵢ ½·ln(2π·σᵢ²), without the 1/F average or the e.
    Uncorrected,
}

/// Entropy acquisition score: σ of the mixture, converted to watts by `scale`.
///
/// Gaussian entropy is ln σ plus a constant and therefore monotone in σ, so
/// σ itself ranks points the same way for one appliance.
pub fn entropy_score(mix: &GaussianMixture, scale: f64) -> f64 {
    mix.ensemble_moments().1 * scale
}

/// Monte-Carlo estimate of the mixture's differential entropy.
///
/// Draws are stratified: `ceil(S/F)` samples from each component, each
/// stratum averaged separately and the strata averaged with weight 1/F.
pub fn predictive_entropy<R: Rng + ?Sized>(mix: &GaussianMixture, samples: usize, rng: &mut R) -> Result<f64> {
    if samples == 0 {
        return Err(Error::config("MI sample count S must be >= 1"));
    }
    let per = samples.div_ceil(mix.len()).max(1);
    let mut total = 0.0;
    for &(mu, sigma) in mix.components() {
        let mut stratum = 0.0;
        for _ in 0..per {
            let z: f64 = rng.sample(StandardNormal);
            stratum -= mix.ln_pdf(mu + sigma * z);
        }
        total += stratum / per as f64;
    }
    Ok(total / mix.len() as f64)
}

pub fn expected_conditional_entropy(mix: &GaussianMixture, formula: MiFormula) -> f64 {
    match formula {
        MiFormula::Corrected => {
            mix.components().iter().map(|&(_, s)| gaussian_entropy(s)).sum::<f64>() / mix.len() as f64
        }
        MiFormula::Uncorrected => mix.components().iter().map(|&(_, s)| 0.5 * (2.0 * PI * s * s).ln()).sum(),
    }
}

/// MI estimate before clamping; may be slightly negative from sampling noise.
pub fn mutual_information_raw<R: Rng + ?Sized>(
    mix: &GaussianMixture,
    samples: usize,
    formula: MiFormula,
    rng: &mut R,
) -> Result<f64> {
    Ok(predictive_entropy(mix, samples, rng)? - expected_conditional_entropy(mix, formula))
}

/// Mutual-information acquisition score in nats, clamped at 0.
pub fn mutual_information_score<R: Rng + ?Sized>(
    mix: &GaussianMixture,
    samples: usize,
    formula: MiFormula,
    rng: &mut R,
) -> Result<f64> {
    Ok(mutual_information_raw(mix, samples, formula, rng)?.max(0.0))
}
