use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

/// ½·ln(2π)
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Gaussian negative log-likelihood of one observation.
#[inline]
pub fn gaussian_nll(mu: f64, sigma: f64, y: f64) -> f64 {
    let r = (y - mu) / sigma;
    HALF_LN_2PI + sigma.ln() + 0.5 * r * r
}

/// Mean NLL over `(μ, σ, y)` triples.
pub fn nll_loss(predictions: &[(f64, f64)], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape {
            expected: predictions.len(),
            actual: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Validation("nll of an empty batch".into()));
    }
    let mut total = 0.0;
    for (i, (&(mu, sigma), &y)) in predictions.iter().zip(targets).enumerate() {
        check_entry(i, mu, sigma, y)?;
        total += gaussian_nll(mu, sigma, y);
    }
    Ok(total / predictions.len() as f64)
}

fn check_entry(index: usize, mu: f64, sigma: f64, y: f64) -> Result<()> {
    if !(mu.is_finite() && sigma.is_finite() && y.is_finite()) {
        return Err(Error::Numeric {
            index,
            message: format!("non-finite value (mu={mu}, sigma={sigma}, y={y})"),
        });
    }
    if sigma <= 0.0 {
        return Err(Error::Numeric {
            index,
            message: format!("sigma must be > 0, got {sigma}"),
        });
    }
    Ok(())
}

/// Masked batch NLL and its gradients.
///
/// All arrays are `[batch, appliances]`; `mask` holds 1 for observed targets
/// and 0 otherwise. The loss is the mean over observed entries.
pub struct BatchLoss {
    pub loss: f64,
    pub dmu: Array2<f64>,
    pub dsigma: Array2<f64>,
    pub observed: usize,
}

pub fn batch_nll(
    mu: ArrayView2<f64>,
    sigma: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    mask: ArrayView2<f64>,
) -> Result<BatchLoss> {
    let observed = mask.iter().filter(|&&m| m != 0.0).count();
    let mut dmu = Array2::zeros(mu.raw_dim());
    let mut dsigma = Array2::zeros(mu.raw_dim());
    if observed == 0 {
        return Ok(BatchLoss {
            loss: 0.0,
            dmu,
            dsigma,
            observed,
        });
    }
    let scale = 1.0 / observed as f64;
    let k = mu.ncols().max(1);
    let mut total = 0.0;
    let mut bad: Option<Error> = None;
    let mut idx = 0usize;
    Zip::from(&mut dmu)
        .and(&mut dsigma)
        .and(mu)
        .and(sigma)
        .and(targets)
        .and(mask)
        .for_each(|dm, ds, &m, &s, &y, &w| {
            let i = idx;
            idx += 1;
            if w == 0.0 || bad.is_some() {
                return;
            }
            if let Err(e) = check_entry(i / k, m, s, y) {
                bad = Some(e);
                return;
            }
            let r = y - m;
            let inv = 1.0 / (s * s);
            total += HALF_LN_2PI + s.ln() + 0.5 * r * r * inv;
            *dm = -r * inv * scale;
            *ds = (1.0 / s - r * r * inv / s) * scale;
        });
    if let Some(e) = bad {
        return Err(e);
    }
    Ok(BatchLoss {
        loss: total * scale,
        dmu,
        dsigma,
        observed,
    })
}
