use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Equally weighted mixture of `F` univariate Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<(f64, f64)>,
}

impl GaussianMixture {
    /// Components are `(μ, σ)` pairs; σ must be finite and positive.
    pub fn new(components: Vec<(f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::config("mixture needs at least one component"));
        }
        for (i, &(mu, sigma)) in components.iter().enumerate() {
            if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
                return Err(Error::Numeric {
                    index: i,
                    message: format!("invalid component (mu={mu}, sigma={sigma})"),
                });
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, f64)] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Mixture mean and standard deviation from the component moments:
    /// μ = mean(μᵢ), σ² = mean(σᵢ² + μᵢ²) − μ².
    pub fn ensemble_moments(&self) -> (f64, f64) {
        let f = self.components.len() as f64;
        let mean = self.components.iter().map(|c| c.0).sum::<f64>() / f;
        let second = self.components.iter().map(|&(m, s)| s * s + m * m).sum::<f64>() / f;
        let var = second - mean * mean;
        if var < -1e-12 {
            log::warn!("negative mixture variance {var:e} from cancellation; clamped to 0");
        }
        (mean, var.max(0.0).sqrt())
    }

    /// Log density of the mixture at `x`, via log-sum-exp.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|&(m, s)| {
                let z = (x - m) / s;
                let l = -0.5 * z * z - s.ln() - 0.5 * (2.0 * PI).ln();
                best = best.max(l);
                l
            })
            .collect();
        let sum: f64 = logs.iter().map(|l| (l - best).exp()).sum();
        best + (sum / self.components.len() as f64).ln()
    }

    /// Same mixture in units multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            components: self.components.iter().map(|&(m, s)| (m * factor, s * factor)).collect(),
        }
    }
}

/// Differential entropy of N(μ, σ²): ln(√(2πe)·σ).
pub fn gaussian_entropy(sigma: f64) -> f64 {
    0.5 * (2.0 * PI * std::f64::consts::E * sigma * sigma).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_components() {
        let m = GaussianMixture::new(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(m.ensemble_moments(), (0.0, 1.0));
    }

    #[test]
    fn two_point_spread() {
        let m = GaussianMixture::new(vec![(-1.0, 1e-6), (1.0, 1e-6)]).unwrap();
        let (mu, sigma) = m.ensemble_moments();
        assert_eq!(mu, 0.0);
        assert!((sigma - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_components_rejected() {
        assert!(GaussianMixture::new(vec![]).is_err());
        assert!(GaussianMixture::new(vec![(0.0, 0.0)]).is_err());
        assert!(GaussianMixture::new(vec![(f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn unit_gaussian_entropy() {
        assert!((gaussian_entropy(1.0) - 1.418_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn single_component_density() {
        let m = GaussianMixture::new(vec![(1.0, 2.0)]).unwrap();
        let expect = -0.5 * 0.25 - 2.0f64.ln() - 0.5 * (2.0 * PI).ln();
        assert!((m.ln_pdf(2.0) - expect).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn moments_invariant_to_permutation(
            comps in proptest::collection::vec((-50.0f64..50.0, 0.01f64..10.0), 1..25),
            rot in 0usize..25,
        ) {
            let a = GaussianMixture::new(comps.clone()).unwrap().ensemble_moments();
            let mut shuffled = comps.clone();
            shuffled.reverse();
            let r = rot % shuffled.len();
            shuffled.rotate_left(r);
            let b = GaussianMixture::new(shuffled).unwrap().ensemble_moments();
            prop_assert!((a.0 - b.0).abs() <= 1e-9 * a.0.abs().max(1.0));
            prop_assert!((a.1 - b.1).abs() <= 1e-9 * a.1.abs().max(1.0));
            prop_assert!(a.1 >= 0.0);
        }
    }

    #[test]
    fn moments_match_samples() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::stream(11, &[]);
        let comps: Vec<(f64, f64)> = (0..6).map(|i| (i as f64 * 0.7 - 2.0, 0.2 + 0.1 * i as f64)).collect();
        let m = GaussianMixture::new(comps.clone()).unwrap();
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let (mu, sd) = comps[rng.random_range(0..comps.len())];
            let z: f64 = rng.sample(StandardNormal);
            let x = mu + sd * z;
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let sd = (s2 / n as f64 - mean * mean).sqrt();
        let (em, es) = m.ensemble_moments();
        assert!((em - mean).abs() < 0.02);
        assert!((es / sd - 1.0).abs() < 0.02);
    }
}
