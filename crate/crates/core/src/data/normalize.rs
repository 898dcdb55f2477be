use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum standard deviation / scale, in watts.
pub const STD_FLOOR_W: f64 = 1.0;

/// Mains z-scoring plus per-appliance scaling, fitted on training data only.
///
/// Appliance targets are divided by their training standard deviation and
/// never shifted, so zero watts stays zero and a predicted σ converts back to
/// watts by the same factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mains_mean: f64,
    pub mains_std: f64,
    pub appliance_scale: BTreeMap<String, f64>,
}

#[derive(Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push_all(&mut self, xs: &[f64]) {
        for &x in xs {
            self.n += 1;
            let d = x - self.mean;
            self.mean += d / self.n as f64;
            self.m2 += d * (x - self.mean);
        }
    }

    fn population_std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).sqrt()
        }
    }
}

impl Normalizer {
    /// Fits on training mains segments and per-appliance target segments.
    pub fn fit<'a>(
        mains: impl IntoIterator<Item = &'a [f64]>,
        appliances: &BTreeMap<String, Vec<&'a [f64]>>,
    ) -> Result<Self> {
        let mut m = Moments::default();
        for seg in mains {
            m.push_all(seg);
        }
        if m.n == 0 {
            return Err(Error::Validation("cannot fit normalizer on empty training data".into()));
        }
        let mut mains_std = m.population_std();
        if mains_std < STD_FLOOR_W {
            log::warn!("mains std {mains_std:.3} W below floor; using {STD_FLOOR_W} W");
            mains_std = STD_FLOOR_W;
        }
        let appliance_scale = appliances
            .iter()
            .map(|(name, segs)| {
                let mut a = Moments::default();
                for seg in segs {
                    a.push_all(seg);
                }
                if a.n == 0 {
                    log::warn!("no training data for `{name}`; scale set to {STD_FLOOR_W} W");
                }
                (name.clone(), a.population_std().max(STD_FLOOR_W))
            })
            .collect();
        Ok(Self {
            mains_mean: m.mean,
            mains_std,
            appliance_scale,
        })
    }

    pub fn normalize_mains(&self, watts: f64) -> f64 {
        (watts - self.mains_mean) / self.mains_std
    }

    pub fn denormalize_mains(&self, z: f64) -> f64 {
        z * self.mains_std + self.mains_mean
    }

    pub fn scale(&self, appliance: &str) -> Result<f64> {
        self.appliance_scale
            .get(appliance)
            .copied()
            .ok_or_else(|| Error::Validation(format!("normalizer has no scale for `{appliance}`")))
    }

    pub fn normalize_target(&self, appliance: &str, watts: f64) -> Result<f64> {
        Ok(watts / self.scale(appliance)?)
    }

    pub fn denormalize_target(&self, appliance: &str, value: f64) -> Result<f64> {
        Ok(value * self.scale(appliance)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fit(mains: &[f64], app: &[f64]) -> Normalizer {
        let mut apps = BTreeMap::new();
        apps.insert("a".to_string(), vec![app]);
        Normalizer::fit([mains], &apps).unwrap()
    }

    #[test]
    fn constant_mains_uses_floor() {
        let n = fit(&[500.0; 8], &[0.0; 8]);
        assert_eq!(n.mains_mean, 500.0);
        assert_eq!(n.mains_std, STD_FLOOR_W);
        assert_eq!(n.scale("a").unwrap(), STD_FLOOR_W);
    }

    #[test]
    fn appliance_scale_is_population_std() {
        let n = fit(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 10.0, 10.0]);
        assert!((n.scale("a").unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_training_data_is_an_error() {
        assert!(Normalizer::fit(std::iter::empty::<&[f64]>(), &BTreeMap::new()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            mains in proptest::collection::vec(0.0f64..1e4, 2..50),
            app in proptest::collection::vec(0.0f64..5e3, 2..50),
            x in 0.0f64..1e5,
        ) {
            let n = fit(&mains, &app);
            let back = n.denormalize_mains(n.normalize_mains(x));
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
            let back = n.denormalize_target("a", n.normalize_target("a", x).unwrap()).unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}
