use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Train, pool and test house lists. No house may appear in two lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: BTreeSet<u32>,
    pub pool: BTreeSet<u32>,
    pub test: BTreeSet<u32>,
}

impl SplitSpec {
    pub fn new(
        train: impl IntoIterator<Item = u32>,
        pool: impl IntoIterator<Item = u32>,
        test: impl IntoIterator<Item = u32>,
    ) -> Self {
        Self {
            train: train.into_iter().collect(),
            pool: pool.into_iter().collect(),
            test: test.into_iter().collect(),
        }
    }

    /// Every violated rule, empty when the split is valid.
    pub fn violations(&self, dataset: Option<&Dataset>) -> Vec<String> {
        let mut out = Vec::new();
        let pairs = [
            ("train", &self.train, "test", &self.test),
            ("train", &self.train, "pool", &self.pool),
            ("pool", &self.pool, "test", &self.test),
        ];
        for (na, a, nb, b) in pairs {
            let shared: Vec<u32> = a.intersection(b).copied().collect();
            if !shared.is_empty() {
                out.push(format!("split overlap: houses {shared:?} are in both {na} and {nb}"));
            }
        }
        if self.train.is_empty() {
            out.push("split: train set is empty".into());
        }
        if self.test.is_empty() {
            out.push("split: test set is empty".into());
        }
        if let Some(ds) = dataset {
            let missing: Vec<u32> = self
                .all()
                .filter(|id| ds.house(*id).is_none())
                .collect();
            if !missing.is_empty() {
                out.push(format!("split: houses {missing:?} not present in dataset"));
            }
        }
        out
    }

    pub fn validate(&self, dataset: Option<&Dataset>) -> Result<()> {
        let v = self.violations(dataset);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn all(&self) -> impl Iterator<Item = u32> + '_ {
        self.train.iter().chain(&self.pool).chain(&self.test).copied()
    }

    /// Moves a house from pool to train. Test is never touched.
    pub fn promote(&mut self, house: u32) -> Result<()> {
        if !self.pool.remove(&house) {
            return Err(Error::Validation(format!("house {house} is not in the pool")));
        }
        self.train.insert(house);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overlap_is_reported() {
        let s = SplitSpec::new([1, 2], [3], [2, 4]);
        let v = s.violations(None);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("split overlap"));
    }

    proptest! {
        #[test]
        fn promotion_keeps_sets_disjoint(
            n_train in 1usize..5, n_pool in 1usize..8, n_test in 1usize..5,
            picks in proptest::collection::vec(0usize..100, 0..8),
        ) {
            let mut ids = 0u32..;
            let train: Vec<u32> = ids.by_ref().take(n_train).collect();
            let pool: Vec<u32> = ids.by_ref().take(n_pool).collect();
            let test: Vec<u32> = ids.by_ref().take(n_test).collect();
            let mut split = SplitSpec::new(train, pool, test.clone());
            let total = split.train.len() + split.pool.len();
            for p in picks {
                if split.pool.is_empty() { break; }
                let house = *split.pool.iter().nth(p % split.pool.len()).unwrap();
                split.promote(house).unwrap();
                prop_assert!(split.violations(None).is_empty());
                prop_assert_eq!(split.train.len() + split.pool.len(), total);
                prop_assert_eq!(split.test.iter().copied().collect::<Vec<_>>(), test.clone());
            }
        }
    }
}
