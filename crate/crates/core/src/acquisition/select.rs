use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregated score per pool house and appliance.
pub type ScoreTable = BTreeMap<u32, BTreeMap<String, f64>>;

/// How one house is chosen for all appliances at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Independent selection per appliance.
    Singly,
    #[default]
    Uniform,
    Rank,
    RoundRobin,
}

/// A selection plus the numbers that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScore {
    pub house_id: u32,
    pub per_appliance: BTreeMap<String, f64>,
    /// Uniform: weighted sum. Rank: rank sum. Round-robin: active appliance score.
    pub combined: f64,
    /// Rank of the house per appliance, 1 = most uncertain.
    pub ranks: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub house_id: u32,
    pub scores: Vec<AcquisitionScore>,
}

fn lookup(table: &ScoreTable, house: u32, appliance: &str) -> Result<f64> {
    table
        .get(&house)
        .and_then(|m| m.get(appliance))
        .copied()
        .ok_or_else(|| Error::MissingScore {
            house,
            appliance: appliance.to_string(),
        })
}

/// Per appliance, ranks houses by descending score. Equal scores are ordered
/// by house id so ranks are a permutation of 1..=n.
pub fn rank_houses(table: &ScoreTable, appliances: &[String]) -> Result<BTreeMap<u32, BTreeMap<String, usize>>> {
    let mut out: BTreeMap<u32, BTreeMap<String, usize>> = table.keys().map(|&h| (h, BTreeMap::new())).collect();
    for a in appliances {
        let mut col: Vec<(u32, f64)> = table
            .keys()
            .map(|&h| lookup(table, h, a).map(|s| (h, s)))
            .collect::<Result<_>>()?;
        col.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        for (r, (h, _)) in col.into_iter().enumerate() {
            out.get_mut(&h).expect("house").insert(a.clone(), r + 1);
        }
    }
    Ok(out)
}

/// First house (in id order) with the best value; `better(a, b)` is strict.
fn pick(values: &BTreeMap<u32, f64>, better: impl Fn(f64, f64) -> bool) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (&h, &v) in values {
        match best {
            Some((_, b)) if !better(v, b) => {}
            _ => best = Some((h, v)),
        }
    }
    best.map(|b| b.0)
}

fn finish(
    table: &ScoreTable,
    appliances: &[String],
    combined: BTreeMap<u32, f64>,
    house_id: u32,
) -> Result<Selection> {
    let ranks = rank_houses(table, appliances)?;
    let scores = combined
        .iter()
        .map(|(&h, &c)| AcquisitionScore {
            house_id: h,
            per_appliance: table[&h].clone(),
            combined: c,
            ranks: ranks[&h].clone(),
        })
        .collect();
    Ok(Selection { house_id, scores })
}

fn non_empty(table: &ScoreTable) -> Result<()> {
    if table.is_empty() {
        Err(Error::Validation("no pool houses to select from".into()))
    } else {
        Ok(())
    }
}

/// Argmax of one appliance's score; ties go to the lowest house id.
pub fn query_singly(table: &ScoreTable, appliance: &str) -> Result<u32> {
    non_empty(table)?;
    let col = table
        .keys()
        .map(|&h| lookup(table, h, appliance).map(|s| (h, s)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(pick(&col, |a, b| a > b).expect("non-empty"))
}

/// Argmax of the equally weighted sum over `appliances`.
pub fn combine_uniform(table: &ScoreTable, appliances: &[String]) -> Result<Selection> {
    non_empty(table)?;
    let w = 1.0 / appliances.len().max(1) as f64;
    let mut combined = BTreeMap::new();
    for &h in table.keys() {
        let mut sum = 0.0;
        for a in appliances {
            sum += w * lookup(table, h, a)?;
        }
        combined.insert(h, sum);
    }
    let house = pick(&combined, |a, b| a > b).expect("non-empty");
    finish(table, appliances, combined, house)
}

/// Minimum rank sum over `appliances`.
pub fn combine_rank(table: &ScoreTable, appliances: &[String]) -> Result<Selection> {
    non_empty(table)?;
    let ranks = rank_houses(table, appliances)?;
    let combined: BTreeMap<u32, f64> = ranks
        .iter()
        .map(|(&h, r)| (h, r.values().sum::<usize>() as f64))
        .collect();
    let house = pick(&combined, |a, b| a < b).expect("non-empty");
    finish(table, appliances, combined, house)
}

/// Argmax of `order[iteration % M]`'s score.
pub fn combine_round_robin(table: &ScoreTable, iteration: usize, order: &[String]) -> Result<Selection> {
    non_empty(table)?;
    if order.is_empty() {
        return Err(Error::config("round-robin needs at least one appliance"));
    }
    let active = &order[iteration % order.len()];
    let combined = table
        .keys()
        .map(|&h| lookup(table, h, active).map(|s| (h, s)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let house = pick(&combined, |a, b| a > b).expect("non-empty");
    finish(table, order, combined, house)
}

/// Dispatches an all-at-once strategy. `Singly` is not a joint strategy.
pub fn select(strategy: Strategy, table: &ScoreTable, appliances: &[String], iteration: usize) -> Result<Selection> {
    match strategy {
        Strategy::Uniform => combine_uniform(table, appliances),
        Strategy::Rank => combine_rank(table, appliances),
        Strategy::RoundRobin => combine_round_robin(table, iteration, appliances),
        Strategy::Singly => Err(Error::config("query-singly selects per appliance, not jointly")),
    }
}

/// Uniform draw from `pool`, which is taken in ascending id order.
pub fn select_random<R: Rng + ?Sized>(pool: &[u32], rng: &mut R) -> Result<u32> {
    if pool.is_empty() {
        return Err(Error::Validation("no pool houses to select from".into()));
    }
    let mut sorted = pool.to_vec();
    sorted.sort_unstable();
    Ok(sorted[rng.random_range(0..sorted.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::{prop_assert_eq, proptest};
    use proptest::strategy::Strategy as _;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    fn table(rows: &[(u32, &[f64])], apps: &[&str]) -> ScoreTable {
        rows.iter()
            .map(|&(h, v)| (h, apps.iter().map(|a| a.to_string()).zip(v.iter().copied()).collect()))
            .collect()
    }

    #[test]
    fn singly_argmax_and_ties() {
        let t = table(&[(5, &[3.0]), (9, &[7.0])], &["furnace"]);
        assert_eq!(query_singly(&t, "furnace").unwrap(), 9);
        let t = table(&[(5, &[7.0]), (9, &[7.0])], &["furnace"]);
        assert_eq!(query_singly(&t, "furnace").unwrap(), 5);
        let t = table(&[(4, &[0.0])], &["furnace"]);
        assert_eq!(query_singly(&t, "furnace").unwrap(), 4);
    }

    #[test]
    fn uniform_example() {
        let t = table(&[(1, &[6.0, 4.0]), (2, &[100.0, 105.0])], &["a1", "a2"]);
        let s = combine_uniform(&t, &names(&["a1", "a2"])).unwrap();
        assert_eq!(s.house_id, 2);
        assert_eq!(s.scores[1].combined, 102.5);
    }

    #[test]
    fn identical_scores_pick_lowest_id() {
        let t = table(&[(3, &[1.0, 1.0]), (7, &[1.0, 1.0])], &["a", "b"]);
        for s in [Strategy::Uniform, Strategy::Rank, Strategy::RoundRobin] {
            assert_eq!(select(s, &t, &names(&["a", "b"]), 0).unwrap().house_id, 3);
        }
    }

    #[test]
    fn rank_example() {
        let t = table(&[(1, &[6.0, 4.0]), (2, &[100.0, 105.0]), (3, &[0.03, 0.02])], &["a1", "a2"]);
        let s = combine_rank(&t, &names(&["a1", "a2"])).unwrap();
        assert_eq!(s.house_id, 2);
        let sums: Vec<f64> = s.scores.iter().map(|x| x.combined).collect();
        assert_eq!(sums, vec![4.0, 2.0, 6.0]);
        assert_eq!(s.scores[0].ranks["a1"], 2);
    }

    #[test]
    fn round_robin_cycles() {
        let apps = names(&["ac", "furnace"]);
        let t = table(&[(1, &[9.0, 1.0]), (2, &[1.0, 9.0])], &["ac", "furnace"]);
        assert_eq!(combine_round_robin(&t, 0, &apps).unwrap().house_id, 1);
        assert_eq!(combine_round_robin(&t, 1, &apps).unwrap().house_id, 2);
        assert_eq!(combine_round_robin(&t, 2, &apps).unwrap().house_id, 1);
    }

    #[test]
    fn missing_score_is_error() {
        let mut t = table(&[(1, &[1.0, 2.0]), (2, &[3.0, 4.0])], &["a", "b"]);
        t.get_mut(&2).unwrap().remove("b");
        assert!(matches!(
            combine_uniform(&t, &names(&["a", "b"])),
            Err(Error::MissingScore { house: 2, .. })
        ));
    }

    #[test]
    fn random_is_uniform_and_reproducible() {
        assert_eq!(select_random(&[5], &mut stream(9, &[])).unwrap(), 5);
        let pool = [4, 1, 3, 2];
        let mut rng = stream(0, &[]);
        let mut counts = BTreeMap::new();
        for _ in 0..10_000 {
            *counts.entry(select_random(&pool, &mut rng).unwrap()).or_insert(0) += 1;
        }
        for c in counts.values() {
            assert!((*c as f64 / 10_000.0 - 0.25).abs() < 0.02);
        }
        let a: Vec<u32> = (0..20).map(|i| select_random(&pool, &mut stream(3, &[i])).unwrap()).collect();
        let b: Vec<u32> = (0..20).map(|i| select_random(&pool, &mut stream(3, &[i])).unwrap()).collect();
        assert_eq!(a, b);
    }

    fn arb_table() -> impl proptest::strategy::Strategy<Value = ScoreTable> {
        proptest::collection::vec(proptest::collection::vec(0.0f64..1e3, 3), 1..8).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let m = ["a", "b", "c"].iter().map(|s| s.to_string()).zip(v).collect();
                    (i as u32 * 3 + 1, m)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn selections_invariant_to_scaling(t in arb_table(), c in 0.01f64..100.0, it in 0usize..6) {
            let apps = names(&["a", "b", "c"]);
            let scaled: ScoreTable = t.iter()
                .map(|(&h, m)| (h, m.iter().map(|(k, v)| (k.clone(), v * c)).collect()))
                .collect();
            for s in [Strategy::Uniform, Strategy::Rank, Strategy::RoundRobin] {
                prop_assert_eq!(select(s, &t, &apps, it).unwrap().house_id, select(s, &scaled, &apps, it).unwrap().house_id);
            }
        }

        #[test]
        fn rank_invariant_to_monotone_transform(t in arb_table()) {
            let apps = names(&["a", "b", "c"]);
            let squashed: ScoreTable = t.iter()
                .map(|(&h, m)| (h, m.iter().map(|(k, v)| {
                    let f = match k.as_str() { "a" => v.ln_1p(), "b" => v * v * 3.0, _ => v.sqrt() + 7.0 };
                    (k.clone(), f)
                }).collect()))
                .collect();
            prop_assert_eq!(combine_rank(&t, &apps).unwrap().house_id, combine_rank(&squashed, &apps).unwrap().house_id);
        }

        #[test]
        fn single_appliance_strategies_reduce_to_singly(t in arb_table(), it in 0usize..4) {
            let apps = names(&["b"]);
            let want = query_singly(&t, "b").unwrap();
            prop_assert_eq!(combine_uniform(&t, &apps).unwrap().house_id, want);
            prop_assert_eq!(combine_rank(&t, &apps).unwrap().house_id, want);
            prop_assert_eq!(combine_round_robin(&t, it, &apps).unwrap().house_id, want);
        }
    }
}
