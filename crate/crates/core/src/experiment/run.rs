use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AcquisitionFunction, ExperimentConfig};
use super::metrics::rmse;
use crate::acquisition::{aggregate_house_score, query_singly, rank_houses, select, select_random, ScoreTable, Strategy};
use crate::data::{input_matrix, AuditLog, Dataset, DatasetView, Normalizer, Phase, MINUTES_PER_DAY};
use crate::error::{Error, Result};
use crate::model::{train, Checkpoint, HeadKind, Seq2PointNet, TrainingSet};
use crate::rng::{derive_seed, stream};
use crate::uncertainty::{entropy_score, mc_predict_batch, mutual_information_score, GaussianMixture};

const INIT_KEY: u64 = 0x1417;
const TRAIN_KEY: u64 = 0x7A41;
const SCORE_KEY: u64 = 0x5C0E;
const MI_KEY: u64 = 0x3141;
const EVAL_KEY: u64 = 0xE7A1;
const RANDOM_KEY: u64 = 0xBA5D;
/// Iteration key of the total baseline; never a real iteration index.
const TOTAL_ITERATION: u64 = u32::MAX as u64;

/// A validated config together with its dataset.
pub struct Context {
    pub config: ExperimentConfig,
    pub dataset: Arc<Dataset>,
    /// Modelled appliances, in round-robin order.
    pub appliances: Vec<String>,
    origin: i64,
    log: Option<Arc<AuditLog>>,
}

impl Context {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dataset = config.load_dataset()?;
        Self::with_dataset(config, Arc::new(dataset))
    }

    pub fn with_dataset(config: ExperimentConfig, dataset: Arc<Dataset>) -> Result<Self> {
        let mut v = config.violations();
        for m in config.data_violations(&dataset) {
            if !v.contains(&m) {
                v.push(m);
            }
        }
        if !v.is_empty() {
            return Err(Error::Config(v));
        }
        let appliances = if config.acquisition.appliances.is_empty() {
            dataset.appliance_names()
        } else {
            config.acquisition.appliances.clone()
        };
        Ok(Self {
            origin: dataset.start(),
            config,
            dataset,
            appliances,
            log: None,
        })
    }

    /// Records every data read made from here on.
    pub fn with_audit(mut self, log: Arc<AuditLog>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn audit(&self) -> Option<&Arc<AuditLog>> {
        self.log.as_ref()
    }

    pub fn day_start(&self, day: i64) -> i64 {
        self.origin + day * MINUTES_PER_DAY
    }

    pub fn day_of(&self, minute: i64) -> i64 {
        (minute - self.origin).div_euclid(MINUTES_PER_DAY)
    }

    pub fn is_singly(&self) -> bool {
        self.config.acquisition.strategy == Strategy::Singly
    }

    fn view(&self, phase: Phase, grants: &BTreeMap<u32, i64>) -> DatasetView {
        let mut v = DatasetView::new(self.dataset.clone(), phase);
        if let Some(log) = &self.log {
            v = v.with_log(log.clone());
        }
        for (&h, &g) in grants {
            v.grant(h, g);
        }
        v
    }

    fn half(&self) -> i64 {
        (self.config.model.seq_len / 2) as i64
    }

    /// Midpoints on the stride grid anchored at `day_start(from_day)` whose
    /// windows fit inside the house and whose centre is in `[start, end)`.
    fn centres(&self, view: &DatasetView, house: u32, start: i64, end: i64, stride: usize) -> Result<Vec<i64>> {
        let (cs, ce) = view.coverage(house)?;
        let half = self.half();
        let lo = start.max(cs + half);
        let hi = end.min(ce - half);
        let first = start + (lo - start + stride as i64 - 1).div_euclid(stride as i64) * stride as i64;
        Ok((first..hi).step_by(stride).collect())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: Seq2PointNet,
    pub normalizer: Normalizer,
    pub windows: usize,
}

/// One independently trained model and the houses whose data it may use.
/// Joint strategies have a single track over all appliances; query-singly
/// has one per appliance.
#[derive(Debug, Clone)]
pub struct Track {
    pub name: String,
    pub appliances: Vec<String>,
    pub split: crate::data::SplitSpec,
    /// Minute from which each training house's appliance data is readable.
    pub grants: BTreeMap<u32, i64>,
    pub queried: Vec<u32>,
    pub model: Option<TrainedModel>,
}

/// One line of the per-iteration score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub track: String,
    pub house: u32,
    pub appliance: String,
    pub score: f64,
    pub rank: usize,
    pub combined: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub series: String,
    pub seed: u64,
    pub iteration: usize,
    /// Day on which the house was queried; the base window end for iteration 0.
    pub cursor_day: i64,
    /// Joint strategies: the queried house.
    pub selected_house: Option<u32>,
    /// Query-singly: the house queried for each appliance.
    pub selected_by_appliance: BTreeMap<String, u32>,
    /// Houses queried by every appliance so far (query-singly only).
    pub intersection: Option<usize>,
    pub rmse: BTreeMap<String, f64>,
    pub train_windows: usize,
    pub scores: Vec<ScoreRow>,
}

/// Trained network, normalizer and where they came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub series: String,
    pub seed: u64,
    pub iteration: usize,
    pub track: String,
    pub normalizer: Normalizer,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub records: Vec<IterationRecord>,
    pub snapshots: Vec<ModelSnapshot>,
}

/// State after base training, shareable between acquisition functions.
#[derive(Debug, Clone)]
pub struct BaseState {
    pub seed: u64,
    pub tracks: Vec<Track>,
    pub rmse: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalRecord {
    pub seed: u64,
    pub rmse: BTreeMap<String, f64>,
    pub train_windows: usize,
}

pub fn series_label(function: AcquisitionFunction, strategy: Strategy) -> String {
    match function {
        AcquisitionFunction::Random => "random".to_string(),
        f => {
            let s = serde_json::to_value(strategy).expect("strategy serializes");
            format!("{}-{}", f.label(), s.as_str().unwrap_or("?"))
        }
    }
}

fn initial_tracks(ctx: &Context, pool_granted: bool) -> Vec<Track> {
    let from = ctx.day_start(ctx.config.schedule.base_start_day);
    let mut split = ctx.config.split.clone();
    if pool_granted {
        split.train.extend(std::mem::take(&mut split.pool));
    }
    let grants: BTreeMap<u32, i64> = split.train.iter().map(|&h| (h, from)).collect();
    let groups: Vec<(String, Vec<String>)> = if ctx.is_singly() {
        ctx.appliances.iter().map(|a| (a.clone(), vec![a.clone()])).collect()
    } else {
        vec![("all".to_string(), ctx.appliances.clone())]
    };
    groups
        .into_iter()
        .map(|(name, appliances)| Track {
            name,
            appliances,
            split: split.clone(),
            grants: grants.clone(),
            queried: Vec::new(),
            model: None,
        })
        .collect()
}

/// Training matrices from every granted house over `[grant, cursor)`.
fn training_data(ctx: &Context, track: &Track, cursor: i64) -> Result<(TrainingSet, Normalizer)> {
    let view = ctx.view(Phase::Training, &track.grants);
    let half = ctx.half();
    let seq_len = ctx.config.model.seq_len;
    struct Part<'a> {
        mstart: i64,
        mains: &'a [f64],
        from: i64,
        targets: Vec<Option<(i64, &'a [f64])>>,
    }
    let mut parts = Vec::new();
    for (&house, &grant) in &track.grants {
        let (cs, _) = view.coverage(house)?;
        let from = grant.max(cs);
        if from + half >= cursor {
            continue;
        }
        let (mstart, mains) = view.mains(house, from - half, cursor)?;
        let targets = track
            .appliances
            .iter()
            .map(|a| Ok(view.appliance(house, a, from, cursor)?.map(|t| (from, t))))
            .collect::<Result<Vec<_>>>()?;
        parts.push(Part {
            mstart,
            mains,
            from,
            targets,
        });
    }
    let mains_segments = parts.iter().map(|p| &p.mains[(p.from - p.mstart) as usize..]);
    let mut target_segments: BTreeMap<String, Vec<&[f64]>> =
        track.appliances.iter().map(|a| (a.clone(), Vec::new())).collect();
    for p in &parts {
        for (a, t) in track.appliances.iter().zip(&p.targets) {
            if let Some((_, slice)) = t {
                target_segments.get_mut(a).expect("appliance").push(slice);
            }
        }
    }
    let normalizer = Normalizer::fit(mains_segments, &target_segments)?;
    let scales = track
        .appliances
        .iter()
        .map(|a| normalizer.scale(a))
        .collect::<Result<Vec<_>>>()?;
    let k = track.appliances.len();
    let mut sets = Vec::with_capacity(parts.len());
    for p in &parts {
        let end = p.mstart + p.mains.len() as i64;
        let centres: Vec<i64> = crate::data::midpoints(p.mstart, end, seq_len, ctx.config.sampling.train_stride)
            .filter(|&m| m >= p.from)
            .collect();
        if centres.is_empty() {
            continue;
        }
        let inputs = input_matrix(p.mstart, p.mains, &centres, seq_len, &normalizer)?;
        let mut targets = Array2::zeros((centres.len(), k));
        let mut mask = Array2::zeros((centres.len(), k));
        for (j, t) in p.targets.iter().enumerate() {
            if let Some((start, slice)) = t {
                for (r, &m) in centres.iter().enumerate() {
                    targets[[r, j]] = slice[(m - start) as usize] / scales[j];
                    mask[[r, j]] = 1.0;
                }
            }
        }
        sets.push(TrainingSet { inputs, targets, mask });
    }
    if sets.is_empty() {
        return Err(Error::Validation(format!("track `{}` has no training windows", track.name)));
    }
    Ok((TrainingSet::concat(&sets)?, normalizer))
}

fn train_track(ctx: &Context, track: &Track, cursor: i64, seed: u64, iteration: u64, index: u64) -> Result<TrainedModel> {
    let (data, normalizer) = training_data(ctx, track, cursor)?;
    let mut arch = ctx.config.model.clone();
    if ctx.is_singly() {
        arch.head = HeadKind::Single;
    }
    let net = Seq2PointNet::new(arch, track.appliances.clone(), derive_seed(seed, &[INIT_KEY, iteration, index]))?;
    let mut cfg = ctx.config.train.clone();
    cfg.seed = derive_seed(seed, &[TRAIN_KEY, iteration, index, ctx.config.train.seed]);
    let out = train(net, &data, &cfg)?;
    log::info!(
        "trained track `{}` iteration {iteration}: {} windows, final nll {:.4}",
        track.name,
        data.len(),
        out.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(TrainedModel {
        net: out.net,
        normalizer,
        windows: data.len(),
    })
}

/// Predictive mixtures, in normalized units, for each centre of one house.
/// Each point draws from its own stream keyed by `key`, house and minute.
fn predict_points(
    ctx: &Context,
    view: &DatasetView,
    model: &TrainedModel,
    house: u32,
    centres: &[i64],
    seed: u64,
    key: &[u64],
    deterministic: bool,
) -> Result<Vec<Vec<GaussianMixture>>> {
    let (Some(&first), Some(&last)) = (centres.first(), centres.last()) else {
        return Ok(Vec::new());
    };
    let half = ctx.half();
    let seq_len = ctx.config.model.seq_len;
    let (mstart, mains) = view.mains(house, first - half, last + half + 1)?;
    let mut out = Vec::with_capacity(centres.len());
    for chunk in centres.chunks(ctx.config.sampling.batch_rows) {
        let x = input_matrix(mstart, mains, chunk, seq_len, &model.normalizer)?;
        if deterministic {
            let p = model.net.forward(x.view(), None)?;
            for r in 0..chunk.len() {
                let row = (0..p.mu.ncols())
                    .map(|a| GaussianMixture::new(vec![(p.mu[[r, a]], p.sigma[[r, a]])]))
                    .collect::<Result<Vec<_>>>()?;
                out.push(row);
            }
        } else {
            let mut rngs: Vec<_> = chunk
                .iter()
                .map(|&m| {
                    let mut k = key.to_vec();
                    k.extend([house as u64, m as u64]);
                    stream(seed, &k)
                })
                .collect();
            out.extend(mc_predict_batch(&model.net, x.view(), ctx.config.uncertainty.passes, &mut rngs)?);
        }
    }
    Ok(out)
}

fn score_pool(
    ctx: &Context,
    track: &Track,
    function: AcquisitionFunction,
    t_day: i64,
    seed: u64,
    iteration: u64,
    index: u64,
) -> Result<ScoreTable> {
    let model = track.model.as_ref().expect("track trained");
    let window = &ctx.config.acquisition.window;
    let (lo, hi) = window.days(t_day);
    let view = ctx.view(Phase::Acquisition, &BTreeMap::new());
    let unc = &ctx.config.uncertainty;
    let pool: Vec<u32> = track.split.pool.iter().copied().collect();
    let rows = pool
        .par_iter()
        .map(|&house| {
            let centres = ctx.centres(
                &view,
                house,
                ctx.day_start(lo),
                ctx.day_start(hi + 1),
                ctx.config.sampling.score_stride,
            )?;
            if centres.is_empty() {
                return Err(Error::EmptyWindow {
                    house,
                    window: window.describe(t_day),
                });
            }
            let mixes = predict_points(ctx, &view, model, house, &centres, seed, &[SCORE_KEY, iteration, index], false)?;
            let mut scores = BTreeMap::new();
            for (a, name) in track.appliances.iter().enumerate() {
                let scale = model.normalizer.scale(name)?;
                let points = centres
                    .iter()
                    .zip(&mixes)
                    .map(|(&m, mix)| {
                        let s = match function {
                            AcquisitionFunction::Entropy => entropy_score(&mix[a], scale),
                            _ => {
                                let mut rng = stream(seed, &[MI_KEY, iteration, index, house as u64, m as u64, a as u64]);
                                mutual_information_score(&mix[a], unc.samples, unc.mi_formula, &mut rng)?
                            }
                        };
                        Ok((ctx.day_of(m), s))
                    })
                    .collect::<Result<Vec<_>>>()?;
                scores.insert(name.clone(), aggregate_house_score(house, &points, window, t_day)?);
            }
            Ok((house, scores))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().collect())
}

/// Test RMSE in watts per appliance of one trained track.
fn evaluate(ctx: &Context, track: &Track, seed: u64, iteration: u64, index: u64) -> Result<BTreeMap<String, f64>> {
    let model = track.model.as_ref().expect("track trained");
    let sched = &ctx.config.schedule;
    let (start, end) = (ctx.day_start(sched.test_start_day), ctx.day_start(sched.test_end_day));
    let mut grants = BTreeMap::new();
    for &h in &track.split.test {
        grants.insert(h, i64::MIN);
    }
    let view = ctx.view(Phase::Evaluation, &grants);
    let k = track.appliances.len();
    let per_house = track
        .split
        .test
        .iter()
        .copied()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&house| {
            let centres = ctx.centres(&view, house, start, end, ctx.config.sampling.test_stride)?;
            let mixes = predict_points(
                ctx,
                &view,
                model,
                house,
                &centres,
                seed,
                &[EVAL_KEY, iteration, index],
                ctx.config.evaluation.deterministic,
            )?;
            let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); k];
            for (a, name) in track.appliances.iter().enumerate() {
                let Some(&first) = centres.first() else { break };
                let Some(truth) = view.appliance(house, name, first, centres[centres.len() - 1] + 1)? else {
                    continue;
                };
                let scale = model.normalizer.scale(name)?;
                for (&m, mix) in centres.iter().zip(&mixes) {
                    pairs[a].0.push(mix[a].ensemble_moments().0 * scale);
                    pairs[a].1.push(truth[(m - first) as usize]);
                }
            }
            Ok(pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = BTreeMap::new();
    for (a, name) in track.appliances.iter().enumerate() {
        let (mut pred, mut truth) = (Vec::new(), Vec::new());
        for p in &per_house {
            pred.extend_from_slice(&p[a].0);
            truth.extend_from_slice(&p[a].1);
        }
        if pred.is_empty() {
            return Err(Error::Validation(format!("no test house has `{name}` in the test window")));
        }
        out.insert(name.clone(), rmse(&pred, &truth)?);
    }
    Ok(out)
}

fn snapshot(series: &str, seed: u64, iteration: usize, track: &Track) -> ModelSnapshot {
    let m = track.model.as_ref().expect("track trained");
    ModelSnapshot {
        series: series.to_string(),
        seed,
        iteration,
        track: track.name.clone(),
        normalizer: m.normalizer.clone(),
        checkpoint: Checkpoint::from_net(&m.net),
    }
}

fn train_and_evaluate(
    ctx: &Context,
    tracks: &mut [Track],
    cursor: i64,
    seed: u64,
    iteration: u64,
) -> Result<BTreeMap<String, f64>> {
    let mut rmse = BTreeMap::new();
    for (i, track) in tracks.iter_mut().enumerate() {
        track.model = Some(train_track(ctx, track, cursor, seed, iteration, i as u64)?);
        rmse.extend(evaluate(ctx, track, seed, iteration, i as u64)?);
    }
    Ok(rmse)
}

/// Iteration 0: base models on the train houses over the base window.
pub fn train_base(ctx: &Context, seed: u64) -> Result<BaseState> {
    let mut tracks = initial_tracks(ctx, false);
    let cursor = ctx.day_start(ctx.config.schedule.base_end_day);
    let rmse = train_and_evaluate(ctx, &mut tracks, cursor, seed, 0)?;
    Ok(BaseState { seed, tracks, rmse })
}

fn intersection(tracks: &[Track]) -> usize {
    let mut it = tracks.iter().map(|t| t.queried.iter().copied().collect::<BTreeSet<u32>>());
    let first = it.next().unwrap_or_default();
    it.fold(first, |acc, s| acc.intersection(&s).copied().collect()).len()
}

fn score_rows(track: &str, table: &ScoreTable, appliances: &[String], combined: &BTreeMap<u32, f64>, house: u32) -> Result<Vec<ScoreRow>> {
    let ranks = rank_houses(table, appliances)?;
    let mut rows = Vec::new();
    for (&h, scores) in table {
        for a in appliances {
            rows.push(ScoreRow {
                track: track.to_string(),
                house: h,
                appliance: a.clone(),
                score: scores[a],
                rank: ranks[&h][a],
                combined: combined[&h],
                selected: h == house,
            });
        }
    }
    Ok(rows)
}

/// Active-learning run of `function` starting from a shared base state.
pub fn run_from_base(ctx: &Context, function: AcquisitionFunction, base: &BaseState) -> Result<RunOutput> {
    let sched = &ctx.config.schedule;
    let strategy = ctx.config.acquisition.strategy;
    let series = series_label(function, strategy);
    let seed = base.seed;
    let singly = ctx.is_singly();
    let mut tracks = base.tracks.clone();
    let mut out = RunOutput::default();
    let windows = |tracks: &[Track]| tracks.iter().map(|t| t.model.as_ref().map_or(0, |m| m.windows)).sum();
    out.records.push(IterationRecord {
        series: series.clone(),
        seed,
        iteration: 0,
        cursor_day: sched.base_end_day,
        selected_house: None,
        selected_by_appliance: BTreeMap::new(),
        intersection: singly.then_some(0),
        rmse: base.rmse.clone(),
        train_windows: windows(&tracks),
        scores: Vec::new(),
    });
    if ctx.config.run.checkpoints {
        out.snapshots.extend(tracks.iter().map(|t| snapshot(&series, seed, 0, t)));
    }
    for i in 1..=sched.budget {
        if tracks.iter().all(|t| t.split.pool.is_empty()) {
            log::warn!("pool exhausted before iteration {i}; stopping");
            break;
        }
        let t_day = sched.cursor(i - 1);
        let query_minute = ctx.day_start(t_day);
        let mut record = IterationRecord {
            series: series.clone(),
            seed,
            iteration: i,
            cursor_day: t_day,
            selected_house: None,
            selected_by_appliance: BTreeMap::new(),
            intersection: None,
            rmse: BTreeMap::new(),
            train_windows: 0,
            scores: Vec::new(),
        };
        for (ti, track) in tracks.iter_mut().enumerate() {
            if track.split.pool.is_empty() {
                continue;
            }
            let house = if function == AcquisitionFunction::Random {
                let pool: Vec<u32> = track.split.pool.iter().copied().collect();
                select_random(&pool, &mut stream(seed, &[RANDOM_KEY, i as u64, ti as u64]))?
            } else {
                let table = score_pool(ctx, track, function, t_day, seed, i as u64, ti as u64)?;
                let (house, combined) = if singly {
                    let a = &track.appliances[0];
                    let h = query_singly(&table, a)?;
                    (h, table.iter().map(|(&h, s)| (h, s[a])).collect())
                } else {
                    let sel = select(strategy, &table, &track.appliances, i - 1)?;
                    (sel.house_id, sel.scores.iter().map(|s| (s.house_id, s.combined)).collect())
                };
                record.scores.extend(score_rows(&track.name, &table, &track.appliances, &combined, house)?);
                house
            };
            track.split.promote(house)?;
            track.grants.insert(house, query_minute);
            track.queried.push(house);
            if singly {
                record.selected_by_appliance.insert(track.name.clone(), house);
            } else {
                record.selected_house = Some(house);
            }
        }
        let cursor = ctx.day_start(sched.cursor(i));
        record.rmse = train_and_evaluate(ctx, &mut tracks, cursor, seed, i as u64)?;
        record.train_windows = windows(&tracks);
        record.intersection = singly.then(|| intersection(&tracks));
        if ctx.config.run.checkpoints {
            out.snapshots.extend(tracks.iter().map(|t| snapshot(&series, seed, i, t)));
        }
        out.records.push(record);
    }
    Ok(out)
}

pub fn run_experiment(ctx: &Context, function: AcquisitionFunction, seed: u64) -> Result<RunOutput> {
    let base = train_base(ctx, seed)?;
    run_from_base(ctx, function, &base)
}

/// Model trained as if every pool house had sensors from the base start,
/// over the whole query period.
pub fn run_total_baseline(ctx: &Context, seed: u64) -> Result<TotalRecord> {
    let mut tracks = initial_tracks(ctx, true);
    let sched = &ctx.config.schedule;
    let cursor = ctx.day_start(sched.cursor(sched.budget));
    let rmse = train_and_evaluate(ctx, &mut tracks, cursor, seed, TOTAL_ITERATION)?;
    Ok(TotalRecord {
        seed,
        rmse,
        train_windows: tracks.iter().map(|t| t.model.as_ref().map_or(0, |m| m.windows)).sum(),
    })
}
