use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::batch_nll;
use super::net::{DropoutMask, Gradients, Seq2PointNet};
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 20,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            v.push("train.learning_rate must be positive".into());
        }
        if self.batch_size == 0 {
            v.push("train.batch_size must be positive".into());
        }
        if self.epochs == 0 {
            v.push("train.epochs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            v.push("train.beta1 and train.beta2 must lie in [0, 1)".into());
        }
        if self.epsilon <= 0.0 || self.clip_norm <= 0.0 {
            v.push("train.epsilon and train.clip_norm must be positive".into());
        }
        v
    }
}

/// Dense training matrices. Missing targets are stored as 0 with mask 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub mask: Array2<f64>,
}

impl TrainingSet {
    pub fn from_samples(samples: &[WindowSample], seq_len: usize, appliances: usize) -> Result<Self> {
        let n = samples.len();
        let mut inputs = Array2::zeros((n, seq_len));
        let mut targets = Array2::zeros((n, appliances));
        let mut mask = Array2::zeros((n, appliances));
        for (i, s) in samples.iter().enumerate() {
            if s.input.len() != seq_len {
                return Err(Error::Shape {
                    expected: seq_len,
                    actual: s.input.len(),
                });
            }
            if s.target.len() != appliances {
                return Err(Error::Shape {
                    expected: appliances,
                    actual: s.target.len(),
                });
            }
            inputs.row_mut(i).assign(&ArrayView2::from_shape((1, seq_len), &s.input).expect("row").row(0));
            for (j, t) in s.target.iter().enumerate() {
                if let Some(v) = t {
                    targets[[i, j]] = *v;
                    mask[[i, j]] = 1.0;
                }
            }
        }
        Ok(Self { inputs, targets, mask })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(Axis(0), idx),
            targets: self.targets.select(Axis(0), idx),
            mask: self.mask.select(Axis(0), idx),
        }
    }

    pub fn concat(parts: &[TrainingSet]) -> Result<Self> {
        let cat = |f: fn(&TrainingSet) -> ArrayView2<f64>| {
            let views: Vec<_> = parts.iter().map(f).collect();
            ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Validation(e.to_string()))
        };
        Ok(Self {
            inputs: cat(|p| p.inputs.view())?,
            targets: cat(|p| p.targets.view())?,
            mask: cat(|p| p.mask.view())?,
        })
    }
}

/// Mean masked NLL of a batch.
pub fn loss(net: &Seq2PointNet, batch: &TrainingSet, dropout: Option<&DropoutMask>) -> Result<f64> {
    let p = net.forward(batch.inputs.view(), dropout)?;
    Ok(batch_nll(p.mu.view(), p.sigma.view(), batch.targets.view(), batch.mask.view())?.loss)
}

/// Mean masked NLL of a batch and its gradient w.r.t. every parameter.
pub fn backward(net: &Seq2PointNet, batch: &TrainingSet, dropout: Option<DropoutMask>) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Validation("backward on an empty batch".into()));
    }
    let (pred, cache) = net.forward_train(batch.inputs.view(), dropout)?;
    let l = batch_nll(pred.mu.view(), pred.sigma.view(), batch.targets.view(), batch.mask.view())?;
    let grads = net.backward(&pred, &cache, l.dmu.view(), l.dsigma.view());
    Ok((l.loss, grads))
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(net: &Seq2PointNet) -> Self {
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, net: &mut Seq2PointNet, grads: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let norm = grads.norm();
        let clip = if norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 };
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let lr = cfg.learning_rate;
        for (((p, g), m), v) in net
            .params_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                let gi = g[i] * clip;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Seq2PointNet,
    /// Mean training loss of each epoch, dropout active.
    pub epoch_losses: Vec<f64>,
}

const EPOCH_KEY: u64 = 0xE90C;
const DROPOUT_KEY: u64 = 0xD209;

/// Mini-batch Adam on the masked Gaussian NLL. Batch order and dropout masks
/// are drawn from streams keyed by `config.seed`, so the weight trajectory is
/// a pure function of (initial net, data, config).
pub fn train(mut net: Seq2PointNet, data: &TrainingSet, config: &TrainConfig) -> Result<TrainOutcome> {
    let v = config.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    if data.is_empty() {
        return Err(Error::Validation("no training windows".into()));
    }
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let use_dropout = net.architecture().dropout > 0.0;
    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(config.seed, &[EPOCH_KEY, epoch as u64]));
        let mut total = 0.0;
        let mut count = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = data.rows(idx);
            let observed = batch.mask.iter().filter(|&&m| m != 0.0).count();
            if observed == 0 {
                continue;
            }
            let mask = use_dropout.then(|| {
                let mut rng = stream(config.seed, &[DROPOUT_KEY, epoch as u64, b as u64]);
                net.sample_mask(idx.len(), &mut rng)
            });
            let (l, grads) = backward(&net, &batch, mask)?;
            if !l.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("batch {b} loss is {l}"),
                });
            }
            adam.update(&mut net, &grads, config);
            total += l * observed as f64;
            count += observed;
        }
        let mean = if count > 0 { total / count as f64 } else { 0.0 };
        log::debug!("epoch {epoch}: mean nll {mean:.5}");
        epoch_losses.push(mean);
    }
    if net.params().iter().any(|p| p.iter().any(|x| !x.is_finite())) {
        return Err(Error::Diverged {
            epoch: config.epochs,
            message: "non-finite parameters after training".into(),
        });
    }
    Ok(TrainOutcome { net, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, HeadKind};
    use rand::Rng;

    fn arch() -> Architecture {
        Architecture {
            seq_len: 11,
            conv_channels: vec![4, 4],
            conv_kernels: vec![5, 3],
            dense_units: 16,
            head: HeadKind::Single,
            ..Architecture::default()
        }
    }

    /// Target is a noisy indicator of a mid-window step in the input.
    fn toy_set(n: usize, seed: u64) -> TrainingSet {
        let mut rng = stream(seed, &[]);
        let mut inputs = Array2::zeros((n, 11));
        let mut targets = Array2::zeros((n, 1));
        for i in 0..n {
            let on = rng.random_bool(0.5);
            for j in 0..11 {
                inputs[[i, j]] = rng.random_range(-0.2..0.2) + if on && (3..8).contains(&j) { 2.0 } else { 0.0 };
            }
            targets[[i, 0]] = if on { 1.5 } else { 0.0 } + rng.random_range(-0.1..0.1);
        }
        TrainingSet {
            inputs,
            targets,
            mask: Array2::ones((n, 1)),
        }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            epochs: 20,
            learning_rate: 3e-3,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn fixed_seed_gives_identical_weights() {
        let data = toy_set(200, 1);
        let a = train(Seq2PointNet::new(arch(), vec!["x".into()], 3).unwrap(), &data, &cfg()).unwrap();
        let b = train(Seq2PointNet::new(arch(), vec!["x".into()], 3).unwrap(), &data, &cfg()).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn loss_decreases() {
        let data = toy_set(300, 2);
        let out = train(Seq2PointNet::new(arch(), vec!["x".into()], 4).unwrap(), &data, &cfg()).unwrap();
        assert_eq!(out.epoch_losses.len(), 20);
        assert!(out.epoch_losses[19] < out.epoch_losses[0], "{:?}", out.epoch_losses);
    }

    #[test]
    fn constant_zero_target_learns_zero_and_small_sigma() {
        let mut data = toy_set(400, 3);
        data.targets.fill(0.0);
        let out = train(Seq2PointNet::new(arch(), vec!["x".into()], 5).unwrap(), &data, &cfg()).unwrap();
        let held_out = toy_set(200, 4);
        let p = out.net.forward(held_out.inputs.view(), None).unwrap();
        // Target scale is the 1 W floor, so normalized units are watts here.
        let rmse = (p.mu.iter().map(|m| m * m).sum::<f64>() / 200.0).sqrt();
        assert!(rmse < 1.0, "rmse {rmse}");
        let mean_sigma = p.sigma.mean().unwrap();
        assert!(mean_sigma < 0.2, "sigma {mean_sigma}");
    }

    #[test]
    fn empty_data_rejected() {
        let data = toy_set(0, 0);
        assert!(train(Seq2PointNet::new(arch(), vec!["x".into()], 0).unwrap(), &data, &cfg()).is_err());
    }
}
