//! Heteroskedastic sequence-to-point network with manual backpropagation.
//!
//! Activations inside the conv stack are laid out as `[batch * seq_len, channels]`
//! (position-major, channels last). Each conv layer runs as one matrix product
//! over an im2col buffer with zero "same" padding, so the sequence length is
//! preserved and flattening is a free reshape.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::arch::{sigmoid, softplus, Architecture, HeadKind, SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn new(inputs: usize, outputs: usize, bound: f64, rng: &mut StreamRng) -> Self {
        let weight = Array2::from_shape_fn((outputs, inputs), |_| {
            if bound > 0.0 {
                rng.random_range(-bound..bound)
            } else {
                0.0
            }
        });
        Self {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, x: ArrayView2<f64>, dz: ArrayView2<f64>, grad: &mut LinearGrad) -> Array2<f64> {
        grad.weight += &dz.t().dot(&x);
        grad.bias += &dz.sum_axis(Axis(0));
        dz.dot(&self.weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearGrad {
    fn zeros_like(l: &Linear) -> Self {
        Self {
            weight: Array2::zeros(l.weight.raw_dim()),
            bias: Array1::zeros(l.bias.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub kernel: usize,
    pub in_channels: usize,
    /// `weight` is `[out_channels, kernel * in_channels]`, columns ordered (tap, channel).
    pub linear: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Single(Linear),
    Multi { sigma: Linear, mean: Linear },
}

/// Multiplicative dropout masks for one batch: entries are 0 or 1/(1-p).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    /// `[batch, feature_width]`, applied to the flattened conv output.
    pub features: Array2<f64>,
    /// `[batch, dense_units]`, applied to the dense trunk output.
    pub hidden: Array2<f64>,
}

impl DropoutMask {
    pub fn sample(arch: &Architecture, batch: usize, rng: &mut StreamRng) -> Self {
        let p = arch.dropout;
        let keep_scale = 1.0 / (1.0 - p);
        // Compare raw u32 draws against a threshold; P(drop) = p up to 2^-32.
        let threshold = (p * 4_294_967_296.0) as u64;
        let mut draw = || {
            if (rng.next_u32() as u64) < threshold {
                0.0
            } else {
                keep_scale
            }
        };
        let features = Array2::from_shape_simple_fn((batch, arch.feature_width()), &mut draw);
        let hidden = Array2::from_shape_simple_fn((batch, arch.dense_units), &mut draw);
        Self { features, hidden }
    }

    fn check(&self, arch: &Architecture, batch: usize) -> Result<()> {
        let want_f = (batch, arch.feature_width());
        let want_h = (batch, arch.dense_units);
        if self.features.dim() != want_f {
            return Err(Error::Shape {
                expected: want_f.0 * want_f.1,
                actual: self.features.len(),
            });
        }
        if self.hidden.dim() != want_h {
            return Err(Error::Shape {
                expected: want_h.0 * want_h.1,
                actual: self.hidden.len(),
            });
        }
        Ok(())
    }
}

/// Per-appliance outputs for a batch, each `[batch, appliances]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mu: Array2<f64>,
    pub sigma: Array2<f64>,
    /// Raw σ pre-activation.
    pub s: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2PointNet {
    arch: Architecture,
    appliances: Vec<String>,
    convs: Vec<Conv1d>,
    dense: Linear,
    head: Head,
}

/// Intermediate values kept by [`Seq2PointNet::forward_train`] for backprop.
pub struct ForwardCache {
    batch: usize,
    conv_cols: Vec<Array2<f64>>,
    conv_pre: Vec<Array2<f64>>,
    dense_in: Array2<f64>,
    dense_pre: Array2<f64>,
    hidden: Array2<f64>,
    head_in: Array2<f64>,
    mask: Option<DropoutMask>,
}

/// Gradients laid out exactly like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub convs: Vec<LinearGrad>,
    pub dense: LinearGrad,
    pub head: Vec<LinearGrad>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in self.convs.iter().chain(std::iter::once(&self.dense)).chain(&self.head) {
            out.push(g.weight.as_slice().expect("standard layout"));
            out.push(g.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for g in self.convs.iter_mut().chain(std::iter::once(&mut self.dense)).chain(&mut self.head) {
            out.push(g.weight.as_slice_mut().expect("standard layout"));
            out.push(g.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

fn im2col(input: &Array2<f64>, batch: usize, len: usize, kernel: usize) -> Array2<f64> {
    let channels = input.ncols();
    let half = kernel / 2;
    let mut cols = Array2::zeros((batch * len, kernel * channels));
    let src = input.as_slice().expect("standard layout");
    let dst = cols.as_slice_mut().expect("standard layout");
    let width = kernel * channels;
    for b in 0..batch {
        for l in 0..len {
            let row = (b * len + l) * width;
            for j in 0..kernel {
                let pos = l as isize + j as isize - half as isize;
                if pos < 0 || pos >= len as isize {
                    continue;
                }
                let from = (b * len + pos as usize) * channels;
                dst[row + j * channels..row + (j + 1) * channels].copy_from_slice(&src[from..from + channels]);
            }
        }
    }
    cols
}

fn col2im(dcols: &Array2<f64>, batch: usize, len: usize, kernel: usize, channels: usize) -> Array2<f64> {
    let half = kernel / 2;
    let mut out = Array2::zeros((batch * len, channels));
    let src = dcols.as_slice().expect("standard layout");
    let dst = out.as_slice_mut().expect("standard layout");
    let width = kernel * channels;
    for b in 0..batch {
        for l in 0..len {
            let row = (b * len + l) * width;
            for j in 0..kernel {
                let pos = l as isize + j as isize - half as isize;
                if pos < 0 || pos >= len as isize {
                    continue;
                }
                let to = (b * len + pos as usize) * channels;
                for c in 0..channels {
                    dst[to + c] += src[row + j * channels + c];
                }
            }
        }
    }
    out
}

impl Seq2PointNet {
    /// Fresh network with uniform fan-in initialisation from `seed`.
    pub fn new(arch: Architecture, appliances: Vec<String>, seed: u64) -> Result<Self> {
        arch.validate()?;
        if appliances.is_empty() {
            return Err(Error::config("network needs at least one appliance"));
        }
        if arch.head == HeadKind::Single && appliances.len() != 1 {
            return Err(Error::config(format!(
                "single-output head takes exactly one appliance, got {}",
                appliances.len()
            )));
        }
        let mut rng = stream(seed, &[0x1A17]);
        let mut convs = Vec::with_capacity(arch.conv_channels.len());
        let mut in_channels = 1;
        for (&out, &kernel) in arch.conv_channels.iter().zip(&arch.conv_kernels) {
            let fan_in = kernel * in_channels;
            let bound = (6.0 / fan_in as f64).sqrt();
            convs.push(Conv1d {
                kernel,
                in_channels,
                linear: Linear::new(fan_in, out, bound, &mut rng),
            });
            in_channels = out;
        }
        let width = arch.feature_width();
        let dense = Linear::new(width, arch.dense_units, (6.0 / width as f64).sqrt(), &mut rng);
        let h = arch.dense_units;
        let k = appliances.len();
        let head = match arch.head {
            HeadKind::Single => Head::Single(Linear::new(h, 2, (1.0 / h as f64).sqrt(), &mut rng)),
            HeadKind::Multi => Head::Multi {
                sigma: Linear::new(h, k, (1.0 / h as f64).sqrt(), &mut rng),
                mean: Linear::new(h + k, k, (1.0 / (h + k) as f64).sqrt(), &mut rng),
            },
        };
        Ok(Self {
            arch,
            appliances,
            convs,
            dense,
            head,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    /// Output index → appliance name.
    pub fn appliances(&self) -> &[String] {
        &self.appliances
    }

    pub fn appliance_index(&self, name: &str) -> Option<usize> {
        self.appliances.iter().position(|a| a == name)
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Head {
        &mut self.head
    }

    pub fn sample_mask(&self, batch: usize, rng: &mut StreamRng) -> DropoutMask {
        DropoutMask::sample(&self.arch, batch, rng)
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.arch.seq_len {
            return Err(Error::Shape {
                expected: self.arch.seq_len,
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    fn run_convs(&self, x: ArrayView2<f64>, mut cache: Option<&mut ForwardCache>) -> Array2<f64> {
        let batch = x.nrows();
        let len = self.arch.seq_len;
        let mut act = x.as_standard_layout().into_owned().into_shape_with_order((batch * len, 1)).expect("contiguous");
        for conv in &self.convs {
            let cols = im2col(&act, batch, len, conv.kernel);
            let pre = conv.linear.apply(cols.view());
            act = pre.mapv(|z| self.arch.activation.apply(z));
            if let Some(c) = cache.as_deref_mut() {
                c.conv_cols.push(cols);
                c.conv_pre.push(pre);
            }
        }
        let width = self.arch.feature_width();
        act.into_shape_with_order((batch, width)).expect("contiguous")
    }

    /// Flattened conv features `[batch, feature_width]`; independent of dropout.
    pub fn features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(self.run_convs(x, None))
    }

    /// Dense trunk and head on precomputed features.
    pub fn head_forward(&self, features: ArrayView2<f64>, mask: Option<&DropoutMask>) -> Result<Prediction> {
        if let Some(m) = mask {
            m.check(&self.arch, features.nrows())?;
        }
        let dense_in = match mask {
            Some(m) => &features * &m.features,
            None => features.to_owned(),
        };
        let pre = self.dense.apply(dense_in.view());
        let mut hidden = pre.mapv(|z| self.arch.activation.apply(z));
        if let Some(m) = mask {
            hidden *= &m.hidden;
        }
        Ok(self.apply_head(&hidden).0)
    }

    fn apply_head(&self, hidden: &Array2<f64>) -> (Prediction, Array2<f64>) {
        match &self.head {
            Head::Single(l) => {
                let out = l.apply(hidden.view());
                let mu = out.slice(s![.., 0..1]).to_owned();
                let s = out.slice(s![.., 1..2]).to_owned();
                let sigma = s.mapv(|v| softplus(v) + SIGMA_FLOOR);
                (Prediction { mu, sigma, s }, hidden.clone())
            }
            Head::Multi { sigma, mean } => {
                let s = sigma.apply(hidden.view());
                let head_in = ndarray::concatenate(Axis(1), &[hidden.view(), s.view()]).expect("same rows");
                let mu = mean.apply(head_in.view());
                let sig = s.mapv(|v| softplus(v) + SIGMA_FLOOR);
                (Prediction { mu, sigma: sig, s }, head_in)
            }
        }
    }

    /// Rows of `x` are length-`seq_len` inputs. `None` disables dropout.
    pub fn forward(&self, x: ArrayView2<f64>, mask: Option<&DropoutMask>) -> Result<Prediction> {
        let f = self.features(x)?;
        self.head_forward(f.view(), mask)
    }

    /// Single-input convenience: `(μ, σ)` per appliance.
    pub fn forward_one(&self, input: &[f64], mask: Option<&DropoutMask>) -> Result<Vec<(f64, f64)>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("one row");
        let p = self.forward(x, mask)?;
        Ok(p.mu.row(0).iter().zip(p.sigma.row(0)).map(|(&m, &s)| (m, s)).collect())
    }

    pub fn forward_train(&self, x: ArrayView2<f64>, mask: Option<DropoutMask>) -> Result<(Prediction, ForwardCache)> {
        self.check_input(x)?;
        if let Some(m) = &mask {
            m.check(&self.arch, x.nrows())?;
        }
        let mut cache = ForwardCache {
            batch: x.nrows(),
            conv_cols: Vec::new(),
            conv_pre: Vec::new(),
            dense_in: Array2::zeros((0, 0)),
            dense_pre: Array2::zeros((0, 0)),
            hidden: Array2::zeros((0, 0)),
            head_in: Array2::zeros((0, 0)),
            mask: None,
        };
        let features = self.run_convs(x, Some(&mut cache));
        let dense_in = match &mask {
            Some(m) => &features * &m.features,
            None => features.clone(),
        };
        let dense_pre = self.dense.apply(dense_in.view());
        let mut hidden = dense_pre.mapv(|z| self.arch.activation.apply(z));
        if let Some(m) = &mask {
            hidden *= &m.hidden;
        }
        let (pred, head_in) = self.apply_head(&hidden);
        cache.dense_in = dense_in;
        cache.dense_pre = dense_pre;
        cache.hidden = hidden;
        cache.head_in = head_in;
        cache.mask = mask;
        Ok((pred, cache))
    }

    /// Backpropagates loss gradients w.r.t. μ and σ (both `[batch, appliances]`).
    pub fn backward(
        &self,
        pred: &Prediction,
        cache: &ForwardCache,
        dmu: ArrayView2<f64>,
        dsigma: ArrayView2<f64>,
    ) -> Gradients {
        let act = self.arch.activation;
        let ds_from_sigma = &dsigma * &pred.s.mapv(sigmoid);
        let mut grads = self.zero_gradients();

        let dhidden = match &self.head {
            Head::Single(l) => {
                let dout = ndarray::concatenate(Axis(1), &[dmu, ds_from_sigma.view()]).expect("same rows");
                l.backward(cache.head_in.view(), dout.view(), &mut grads.head[0])
            }
            Head::Multi { sigma, mean } => {
                let h = self.arch.dense_units;
                let dhead_in = mean.backward(cache.head_in.view(), dmu, &mut grads.head[1]);
                let ds = &dhead_in.slice(s![.., h..]) + &ds_from_sigma;
                let mut dh = dhead_in.slice(s![.., ..h]).to_owned();
                dh += &sigma.backward(cache.hidden.view(), ds.view(), &mut grads.head[0]);
                dh
            }
        };

        let mut dpre = match &cache.mask {
            Some(m) => dhidden * &m.hidden,
            None => dhidden,
        };
        ndarray::Zip::from(&mut dpre)
            .and(&cache.dense_pre)
            .for_each(|d, &z| *d *= act.derivative(z));
        let ddense_in = self.dense.backward(cache.dense_in.view(), dpre.view(), &mut grads.dense);
        let dfeatures = match &cache.mask {
            Some(m) => ddense_in * &m.features,
            None => ddense_in,
        };

        let batch = cache.batch;
        let len = self.arch.seq_len;
        let last = *self.arch.conv_channels.last().expect("non-empty");
        let mut dact = dfeatures.into_shape_with_order((batch * len, last)).expect("contiguous");
        for (i, conv) in self.convs.iter().enumerate().rev() {
            ndarray::Zip::from(&mut dact)
                .and(&cache.conv_pre[i])
                .for_each(|d, &z| *d *= act.derivative(z));
            let dcols = conv.linear.backward(cache.conv_cols[i].view(), dact.view(), &mut grads.convs[i]);
            if i > 0 {
                dact = col2im(&dcols, batch, len, conv.kernel, conv.in_channels);
            }
        }
        grads
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            convs: self.convs.iter().map(|c| LinearGrad::zeros_like(&c.linear)).collect(),
            dense: LinearGrad::zeros_like(&self.dense),
            head: match &self.head {
                Head::Single(l) => vec![LinearGrad::zeros_like(l)],
                Head::Multi { sigma, mean } => vec![LinearGrad::zeros_like(sigma), LinearGrad::zeros_like(mean)],
            },
        }
    }

    fn linears(&self) -> Vec<&Linear> {
        let mut out: Vec<&Linear> = self.convs.iter().map(|c| &c.linear).collect();
        out.push(&self.dense);
        match &self.head {
            Head::Single(l) => out.push(l),
            Head::Multi { sigma, mean } => {
                out.push(sigma);
                out.push(mean);
            }
        }
        out
    }

    /// Parameter tensors in a fixed order matching [`Gradients::slices`].
    pub fn params(&self) -> Vec<&[f64]> {
        self.linears()
            .into_iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut linears: Vec<&mut Linear> = self.convs.iter_mut().map(|c| &mut c.linear).collect();
        linears.push(&mut self.dense);
        match &mut self.head {
            Head::Single(l) => linears.push(l),
            Head::Multi { sigma, mean } => {
                linears.push(sigma);
                linears.push(mean);
            }
        }
        linears
            .into_iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Zeroes every head weight and bias.
    pub fn zero_head(&mut self) {
        match &mut self.head {
            Head::Single(l) => {
                l.weight.fill(0.0);
                l.bias.fill(0.0);
            }
            Head::Multi { sigma, mean } => {
                for l in [sigma, mean] {
                    l.weight.fill(0.0);
                    l.bias.fill(0.0);
                }
            }
        }
    }

    pub(crate) fn to_parts(&self) -> (Architecture, Vec<String>, Vec<Vec<f64>>) {
        (
            self.arch.clone(),
            self.appliances.clone(),
            self.params().into_iter().map(<[f64]>::to_vec).collect(),
        )
    }

    pub(crate) fn from_parts(arch: Architecture, appliances: Vec<String>, params: Vec<Vec<f64>>) -> Result<Self> {
        let mut net = Self::new(arch, appliances, 0)?;
        let mut slots = net.params_mut();
        if slots.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                slots.len(),
                params.len()
            )));
        }
        for (i, (slot, values)) in slots.iter_mut().zip(&params).enumerate() {
            if slot.len() != values.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {i}: expected {} values, found {}",
                    slot.len(),
                    values.len()
                )));
            }
            slot.copy_from_slice(values);
        }
        drop(slots);
        Ok(net)
    }
}

/// Serialisable snapshot of a network: architecture, output table, weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: Architecture,
    pub appliances: Vec<String>,
    pub params: Vec<Vec<f64>>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn from_net(net: &Seq2PointNet) -> Self {
        let (architecture, appliances, params) = net.to_parts();
        Self {
            format_version: CHECKPOINT_VERSION,
            architecture,
            appliances,
            params,
        }
    }

    pub fn into_net(self) -> Result<Seq2PointNet> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.format_version
            )));
        }
        Seq2PointNet::from_parts(self.architecture, self.appliances, self.params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn small(head: HeadKind, apps: usize) -> Seq2PointNet {
        let arch = Architecture {
            seq_len: 15,
            conv_channels: vec![4, 4],
            conv_kernels: vec![5, 3],
            dense_units: 8,
            head,
            ..Architecture::default()
        };
        Seq2PointNet::new(arch, (0..apps).map(|i| format!("a{i}")).collect(), 42).unwrap()
    }

    fn input(seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, &[]);
        (0..15).map(|_| rng.random_range(-3.0..3.0)).collect()
    }

    #[test]
    fn output_counts() {
        let x = input(1);
        assert_eq!(small(HeadKind::Single, 1).forward_one(&x, None).unwrap().len(), 1);
        assert_eq!(small(HeadKind::Multi, 4).forward_one(&x, None).unwrap().len(), 4);
        assert!(Seq2PointNet::new(
            Architecture {
                head: HeadKind::Single,
                ..Architecture::default()
            },
            vec!["a".into(), "b".into()],
            0
        )
        .is_err());
    }

    #[test]
    fn deterministic_without_dropout() {
        let net = small(HeadKind::Multi, 2);
        let x = input(2);
        assert_eq!(net.forward_one(&x, None).unwrap(), net.forward_one(&x, None).unwrap());
    }

    #[test]
    fn wrong_length_is_a_shape_error() {
        let net = small(HeadKind::Multi, 2);
        assert!(matches!(net.forward_one(&[0.0; 14], None), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_head_gives_softplus_zero_sigma() {
        for mut net in [small(HeadKind::Single, 1), small(HeadKind::Multi, 3)] {
            net.zero_head();
            for seed in 0..5 {
                for (mu, sigma) in net.forward_one(&input(seed), None).unwrap() {
                    assert_eq!(mu, 0.0);
                    assert!((sigma - (std::f64::consts::LN_2 + 1e-6)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn same_mask_same_output_different_masks_differ() {
        let net = small(HeadKind::Multi, 2);
        let x = input(3);
        let mut rng = stream(9, &[]);
        let m1 = net.sample_mask(1, &mut rng);
        let m2 = net.sample_mask(1, &mut rng);
        assert_eq!(net.forward_one(&x, Some(&m1)).unwrap(), net.forward_one(&x, Some(&m1)).unwrap());
        let mut differ = 0;
        for _ in 0..50 {
            let a = net.sample_mask(1, &mut rng);
            let b = net.sample_mask(1, &mut rng);
            if net.forward_one(&x, Some(&a)).unwrap() != net.forward_one(&x, Some(&b)).unwrap() {
                differ += 1;
            }
        }
        assert!(differ >= 49, "{differ}/50");
        assert_ne!(m1, m2);
    }

    #[test]
    fn mask_drop_rate_near_p() {
        let net = small(HeadKind::Multi, 1);
        let m = net.sample_mask(2000, &mut stream(4, &[]));
        let dropped = m.features.iter().filter(|&&v| v == 0.0).count() as f64 / m.features.len() as f64;
        assert!((dropped - 0.25).abs() < 0.01, "{dropped}");
    }

    #[test]
    fn checkpoint_restores_identical_forward() {
        let net = small(HeadKind::Multi, 3);
        let text = Checkpoint::from_net(&net).to_json();
        let back = Checkpoint::from_json(&text).unwrap().into_net().unwrap();
        assert_eq!(back, net);
        let x = input(5);
        assert_eq!(back.forward_one(&x, None).unwrap(), net.forward_one(&x, None).unwrap());
    }

    #[test]
    fn checkpoint_rejects_wrong_version() {
        let mut c = Checkpoint::from_net(&small(HeadKind::Single, 1));
        c.format_version = 99;
        assert!(c.into_net().is_err());
    }

    proptest! {
        #[test]
        fn sigma_always_positive(seed in 0u64..1000, scale in 0.0f64..50.0) {
            let mut net = small(HeadKind::Multi, 2);
            let mut rng = stream(seed, &[7]);
            for p in net.params_mut() {
                for v in p.iter_mut() {
                    *v = rng.random_range(-scale..=scale);
                }
            }
            let x: Vec<f64> = (0..15).map(|_| rng.random_range(-100.0..100.0)).collect();
            let mask = net.sample_mask(1, &mut rng);
            for (_, sigma) in net.forward_one(&x, Some(&mask)).unwrap() {
                prop_assert!(sigma > 0.0);
            }
        }
    }
}
