//! Self-checks run by `nilm-al verify`: each numerical component against an
//! independent oracle.

use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::acquisition::{aggregate_house_score, AggregationWindow, Kernel};
use crate::model::{backward, loss, Activation, Architecture, HeadKind, Seq2PointNet, TrainingSet};
use crate::rng::stream;
use crate::uncertainty::{gaussian_entropy, mutual_information_raw, GaussianMixture, MiFormula};

/// Deliberate defects, used to show that a check can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Perturbs one backprop gradient entry before comparison.
    CorruptGradient,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> CheckResult {
    let t = Instant::now();
    let (passed, detail) = f();
    CheckResult {
        name,
        passed,
        detail,
        elapsed: t.elapsed(),
    }
}

/// Largest relative gap between backprop and central differences over all
/// parameters of a reduced network, across `draws` random weights/batches.
pub fn gradient_check(draws: u64, fault: Option<Fault>) -> f64 {
    const EPS: f64 = 1e-4;
    let arch = Architecture {
        seq_len: 9,
        conv_channels: vec![3, 4],
        conv_kernels: vec![3, 5],
        dense_units: 6,
        dropout: 0.25,
        activation: Activation::Silu,
        head: HeadKind::Multi,
    };
    let mut worst = 0.0f64;
    for draw in 0..draws {
        let net = Seq2PointNet::new(arch.clone(), vec!["a".into(), "b".into()], draw).expect("valid arch");
        let mut rng = stream(draw, &[0x6AAD]);
        let batch = TrainingSet {
            inputs: Array2::from_shape_simple_fn((3, 9), || rng.random_range(-2.0..2.0)),
            targets: Array2::from_shape_simple_fn((3, 2), || rng.random_range(-1.5..1.5)),
            mask: Array2::from_elem((3, 2), 1.0),
        };
        let mask = Some(net.sample_mask(3, &mut rng));
        let (_, grads) = backward(&net, &batch, mask.clone()).expect("backward");
        let mut analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
        if fault == Some(Fault::CorruptGradient) {
            analytic[0][0] += 0.05 + analytic[0][0].abs();
        }
        let mut probe = net.clone();
        for (t, tensor) in analytic.iter().enumerate() {
            for (i, &g) in tensor.iter().enumerate() {
                let orig = probe.params()[t][i];
                probe.params_mut()[t][i] = orig + EPS;
                let up = loss(&probe, &batch, mask.as_ref()).expect("loss");
                probe.params_mut()[t][i] = orig - EPS;
                let down = loss(&probe, &batch, mask.as_ref()).expect("loss");
                probe.params_mut()[t][i] = orig;
                let fd = (up - down) / (2.0 * EPS);
                worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
            }
        }
    }
    worst
}

/// Worst relative gap between the closed-form mixture σ and the sample σ of
/// `draws` samples, over `mixtures` random mixtures with 2 to 25 components.
pub fn mixture_moment_check(mixtures: u64, draws: usize) -> f64 {
    let mut worst = 0.0f64;
    for m in 0..mixtures {
        let mut rng = stream(m, &[0x303E]);
        let f = rng.random_range(2..=25);
        let comps: Vec<(f64, f64)> = (0..f)
            .map(|_| (rng.random_range(-3.0..3.0), rng.random_range(0.05..2.0)))
            .collect();
        let (_, sigma) = GaussianMixture::new(comps.clone()).expect("valid").ensemble_moments();
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let (mu, sd) = comps[rng.random_range(0..f)];
            let z: f64 = rng.sample(StandardNormal);
            let x = mu + sd * z;
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / draws as f64;
        let sample_sd = (s2 / draws as f64 - mean * mean).sqrt();
        worst = worst.max((sigma - sample_sd).abs() / sample_sd);
    }
    worst
}

/// Differential entropy of a mixture by composite Simpson quadrature.
pub fn mixture_entropy_quadrature(mix: &GaussianMixture, intervals: usize) -> f64 {
    let c = mix.components();
    let lo = c.iter().map(|&(m, s)| m - 12.0 * s).fold(f64::INFINITY, f64::min);
    let hi = c.iter().map(|&(m, s)| m + 12.0 * s).fold(f64::NEG_INFINITY, f64::max);
    let n = intervals + intervals % 2;
    let h = (hi - lo) / n as f64;
    let g = |x: f64| {
        let lp = mix.ln_pdf(x);
        -lp.exp() * lp
    };
    let mut sum = g(lo) + g(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * g(lo + i as f64 * h);
    }
    sum * h / 3.0
}

/// (MI of identical components at S = 10⁴, MI of two separated components
/// at S = 10⁵, quadrature MI of the separated pair).
pub fn mi_check() -> (f64, f64, f64) {
    let same = GaussianMixture::new(vec![(0.7, 0.5); 4]).expect("valid");
    let same_mi = mutual_information_raw(&same, 10_000, MiFormula::Corrected, &mut stream(1, &[0x31])).expect("mi");
    let pair = GaussianMixture::new(vec![(0.0, 1.0), (10.0, 1.0)]).expect("valid");
    let pair_mi = mutual_information_raw(&pair, 100_000, MiFormula::Corrected, &mut stream(2, &[0x31])).expect("mi");
    let oracle = mixture_entropy_quadrature(&pair, 200_000) - gaussian_entropy(1.0);
    (same_mi, pair_mi, oracle)
}

/// Max deviation of K=7 triangle weights from {1/8..1..1/8} and of a
/// constant-score aggregation from the constant.
pub fn kernel_check() -> (f64, f64) {
    let w = AggregationWindow::dynamic(7, Kernel::Triangle);
    let t = 100;
    let weight_err = (-7..=7)
        .map(|d: i64| (w.weight(t + d, t) - (8 - d.abs()) as f64 / 8.0).abs())
        .fold(0.0, f64::max);
    let c = 3.7;
    let pts: Vec<(i64, f64)> = (t - 7..=t + 7).flat_map(|d| [(d, c), (d, c)]).collect();
    let agg = aggregate_house_score(0, &pts, &w, t).expect("non-empty window");
    (weight_err, (agg - c).abs())
}

pub fn run_all(fault: Option<Fault>) -> Vec<CheckResult> {
    vec![
        timed("gradient finite differences", || {
            let e = gradient_check(20, fault);
            (e < 1e-3, format!("max relative error {e:.2e} (limit 1e-3)"))
        }),
        timed("mixture moments vs sampling", || {
            let e = mixture_moment_check(100, 1_000_000);
            (e < 0.02, format!("worst relative sigma gap {e:.4} (limit 0.02)"))
        }),
        timed("mutual information oracle", || {
            let (same, pair, oracle) = mi_check();
            let ok = same.abs() < 0.01 && (pair - oracle).abs() < 0.05 && (oracle - std::f64::consts::LN_2).abs() < 1e-3;
            (ok, format!("identical {same:.4}, separated {pair:.4} vs quadrature {oracle:.4}"))
        }),
        timed("triangle kernel exactness", || {
            let (w, a) = kernel_check();
            (w == 0.0 && a < 1e-12, format!("weight error {w:e}, aggregation error {a:e}"))
        }),
    ]
}
