use ndarray::{Array2, ArrayView2};
use rand::RngCore;

use super::mixture::GaussianMixture;
use crate::error::{Error, Result};
use crate::model::{DropoutMask, Seq2PointNet};
use crate::rng::StreamRng;

/// Dropout masks for `rows` inputs where row `r` draws only from `rngs[r]`.
fn row_masks(net: &Seq2PointNet, rngs: &mut [StreamRng]) -> DropoutMask {
    let arch = net.architecture();
    let p = arch.dropout;
    let keep = 1.0 / (1.0 - p);
    let threshold = (p * 4_294_967_296.0) as u64;
    let rows = rngs.len();
    let mut features = Array2::zeros((rows, arch.feature_width()));
    let mut hidden = Array2::zeros((rows, arch.dense_units));
    for (r, rng) in rngs.iter_mut().enumerate() {
        for v in features.row_mut(r).iter_mut().chain(hidden.row_mut(r).iter_mut()) {
            *v = if (rng.next_u32() as u64) < threshold { 0.0 } else { keep };
        }
    }
    DropoutMask { features, hidden }
}

/// MC-dropout predictions for a batch of inputs.
///
/// Returns `[row][appliance]` mixtures of `passes` components, in the
/// network's normalized output units. Row `r` uses only `rngs[r]`, so a
/// point's mixture does not depend on which other points share its batch.
pub fn mc_predict_batch(
    net: &Seq2PointNet,
    inputs: ArrayView2<f64>,
    passes: usize,
    rngs: &mut [StreamRng],
) -> Result<Vec<Vec<GaussianMixture>>> {
    if passes == 0 {
        return Err(Error::config("forward pass count F must be >= 1"));
    }
    if rngs.len() != inputs.nrows() {
        return Err(Error::Shape {
            expected: inputs.nrows(),
            actual: rngs.len(),
        });
    }
    let k = net.appliances().len();
    let rows = inputs.nrows();
    let features = net.features(inputs)?;
    let mut comps: Vec<Vec<Vec<(f64, f64)>>> = vec![vec![Vec::with_capacity(passes); k]; rows];
    for _ in 0..passes {
        let mask = row_masks(net, rngs);
        let p = net.head_forward(features.view(), Some(&mask))?;
        for (r, row) in comps.iter_mut().enumerate() {
            for (a, c) in row.iter_mut().enumerate() {
                c.push((p.mu[[r, a]], p.sigma[[r, a]]));
            }
        }
    }
    comps
        .into_iter()
        .map(|row| row.into_iter().map(GaussianMixture::new).collect())
        .collect()
}

/// MC-dropout mixture per appliance for one input.
pub fn mc_predict(net: &Seq2PointNet, input: &[f64], passes: usize, rng: &mut StreamRng) -> Result<Vec<GaussianMixture>> {
    let x = ArrayView2::from_shape((1, input.len()), input).map_err(|_| Error::Shape {
        expected: net.architecture().seq_len,
        actual: input.len(),
    })?;
    let mut one = [rng.clone()];
    let out = mc_predict_batch(net, x, passes, &mut one)?;
    *rng = one[0].clone();
    Ok(out.into_iter().next().expect("one row"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, HeadKind};
    use crate::rng::stream;

    fn net(dropout: f64) -> Seq2PointNet {
        let arch = Architecture {
            seq_len: 9,
            conv_channels: vec![3, 3],
            conv_kernels: vec![3, 3],
            dense_units: 8,
            dropout,
            head: HeadKind::Multi,
            ..Architecture::default()
        };
        Seq2PointNet::new(arch, vec!["a".into(), "b".into()], 1).unwrap()
    }

    const X: [f64; 9] = [0.1, -0.3, 1.2, 0.5, 0.0, -1.0, 0.7, 0.2, 0.9];

    #[test]
    fn single_pass_equals_one_stochastic_forward() {
        let n = net(0.25);
        let mut rng = stream(5, &[]);
        let mut check = rng.clone();
        let mix = mc_predict(&n, &X, 1, &mut rng).unwrap();
        let mask = row_masks(&n, std::slice::from_mut(&mut check));
        let direct = n.forward_one(&X, Some(&mask)).unwrap();
        for (m, d) in mix.iter().zip(direct) {
            assert_eq!(m.components(), &[d]);
        }
    }

    #[test]
    fn no_dropout_gives_identical_components() {
        let n = net(0.0);
        let mix = mc_predict(&n, &X, 10, &mut stream(1, &[])).unwrap();
        for m in mix {
            assert!(m.components().windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn fixed_seed_reproducible_and_batch_independent() {
        let n = net(0.25);
        let a = mc_predict(&n, &X, 8, &mut stream(3, &[])).unwrap();
        let b = mc_predict(&n, &X, 8, &mut stream(3, &[])).unwrap();
        assert_eq!(a, b);
        let mut two = Array2::zeros((2, 9));
        two.row_mut(0).assign(&ndarray::arr1(&[0.0; 9]));
        two.row_mut(1).assign(&ndarray::arr1(&X));
        let mut rngs = [stream(9, &[]), stream(3, &[])];
        let batch = mc_predict_batch(&n, two.view(), 8, &mut rngs).unwrap();
        assert_eq!(batch[1], a);
    }

    #[test]
    fn zero_passes_rejected() {
        assert!(mc_predict(&net(0.25), &X, 0, &mut stream(0, &[])).is_err());
    }
}
