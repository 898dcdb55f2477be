use ndarray::Array2;

use super::{Normalizer, PowerSeries};
use crate::error::{Error, Result};

/// A normalized mains window and the appliance targets at its midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub house_id: u32,
    pub midpoint: i64,
    pub input: Vec<f64>,
    /// Normalized watts per requested appliance; `None` when the house lacks it.
    pub target: Vec<Option<f64>>,
}

pub fn check_seq_len(seq_len: usize) -> Result<()> {
    if seq_len == 0 || seq_len % 2 == 0 {
        return Err(Error::config(format!("sequence length must be odd and positive, got {seq_len}")));
    }
    Ok(())
}

/// Midpoints of every full `seq_len` window inside `[start, end)`, spaced by
/// `stride` starting from the first valid one.
pub fn midpoints(start: i64, end: i64, seq_len: usize, stride: usize) -> impl Iterator<Item = i64> {
    let half = (seq_len / 2) as i64;
    let first = start + half;
    let last = end - 1 - half;
    let count = if last >= first {
        ((last - first) as usize) / stride.max(1) + 1
    } else {
        0
    };
    (0..count).map(move |i| first + (i * stride.max(1)) as i64)
}

/// Window extraction on raw slices. `mains` and every target slice start at
/// minute `start` and cover `[start, start + mains.len())`.
pub fn windows_from_slices(
    house_id: u32,
    start: i64,
    mains: &[f64],
    targets: &[(Option<&[f64]>, f64)],
    seq_len: usize,
    stride: usize,
    normalizer: &Normalizer,
) -> Result<Vec<WindowSample>> {
    check_seq_len(seq_len)?;
    let half = seq_len / 2;
    let end = start + mains.len() as i64;
    let normalized: Vec<f64> = mains.iter().map(|&w| normalizer.normalize_mains(w)).collect();
    Ok(midpoints(start, end, seq_len, stride)
        .map(|mid| {
            let i = (mid - start) as usize;
            WindowSample {
                house_id,
                midpoint: mid,
                input: normalized[i - half..=i + half].to_vec(),
                target: targets
                    .iter()
                    .map(|(trace, scale)| trace.map(|t| t[i] / scale))
                    .collect(),
            }
        })
        .collect())
}

/// One sample per valid midpoint of `[start, end)` (clamped to the series).
/// A range shorter than `seq_len` yields no samples.
pub fn make_windows(
    series: &PowerSeries,
    appliances: &[String],
    start: i64,
    end: i64,
    seq_len: usize,
    normalizer: &Normalizer,
) -> Result<Vec<WindowSample>> {
    make_windows_strided(series, appliances, start, end, seq_len, 1, normalizer)
}

pub fn make_windows_strided(
    series: &PowerSeries,
    appliances: &[String],
    start: i64,
    end: i64,
    seq_len: usize,
    stride: usize,
    normalizer: &Normalizer,
) -> Result<Vec<WindowSample>> {
    let range = series.clamp_range(start, end);
    let offset = series.start() + range.start as i64;
    let targets = appliances
        .iter()
        .map(|a| {
            let scale = normalizer.scale(a)?;
            Ok((series.appliance(a).map(|t| &t[range.clone()]), scale))
        })
        .collect::<Result<Vec<_>>>()?;
    windows_from_slices(
        series.house_id(),
        offset,
        &series.mains()[range],
        &targets,
        seq_len,
        stride,
        normalizer,
    )
}

/// Normalized mains windows centred on the given midpoints, as rows.
/// `mains` covers `[start, start + mains.len())`; every window must fit.
pub fn input_matrix(
    start: i64,
    mains: &[f64],
    centres: &[i64],
    seq_len: usize,
    normalizer: &Normalizer,
) -> Result<Array2<f64>> {
    check_seq_len(seq_len)?;
    let half = (seq_len / 2) as i64;
    let mut out = Array2::zeros((centres.len(), seq_len));
    for (row, &mid) in out.rows_mut().into_iter().zip(centres) {
        let lo = mid - half - start;
        let hi = mid + half - start;
        if lo < 0 || hi >= mains.len() as i64 {
            return Err(Error::Validation(format!("window centred at minute {mid} exceeds mains coverage")));
        }
        for (dst, &w) in row.into_iter().zip(&mains[lo as usize..=hi as usize]) {
            *dst = normalizer.normalize_mains(w);
        }
    }
    Ok(out)
}
