use rand::Rng as _;

use crate::error::{IqnError, Result};
use crate::rng::{stream, Stream};

/// Interquartile mean: drops `⌊n/4⌋` scores from each end and averages the rest.
pub fn iqm(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(IqnError::input("IQM of no scores"));
    }
    if scores.iter().any(|x| x.is_nan()) {
        return Err(IqnError::input("IQM of NaN scores"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let trim = sorted.len() / 4;
    let kept = &sorted[trim..sorted.len() - trim];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval of the IQM over resampled seeds.
pub fn bootstrap_ci(scores: &[f64], n_resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if scores.len() < 2 {
        return Err(IqnError::input("bootstrap needs at least two scores"));
    }
    if n_resamples == 0 || !(0.0..1.0).contains(&level) {
        return Err(IqnError::input("bootstrap needs resamples and a level in (0, 1)"));
    }
    let mut rng = stream(seed, Stream::Bootstrap);
    let mut sample = vec![0.0; scores.len()];
    let mut stats = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        for x in sample.iter_mut() {
            *x = scores[rng.gen_range(0..scores.len())];
        }
        stats.push(iqm(&sample)?);
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile(&stats, alpha), quantile(&stats, 1.0 - alpha)))
}
