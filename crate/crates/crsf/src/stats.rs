//! Small statistics helpers shared by the samplers and the CLI.

use crate::error::{Error, Result};

/// Sample mean with a z-scaled half width (z = 1.96 gives 95%).
pub fn mean_ci(xs: &[f64], z: f64) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, z * (var / n).sqrt()))
}

/// Index of dispersion: sample variance over sample mean.
pub fn dispersion_index(xs: &[f64]) -> Result<f64> {
    let (mean, _) = mean_ci(xs, 1.0)?;
    if mean == 0.0 {
        return Err(Error::ZeroDenominator("dispersion mean"));
    }
    let n = xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(var / mean)
}

/// Standard deviation of a binomial frequency estimate at probability `p`.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// |observed - expected| in binomial sigmas, guarding degenerate expectations.
pub fn binomial_z(observed_count: usize, n: usize, expected_p: f64) -> f64 {
    let sigma = binomial_sigma(expected_p, n);
    let obs = observed_count as f64 / n as f64;
    if sigma == 0.0 {
        if (obs - expected_p).abs() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (obs - expected_p).abs() / sigma
    }
}

/// Empirical tail P(X > k) for k = 0..=max observed value.
pub fn tail_distribution(xs: &[usize]) -> Vec<f64> {
    let max = xs.iter().copied().max().unwrap_or(0);
    let n = xs.len() as f64;
    (0..=max).map(|k| xs.iter().filter(|&&x| x > k).count() as f64 / n).collect()
}
