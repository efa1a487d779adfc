//! Boundary coefficients of the quadratic form and the height threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(n: usize, c: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("dimension must be at least 2, got {n}")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!("height must lie in (0,1), got {c}")));
    }
    Ok(())
}

/// Normal-normal coefficient `β(c) = ((n−1)/4) c²/√(1−c²) − √(1−c²)`,
/// i.e. `∂_ν̄ f + ¼ H_ḡ c` on the boundary.
pub fn beta_threshold(n: usize, c: f64) -> Result<f64> {
    check(n, c)?;
    let s = (1.0 - c * c).sqrt();
    Ok((n as f64 - 1.0) / 4.0 * c * c / s - s)
}

/// Tangential-normal coefficient `b2(c) = ((n+1)c² − 1)/(2√(1−c²))`,
/// i.e. `½ ∂_ν̄ f + n/(2(n−1)) H_ḡ c`.
pub fn b2_coefficient(n: usize, c: f64) -> Result<f64> {
    check(n, c)?;
    Ok(((n as f64 + 1.0) * c * c - 1.0) / (2.0 * (1.0 - c * c).sqrt()))
}

/// Closed form `2/√(n+3)`.
pub fn cstar_closed(n: usize) -> f64 {
    2.0 / (n as f64 + 3.0).sqrt()
}

/// Root of `β` on `(0,1)` by bisection to an interval width of 1e−14.
pub fn cstar(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("dimension must be at least 2, got {n}")));
    }
    let (mut lo, mut hi) = (1e-6, 1.0 - 1e-12);
    if beta_threshold(n, lo)? >= 0.0 || beta_threshold(n, hi)? <= 0.0 {
        return Err(Error::Numeric("β does not change sign on (0,1)".into()));
    }
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if beta_threshold(n, mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed form of `b2(c*) = (3n+1)/(2√((n−1)(n+3)))`.
pub fn b2_at_cstar(n: usize) -> f64 {
    let nf = n as f64;
    (3.0 * nf + 1.0) / (2.0 * ((nf - 1.0) * (nf + 3.0)).sqrt())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub n: usize,
    pub c_samples: Vec<f64>,
    pub beta: Vec<f64>,
    pub b2: Vec<f64>,
    pub cstar: f64,
    pub cstar_closed: f64,
    pub b2_root: f64,
    pub beta_increasing: bool,
    pub b2_increasing: bool,
}

/// Samples `β` and `b2` on a uniform grid of `samples` interior points.
pub fn threshold_report(n: usize, samples: usize) -> Result<ThresholdReport> {
    let samples = samples.max(3);
    let c_samples: Vec<f64> = (1..=samples)
        .map(|k| k as f64 / (samples + 1) as f64)
        .collect();
    let beta = c_samples
        .iter()
        .map(|&c| beta_threshold(n, c))
        .collect::<Result<Vec<_>>>()?;
    let b2 = c_samples
        .iter()
        .map(|&c| b2_coefficient(n, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdReport {
        n,
        beta_increasing: beta.windows(2).all(|w| w[1] > w[0]),
        b2_increasing: b2.windows(2).all(|w| w[1] > w[0]),
        c_samples,
        beta,
        b2,
        cstar: cstar(n)?,
        cstar_closed: cstar_closed(n),
        b2_root: 1.0 / (n as f64 + 1.0).sqrt(),
    })
}
