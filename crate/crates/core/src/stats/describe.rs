use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `n - 1`); `None` when `n == 1`.
    pub sd: Option<f64>,
}

/// Mean and sample standard deviation via Welford's single-pass update.
pub fn describe(values: &[f64]) -> Result<Description> {
    if values.is_empty() {
        return Err(Error::invalid("cannot describe an empty sample"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value {v} in sample")));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = values.len();
    let sd = (n > 1).then(|| (m2 / (n - 1) as f64).sqrt());
    Ok(Description { n, mean, sd })
}
