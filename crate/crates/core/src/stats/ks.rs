//! Two-sample Kolmogorov-Smirnov statistic and its asymptotic p-value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SERIES_TOLERANCE: f64 = 1e-12;

fn sorted_finite(sample: &[f64], name: &str) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::invalid(format!("sample {name} is empty")));
    }
    if let Some(v) = sample.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("sample {name} contains non-finite value {v}")));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// `D = sup_t |F_a(t) - F_b(t)|`, walking the merged sorted support. The
/// maximum is tracked on the integer numerator `|i*m - j*n|`, so the result
/// is the correctly rounded value of the exact fraction.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted_finite(a, "a")?;
    let b = sorted_finite(b, "b")?;
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: u128 = 0;
    while i < n && j < m {
        let t = a[i].min(b[j]);
        while i < n && a[i] == t {
            i += 1;
        }
        while j < m && b[j] == t {
            j += 1;
        }
        let gap = (i as u128 * m as u128).abs_diff(j as u128 * n as u128);
        best = best.max(gap);
    }
    Ok(best as f64 / (n as u128 * m as u128) as f64)
}

/// Asymptotic two-sided p-value `Q(lambda)` with
/// `lambda = D * sqrt(n m / (n + m))` and
/// `Q(lambda) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)`.
/// The series stops once a term drops below 1e-12.
pub fn ks_pvalue(d: f64, n: usize, m: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::invalid(format!("KS statistic {d} outside [0, 1]")));
    }
    if n == 0 || m == 0 {
        return Err(Error::invalid("KS sample sizes must be positive"));
    }
    let (nf, mf) = (n as f64, m as f64);
    let lambda = d * (nf * mf / (nf + mf)).sqrt();
    if lambda == 0.0 {
        return Ok(1.0);
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut k = 1.0f64;
    loop {
        let term = (a * k * k).exp();
        sum += sign * term;
        if term < SERIES_TOLERANCE {
            break;
        }
        sign = -sign;
        k += 1.0;
    }
    Ok((2.0 * sum).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub d: f64,
    pub p: f64,
    pub n: usize,
    pub m: usize,
}

pub fn ks_test(a: &[f64], b: &[f64]) -> Result<KsTest> {
    let d = ks_two_sample(a, b)?;
    let p = ks_pvalue(d, a.len(), b.len())?;
    Ok(KsTest {
        d,
        p,
        n: a.len(),
        m: b.len(),
    })
}
