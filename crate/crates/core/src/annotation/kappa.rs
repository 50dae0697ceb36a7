use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Cohen's kappa for two raters over paired labels:
/// `(p_o - p_e) / (1 - p_e)`, with `p_e` the sum over categories of the
/// product of the two raters' marginal frequencies. When chance agreement
/// is total (both raters used one and the same category throughout) kappa
/// is defined as 1.
///
/// Computed on integer counts, `(n*agree - sum_k r_k c_k) / (n^2 - sum_k r_k c_k)`,
/// so there is a single rounding step.
pub fn cohen_kappa<T: Ord>(pairs: &[(T, T)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("kappa needs at least one labeled pair"));
    }
    let n = pairs.len() as i128;
    let mut rows: BTreeMap<&T, i128> = BTreeMap::new();
    let mut cols: BTreeMap<&T, i128> = BTreeMap::new();
    let mut agree = 0i128;
    for (a, b) in pairs {
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
        if a == b {
            agree += 1;
        }
    }
    let chance: i128 = rows
        .iter()
        .map(|(k, r)| r * cols.get(k).copied().unwrap_or(0))
        .sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok((n * agree - chance) as f64 / denom as f64)
}
