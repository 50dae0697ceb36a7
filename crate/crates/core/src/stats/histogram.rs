use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Values outside `[first edge, last edge]`, and NaNs.
    pub overflow: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    /// `lower,upper,count` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lower,upper,count")?;
        for (edge, count) in self.edges.windows(2).zip(&self.counts) {
            writeln!(w, "{},{},{}", edge[0], edge[1], count)?;
        }
        Ok(())
    }
}

pub(crate) fn check_increasing(grid: &[f64], what: &str, min_len: usize) -> Result<()> {
    if grid.len() < min_len {
        return Err(Error::invalid(format!(
            "{what} needs at least {min_len} values, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains non-finite values")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!("{what} must be strictly increasing")));
    }
    Ok(())
}

/// Bins are half-open `[e_i, e_{i+1})` except the last, which is closed.
pub fn histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    check_increasing(edges, "bin edges", 2)?;
    let bins = edges.len() - 1;
    let (first, last) = (edges[0], edges[bins]);
    let mut counts = vec![0u64; bins];
    let mut overflow = 0;
    for &v in values {
        if !(first..=last).contains(&v) {
            overflow += 1;
        } else if v == last {
            counts[bins - 1] += 1;
        } else {
            // Number of edges <= v, minus one, is the bin index.
            let idx = edges.partition_point(|&e| e <= v) - 1;
            counts[idx] += 1;
        }
    }
    Ok(Histogram {
        edges: edges.to_vec(),
        counts,
        overflow,
    })
}

/// `bins + 1` evenly spaced edges from `min` to `max`.
pub fn uniform_edges(min: f64, max: f64, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || min.partial_cmp(&max) != Some(std::cmp::Ordering::Less) {
        return Err(Error::invalid(format!(
            "need at least one bin over a non-empty range, got {bins} bins over [{min}, {max}]"
        )));
    }
    Ok(super::kde::linspace(min, max, bins + 1))
}
