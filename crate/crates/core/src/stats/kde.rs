//! Gaussian kernel density estimates on explicit evaluation grids.
//!
//! 1-D bandwidth defaults to Silverman's rule of thumb,
//! `h = 0.9 * min(sd, IQR / 1.34) * n^(-1/5)`; 2-D uses a product kernel
//! with Scott's rule per axis, `h_i = sd_i * n^(-1/6)`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::describe::describe;
use super::histogram::check_increasing;
use crate::error::{Error, Result};
use crate::geometry::NormPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density1d {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub n: usize,
}

/// Densities on the lattice `x × y`, stored row-major with `y` as the outer
/// index: `values[iy * x.len() + ix]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density2d {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: (f64, f64),
    pub n: usize,
}

#[inline]
fn std_normal(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { end } else { start + step * i as f64 })
                .collect()
        }
    }
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn check_sample(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid("density estimate needs at least one value"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("density estimate input contains non-finite values"));
    }
    Ok(())
}

fn check_bandwidth(h: f64) -> Result<f64> {
    if h.is_finite() && h > 0.0 {
        Ok(h)
    } else {
        Err(Error::invalid(format!("bandwidth must be positive and finite, got {h}")))
    }
}

pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    check_sample(values)?;
    if values.len() < 2 {
        return Err(Error::invalid(
            "automatic bandwidth needs at least two values; pass an explicit bandwidth",
        ));
    }
    let sd = describe(values)?.sd.unwrap_or(0.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    // If either spread measure is zero fall back to the other one.
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => {
            return Err(Error::invalid(
                "data have zero spread; pass an explicit bandwidth",
            ))
        }
    };
    Ok(0.9 * spread * (values.len() as f64).powf(-0.2))
}

pub fn scott_bandwidths(points: &[NormPoint]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::invalid(
            "automatic bandwidths need at least two points; pass explicit bandwidths",
        ));
    }
    let xs: Vec<f64> = points.iter().map(NormPoint::x).collect();
    let ys: Vec<f64> = points.iter().map(NormPoint::y).collect();
    let sx = describe(&xs)?.sd.unwrap_or(0.0);
    let sy = describe(&ys)?.sd.unwrap_or(0.0);
    if sx <= 0.0 || sy <= 0.0 {
        return Err(Error::invalid(
            "points have zero spread along an axis; pass explicit bandwidths",
        ));
    }
    let factor = (points.len() as f64).powf(-1.0 / 6.0);
    Ok((sx * factor, sy * factor))
}

pub fn kde_1d(values: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<Density1d> {
    check_sample(values)?;
    check_increasing(grid, "evaluation grid", 1)?;
    let h = match bandwidth {
        Some(h) => check_bandwidth(h)?,
        None => silverman_bandwidth(values)?,
    };
    let norm = 1.0 / (values.len() as f64 * h);
    let density = grid
        .par_iter()
        .map(|&t| norm * values.iter().map(|&x| std_normal((t - x) / h)).sum::<f64>())
        .collect();
    Ok(Density1d {
        grid: grid.to_vec(),
        values: density,
        bandwidth: h,
        n: values.len(),
    })
}

pub fn kde_2d(
    points: &[NormPoint],
    x_grid: &[f64],
    y_grid: &[f64],
    bandwidths: Option<(f64, f64)>,
) -> Result<Density2d> {
    if points.is_empty() {
        return Err(Error::invalid("density estimate needs at least one point"));
    }
    check_increasing(x_grid, "x grid", 1)?;
    check_increasing(y_grid, "y grid", 1)?;
    let (hx, hy) = match bandwidths {
        Some((hx, hy)) => (check_bandwidth(hx)?, check_bandwidth(hy)?),
        None => scott_bandwidths(points)?,
    };
    let norm = 1.0 / (points.len() as f64 * hx * hy);

    // Per-point kernel factors along each axis, then a product sum per node.
    let kx: Vec<Vec<f64>> = x_grid
        .iter()
        .map(|&gx| points.iter().map(|p| std_normal((gx - p.x()) / hx)).collect())
        .collect();
    let ky: Vec<Vec<f64>> = y_grid
        .iter()
        .map(|&gy| points.iter().map(|p| std_normal((gy - p.y()) / hy)).collect())
        .collect();
    let values = (0..y_grid.len() * x_grid.len())
        .into_par_iter()
        .map(|idx| {
            let (iy, ix) = (idx / x_grid.len(), idx % x_grid.len());
            norm * kx[ix].iter().zip(&ky[iy]).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    Ok(Density2d {
        x: x_grid.to_vec(),
        y: y_grid.to_vec(),
        values,
        bandwidth: (hx, hy),
        n: points.len(),
    })
}

impl Density1d {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,density")?;
        for (x, d) in self.grid.iter().zip(&self.values) {
            writeln!(w, "{x},{d}")?;
        }
        Ok(())
    }

    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({ "bandwidth": self.bandwidth, "n": self.n })
    }
}

impl Density2d {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.x.len() + ix]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,y,density")?;
        for (iy, y) in self.y.iter().enumerate() {
            for (ix, x) in self.x.iter().enumerate() {
                writeln!(w, "{x},{y},{}", self.at(ix, iy))?;
            }
        }
        Ok(())
    }

    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({ "bandwidth": [self.bandwidth.0, self.bandwidth.1], "n": self.n })
    }
}
