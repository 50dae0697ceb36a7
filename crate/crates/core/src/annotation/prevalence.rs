//! Prevalence lower bounds from consensus counts.
//!
//! Strict and loose consensus counts over a random sample of `n` accounts
//! give the lower and upper ends of a prevalence range. Rates render as
//! percentages with three decimals, rounded half away from zero, and
//! population extrapolations are floored. Both are computed in exact
//! integer arithmetic.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::consensus::{Consensus, ConsensusCounts};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetTotals {
    pub strict_tweets: u64,
    pub loose_tweets: u64,
    pub total_tweets: u64,
}

impl TweetTotals {
    /// Sums per-account tweet tallies over the strict and loose sets.
    /// Accounts without a tally contribute zero.
    pub fn from_tallies(
        consensus: &Consensus,
        per_account: &HashMap<String, u64>,
        total_tweets: u64,
    ) -> Result<Self> {
        let sum = |ids: &[String]| -> u64 {
            ids.iter().map(|id| per_account.get(id).copied().unwrap_or(0)).sum()
        };
        let totals = TweetTotals {
            strict_tweets: sum(&consensus.strict_ids),
            loose_tweets: sum(&consensus.loose_ids),
            total_tweets,
        };
        totals.validate()?;
        Ok(totals)
    }

    fn validate(&self) -> Result<()> {
        if self.total_tweets == 0 {
            return Err(Error::invalid("total tweet count must be positive"));
        }
        if self.strict_tweets > self.loose_tweets || self.loose_tweets > self.total_tweets {
            return Err(Error::invalid(format!(
                "tweet totals must satisfy strict <= loose <= total, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceReport {
    pub n_sample: u64,
    pub n_candidates: usize,
    pub strict_count: usize,
    pub loose_count: usize,
    pub lower_rate: f64,
    pub upper_rate: f64,
    pub lower_percent: String,
    pub upper_percent: String,
    pub kappa: Option<f64>,
    pub extrapolation_base: Option<u64>,
    pub extrapolated_low: Option<u64>,
    pub extrapolated_high: Option<u64>,
    pub tweet_lower_rate: Option<f64>,
    pub tweet_upper_rate: Option<f64>,
    pub tweet_lower_percent: Option<String>,
    pub tweet_upper_percent: Option<String>,
}

/// `num / den` as a percentage with three decimals, rounded half away from
/// zero, e.g. `render_percent(54, 254_275) == "0.021%"`.
pub fn render_percent(num: u64, den: u64) -> String {
    assert!(den > 0, "percentage of an empty base");
    // In units of 0.001 percent.
    let scaled = u128::from(num) * 100_000;
    let den = u128::from(den);
    let rounded = (2 * scaled + den) / (2 * den);
    format!("{}.{:03}%", rounded / 1000, rounded % 1000)
}

fn floor_scale(count: u64, base: u64, n: u64) -> u64 {
    (u128::from(count) * u128::from(base) / u128::from(n)) as u64
}

pub fn prevalence_report(
    counts: &ConsensusCounts,
    n_sample: u64,
    kappa: Option<f64>,
    extrapolation_base: Option<u64>,
    tweets: Option<TweetTotals>,
) -> Result<PrevalenceReport> {
    if n_sample == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    counts.validate()?;
    if counts.n_candidates as u64 > n_sample {
        return Err(Error::invalid(format!(
            "{} candidates cannot come from a sample of {n_sample}",
            counts.n_candidates
        )));
    }
    if let Some(k) = kappa {
        if !(-1.0..=1.0).contains(&k) {
            return Err(Error::invalid(format!("kappa {k} outside [-1, 1]")));
        }
    }
    if let Some(t) = &tweets {
        t.validate()?;
    }

    let (strict, loose) = (counts.strict as u64, counts.loose as u64);
    let rate = |c: u64| c as f64 / n_sample as f64;
    Ok(PrevalenceReport {
        n_sample,
        n_candidates: counts.n_candidates,
        strict_count: counts.strict,
        loose_count: counts.loose,
        lower_rate: rate(strict),
        upper_rate: rate(loose),
        lower_percent: render_percent(strict, n_sample),
        upper_percent: render_percent(loose, n_sample),
        kappa,
        extrapolation_base,
        extrapolated_low: extrapolation_base.map(|b| floor_scale(strict, b, n_sample)),
        extrapolated_high: extrapolation_base.map(|b| floor_scale(loose, b, n_sample)),
        tweet_lower_rate: tweets.map(|t| t.strict_tweets as f64 / t.total_tweets as f64),
        tweet_upper_rate: tweets.map(|t| t.loose_tweets as f64 / t.total_tweets as f64),
        tweet_lower_percent: tweets.map(|t| render_percent(t.strict_tweets, t.total_tweets)),
        tweet_upper_percent: tweets.map(|t| render_percent(t.loose_tweets, t.total_tweets)),
    })
}
