//! Profile characteristics (follower, friend and tweet counts, creation
//! year) and group-versus-group comparison of their distributions.

use std::path::Path;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::describe::{describe, Description};
use super::ks::{ks_test, KsTest};
use crate::error::{Error, Result};

pub const FIRST_ACCOUNT_YEAR: i32 = 2006;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountStats {
    pub followers: u64,
    pub friends: u64,
    pub tweets: u64,
    pub created_year: i32,
}

impl AccountStats {
    pub fn validate(&self, current_year: i32) -> Result<()> {
        if !(FIRST_ACCOUNT_YEAR..=current_year).contains(&self.created_year) {
            return Err(Error::invalid(format!(
                "created_year {} outside [{FIRST_ACCOUNT_YEAR}, {current_year}]",
                self.created_year
            )));
        }
        Ok(())
    }

    pub fn field(&self, field: AccountField) -> f64 {
        match field {
            AccountField::Followers => self.followers as f64,
            AccountField::Friends => self.friends as f64,
            AccountField::Tweets => self.tweets as f64,
            AccountField::CreatedYear => f64::from(self.created_year),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountField {
    Followers,
    Friends,
    Tweets,
    CreatedYear,
}

impl AccountField {
    pub const ALL: [AccountField; 4] = [
        AccountField::Followers,
        AccountField::Friends,
        AccountField::Tweets,
        AccountField::CreatedYear,
    ];
}

/// Reads a CSV with header `followers,friends,tweets,created_year`.
pub fn load_account_csv(path: &Path) -> Result<Vec<AccountStats>> {
    let current_year = chrono::Utc::now().year();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<AccountStats>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        row.validate(current_year).map_err(|e| Error::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        out.push(row);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io_at(path, io),
        other => Error::Parse {
            line,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldComparison {
    pub field: AccountField,
    pub a: Description,
    pub b: Description,
    pub ks: KsTest,
}

/// Describes each field in both groups and runs a two-sample KS test per field.
pub fn compare_groups(a: &[AccountStats], b: &[AccountStats]) -> Result<Vec<FieldComparison>> {
    AccountField::ALL
        .iter()
        .map(|&field| {
            let va: Vec<f64> = a.iter().map(|s| s.field(field)).collect();
            let vb: Vec<f64> = b.iter().map(|s| s.field(field)).collect();
            Ok(FieldComparison {
                field,
                a: describe(&va)?,
                b: describe(&vb)?,
                ks: ks_test(&va, &vb)?,
            })
        })
        .collect()
}
