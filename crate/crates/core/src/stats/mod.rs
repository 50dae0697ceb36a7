//! Descriptive statistics, two-sample KS testing, histograms and kernel
//! density estimates, emitted as data for external plotting.

pub mod accounts;
pub mod describe;
pub mod histogram;
pub mod kde;
pub mod ks;

pub use accounts::{compare_groups, load_account_csv, AccountField, AccountStats};
pub use describe::{describe, Description};
pub use histogram::{histogram, uniform_edges, Histogram};
pub use kde::{kde_1d, kde_2d, linspace, scott_bandwidths, silverman_bandwidth, Density1d, Density2d};
pub use ks::{ks_pvalue, ks_test, ks_two_sample, KsTest};
