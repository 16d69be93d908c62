//! Hypothesis tests and the enrichment, timeline and pairwise tables.
//!
//! p-values are carried as `log10(p)` in [`PValue`] so that tails far below
//! the smallest normal `f64` (1e-308) remain representable.

use alloc::format;
use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;

mod bh;
mod fisher;
mod normal;
mod tables;

pub use bh::{bh_adjust, bh_adjust_log10};
pub use fisher::{fisher_exact_two_sided, ln_hypergeometric};
pub use normal::{log10_normal_two_tailed, proportion_test, ProportionTest};
pub use tables::{
    daily_rows, daily_table, enrichment_rows, enrichment_table, pair_counts, pair_rows, pairwise_table, window_counts, DailyCounts, DailyRow,
    EnrichmentRow, GroupCounts, PairCounts, PairRow, StatConfig,
};

use crate::cohort::CohortError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("cohort size must be positive")]
    ZeroDenominator,
    #[error("count {k} exceeds cohort size {n}")]
    CountExceedsTotal { k: u64, n: u64 },
    #[error("contingency table is all zeros")]
    AllZeroTable,
    #[error("p-value {0} is outside (0, 1]")]
    PValueOutOfRange(f64),
    #[error("m = {m} is smaller than the number of p-values ({n})")]
    TooFewTests { m: usize, n: usize },
    #[error("pairwise analysis needs at least two phenotype groups")]
    TooFewGroups,
    #[error(transparent)]
    Cohort(#[from] CohortError),
}

const LN_10: f64 = core::f64::consts::LN_10;

/// A probability stored as its base-10 logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValue {
    log10: f64,
}

impl PValue {
    pub const ONE: PValue = PValue { log10: 0.0 };

    /// Values above zero are clamped to 1.
    pub fn from_log10(log10: f64) -> Self {
        Self { log10: log10.min(0.0) }
    }

    pub fn from_ln(ln: f64) -> Self {
        Self::from_log10(ln / LN_10)
    }

    pub fn from_value(p: f64) -> Self {
        Self::from_log10(libm::log10(p))
    }

    pub fn log10(self) -> f64 {
        self.log10
    }

    /// May underflow to 0 for p below ~1e-308; use [`PValue::log10`] there.
    pub fn value(self) -> f64 {
        libm::pow(10.0, self.log10)
    }

    /// Scientific notation with two mantissa decimals, e.g. `2.95E-187`.
    pub fn to_sci(self) -> String {
        format_sci_log10(self.log10)
    }
}

impl PartialOrd for PValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.log10.partial_cmp(&other.log10)
    }
}

impl fmt::Display for PValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sci())
    }
}

fn format_sci_log10(log10: f64) -> String {
    if log10 == f64::NEG_INFINITY {
        return "0.00E+00".into();
    }
    let mut exp = libm::floor(log10);
    let mut mant = libm::round(libm::pow(10.0, log10 - exp) * 100.0) / 100.0;
    if mant >= 10.0 {
        mant /= 10.0;
        exp += 1.0;
    }
    let exp = exp as i64;
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant:.2}E{sign}{:02}", exp.abs())
}

/// How a fold change with a zero denominator is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RatioUndefined {
    #[default]
    Dash,
    Infinity,
    Empty,
}

pub fn format_ratio(ratio: Option<f64>, policy: RatioUndefined) -> String {
    match (ratio, policy) {
        (Some(r), _) => format!("{r:.2}"),
        (None, RatioUndefined::Dash) => "-".into(),
        (None, RatioUndefined::Infinity) => "inf".into(),
        (None, RatioUndefined::Empty) => String::new(),
    }
}
