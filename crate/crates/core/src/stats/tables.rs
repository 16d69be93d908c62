use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{bh_adjust_log10, fisher_exact_two_sided, proportion_test, PValue, RatioUndefined, StatsError};
use crate::cohort::SymptomPresenceTable;
use crate::text::{DayRange, PcrResult};

/// Settings shared by the table builders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatConfig {
    /// Total hypothesis count for BH; `None` means the number of pairs tested.
    pub m_tests: Option<usize>,
    pub window: DayRange,
    pub ratio_undefined: RatioUndefined,
}

impl Default for StatConfig {
    fn default() -> Self {
        Self { m_tests: None, window: DayRange { from: -7, to: -1 }, ratio_undefined: RatioUndefined::Dash }
    }
}

/// Window-level counts for one phenotype.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub group_id: String,
    pub k_pos: u64,
    pub k_neg: u64,
    pub n_pos: u64,
    pub n_neg: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentRow {
    pub group_id: String,
    pub k_pos: u64,
    pub k_neg: u64,
    pub n_pos: u64,
    pub n_neg: u64,
    pub p_pos: f64,
    pub p_neg: f64,
    pub ratio: Option<f64>,
    pub z: f64,
    pub p_value: PValue,
}

/// Counts for one phenotype on one relative day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyCounts {
    pub group_id: String,
    pub day: i64,
    pub k_pos: u64,
    pub k_neg: u64,
    pub n_pos: u64,
    pub n_neg: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyRow {
    pub group_id: String,
    pub day: i64,
    pub k_pos: u64,
    pub k_neg: u64,
    pub n_pos: u64,
    pub n_neg: u64,
    pub pct_pos: f64,
    pub pct_neg: f64,
    pub ratio: Option<f64>,
    pub z: f64,
    pub p_value: PValue,
}

/// Patients exhibiting both phenotypes of a pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub group_a: String,
    pub group_b: String,
    pub k_pos: u64,
    pub k_neg: u64,
    pub n_pos: u64,
    pub n_neg: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub group_a: String,
    pub group_b: String,
    pub k_pos: u64,
    pub k_neg: u64,
    pub n_pos: u64,
    pub n_neg: u64,
    pub pct_pos: f64,
    pub pct_neg: f64,
    pub ratio: Option<f64>,
    pub p_raw: PValue,
    pub p_adjusted: PValue,
}

fn sort_key(ratio: Option<f64>, k_pos: u64) -> f64 {
    match ratio {
        Some(r) => r,
        None if k_pos > 0 => f64::INFINITY,
        None => f64::NEG_INFINITY,
    }
}

/// One row per phenotype, sorted by descending ratio. An undefined ratio
/// with positive cases sorts first, `0/0` sorts last; ties keep input order.
pub fn enrichment_rows(counts: &[GroupCounts]) -> Result<Vec<EnrichmentRow>, StatsError> {
    let mut rows = counts
        .iter()
        .map(|c| {
            let t = proportion_test(c.k_pos, c.n_pos, c.k_neg, c.n_neg)?;
            Ok(EnrichmentRow {
                group_id: c.group_id.clone(),
                k_pos: c.k_pos,
                k_neg: c.k_neg,
                n_pos: c.n_pos,
                n_neg: c.n_neg,
                p_pos: t.p1,
                p_neg: t.p2,
                ratio: t.ratio,
                z: t.z,
                p_value: t.p_value,
            })
        })
        .collect::<Result<Vec<_>, StatsError>>()?;
    rows.sort_by(|a, b| {
        sort_key(b.ratio, b.k_pos).partial_cmp(&sort_key(a.ratio, a.k_pos)).unwrap_or(Ordering::Equal)
    });
    Ok(rows)
}

fn cohort_sizes(table: &SymptomPresenceTable) -> (u64, u64) {
    (table.cohort_size(PcrResult::Positive) as u64, table.cohort_size(PcrResult::Negative) as u64)
}

/// Window-level counts per group, in the table's group order.
pub fn window_counts(table: &SymptomPresenceTable, window: DayRange) -> Result<Vec<GroupCounts>, StatsError> {
    let (n_pos, n_neg) = cohort_sizes(table);
    let sets = table.window_presence(window)?;
    Ok(table
        .groups()
        .iter()
        .map(|g| {
            let s = &sets[g.as_str()];
            GroupCounts {
                group_id: g.clone(),
                k_pos: s.positive.len() as u64,
                k_neg: s.negative.len() as u64,
                n_pos,
                n_neg,
            }
        })
        .collect())
}

pub fn enrichment_table(table: &SymptomPresenceTable, window: DayRange) -> Result<Vec<EnrichmentRow>, StatsError> {
    enrichment_rows(&window_counts(table, window)?)
}

/// Per-cell proportion tests, in input order.
pub fn daily_rows(counts: &[DailyCounts]) -> Result<Vec<DailyRow>, StatsError> {
    counts
        .iter()
        .map(|c| {
            let t = proportion_test(c.k_pos, c.n_pos, c.k_neg, c.n_neg)?;
            Ok(DailyRow {
                group_id: c.group_id.clone(),
                day: c.day,
                k_pos: c.k_pos,
                k_neg: c.k_neg,
                n_pos: c.n_pos,
                n_neg: c.n_neg,
                pct_pos: 100.0 * t.p1,
                pct_neg: 100.0 * t.p2,
                ratio: t.ratio,
                z: t.z,
                p_value: t.p_value,
            })
        })
        .collect()
}

/// Rows ordered by group (table order) then day.
pub fn daily_table(table: &SymptomPresenceTable, window: DayRange) -> Result<Vec<DailyRow>, StatsError> {
    if !table.day_range().contains_range(&window) {
        return Err(crate::cohort::CohortError::Window { window, range: table.day_range() }.into());
    }
    let (n_pos, n_neg) = cohort_sizes(table);
    let mut counts = Vec::with_capacity(table.groups().len() * window.len());
    for g in table.groups() {
        for day in window.days() {
            counts.push(DailyCounts {
                group_id: g.clone(),
                day,
                k_pos: table.count(g, day, PcrResult::Positive) as u64,
                k_neg: table.count(g, day, PcrResult::Negative) as u64,
                n_pos,
                n_neg,
            });
        }
    }
    daily_rows(&counts)
}

/// Fisher test per pair, BH across all of them with `m_tests` (default: the
/// number of pairs), sorted by ascending raw p with input order on ties.
pub fn pair_rows(counts: &[PairCounts], m_tests: Option<usize>) -> Result<Vec<PairRow>, StatsError> {
    let m = m_tests.unwrap_or(counts.len());
    let mut rows = Vec::with_capacity(counts.len());
    for c in counts {
        for (k, n) in [(c.k_pos, c.n_pos), (c.k_neg, c.n_neg)] {
            if n == 0 {
                return Err(StatsError::ZeroDenominator);
            }
            if k > n {
                return Err(StatsError::CountExceedsTotal { k, n });
            }
        }
        let p_raw = fisher_exact_two_sided(c.k_pos, c.n_pos - c.k_pos, c.k_neg, c.n_neg - c.k_neg)?;
        let pct_pos = 100.0 * c.k_pos as f64 / c.n_pos as f64;
        let pct_neg = 100.0 * c.k_neg as f64 / c.n_neg as f64;
        rows.push(PairRow {
            group_a: c.group_a.clone(),
            group_b: c.group_b.clone(),
            k_pos: c.k_pos,
            k_neg: c.k_neg,
            n_pos: c.n_pos,
            n_neg: c.n_neg,
            pct_pos,
            pct_neg,
            ratio: (pct_neg > 0.0).then(|| pct_pos / pct_neg),
            p_raw,
            p_adjusted: p_raw,
        });
    }
    let logs: Vec<f64> = rows.iter().map(|r| r.p_raw.log10()).collect();
    let adjusted = bh_adjust_log10(&logs, m)?;
    for (r, a) in rows.iter_mut().zip(adjusted) {
        r.p_adjusted = PValue::from_log10(a);
    }
    rows.sort_by(|a, b| a.p_raw.log10().total_cmp(&b.p_raw.log10()));
    Ok(rows)
}

/// Co-occurrence counts for every unordered pair of groups, `a` before `b`
/// in table order.
pub fn pair_counts(table: &SymptomPresenceTable, window: DayRange) -> Result<Vec<PairCounts>, StatsError> {
    let groups = table.groups();
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups);
    }
    let (n_pos, n_neg) = cohort_sizes(table);
    let sets = table.window_presence(window)?;
    let mut out = Vec::with_capacity(groups.len() * (groups.len() - 1) / 2);
    for (i, a) in groups.iter().enumerate() {
        for b in &groups[i + 1..] {
            let (sa, sb) = (&sets[a.as_str()], &sets[b.as_str()]);
            out.push(PairCounts {
                group_a: a.clone(),
                group_b: b.clone(),
                k_pos: sa.positive.intersection(&sb.positive).count() as u64,
                k_neg: sa.negative.intersection(&sb.negative).count() as u64,
                n_pos,
                n_neg,
            });
        }
    }
    Ok(out)
}

pub fn pairwise_table(table: &SymptomPresenceTable, config: &StatConfig) -> Result<Vec<PairRow>, StatsError> {
    pair_rows(&pair_counts(table, config.window)?, config.m_tests)
}
