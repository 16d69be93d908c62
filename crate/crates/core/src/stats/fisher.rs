use super::{PValue, StatsError};

/// Relative slack when comparing table probabilities, absorbs rounding in
/// the log-gamma evaluation of exactly tied tables.
const TIE_SLACK: f64 = 1e-7;

fn ln_factorial(n: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `ln P(X = x)` for the top-left cell of a 2x2 table with row sums `r1`,
/// `r2` and first column sum `c1`.
pub fn ln_hypergeometric(x: u64, r1: u64, r2: u64, c1: u64) -> f64 {
    ln_choose(r1, x) + ln_choose(r2, c1 - x) - ln_choose(r1 + r2, c1)
}

/// Two-sided Fisher exact test for the table `[[a, b], [c, d]]`.
///
/// Sums the probabilities of every table with the observed margins whose
/// probability does not exceed the observed one (times `1 + 1e-7`).
pub fn fisher_exact_two_sided(a: u64, b: u64, c: u64, d: u64) -> Result<PValue, StatsError> {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    if n == 0 {
        return Err(StatsError::AllZeroTable);
    }
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    if lo == hi {
        return Ok(PValue::ONE);
    }
    let ln_obs = ln_hypergeometric(a, r1, r2, c1);
    let cutoff = ln_obs + libm::log1p(TIE_SLACK);

    let mut ln_max = f64::NEG_INFINITY;
    for x in lo..=hi {
        let lp = ln_hypergeometric(x, r1, r2, c1);
        if lp <= cutoff {
            ln_max = ln_max.max(lp);
        }
    }
    let mut sum = 0.0;
    for x in lo..=hi {
        let lp = ln_hypergeometric(x, r1, r2, c1);
        if lp <= cutoff {
            sum += libm::exp(lp - ln_max);
        }
    }
    Ok(PValue::from_ln(ln_max + libm::log(sum)))
}
