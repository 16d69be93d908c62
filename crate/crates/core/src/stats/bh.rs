use alloc::vec;
use alloc::vec::Vec;

use super::StatsError;

fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    order
}

/// Benjamini-Hochberg step-up adjustment over `m` total tests. Output is in
/// input order; `m` may exceed the number of p-values supplied.
pub fn bh_adjust(p_values: &[f64], m: usize) -> Result<Vec<f64>, StatsError> {
    if let Some(&bad) = p_values.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(StatsError::PValueOutOfRange(bad));
    }
    if m < p_values.len() {
        return Err(StatsError::TooFewTests { m, n: p_values.len() });
    }
    let order = ascending_order(p_values);
    let mut adjusted = vec![0.0; p_values.len()];
    let mut running = 1.0f64;
    for (rank0, &i) in order.iter().enumerate().rev() {
        let scaled = m as f64 * p_values[i] / (rank0 + 1) as f64;
        running = running.min(scaled);
        adjusted[i] = running;
    }
    Ok(adjusted)
}

/// [`bh_adjust`] on `log10(p)` values, for p-values that underflow `f64`.
pub fn bh_adjust_log10(log10_p: &[f64], m: usize) -> Result<Vec<f64>, StatsError> {
    if let Some(&bad) = log10_p.iter().find(|l| l.is_nan() || **l > 0.0) {
        return Err(StatsError::PValueOutOfRange(libm::pow(10.0, bad)));
    }
    if m < log10_p.len() {
        return Err(StatsError::TooFewTests { m, n: log10_p.len() });
    }
    let order = ascending_order(log10_p);
    let log_m = libm::log10(m as f64);
    let mut adjusted = vec![0.0; log10_p.len()];
    let mut running = 0.0f64;
    for (rank0, &i) in order.iter().enumerate().rev() {
        let scaled = log_m + log10_p[i] - libm::log10((rank0 + 1) as f64);
        running = running.min(scaled);
        adjusted[i] = running;
    }
    Ok(adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_test_unchanged() {
        assert_eq!(bh_adjust(&[0.04], 1).unwrap(), vec![0.04]);
    }

    #[test]
    fn step_up_with_monotonicity() {
        let adj = bh_adjust(&[0.01, 0.02, 0.04], 3).unwrap();
        let want = [0.03, 0.03, 0.04];
        for (a, w) in adj.iter().zip(want) {
            assert!((a - w).abs() < 1e-15, "{adj:?}");
        }
        // order preserved
        let adj = bh_adjust(&[0.04, 0.01, 0.02], 3).unwrap();
        assert!((adj[0] - 0.04).abs() < 1e-15 && (adj[1] - 0.03).abs() < 1e-15);
    }

    #[test]
    fn larger_m_scales_top_rank() {
        let adj = bh_adjust(&[9.22e-46], 277).unwrap();
        assert!((adj[0] / 2.55e-43 - 1.0).abs() < 0.002);
    }

    #[test]
    fn capped_at_one() {
        assert_eq!(bh_adjust(&[0.5, 0.9], 10).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn errors() {
        assert_eq!(bh_adjust(&[0.0], 1), Err(StatsError::PValueOutOfRange(0.0)));
        assert_eq!(bh_adjust(&[1.5], 1), Err(StatsError::PValueOutOfRange(1.5)));
        assert_eq!(bh_adjust(&[0.1, 0.2], 1), Err(StatsError::TooFewTests { m: 1, n: 2 }));
    }

    #[test]
    fn log_space_agrees() {
        let p = [0.01, 0.2, 3e-5, 0.04, 0.04, 1.0];
        let logs: Vec<f64> = p.iter().map(|x| libm::log10(*x)).collect();
        let a = bh_adjust(&p, 9).unwrap();
        let b = bh_adjust_log10(&logs, 9).unwrap();
        for (x, y) in a.iter().zip(b) {
            assert!((libm::log10(*x) - y).abs() < 1e-12);
        }
    }
}
