use super::{PValue, StatsError, LN_10};

const SQRT_2: f64 = core::f64::consts::SQRT_2;
const LN_SQRT_PI: f64 = 0.572_364_942_924_700_1;

/// Beyond this |z| the tail is evaluated with the asymptotic series.
const ASYMPTOTIC_Z: f64 = 8.0;

/// `ln erfc(x)` for large positive `x` from the asymptotic expansion
/// `erfc(x) ~ exp(-x^2) / (x sqrt(pi)) * sum_n (-1)^n (2n-1)!! / (2x^2)^n`,
/// truncated at the smallest term.
fn ln_erfc_asymptotic(x: f64) -> f64 {
    let two_x2 = 2.0 * x * x;
    let mut sum = 1.0;
    let mut term = 1.0f64;
    let mut n = 1.0;
    loop {
        let next = -term * (2.0 * n - 1.0) / two_x2;
        if next.abs() >= term.abs() || next.abs() < 1e-18 {
            break;
        }
        sum += next;
        term = next;
        n += 1.0;
    }
    -x * x - libm::log(x) - LN_SQRT_PI + libm::log(sum)
}

/// `log10` of the two-tailed standard normal tail probability, `erfc(|z|/sqrt 2)`.
pub fn log10_normal_two_tailed(z: f64) -> f64 {
    let z = z.abs();
    let x = z / SQRT_2;
    if z > ASYMPTOTIC_Z {
        ln_erfc_asymptotic(x) / LN_10
    } else {
        libm::log10(libm::erfc(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionTest {
    pub p1: f64,
    pub p2: f64,
    /// `p1 / p2`; `None` when `p2` is zero.
    pub ratio: Option<f64>,
    pub z: f64,
    pub p_value: PValue,
}

/// Pooled two-proportion z-test, two-tailed, no continuity correction.
pub fn proportion_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ProportionTest, StatsError> {
    if n1 == 0 || n2 == 0 {
        return Err(StatsError::ZeroDenominator);
    }
    for (k, n) in [(k1, n1), (k2, n2)] {
        if k > n {
            return Err(StatsError::CountExceedsTotal { k, n });
        }
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let p1 = k1 as f64 / n1f;
    let p2 = k2 as f64 / n2f;
    let ratio = (p2 > 0.0).then(|| p1 / p2);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    let var = pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f);
    if var <= 0.0 {
        return Ok(ProportionTest { p1, p2, ratio, z: 0.0, p_value: PValue::ONE });
    }
    let z = (p1 - p2) / libm::sqrt(var);
    Ok(ProportionTest { p1, p2, ratio, z, p_value: PValue::from_log10(log10_normal_two_tailed(z)) })
}
