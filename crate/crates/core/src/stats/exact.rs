//! Exact binomial procedures: Clopper-Pearson intervals and McNemar's test.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use super::StatsError;

/// Closed interval `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn new(low: f64, high: f64) -> Self {
        Interval { low, high }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// Inverse of the regularized incomplete beta function in `x`, by bisection.
///
/// `I_x(a, b)` is strictly increasing on `[0, 1]`, so bisection converges to
/// the last representable bracket.
pub fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta parameters must be positive");
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact (Clopper-Pearson) interval for `successes` out of `trials`.
pub fn clopper_pearson(successes: u64, trials: u64, alpha: f64) -> Result<Interval, StatsError> {
    if trials == 0 {
        return Err(StatsError::Empty);
    }
    if successes > trials {
        return Err(StatsError::Invalid(format!("{successes} successes out of {trials} trials")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    let (k, n) = (successes as f64, trials as f64);
    let low = if successes == 0 { 0.0 } else { beta_quantile(alpha / 2.0, k, n - k + 1.0) };
    let high = if successes == trials { 1.0 } else { beta_quantile(1.0 - alpha / 2.0, k + 1.0, n - k) };
    Ok(Interval { low, high })
}

/// `P(X <= m)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_half_cdf(m: u64, n: u64) -> f64 {
    if m >= n {
        return 1.0;
    }
    if n <= 1000 {
        // Coefficients stay exact up to 2^53 and finite up to n = 1000.
        let mut coef = 1.0f64;
        let mut sum = 1.0f64;
        for i in 0..m {
            coef = coef * (n - i) as f64 / (i + 1) as f64;
            sum += coef;
        }
        return (sum * 0.5f64.powi(n as i32)).min(1.0);
    }
    // Large n: sum the terms relative to the largest one (i = m when m < n/2).
    let nf = n as f64;
    let ln_top = ln_gamma(nf + 1.0) - ln_gamma(m as f64 + 1.0) - ln_gamma((n - m) as f64 + 1.0)
        - nf * std::f64::consts::LN_2;
    let mut ratio = 1.0f64;
    let mut rel = 1.0f64;
    for i in (1..=m).rev() {
        // t_{i-1} / t_i = i / (n - i + 1)
        ratio *= i as f64 / (n - i + 1) as f64;
        rel += ratio;
        if ratio < 1e-18 * rel {
            break;
        }
    }
    (ln_top.exp() * rel).min(1.0)
}

/// Discordant counts of two paired classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discordant {
    /// Cases model A got right and model B got wrong.
    pub b: u64,
    /// Cases model A got wrong and model B got right.
    pub c: u64,
}

impl Discordant {
    pub fn from_correctness(a: &[bool], b: &[bool]) -> Result<Self, StatsError> {
        if a.len() != b.len() {
            return Err(StatsError::Misaligned(format!("{} vs {} outcomes", a.len(), b.len())));
        }
        let mut d = Discordant { b: 0, c: 0 };
        for (&x, &y) in a.iter().zip(b) {
            match (x, y) {
                (true, false) => d.b += 1,
                (false, true) => d.c += 1,
                _ => {}
            }
        }
        Ok(d)
    }
}

/// Two-sided exact McNemar p-value: `min(1, 2 P(X <= min(b, c)))`, X ~ Bin(b + c, 1/2).
pub fn mcnemar_exact_p(d: Discordant) -> f64 {
    let n = d.b + d.c;
    if n == 0 {
        return 1.0;
    }
    (2.0 * binomial_half_cdf(d.b.min(d.c), n)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_successes_closed_form() {
        let ci = clopper_pearson(0, 10, 0.05).unwrap();
        assert_eq!(ci.low, 0.0);
        let expected = 1.0 - 0.025f64.powf(1.0 / 10.0);
        assert!((ci.high - expected).abs() < 1e-12, "{} vs {expected}", ci.high);
        assert!((ci.high - 0.3085).abs() < 5e-5);
    }

    #[test]
    fn all_successes_closed_form() {
        let ci = clopper_pearson(10, 10, 0.05).unwrap();
        assert_eq!(ci.high, 1.0);
        assert!((ci.low - 0.025f64.powf(0.1)).abs() < 1e-12);
        assert!((ci.low - 0.6915).abs() < 5e-5);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(clopper_pearson(0, 0, 0.05).is_err());
        assert!(clopper_pearson(3, 2, 0.05).is_err());
        assert!(clopper_pearson(1, 2, 1.5).is_err());
    }

    #[test]
    fn mcnemar_worked_examples() {
        assert_eq!(mcnemar_exact_p(Discordant { b: 2, c: 2 }), 1.0);
        assert_eq!(mcnemar_exact_p(Discordant { b: 5, c: 0 }), 0.0625);
        assert!((mcnemar_exact_p(Discordant { b: 3, c: 1 }) - 0.625).abs() < 1e-15);
        assert_eq!(mcnemar_exact_p(Discordant { b: 0, c: 0 }), 1.0);
    }

    #[test]
    fn large_n_branch_agrees_with_small_n_branch() {
        // Continuity across the n = 1000 switch.
        let small = binomial_half_cdf(480, 1000);
        let n = 1001u64;
        let big = binomial_half_cdf(480, n);
        assert!(small > big && big > 0.0);
        // Symmetric median mass: P(X <= 500 | n = 1001) = 1/2.
        assert!((binomial_half_cdf(500, 1001) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn discordant_counts() {
        let d = Discordant::from_correctness(&[true, true, false, false], &[false, true, true, false]).unwrap();
        assert_eq!(d, Discordant { b: 1, c: 1 });
        assert!(Discordant::from_correctness(&[true], &[]).is_err());
    }
}
