//! Small statistics toolbox shared by the estimators.

use std::fmt;

/// Confidence multiplier used for every pass/fail decision.
pub const CI_SIGMAS: f64 = 3.0;

/// Sum in fixed pairwise order. Bit-stable for a given input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().fold(0.0, |acc, &x| acc + x)
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// A point estimate together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }

    /// Sample mean with the usual `s / sqrt(n)` standard error.
    pub fn of_mean(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n > 0, "mean of empty sample");
        let m = mean(xs);
        if n == 1 {
            return Estimate { value: m, se: 0.0 };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Estimate {
            value: m,
            se: (var / n as f64).sqrt(),
        }
    }

    /// Mean of `x^k`.
    pub fn of_moment(xs: &[f64], k: u32) -> Self {
        let powered: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
        Estimate::of_mean(&powered)
    }

    pub fn lower(&self) -> f64 {
        self.value - CI_SIGMAS * self.se
    }

    pub fn upper(&self) -> f64 {
        self.value + CI_SIGMAS * self.se
    }
}

/// Standard error of the difference of two independent estimates.
pub fn combined_se(a: &Estimate, b: &Estimate) -> f64 {
    a.se.hypot(b.se)
}

/// `|a - b| <= 3 * combined SE`.
pub fn agree(a: &Estimate, b: &Estimate) -> bool {
    (a.value - b.value).abs() <= CI_SIGMAS * combined_se(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Verdict for the claim `E <= rhs`, given a noisy estimate of `E`.
    pub fn upper_bound(estimate: &Estimate, rhs: f64) -> Self {
        if estimate.upper() <= rhs {
            Verdict::Pass
        } else if estimate.lower() > rhs {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx = pairwise_sum(&xs.iter().map(|x| (x - mx) * (x - mx)).collect::<Vec<_>>());
    if sxx == 0.0 {
        return None;
    }
    let sxy = pairwise_sum(
        &xs.iter()
            .zip(ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .collect::<Vec<_>>(),
    );
    let syy = pairwise_sum(&ys.iter().map(|y| (y - my) * (y - my)).collect::<Vec<_>>());
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Some(LineFit {
        intercept,
        slope,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn mean_estimate_of_constant_has_zero_se() {
        let e = Estimate::of_mean(&[2.0; 50]);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn mean_estimate_se() {
        // values 0,1 alternating: sample var = n/(4(n-1))
        let xs: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let e = Estimate::of_mean(&xs);
        assert_eq!(e.value, 0.5);
        let expected = (100.0 / (4.0 * 99.0) / 100.0f64).sqrt();
        assert!((e.se - expected).abs() < 1e-15);
    }

    #[test]
    fn verdict_zones() {
        let e = Estimate { value: 1.0, se: 0.1 };
        assert_eq!(Verdict::upper_bound(&e, 1.3), Verdict::Pass);
        assert_eq!(Verdict::upper_bound(&e, 1.2), Verdict::Inconclusive);
        assert_eq!(Verdict::upper_bound(&e, 0.69), Verdict::Fail);
        assert_eq!(Verdict::upper_bound(&e, 0.7), Verdict::Inconclusive);
    }

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 - 0.25 * x).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope + 0.25).abs() < 1e-15);
        assert!((fit.intercept - 1.5).abs() < 1e-15);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }
}
