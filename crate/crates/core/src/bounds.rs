//! Overshoot moment bounds: evaluators, the empirical rate fit, Monte Carlo
//! verifiers and the two counterexamples to the strengthened bound.
//!
//! Notation: `A = E_θ[(X⁺)^{k+1}] / μ_θ` and `B = C·k·Γ(k)/r^k`, where
//! `(C, r)` are the constants of the exponential convergence rate of the
//! overshoot law. They are not known in closed form; here they come from
//! [`fit_rate`] or from configuration.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::expfam::{TiltedFamily, SQRT_3};
use crate::ladder::{overshoot_batch, SimBudget};
use crate::rng::StreamKey;
use crate::stationary::{limit_moment, LadderPopulation};
use crate::stats::{fit_line, Estimate, Verdict, CI_SIGMAS};

/// Γ(k) = (k − 1)! for integer k ≥ 1.
pub fn gamma_int(k: u32) -> f64 {
    assert!(k >= 1, "Gamma(k) needs k >= 1");
    (1..k).map(f64::from).product()
}

fn positive_drift(family: &TiltedFamily, theta: f64) -> Result<f64> {
    let mu = family.mean(theta)?;
    if !(theta > 0.0 || family.base().is_point_mass()) || !(mu > 0.0) {
        return Err(Error::invalid(format!(
            "bound needs positive drift, got theta = {theta}"
        )));
    }
    Ok(mu)
}

/// `A_{θ,k} = E_θ[(X⁺)^{k+1}] / μ_θ`, the right side of the `C_k = 1` bound.
pub fn ck1_bound(family: &TiltedFamily, theta: f64, k: u32) -> Result<f64> {
    let mu = positive_drift(family, theta)?;
    Ok(family.plus_moment(theta, k + 1)? / mu)
}

/// `((k+2)/(k+1))·E_θ[(X⁺)^{k+1}] / μ_θ`.
pub fn classical_bound(family: &TiltedFamily, theta: f64, k: u32) -> Result<f64> {
    let kf = f64::from(k);
    Ok((kf + 2.0) / (kf + 1.0) * ck1_bound(family, theta, k)?)
}

/// Lorden's mean bound `E_θ[(X⁺)²] / μ_θ`, without the 3/2 factor.
pub fn canonical_lorden_bound(family: &TiltedFamily, theta: f64) -> Result<f64> {
    ck1_bound(family, theta, 1)
}

/// `E_θ[(X⁺)^{k+1}] / (k μ_θ)`, the strengthened form that fails for k > 1.
pub fn strengthened_bound(family: &TiltedFamily, theta: f64, k: u32) -> Result<f64> {
    Ok(ck1_bound(family, theta, k)? / f64::from(k))
}

/// Classical bound applied to the ladder-height renewal process:
/// `((k+2)/(k+1))·E[H^{k+1}] / E[H]`, estimated from a population.
pub fn ladder_classical_bound(pop: &LadderPopulation, k: u32) -> Result<Estimate> {
    // equals (k + 2) times the limit-moment ratio
    let m = limit_moment(pop, k)?;
    let scale = f64::from(k + 2);
    Ok(Estimate {
        value: scale * m.value,
        se: scale * m.se,
    })
}

/// Upper bound on `E[R_∞^k]`: `A / (k + 1)`.
pub fn limit_moment_bound(family: &TiltedFamily, theta: f64, k: u32) -> Result<f64> {
    Ok(ck1_bound(family, theta, k)? / f64::from(k + 1))
}

/// Inputs of the exponentially corrected bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub a: f64,
    pub b_k: f64,
    pub c_const: f64,
    pub r: f64,
    pub k: u32,
    pub theta: f64,
}

impl BoundInputs {
    pub fn new(a: f64, c_const: f64, r: f64, k: u32, theta: f64) -> Result<Self> {
        if !(a > 0.0 && c_const > 0.0 && r > 0.0) || k == 0 {
            return Err(Error::invalid(format!(
                "bound inputs need A, C, r > 0 and k >= 1 (A={a}, C={c_const}, r={r}, k={k})"
            )));
        }
        let b_k = c_const * f64::from(k) * gamma_int(k) / r.powi(k as i32);
        Ok(BoundInputs {
            a,
            b_k,
            c_const,
            r,
            k,
            theta,
        })
    }

    pub fn from_family(
        family: &TiltedFamily,
        theta: f64,
        k: u32,
        constants: RateConstants,
    ) -> Result<Self> {
        BoundInputs::new(
            ck1_bound(family, theta, k)?,
            constants.c_const,
            constants.r,
            k,
            theta,
        )
    }
}

/// `A/(k+1) + B·e^{−rb}`.
pub fn corrected_bound(inputs: &BoundInputs, b: f64) -> f64 {
    inputs.a / f64::from(inputs.k + 1) + inputs.b_k * (-inputs.r * b).exp()
}

/// `b₀ = (1/r)·ln₊((k+1)B / (kA))`, the level from which the corrected bound
/// drops below `A`.
pub fn threshold_b0(inputs: &BoundInputs) -> f64 {
    let k = f64::from(inputs.k);
    let arg = (k + 1.0) * inputs.b_k / (k * inputs.a);
    if arg <= 1.0 {
        0.0
    } else {
        arg.ln() / inputs.r
    }
}

/// Rate constants `(C, r)` of the convergence `|F_b − F_∞| ≤ C e^{−r(b+y)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub c_const: f64,
    pub r: f64,
}

impl RateConstants {
    pub fn new(c_const: f64, r: f64) -> Result<Self> {
        if !(c_const > 0.0 && r > 0.0) {
            return Err(Error::invalid(format!(
                "rate constants must be positive, got C={c_const}, r={r}"
            )));
        }
        Ok(RateConstants { c_const, r })
    }
}

/// One point of a decay series `|E[R_b^k] − E[R_∞^k]|` with its noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub b: f64,
    pub diff: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// `e^{intercept}` of the log-linear fit.
    pub c_hat: f64,
    /// `−slope` of the log-linear fit.
    pub r_hat: f64,
    /// R² of the fit.
    pub fit_quality: f64,
    pub used: Vec<f64>,
    /// Levels dropped because the difference was within `3·se` of zero.
    pub excluded: Vec<f64>,
}

impl RateFit {
    /// Constants for a first-moment series: the moment prefactor is `C/r`,
    /// so `C = c_hat·r_hat`.
    pub fn constants_from_mean_series(&self) -> Result<RateConstants> {
        RateConstants::new(self.c_hat * self.r_hat, self.r_hat)
    }
}

/// Least-squares fit of `ln diff = ln C − r·b` over points above the noise
/// floor.
pub fn fit_rate(series: &[RatePoint]) -> Result<RateFit> {
    let (usable, noisy): (Vec<&RatePoint>, Vec<&RatePoint>) = series
        .iter()
        .partition(|p| p.diff > 0.0 && p.diff > CI_SIGMAS * p.se);
    if usable.len() < 4 {
        return Err(Error::InsufficientSignal {
            usable: usable.len(),
        });
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.b).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.diff.ln()).collect();
    let fit = fit_line(&xs, &ys).ok_or(Error::InsufficientSignal {
        usable: usable.len(),
    })?;
    Ok(RateFit {
        c_hat: fit.intercept.exp(),
        r_hat: -fit.slope,
        fit_quality: fit.r_squared,
        used: xs,
        excluded: noisy.iter().map(|p| p.b).collect(),
    })
}

/// `|mean R_b − κ|` over a level grid, with κ from the ladder population.
#[allow(clippy::too_many_arguments)]
pub fn mean_overshoot_series(
    family: &TiltedFamily,
    theta: f64,
    b_grid: &[f64],
    n: u64,
    pop: &LadderPopulation,
    key: &StreamKey,
    budget: &SimBudget,
    exec: Exec,
) -> Result<Vec<RatePoint>> {
    let kappa = limit_moment(pop, 1)?;
    b_grid
        .iter()
        .enumerate()
        .map(|(cell, &b)| {
            let batch = overshoot_batch(family, theta, b, n, &key.cell(cell as u64), budget, exec)?;
            let mc = Estimate::of_mean(&batch.overshoots());
            Ok(RatePoint {
                b,
                diff: (mc.value - kappa.value).abs(),
                se: mc.se.hypot(kappa.se),
            })
        })
        .collect()
}

/// Evaluated right-hand sides and verdicts at one `(θ, b, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub theta: f64,
    pub b: f64,
    pub k: u32,
    /// Monte Carlo estimate of `E_θ[R_b^k]`.
    pub mc: Estimate,
    pub n: u64,
    pub censored: u64,
    pub rhs_classical: f64,
    /// Classical bound with ladder-height moments in place of `X⁺` moments.
    pub rhs_classical_ladder: Estimate,
    pub rhs_corrected: Option<f64>,
    pub rhs_ck1: f64,
    pub rhs_strengthened: f64,
    pub b0: Option<f64>,
    pub verdict_classical: Verdict,
    pub verdict_classical_ladder: Verdict,
    pub verdict_corrected: Option<Verdict>,
    pub verdict_ck1: Verdict,
    pub verdict_strengthened: Verdict,
}

impl BoundRow {
    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.n.max(1) as f64
    }

    /// True when the `C_k = 1` bound is asserted at this level (b ≥ b₀).
    pub fn ck1_asserted(&self) -> bool {
        self.b0.is_some_and(|b0| self.b >= b0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<'a> {
    pub theta_grid: &'a [f64],
    pub b_grid: &'a [f64],
    pub k_list: &'a [u32],
    pub n: u64,
}

/// Monte Carlo moments against every bound over a `(θ, b, k)` grid. Each
/// `(θ, b)` cell runs one batch whose samples serve all `k`.
pub fn bound_grid(
    family: &TiltedFamily,
    spec: &GridSpec<'_>,
    constants: Option<RateConstants>,
    key: &StreamKey,
    budget: &SimBudget,
    exec: Exec,
) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for (ti, &theta) in spec.theta_grid.iter().enumerate() {
        let pop = LadderPopulation::simulate(
            family,
            theta,
            spec.n,
            &key.experiment(2).cell(ti as u64),
            budget,
            exec,
        )?;
        for (bi, &b) in spec.b_grid.iter().enumerate() {
            let cell = (ti * spec.b_grid.len() + bi) as u64;
            let batch =
                overshoot_batch(family, theta, b, spec.n, &key.experiment(1).cell(cell), budget, exec)?;
            let overshoots = batch.overshoots();
            for &k in spec.k_list {
                let mc = Estimate::of_moment(&overshoots, k);
                let rhs_ck1 = ck1_bound(family, theta, k)?;
                let rhs_classical = classical_bound(family, theta, k)?;
                let rhs_classical_ladder = ladder_classical_bound(&pop, k)?;
                let rhs_strengthened = rhs_ck1 / f64::from(k);
                let inputs = constants
                    .map(|c| BoundInputs::new(rhs_ck1, c.c_const, c.r, k, theta))
                    .transpose()?;
                let rhs_corrected = inputs.map(|i| corrected_bound(&i, b));
                rows.push(BoundRow {
                    theta,
                    b,
                    k,
                    mc,
                    n: batch.requested(),
                    censored: batch.censored,
                    rhs_classical,
                    rhs_classical_ladder,
                    rhs_corrected,
                    rhs_ck1,
                    rhs_strengthened,
                    b0: inputs.map(|i| threshold_b0(&i)),
                    verdict_classical: Verdict::upper_bound(&mc, rhs_classical),
                    verdict_classical_ladder: Verdict::upper_bound(
                        &mc,
                        rhs_classical_ladder.value,
                    ),
                    verdict_corrected: rhs_corrected.map(|rhs| Verdict::upper_bound(&mc, rhs)),
                    verdict_ck1: Verdict::upper_bound(&mc, rhs_ck1),
                    verdict_strengthened: Verdict::upper_bound(&mc, rhs_strengthened),
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallDriftReport {
    pub k: u32,
    pub rows: Vec<BoundRow>,
    /// Largest grid θ such that it and every smaller grid θ pass the
    /// `C_k = 1` bound at all levels.
    pub theta_k_proxy: Option<f64>,
}

fn check_theta_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("theta grid is empty"));
    }
    if grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "theta grid must be strictly positive and ascending",
        ));
    }
    Ok(())
}

/// Checks `E_θ[R_b^k] ≤ A_{θ,k}` over small drifts and all levels.
#[allow(clippy::too_many_arguments)]
pub fn verify_small_drift_uniformity(
    family: &TiltedFamily,
    k: u32,
    theta_grid: &[f64],
    b_grid: &[f64],
    n: u64,
    key: &StreamKey,
    budget: &SimBudget,
    exec: Exec,
) -> Result<SmallDriftReport> {
    if !family.base().is_standard() {
        return Err(Error::NonStandardFamily("small-drift verification"));
    }
    check_theta_grid(theta_grid)?;
    if b_grid.is_empty() {
        return Err(Error::invalid("b grid is empty"));
    }
    let spec = GridSpec {
        theta_grid,
        b_grid,
        k_list: &[k],
        n,
    };
    let rows = bound_grid(family, &spec, None, key, budget, exec)?;
    let mut theta_k_proxy = None;
    for &theta in theta_grid {
        let all_pass = rows
            .iter()
            .filter(|r| r.theta == theta)
            .all(|r| r.verdict_ck1 == Verdict::Pass);
        if !all_pass {
            break;
        }
        theta_k_proxy = Some(theta);
    }
    Ok(SmallDriftReport {
        k,
        rows,
        theta_k_proxy,
    })
}

/// Deterministic increments `X ≡ c`: the strengthened bound fails at b = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicCounterexample {
    pub c: f64,
    pub k: u32,
    /// `E[R_0^k] = c^k`.
    pub lhs: f64,
    /// `c^{k+1}/(k c) = c^k / k`.
    pub rhs: f64,
    /// Exact rational forms of both sides.
    pub lhs_exact: String,
    pub rhs_exact: String,
    /// Decided in exact rational arithmetic.
    pub fails: bool,
    /// Upper end of the level window `(0, c(1 − k^{−1/k}))` where `τ(b) = 1`
    /// and the bound still fails.
    pub window_upper: f64,
    pub midpoint: f64,
    /// `(c − b)^k` at the window midpoint.
    pub midpoint_lhs: f64,
    pub midpoint_fails: bool,
}

pub fn counterexample_deterministic(c: f64, k: u32) -> Result<DeterministicCounterexample> {
    if !(c > 0.0 && c.is_finite()) || k < 2 {
        return Err(Error::invalid("deterministic counterexample needs c > 0 and k >= 2"));
    }
    let c_exact = BigRational::from_float(c).expect("finite float");
    let mut lhs_exact = BigRational::one();
    for _ in 0..k {
        lhs_exact *= &c_exact;
    }
    // c^{k+1} / (k c)
    let rhs_exact = (&lhs_exact * &c_exact) / (BigRational::from_integer(BigInt::from(k)) * &c_exact);
    let fails = lhs_exact > rhs_exact;
    let kf = f64::from(k);
    let lhs = c.powi(k as i32);
    let rhs = lhs / kf;
    let window_upper = c * (1.0 - kf.powf(-1.0 / kf));
    let midpoint = 0.5 * window_upper;
    let midpoint_lhs = (c - midpoint).powi(k as i32);
    Ok(DeterministicCounterexample {
        c,
        k,
        lhs,
        rhs,
        lhs_exact: lhs_exact.to_string(),
        rhs_exact: rhs_exact.to_string(),
        fails,
        window_upper,
        midpoint,
        midpoint_lhs,
        midpoint_fails: midpoint_lhs > rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltRow {
    pub theta: f64,
    /// Monte Carlo `E_θ[R_b^k]`.
    pub mc: Estimate,
    pub n: u64,
    pub censored: u64,
    pub mu: f64,
    pub rhs_strengthened: f64,
    /// `Fail` means the strengthened bound is violated beyond noise.
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformTiltCounterexample {
    pub k: u32,
    pub a: f64,
    /// `b = a(1 − k^{−1/k})/2`.
    pub b: f64,
    /// `(a − b)^k`, the limit of `E_θ[R_b^k]` as θ → ∞.
    pub limit_lhs: f64,
    /// `a^k / k`, the limit of the strengthened right side.
    pub limit_rhs: f64,
    pub rows: Vec<TiltRow>,
    /// Smallest grid θ from which every larger grid θ also fails.
    pub theta0_proxy: Option<f64>,
}

impl UniformTiltCounterexample {
    pub fn limit_fails(&self) -> bool {
        self.limit_lhs > self.limit_rhs
    }
}

/// Level used by the uniform-tilt counterexample.
pub fn uniform_tilt_level(a: f64, k: u32) -> f64 {
    let kf = f64::from(k);
    a * (1.0 - kf.powf(-1.0 / kf)) / 2.0
}

pub fn counterexample_uniform_tilt(
    k: u32,
    theta_grid: &[f64],
    n: u64,
    key: &StreamKey,
    budget: &SimBudget,
    exec: Exec,
) -> Result<UniformTiltCounterexample> {
    if k < 2 {
        return Err(Error::invalid("uniform-tilt counterexample needs k >= 2"));
    }
    check_theta_grid(theta_grid)?;
    let family = TiltedFamily::uniform();
    let a = SQRT_3;
    let b = uniform_tilt_level(a, k);
    let rows = theta_grid
        .iter()
        .enumerate()
        .map(|(cell, &theta)| {
            let batch = overshoot_batch(&family, theta, b, n, &key.cell(cell as u64), budget, exec)?;
            let mc = Estimate::of_moment(&batch.overshoots(), k);
            let mu = family.mean(theta)?;
            let rhs = strengthened_bound(&family, theta, k)?;
            Ok(TiltRow {
                theta,
                mc,
                n: batch.requested(),
                censored: batch.censored,
                mu,
                rhs_strengthened: rhs,
                verdict: Verdict::upper_bound(&mc, rhs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut theta0_proxy = None;
    for row in rows.iter().rev() {
        if row.verdict != Verdict::Fail {
            break;
        }
        theta0_proxy = Some(row.theta);
    }
    Ok(UniformTiltCounterexample {
        k,
        a,
        b,
        limit_lhs: (a - b).powi(k as i32),
        limit_rhs: a.powi(k as i32) / f64::from(k),
        rows,
        theta0_proxy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_is_factorial() {
        assert_eq!(gamma_int(1), 1.0);
        assert_eq!(gamma_int(2), 1.0);
        assert_eq!(gamma_int(5), 24.0);
    }

    #[test]
    fn classical_bound_point_mass() {
        let fam = TiltedFamily::point_mass(1.0).unwrap();
        assert_eq!(classical_bound(&fam, 0.0, 1).unwrap(), 1.5);
        assert_eq!(canonical_lorden_bound(&fam, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn classical_bound_gaussian_factors() {
        let fam = TiltedFamily::gaussian();
        let pm = fam.plus_moment(0.5, 2).unwrap();
        let expected = 1.5 * pm / 0.5;
        assert!((classical_bound(&fam, 0.5, 1).unwrap() - expected).abs() < 1e-12);
        assert!((canonical_lorden_bound(&fam, 0.5).unwrap() - pm / 0.5).abs() < 1e-12);
        assert!(classical_bound(&fam, 0.0, 1).is_err());
    }

    #[test]
    fn corrected_bound_examples() {
        let i = BoundInputs {
            a: 1.0,
            b_k: 2.0,
            c_const: 2.0,
            r: 1.0,
            k: 1,
            theta: 0.5,
        };
        assert_eq!(corrected_bound(&i, 0.0), 2.5);
        assert!((corrected_bound(&i, 100.0) - 0.5).abs() < 1e-40);
        let i2 = BoundInputs::new(4.0, 1.0, 0.5, 2, 0.5).unwrap();
        assert_eq!(i2.b_k, 8.0);
        assert!((corrected_bound(&i2, 0.0) - (4.0 / 3.0 + 8.0)).abs() < 1e-14);
        assert!(BoundInputs::new(0.0, 1.0, 1.0, 1, 0.1).is_err());
    }

    #[test]
    fn threshold_examples() {
        // A=10, B=2, k=1, r=0.5: argument 4/10 < 1
        let i = BoundInputs::new(10.0, 1.0, 0.5, 1, 0.1).unwrap();
        assert_eq!(i.b_k, 2.0);
        assert_eq!(threshold_b0(&i), 0.0);
        let i = BoundInputs::new(1.0, 2.0, 1.0, 1, 0.1).unwrap();
        assert!((threshold_b0(&i) - 4.0f64.ln()).abs() < 1e-15);
        let i = BoundInputs::new(1.0, 1e-300, 1.0, 1, 0.1).unwrap();
        assert_eq!(threshold_b0(&i), 0.0);
    }

    #[test]
    fn fit_rate_exact_exponential() {
        let series: Vec<RatePoint> = (1..=6)
            .map(|b| RatePoint {
                b: b as f64,
                diff: 2.0 * (-0.7 * b as f64).exp(),
                se: 0.0,
            })
            .collect();
        let fit = fit_rate(&series).unwrap();
        assert!((fit.c_hat / 2.0 - 1.0).abs() < 1e-6);
        assert!((fit.r_hat / 0.7 - 1.0).abs() < 1e-6);
        assert!((fit.fit_quality - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_rate_noisy_exponential() {
        // 1% multiplicative noise, fixed pattern
        let noise = [0.01, -0.01, 0.005, -0.008, 0.01, -0.004];
        let series: Vec<RatePoint> = (1..=6)
            .map(|b| RatePoint {
                b: b as f64,
                diff: 2.0 * (-0.7 * b as f64).exp() * (1.0 + noise[b - 1]),
                se: 1e-6,
            })
            .collect();
        let fit = fit_rate(&series).unwrap();
        assert!((fit.r_hat / 0.7 - 1.0).abs() < 0.05);
    }

    #[test]
    fn fit_rate_flat_noise_rejected() {
        let series: Vec<RatePoint> = (1..=6)
            .map(|b| RatePoint {
                b: b as f64,
                diff: 0.001,
                se: 0.001,
            })
            .collect();
        assert!(matches!(
            fit_rate(&series),
            Err(Error::InsufficientSignal { usable: 0 })
        ));
    }

    #[test]
    fn deterministic_counterexample_values() {
        let r = counterexample_deterministic(1.0, 2).unwrap();
        assert_eq!((r.lhs, r.rhs), (1.0, 0.5));
        assert_eq!((r.lhs_exact.as_str(), r.rhs_exact.as_str()), ("1", "1/2"));
        assert!(r.fails);
        assert!((r.window_upper - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        assert!((r.midpoint - 0.1464466).abs() < 1e-6);
        assert!((r.midpoint_lhs - 0.7285534).abs() < 1e-6);
        assert!(r.midpoint_fails);

        let r = counterexample_deterministic(2.0, 3).unwrap();
        assert_eq!(r.lhs_exact, "8");
        assert_eq!(r.rhs_exact, "8/3");
        assert!(r.fails);
        assert!(counterexample_deterministic(1.0, 1).is_err());
        assert!(counterexample_deterministic(-1.0, 2).is_err());
    }

    #[test]
    fn uniform_tilt_level_and_limit() {
        let b = uniform_tilt_level(SQRT_3, 2);
        assert!((b - 0.25365).abs() < 1e-5);
        let lhs = (SQRT_3 - b).powi(2);
        assert!((lhs - 2.18567).abs() < 1e-5);
        assert!(lhs > 1.5);
    }

    #[test]
    fn uniform_tilt_fails_at_large_theta() {
        let r = counterexample_uniform_tilt(
            2,
            &[25.0],
            100_000,
            &StreamKey::new(5),
            &SimBudget::default(),
            Exec::Parallel,
        )
        .unwrap();
        assert!(r.limit_fails());
        assert_eq!(r.rows[0].verdict, Verdict::Fail, "{:?}", r.rows[0]);
        assert_eq!(r.theta0_proxy, Some(25.0));
    }

    #[test]
    fn small_drift_rejects_point_mass() {
        let fam = TiltedFamily::point_mass(1.0).unwrap();
        let r = verify_small_drift_uniformity(
            &fam,
            1,
            &[0.1],
            &[0.1],
            1000,
            &StreamKey::new(1),
            &SimBudget::default(),
            Exec::Sequential,
        );
        assert!(matches!(r, Err(Error::NonStandardFamily(_))));
    }

    #[test]
    fn small_drift_single_cell_passes() {
        let r = verify_small_drift_uniformity(
            &TiltedFamily::gaussian(),
            1,
            &[0.05],
            &[0.1],
            100_000,
            &StreamKey::new(6),
            &SimBudget::default(),
            Exec::Parallel,
        )
        .unwrap();
        assert_eq!(r.rows[0].verdict_ck1, Verdict::Pass);
        assert_eq!(r.theta_k_proxy, Some(0.05));
    }

    #[test]
    fn small_drift_proxy_is_largest_all_pass_theta() {
        let grid = [0.05, 0.1, 0.2, 0.4];
        let r = verify_small_drift_uniformity(
            &TiltedFamily::gaussian(),
            2,
            &grid,
            &[0.1, 1.0, 5.0],
            20_000,
            &StreamKey::new(7),
            &SimBudget::default(),
            Exec::Parallel,
        )
        .unwrap();
        let expected = grid
            .iter()
            .take_while(|&&t| {
                r.rows
                    .iter()
                    .filter(|row| row.theta == t)
                    .all(|row| row.verdict_ck1 == Verdict::Pass)
            })
            .last()
            .copied();
        assert_eq!(r.theta_k_proxy, expected);
        assert!(expected.is_some());
        assert!(verify_small_drift_uniformity(
            &TiltedFamily::gaussian(),
            2,
            &[0.2, 0.1],
            &[1.0],
            1000,
            &StreamKey::new(7),
            &SimBudget::default(),
            Exec::Sequential
        )
        .is_err());
    }

    #[test]
    fn limit_moment_below_lemma_bound() {
        for fam in [TiltedFamily::gaussian(), TiltedFamily::uniform()] {
            let pop = LadderPopulation::simulate(
                &fam,
                0.5,
                50_000,
                &StreamKey::new(8),
                &SimBudget::default(),
                Exec::Parallel,
            )
            .unwrap();
            for k in 1..=3 {
                let m = limit_moment(&pop, k).unwrap();
                let bound = limit_moment_bound(&fam, 0.5, k).unwrap();
                assert!(m.value <= bound + CI_SIGMAS * m.se, "k={k}: {m:?} vs {bound}");
            }
        }
    }

    proptest! {
        #[test]
        fn corrected_bound_monotone_and_below_a_past_b0(
            a in 0.01f64..50.0,
            c in 0.01f64..10.0,
            r in 0.05f64..5.0,
            k in 1u32..5,
            db in 0.0f64..20.0,
        ) {
            let i = BoundInputs::new(a, c, r, k, 0.1).unwrap();
            let b0 = threshold_b0(&i);
            let b = b0 + db;
            // tolerance for the rounding in exp/ln at b = b0
            prop_assert!(corrected_bound(&i, b) <= a * (1.0 + 1e-12));
            prop_assert!(corrected_bound(&i, b + 0.5) <= corrected_bound(&i, b));
            prop_assert!(corrected_bound(&i, b) >= a / f64::from(k + 1));
        }

        #[test]
        fn deterministic_counterexample_always_fails(c in 1e-3f64..1e3, k in 2u32..8) {
            let r = counterexample_deterministic(c, k).unwrap();
            prop_assert!(r.fails);
            prop_assert!(r.midpoint_fails);
        }
    }
}
