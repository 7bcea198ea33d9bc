//! One-dimensional transport diagnostics between empirical laws, and the
//! Wald-identity check for the mean crossing time.
//!
//! Every quantity here is computed exactly on the piecewise-constant
//! empirical CDFs by sweeping over event points; nothing is binned.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::expfam::TiltedFamily;
use crate::ladder::{overshoot_batch, SimBudget};
use crate::rng::StreamKey;
use crate::stationary::{limit_moment, LadderPopulation, StationarySampler};
use crate::stats::{fit_line, pairwise_sum, Estimate, LineFit, CI_SIGMAS};

/// A finite sample viewed as a discrete law, values kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    sorted: Vec<f64>,
}

impl EmpiricalLaw {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyLaw);
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("empirical law contains NaN"));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalLaw { sorted: values })
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// F(t) = P(X ≤ t).
    pub fn cdf(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= t) as f64 / self.len() as f64
    }

    /// Generalised inverse `inf{t: F(t) ≥ u}`; `u ≤ 0` maps to the minimum.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.len();
        let idx = (u * n as f64).ceil() as usize;
        self.sorted[idx.clamp(1, n) - 1]
    }

    /// Direct sample moment `mean(X^k)`.
    pub fn moment(&self, k: u32) -> f64 {
        let p: Vec<f64> = self.sorted.iter().map(|v| v.powi(k as i32)).collect();
        pairwise_sum(&p) / self.len() as f64
    }

    /// `k ∫_0^∞ y^{k−1} (1 − F(y)) dy` for a nonnegative law, integrated
    /// exactly between order statistics.
    pub fn moment_from_tail(&self, k: u32) -> Result<f64> {
        if self.sorted[0] < 0.0 {
            return Err(Error::invalid("tail formula needs a nonnegative law"));
        }
        let n = self.len();
        let mut prev = 0.0f64;
        let terms: Vec<f64> = self
            .sorted
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let survival = (n - i) as f64 / n as f64;
                let piece = survival * (v.powi(k as i32) - prev.powi(k as i32));
                prev = v;
                piece
            })
            .collect();
        Ok(pairwise_sum(&terms))
    }
}

/// `W₁ = ∫ |F_x(t) − F_y(t)| dt`, swept over the merged order statistics.
pub fn w1_empirical(x: &EmpiricalLaw, y: &EmpiricalLaw) -> f64 {
    let (xs, ys) = (x.values(), y.values());
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = xs[0].min(ys[0]);
    let mut pieces = Vec::with_capacity(xs.len() + ys.len());
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        let gap = (i as f64 / nx - j as f64 / ny).abs();
        pieces.push(gap * (next - prev));
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
        prev = next;
    }
    pairwise_sum(&pieces)
}

/// Kolmogorov distance `sup_t |F_x(t) − F_y(t)|`.
pub fn ks_distance(x: &EmpiricalLaw, y: &EmpiricalLaw) -> f64 {
    let (xs, ys) = (x.values(), y.values());
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0f64;
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
        best = best.max((i as f64 / nx - j as f64 / ny).abs());
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCoupling {
    /// `(F_x^{-1}(u), F_y^{-1}(u))` for each supplied `u`.
    pub pairs: Vec<(f64, f64)>,
    /// Mean of `|a − b|` over the pairs.
    pub mean_abs: f64,
    /// `∫_0^1 |F_x^{-1}(u) − F_y^{-1}(u)| du`, computed exactly.
    pub exact: f64,
}

pub fn quantile_coupling(
    x: &EmpiricalLaw,
    y: &EmpiricalLaw,
    u_draws: &[f64],
) -> Result<QuantileCoupling> {
    if let Some(u) = u_draws.iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return Err(Error::invalid(format!("coupling uniform {u} outside [0,1]")));
    }
    let pairs: Vec<(f64, f64)> = u_draws
        .iter()
        .map(|&u| (x.quantile(u), y.quantile(u)))
        .collect();
    let mean_abs = if pairs.is_empty() {
        0.0
    } else {
        let d: Vec<f64> = pairs.iter().map(|(a, b)| (a - b).abs()).collect();
        pairwise_sum(&d) / d.len() as f64
    };
    Ok(QuantileCoupling {
        pairs,
        mean_abs,
        exact: coupling_cost(x, y),
    })
}

// Exact ∫_0^1 |F_x^{-1} − F_y^{-1}|: both quantile functions are step
// functions with jumps at i/n_x and j/n_y; compare breakpoints in integers.
fn coupling_cost(x: &EmpiricalLaw, y: &EmpiricalLaw) -> f64 {
    let (xs, ys) = (x.values(), y.values());
    let (nx, ny) = (xs.len() as u128, ys.len() as u128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0f64;
    let mut pieces = Vec::with_capacity(xs.len() + ys.len());
    while i < xs.len() && j < ys.len() {
        let ux = (i as u128 + 1) * ny;
        let uy = (j as u128 + 1) * nx;
        let next = match ux.cmp(&uy) {
            Ordering::Less | Ordering::Equal => (i + 1) as f64 / nx as f64,
            Ordering::Greater => (j + 1) as f64 / ny as f64,
        };
        pieces.push((next - u) * (xs[i] - ys[j]).abs());
        u = next;
        match ux.cmp(&uy) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    pairwise_sum(&pieces)
}

/// Total variation between `X + U` and `Y + U`, `U ~ Uniform(0, 1)`.
///
/// The smoothed density of an empirical law is `F(t) − F(t − 1)`, piecewise
/// constant between the points `{v, v + 1}`; the integral is taken exactly
/// over those pieces. `grid_step` is only validated: it sets the reporting
/// resolution of callers and does not enter the computation.
pub fn smoothed_tv(x: &EmpiricalLaw, y: &EmpiricalLaw, grid_step: f64) -> Result<f64> {
    if !(grid_step > 0.0) {
        return Err(Error::invalid("grid_step must be positive"));
    }
    let mut points: Vec<f64> = x
        .values()
        .iter()
        .chain(y.values())
        .flat_map(|&v| [v, v + 1.0])
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let density = |law: &EmpiricalLaw, t: f64| law.cdf(t) - law.cdf(t - 1.0);
    let pieces: Vec<f64> = points
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (density(x, mid) - density(y, mid)).abs() * (w[1] - w[0])
        })
        .collect();
    Ok(0.5 * pairwise_sum(&pieces))
}

/// `L·(C/r)·e^{−rb}`, the transport bound on `|E g(R_b) − E g(R_∞)|`.
pub fn lipschitz_error(lipschitz: f64, c_const: f64, r: f64, b: f64) -> Result<f64> {
    if !(lipschitz >= 0.0 && c_const > 0.0 && r > 0.0) {
        return Err(Error::invalid(
            "lipschitz_error needs L >= 0, C > 0 and r > 0",
        ));
    }
    Ok(lipschitz * (c_const / r) * (-r * b).exp())
}

/// Test functionals with known Lipschitz constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `y ↦ (y − a)⁺`
    PositivePart { a: f64 },
    /// `y ↦ e^{−λy}`
    ExpDecay { lambda: f64 },
}

impl Functional {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Functional::PositivePart { a } => (y - a).max(0.0),
            Functional::ExpDecay { lambda } => (-lambda * y).exp(),
        }
    }

    /// Lipschitz constant on `[0, ∞)`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Functional::PositivePart { .. } => 1.0,
            Functional::ExpDecay { lambda } => lambda.abs(),
        }
    }

    /// `|mean g(x) − mean g(y)|` over two samples.
    pub fn realised_error(&self, x: &[f64], y: &[f64]) -> f64 {
        let gx: Vec<f64> = x.iter().map(|&v| self.eval(v)).collect();
        let gy: Vec<f64> = y.iter().map(|&v| self.eval(v)).collect();
        (pairwise_sum(&gx) / gx.len() as f64 - pairwise_sum(&gy) / gy.len() as f64).abs()
    }
}

/// Wald-identity and continuity-correction diagnostics at one `(θ, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldReport {
    pub theta: f64,
    pub b: f64,
    pub n: u64,
    pub censored: u64,
    pub mu: f64,
    pub mean_tau: Estimate,
    pub mean_overshoot: Estimate,
    /// Per-replicate `τ − (b + R_b)/μ`; zero in expectation.
    pub identity_residual: Estimate,
    /// κ_θ = E[R_∞].
    pub kappa: Estimate,
    /// `mean τ − (b + κ)/μ`.
    pub continuity_error: Estimate,
    /// `C/(r μ)·e^{−rb}` when rate constants are supplied.
    pub envelope: Option<f64>,
}

impl WaldReport {
    pub fn identity_within_noise(&self) -> bool {
        self.identity_residual.value.abs() <= CI_SIGMAS * self.identity_residual.se
    }
}

/// Wald check with κ estimated from a fresh ladder population of size `n`.
#[allow(clippy::too_many_arguments)]
pub fn tau_wald_check(
    family: &TiltedFamily,
    theta: f64,
    b: f64,
    n: u64,
    rate: Option<(f64, f64)>,
    key: &StreamKey,
    budget: &SimBudget,
    exec: Exec,
) -> Result<WaldReport> {
    let pop = LadderPopulation::simulate(family, theta, n, &key.experiment(2), budget, exec)?;
    let kappa = limit_moment(&pop, 1)?;
    tau_wald_check_with_kappa(family, theta, b, n, kappa, rate, key, budget, exec)
}

#[allow(clippy::too_many_arguments)]
pub fn tau_wald_check_with_kappa(
    family: &TiltedFamily,
    theta: f64,
    b: f64,
    n: u64,
    kappa: Estimate,
    rate: Option<(f64, f64)>,
    key: &StreamKey,
    budget: &SimBudget,
    exec: Exec,
) -> Result<WaldReport> {
    let mu = family.mean(theta)?;
    if !(mu > 0.0) {
        return Err(Error::invalid("Wald check needs positive drift"));
    }
    let batch = overshoot_batch(family, theta, b, n, &key.experiment(1), budget, exec)?;
    if batch.samples.is_empty() {
        return Err(Error::InsufficientSamples {
            required: 1,
            available: 0,
        });
    }
    let taus = batch.taus();
    let mean_tau = Estimate::of_mean(&taus);
    let mean_overshoot = Estimate::of_mean(&batch.overshoots());
    let residuals: Vec<f64> = batch
        .samples
        .iter()
        .map(|s| s.tau as f64 - (b + s.overshoot) / mu)
        .collect();
    let identity_residual = Estimate::of_mean(&residuals);
    let continuity_error = Estimate {
        value: mean_tau.value - (b + kappa.value) / mu,
        se: mean_tau.se.hypot(kappa.se / mu),
    };
    let envelope = rate.map(|(c, r)| c / (r * mu) * (-r * b).exp());
    Ok(WaldReport {
        theta,
        b,
        n: batch.requested(),
        censored: batch.censored,
        mu,
        mean_tau,
        mean_overshoot,
        identity_residual,
        kappa,
        continuity_error,
        envelope,
    })
}

/// Transport distances between `R_b` and `R_∞` at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportRow {
    pub theta: f64,
    pub b: f64,
    pub n: u64,
    pub censored: u64,
    pub w1: f64,
    pub coupling_mean_abs: f64,
    pub smoothed_tv: f64,
    pub ks: f64,
    /// `(C/r)·e^{−rb}` with the constants in use.
    pub w1_bound_theoretical: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSweep {
    pub rows: Vec<TransportRow>,
    /// Least-squares fit of `ln W₁` against `b`.
    pub fit: Option<LineFit>,
    /// `−slope` of the fit.
    pub fitted_r: Option<f64>,
}

/// W₁, coupling cost, smoothed TV and Kolmogorov distance between `n`
/// overshoots at each level and `n` draws of R_∞.
#[allow(clippy::too_many_arguments)]
pub fn transport_sweep(
    family: &TiltedFamily,
    theta: f64,
    b_grid: &[f64],
    n: u64,
    rate: Option<(f64, f64)>,
    key: &StreamKey,
    budget: &SimBudget,
    exec: Exec,
) -> Result<TransportSweep> {
    let pop = LadderPopulation::simulate(family, theta, n, &key.experiment(2), budget, exec)?;
    let stationary = EmpiricalLaw::new(
        StationarySampler::new(&pop)?.sample_many(n, &key.experiment(3), exec),
    )?;
    let mut rows = Vec::with_capacity(b_grid.len());
    for (cell, &b) in b_grid.iter().enumerate() {
        let batch = overshoot_batch(
            family,
            theta,
            b,
            n,
            &key.experiment(1).cell(cell as u64),
            budget,
            exec,
        )?;
        let law = EmpiricalLaw::new(batch.overshoots())?;
        let w1 = w1_empirical(&law, &stationary);
        rows.push(TransportRow {
            theta,
            b,
            n: batch.requested(),
            censored: batch.censored + pop.censored(),
            w1,
            coupling_mean_abs: coupling_cost(&law, &stationary),
            smoothed_tv: smoothed_tv(&law, &stationary, 0.01)?,
            ks: ks_distance(&law, &stationary),
            w1_bound_theoretical: rate.map(|(c, r)| c / r * (-r * b).exp()),
        });
    }
    let positive: Vec<&TransportRow> = rows.iter().filter(|r| r.w1 > 0.0).collect();
    let fit = fit_line(
        &positive.iter().map(|r| r.b).collect::<Vec<_>>(),
        &positive.iter().map(|r| r.w1.ln()).collect::<Vec<_>>(),
    );
    Ok(TransportSweep {
        rows,
        fitted_r: fit.map(|f| -f.slope),
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn law(v: &[f64]) -> EmpiricalLaw {
        EmpiricalLaw::new(v.to_vec()).unwrap()
    }

    // brute force for equal sizes: mean |x_(i) − y_(i)|
    fn sorted_sample_w1(x: &[f64], y: &[f64]) -> f64 {
        let (mut a, mut b) = (x.to_vec(), y.to_vec());
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn w1_examples() {
        let x = law(&[0.3, 1.2, 2.0]);
        assert_eq!(w1_empirical(&x, &x), 0.0);
        assert!((w1_empirical(&law(&[0.0]), &law(&[2.5])) - 2.5).abs() < 1e-15);
        assert!((w1_empirical(&law(&[0.0, 1.0]), &law(&[0.5, 1.5])) - 0.5).abs() < 1e-15);
        assert!(matches!(EmpiricalLaw::new(vec![]), Err(Error::EmptyLaw)));
    }

    #[test]
    fn quantile_convention() {
        let x = law(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(x.quantile(0.0), 1.0);
        assert_eq!(x.quantile(0.25), 1.0);
        assert_eq!(x.quantile(0.2500001), 2.0);
        assert_eq!(x.quantile(1.0), 4.0);
    }

    #[test]
    fn coupling_examples() {
        let x = law(&[0.5, 0.1, 0.9]);
        let u = [0.05, 0.5, 0.99];
        let c = quantile_coupling(&x, &x, &u).unwrap();
        assert!(c.pairs.iter().all(|(a, b)| a == b));
        assert_eq!(c.mean_abs, 0.0);
        let c = quantile_coupling(&law(&[0.0]), &law(&[1.5]), &u).unwrap();
        assert!(c.pairs.iter().all(|&p| p == (0.0, 1.5)));
        assert_eq!(c.mean_abs, 1.5);
        assert_eq!(c.exact, 1.5);
        assert!(quantile_coupling(&x, &x, &[1.5]).is_err());
    }

    #[test]
    fn smoothed_tv_examples() {
        let x = law(&[0.2, 0.7]);
        assert_eq!(smoothed_tv(&x, &x, 0.01).unwrap(), 0.0);
        let tv = smoothed_tv(&law(&[0.0]), &law(&[2.0]), 0.01).unwrap();
        assert!((tv - 1.0).abs() < 1e-15);
        let tv = smoothed_tv(&law(&[0.0]), &law(&[0.5]), 0.01).unwrap();
        assert!((tv - 0.5).abs() < 1e-15);
        assert!(smoothed_tv(&x, &x, 0.0).is_err());
    }

    #[test]
    fn lipschitz_bound_examples() {
        let v = lipschitz_error(1.0, 1.0, 0.5, 10.0).unwrap();
        assert!((v - 2.0 * (-5.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.013476).abs() < 1e-6);
        assert_eq!(lipschitz_error(0.0, 1.0, 0.5, 10.0).unwrap(), 0.0);
        let g = Functional::ExpDecay { lambda: 2.0 };
        let doubled = lipschitz_error(g.lipschitz(), 1.0, 0.5, 10.0).unwrap();
        assert!((doubled - 2.0 * v).abs() < 1e-15);
        assert!(lipschitz_error(1.0, 0.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn realised_functional_error_respects_w1() {
        let x = [0.1, 0.4, 0.9, 1.3];
        let y = [0.2, 0.6, 0.8, 2.0];
        let w1 = w1_empirical(&law(&x), &law(&y));
        for g in [
            Functional::PositivePart { a: 0.5 },
            Functional::ExpDecay { lambda: 3.0 },
        ] {
            assert!(g.realised_error(&x, &y) <= g.lipschitz() * w1 + 1e-15);
        }
    }

    #[test]
    fn wald_point_mass_exact() {
        let fam = TiltedFamily::point_mass(1.0).unwrap();
        let r = tau_wald_check_with_kappa(
            &fam,
            0.0,
            2.5,
            100,
            Estimate::exact(0.5),
            None,
            &StreamKey::new(1),
            &SimBudget::default(),
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(r.mean_tau.value, 3.0);
        assert_eq!((2.5 + r.mean_overshoot.value) / r.mu, 3.0);
        assert_eq!(r.identity_residual.value, 0.0);
        assert_eq!(r.identity_residual.se, 0.0);
    }

    #[test]
    fn wald_gaussian_within_noise() {
        let r = tau_wald_check(
            &TiltedFamily::gaussian(),
            0.5,
            10.0,
            100_000,
            None,
            &StreamKey::new(2),
            &SimBudget::default(),
            Exec::Parallel,
        )
        .unwrap();
        assert!(r.identity_within_noise(), "{r:?}");
        // at b = 10 the continuity correction is exact up to noise
        assert!(r.continuity_error.value.abs() <= CI_SIGMAS * r.continuity_error.se);
    }

    #[test]
    fn continuity_error_shrinks_with_level() {
        // the b-grid sits where the error exceeds Monte Carlo noise
        let fam = TiltedFamily::gaussian();
        let pop = LadderPopulation::simulate(
            &fam,
            0.5,
            200_000,
            &StreamKey::new(3),
            &SimBudget::default(),
            Exec::Parallel,
        )
        .unwrap();
        let kappa = limit_moment(&pop, 1).unwrap();
        let errs: Vec<f64> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&b| {
                tau_wald_check_with_kappa(
                    &fam,
                    0.5,
                    b,
                    200_000,
                    kappa,
                    None,
                    &StreamKey::new(4).cell((b * 10.0) as u64),
                    &SimBudget::default(),
                    Exec::Parallel,
                )
                .unwrap()
                .continuity_error
                .value
                .abs()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn coupling_equals_w1_for_equal_sizes(
            pairs in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..60)
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let (lx, ly) = (law(&x), law(&y));
            let w1 = w1_empirical(&lx, &ly);
            let brute = sorted_sample_w1(&x, &y);
            prop_assert!((w1 - brute).abs() <= 1e-9);
            prop_assert!((coupling_cost(&lx, &ly) - w1).abs() <= 1e-9);
            let tv = smoothed_tv(&lx, &ly, 0.01).unwrap();
            prop_assert!(tv <= w1.min(1.0) + 1e-12);
        }

        #[test]
        fn coupling_equals_w1_for_unequal_sizes(
            x in proptest::collection::vec(0.0f64..5.0, 1..40),
            y in proptest::collection::vec(0.0f64..5.0, 1..40),
        ) {
            let (lx, ly) = (law(&x), law(&y));
            prop_assert!((coupling_cost(&lx, &ly) - w1_empirical(&lx, &ly)).abs() <= 1e-9);
        }

        #[test]
        fn w1_is_a_metric(
            x in proptest::collection::vec(0.0f64..5.0, 1..30),
            y in proptest::collection::vec(0.0f64..5.0, 1..30),
            z in proptest::collection::vec(0.0f64..5.0, 1..30),
        ) {
            let (lx, ly, lz) = (law(&x), law(&y), law(&z));
            let xy = w1_empirical(&lx, &ly);
            prop_assert_eq!(xy, w1_empirical(&ly, &lx));
            prop_assert!(xy <= w1_empirical(&lx, &lz) + w1_empirical(&lz, &ly) + 1e-12);
            prop_assert_eq!(w1_empirical(&lx, &lx), 0.0);
        }

        #[test]
        fn tail_moment_identity(
            x in proptest::collection::vec(0.0f64..4.0, 1..50),
            k in 1u32..4,
        ) {
            let l = law(&x);
            let direct = l.moment(k);
            prop_assert!((l.moment_from_tail(k).unwrap() - direct).abs() <= 1e-9 * direct.max(1.0));
        }
    }
}
