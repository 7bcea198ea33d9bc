//! Random-walk paths, first passage over a level and strict ascending
//! ladder epochs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::expfam::{TiltedFamily, TiltedSampler};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetPolicy {
    /// Exhausting the budget aborts the run with `BudgetExceeded`.
    Error,
    /// Exhausting the budget yields a censored replicate that is counted and
    /// excluded from estimates.
    Censor,
}

/// Per-replicate step budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimBudget {
    max_steps: u64,
    policy: BudgetPolicy,
}

pub const MIN_BUDGET_STEPS: u64 = 1_000;

impl SimBudget {
    pub fn new(max_steps: u64, policy: BudgetPolicy) -> Result<Self> {
        if max_steps < MIN_BUDGET_STEPS {
            return Err(Error::invalid(format!(
                "max_steps must be at least {MIN_BUDGET_STEPS}, got {max_steps}"
            )));
        }
        Ok(SimBudget { max_steps, policy })
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }

    pub fn policy(&self) -> BudgetPolicy {
        self.policy
    }
}

impl Default for SimBudget {
    fn default() -> Self {
        SimBudget {
            max_steps: 10_000_000,
            policy: BudgetPolicy::Error,
        }
    }
}

/// One first passage of the walk over level `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvershootSample {
    /// τ(b), the crossing index.
    pub tau: u64,
    /// S_τ.
    pub s_tau: f64,
    /// R_b = S_τ − b.
    pub overshoot: f64,
    pub b: f64,
    /// S_{τ−1}, the last partial sum at or below `b`.
    pub s_before: f64,
    /// X_τ, the crossing increment.
    pub jump: f64,
}

/// The first strict ascending ladder epoch `T₊` and height `S_{T₊}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderSample {
    pub t_plus: u64,
    pub height: f64,
}

/// Outcome of a single replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Replicate<T> {
    Observed(T),
    Censored { steps: u64 },
}

impl<T> Replicate<T> {
    pub fn observed(self) -> Option<T> {
        match self {
            Replicate::Observed(t) => Some(t),
            Replicate::Censored { .. } => None,
        }
    }
}

fn require_drift(family: &TiltedFamily, theta: f64) -> Result<TiltedSampler> {
    let sampler = family.sampler(theta)?;
    if theta <= 0.0 && !family.base().is_point_mass() {
        return Err(Error::invalid(format!(
            "positive drift required, got theta = {theta}"
        )));
    }
    Ok(sampler)
}

/// Walks `S_n` with the given sampler until `S_n > b`.
pub fn first_passage<R: Rng + ?Sized>(
    sampler: &TiltedSampler,
    b: f64,
    rng: &mut R,
    budget: &SimBudget,
) -> Result<Replicate<OvershootSample>> {
    let mut s = 0.0f64;
    for n in 1..=budget.max_steps {
        let x = sampler.sample(rng);
        let before = s;
        s += x;
        if s > b {
            let overshoot = s - b;
            debug_assert!(before <= b);
            if let Some(top) = sampler.support_max() {
                assert!(
                    overshoot <= top,
                    "overshoot {overshoot} exceeds the support bound {top}"
                );
            }
            return Ok(Replicate::Observed(OvershootSample {
                tau: n,
                s_tau: s,
                overshoot,
                b,
                s_before: before,
                jump: x,
            }));
        }
    }
    match budget.policy {
        BudgetPolicy::Error => Err(Error::BudgetExceeded {
            max_steps: budget.max_steps,
        }),
        BudgetPolicy::Censor => Ok(Replicate::Censored {
            steps: budget.max_steps,
        }),
    }
}

/// Simulates τ(b) and R_b for one path.
pub fn simulate_overshoot<R: Rng + ?Sized>(
    family: &TiltedFamily,
    theta: f64,
    b: f64,
    rng: &mut R,
    budget: &SimBudget,
) -> Result<Replicate<OvershootSample>> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::invalid(format!("level must be nonnegative, got {b}")));
    }
    let sampler = require_drift(family, theta)?;
    first_passage(&sampler, b, rng, budget)
}

/// `T₊ = inf{n ≥ 1: S_n > 0}` is the first passage over level zero.
pub fn first_ladder<R: Rng + ?Sized>(
    sampler: &TiltedSampler,
    rng: &mut R,
    budget: &SimBudget,
) -> Result<Replicate<LadderSample>> {
    Ok(match first_passage(sampler, 0.0, rng, budget)? {
        Replicate::Observed(o) => Replicate::Observed(LadderSample {
            t_plus: o.tau,
            height: o.s_tau,
        }),
        Replicate::Censored { steps } => Replicate::Censored { steps },
    })
}

pub fn simulate_ladder<R: Rng + ?Sized>(
    family: &TiltedFamily,
    theta: f64,
    rng: &mut R,
    budget: &SimBudget,
) -> Result<Replicate<LadderSample>> {
    let sampler = require_drift(family, theta)?;
    first_ladder(&sampler, rng, budget)
}

/// Partial sums `S_1, …, S_τ` of one path up to its first passage over `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedPath {
    pub partial_sums: Vec<f64>,
    pub b: f64,
}

impl RecordedPath {
    pub fn tau(&self) -> u64 {
        self.partial_sums.len() as u64
    }

    /// Strict ascending ladder epochs `(T₊^{(n)}, H_n)` for n ≥ 1, in order.
    pub fn ladder_epochs(&self) -> Vec<(u64, f64)> {
        let mut record = 0.0f64;
        let mut epochs = Vec::new();
        for (i, &s) in self.partial_sums.iter().enumerate() {
            if s > record {
                record = s;
                epochs.push((i as u64 + 1, s));
            }
        }
        epochs
    }
}

pub fn simulate_path<R: Rng + ?Sized>(
    family: &TiltedFamily,
    theta: f64,
    b: f64,
    rng: &mut R,
    budget: &SimBudget,
) -> Result<RecordedPath> {
    let sampler = require_drift(family, theta)?;
    let mut s = 0.0f64;
    let mut partial_sums = Vec::new();
    for _ in 0..budget.max_steps {
        s += sampler.sample(rng);
        partial_sums.push(s);
        if s > b {
            return Ok(RecordedPath { partial_sums, b });
        }
    }
    Err(Error::BudgetExceeded {
        max_steps: budget.max_steps,
    })
}

/// Result of checking `T₊^{(v(b))} = τ(b)` on one recorded path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecompositionCheck {
    pub holds: bool,
    pub tau: u64,
    /// v(b) = inf{n ≥ 1: H_n > b}.
    pub v: usize,
    pub ladder_epoch: u64,
}

pub fn check_decomposition(path: &RecordedPath) -> DecompositionCheck {
    let epochs = path.ladder_epochs();
    let tau = path.tau();
    match epochs.iter().position(|&(_, h)| h > path.b) {
        Some(idx) => DecompositionCheck {
            holds: epochs[idx].0 == tau,
            tau,
            v: idx + 1,
            ladder_epoch: epochs[idx].0,
        },
        None => DecompositionCheck {
            holds: false,
            tau,
            v: 0,
            ladder_epoch: 0,
        },
    }
}

/// Simulates one path and checks that the first passage over `b` is the
/// v(b)-th strict ascending ladder epoch.
pub fn verify_ladder_decomposition<R: Rng + ?Sized>(
    family: &TiltedFamily,
    theta: f64,
    b: f64,
    rng: &mut R,
    budget: &SimBudget,
) -> Result<DecompositionCheck> {
    if !(b > 0.0) {
        return Err(Error::invalid("decomposition check needs b > 0"));
    }
    let path = simulate_path(family, theta, b, rng, budget)?;
    Ok(check_decomposition(&path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvershootBatch {
    pub theta: f64,
    pub b: f64,
    pub samples: Vec<OvershootSample>,
    pub censored: u64,
}

impl OvershootBatch {
    pub fn requested(&self) -> u64 {
        self.samples.len() as u64 + self.censored
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.requested().max(1) as f64
    }

    pub fn overshoots(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.overshoot).collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.tau as f64).collect()
    }
}

/// `n` independent first passages, replicate `i` driven by `key.stream(i)`.
pub fn overshoot_batch(
    family: &TiltedFamily,
    theta: f64,
    b: f64,
    n: u64,
    key: &StreamKey,
    budget: &SimBudget,
    exec: Exec,
) -> Result<OvershootBatch> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::invalid(format!("level must be nonnegative, got {b}")));
    }
    let sampler = require_drift(family, theta)?;
    let draws = exec.try_map_indexed(n, |i| {
        let mut rng = key.stream(i);
        first_passage(&sampler, b, &mut rng, budget)
    })?;
    let mut samples = Vec::with_capacity(draws.len());
    let mut censored = 0;
    for d in draws {
        match d {
            Replicate::Observed(s) => samples.push(s),
            Replicate::Censored { .. } => censored += 1,
        }
    }
    Ok(OvershootBatch {
        theta,
        b,
        samples,
        censored,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderBatch {
    pub theta: f64,
    pub samples: Vec<LadderSample>,
    pub censored: u64,
}

pub fn ladder_batch(
    family: &TiltedFamily,
    theta: f64,
    n: u64,
    key: &StreamKey,
    budget: &SimBudget,
    exec: Exec,
) -> Result<LadderBatch> {
    let sampler = require_drift(family, theta)?;
    let draws = exec.try_map_indexed(n, |i| {
        let mut rng = key.stream(i);
        first_ladder(&sampler, &mut rng, budget)
    })?;
    let mut samples = Vec::with_capacity(draws.len());
    let mut censored = 0;
    for d in draws {
        match d {
            Replicate::Observed(s) => samples.push(s),
            Replicate::Censored { .. } => censored += 1,
        }
    }
    Ok(LadderBatch {
        theta,
        samples,
        censored,
    })
}
