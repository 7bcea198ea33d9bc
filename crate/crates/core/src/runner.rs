//! Experiment runner: maps a subcommand and a config onto the library
//! pipelines, writes the report tables and decides the exit status.
//!
//! Every subcommand draws from its own branch of the master key, and every
//! θ (or k) inside a subcommand from a further branch, so adding a grid point
//! never changes the numbers of the others.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use crate::bounds::{
    bound_grid, counterexample_deterministic, counterexample_uniform_tilt, fit_rate,
    mean_overshoot_series, verify_small_drift_uniformity, BoundRow, GridSpec, RateConstants,
    RateFit,
};
use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::expfam::TiltedFamily;
use crate::ladder::SimBudget;
use crate::report::{emit_report, Cell, Table};
use crate::rng::StreamKey;
use crate::stationary::{check_renewal_equation, limit_moment, LadderPopulation, RenewalCheckConfig};
use crate::stats::Verdict;
use crate::transport::{tau_wald_check_with_kappa, transport_sweep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    /// Overshoot and first-passage summaries with the Wald identity check.
    Simulate,
    /// Monte Carlo moments against the classical, corrected and C_k = 1 bounds.
    Bounds,
    /// The C_k = 1 bound over small drifts.
    #[value(name = "small-drift")]
    SmallDrift,
    /// Deterministic-increment counterexample, exact arithmetic.
    #[value(name = "counterexample-a1")]
    CounterexampleA1,
    /// Heavily tilted uniform counterexample.
    #[value(name = "counterexample-a2")]
    CounterexampleA2,
    /// W₁, coupling, smoothed TV and Kolmogorov distances to the limit law.
    Transport,
    /// Residual of the renewal equation for the overshoot tail.
    #[value(name = "renewal-check")]
    RenewalCheck,
    /// Empirical fit of the convergence-rate constants.
    #[value(name = "rate-fit")]
    RateFit,
    /// Everything above.
    Report,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Bounds => "bounds",
            Subcommand::SmallDrift => "small-drift",
            Subcommand::CounterexampleA1 => "counterexample-a1",
            Subcommand::CounterexampleA2 => "counterexample-a2",
            Subcommand::Transport => "transport",
            Subcommand::RenewalCheck => "renewal-check",
            Subcommand::RateFit => "rate-fit",
            Subcommand::Report => "report",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub quiet: bool,
    pub exec: Exec,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// One entry per cell whose verdict decides a nonzero exit.
    pub failures: Vec<String>,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.success() {
            0
        } else {
            1
        }
    }
}

const COMMON: [&str; 4] = ["c_const", "r", "seed", "config_hash"];

fn columns(specific: &[&'static str]) -> Vec<&'static str> {
    specific.iter().chain(COMMON.iter()).copied().collect()
}

const BOUNDS_COLUMNS: &[&str] = &[
    "experiment",
    "theta",
    "b",
    "k",
    "n",
    "censored",
    "mc_moment",
    "mc_se",
    "rhs_classical",
    "rhs_classical_ladder",
    "rhs_classical_ladder_se",
    "rhs_corrected",
    "rhs_ck1",
    "rhs_strengthened",
    "b0",
    "corrected_asserted",
    "ck1_asserted",
    "verdict_classical",
    "verdict_classical_ladder",
    "verdict_corrected",
    "verdict_ck1",
    "verdict_strengthened",
    "threshold_proxy",
];

const COUNTEREXAMPLE_COLUMNS: &[&str] = &[
    "experiment",
    "c",
    "k",
    "theta",
    "b",
    "n",
    "censored",
    "lhs",
    "lhs_se",
    "rhs",
    "lhs_exact",
    "rhs_exact",
    "strengthened_bound",
    "threshold_proxy",
];

const SIMULATE_COLUMNS: &[&str] = &[
    "theta",
    "b",
    "n",
    "censored",
    "mu",
    "mean_tau",
    "mean_tau_se",
    "mean_overshoot",
    "mean_overshoot_se",
    "wald_residual",
    "wald_residual_se",
    "kappa",
    "kappa_se",
    "continuity_error",
    "continuity_error_se",
    "continuity_envelope",
    "verdict",
];

const TRANSPORT_COLUMNS: &[&str] = &[
    "theta",
    "b",
    "n",
    "censored",
    "w1",
    "coupling_mean_abs",
    "smoothed_tv",
    "ks",
    "w1_bound",
    "fit_slope",
    "fit_r_squared",
    "fitted_r",
];

const RENEWAL_COLUMNS: &[&str] = &[
    "theta",
    "b",
    "y",
    "n",
    "censored",
    "lhs",
    "lhs_se",
    "rhs",
    "rhs_se",
    "difference",
    "combined_se",
    "discretisation_bound",
    "grid_step",
    "verdict",
];

const RATE_COLUMNS: &[&str] = &[
    "theta",
    "b_grid",
    "used",
    "excluded",
    "c_hat",
    "r_hat",
    "fit_quality",
    "source",
];

/// Rate constants in force for one θ, and where they came from.
#[derive(Debug, Clone)]
struct RateInfo {
    constants: Option<RateConstants>,
    fit: std::result::Result<RateFit, String>,
    source: &'static str,
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    family: TiltedFamily,
    root: StreamKey,
    seed: u64,
    budget: SimBudget,
    exec: Exec,
    quiet: bool,
    out: &'a mut dyn Write,
    rates: BTreeMap<usize, RateInfo>,
    failures: Vec<String>,
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn verdict_cell(v: Verdict) -> Cell {
    v.as_str().into()
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

impl<'a> Runner<'a> {
    fn say(&mut self, line: String) {
        if !self.quiet {
            // a closed stdout is not a reason to abort a run
            let _ = writeln!(self.out, "{line}");
        }
    }

    fn key(&self, sub: Subcommand) -> StreamKey {
        self.root.branch(sub.tag())
    }

    fn common(&self, constants: Option<RateConstants>) -> Vec<Cell> {
        vec![
            constants.map(|c| c.c_const).into(),
            constants.map(|c| c.r).into(),
            Cell::Text(self.seed.to_string()),
            self.cfg.hash.as_str().into(),
        ]
    }

    fn row(&self, mut cells: Vec<Cell>, constants: Option<RateConstants>) -> Vec<Cell> {
        cells.extend(self.common(constants));
        cells
    }

    fn rate_info(&mut self, ti: usize) -> Result<RateInfo> {
        if let Some(info) = self.rates.get(&ti) {
            return Ok(info.clone());
        }
        let theta = self.cfg.theta_grid[ti];
        let key = self.key(Subcommand::RateFit).branch(ti as u64);
        let pop = LadderPopulation::simulate(
            &self.family,
            theta,
            self.cfg.n_replicates,
            &key.experiment(2),
            &self.budget,
            self.exec,
        )?;
        let series = mean_overshoot_series(
            &self.family,
            theta,
            &self.cfg.rate_fit_b_grid,
            self.cfg.n_replicates,
            &pop,
            &key.experiment(1),
            &self.budget,
            self.exec,
        )?;
        let fit = match fit_rate(&series) {
            Ok(f) => Ok(f),
            Err(e @ Error::InsufficientSignal { .. }) => Err(e.to_string()),
            Err(e) => return Err(e),
        };
        let fitted = fit
            .as_ref()
            .ok()
            .and_then(|f| f.constants_from_mean_series().ok());
        let info = match (self.cfg.rate_c, self.cfg.rate_r) {
            (Some(c_const), Some(r)) => RateInfo {
                constants: Some(RateConstants::new(c_const, r)?),
                fit,
                source: "override",
            },
            _ => RateInfo {
                source: if fitted.is_some() { "fit" } else { "unavailable" },
                constants: fitted,
                fit,
            },
        };
        self.rates.insert(ti, info.clone());
        Ok(info)
    }

    fn simulate(&mut self, out_dir: &std::path::Path) -> Result<Table> {
        let mut table = Table::new("simulate", &columns(SIMULATE_COLUMNS));
        let key = self.key(Subcommand::Simulate);
        for ti in 0..self.cfg.theta_grid.len() {
            let theta = self.cfg.theta_grid[ti];
            let tkey = key.branch(ti as u64);
            let pop = LadderPopulation::simulate(
                &self.family,
                theta,
                self.cfg.n_replicates,
                &tkey.experiment(2),
                &self.budget,
                self.exec,
            )
            .map_err(|e| e.in_cell(format!("simulate theta={theta}")))?;
            if ti == 0 {
                let path = out_dir.join("ladder_population.txt");
                std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
                pop.save(&path)?;
            }
            let kappa = limit_moment(&pop, 1)?;
            let constants = self.rate_constants_quiet(ti);
            for (bi, &b) in self.cfg.b_grid.iter().enumerate() {
                let w = tau_wald_check_with_kappa(
                    &self.family,
                    theta,
                    b,
                    self.cfg.n_replicates,
                    kappa,
                    constants.map(|c| (c.c_const, c.r)),
                    &tkey.branch(bi as u64),
                    &self.budget,
                    self.exec,
                )
                .map_err(|e| e.in_cell(format!("simulate theta={theta} b={b}")))?;
                let ok = w.identity_within_noise();
                let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
                self.say(format!(
                    "simulate theta={theta} b={b}: E[tau]={} E[R]={} wald_residual={} {verdict}",
                    fmt(w.mean_tau.value),
                    fmt(w.mean_overshoot.value),
                    fmt(w.identity_residual.value)
                ));
                if !ok {
                    self.failures
                        .push(format!("simulate theta={theta} b={b}: Wald identity"));
                }
                let cells = vec![
                    theta.into(),
                    b.into(),
                    w.n.into(),
                    w.censored.into(),
                    w.mu.into(),
                    w.mean_tau.value.into(),
                    w.mean_tau.se.into(),
                    w.mean_overshoot.value.into(),
                    w.mean_overshoot.se.into(),
                    w.identity_residual.value.into(),
                    w.identity_residual.se.into(),
                    w.kappa.value.into(),
                    w.kappa.se.into(),
                    w.continuity_error.value.into(),
                    w.continuity_error.se.into(),
                    w.envelope.into(),
                    verdict_cell(verdict),
                ];
                table.push(self.row(cells, constants));
            }
        }
        Ok(table)
    }

    // constants for envelopes only; a failed fit just leaves them empty
    fn rate_constants_quiet(&mut self, ti: usize) -> Option<RateConstants> {
        self.rate_info(ti).ok().and_then(|i| i.constants)
    }

    fn bound_cells(
        &self,
        experiment: &str,
        r: &BoundRow,
        corrected_asserted: bool,
        proxy: Option<f64>,
    ) -> Vec<Cell> {
        vec![
            experiment.into(),
            r.theta.into(),
            r.b.into(),
            r.k.into(),
            r.n.into(),
            r.censored.into(),
            r.mc.value.into(),
            r.mc.se.into(),
            r.rhs_classical.into(),
            r.rhs_classical_ladder.value.into(),
            r.rhs_classical_ladder.se.into(),
            r.rhs_corrected.into(),
            r.rhs_ck1.into(),
            r.rhs_strengthened.into(),
            r.b0.into(),
            if corrected_asserted { "true" } else { "false" }.into(),
            if r.ck1_asserted() { "true" } else { "false" }.into(),
            verdict_cell(r.verdict_classical),
            verdict_cell(r.verdict_classical_ladder),
            r.verdict_corrected.map_or(Cell::Missing, verdict_cell),
            verdict_cell(r.verdict_ck1),
            verdict_cell(r.verdict_strengthened),
            proxy.into(),
        ]
    }

    fn bounds(&mut self) -> Result<Table> {
        let mut table = Table::new("bounds", &columns(BOUNDS_COLUMNS));
        let key = self.key(Subcommand::Bounds);
        for ti in 0..self.cfg.theta_grid.len() {
            let theta = self.cfg.theta_grid[ti];
            let info = self.rate_info(ti)?;
            if let Err(reason) = &info.fit {
                if info.constants.is_none() {
                    self.say(format!(
                        "bounds theta={theta}: no rate constants ({reason}); corrected bound skipped"
                    ));
                }
            }
            let spec = GridSpec {
                theta_grid: &[theta],
                b_grid: &self.cfg.b_grid,
                k_list: &self.cfg.k_list,
                n: self.cfg.n_replicates,
            };
            let rows = bound_grid(
                &self.family,
                &spec,
                info.constants,
                &key.branch(ti as u64),
                &self.budget,
                self.exec,
            )
            .map_err(|e| e.in_cell(format!("bounds theta={theta}")))?;
            // fitted constants describe the moment decay, not a proven
            // envelope, so only configured constants make the bound binding
            let corrected_asserted = info.source == "override";
            for r in &rows {
                let corrected = match r.verdict_corrected {
                    None => "n/a",
                    Some(v) if corrected_asserted => v.as_str(),
                    Some(Verdict::Fail) => "fail (fitted constants, not asserted)",
                    Some(v) => v.as_str(),
                };
                let ck1 = if r.ck1_asserted() {
                    r.verdict_ck1.as_str()
                } else {
                    "not asserted"
                };
                self.say(format!(
                    "bounds theta={} b={} k={}: E[R^k]={} classical={} ladder={} corrected={corrected} ck1={ck1} strengthened={}",
                    r.theta,
                    r.b,
                    r.k,
                    fmt(r.mc.value),
                    r.verdict_classical,
                    r.verdict_classical_ladder,
                    r.verdict_strengthened
                ));
                let mut failed = vec![];
                if r.verdict_classical == Verdict::Fail {
                    failed.push("classical");
                }
                if r.verdict_classical_ladder == Verdict::Fail {
                    failed.push("classical (ladder)");
                }
                if corrected_asserted && r.verdict_corrected == Some(Verdict::Fail) {
                    failed.push("corrected");
                }
                if r.ck1_asserted() && r.verdict_ck1 == Verdict::Fail {
                    failed.push("C_k=1");
                }
                for name in failed {
                    self.failures.push(format!(
                        "bounds theta={} b={} k={}: {name} bound",
                        r.theta, r.b, r.k
                    ));
                }
                let cells = self.bound_cells("bounds", r, corrected_asserted, None);
                table.push(self.row(cells, info.constants));
            }
        }
        Ok(table)
    }

    fn small_drift(&mut self) -> Result<Table> {
        let mut table = Table::new("bounds", &columns(BOUNDS_COLUMNS));
        let key = self.key(Subcommand::SmallDrift);
        let smallest = self.cfg.theta_grid[0];
        for &k in &self.cfg.k_list {
            let report = verify_small_drift_uniformity(
                &self.family,
                k,
                &self.cfg.theta_grid,
                &self.cfg.b_grid,
                self.cfg.n_replicates,
                &key.branch(u64::from(k)),
                &self.budget,
                self.exec,
            )
            .map_err(|e| e.in_cell(format!("small-drift k={k}")))?;
            for r in &report.rows {
                self.say(format!(
                    "small-drift theta={} b={} k={}: E[R^k]={} A={} {}",
                    r.theta,
                    r.b,
                    r.k,
                    fmt(r.mc.value),
                    fmt(r.rhs_ck1),
                    r.verdict_ck1
                ));
                if r.theta == smallest && r.verdict_ck1 == Verdict::Fail {
                    self.failures.push(format!(
                        "small-drift theta={} b={} k={}: C_k=1 bound",
                        r.theta, r.b, r.k
                    ));
                }
                let cells = self.bound_cells("small-drift", r, false, report.theta_k_proxy);
                table.push(self.row(cells, None));
            }
            match report.theta_k_proxy {
                Some(t) => self.say(format!("small-drift k={k}: bound holds on the grid up to theta={t}")),
                None => self.say(format!("small-drift k={k}: bound fails at the smallest grid theta")),
            }
        }
        Ok(table)
    }

    fn counterexample_k_list(&self) -> Result<Vec<u32>> {
        let ks: Vec<u32> = self.cfg.k_list.iter().copied().filter(|&k| k >= 2).collect();
        if ks.is_empty() {
            return Err(Error::Config {
                line: 0,
                field: "k_list".into(),
                message: "counterexamples need some k >= 2".into(),
            });
        }
        Ok(ks)
    }

    fn counterexample_a1(&mut self) -> Result<Table> {
        let mut table = Table::new("counterexamples", &columns(COUNTEREXAMPLE_COLUMNS));
        for k in self.counterexample_k_list()? {
            for &c in &self.cfg.counterexample_c {
                let r = counterexample_deterministic(c, k)?;
                self.say(format!(
                    "counterexample-a1 c={c} k={k}: LHS={} RHS={} {}",
                    r.lhs_exact,
                    r.rhs_exact,
                    if r.fails { "violated as predicted" } else { "NOT violated" }
                ));
                if !(r.fails && r.midpoint_fails) {
                    self.failures
                        .push(format!("counterexample-a1 c={c} k={k}: bound not violated"));
                }
                let status = |fails: bool| if fails { "violated" } else { "holds" };
                let at_zero = vec![
                    "a1".into(),
                    c.into(),
                    k.into(),
                    Cell::Missing,
                    0.0.into(),
                    Cell::Missing,
                    Cell::Missing,
                    r.lhs.into(),
                    0.0.into(),
                    r.rhs.into(),
                    r.lhs_exact.clone().into(),
                    r.rhs_exact.clone().into(),
                    status(r.fails).into(),
                    Cell::Missing,
                ];
                table.push(self.row(at_zero, None));
                let at_mid = vec![
                    "a1".into(),
                    c.into(),
                    k.into(),
                    Cell::Missing,
                    r.midpoint.into(),
                    Cell::Missing,
                    Cell::Missing,
                    r.midpoint_lhs.into(),
                    0.0.into(),
                    r.rhs.into(),
                    Cell::Missing,
                    Cell::Missing,
                    status(r.midpoint_fails).into(),
                    Cell::Missing,
                ];
                table.push(self.row(at_mid, None));
            }
        }
        Ok(table)
    }

    fn counterexample_a2(&mut self) -> Result<Table> {
        let mut table = Table::new("counterexamples", &columns(COUNTEREXAMPLE_COLUMNS));
        let key = self.key(Subcommand::CounterexampleA2);
        for k in self.counterexample_k_list()? {
            let r = counterexample_uniform_tilt(
                k,
                &self.cfg.counterexample_theta_grid,
                self.cfg.n_replicates,
                &key.branch(u64::from(k)),
                &self.budget,
                self.exec,
            )
            .map_err(|e| e.in_cell(format!("counterexample-a2 k={k}")))?;
            for row in &r.rows {
                let status = match row.verdict {
                    Verdict::Fail => "violated",
                    Verdict::Pass => "holds",
                    Verdict::Inconclusive => "inconclusive",
                };
                self.say(format!(
                    "counterexample-a2 theta={} k={k} b={}: E[R^k]={} RHS={} {status}",
                    row.theta,
                    fmt(r.b),
                    fmt(row.mc.value),
                    fmt(row.rhs_strengthened)
                ));
                let cells = vec![
                    "a2".into(),
                    r.a.into(),
                    k.into(),
                    row.theta.into(),
                    r.b.into(),
                    row.n.into(),
                    row.censored.into(),
                    row.mc.value.into(),
                    row.mc.se.into(),
                    row.rhs_strengthened.into(),
                    Cell::Missing,
                    Cell::Missing,
                    status.into(),
                    r.theta0_proxy.into(),
                ];
                table.push(self.row(cells, None));
            }
            let limit = vec![
                "a2-limit".into(),
                r.a.into(),
                k.into(),
                Cell::Missing,
                r.b.into(),
                Cell::Missing,
                Cell::Missing,
                r.limit_lhs.into(),
                0.0.into(),
                r.limit_rhs.into(),
                Cell::Missing,
                Cell::Missing,
                if r.limit_fails() { "violated" } else { "holds" }.into(),
                r.theta0_proxy.into(),
            ];
            table.push(self.row(limit, None));
            match r.theta0_proxy {
                Some(t) if r.limit_fails() => self.say(format!(
                    "counterexample-a2 k={k}: violated for all grid theta >= {t}"
                )),
                _ => {
                    self.say(format!("counterexample-a2 k={k}: violation NOT reproduced"));
                    self.failures
                        .push(format!("counterexample-a2 k={k}: bound not violated"));
                }
            }
        }
        Ok(table)
    }

    fn transport(&mut self) -> Result<Table> {
        let mut table = Table::new("transport", &columns(TRANSPORT_COLUMNS));
        let key = self.key(Subcommand::Transport);
        for ti in 0..self.cfg.theta_grid.len() {
            let theta = self.cfg.theta_grid[ti];
            let constants = self.rate_constants_quiet(ti);
            let sweep = transport_sweep(
                &self.family,
                theta,
                &self.cfg.transport_b_grid,
                self.cfg.n_replicates,
                constants.map(|c| (c.c_const, c.r)),
                &key.branch(ti as u64),
                &self.budget,
                self.exec,
            )
            .map_err(|e| e.in_cell(format!("transport theta={theta}")))?;
            for row in &sweep.rows {
                let tv_ok = row.smoothed_tv <= row.w1.min(1.0) + 1e-12;
                let coupling_ok = (row.coupling_mean_abs - row.w1).abs() <= 1e-9 * row.w1.max(1.0);
                self.say(format!(
                    "transport theta={theta} b={}: W1={} coupling={} TV={} KS={} {}",
                    row.b,
                    fmt(row.w1),
                    fmt(row.coupling_mean_abs),
                    fmt(row.smoothed_tv),
                    fmt(row.ks),
                    if tv_ok && coupling_ok { "pass" } else { "fail" }
                ));
                if !tv_ok {
                    self.failures
                        .push(format!("transport theta={theta} b={}: TV exceeds W1", row.b));
                }
                if !coupling_ok {
                    self.failures.push(format!(
                        "transport theta={theta} b={}: coupling cost differs from W1",
                        row.b
                    ));
                }
                let cells = vec![
                    theta.into(),
                    row.b.into(),
                    row.n.into(),
                    row.censored.into(),
                    row.w1.into(),
                    row.coupling_mean_abs.into(),
                    row.smoothed_tv.into(),
                    row.ks.into(),
                    row.w1_bound_theoretical.into(),
                    sweep.fit.map(|f| f.slope).into(),
                    sweep.fit.map(|f| f.r_squared).into(),
                    sweep.fitted_r.into(),
                ];
                table.push(self.row(cells, constants));
            }
            if let Some(fit) = sweep.fit {
                self.say(format!(
                    "transport theta={theta}: ln W1 slope={} R^2={}",
                    fmt(fit.slope),
                    fmt(fit.r_squared)
                ));
            }
        }
        Ok(table)
    }

    fn renewal_check(&mut self) -> Result<Table> {
        let mut table = Table::new("renewal", &columns(RENEWAL_COLUMNS));
        let key = self.key(Subcommand::RenewalCheck);
        let (b, y) = (self.cfg.renewal_b, self.cfg.renewal_y);
        let check_cfg = RenewalCheckConfig {
            n: self.cfg.n_replicates,
            paths: self.cfg.renewal_paths,
            ..RenewalCheckConfig::default()
        };
        for ti in 0..self.cfg.theta_grid.len() {
            let theta = self.cfg.theta_grid[ti];
            let r = check_renewal_equation(
                &self.family,
                theta,
                b,
                y,
                &check_cfg,
                &key.branch(ti as u64),
                &self.budget,
                self.exec,
            )
            .map_err(|e| e.in_cell(format!("renewal-check theta={theta} b={b} y={y}")))?;
            let verdict = if r.within_noise() {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            self.say(format!(
                "renewal-check theta={theta} b={b} y={y}: LHS={} RHS={} diff={} {verdict}",
                fmt(r.lhs.value),
                fmt(r.rhs.value),
                fmt(r.difference)
            ));
            if verdict == Verdict::Fail {
                self.failures
                    .push(format!("renewal-check theta={theta} b={b} y={y}: residual"));
            }
            let cells = vec![
                theta.into(),
                b.into(),
                y.into(),
                self.cfg.n_replicates.into(),
                r.censored.into(),
                r.lhs.value.into(),
                r.lhs.se.into(),
                r.rhs.value.into(),
                r.rhs.se.into(),
                r.difference.into(),
                r.combined_se.into(),
                r.discretisation_bound.into(),
                r.grid_step.into(),
                verdict_cell(verdict),
            ];
            let constants = self.rate_constants_quiet(ti);
            table.push(self.row(cells, constants));
        }
        Ok(table)
    }

    fn rate_fit(&mut self, strict: bool) -> Result<Table> {
        let mut table = Table::new("rate_fit", &columns(RATE_COLUMNS));
        for ti in 0..self.cfg.theta_grid.len() {
            let theta = self.cfg.theta_grid[ti];
            let info = self
                .rate_info(ti)
                .map_err(|e| e.in_cell(format!("rate-fit theta={theta}")))?;
            match &info.fit {
                Ok(f) => self.say(format!(
                    "rate-fit theta={theta}: C_hat={} r_hat={} R^2={} ({} of {} levels used)",
                    fmt(f.c_hat),
                    fmt(f.r_hat),
                    fmt(f.fit_quality),
                    f.used.len(),
                    self.cfg.rate_fit_b_grid.len()
                )),
                Err(reason) => {
                    self.say(format!("rate-fit theta={theta}: {reason}"));
                    if strict && info.constants.is_none() {
                        return Err(Error::InsufficientSignal {
                            usable: 0,
                        }
                        .in_cell(format!("rate-fit theta={theta}: {reason}")));
                    }
                }
            }
            let fit = info.fit.as_ref().ok();
            let cells = vec![
                theta.into(),
                join(&self.cfg.rate_fit_b_grid).into(),
                fit.map_or(Cell::Missing, |f| join(&f.used).into()),
                fit.map_or(Cell::Missing, |f| join(&f.excluded).into()),
                fit.map(|f| f.c_hat).into(),
                fit.map(|f| f.r_hat).into(),
                fit.map(|f| f.fit_quality).into(),
                info.source.into(),
            ];
            table.push(self.row(cells, info.constants));
        }
        Ok(table)
    }
}

/// Runs one subcommand, writing reports and per-cell verdict lines to `out`.
pub fn run(
    sub: Subcommand,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    out: &mut dyn Write,
) -> Result<RunOutcome> {
    if sub != Subcommand::CounterexampleA1 && sub != Subcommand::Simulate {
        cfg.require_verifier_replicates()?;
    }
    let seed = opts.seed.unwrap_or(cfg.master_seed);
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let format = opts.format.unwrap_or(cfg.format);
    let mut runner = Runner {
        cfg,
        family: cfg.family()?,
        root: StreamKey::new(seed),
        seed,
        budget: cfg.budget(),
        exec: opts.exec,
        quiet: opts.quiet,
        out,
        rates: BTreeMap::new(),
        failures: Vec::new(),
    };

    let mut tables: Vec<(&str, Table)> = Vec::new();
    match sub {
        Subcommand::Simulate => tables.push(("simulate", runner.simulate(&out_dir)?)),
        Subcommand::Bounds => tables.push(("bounds", runner.bounds()?)),
        Subcommand::SmallDrift => tables.push(("bounds", runner.small_drift()?)),
        Subcommand::CounterexampleA1 => {
            tables.push(("counterexamples", runner.counterexample_a1()?))
        }
        Subcommand::CounterexampleA2 => {
            tables.push(("counterexamples", runner.counterexample_a2()?))
        }
        Subcommand::Transport => tables.push(("transport", runner.transport()?)),
        Subcommand::RenewalCheck => tables.push(("renewal", runner.renewal_check()?)),
        Subcommand::RateFit => tables.push(("rate_fit", runner.rate_fit(true)?)),
        Subcommand::Report => {
            tables.push(("rate_fit", runner.rate_fit(false)?));
            tables.push(("simulate", runner.simulate(&out_dir)?));
            let mut bounds = runner.bounds()?;
            if runner.family.base().is_standard() {
                bounds.extend(runner.small_drift()?);
            } else {
                runner.say("small-drift: skipped for a non-standard family".into());
            }
            tables.push(("bounds", bounds));
            let mut counter = runner.counterexample_a1()?;
            counter.extend(runner.counterexample_a2()?);
            tables.push(("counterexamples", counter));
            tables.push(("transport", runner.transport()?));
            tables.push(("renewal", runner.renewal_check()?));
        }
    }

    let mut outcome = RunOutcome::default();
    if sub == Subcommand::Simulate || sub == Subcommand::Report {
        outcome.files.push(out_dir.join("ladder_population.txt"));
    }
    for (stem, table) in &tables {
        outcome.files.extend(emit_report(table, &out_dir, stem, format)?);
    }
    let failures = std::mem::take(&mut runner.failures);
    let summary = if failures.is_empty() {
        format!("{}: ok", sub.name())
    } else {
        format!("{}: {} failing cell(s)", sub.name(), failures.len())
    };
    runner.say(summary);
    outcome.failures = failures;
    Ok(outcome)
}
