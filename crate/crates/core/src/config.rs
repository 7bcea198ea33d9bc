//! Experiment configuration: a flat `key = value` text file.
//!
//! ```text
//! # lines starting with '#' are comments
//! family = gaussian            # gaussian | uniform | point_mass
//! family.c = 1.0               # point_mass only
//! theta_grid = 0.1, 0.5
//! b_grid = 0.5, 1, 2, 5
//! k_list = 1, 2
//! n_replicates = 100000
//! master_seed = 42
//! ```
//!
//! All lengths (`b_grid`, `renewal.b`, `renewal.y`, ...) are in units of the
//! increment standard deviation; drifts are tilt parameters θ. Unknown keys,
//! duplicate keys and malformed values are errors carrying the line number.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expfam::TiltedFamily;
use crate::ladder::{BudgetPolicy, SimBudget};
use crate::quadrature::QuadratureConfig;

/// Minimum replicate count accepted by the verifier subcommands.
pub const MIN_VERIFIER_REPLICATES: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilySpec {
    Gaussian,
    Uniform,
    PointMass { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(OutputFormat::Csv),
            "json" => Some(OutputFormat::Json),
            "both" => Some(OutputFormat::Both),
            _ => None,
        }
    }

    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub theta_max: Option<f64>,
    pub theta_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    pub k_list: Vec<u32>,
    pub n_replicates: u64,
    pub master_seed: u64,
    pub max_steps: u64,
    pub policy: BudgetPolicy,
    pub quadrature: QuadratureConfig,
    /// Levels for the empirical rate fit.
    pub rate_fit_b_grid: Vec<f64>,
    /// `(C, r)` overrides; when both are set no fit is run.
    pub rate_c: Option<f64>,
    pub rate_r: Option<f64>,
    /// Levels for the transport sweep; defaults to `b_grid`.
    pub transport_b_grid: Vec<f64>,
    /// Point-mass values for the deterministic counterexample.
    pub counterexample_c: Vec<f64>,
    /// Tilts for the uniform counterexample.
    pub counterexample_theta_grid: Vec<f64>,
    pub renewal_b: f64,
    pub renewal_y: f64,
    pub renewal_paths: u64,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    /// First 16 hex digits of the SHA-256 of the config text.
    pub hash: String,
}

const KEYS: &[&str] = &[
    "family",
    "family.c",
    "family.theta_max",
    "theta_grid",
    "b_grid",
    "k_list",
    "n_replicates",
    "master_seed",
    "budget.max_steps",
    "budget.policy",
    "quadrature.abs_tol",
    "quadrature.rel_tol",
    "quadrature.max_subdivisions",
    "quadrature.truncation_radius",
    "rate_fit.b_grid",
    "rate_fit.c",
    "rate_fit.r",
    "transport.b_grid",
    "counterexample.c",
    "counterexample.theta_grid",
    "renewal.b",
    "renewal.y",
    "renewal.paths",
    "output.dir",
    "output.format",
];

struct Entry {
    line: usize,
    value: String,
}

struct Fields {
    map: BTreeMap<String, Entry>,
    last_line: usize,
}

fn cfg_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

impl Fields {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| cfg_err(line, "", "expected `key = value`"))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(cfg_err(line, key, "unknown key"));
            }
            if let Some(prev) = map.get(key) {
                let prev: &Entry = prev;
                return Err(cfg_err(
                    line,
                    key,
                    format!("duplicate key, first set on line {}", prev.line),
                ));
            }
            map.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.trim().to_string(),
                },
            );
        }
        Ok(Fields { map, last_line })
    }

    fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map_or(self.last_line, |e| e.line)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| cfg_err(e.line, key, format!("cannot parse `{}`", e.value))),
        }
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| cfg_err(self.last_line, key, "required key is missing"))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(e) = self.map.get(key) else {
            return Ok(None);
        };
        let items: Vec<&str> = e
            .value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            return Err(cfg_err(e.line, key, "grid is empty"));
        }
        items
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| cfg_err(e.line, key, format!("cannot parse list item `{s}`")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn grid(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.list::<f64>(key)? else {
            return Ok(None);
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(cfg_err(self.line_of(key), key, "grid values must be finite"));
        }
        Ok(Some(v))
    }
}

fn check_nonnegative(fields: &Fields, key: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|&x| x < 0.0) {
        return Err(cfg_err(fields.line_of(key), key, "values must be >= 0"));
    }
    Ok(())
}

fn check_ascending_positive(fields: &Fields, key: &str, v: &[f64]) -> Result<()> {
    if v[0] <= 0.0 || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(cfg_err(
            fields.line_of(key),
            key,
            "values must be positive and strictly ascending",
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let f = Fields::parse(text)?;
        let family_name: String = f.required("family")?;
        let family = match family_name.as_str() {
            "gaussian" => FamilySpec::Gaussian,
            "uniform" => FamilySpec::Uniform,
            "point_mass" => {
                let c: f64 = f.required("family.c")?;
                if !(c.is_finite() && c > 0.0) {
                    return Err(cfg_err(f.line_of("family.c"), "family.c", "must be > 0"));
                }
                FamilySpec::PointMass { c }
            }
            other => {
                return Err(cfg_err(
                    f.line_of("family"),
                    "family",
                    format!("unknown family `{other}`"),
                ))
            }
        };
        if family_name != "point_mass" && f.map.contains_key("family.c") {
            return Err(cfg_err(
                f.line_of("family.c"),
                "family.c",
                "only valid for point_mass",
            ));
        }

        let theta_grid = f
            .grid("theta_grid")?
            .ok_or_else(|| cfg_err(f.last_line, "theta_grid", "required key is missing"))?;
        check_ascending_positive(&f, "theta_grid", &theta_grid)?;
        let b_grid = f
            .grid("b_grid")?
            .ok_or_else(|| cfg_err(f.last_line, "b_grid", "required key is missing"))?;
        check_nonnegative(&f, "b_grid", &b_grid)?;
        let k_list: Vec<u32> = f.list("k_list")?.unwrap_or_else(|| vec![1, 2]);
        if k_list.contains(&0) {
            return Err(cfg_err(f.line_of("k_list"), "k_list", "k must be >= 1"));
        }

        let n_replicates: u64 = f.get("n_replicates")?.unwrap_or(100_000);
        if n_replicates == 0 {
            return Err(cfg_err(f.line_of("n_replicates"), "n_replicates", "must be >= 1"));
        }
        let master_seed: u64 = f.required("master_seed")?;

        let max_steps: u64 = f.get("budget.max_steps")?.unwrap_or(10_000_000);
        let policy = match f.get::<String>("budget.policy")?.as_deref() {
            None | Some("error") => BudgetPolicy::Error,
            Some("censor") => BudgetPolicy::Censor,
            Some(other) => {
                return Err(cfg_err(
                    f.line_of("budget.policy"),
                    "budget.policy",
                    format!("expected `error` or `censor`, got `{other}`"),
                ))
            }
        };
        SimBudget::new(max_steps, policy)
            .map_err(|e| cfg_err(f.line_of("budget.max_steps"), "budget.max_steps", e.to_string()))?;

        let defaults = QuadratureConfig::default();
        let quadrature = QuadratureConfig {
            abs_tol: f.get("quadrature.abs_tol")?.unwrap_or(defaults.abs_tol),
            rel_tol: f.get("quadrature.rel_tol")?.unwrap_or(defaults.rel_tol),
            max_subdivisions: f
                .get("quadrature.max_subdivisions")?
                .unwrap_or(defaults.max_subdivisions),
            truncation_radius: f
                .get("quadrature.truncation_radius")?
                .unwrap_or(defaults.truncation_radius),
        };
        quadrature
            .validate()
            .map_err(|e| cfg_err(f.line_of("quadrature.abs_tol"), "quadrature", e.to_string()))?;

        let rate_fit_b_grid = f
            .grid("rate_fit.b_grid")?
            .unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        check_nonnegative(&f, "rate_fit.b_grid", &rate_fit_b_grid)?;
        let rate_c: Option<f64> = f.get("rate_fit.c")?;
        let rate_r: Option<f64> = f.get("rate_fit.r")?;
        for (key, v) in [("rate_fit.c", rate_c), ("rate_fit.r", rate_r)] {
            if v.is_some_and(|x| !(x.is_finite() && x > 0.0)) {
                return Err(cfg_err(f.line_of(key), key, "must be > 0"));
            }
        }
        if rate_c.is_some() != rate_r.is_some() {
            return Err(cfg_err(
                f.line_of("rate_fit.c").max(f.line_of("rate_fit.r")),
                "rate_fit",
                "rate_fit.c and rate_fit.r must be given together",
            ));
        }
        let transport_b_grid = f.grid("transport.b_grid")?.unwrap_or_else(|| b_grid.clone());
        check_nonnegative(&f, "transport.b_grid", &transport_b_grid)?;
        let counterexample_c = f.grid("counterexample.c")?.unwrap_or_else(|| vec![1.0]);
        if counterexample_c.iter().any(|&c| c <= 0.0) {
            return Err(cfg_err(
                f.line_of("counterexample.c"),
                "counterexample.c",
                "values must be > 0",
            ));
        }
        let counterexample_theta_grid = f
            .grid("counterexample.theta_grid")?
            .unwrap_or_else(|| vec![1.0, 5.0, 25.0]);
        check_ascending_positive(&f, "counterexample.theta_grid", &counterexample_theta_grid)?;

        let renewal_b: f64 = f.get("renewal.b")?.unwrap_or(8.0);
        let renewal_y: f64 = f.get("renewal.y")?.unwrap_or(0.5);
        if !(renewal_b > 0.0 && renewal_y >= 0.0) {
            return Err(cfg_err(
                f.line_of("renewal.b"),
                "renewal",
                "need renewal.b > 0 and renewal.y >= 0",
            ));
        }
        let renewal_paths: u64 = f.get("renewal.paths")?.unwrap_or(n_replicates);

        let out_dir = PathBuf::from(f.get::<String>("output.dir")?.unwrap_or_else(|| "out".into()));
        let format = match f.get::<String>("output.format")? {
            None => OutputFormat::Both,
            Some(s) => OutputFormat::parse(&s).ok_or_else(|| {
                cfg_err(
                    f.line_of("output.format"),
                    "output.format",
                    "expected csv, json or both",
                )
            })?,
        };

        let theta_max: Option<f64> = f.get("family.theta_max")?;
        let cfg = ExperimentConfig {
            family,
            theta_max,
            theta_grid,
            b_grid,
            k_list,
            n_replicates,
            master_seed,
            max_steps,
            policy,
            quadrature,
            rate_fit_b_grid,
            rate_c,
            rate_r,
            transport_b_grid,
            counterexample_c,
            counterexample_theta_grid,
            renewal_b,
            renewal_y,
            renewal_paths,
            out_dir,
            format,
            hash: hash_text(text),
        };
        // surfaces θ range and quadrature problems at parse time
        let fam = cfg
            .family()
            .map_err(|e| cfg_err(f.line_of("family"), "family", e.to_string()))?;
        for &theta in &cfg.theta_grid {
            fam.check_theta(theta)
                .map_err(|e| cfg_err(f.line_of("theta_grid"), "theta_grid", e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text)
    }

    pub fn family(&self) -> Result<TiltedFamily> {
        let fam = match self.family {
            FamilySpec::Gaussian => TiltedFamily::gaussian(),
            FamilySpec::Uniform => TiltedFamily::uniform(),
            FamilySpec::PointMass { c } => TiltedFamily::point_mass(c)?,
        };
        let fam = fam.with_quadrature(self.quadrature)?;
        match self.theta_max {
            Some(t) => fam.with_theta_max(t),
            None => Ok(fam),
        }
    }

    pub fn budget(&self) -> SimBudget {
        SimBudget::new(self.max_steps, self.policy).expect("validated at parse time")
    }

    /// Verifier subcommands refuse tiny replicate counts.
    pub fn require_verifier_replicates(&self) -> Result<()> {
        if self.n_replicates < MIN_VERIFIER_REPLICATES {
            return Err(cfg_err(
                0,
                "n_replicates",
                format!(
                    "verifiers need at least {MIN_VERIFIER_REPLICATES} replicates, got {}",
                    self.n_replicates
                ),
            ));
        }
        Ok(())
    }
}

pub fn hash_text(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
