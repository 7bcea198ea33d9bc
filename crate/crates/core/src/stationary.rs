//! The limiting overshoot R_∞, the ladder-height renewal function U⁺ and the
//! renewal equation for the overshoot tail.
//!
//! R_∞ is realised from a simulated population of first ladder heights: draw
//! a height size-biased (probability proportional to its value) and multiply
//! by an independent uniform. Its k-th moment is then
//! `E[H^{k+1}] / ((k+1) E[H])`, the limit of `E[R_b^k]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::expfam::TiltedFamily;
use crate::ladder::{ladder_batch, overshoot_batch, LadderBatch, SimBudget};
use crate::rng::StreamKey;
use crate::stats::{mean, pairwise_sum, Estimate, CI_SIGMAS};

/// Minimum population size for moment and stationary-law estimates.
pub const MIN_POPULATION: usize = 100;

/// An immutable sample of first ladder epochs and heights.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderPopulation {
    heights: Vec<f64>,
    t_plus: Vec<u64>,
    theta: f64,
    censored: u64,
}

impl LadderPopulation {
    pub fn new(heights: Vec<f64>, t_plus: Vec<u64>, theta: f64, censored: u64) -> Result<Self> {
        if heights.is_empty() {
            return Err(Error::InsufficientSamples {
                required: 1,
                available: 0,
            });
        }
        if heights.len() != t_plus.len() {
            return Err(Error::invalid("heights and T+ values differ in length"));
        }
        if let Some(h) = heights.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::invalid(format!("ladder height must be positive, got {h}")));
        }
        if t_plus.contains(&0) {
            return Err(Error::invalid("ladder epoch T+ must be at least 1"));
        }
        Ok(LadderPopulation {
            heights,
            t_plus,
            theta,
            censored,
        })
    }

    /// A population where every ladder step has the same height, epoch 1.
    pub fn constant(height: f64, n: usize) -> Result<Self> {
        LadderPopulation::new(vec![height; n], vec![1; n], 0.0, 0)
    }

    pub fn from_batch(batch: LadderBatch) -> Result<Self> {
        let (heights, t_plus) = batch.samples.iter().map(|s| (s.height, s.t_plus)).unzip();
        LadderPopulation::new(heights, t_plus, batch.theta, batch.censored)
    }

    pub fn simulate(
        family: &TiltedFamily,
        theta: f64,
        n: u64,
        key: &StreamKey,
        budget: &SimBudget,
        exec: Exec,
    ) -> Result<Self> {
        LadderPopulation::from_batch(ladder_batch(family, theta, n, key, budget, exec)?)
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn t_plus(&self) -> &[u64] {
        &self.t_plus
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn censored(&self) -> u64 {
        self.censored
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    fn require(&self, required: usize) -> Result<()> {
        if self.len() < required {
            Err(Error::InsufficientSamples {
                required,
                available: self.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Writes one `height t_plus` pair per line, after a short `#` header.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.len() * 32);
        out.push_str("# ladder population: height t_plus\n");
        out.push_str(&format!("# theta = {:.16e}\n", self.theta));
        out.push_str(&format!("# censored = {}\n", self.censored));
        for (h, t) in self.heights.iter().zip(&self.t_plus) {
            out.push_str(&format!("{h:.16e} {t}\n"));
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut theta = 0.0;
        let mut censored = 0;
        let mut heights = Vec::new();
        let mut t_plus = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    match k.trim() {
                        "theta" => {
                            theta = v.trim().parse().map_err(|e| parse_err(i + 1, format!("{e}")))?
                        }
                        "censored" => {
                            censored =
                                v.trim().parse().map_err(|e| parse_err(i + 1, format!("{e}")))?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(h), Some(t), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(i + 1, "expected `height t_plus`".to_string()));
            };
            heights.push(h.parse().map_err(|e| parse_err(i + 1, format!("height: {e}")))?);
            t_plus.push(t.parse().map_err(|e| parse_err(i + 1, format!("t_plus: {e}")))?);
        }
        LadderPopulation::new(heights, t_plus, theta, censored)
    }
}

/// Ratio estimator `mean(H^{k+1}) / ((k+1) mean(H))` of `E[R_∞^k]` with a
/// delta-method standard error.
pub fn limit_moment(pop: &LadderPopulation, k: u32) -> Result<Estimate> {
    pop.require(MIN_POPULATION)?;
    if k == 0 {
        return Err(Error::invalid("moment order must be at least 1"));
    }
    ratio_moment(pop.heights(), k)
}

fn ratio_moment(heights: &[f64], k: u32) -> Result<Estimate> {
    let n = heights.len() as f64;
    let kp1 = (k + 1) as f64;
    let powered: Vec<f64> = heights.iter().map(|h| h.powi(k as i32 + 1)).collect();
    let m1 = mean(heights);
    let mk = mean(&powered);
    let value = mk / (kp1 * m1);
    // influence values of the ratio
    let g1 = 1.0 / (kp1 * m1);
    let g2 = -mk / (kp1 * m1 * m1);
    let z: Vec<f64> = powered
        .iter()
        .zip(heights)
        .map(|(p, h)| g1 * (p - mk) + g2 * (h - m1))
        .collect();
    let zz: Vec<f64> = z.iter().map(|v| v * v).collect();
    let var = pairwise_sum(&zz) / (n - 1.0).max(1.0);
    if !var.is_finite() {
        return Err(Error::invalid("moment estimate has non-finite sample variance"));
    }
    Ok(Estimate {
        value,
        se: (var / n).sqrt(),
    })
}

/// Percentile bootstrap interval for the ratio estimator, for skewed cases
/// where the delta method is doubtful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub se: f64,
}

pub fn limit_moment_bootstrap(
    pop: &LadderPopulation,
    k: u32,
    resamples: u64,
    confidence: f64,
    key: &StreamKey,
    exec: Exec,
) -> Result<BootstrapInterval> {
    let point = limit_moment(pop, k)?;
    if resamples < 10 || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid("bootstrap needs >= 10 resamples and confidence in (0,1)"));
    }
    let h = pop.heights();
    let n = h.len();
    let mut stats = exec.map_indexed(resamples, |i| {
        let mut rng = key.stream(i);
        let sample: Vec<f64> = (0..n).map(|_| h[rng.random_range(0..n)]).collect();
        let p: Vec<f64> = sample.iter().map(|x| x.powi(k as i32 + 1)).collect();
        mean(&p) / ((k + 1) as f64 * mean(&sample))
    });
    let sd = Estimate::of_mean(&stats).se * (stats.len() as f64).sqrt();
    stats.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - confidence);
    let idx = |q: f64| ((q * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1);
    Ok(BootstrapInterval {
        estimate: point.value,
        lower: stats[idx(alpha)],
        upper: stats[idx(1.0 - alpha)],
        se: sd,
    })
}

/// Size-biased ladder-height sampler realising R_∞.
#[derive(Debug, Clone)]
pub struct StationarySampler {
    heights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StationarySampler {
    pub fn new(pop: &LadderPopulation) -> Result<Self> {
        pop.require(MIN_POPULATION)?;
        let heights = pop.heights().to_vec();
        let mut acc = 0.0;
        let cumulative = heights
            .iter()
            .map(|h| {
                acc += h;
                acc
            })
            .collect();
        Ok(StationarySampler {
            heights,
            cumulative,
        })
    }

    /// Size-biased height `H*`, then `U·H*`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cumulative.last().expect("nonempty");
        let target = rng.random::<f64>() * total;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= target)
            .min(self.heights.len() - 1);
        rng.random::<f64>() * self.heights[idx]
    }

    /// `n` draws, draw `i` from `key.stream(i)`.
    pub fn sample_many(&self, n: u64, key: &StreamKey, exec: Exec) -> Vec<f64> {
        exec.map_indexed(n, |i| self.sample(&mut key.stream(i)))
    }
}

/// One draw of R_∞. Builds the sampler each call; use [`StationarySampler`]
/// for bulk draws.
pub fn sample_stationary<R: Rng + ?Sized>(pop: &LadderPopulation, rng: &mut R) -> Result<f64> {
    Ok(StationarySampler::new(pop)?.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalConfig {
    /// Last ladder index `n` included in `Σ_{n=0}^{n_max} P(H_n ≤ x)`.
    pub n_max: usize,
    /// Number of bootstrap ladder sequences.
    pub paths: u64,
    pub rel_tol: f64,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        RenewalConfig {
            n_max: 10_000,
            paths: 20_000,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalEstimate {
    pub value: f64,
    pub se: f64,
    /// Estimated `P(H_{n_max} ≤ x)`.
    pub last_term: f64,
    /// Geometric bound on the omitted terms `n > n_max`.
    pub truncation_bound: f64,
}

/// Bootstrap estimate of `U⁺(x) = Σ_{n=0}^{n_max} P(H_n ≤ x)` where `H_n`
/// sums `n` heights resampled from the population.
pub fn renewal_function(
    pop: &LadderPopulation,
    x: f64,
    cfg: &RenewalConfig,
    key: &StreamKey,
    exec: Exec,
) -> Result<RenewalEstimate> {
    if cfg.n_max < 1 || cfg.paths < 1 {
        return Err(Error::invalid("renewal function needs n_max >= 1 and paths >= 1"));
    }
    if x < 0.0 {
        return Ok(RenewalEstimate {
            value: 0.0,
            se: 0.0,
            last_term: 0.0,
            truncation_bound: 0.0,
        });
    }
    let h = pop.heights();
    let n = h.len();
    let per_path = exec.map_indexed(cfg.paths, |i| {
        let mut rng = key.stream(i);
        let mut s = 0.0;
        let mut count = 1u64; // n = 0
        for _ in 0..cfg.n_max {
            s += h[rng.random_range(0..n)];
            if s > x {
                return (count as f64, false);
            }
            count += 1;
        }
        (count as f64, true)
    });
    let counts: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let est = Estimate::of_mean(&counts);
    let last_term = per_path.iter().filter(|p| p.1).count() as f64 / cfg.paths as f64;
    if last_term > cfg.rel_tol * est.value {
        return Err(Error::TruncationNotConverged {
            last_term,
            running_sum: est.value,
        });
    }
    let q = h.iter().filter(|&&v| v <= x).count() as f64 / n as f64;
    let truncation_bound = if last_term == 0.0 {
        0.0
    } else if q < 1.0 {
        last_term * q / (1.0 - q)
    } else {
        f64::INFINITY
    };
    Ok(RenewalEstimate {
        value: est.value,
        se: est.se,
        last_term,
        truncation_bound,
    })
}

/// Both sides of `P(R_b > y) = ∫_{[0,b]} P(S_{T₊} > b + y − t) U⁺(dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalResidual {
    pub b: f64,
    pub y: f64,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub difference: f64,
    pub combined_se: f64,
    /// Worst-case error of the midpoint rule over the renewal grid.
    pub discretisation_bound: f64,
    pub grid_step: f64,
    pub censored: u64,
}

impl RenewalResidual {
    pub fn within_noise(&self) -> bool {
        self.difference.abs() <= CI_SIGMAS * self.combined_se
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalCheckConfig {
    /// Overshoot replicates for the left side and ladder samples for the right.
    pub n: u64,
    /// Bootstrap ladder sequences for the renewal measure.
    pub paths: u64,
    /// Disjoint population blocks used to estimate the right-side error.
    pub blocks: usize,
}

impl Default for RenewalCheckConfig {
    fn default() -> Self {
        RenewalCheckConfig {
            n: 100_000,
            paths: 100_000,
            blocks: 20,
        }
    }
}

/// Grid spacing for the renewal-measure increments on `[0, b]`.
pub fn renewal_grid_step(b: f64) -> f64 {
    (0.05f64).min(b / 200.0)
}

#[allow(clippy::too_many_arguments)]
pub fn check_renewal_equation(
    family: &TiltedFamily,
    theta: f64,
    b: f64,
    y: f64,
    cfg: &RenewalCheckConfig,
    key: &StreamKey,
    budget: &SimBudget,
    exec: Exec,
) -> Result<RenewalResidual> {
    if !(b > 0.0 && y > 0.0) {
        return Err(Error::invalid("renewal check needs b > 0 and y > 0"));
    }
    if cfg.blocks < 2 || cfg.paths < cfg.blocks as u64 {
        return Err(Error::invalid("renewal check needs >= 2 blocks and paths >= blocks"));
    }
    let overshoot = overshoot_batch(family, theta, b, cfg.n, &key.experiment(1), budget, exec)?;
    let exceed: Vec<f64> = overshoot
        .samples
        .iter()
        .map(|s| if s.overshoot > y { 1.0 } else { 0.0 })
        .collect();
    if exceed.is_empty() {
        return Err(Error::InsufficientSamples {
            required: 1,
            available: 0,
        });
    }
    let p = mean(&exceed);
    let lhs = Estimate {
        value: p,
        se: (p * (1.0 - p) / exceed.len() as f64).sqrt(),
    };

    let pop = LadderPopulation::simulate(family, theta, cfg.n, &key.experiment(2), budget, exec)?;
    let step = renewal_grid_step(b);
    let full = tail_integral(pop.heights(), b, y, step, cfg.paths, &key.experiment(3), exec);

    let block_len = pop.len() / cfg.blocks;
    if block_len == 0 {
        return Err(Error::InsufficientSamples {
            required: cfg.blocks,
            available: pop.len(),
        });
    }
    let block_paths = cfg.paths / cfg.blocks as u64;
    let block_values: Vec<f64> = (0..cfg.blocks)
        .map(|g| {
            let slice = &pop.heights()[g * block_len..(g + 1) * block_len];
            let bkey = key.experiment(4).cell(g as u64);
            tail_integral(slice, b, y, step, block_paths, &bkey, exec).value
        })
        .collect();
    let spread = Estimate::of_mean(&block_values);
    let rhs = Estimate {
        value: full.value,
        se: spread.se,
    };
    Ok(RenewalResidual {
        b,
        y,
        lhs,
        rhs,
        difference: lhs.value - rhs.value,
        combined_se: lhs.se.hypot(rhs.se),
        discretisation_bound: full.discretisation_bound,
        grid_step: full.grid_step,
        censored: overshoot.censored + pop.censored(),
    })
}

struct TailIntegral {
    value: f64,
    discretisation_bound: f64,
    grid_step: f64,
}

// ∫_{[0,b]} Ḡ(b + y − t) U(dt) with U from bootstrap ladder sequences over
// `heights`, increments binned on a uniform grid and Ḡ taken at cell midpoints.
fn tail_integral(
    heights: &[f64],
    b: f64,
    y: f64,
    target_step: f64,
    paths: u64,
    key: &StreamKey,
    exec: Exec,
) -> TailIntegral {
    let mut sorted = heights.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let tail = |s: f64| (n - sorted.partition_point(|&h| h <= s)) as f64 / n as f64;

    let cells = (b / target_step).ceil().max(1.0) as usize;
    let step = b / cells as f64;
    let edge = |j: usize| if j == cells { b } else { j as f64 * step };
    let mid_tail: Vec<f64> = (0..cells)
        .map(|j| tail(b + y - 0.5 * (edge(j) + edge(j + 1))))
        .collect();
    let spread: Vec<f64> = (0..cells)
        .map(|j| tail(b + y - edge(j + 1)) - tail(b + y - edge(j)))
        .collect();
    let atom = tail(b + y);

    let per_path = exec.map_indexed(paths, |i| {
        let mut rng = key.stream(i);
        let mut s = 0.0;
        let mut value = atom;
        let mut slack = 0.0;
        loop {
            s += heights[rng.random_range(0..heights.len())];
            if s > b {
                break;
            }
            let j = ((s / step).ceil() as usize).clamp(1, cells) - 1;
            value += mid_tail[j];
            slack += spread[j];
        }
        (value, slack)
    });
    let values: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let slacks: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    TailIntegral {
        value: mean(&values),
        discretisation_bound: mean(&slacks),
        grid_step: step,
    }
}
