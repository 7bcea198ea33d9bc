//! Standard exponential families `F_θ(dx) = exp(θx − ψ(θ)) F₀(dx)` over a
//! fixed base measure.
//!
//! Three bases ship: the uniform law on `[−√3, √3]`, the standard Gaussian
//! and a point mass. The first two are standardised (mean 0, variance 1) and
//! absolutely continuous, hence strongly non-lattice. The point mass is
//! neither; it exists only for the deterministic counterexample and for
//! exact renewal checks, and is flagged non-standard.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
pub use crate::quadrature::QuadratureConfig;
use crate::quadrature::integrate;

pub const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Smallest truncation radius accepted for the Gaussian base.
pub const MIN_GAUSSIAN_RADIUS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseKind {
    UniformSymmetric { half_width: f64 },
    StandardGaussian,
    PointMass { c: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseMeasure {
    kind: BaseKind,
    description: String,
    standard: bool,
}

impl BaseMeasure {
    /// Uniform law on `[−a, a]`. Only `a = √3` is standardised; any other
    /// half-width must be requested with `unstandardised = true`.
    pub fn uniform_symmetric(half_width: f64, unstandardised: bool) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidBase(format!(
                "uniform half-width must be positive, got {half_width}"
            )));
        }
        let standard = (half_width - SQRT_3).abs() <= 1e-12;
        if !standard && !unstandardised {
            return Err(Error::InvalidBase(format!(
                "uniform half-width {half_width} violates Var0(X) = 1 (needs sqrt(3)); \
                 pass the unstandardised flag to allow it"
            )));
        }
        Ok(BaseMeasure {
            kind: BaseKind::UniformSymmetric {
                half_width: if standard { SQRT_3 } else { half_width },
            },
            description: format!("Uniform[-{half_width}, {half_width}]"),
            standard,
        })
    }

    pub fn standard_uniform() -> Self {
        BaseMeasure::uniform_symmetric(SQRT_3, false).expect("sqrt(3) is standard")
    }

    pub fn standard_gaussian() -> Self {
        BaseMeasure {
            kind: BaseKind::StandardGaussian,
            description: "N(0, 1)".to_string(),
            standard: true,
        }
    }

    /// Degenerate law at `c > 0`. Non-standard.
    pub fn point_mass(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidBase(format!(
                "point mass location must be positive, got {c}"
            )));
        }
        Ok(BaseMeasure {
            kind: BaseKind::PointMass { c },
            description: format!("delta({c})"),
            standard: false,
        })
    }

    pub fn kind(&self) -> BaseKind {
        self.kind
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// True when `E₀[X] = 0`, `Var₀(X) = 1` and the law is non-lattice.
    pub fn is_standard(&self) -> bool {
        self.standard
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self.kind, BaseKind::PointMass { .. })
    }

    fn default_theta_max(&self) -> f64 {
        match self.kind {
            BaseKind::StandardGaussian => 5.0,
            BaseKind::UniformSymmetric { .. } | BaseKind::PointMass { .. } => 50.0,
        }
    }
}

/// An exponential family over a base measure, restricted to `θ ∈ [0, theta_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedFamily {
    base: BaseMeasure,
    theta_max: f64,
    quadrature: QuadratureConfig,
}

impl TiltedFamily {
    pub fn new(base: BaseMeasure) -> Self {
        let theta_max = base.default_theta_max();
        let quadrature = QuadratureConfig {
            truncation_radius: MIN_GAUSSIAN_RADIUS,
            ..QuadratureConfig::default()
        };
        TiltedFamily {
            base,
            theta_max,
            quadrature,
        }
    }

    pub fn gaussian() -> Self {
        TiltedFamily::new(BaseMeasure::standard_gaussian())
    }

    pub fn uniform() -> Self {
        TiltedFamily::new(BaseMeasure::standard_uniform())
    }

    pub fn point_mass(c: f64) -> Result<Self> {
        Ok(TiltedFamily::new(BaseMeasure::point_mass(c)?))
    }

    pub fn with_theta_max(mut self, theta_max: f64) -> Result<Self> {
        if !(theta_max > 0.0 && theta_max.is_finite()) {
            return Err(Error::invalid(format!(
                "theta_max must be positive and finite, got {theta_max}"
            )));
        }
        if let BaseKind::UniformSymmetric { half_width } = self.base.kind {
            // exp(2aθ) must stay representable in the sampler and moments
            if 2.0 * half_width * theta_max > 700.0 {
                return Err(Error::invalid(format!(
                    "theta_max {theta_max} overflows the uniform tilt"
                )));
            }
        }
        self.theta_max = theta_max;
        Ok(self)
    }

    pub fn with_quadrature(mut self, quadrature: QuadratureConfig) -> Result<Self> {
        quadrature.validate()?;
        if matches!(self.base.kind, BaseKind::StandardGaussian)
            && quadrature.truncation_radius < MIN_GAUSSIAN_RADIUS
        {
            return Err(Error::invalid(format!(
                "Gaussian truncation radius must be at least {MIN_GAUSSIAN_RADIUS}, got {}",
                quadrature.truncation_radius
            )));
        }
        self.quadrature = quadrature;
        Ok(self)
    }

    pub fn base(&self) -> &BaseMeasure {
        &self.base
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quadrature
    }

    pub fn check_theta(&self, theta: f64) -> Result<()> {
        if theta >= 0.0 && theta <= self.theta_max {
            Ok(())
        } else {
            Err(Error::ThetaOutOfRange {
                theta,
                theta_max: self.theta_max,
            })
        }
    }

    /// ψ(θ) = ln ∫ e^{θx} F₀(dx).
    pub fn log_mgf(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.psi(theta))
    }

    // closed forms, valid for any real θ
    fn psi(&self, theta: f64) -> f64 {
        match self.base.kind {
            BaseKind::StandardGaussian => 0.5 * theta * theta,
            BaseKind::PointMass { c } => theta * c,
            BaseKind::UniformSymmetric { half_width: a } => {
                let z = (a * theta).abs();
                if z < 1e-2 {
                    let z2 = z * z;
                    z2 / 6.0 - z2 * z2 / 180.0 + z2 * z2 * z2 / 2835.0
                } else {
                    // ln(sinh z / z) without overflow
                    z + (-(-2.0 * z).exp()).ln_1p() - (2.0 * z).ln()
                }
            }
        }
    }

    /// ψ(θ) by direct quadrature of the normaliser.
    pub fn log_mgf_quadrature(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        let cfg = &self.quadrature;
        let value = match self.base.kind {
            BaseKind::PointMass { c } => return Ok(theta * c),
            BaseKind::StandardGaussian => {
                let r = cfg.truncation_radius;
                integrate(
                    |x| (theta * x - 0.5 * x * x).exp() / (2.0 * PI).sqrt(),
                    theta - r,
                    theta + r,
                    cfg,
                )?
                .value
            }
            BaseKind::UniformSymmetric { half_width: a } => {
                // factor out e^{aθ} to keep the integrand bounded by 1
                let inner = integrate(|x| (theta * (x - a)).exp(), -a, a, cfg)?.value;
                return Ok(theta * a + (inner / (2.0 * a)).ln());
            }
        };
        Ok(value.ln())
    }

    /// μ_θ = ψ′(θ), the drift of the walk.
    pub fn mean(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(match self.base.kind {
            BaseKind::StandardGaussian => theta,
            BaseKind::PointMass { c } => c,
            BaseKind::UniformSymmetric { half_width: a } => {
                let z = a * theta;
                if z < 1e-2 {
                    let a2 = a * a;
                    a2 * theta / 3.0 - a2 * a2 * theta.powi(3) / 45.0
                        + 2.0 * a2 * a2 * a2 * theta.powi(5) / 945.0
                } else {
                    a / z.tanh() - 1.0 / theta
                }
            }
        })
    }

    /// ψ′(θ) by a central finite difference of the closed-form ψ with step
    /// `max(1e-6, 1e-6·θ)`.
    pub fn mean_finite_difference(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        let h = (1e-6f64).max(1e-6 * theta);
        Ok((self.psi(theta + h) - self.psi(theta - h)) / (2.0 * h))
    }

    /// μ_θ = ∫ x e^{θx−ψ(θ)} F₀(dx) by quadrature.
    pub fn mean_quadrature(&self, theta: f64) -> Result<f64> {
        self.tilted_expectation(theta, |x| x)
    }

    /// ψ″(θ) = Var_θ(X).
    pub fn variance(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(match self.base.kind {
            BaseKind::StandardGaussian => 1.0,
            BaseKind::PointMass { .. } => 0.0,
            BaseKind::UniformSymmetric { half_width: a } => {
                let z = a * theta;
                if z < 1e-2 {
                    let a2 = a * a;
                    a2 / 3.0 - a2 * a2 * theta * theta / 15.0
                } else {
                    1.0 / (theta * theta) - (a / z.sinh()).powi(2)
                }
            }
        })
    }

    /// E_θ[(X⁺)^m].
    pub fn plus_moment(&self, theta: f64, m: u32) -> Result<f64> {
        self.check_theta(theta)?;
        if m == 0 {
            return Err(Error::invalid("plus_moment order must be at least 1"));
        }
        match self.base.kind {
            BaseKind::PointMass { c } => Ok(c.powi(m as i32)),
            _ => self.integrate_tilted(theta, 0.0, |x| x.powi(m as i32)),
        }
    }

    /// E_θ[g(X)] by quadrature against the tilted density.
    pub fn tilted_expectation<G: Fn(f64) -> f64>(&self, theta: f64, g: G) -> Result<f64> {
        self.check_theta(theta)?;
        match self.base.kind {
            BaseKind::PointMass { c } => Ok(g(c)),
            _ => self.integrate_tilted(theta, f64::NEG_INFINITY, g),
        }
    }

    // ∫_{[lower, ∞)} g(x) e^{θx−ψ(θ)} F₀(dx) for the continuous bases
    fn integrate_tilted<G: Fn(f64) -> f64>(&self, theta: f64, lower: f64, g: G) -> Result<f64> {
        let psi = self.psi(theta);
        let cfg = &self.quadrature;
        match self.base.kind {
            BaseKind::StandardGaussian => {
                let r = cfg.truncation_radius;
                let norm = 1.0 / (SQRT_2 * PI.sqrt());
                let lo = lower.max(theta - r);
                let hi = theta + r;
                if lo >= hi {
                    return Ok(0.0);
                }
                Ok(integrate(
                    |x| g(x) * (theta * x - psi - 0.5 * x * x).exp() * norm,
                    lo,
                    hi,
                    cfg,
                )?
                .value)
            }
            BaseKind::UniformSymmetric { half_width: a } => {
                let lo = lower.max(-a);
                if lo >= a {
                    return Ok(0.0);
                }
                let density = 0.5 / a;
                Ok(integrate(|x| g(x) * (theta * x - psi).exp() * density, lo, a, cfg)?.value)
            }
            BaseKind::PointMass { c } => Ok(if c >= lower { g(c) } else { 0.0 }),
        }
    }

    /// A sampler with the tilt constants precomputed.
    pub fn sampler(&self, theta: f64) -> Result<TiltedSampler> {
        self.check_theta(theta)?;
        Ok(match self.base.kind {
            BaseKind::StandardGaussian => TiltedSampler::Gaussian { mean: theta },
            BaseKind::PointMass { c } => TiltedSampler::Constant { c },
            BaseKind::UniformSymmetric { half_width: a } => {
                if theta == 0.0 {
                    TiltedSampler::Uniform { a }
                } else {
                    TiltedSampler::TiltedUniform {
                        a,
                        theta,
                        floor: (-2.0 * a * theta).exp(),
                    }
                }
            }
        })
    }

    /// One draw from `F_θ`.
    pub fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> Result<f64> {
        Ok(self.sampler(theta)?.sample(rng))
    }
}

/// Draws from a fixed member `F_θ` of a family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TiltedSampler {
    Gaussian { mean: f64 },
    Constant { c: f64 },
    Uniform { a: f64 },
    /// Inverse CDF `x = a + ln(e^{−2aθ} + u(1 − e^{−2aθ}))/θ`, an
    /// overflow-free rewrite of `(1/θ)·ln(e^{−aθ} + u(e^{aθ} − e^{−aθ}))`.
    TiltedUniform { a: f64, theta: f64, floor: f64 },
}

impl TiltedSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            TiltedSampler::Gaussian { mean } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + z
            }
            TiltedSampler::Constant { c } => c,
            TiltedSampler::Uniform { a } => a * (2.0 * rng.random::<f64>() - 1.0),
            TiltedSampler::TiltedUniform { a, theta, floor } => {
                let u: f64 = rng.random();
                let x = a + (floor + u * (1.0 - floor)).ln() / theta;
                x.clamp(-a, a)
            }
        }
    }

    /// Upper end of the support, if bounded.
    pub fn support_max(&self) -> Option<f64> {
        match *self {
            TiltedSampler::Gaussian { .. } => None,
            TiltedSampler::Constant { c } => Some(c),
            TiltedSampler::Uniform { a } | TiltedSampler::TiltedUniform { a, .. } => Some(a),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use crate::stats::Estimate;

    // composite Simpson, independent of the adaptive Gauss–Kronrod path
    fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
        let n = if n % 2 == 1 { n + 1 } else { n };
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    fn gauss_pdf(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn log_mgf_at_zero_is_zero() {
        assert_eq!(TiltedFamily::gaussian().log_mgf(0.0).unwrap(), 0.0);
        assert_eq!(TiltedFamily::uniform().log_mgf(0.0).unwrap(), 0.0);
        assert_eq!(TiltedFamily::gaussian().mean(0.0).unwrap(), 0.0);
        assert_eq!(TiltedFamily::uniform().mean(0.0).unwrap(), 0.0);
    }

    #[test]
    fn log_mgf_gaussian_matches_quadrature_oracle() {
        let fam = TiltedFamily::gaussian();
        let oracle = simpson(|x| (0.5 * x).exp() * gauss_pdf(x), -15.0, 15.0, 20_000).ln();
        assert!((oracle - 0.125).abs() < 1e-10);
        assert!((fam.log_mgf(0.5).unwrap() - oracle).abs() < 1e-10);
        assert!((fam.log_mgf_quadrature(0.5).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn log_mgf_uniform_matches_quadrature_oracle() {
        let fam = TiltedFamily::uniform();
        let a = SQRT_3;
        let oracle = (simpson(|x| x.exp(), -a, a, 20_000) / (2.0 * a)).ln();
        assert!((oracle - 0.457796).abs() < 1e-6);
        assert!((fam.log_mgf(1.0).unwrap() - oracle).abs() < 1e-11);
        assert!((fam.log_mgf_quadrature(1.0).unwrap() - oracle).abs() < 1e-11);
    }

    #[test]
    fn log_mgf_series_branch_is_continuous() {
        let fam = TiltedFamily::uniform();
        let z = 1e-2 / SQRT_3;
        // closed form just above the switch against the series there
        let theta = z * (1.0 + 1e-9);
        let x = SQRT_3 * theta;
        let series = x * x / 6.0 - x.powi(4) / 180.0 + x.powi(6) / 2835.0;
        let above = fam.log_mgf(theta).unwrap();
        assert!((series - above).abs() < 1e-14, "{series} vs {above}");
        let mean_series = SQRT_3 * (x / 3.0 - x.powi(3) / 45.0 + 2.0 * x.powi(5) / 945.0);
        let ma = fam.mean(theta).unwrap();
        assert!((mean_series - ma).abs() < 1e-11, "{mean_series} vs {ma}");
    }

    #[test]
    fn theta_range_is_enforced() {
        let fam = TiltedFamily::gaussian();
        assert!(matches!(fam.log_mgf(-0.1), Err(Error::ThetaOutOfRange { .. })));
        assert!(matches!(fam.mean(5.5), Err(Error::ThetaOutOfRange { .. })));
        assert!(matches!(fam.plus_moment(6.0, 2), Err(Error::ThetaOutOfRange { .. })));
        let mut rng = StreamKey::new(1).stream(0);
        assert!(fam.sample(-1.0, &mut rng).is_err());
    }

    #[test]
    fn mean_gaussian_matches_quadrature_oracle() {
        let fam = TiltedFamily::gaussian();
        let oracle = simpson(
            |x| x * (0.3 * x - 0.045).exp() * gauss_pdf(x),
            -15.0,
            15.0,
            20_000,
        );
        assert!((fam.mean(0.3).unwrap() - oracle).abs() < 1e-10);
        assert!((oracle - 0.3).abs() < 1e-10);
    }

    #[test]
    fn uniform_mean_tends_to_half_width() {
        let fam = TiltedFamily::uniform();
        let mu = fam.mean(50.0).unwrap();
        assert!((mu - SQRT_3).abs() < 0.03, "mu_50 = {mu}");
        assert!(mu < SQRT_3);
    }

    #[test]
    fn finite_difference_and_quadrature_means_agree() {
        for fam in [TiltedFamily::gaussian(), TiltedFamily::uniform()] {
            for theta in [0.1, 0.5, 1.0] {
                let closed = fam.mean(theta).unwrap();
                let fd = fam.mean_finite_difference(theta).unwrap();
                let quad = fam.mean_quadrature(theta).unwrap();
                assert!((closed - fd).abs() < 1e-5, "{theta}: {closed} vs fd {fd}");
                assert!((closed - quad).abs() < 1e-9, "{theta}: {closed} vs quad {quad}");
            }
        }
    }

    #[test]
    fn variance_matches_second_difference() {
        let fam = TiltedFamily::uniform();
        for theta in [0.001, 0.2, 1.0, 10.0] {
            let h = 1e-4;
            let fd = (fam.psi(theta + h) - 2.0 * fam.psi(theta) + fam.psi(theta - h)) / (h * h);
            let v = fam.variance(theta).unwrap();
            assert!((fd - v).abs() < 1e-5, "theta {theta}: {v} vs {fd}");
        }
        assert!((fam.variance(0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn plus_moments_at_zero_tilt() {
        let g = TiltedFamily::gaussian();
        assert!((g.plus_moment(0.0, 2).unwrap() - 0.5).abs() < 1e-11);
        let u = TiltedFamily::uniform();
        let a = SQRT_3;
        let oracle = simpson(|x| x * x / (2.0 * a), 0.0, a, 1000);
        assert!((oracle - 0.5).abs() < 1e-12);
        assert!((u.plus_moment(0.0, 2).unwrap() - oracle).abs() < 1e-11);
        let p = TiltedFamily::point_mass(1.0).unwrap();
        assert_eq!(p.plus_moment(3.7, 3).unwrap(), 1.0);
        assert!(g.plus_moment(0.1, 0).is_err());
    }

    #[test]
    fn plus_moment_heavy_tilt_matches_simpson() {
        let u = TiltedFamily::uniform();
        let a = SQRT_3;
        let theta = 25.0;
        let psi = u.log_mgf(theta).unwrap();
        let oracle = simpson(
            |x| x.powi(3) * (theta * x - psi).exp() / (2.0 * a),
            0.0,
            a,
            200_000,
        );
        let got = u.plus_moment(theta, 3).unwrap();
        assert!((got - oracle).abs() < 1e-9 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn exponential_identity_from_ladder_tail_argument() {
        // E_θ[e^{−θX}] = e^{−ψ(θ)}
        for fam in [TiltedFamily::gaussian(), TiltedFamily::uniform()] {
            for theta in [0.1, 0.5, 2.0] {
                let lhs = fam.tilted_expectation(theta, |x| (-theta * x).exp()).unwrap();
                let rhs = (-fam.log_mgf(theta).unwrap()).exp();
                assert!((lhs - rhs).abs() <= 1e-9 * rhs, "{theta}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn base_constructors_validate() {
        assert!(BaseMeasure::uniform_symmetric(1.0, false).is_err());
        let loose = BaseMeasure::uniform_symmetric(1.0, true).unwrap();
        assert!(!loose.is_standard());
        assert!(BaseMeasure::standard_uniform().is_standard());
        assert!(BaseMeasure::point_mass(0.0).is_err());
        assert!(!BaseMeasure::point_mass(2.0).unwrap().is_standard());
        let cfg = QuadratureConfig {
            truncation_radius: 8.0,
            ..QuadratureConfig::default()
        };
        assert!(TiltedFamily::gaussian().with_quadrature(cfg).is_err());
        assert!(TiltedFamily::uniform().with_quadrature(cfg).is_ok());
        assert!(TiltedFamily::uniform().with_theta_max(500.0).is_err());
    }

    #[test]
    fn point_mass_sampler_is_constant() {
        let fam = TiltedFamily::point_mass(2.0).unwrap();
        let mut rng = StreamKey::new(9).stream(0);
        for _ in 0..100 {
            assert_eq!(fam.sample(0.0, &mut rng).unwrap(), 2.0);
        }
    }

    #[test]
    fn tilted_uniform_sample_mean() {
        let fam = TiltedFamily::uniform();
        let sampler = fam.sampler(1.0).unwrap();
        let mut rng = StreamKey::new(11).stream(0);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        assert!(xs.iter().all(|x| x.abs() <= SQRT_3));
        let est = Estimate::of_mean(&xs);
        let sd = fam.variance(1.0).unwrap().sqrt();
        let mu = fam.mean(1.0).unwrap();
        assert!((est.value - mu).abs() <= 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn tilted_gaussian_sample_plus_moment() {
        let fam = TiltedFamily::gaussian();
        let sampler = fam.sampler(0.5).unwrap();
        let mut rng = StreamKey::new(12).stream(0);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| sampler.sample(&mut rng).max(0.0).powi(2))
            .collect();
        let est = Estimate::of_mean(&xs);
        let target = fam.plus_moment(0.5, 2).unwrap();
        assert!((est.value - target).abs() <= 3.0 * est.se);
    }
}
