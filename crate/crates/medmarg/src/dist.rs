//! Conditional model families and priors over their parameter.
//!
//! A [`ConditionalFamily`] is a family of distributions for an observable
//! `X` indexed by a positive parameter `nu`, optionally carrying a
//! location `theta`. A [`PriorSpec`] is a distribution for `nu`. Both are
//! the raw ingredients the marginalization, Monte Carlo, and testing
//! modules combine.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile};

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("parameter out of domain: {0}")]
    InvalidParameter(String),
    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("operation not available for this family: {0}")]
    Unsupported(String),
}

/// Identifies one of the built-in conditional families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyId {
    /// Exponential with rate `nu`; no location parameter.
    ExponentialRate,
    /// Normal with mean `theta` and variance `nu`.
    NormalMeanVar,
    /// Normal with mean `theta` and standard deviation `nu`.
    NormalMeanSd,
}

/// How the conditional CDF at a fixed `x` behaves as a function of `nu`.
///
/// The tag drives the fast evaluation path for the median marginal: when
/// `nu -> F(x|nu)` is monotone (in either direction, possibly switching
/// direction across a known point `theta`), the pointwise median over the
/// prior is the conditional CDF at the prior median.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotonicity {
    IncreasingInNu,
    DecreasingInNu,
    /// Increasing in `nu` below `theta`, decreasing above, constant at
    /// `theta` itself.
    SignSwitchingAtTheta,
    Unknown,
}

/// Direction of `nu -> F(x|nu)` at one fixed `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NuDirection {
    Increasing,
    Decreasing,
    Constant,
    Unknown,
}

/// A conditional family `F(x | nu)` with an optional location `theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalFamily {
    id: FamilyId,
    theta: Option<f64>,
    tag: Monotonicity,
}

impl ConditionalFamily {
    /// Exponential observations with rate `nu`.
    pub fn exponential_rate() -> Self {
        ConditionalFamily {
            id: FamilyId::ExponentialRate,
            theta: None,
            tag: Monotonicity::IncreasingInNu,
        }
    }

    /// Normal observations with mean `theta` and variance `nu`.
    pub fn normal_mean_var(theta: f64) -> Self {
        ConditionalFamily {
            id: FamilyId::NormalMeanVar,
            theta: Some(theta),
            tag: Monotonicity::SignSwitchingAtTheta,
        }
    }

    /// Normal observations with mean `theta` and standard deviation `nu`.
    pub fn normal_mean_sd(theta: f64) -> Self {
        ConditionalFamily {
            id: FamilyId::NormalMeanSd,
            theta: Some(theta),
            tag: Monotonicity::SignSwitchingAtTheta,
        }
    }

    pub fn id(&self) -> FamilyId {
        self.id
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    pub fn monotonicity(&self) -> Monotonicity {
        self.tag
    }

    /// Overrides the monotonicity tag. Mainly useful to force the slow,
    /// tag-free evaluation paths in tests.
    pub fn with_monotonicity(mut self, tag: Monotonicity) -> Self {
        self.tag = tag;
        self
    }

    /// Same family relocated to `theta`. Fails for families without a
    /// location parameter.
    pub fn with_theta(mut self, theta: f64) -> Result<Self, DistError> {
        match self.id {
            FamilyId::ExponentialRate => Err(DistError::Unsupported(
                "exponential_rate has no location parameter".into(),
            )),
            FamilyId::NormalMeanVar | FamilyId::NormalMeanSd => {
                self.theta = Some(theta);
                Ok(self)
            }
        }
    }

    /// Support of the observable, as a closed-open description
    /// `(lower, upper)` with infinite endpoints allowed.
    pub fn support(&self) -> (f64, f64) {
        match self.id {
            FamilyId::ExponentialRate => (0.0, f64::INFINITY),
            FamilyId::NormalMeanVar | FamilyId::NormalMeanSd => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
        }
    }

    fn check_nu(&self, nu: f64) -> Result<(), DistError> {
        if nu.is_finite() && nu > 0.0 {
            Ok(())
        } else {
            Err(DistError::InvalidParameter(format!(
                "nu must be finite and positive, got {nu}"
            )))
        }
    }

    fn z(&self, x: f64, nu: f64) -> f64 {
        let theta = self.theta.unwrap_or(0.0);
        match self.id {
            FamilyId::NormalMeanVar => (x - theta) / nu.sqrt(),
            FamilyId::NormalMeanSd => (x - theta) / nu,
            FamilyId::ExponentialRate => unreachable!(),
        }
    }

    /// Conditional distribution function `F(x | nu)`.
    pub fn cdf(&self, x: f64, nu: f64) -> Result<f64, DistError> {
        self.check_nu(nu)?;
        Ok(match self.id {
            FamilyId::ExponentialRate => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-nu * x).exp_m1()
                }
            }
            FamilyId::NormalMeanVar | FamilyId::NormalMeanSd => std_normal_cdf(self.z(x, nu)),
        })
    }

    /// Conditional density `f(x | nu)`.
    pub fn pdf(&self, x: f64, nu: f64) -> Result<f64, DistError> {
        self.check_nu(nu)?;
        Ok(match self.id {
            FamilyId::ExponentialRate => {
                if x < 0.0 {
                    0.0
                } else {
                    nu * (-nu * x).exp()
                }
            }
            FamilyId::NormalMeanVar => {
                let sd = nu.sqrt();
                std_normal_pdf(self.z(x, nu)) / sd
            }
            FamilyId::NormalMeanSd => std_normal_pdf(self.z(x, nu)) / nu,
        })
    }

    /// Conditional quantile function.
    pub fn quantile(&self, p: f64, nu: f64) -> Result<f64, DistError> {
        self.check_nu(nu)?;
        if !(p > 0.0 && p < 1.0) {
            return Err(DistError::ProbabilityOutOfRange(p));
        }
        Ok(match self.id {
            FamilyId::ExponentialRate => -(-p).ln_1p() / nu,
            FamilyId::NormalMeanVar => {
                self.theta.unwrap_or(0.0) + nu.sqrt() * std_normal_quantile(p).unwrap()
            }
            FamilyId::NormalMeanSd => {
                self.theta.unwrap_or(0.0) + nu * std_normal_quantile(p).unwrap()
            }
        })
    }

    /// Draws one observation by inverse transform, which keeps draws
    /// reproducible across platforms for a fixed generator stream.
    pub fn sample(&self, nu: f64, rng: &mut ChaCha8Rng) -> Result<f64, DistError> {
        self.check_nu(nu)?;
        let u = draw_open_unit(rng);
        self.quantile(u, nu)
    }

    /// Direction of `nu -> F(x|nu)` at this `x`, derived from the tag.
    pub fn direction_at(&self, x: f64) -> NuDirection {
        match self.tag {
            Monotonicity::IncreasingInNu => NuDirection::Increasing,
            Monotonicity::DecreasingInNu => NuDirection::Decreasing,
            Monotonicity::SignSwitchingAtTheta => {
                let theta = self.theta.unwrap_or(0.0);
                if x > theta {
                    NuDirection::Decreasing
                } else if x < theta {
                    NuDirection::Increasing
                } else {
                    NuDirection::Constant
                }
            }
            Monotonicity::Unknown => NuDirection::Unknown,
        }
    }
}

/// Uniform draw strictly inside (0, 1).
pub(crate) fn draw_open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

type DensityFn = dyn Fn(f64) -> f64 + Send + Sync;
type QuantileFn = dyn Fn(f64) -> f64 + Send + Sync;

struct CustomPrior {
    density: Box<DensityFn>,
    quantile: Box<QuantileFn>,
    support: (f64, f64),
}

/// Identifies the shape of a [`PriorSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorId {
    UniformUnit,
    ExponentialUnit,
    PointMass,
    Custom,
}

/// A prior distribution for the family parameter `nu`.
#[derive(Clone)]
pub struct PriorSpec {
    kind: PriorKind,
}

#[derive(Clone)]
enum PriorKind {
    UniformUnit,
    ExponentialUnit,
    PointMass(f64),
    Custom(Arc<CustomPrior>),
}

impl fmt::Debug for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PriorKind::UniformUnit => write!(f, "PriorSpec::UniformUnit"),
            PriorKind::ExponentialUnit => write!(f, "PriorSpec::ExponentialUnit"),
            PriorKind::PointMass(v) => write!(f, "PriorSpec::PointMass({v})"),
            PriorKind::Custom(c) => write!(f, "PriorSpec::Custom(support={:?})", c.support),
        }
    }
}

impl PriorSpec {
    /// Uniform prior on (0, 1].
    pub fn uniform_unit() -> Self {
        PriorSpec {
            kind: PriorKind::UniformUnit,
        }
    }

    /// Standard exponential prior on (0, inf).
    pub fn exponential_unit() -> Self {
        PriorSpec {
            kind: PriorKind::ExponentialUnit,
        }
    }

    /// Degenerate prior putting all mass at `nu`.
    pub fn point_mass(nu: f64) -> Result<Self, DistError> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(DistError::InvalidParameter(format!(
                "point mass location must be finite and positive, got {nu}"
            )));
        }
        Ok(PriorSpec {
            kind: PriorKind::PointMass(nu),
        })
    }

    /// A user-supplied prior given by its density, quantile function, and
    /// support. Draws go through the quantile function, so the three
    /// pieces must describe the same distribution.
    pub fn custom(
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        quantile: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
    ) -> Self {
        PriorSpec {
            kind: PriorKind::Custom(Arc::new(CustomPrior {
                density: Box::new(density),
                quantile: Box::new(quantile),
                support,
            })),
        }
    }

    /// Prior density at `nu` (zero outside the support).
    ///
    /// # Panics
    ///
    /// Panics for a point-mass prior, which has no density. Code that
    /// integrates against the prior must branch on [`Self::as_point_mass`]
    /// first.
    pub fn density(&self, nu: f64) -> f64 {
        match &self.kind {
            PriorKind::UniformUnit => {
                if nu > 0.0 && nu <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            PriorKind::ExponentialUnit => {
                if nu > 0.0 {
                    (-nu).exp()
                } else {
                    0.0
                }
            }
            PriorKind::PointMass(_) => {
                panic!("point-mass prior has no density");
            }
            PriorKind::Custom(c) => (c.density)(nu),
        }
    }

    /// Prior quantile function.
    pub fn quantile(&self, p: f64) -> Result<f64, DistError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(DistError::ProbabilityOutOfRange(p));
        }
        Ok(match &self.kind {
            PriorKind::UniformUnit => p,
            PriorKind::ExponentialUnit => -(-p).ln_1p(),
            PriorKind::PointMass(v) => *v,
            PriorKind::Custom(c) => (c.quantile)(p),
        })
    }

    /// Prior median, the anchor of the fast median-marginal path.
    pub fn median(&self) -> f64 {
        self.quantile(0.5).expect("0.5 is a valid probability")
    }

    /// Draws `n` parameter values from a fresh generator seeded with
    /// `seed`.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<f64> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    /// Draws one value from an existing generator, by inverse transform.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match &self.kind {
            PriorKind::PointMass(v) => *v,
            _ => {
                let u = draw_open_unit(rng);
                self.quantile(u).expect("u is strictly inside (0, 1)")
            }
        }
    }

    pub fn id(&self) -> PriorId {
        match self.kind {
            PriorKind::UniformUnit => PriorId::UniformUnit,
            PriorKind::ExponentialUnit => PriorId::ExponentialUnit,
            PriorKind::PointMass(_) => PriorId::PointMass,
            PriorKind::Custom(_) => PriorId::Custom,
        }
    }

    /// Whether the prior is degenerate, and where.
    pub fn as_point_mass(&self) -> Option<f64> {
        match self.kind {
            PriorKind::PointMass(v) => Some(v),
            _ => None,
        }
    }

    /// Interval carrying all prior mass except at most `tail_mass` in
    /// each tail. Integration over the prior is truncated to this range.
    pub fn mass_interval(&self, tail_mass: f64) -> (f64, f64) {
        match &self.kind {
            PriorKind::UniformUnit => (tail_mass, 1.0),
            PriorKind::ExponentialUnit => (self.quantile(tail_mass).unwrap(), -tail_mass.ln()),
            PriorKind::PointMass(v) => (*v, *v),
            PriorKind::Custom(c) => {
                let lo = c.support.0.max((c.quantile)(tail_mass));
                let hi = c.support.1.min((c.quantile)(1.0 - tail_mass));
                (lo, hi)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const LN_2: f64 = std::f64::consts::LN_2;

    #[test]
    fn exponential_cdf_values() {
        let f = ConditionalFamily::exponential_rate();
        assert_eq!(f.cdf(-1.0, 1.0).unwrap(), 0.0);
        assert_eq!(f.cdf(0.0, 1.0).unwrap(), 0.0);
        let v = f.cdf(1.0, 1.0).unwrap();
        assert!((v - 0.63212055882855768).abs() < 1e-15);
        let v = f.cdf(2.0, 0.5).unwrap();
        assert!((v - 0.63212055882855768).abs() < 1e-15);
    }

    #[test]
    fn exponential_pdf_values() {
        let f = ConditionalFamily::exponential_rate();
        assert_eq!(f.pdf(-1.0, 1.0).unwrap(), 0.0);
        assert_eq!(f.pdf(0.0, 2.0).unwrap(), 2.0);
        let v = f.pdf(1.0, 1.0).unwrap();
        assert!((v - 0.36787944117144232).abs() < 1e-15);
    }

    #[test]
    fn exponential_quantile_inverts_cdf() {
        let f = ConditionalFamily::exponential_rate();
        for &nu in &[0.3, 1.0, 2.5] {
            for i in 1..20 {
                let p = i as f64 / 20.0;
                let x = f.quantile(p, nu).unwrap();
                assert!((f.cdf(x, nu).unwrap() - p).abs() < 1e-14);
            }
        }
        let med = f.quantile(0.5, 1.0).unwrap();
        assert!((med - LN_2).abs() < 1e-15);
    }

    #[test]
    fn normal_var_cdf_values() {
        let f = ConditionalFamily::normal_mean_var(0.0);
        assert_eq!(f.cdf(0.0, 1.0).unwrap(), 0.5);
        let v = f.cdf(1.0, 1.0).unwrap();
        assert!((v - 0.84134474606854295).abs() < 1e-14);
        let v = f.cdf(1.0, 4.0).unwrap();
        assert!((v - 0.6914624612740131).abs() < 1e-14);
        let shifted = ConditionalFamily::normal_mean_var(2.0);
        assert_eq!(shifted.cdf(2.0, 5.0).unwrap(), 0.5);
    }

    #[test]
    fn normal_sd_matches_var_family_on_squared_parameter() {
        let fsd = ConditionalFamily::normal_mean_sd(-1.0);
        let fvar = ConditionalFamily::normal_mean_var(-1.0);
        for &x in &[-3.0, -1.0, 0.0, 2.0] {
            for &sd in &[0.2, 1.0, 3.0] {
                let a = fsd.cdf(x, sd).unwrap();
                let b = fvar.cdf(x, sd * sd).unwrap();
                assert!((a - b).abs() < 1e-15);
                let a = fsd.pdf(x, sd).unwrap();
                let b = fvar.pdf(x, sd * sd).unwrap();
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normal_pdf_scales_with_sd() {
        let f = ConditionalFamily::normal_mean_sd(0.0);
        let v = f.pdf(0.0, 2.0).unwrap();
        assert!((v - 0.39894228040143268 / 2.0).abs() < 1e-16);
    }

    #[test]
    fn invalid_nu_is_rejected() {
        let f = ConditionalFamily::exponential_rate();
        assert!(matches!(
            f.cdf(1.0, 0.0),
            Err(DistError::InvalidParameter(_))
        ));
        assert!(f.cdf(1.0, -2.0).is_err());
        assert!(f.pdf(1.0, f64::NAN).is_err());
        assert!(f.quantile(0.5, f64::INFINITY).is_err());
    }

    #[test]
    fn quantile_probability_domain() {
        let f = ConditionalFamily::exponential_rate();
        assert!(matches!(
            f.quantile(0.0, 1.0),
            Err(DistError::ProbabilityOutOfRange(_))
        ));
        assert!(f.quantile(1.0, 1.0).is_err());
    }

    #[test]
    fn with_theta_only_for_location_families() {
        let f = ConditionalFamily::normal_mean_var(0.0).with_theta(-2.0).unwrap();
        assert_eq!(f.theta(), Some(-2.0));
        assert_eq!(f.cdf(-2.0, 1.0).unwrap(), 0.5);
        assert!(ConditionalFamily::exponential_rate().with_theta(1.0).is_err());
    }

    #[test]
    fn direction_tags() {
        let f = ConditionalFamily::exponential_rate();
        assert_eq!(f.direction_at(3.0), NuDirection::Increasing);

        let g = ConditionalFamily::normal_mean_var(1.0);
        assert_eq!(g.direction_at(2.0), NuDirection::Decreasing);
        assert_eq!(g.direction_at(0.0), NuDirection::Increasing);
        assert_eq!(g.direction_at(1.0), NuDirection::Constant);

        let u = g.with_monotonicity(Monotonicity::Unknown);
        assert_eq!(u.direction_at(2.0), NuDirection::Unknown);
    }

    #[test]
    fn sampling_follows_the_conditional_law() {
        let f = ConditionalFamily::exponential_rate();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let mut below_median = 0usize;
        for _ in 0..n {
            let x = f.sample(2.0, &mut rng).unwrap();
            assert!(x > 0.0);
            if x <= LN_2 / 2.0 {
                below_median += 1;
            }
        }
        let frac = below_median as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.015, "median fraction {frac}");
    }

    #[test]
    fn uniform_prior_basics() {
        let p = PriorSpec::uniform_unit();
        assert_eq!(p.density(0.5), 1.0);
        assert_eq!(p.density(1.0), 1.0);
        assert_eq!(p.density(0.0), 0.0);
        assert_eq!(p.density(1.5), 0.0);
        assert_eq!(p.quantile(0.25).unwrap(), 0.25);
        assert_eq!(p.median(), 0.5);
    }

    #[test]
    fn exponential_prior_basics() {
        let p = PriorSpec::exponential_unit();
        assert!((p.density(1.0) - 0.36787944117144232).abs() < 1e-15);
        assert_eq!(p.density(0.0), 0.0);
        assert!((p.median() - LN_2).abs() < 1e-15);
        let q = p.quantile(0.9).unwrap();
        assert!((q - std::f64::consts::LN_10).abs() < 1e-14);
    }

    #[test]
    fn point_mass_prior() {
        let p = PriorSpec::point_mass(0.7).unwrap();
        assert_eq!(p.median(), 0.7);
        assert_eq!(p.as_point_mass(), Some(0.7));
        let draws = p.sample(3, 5);
        assert!(draws.iter().all(|&v| v == 0.7));
        assert!(PriorSpec::point_mass(0.0).is_err());
        assert!(PriorSpec::point_mass(-1.0).is_err());
    }

    #[test]
    fn custom_prior_round_trip() {
        // nu = sqrt(U), U uniform on (0,1]: density 2s, quantile sqrt(p).
        let p = PriorSpec::custom(
            |s| if s > 0.0 && s <= 1.0 { 2.0 * s } else { 0.0 },
            |q| q.sqrt(),
            (0.0, 1.0),
        );
        assert!((p.median() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.density(0.25), 0.5);
        let draws = p.sample(11, 4000);
        assert!(draws.iter().all(|&v| v > 0.0 && v < 1.0));
        let above = draws.iter().filter(|&&v| v > 0.5f64.sqrt()).count();
        let frac = above as f64 / draws.len() as f64;
        assert!((frac - 0.5).abs() < 0.03, "median split {frac}");
    }

    #[test]
    fn sample_medians_track_prior_quantiles() {
        for prior in [PriorSpec::uniform_unit(), PriorSpec::exponential_unit()] {
            let mut draws = prior.sample(42, 40_000);
            draws.sort_by(f64::total_cmp);
            let sample_median = draws[draws.len() / 2];
            assert!(
                (sample_median - prior.median()).abs() < 0.02,
                "{prior:?}: sample median {sample_median} vs {}",
                prior.median()
            );
        }
    }

    #[test]
    fn sampling_is_reproducible_for_a_seed() {
        let p = PriorSpec::exponential_unit();
        assert_eq!(p.sample(9, 100), p.sample(9, 100));
        assert_ne!(p.sample(9, 100), p.sample(10, 100));
    }

    #[test]
    fn mass_interval_covers_almost_all_mass() {
        let p = PriorSpec::exponential_unit();
        let (lo, hi) = p.mass_interval(1e-10);
        assert!(lo > 0.0 && lo < 1e-9);
        assert!((hi - 23.025850929940457).abs() < 1e-9);
        let u = PriorSpec::uniform_unit();
        assert_eq!(u.mass_interval(1e-10), (1e-10, 1.0));
    }

    #[test]
    fn prior_quantile_domain_checks() {
        let p = PriorSpec::uniform_unit();
        assert!(p.quantile(0.0).is_err());
        assert!(p.quantile(1.0).is_err());
        assert!(p.quantile(f64::NAN).is_err());
    }
}
