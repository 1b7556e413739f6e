//! Mean and median marginal distribution functions.
//!
//! Given a conditional family `F(x|nu)` and a prior for `nu`, the mean
//! marginal is the prior average of the conditional CDFs, while the
//! median marginal takes the prior median of `F(x|nu)` pointwise in `x`.
//! Both are genuine distribution functions. For families whose CDF is
//! monotone in `nu` at each `x`, the median marginal collapses to the
//! conditional CDF evaluated at the prior median, which is the fast path
//! used throughout; a general root-finding route and closed forms for
//! two exponential-family examples are also provided.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dist::{
    draw_open_unit, ConditionalFamily, DistError, FamilyId, NuDirection, PriorId, PriorSpec,
};
use crate::exec;
use crate::mc::ApproxCurve;

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Error)]
pub enum MarginalError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("quadrature budget of {0} subdivisions exhausted")]
    QuadratureBudget(usize),
    #[error("median evaluation needs a family with known monotonicity in nu")]
    UnsupportedFamily,
    #[error("method not available here: {0}")]
    UnsupportedMethod(String),
    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("density evaluation at the support boundary x = {0}")]
    BoundaryEvaluation(f64),
    #[error("root search failed: {0}")]
    ConvergenceFailure(String),
}

/// Which marginal to form from the conditional family and the prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarginalKind {
    Mean,
    Median,
}

/// How a [`MarginalCdf`] computes its values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarginalMethod {
    /// Analytic formula (the two exponential-family examples, or any
    /// point-mass prior).
    ClosedForm,
    /// Conditional CDF at the prior median; valid for the median
    /// marginal of families monotone in `nu` at each `x`.
    MonotoneFastPath,
    /// Adaptive Simpson integration against the prior; mean marginal
    /// only.
    Quadrature,
    /// Direct search for the prior median of `F(x|nu)`; median marginal
    /// only.
    QuantileSolve,
    /// Interpolation of a Monte Carlo curve estimate.
    MonteCarloCurve,
}

/// Tolerances and budgets for the integration and root-finding routines.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Prior mass discarded in each tail when truncating the
    /// integration range.
    pub tail_mass_cutoff: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-8,
            max_subdivisions: 2000,
            tail_mass_cutoff: 1e-10,
        }
    }
}

/// Adaptive Simpson integration with an explicit work stack and a hard
/// subdivision budget.
pub(crate) fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<f64, MarginalError> {
    if a == b {
        return Ok(0.0);
    }
    struct Segment {
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        estimate: f64,
        tol: f64,
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let estimate = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut stack = vec![Segment {
        a,
        b,
        fa,
        fm,
        fb,
        estimate,
        tol: abs_tol,
    }];
    let min_width = (b - a).abs() * 1e-13;
    let mut total = 0.0;
    let mut used = 0usize;
    while let Some(seg) = stack.pop() {
        used += 1;
        if used > max_subdivisions {
            return Err(MarginalError::QuadratureBudget(max_subdivisions));
        }
        let m = 0.5 * (seg.a + seg.b);
        let lm = 0.5 * (seg.a + m);
        let rm = 0.5 * (m + seg.b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - seg.a) / 6.0 * (seg.fa + 4.0 * flm + seg.fm);
        let right = (seg.b - m) / 6.0 * (seg.fm + 4.0 * frm + seg.fb);
        let delta = left + right - seg.estimate;
        if delta.abs() <= 15.0 * seg.tol || (seg.b - seg.a).abs() <= min_width {
            total += left + right + delta / 15.0;
        } else {
            let half_tol = 0.5 * seg.tol;
            stack.push(Segment {
                a: seg.a,
                b: m,
                fa: seg.fa,
                fm: flm,
                fb: seg.fm,
                estimate: left,
                tol: half_tol,
            });
            stack.push(Segment {
                a: m,
                b: seg.b,
                fa: seg.fm,
                fm: frm,
                fb: seg.fb,
                estimate: right,
                tol: half_tol,
            });
        }
    }
    Ok(total)
}

/// Prior average of the conditional CDF at `x`.
pub fn mean_marginal_cdf(
    family: &ConditionalFamily,
    prior: &PriorSpec,
    x: f64,
    quad: &QuadratureConfig,
) -> Result<f64, MarginalError> {
    if let Some(nu) = prior.as_point_mass() {
        return Ok(family.cdf(x, nu)?);
    }
    let (lo, hi) = prior.mass_interval(quad.tail_mass_cutoff);
    let f = |nu: f64| {
        family
            .cdf(x, nu)
            .map(|v| v * prior.density(nu))
            .unwrap_or(f64::NAN)
    };
    let value = adaptive_simpson(&f, lo, hi, quad.abs_tol, quad.max_subdivisions)?;
    if value.is_nan() {
        return Err(MarginalError::ConvergenceFailure(format!(
            "conditional CDF failed inside the prior mass interval at x = {x}"
        )));
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Prior median of the conditional CDF at `x`.
///
/// Families tagged with a known monotonicity direction use the fast
/// path through the prior median; otherwise the lower median is found by
/// a bisection over candidate values, with the prior mass of each
/// sublevel region computed by integration.
pub fn median_marginal_cdf(
    family: &ConditionalFamily,
    prior: &PriorSpec,
    x: f64,
    _quad: &QuadratureConfig,
) -> Result<f64, MarginalError> {
    if let Some(nu) = prior.as_point_mass() {
        return Ok(family.cdf(x, nu)?);
    }
    match family.direction_at(x) {
        NuDirection::Unknown => Err(MarginalError::UnsupportedFamily),
        _ => Ok(family.cdf(x, prior.median())?),
    }
}

/// The median marginal at `x` computed without the monotone shortcut:
/// the smallest `t` such that the prior mass of `{nu : F(x|nu) <= t}`
/// reaches one half.
pub fn median_marginal_cdf_by_search(
    family: &ConditionalFamily,
    prior: &PriorSpec,
    x: f64,
    quad: &QuadratureConfig,
) -> Result<f64, MarginalError> {
    if let Some(nu) = prior.as_point_mass() {
        return Ok(family.cdf(x, nu)?);
    }
    let direction = family.direction_at(x);
    if direction == NuDirection::Unknown {
        return Err(MarginalError::UnsupportedFamily);
    }
    let (lo, hi) = prior.mass_interval(quad.tail_mass_cutoff);
    let y_lo = family.cdf(x, lo)?;
    let y_hi = family.cdf(x, hi)?;
    if y_lo == y_hi || direction == NuDirection::Constant {
        return Ok(family.cdf(x, prior.median())?);
    }

    // Prior mass of the sublevel region {nu in [lo, hi] : F(x|nu) <= t}.
    let sublevel_mass = |t: f64| -> Result<f64, MarginalError> {
        let (y_min, y_max) = if y_lo <= y_hi { (y_lo, y_hi) } else { (y_hi, y_lo) };
        if t < y_min {
            return Ok(0.0);
        }
        if t >= y_max {
            return Ok(1.0);
        }
        let mut a = lo;
        let mut b = hi;
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            let below = family.cdf(x, m)? <= t;
            let region_on_left = y_lo <= y_hi;
            if below == region_on_left {
                a = m;
            } else {
                b = m;
            }
        }
        let density = |nu: f64| prior.density(nu);
        if y_lo <= y_hi {
            adaptive_simpson(&density, lo, a, quad.abs_tol, quad.max_subdivisions)
        } else {
            adaptive_simpson(&density, b, hi, quad.abs_tol, quad.max_subdivisions)
        }
    };

    let mut t_lo = 0.0;
    let mut t_hi = 1.0;
    for _ in 0..50 {
        let t = 0.5 * (t_lo + t_hi);
        if sublevel_mass(t)? >= 0.5 {
            t_hi = t;
        } else {
            t_lo = t;
        }
    }
    Ok(t_hi)
}

/// Point checks that a function behaves like a distribution function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerificationReport {
    pub monotone: bool,
    pub bounds_ok: bool,
    pub limits_ok: bool,
    /// Largest observed violation across all three checks.
    pub worst_violation: f64,
    /// Largest increase between adjacent grid values, a continuity
    /// proxy: it shrinks as the grid refines when the function is
    /// continuous. Reported, never gating.
    pub max_jump: f64,
    pub passed: bool,
}

/// Evaluates `f` on a grid and at two far probes, checking monotonicity
/// (no decrease beyond `tol`), containment in `[0, 1]` (no excess
/// beyond `tol`), and proximity of the far probes to 0 and 1 (within
/// `tol`).
pub fn verify_distribution_function(
    f: &MarginalCdf,
    grid: &[f64],
    far_probes: (f64, f64),
    tol: f64,
) -> Result<VerificationReport, MarginalError> {
    let values = f.eval_grid(grid)?;
    let mut worst: f64 = 0.0;
    let mut max_jump: f64 = 0.0;
    let mut monotone = true;
    for w in values.windows(2) {
        let drop = w[0] - w[1];
        if drop > tol {
            monotone = false;
        }
        worst = worst.max(drop);
        max_jump = max_jump.max(w[1] - w[0]);
    }
    let mut bounds_ok = true;
    for &v in &values {
        let excess = (-v).max(v - 1.0);
        if excess > tol {
            bounds_ok = false;
        }
        worst = worst.max(excess);
    }
    let low = f.eval(far_probes.0)?;
    let high = f.eval(far_probes.1)?;
    let limit_gap = low.max(1.0 - high);
    let limits_ok = limit_gap <= tol;
    worst = worst.max(limit_gap);
    let passed = monotone && bounds_ok && limits_ok;
    Ok(VerificationReport {
        monotone,
        bounds_ok,
        limits_ok,
        worst_violation: worst.max(0.0),
        max_jump,
        passed,
    })
}

/// A marginal distribution function with a fixed evaluation strategy.
#[derive(Clone, Debug)]
pub struct MarginalCdf {
    kind: MarginalKind,
    method: MarginalMethod,
    family: ConditionalFamily,
    prior: PriorSpec,
    quad: QuadratureConfig,
    curve: Option<ApproxCurve>,
    negative_density_clamps: Arc<AtomicU64>,
}

impl MarginalCdf {
    /// Builds a marginal with the best method available for the inputs:
    /// closed forms where they exist, the monotone fast path for tagged
    /// families, and quadrature otherwise.
    pub fn new(kind: MarginalKind, family: ConditionalFamily, prior: PriorSpec) -> Self {
        let method = if prior.as_point_mass().is_some() || has_closed_form(&family, &prior) {
            MarginalMethod::ClosedForm
        } else {
            match kind {
                MarginalKind::Median => MarginalMethod::MonotoneFastPath,
                MarginalKind::Mean => MarginalMethod::Quadrature,
            }
        };
        MarginalCdf {
            kind,
            method,
            family,
            prior,
            quad: QuadratureConfig::default(),
            curve: None,
            negative_density_clamps: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Builds a marginal with an explicitly chosen method, refusing
    /// combinations that cannot work.
    pub fn with_method(
        kind: MarginalKind,
        family: ConditionalFamily,
        prior: PriorSpec,
        method: MarginalMethod,
    ) -> Result<Self, MarginalError> {
        match method {
            MarginalMethod::ClosedForm => {
                if prior.as_point_mass().is_none() && !has_closed_form(&family, &prior) {
                    return Err(MarginalError::UnsupportedMethod(
                        "no closed form for this family and prior".into(),
                    ));
                }
            }
            MarginalMethod::MonotoneFastPath => {
                if kind != MarginalKind::Median {
                    return Err(MarginalError::UnsupportedMethod(
                        "the monotone fast path computes the median marginal".into(),
                    ));
                }
                if family.monotonicity() == crate::dist::Monotonicity::Unknown {
                    return Err(MarginalError::UnsupportedFamily);
                }
            }
            MarginalMethod::QuantileSolve => {
                if kind != MarginalKind::Median {
                    return Err(MarginalError::UnsupportedMethod(
                        "quantile search computes the median marginal".into(),
                    ));
                }
                if family.monotonicity() == crate::dist::Monotonicity::Unknown {
                    return Err(MarginalError::UnsupportedFamily);
                }
            }
            MarginalMethod::Quadrature => {
                if kind != MarginalKind::Mean {
                    return Err(MarginalError::UnsupportedMethod(
                        "quadrature against the prior computes the mean marginal".into(),
                    ));
                }
            }
            MarginalMethod::MonteCarloCurve => {
                return Err(MarginalError::UnsupportedMethod(
                    "curve-backed marginals are built with from_curve".into(),
                ));
            }
        }
        let mut out = MarginalCdf::new(kind, family, prior);
        out.method = method;
        Ok(out)
    }

    /// Wraps a Monte Carlo curve estimate as a distribution function.
    /// The curve is projected to be non-decreasing, then interpolated
    /// linearly.
    pub fn from_curve(curve: ApproxCurve, family: ConditionalFamily, prior: PriorSpec) -> Self {
        use crate::mc::CurveAlgorithm::*;
        let kind = match curve.algorithm {
            MedianOfConditionals | MedianOfEmpiricals => MarginalKind::Median,
            MeanOfConditionals | MeanOfEmpiricals => MarginalKind::Mean,
        };
        MarginalCdf {
            kind,
            method: MarginalMethod::MonteCarloCurve,
            family,
            prior,
            quad: QuadratureConfig::default(),
            curve: Some(curve.isotonic()),
            negative_density_clamps: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn with_quadrature_config(mut self, quad: QuadratureConfig) -> Self {
        self.quad = quad;
        self
    }

    /// Same marginal model relocated to `theta`.
    pub fn with_theta(&self, theta: f64) -> Result<Self, MarginalError> {
        if self.method == MarginalMethod::MonteCarloCurve {
            return Err(MarginalError::UnsupportedMethod(
                "a curve-backed marginal cannot be relocated".into(),
            ));
        }
        let family = self.family.with_theta(theta)?;
        let mut out = self.clone();
        out.family = family;
        out.negative_density_clamps = Arc::new(AtomicU64::new(0));
        Ok(out)
    }

    pub fn kind(&self) -> MarginalKind {
        self.kind
    }

    pub fn method(&self) -> MarginalMethod {
        self.method
    }

    pub fn family(&self) -> &ConditionalFamily {
        &self.family
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn theta(&self) -> Option<f64> {
        self.family.theta()
    }

    /// Times a negative numerical density estimate was clamped to zero.
    pub fn negative_density_clamps(&self) -> u64 {
        self.negative_density_clamps.load(Ordering::Relaxed)
    }

    /// The marginal distribution function at `x`.
    pub fn eval(&self, x: f64) -> Result<f64, MarginalError> {
        match self.method {
            MarginalMethod::ClosedForm => self.eval_closed_form(x),
            MarginalMethod::MonotoneFastPath => {
                median_marginal_cdf(&self.family, &self.prior, x, &self.quad)
            }
            MarginalMethod::QuantileSolve => {
                median_marginal_cdf_by_search(&self.family, &self.prior, x, &self.quad)
            }
            MarginalMethod::Quadrature => {
                mean_marginal_cdf(&self.family, &self.prior, x, &self.quad)
            }
            MarginalMethod::MonteCarloCurve => {
                Ok(self.curve.as_ref().expect("curve-backed method").eval(x))
            }
        }
    }

    /// Evaluates the marginal over a grid, in parallel when the crate is
    /// built with the `parallel` feature.
    pub fn eval_grid(&self, grid: &[f64]) -> Result<Vec<f64>, MarginalError> {
        exec::map_indexed(grid.len(), |i| self.eval(grid[i]))
            .into_iter()
            .collect()
    }

    fn eval_closed_form(&self, x: f64) -> Result<f64, MarginalError> {
        if let Some(nu) = self.prior.as_point_mass() {
            return Ok(self.family.cdf(x, nu)?);
        }
        let value = match (self.kind, self.prior.id()) {
            (MarginalKind::Median, PriorId::UniformUnit) => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x / 2.0).exp_m1()
                }
            }
            (MarginalKind::Mean, PriorId::UniformUnit) => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 + (-x).exp_m1() / x
                }
            }
            (MarginalKind::Median, PriorId::ExponentialUnit) => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x * LN_2).exp_m1()
                }
            }
            (MarginalKind::Mean, PriorId::ExponentialUnit) => {
                if x <= 0.0 {
                    0.0
                } else {
                    x / (x + 1.0)
                }
            }
            _ => unreachable!("closed form validated at construction"),
        };
        Ok(value)
    }

    /// Marginal density at `x`: the analytic derivative where the CDF
    /// has one (closed forms and the fast path), otherwise a symmetric
    /// difference quotient of the CDF, clamped to zero when rounding
    /// pushes it negative.
    pub fn pdf(&self, x: f64) -> Result<f64, MarginalError> {
        let (support_lo, support_hi) = self.family.support();
        if x == support_lo || x == support_hi {
            return Err(MarginalError::BoundaryEvaluation(x));
        }
        if x < support_lo || x > support_hi {
            return Ok(0.0);
        }
        match self.method {
            MarginalMethod::ClosedForm => self.closed_form_pdf(x),
            MarginalMethod::MonotoneFastPath => {
                Ok(self.family.pdf(x, self.prior.median())?)
            }
            _ => {
                let h = 1e-5 * x.abs().max(1.0);
                let upper = self.eval(x + h)?;
                let lower = self.eval((x - h).max(support_lo))?;
                let width = (x + h) - (x - h).max(support_lo);
                let d = (upper - lower) / width;
                if d < 0.0 {
                    self.negative_density_clamps.fetch_add(1, Ordering::Relaxed);
                    Ok(0.0)
                } else {
                    Ok(d)
                }
            }
        }
    }

    fn closed_form_pdf(&self, x: f64) -> Result<f64, MarginalError> {
        if let Some(nu) = self.prior.as_point_mass() {
            return Ok(self.family.pdf(x, nu)?);
        }
        let value = match (self.kind, self.prior.id()) {
            (MarginalKind::Median, PriorId::UniformUnit) => 0.5 * (-x / 2.0).exp(),
            (MarginalKind::Mean, PriorId::UniformUnit) => {
                if x < 1e-3 {
                    // Series around 0 for (1 - e^{-x}(1+x)) / x^2.
                    0.5 - x / 3.0 + x * x / 8.0
                } else {
                    (1.0 - (-x).exp() * (1.0 + x)) / (x * x)
                }
            }
            (MarginalKind::Median, PriorId::ExponentialUnit) => LN_2 * (-x * LN_2).exp(),
            (MarginalKind::Mean, PriorId::ExponentialUnit) => 1.0 / ((x + 1.0) * (x + 1.0)),
            _ => unreachable!("closed form validated at construction"),
        };
        Ok(value)
    }

    /// The marginal quantile function.
    pub fn quantile(&self, p: f64) -> Result<f64, MarginalError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(MarginalError::ProbabilityOutOfRange(p));
        }
        match self.method {
            MarginalMethod::MonotoneFastPath => {
                Ok(self.family.quantile(p, self.prior.median())?)
            }
            MarginalMethod::ClosedForm => self.closed_form_quantile(p),
            MarginalMethod::MonteCarloCurve => {
                Ok(self.curve.as_ref().expect("curve-backed method").quantile(p))
            }
            MarginalMethod::Quadrature | MarginalMethod::QuantileSolve => {
                self.quantile_by_bisection(p)
            }
        }
    }

    fn closed_form_quantile(&self, p: f64) -> Result<f64, MarginalError> {
        if let Some(nu) = self.prior.as_point_mass() {
            return Ok(self.family.quantile(p, nu)?);
        }
        match (self.kind, self.prior.id()) {
            (MarginalKind::Median, PriorId::UniformUnit) => Ok(-2.0 * (-p).ln_1p()),
            (MarginalKind::Median, PriorId::ExponentialUnit) => Ok(-(-p).ln_1p() / LN_2),
            (MarginalKind::Mean, PriorId::ExponentialUnit) => Ok(p / (1.0 - p)),
            (MarginalKind::Mean, PriorId::UniformUnit) => self.quantile_by_bisection(p),
            _ => unreachable!("closed form validated at construction"),
        }
    }

    fn quantile_by_bisection(&self, p: f64) -> Result<f64, MarginalError> {
        let (support_lo, _) = self.family.support();
        let mut lo = if support_lo.is_finite() { support_lo } else { -1.0 };
        let mut hi = lo.abs().max(1.0);
        let mut grew = 0;
        while self.eval(hi)? < p {
            hi += (hi - lo).max(1.0);
            grew += 1;
            if grew > 200 {
                return Err(MarginalError::ConvergenceFailure(format!(
                    "no upper bracket for p = {p}"
                )));
            }
        }
        if !support_lo.is_finite() {
            grew = 0;
            while self.eval(lo)? > p {
                lo -= (hi - lo).max(1.0);
                grew += 1;
                if grew > 200 {
                    return Err(MarginalError::ConvergenceFailure(format!(
                        "no lower bracket for p = {p}"
                    )));
                }
            }
        }
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if self.eval(m)? < p {
                lo = m;
            } else {
                hi = m;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Draws one observation from the marginal law. Median marginals and
    /// curve-backed marginals use inverse transform sampling; exact mean
    /// marginals draw `nu` from the prior and then an observation from
    /// the conditional.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<f64, MarginalError> {
        if self.method == MarginalMethod::MonteCarloCurve {
            let u = draw_open_unit(rng);
            return Ok(self.curve.as_ref().expect("curve-backed method").quantile(u));
        }
        match self.kind {
            MarginalKind::Median => {
                let u = draw_open_unit(rng);
                self.quantile(u)
            }
            MarginalKind::Mean => {
                let nu = self.prior.draw(rng);
                Ok(self.family.sample(nu, rng)?)
            }
        }
    }
}

impl ApproxCurve {
    /// Inverse of the interpolated curve, clamped to the grid ends.
    pub fn quantile(&self, p: f64) -> f64 {
        let values = &self.values;
        let n = values.len();
        if p <= values[0] {
            return self.xs[0];
        }
        if p >= values[n - 1] {
            return self.xs[n - 1];
        }
        let j = values.partition_point(|&v| v < p);
        let (y0, y1) = (values[j - 1], values[j]);
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        if y1 == y0 {
            return x1;
        }
        x0 + (x1 - x0) * (p - y0) / (y1 - y0)
    }
}

fn has_closed_form(family: &ConditionalFamily, prior: &PriorSpec) -> bool {
    family.id() == FamilyId::ExponentialRate
        && matches!(prior.id(), PriorId::UniformUnit | PriorId::ExponentialUnit)
}
