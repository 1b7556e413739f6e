//! Most-powerful simple-vs-simple tests on marginal models.
//!
//! Every test here rejects a null location for a smaller one, so the
//! rejection region is a left half-line `x < c`. The threshold is
//! calibrated on a marginal model so the achieved size matches the
//! requested level, and power curves re-centre that same model at each
//! alternative location before evaluating the rejection probability.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dist::{ConditionalFamily, PriorSpec};
use crate::exec;
use crate::marginal::{MarginalCdf, MarginalError, MarginalKind};

/// Errors from test construction and power evaluation.
#[derive(Debug, Error)]
pub enum TestError {
    /// The level must lie strictly between zero and one.
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),
    /// The known standard deviation must be positive and finite.
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    /// One-sided tests need the alternative strictly left of the null.
    #[error("alternative location {theta1} must sit strictly left of the null {theta0}")]
    InvalidAlternative { theta0: f64, theta1: f64 },
    /// No threshold attains the requested size on the null model.
    #[error("size calibration failed: {0}")]
    CalibrationFailure(String),
    /// Power curves need at least one grid point.
    #[error("power grid must be non-empty")]
    EmptyGrid,
    /// Monte Carlo power needs at least one draw per grid point.
    #[error("monte carlo power needs a positive sample count")]
    InvalidSampleCount,
    /// Curves evaluated on different grids cannot be compared.
    #[error("power curves were evaluated on different grids")]
    GridMismatch,
    /// The underlying marginal model failed.
    #[error(transparent)]
    Marginal(#[from] MarginalError),
}

/// Which model a test was calibrated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestVariant {
    /// Threshold from the median marginal of the location family.
    MedianMarginal,
    /// Threshold from the mean marginal of the location family.
    MeanMarginal,
    /// Reference test for a normal with known standard deviation.
    KnownSigma,
}

impl std::fmt::Display for TestVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let label = match self {
            TestVariant::MedianMarginal => "median_marginal",
            TestVariant::MeanMarginal => "mean_marginal",
            TestVariant::KnownSigma => "known_sigma",
        };
        f.write_str(label)
    }
}

/// Left half-line rejection region `x < threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RejectRegion {
    pub threshold: f64,
}

impl RejectRegion {
    /// Whether an observation falls in the region.
    pub fn contains(&self, x: f64) -> bool {
        x < self.threshold
    }
}

/// A calibrated one-sided test of a simple null location against a
/// smaller one.
///
/// `lr_monotone` records the outcome of a density-ratio sweep run at
/// construction: `true` means the ratio of alternative to null density
/// was non-increasing across the probed range, which is exactly the
/// condition under which the left-tail threshold form is the most
/// powerful test of its size. The threshold itself is always the
/// `alpha` quantile of the null model, so the size holds either way.
#[derive(Clone, Debug)]
pub struct SimpleHypothesisTest {
    pub theta0: f64,
    /// Specific alternative location, when one was named.
    pub theta1: Option<f64>,
    pub alpha: f64,
    pub reject_region: RejectRegion,
    pub variant: TestVariant,
    pub lr_monotone: bool,
    null: MarginalCdf,
}

impl SimpleHypothesisTest {
    /// The calibrated rejection threshold.
    pub fn threshold(&self) -> f64 {
        self.reject_region.threshold
    }

    /// Whether the test rejects for an observation.
    pub fn rejects(&self, x: f64) -> bool {
        self.reject_region.contains(x)
    }

    /// The null model the threshold was calibrated on.
    pub fn null_model(&self) -> &MarginalCdf {
        &self.null
    }

    /// Rejection probability under the calibration model itself.
    pub fn achieved_size(&self) -> Result<f64, TestError> {
        Ok(self.null.eval(self.reject_region.threshold)?)
    }

    /// Rejection probability with the test's own model re-centred at
    /// `mu`.
    pub fn power_at(&self, mu: f64) -> Result<f64, TestError> {
        let shifted = self.null.with_theta(mu)?;
        Ok(shifted.eval(self.reject_region.threshold)?)
    }
}

fn check_alpha(alpha: f64) -> Result<(), TestError> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(TestError::InvalidAlpha(alpha));
    }
    Ok(())
}

fn variant_of(model: &MarginalCdf) -> TestVariant {
    if model.prior().as_point_mass().is_some() {
        TestVariant::KnownSigma
    } else {
        match model.kind() {
            MarginalKind::Median => TestVariant::MedianMarginal,
            MarginalKind::Mean => TestVariant::MeanMarginal,
        }
    }
}

/// Sweeps the density ratio `f1/f0` across the bulk of the null model
/// and one bulk-width below it, checking that it never climbs five
/// percent above its running minimum. The slack absorbs noise from
/// difference-quotient densities, and points where either density is
/// small enough for that noise to dominate are skipped; the genuine
/// failures (heavy-tailed or cusped mixtures) overshoot by far more.
fn ratio_is_nonincreasing<F0, F1>(f0: &F0, f1: &F1, null: &MarginalCdf) -> Result<bool, TestError>
where
    F0: Fn(f64) -> f64,
    F1: Fn(f64) -> f64,
{
    let bulk_lo = null.quantile(0.005)?;
    let bulk_hi = null.quantile(0.995)?;
    let lo = bulk_lo - (bulk_hi - bulk_lo);
    let width = bulk_hi - lo;
    let floor = 0.05 / width;
    let points = 41;
    let mut running_min = f64::INFINITY;
    for i in 0..points {
        let x = lo + width * i as f64 / (points - 1) as f64;
        let d0 = f0(x);
        let d1 = f1(x);
        if !d0.is_finite() || !d1.is_finite() || d0 < floor || d1 < floor {
            continue;
        }
        let ratio = d1 / d0;
        if ratio > running_min * 1.05 {
            return Ok(false);
        }
        running_min = running_min.min(ratio);
    }
    Ok(true)
}

/// Builds the most powerful test of its size for two fully specified
/// densities, rejecting where the alternative density dominates.
///
/// For a non-increasing density ratio this is exactly the left-tail
/// test at the `alpha` quantile of `null_model`, and that threshold is
/// always returned; the sweep outcome lands in `lr_monotone`. The
/// null location label is taken from the model when it has one.
pub fn mp_test<F0, F1>(
    f0: F0,
    f1: F1,
    alpha: f64,
    null_model: &MarginalCdf,
) -> Result<SimpleHypothesisTest, TestError>
where
    F0: Fn(f64) -> f64,
    F1: Fn(f64) -> f64,
{
    check_alpha(alpha)?;
    let threshold = null_model.quantile(alpha)?;
    let achieved = null_model.eval(threshold)?;
    if (achieved - alpha).abs() > 1e-6 {
        return Err(TestError::CalibrationFailure(format!(
            "threshold {threshold} attains size {achieved} instead of {alpha}"
        )));
    }
    let lr_monotone = ratio_is_nonincreasing(&f0, &f1, null_model)?;
    Ok(SimpleHypothesisTest {
        theta0: null_model.theta().unwrap_or(0.0),
        theta1: None,
        alpha,
        reject_region: RejectRegion { threshold },
        variant: variant_of(null_model),
        lr_monotone,
        null: null_model.clone(),
    })
}

/// Convenience form of [`mp_test`] for location problems: relocates
/// `model` to the two hypothesised locations and tests `theta0`
/// against the smaller `theta1` using the model's own densities.
pub fn mp_test_for_location(
    model: &MarginalCdf,
    theta0: f64,
    theta1: f64,
    alpha: f64,
) -> Result<SimpleHypothesisTest, TestError> {
    if !theta0.is_finite() || !theta1.is_finite() || theta1 >= theta0 {
        return Err(TestError::InvalidAlternative { theta0, theta1 });
    }
    let null = model.with_theta(theta0)?;
    let alt = model.with_theta(theta1)?;
    let d0 = null.clone();
    let d1 = alt.clone();
    let mut test = mp_test(
        move |x| d0.pdf(x).unwrap_or(0.0),
        move |x| d1.pdf(x).unwrap_or(0.0),
        alpha,
        &null,
    )?;
    test.theta1 = Some(theta1);
    Ok(test)
}

/// The uniformly most powerful size-`alpha` test of a zero mean
/// against negative means when the observation is normal with known
/// standard deviation: reject iff `x < sigma * z_alpha`.
pub fn ump_known_sigma(sigma: f64, alpha: f64) -> Result<SimpleHypothesisTest, TestError> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(TestError::InvalidSigma(sigma));
    }
    check_alpha(alpha)?;
    let z = crate::normal::std_normal_quantile(alpha).ok_or(TestError::InvalidAlpha(alpha))?;
    let prior = PriorSpec::point_mass(sigma).map_err(MarginalError::from)?;
    let null = MarginalCdf::new(
        MarginalKind::Mean,
        ConditionalFamily::normal_mean_sd(0.0),
        prior,
    );
    Ok(SimpleHypothesisTest {
        theta0: 0.0,
        theta1: None,
        alpha,
        reject_region: RejectRegion {
            threshold: sigma * z,
        },
        variant: TestVariant::KnownSigma,
        lr_monotone: true,
        null,
    })
}

/// How a power curve is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PowerMethod {
    /// Model CDF at the threshold.
    Exact,
    /// Simulated rejection frequency.
    MonteCarlo,
}

/// Rejection probability of one test across a grid of alternative
/// locations.
#[derive(Clone, Debug)]
pub struct PowerCurve {
    pub mu_grid: Vec<f64>,
    pub power: Vec<f64>,
    /// Binomial standard errors; all zero in exact mode.
    pub std_error: Vec<f64>,
    pub variant: TestVariant,
    pub evaluation_mode: PowerMethod,
    /// Draws per grid point; zero in exact mode.
    pub mc_samples: usize,
}

/// Evaluates the rejection probability of `test` at each location in
/// `mu_grid`, under the test's own model re-centred there.
///
/// Grid points are independent and may run in parallel; in Monte
/// Carlo mode each point draws from its own stream seeded `seed ^
/// index`, so results do not depend on scheduling.
pub fn power_curve(
    test: &SimpleHypothesisTest,
    mu_grid: &[f64],
    mode: PowerMethod,
    mc_samples: usize,
    seed: u64,
) -> Result<PowerCurve, TestError> {
    if mu_grid.is_empty() {
        return Err(TestError::EmptyGrid);
    }
    if mode == PowerMethod::MonteCarlo && mc_samples == 0 {
        return Err(TestError::InvalidSampleCount);
    }
    let evaluated: Vec<Result<(f64, f64), TestError>> =
        exec::map_indexed(mu_grid.len(), |i| match mode {
            PowerMethod::Exact => test.power_at(mu_grid[i]).map(|p| (p, 0.0)),
            PowerMethod::MonteCarlo => {
                let shifted = test.null.with_theta(mu_grid[i])?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i as u64);
                let mut hits = 0usize;
                for _ in 0..mc_samples {
                    if test.rejects(shifted.sample(&mut rng)?) {
                        hits += 1;
                    }
                }
                let p = hits as f64 / mc_samples as f64;
                let se = (p * (1.0 - p) / mc_samples as f64).sqrt();
                Ok((p, se))
            }
        });
    let mut power = Vec::with_capacity(mu_grid.len());
    let mut std_error = Vec::with_capacity(mu_grid.len());
    for entry in evaluated {
        let (p, se) = entry?;
        power.push(p);
        std_error.push(se);
    }
    Ok(PowerCurve {
        mu_grid: mu_grid.to_vec(),
        power,
        std_error,
        variant: test.variant,
        evaluation_mode: mode,
        mc_samples: if mode == PowerMethod::Exact {
            0
        } else {
            mc_samples
        },
    })
}

/// Outcome of a pointwise power comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DominanceVerdict {
    /// The first curve is significantly higher somewhere and never
    /// significantly lower.
    ADominates,
    /// The reverse.
    BDominates,
    /// Each curve is significantly higher somewhere.
    Crossing,
    /// No significant difference at any grid point.
    Tie,
}

/// Pointwise differences between two power curves and the counts of
/// grid points where each is higher beyond Monte Carlo error.
#[derive(Clone, Debug)]
pub struct DominanceReport {
    pub differences: Vec<f64>,
    pub a_above: usize,
    pub b_above: usize,
    pub verdict: DominanceVerdict,
}

/// Compares two power curves on the same grid. A point counts for a
/// side only when its difference clears three combined standard
/// errors, so exact curves need only a strict difference while noisy
/// ones need a real margin.
pub fn compare_power(a: &PowerCurve, b: &PowerCurve) -> Result<DominanceReport, TestError> {
    if a.mu_grid.len() != b.mu_grid.len()
        || a.mu_grid.iter().zip(&b.mu_grid).any(|(x, y)| x != y)
    {
        return Err(TestError::GridMismatch);
    }
    let mut differences = Vec::with_capacity(a.power.len());
    let mut a_above = 0usize;
    let mut b_above = 0usize;
    for i in 0..a.power.len() {
        let diff = a.power[i] - b.power[i];
        let margin =
            (3.0 * (a.std_error[i].powi(2) + b.std_error[i].powi(2)).sqrt()).max(1e-12);
        if diff > margin {
            a_above += 1;
        } else if -diff > margin {
            b_above += 1;
        }
        differences.push(diff);
    }
    let verdict = match (a_above > 0, b_above > 0) {
        (true, false) => DominanceVerdict::ADominates,
        (false, true) => DominanceVerdict::BDominates,
        (true, true) => DominanceVerdict::Crossing,
        (false, false) => DominanceVerdict::Tie,
    };
    Ok(DominanceReport {
        differences,
        a_above,
        b_above,
        verdict,
    })
}
