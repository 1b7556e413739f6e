//! Point estimation of a location parameter from marginal densities.
//!
//! Two objectives are supported: the log-likelihood built from the
//! mean marginal density and its analogue built from the median
//! marginal density. Both are maximised over a bounded interval by
//! golden-section search, and a simulation study compares the two
//! estimators on synthetic data drawn from a known generative model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dist::{ConditionalFamily, PriorSpec};
use crate::exec;
use crate::linspace;
use crate::marginal::{verify_distribution_function, MarginalCdf, MarginalError, MarginalKind};

const EVALUATION_BUDGET: usize = 500;
const STUDY_TOLERANCE: f64 = 1e-6;

/// Errors from estimation and simulation studies.
#[derive(Debug, Error)]
pub enum EstimationError {
    /// Estimation needs data.
    #[error("estimation needs at least one data point")]
    EmptyData,
    /// Every observation must be finite.
    #[error("data must be finite, got {0}")]
    NonFiniteData(f64),
    /// The search interval must be finite with positive width.
    #[error("theta bounds must be finite and non-degenerate, got [{0}, {1}]")]
    InvalidBounds(f64, f64),
    /// The bracket tolerance must be positive.
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    /// The objective was negative infinity at every probed location.
    #[error("every probed location gives the data zero density")]
    AllZeroDensity,
    /// Studies need a positive per-replication sample size.
    #[error("the sample size must be at least 1, got {0}")]
    InvalidSampleSize(usize),
    /// Study summaries below 100 replications are too noisy to report.
    #[error("simulation studies need at least 100 replications, got {0}")]
    TooFewReplications(usize),
    /// The median marginal failed its verification guard.
    #[error("the median marginal failed verification before the study, worst violation {0}")]
    VerificationFailure(f64),
    /// The underlying marginal model failed.
    #[error(transparent)]
    Marginal(#[from] MarginalError),
}

/// A bounded one-dimensional maximum-objective problem.
#[derive(Clone, Debug)]
pub struct EstimationProblem {
    pub data: Vec<f64>,
    /// Location family whose parameter is being estimated.
    pub family: ConditionalFamily,
    pub prior: PriorSpec,
    /// Closed search interval for the location.
    pub theta_bounds: (f64, f64),
    /// Which marginal density the objective is built from.
    pub objective_kind: MarginalKind,
}

impl EstimationProblem {
    fn validate(&self) -> Result<(), EstimationError> {
        if self.data.is_empty() {
            return Err(EstimationError::EmptyData);
        }
        if let Some(&bad) = self.data.iter().find(|v| !v.is_finite()) {
            return Err(EstimationError::NonFiniteData(bad));
        }
        let (lo, hi) = self.theta_bounds;
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(EstimationError::InvalidBounds(lo, hi));
        }
        Ok(())
    }
}

/// Outcome of one estimation run.
#[derive(Clone, Copy, Debug)]
pub struct EstimateResult {
    pub theta_hat: f64,
    /// Sum of log marginal densities at `theta_hat`.
    pub log_objective: f64,
    /// Objective evaluations spent.
    pub evaluations: usize,
    /// Whether the bracket shrank below the tolerance before the
    /// evaluation budget ran out.
    pub converged: bool,
    /// Data points with zero density at `theta_hat`.
    pub zero_density_points: usize,
}

fn log_objective(model: &MarginalCdf, data: &[f64]) -> Result<(f64, usize), EstimationError> {
    let mut total = 0.0;
    let mut zeros = 0usize;
    for &x in data {
        let density = model.pdf(x)?;
        if density == 0.0 {
            zeros += 1;
        }
        total += density.ln();
    }
    Ok((total, zeros))
}

/// Maximises the chosen log marginal objective over `theta_bounds` by
/// golden-section search, stopping once the bracket is narrower than
/// `tol`.
///
/// Observations with zero density contribute negative infinity to the
/// objective; their count at the reported maximum comes back in the
/// result. If the whole bracket gives the data zero density the
/// search has nothing to compare and errors instead.
pub fn estimate(problem: &EstimationProblem, tol: f64) -> Result<EstimateResult, EstimationError> {
    problem.validate()?;
    if !tol.is_finite() || tol <= 0.0 {
        return Err(EstimationError::InvalidTolerance(tol));
    }
    let base = MarginalCdf::new(
        problem.objective_kind,
        problem.family,
        problem.prior.clone(),
    );
    let probe = |theta: f64| -> Result<(f64, usize), EstimationError> {
        let model = base.with_theta(theta)?;
        log_objective(&model, &problem.data)
    };

    let inverse_golden = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = problem.theta_bounds;
    let mut left = hi - inverse_golden * (hi - lo);
    let mut right = lo + inverse_golden * (hi - lo);
    let mut at_left = probe(left)?;
    let mut at_right = probe(right)?;
    let mut evaluations = 2usize;
    while hi - lo > tol && evaluations < EVALUATION_BUDGET {
        if at_left.0 >= at_right.0 {
            hi = right;
            right = left;
            at_right = at_left;
            left = hi - inverse_golden * (hi - lo);
            at_left = probe(left)?;
        } else {
            lo = left;
            left = right;
            at_left = at_right;
            right = lo + inverse_golden * (hi - lo);
            at_right = probe(right)?;
        }
        evaluations += 1;
    }
    let (theta_hat, (objective, zeros)) = if at_left.0 >= at_right.0 {
        (left, at_left)
    } else {
        (right, at_right)
    };
    if objective == f64::NEG_INFINITY {
        return Err(EstimationError::AllZeroDensity);
    }
    Ok(EstimateResult {
        theta_hat,
        log_objective: objective,
        evaluations,
        converged: hi - lo <= tol,
        zero_density_points: zeros,
    })
}

/// The model a simulation study draws its synthetic data from.
#[derive(Clone, Debug)]
pub struct GenerativeSpec {
    pub family: ConditionalFamily,
    pub prior: PriorSpec,
}

/// Bias, variance, and mean squared error of one estimator across the
/// replications that produced a converged estimate.
#[derive(Clone, Copy, Debug)]
pub struct EstimatorSummary {
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    /// Replications where this estimator failed to converge.
    pub failures: usize,
}

fn summarise(estimates: &[f64], true_theta: f64, failures: usize) -> EstimatorSummary {
    let count = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / count;
    let bias = mean - true_theta;
    let variance = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / count;
    let mse = estimates
        .iter()
        .map(|e| (e - true_theta).powi(2))
        .sum::<f64>()
        / count;
    EstimatorSummary {
        bias,
        variance,
        mse,
        failures,
    }
}

/// Side-by-side performance of the two estimators on one generative
/// model.
#[derive(Clone, Debug)]
pub struct StudyTable {
    pub true_theta: f64,
    pub sample_size: usize,
    pub replications: usize,
    /// Summary for the mean marginal objective.
    pub mean_objective: EstimatorSummary,
    /// Summary for the median marginal objective.
    pub median_objective: EstimatorSummary,
    /// Per-replication `(mean objective, median objective)` estimates
    /// for the replications where both converged.
    pub estimates: Vec<(f64, f64)>,
}

/// Draws `replications` data sets of size `n` from the generative
/// model centred at `true_theta`, runs both estimators on each, and
/// tabulates bias, variance, and mean squared error.
///
/// Replications run independently, each on its own stream seeded
/// `seed ^ (replication + 1)`, so the table is deterministic for a
/// given seed regardless of scheduling. Estimator failures are
/// counted per side rather than aborting the study. Before any data
/// is drawn the median marginal of the model is checked to be a valid
/// distribution function; a violation aborts the study.
pub fn simulation_study(
    true_theta: f64,
    true_nu_model: &GenerativeSpec,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<StudyTable, EstimationError> {
    if n == 0 {
        return Err(EstimationError::InvalidSampleSize(n));
    }
    if replications < 100 {
        return Err(EstimationError::TooFewReplications(replications));
    }
    if !true_theta.is_finite() {
        return Err(EstimationError::NonFiniteData(true_theta));
    }
    let family = true_nu_model
        .family
        .with_theta(true_theta)
        .map_err(MarginalError::from)?;
    let prior = true_nu_model.prior.clone();

    let median_marginal = MarginalCdf::new(MarginalKind::Median, family, prior.clone());
    let guard_grid = linspace(
        median_marginal.quantile(1e-4)?,
        median_marginal.quantile(1.0 - 1e-4)?,
        201,
    );
    let span = guard_grid[guard_grid.len() - 1] - guard_grid[0];
    let far = (guard_grid[0] - 3.0 * span, guard_grid[200] + 3.0 * span);
    let report = verify_distribution_function(&median_marginal, &guard_grid, far, 1e-6)?;
    if !report.passed {
        return Err(EstimationError::VerificationFailure(report.worst_violation));
    }

    let outcomes: Vec<(Option<f64>, Option<f64>)> = exec::map_indexed(replications, |rep| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (rep as u64 + 1));
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let nu = prior.draw(&mut rng);
            match family.sample(nu, &mut rng) {
                Ok(x) => data.push(x),
                Err(_) => return (None, None),
            }
        }
        let min = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bounds = (min - 1.0, max + 1.0);
        let run = |kind: MarginalKind| {
            let problem = EstimationProblem {
                data: data.clone(),
                family: true_nu_model.family,
                prior: prior.clone(),
                theta_bounds: bounds,
                objective_kind: kind,
            };
            match estimate(&problem, STUDY_TOLERANCE) {
                Ok(result) if result.converged => Some(result.theta_hat),
                _ => None,
            }
        };
        (run(MarginalKind::Mean), run(MarginalKind::Median))
    });

    let mut mean_failures = 0usize;
    let mut median_failures = 0usize;
    let mut estimates = Vec::with_capacity(replications);
    for (mean_est, median_est) in outcomes {
        if mean_est.is_none() {
            mean_failures += 1;
        }
        if median_est.is_none() {
            median_failures += 1;
        }
        if let (Some(mean_est), Some(median_est)) = (mean_est, median_est) {
            estimates.push((mean_est, median_est));
        }
    }
    if estimates.is_empty() {
        return Err(EstimationError::AllZeroDensity);
    }
    let mean_column: Vec<f64> = estimates.iter().map(|e| e.0).collect();
    let median_column: Vec<f64> = estimates.iter().map(|e| e.1).collect();
    Ok(StudyTable {
        true_theta,
        sample_size: n,
        replications,
        mean_objective: summarise(&mean_column, true_theta, mean_failures),
        median_objective: summarise(&median_column, true_theta, median_failures),
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(
        data: &[f64],
        prior: PriorSpec,
        kind: MarginalKind,
        bounds: (f64, f64),
    ) -> EstimationProblem {
        EstimationProblem {
            data: data.to_vec(),
            family: ConditionalFamily::normal_mean_var(0.0),
            prior,
            theta_bounds: bounds,
            objective_kind: kind,
        }
    }

    #[test]
    fn known_sigma_likelihood_peaks_at_the_sample_mean() {
        let p = problem(
            &[-1.0, 0.0, 1.0],
            PriorSpec::point_mass(1.0).unwrap(),
            MarginalKind::Mean,
            (-3.0, 3.0),
        );
        let r = estimate(&p, 1e-6).unwrap();
        assert!(r.converged);
        assert!(r.theta_hat.abs() < 1e-5, "theta_hat {}", r.theta_hat);
        assert_eq!(r.zero_density_points, 0);
        assert!(r.theta_hat >= -3.0 && r.theta_hat <= 3.0);
    }

    #[test]
    fn median_pseudo_likelihood_peaks_at_the_sample_mean() {
        let p = problem(
            &[-1.0, 0.0, 1.0],
            PriorSpec::exponential_unit(),
            MarginalKind::Median,
            (-3.0, 3.0),
        );
        let r = estimate(&p, 1e-6).unwrap();
        assert!(r.converged);
        assert!(r.theta_hat.abs() < 1e-5, "theta_hat {}", r.theta_hat);
    }

    #[test]
    fn single_observation_is_its_own_estimate() {
        for kind in [MarginalKind::Mean, MarginalKind::Median] {
            let p = problem(
                &[1.7],
                PriorSpec::point_mass(1.0).unwrap(),
                kind,
                (-5.0, 5.0),
            );
            let r = estimate(&p, 1e-6).unwrap();
            assert!((r.theta_hat - 1.7).abs() < 2e-6, "theta_hat {}", r.theta_hat);
        }
    }

    #[test]
    fn objectives_coincide_under_a_point_mass_prior() {
        let data = [-0.4, 0.9, 2.2, -1.3, 0.1];
        let tol = 1e-7;
        let mut hats = Vec::new();
        for kind in [MarginalKind::Mean, MarginalKind::Median] {
            let p = problem(&data, PriorSpec::point_mass(1.3).unwrap(), kind, (-4.0, 4.0));
            hats.push(estimate(&p, tol).unwrap().theta_hat);
        }
        assert!((hats[0] - hats[1]).abs() < 2.0 * tol);
    }

    #[test]
    fn objective_gradient_vanishes_at_the_maximum() {
        let tol = 1e-6;
        let p = problem(
            &[-1.0, 0.0, 1.0],
            PriorSpec::exponential_unit(),
            MarginalKind::Median,
            (-3.0, 3.0),
        );
        let r = estimate(&p, tol).unwrap();
        let objective = |theta: f64| {
            let model = MarginalCdf::new(MarginalKind::Median, p.family, p.prior.clone())
                .with_theta(theta)
                .unwrap();
            p.data
                .iter()
                .map(|&x| model.pdf(x).unwrap().ln())
                .sum::<f64>()
        };
        let h = 1e-4;
        let gradient = (objective(r.theta_hat + h) - objective(r.theta_hat - h)) / (2.0 * h);
        assert!(gradient.abs() <= 10.0 * tol, "gradient {gradient}");
    }

    #[test]
    fn scaling_data_and_bounds_scales_the_estimate() {
        let tol = 1e-7;
        let data = [-1.0, 0.5, 2.0];
        let p = problem(
            &data,
            PriorSpec::exponential_unit(),
            MarginalKind::Median,
            (-4.0, 4.0),
        );
        let base = estimate(&p, tol).unwrap().theta_hat;
        let scaled_data: Vec<f64> = data.iter().map(|x| 3.0 * x).collect();
        let scaled = EstimationProblem {
            data: scaled_data,
            theta_bounds: (-12.0, 12.0),
            ..p
        };
        let scaled_hat = estimate(&scaled, tol).unwrap().theta_hat;
        assert!(
            (scaled_hat - 3.0 * base).abs() < 1e-5,
            "{scaled_hat} vs {}",
            3.0 * base
        );
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let prior = PriorSpec::point_mass(1.0).unwrap();
        let p = problem(&[], prior.clone(), MarginalKind::Mean, (-1.0, 1.0));
        assert!(matches!(estimate(&p, 1e-6), Err(EstimationError::EmptyData)));
        let p = problem(&[f64::NAN], prior.clone(), MarginalKind::Mean, (-1.0, 1.0));
        assert!(matches!(
            estimate(&p, 1e-6),
            Err(EstimationError::NonFiniteData(_))
        ));
        let p = problem(&[0.0], prior.clone(), MarginalKind::Mean, (1.0, 1.0));
        assert!(matches!(
            estimate(&p, 1e-6),
            Err(EstimationError::InvalidBounds(..))
        ));
        let p = problem(&[0.0], prior.clone(), MarginalKind::Mean, (1.0, -1.0));
        assert!(matches!(
            estimate(&p, 1e-6),
            Err(EstimationError::InvalidBounds(..))
        ));
        let p = problem(&[0.0], prior, MarginalKind::Mean, (-1.0, 1.0));
        assert!(matches!(
            estimate(&p, 0.0),
            Err(EstimationError::InvalidTolerance(_))
        ));
    }

    #[test]
    fn unreachable_data_is_reported_not_fitted() {
        let p = problem(
            &[1000.0],
            PriorSpec::point_mass(1.0).unwrap(),
            MarginalKind::Mean,
            (-1.0, 1.0),
        );
        assert!(matches!(
            estimate(&p, 1e-6),
            Err(EstimationError::AllZeroDensity)
        ));
    }

    #[test]
    fn exhausting_the_budget_reports_not_converged() {
        let p = problem(
            &[-0.3, 0.4],
            PriorSpec::point_mass(1.0).unwrap(),
            MarginalKind::Mean,
            (-1.0, 1.0),
        );
        let r = estimate(&p, 1e-200).unwrap();
        assert!(!r.converged);
        assert_eq!(r.evaluations, EVALUATION_BUDGET);
        assert!((r.theta_hat - 0.05).abs() < 1e-3);
    }

    #[test]
    fn study_is_deterministic_and_reports_both_estimators() {
        let spec = GenerativeSpec {
            family: ConditionalFamily::normal_mean_var(0.0),
            prior: PriorSpec::point_mass(1.0).unwrap(),
        };
        let a = simulation_study(0.0, &spec, 5, 100, 11).unwrap();
        let b = simulation_study(0.0, &spec, 5, 100, 11).unwrap();
        assert_eq!(a.estimates, b.estimates);
        let c = simulation_study(0.0, &spec, 5, 100, 12).unwrap();
        assert_ne!(a.estimates, c.estimates);
        assert_eq!(a.estimates.len(), 100);
        assert_eq!(a.mean_objective.failures, 0);
        assert_eq!(a.median_objective.failures, 0);
        for (mean_est, median_est) in &a.estimates {
            assert!((mean_est - median_est).abs() < 2.0 * STUDY_TOLERANCE);
        }
        let identity = |s: &EstimatorSummary| (s.mse - (s.variance + s.bias * s.bias)).abs();
        assert!(identity(&a.mean_objective) < 1e-12);
        assert!(identity(&a.median_objective) < 1e-12);
    }

    #[test]
    fn single_observation_study_runs() {
        let spec = GenerativeSpec {
            family: ConditionalFamily::normal_mean_var(0.0),
            prior: PriorSpec::point_mass(1.0).unwrap(),
        };
        let table = simulation_study(0.0, &spec, 1, 100, 3).unwrap();
        assert_eq!(table.sample_size, 1);
        assert_eq!(table.estimates.len(), 100);
        assert!(table.mean_objective.variance > 0.1);
    }

    #[test]
    fn study_configuration_is_validated() {
        let spec = GenerativeSpec {
            family: ConditionalFamily::normal_mean_var(0.0),
            prior: PriorSpec::point_mass(1.0).unwrap(),
        };
        assert!(matches!(
            simulation_study(0.0, &spec, 0, 100, 1),
            Err(EstimationError::InvalidSampleSize(0))
        ));
        assert!(matches!(
            simulation_study(0.0, &spec, 5, 99, 1),
            Err(EstimationError::TooFewReplications(99))
        ));
        assert!(matches!(
            simulation_study(f64::NAN, &spec, 5, 100, 1),
            Err(EstimationError::NonFiniteData(_))
        ));
    }
}
