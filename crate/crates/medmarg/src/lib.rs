//! Marginal distribution functions built from a conditional model and a prior.
//!
//! The usual marginal CDF averages the conditional CDF over the prior,
//! `F(x) = E_pi[F(x|nu)]`. This crate also implements its median-based
//! counterpart, `F~(x) = median_pi[F(x|nu)]`, which stays a valid
//! distribution function but is far more resistant to prior
//! contamination. On top of the two marginals sit Monte Carlo curve
//! approximations, most-powerful simple-vs-simple tests with power
//! curves, and point estimation that maximises a pseudo-likelihood
//! built from the median marginal density.
//!
//! ```
//! use medmarg::dist::{ConditionalFamily, PriorSpec};
//! use medmarg::marginal::{MarginalCdf, MarginalKind};
//!
//! let family = ConditionalFamily::exponential_rate();
//! let prior = PriorSpec::uniform_unit();
//! let f = MarginalCdf::new(MarginalKind::Median, family, prior);
//! let v = f.eval(2.0).unwrap();
//! assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
//! ```

#![allow(clippy::excessive_precision)]

pub mod dist;
pub mod estimation;
mod exec;
pub mod hypothesis;
pub mod marginal;
pub mod mc;
pub mod normal;

pub use dist::{ConditionalFamily, DistError, FamilyId, Monotonicity, NuDirection, PriorId, PriorSpec};
pub use estimation::{
    estimate, simulation_study, EstimateResult, EstimationError, EstimationProblem,
    EstimatorSummary, GenerativeSpec, StudyTable,
};
pub use hypothesis::{
    compare_power, mp_test, mp_test_for_location, power_curve, ump_known_sigma, DominanceReport,
    DominanceVerdict, PowerCurve, PowerMethod, RejectRegion, SimpleHypothesisTest, TestError,
    TestVariant,
};
pub use marginal::{
    mean_marginal_cdf, median_marginal_cdf, verify_distribution_function, MarginalCdf,
    MarginalError, MarginalKind, MarginalMethod, QuadratureConfig, VerificationReport,
};
pub use mc::{
    approximate_curve, curve_from_prior_draws, isotonic_projection, sample_median, ApproxCurve,
    CurveAlgorithm, EmpiricalCdf, McConfig, McError,
};

/// Evenly spaced grid of `points` values from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (points - 1) as f64;
            (0..points)
                .map(|i| {
                    if i == points - 1 {
                        end
                    } else {
                        start + step * i as f64
                    }
                })
                .collect()
        }
    }
}
