#![allow(clippy::excessive_precision)]

use medmarg::dist::{ConditionalFamily, PriorSpec};
use medmarg::hypothesis::{
    compare_power, mp_test, mp_test_for_location, power_curve, ump_known_sigma, DominanceVerdict,
    PowerMethod, SimpleHypothesisTest, TestVariant,
};
use medmarg::linspace;
use medmarg::marginal::{MarginalCdf, MarginalKind};

fn location_model(kind: MarginalKind, on_sd: bool, prior: PriorSpec) -> MarginalCdf {
    let family = if on_sd {
        ConditionalFamily::normal_mean_sd(0.0)
    } else {
        ConditionalFamily::normal_mean_var(0.0)
    };
    MarginalCdf::new(kind, family, prior)
}

fn location_test(kind: MarginalKind, on_sd: bool, prior: PriorSpec) -> SimpleHypothesisTest {
    mp_test_for_location(&location_model(kind, on_sd, prior), 0.0, -1.0, 0.05).unwrap()
}

#[test]
fn median_test_thresholds_are_reproducible() {
    let cases = [
        (false, PriorSpec::exponential_unit(), -1.3694304717979122),
        (false, PriorSpec::uniform_unit(), -1.1630871536766741),
        (true, PriorSpec::exponential_unit(), -1.1401256539552134),
        (true, PriorSpec::uniform_unit(), -0.82242681347573636),
    ];
    for (on_sd, prior, expected) in cases {
        let test = location_test(MarginalKind::Median, on_sd, prior);
        assert!(
            (test.threshold() - expected).abs() < 1e-9,
            "got {} expected {expected}",
            test.threshold()
        );
        assert_eq!(test.variant, TestVariant::MedianMarginal);
        assert_eq!(test.theta1, Some(-1.0));
    }
}

#[test]
fn mean_test_thresholds_are_reproducible() {
    let cases = [
        (false, PriorSpec::exponential_unit(), -1.6281735335151468),
        (false, PriorSpec::uniform_unit(), -1.1803198704477709),
        (true, PriorSpec::exponential_unit(), -2.050960000323954),
        (true, PriorSpec::uniform_unit(), -0.9738554595001152),
    ];
    for (on_sd, prior, expected) in cases {
        let test = location_test(MarginalKind::Mean, on_sd, prior);
        assert!(
            (test.threshold() - expected).abs() < 1e-6,
            "got {} expected {expected}",
            test.threshold()
        );
        assert_eq!(test.variant, TestVariant::MeanMarginal);
    }
}

#[test]
fn known_sigma_thresholds_scale_with_sigma() {
    let narrow = ump_known_sigma(0.4, 0.05).unwrap();
    assert!((narrow.threshold() - -0.65794145078058909).abs() < 1e-12);
    let unit = ump_known_sigma(1.0, 0.05).unwrap();
    assert!((unit.threshold() - -1.6448536269514727).abs() < 1e-12);
    assert_eq!(unit.variant, TestVariant::KnownSigma);
    assert!((unit.achieved_size().unwrap() - 0.05).abs() < 1e-12);
}

#[test]
fn raw_density_inputs_agree_with_the_known_sigma_test() {
    let reference = ump_known_sigma(1.0, 0.05).unwrap();
    let null = MarginalCdf::new(
        MarginalKind::Mean,
        ConditionalFamily::normal_mean_sd(0.0),
        PriorSpec::point_mass(1.0).unwrap(),
    );
    let f0 = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    for i in 1..=12 {
        let mu1 = -3.0 * i as f64 / 12.0;
        let f1 = move |x: f64| (-0.5 * (x - mu1) * (x - mu1)).exp()
            / (2.0 * std::f64::consts::PI).sqrt();
        let test = mp_test(f0, f1, 0.05, &null).unwrap();
        assert!(
            (test.threshold() - reference.threshold()).abs() < 1e-9,
            "mu1 {mu1}"
        );
        assert_eq!(test.variant, TestVariant::KnownSigma);
        assert!(test.lr_monotone, "mu1 {mu1}");
    }
}

#[test]
fn calibrated_threshold_beats_size_matched_two_sided_splits() {
    let alpha = 0.05;
    let model = location_model(
        MarginalKind::Median,
        false,
        PriorSpec::exponential_unit(),
    );
    let test = mp_test_for_location(&model, 0.0, -1.5, alpha).unwrap();
    let best = test.power_at(-1.5).unwrap();
    let null = model.clone();
    let alt = model.with_theta(-1.5).unwrap();
    for j in 1..=20 {
        let eps = alpha * j as f64 / 21.0;
        let lower = null.quantile(alpha - eps).unwrap();
        let upper = null.quantile(1.0 - eps).unwrap();
        let size = null.eval(lower).unwrap() + 1.0 - null.eval(upper).unwrap();
        assert!((size - alpha).abs() < 1e-9, "split {j} size {size}");
        let power = alt.eval(lower).unwrap() + 1.0 - alt.eval(upper).unwrap();
        assert!(
            power <= best + 1e-9,
            "split {j}: power {power} exceeds {best}"
        );
    }
}

#[test]
fn monte_carlo_size_matches_the_nominal_level() {
    let tests = [
        location_test(MarginalKind::Median, false, PriorSpec::exponential_unit()),
        location_test(MarginalKind::Mean, false, PriorSpec::exponential_unit()),
        ump_known_sigma(0.4, 0.05).unwrap(),
        ump_known_sigma(1.0, 0.05).unwrap(),
    ];
    for (i, test) in tests.iter().enumerate() {
        let curve = power_curve(test, &[0.0], PowerMethod::MonteCarlo, 1_000_000, 17).unwrap();
        assert!(
            (curve.power[0] - 0.05).abs() < 0.005,
            "test {i}: size {}",
            curve.power[0]
        );
        assert!(curve.std_error[0] > 0.0 && curve.std_error[0] < 0.001);
    }
}

#[test]
fn exact_power_spot_values() {
    let median = location_test(MarginalKind::Median, false, PriorSpec::exponential_unit());
    assert!((median.power_at(-2.0).unwrap() - 0.77559223384703827).abs() < 1e-12);
    let ump = ump_known_sigma(1.0, 0.05).unwrap();
    assert!((ump.power_at(-2.0).unwrap() - 0.63876003131233506).abs() < 1e-12);
}

fn margin_at(kind_pair: (&SimpleHypothesisTest, &SimpleHypothesisTest), mu: f64) -> f64 {
    kind_pair.0.power_at(mu).unwrap() - kind_pair.1.power_at(mu).unwrap()
}

#[test]
fn exact_power_margins_match_frozen_values() {
    let mus = [-3.0, -2.5, -2.0, -1.5, -1.0, -0.5];
    let tables: [(bool, PriorSpec, [f64; 6]); 4] = [
        (
            false,
            PriorSpec::exponential_unit(),
            [0.04676, 0.05848, 0.07112, 0.14520, 0.12296, 0.04677],
        ),
        (
            false,
            PriorSpec::uniform_unit(),
            [0.00499, 0.00653, -0.00725, -0.02516, 0.03719, 0.02652],
        ),
        (
            true,
            PriorSpec::exponential_unit(),
            [0.12718, 0.20328, 0.46353, 0.49679, 0.30156, 0.10269],
        ),
        (
            true,
            PriorSpec::uniform_unit(),
            [0.00299, 0.01207, 0.03490, 0.05071, 0.08972, 0.10417],
        ),
    ];
    for (on_sd, prior, expected) in tables {
        let median = location_test(MarginalKind::Median, on_sd, prior.clone());
        let mean = location_test(MarginalKind::Mean, on_sd, prior);
        for (i, &mu) in mus.iter().enumerate() {
            let margin = margin_at((&median, &mean), mu);
            assert!(
                (margin - expected[i]).abs() < 1e-5,
                "on_sd {on_sd} mu {mu}: margin {margin} expected {}",
                expected[i]
            );
        }
    }
}

#[test]
fn full_precision_margins_at_minus_one() {
    let cases = [
        (false, PriorSpec::exponential_unit(), 0.12295594215496916),
        (false, PriorSpec::uniform_unit(), 0.03719245364758034),
        (true, PriorSpec::exponential_unit(), 0.3015584002042625),
        (true, PriorSpec::uniform_unit(), 0.08971597151337907),
    ];
    for (on_sd, prior, expected) in cases {
        let median = location_test(MarginalKind::Median, on_sd, prior.clone());
        let mean = location_test(MarginalKind::Mean, on_sd, prior);
        let margin = margin_at((&median, &mean), -1.0);
        assert!(
            (margin - expected).abs() < 1e-6,
            "on_sd {on_sd}: margin {margin} expected {expected}"
        );
    }
}

#[test]
fn scale_priors_widen_the_margin_over_variance_priors() {
    for prior in [PriorSpec::exponential_unit(), PriorSpec::uniform_unit()] {
        let var_margin = margin_at(
            (
                &location_test(MarginalKind::Median, false, prior.clone()),
                &location_test(MarginalKind::Mean, false, prior.clone()),
            ),
            -1.0,
        );
        let sd_margin = margin_at(
            (
                &location_test(MarginalKind::Median, true, prior.clone()),
                &location_test(MarginalKind::Mean, true, prior),
            ),
            -1.0,
        );
        assert!(
            sd_margin > var_margin,
            "sd margin {sd_margin} vs variance margin {var_margin}"
        );
    }
}

#[test]
fn dominance_verdicts_on_exact_curves() {
    let grid = linspace(-3.0, 0.0, 61);
    let cases = [
        (false, PriorSpec::exponential_unit(), DominanceVerdict::ADominates),
        (false, PriorSpec::uniform_unit(), DominanceVerdict::Crossing),
        (true, PriorSpec::exponential_unit(), DominanceVerdict::ADominates),
        (true, PriorSpec::uniform_unit(), DominanceVerdict::ADominates),
    ];
    for (on_sd, prior, expected) in cases {
        let median = location_test(MarginalKind::Median, on_sd, prior.clone());
        let mean = location_test(MarginalKind::Mean, on_sd, prior);
        let a = power_curve(&median, &grid, PowerMethod::Exact, 0, 0).unwrap();
        let b = power_curve(&mean, &grid, PowerMethod::Exact, 0, 0).unwrap();
        let report = compare_power(&a, &b).unwrap();
        assert_eq!(report.verdict, expected, "on_sd {on_sd}");
    }
}

#[test]
fn ratio_monotonicity_flags_per_model() {
    let cases = [
        (MarginalKind::Median, false, PriorSpec::exponential_unit(), true),
        (MarginalKind::Median, false, PriorSpec::uniform_unit(), true),
        (MarginalKind::Median, true, PriorSpec::exponential_unit(), true),
        (MarginalKind::Median, true, PriorSpec::uniform_unit(), true),
        (MarginalKind::Mean, false, PriorSpec::exponential_unit(), true),
        (MarginalKind::Mean, false, PriorSpec::uniform_unit(), true),
        (MarginalKind::Mean, true, PriorSpec::exponential_unit(), false),
        (MarginalKind::Mean, true, PriorSpec::uniform_unit(), false),
    ];
    for (kind, on_sd, prior, expected) in cases {
        let test = location_test(kind, on_sd, prior);
        assert_eq!(
            test.lr_monotone, expected,
            "{kind:?} on_sd {on_sd} flags {}",
            test.lr_monotone
        );
    }
}
