use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Subcommand};
use medmarg::dist::{ConditionalFamily, PriorSpec};
use medmarg::estimation::{estimate, simulation_study, EstimationProblem, GenerativeSpec};
use medmarg::hypothesis::{
    mp_test_for_location, power_curve, ump_known_sigma, PowerMethod, SimpleHypothesisTest,
};
use medmarg::linspace;
use medmarg::marginal::{verify_distribution_function, MarginalCdf, MarginalKind};
use medmarg::mc::{approximate_curve, McConfig};

use crate::output::{write_csv, write_svg, FigureSpec, Table};
use crate::spec::{
    estimation_failure, marginal_failure, mc_failure, test_failure, AlgorithmToken, CliError,
    Config, FamilyToken, GridSpec, KindToken, ModeToken, PriorToken, RunSpec, ScalePriorToken,
};

#[derive(Subcommand)]
pub enum Command {
    /// Evaluate a marginal distribution function at one point.
    Marginal(MarginalArgs),
    /// Approximate a marginal curve by Monte Carlo and write it as CSV.
    Approx(ApproxArgs),
    /// Calibrate the location tests and write their power curves.
    Power(PowerArgs),
    /// Fit a location parameter by maximising a marginal log-objective.
    Estimate(EstimateArgs),
    /// Check the built-in median marginals for distribution-function shape.
    Verify(VerifyArgs),
    /// Reproduce the report figures as CSV plus SVG.
    Figures(FiguresArgs),
}

pub fn run(command: &Command, config: &Config, out_flag: Option<&Path>) -> Result<(), CliError> {
    match command {
        Command::Marginal(args) => run_marginal(args),
        Command::Approx(args) => run_approx(args, config, out_flag),
        Command::Power(args) => run_power(args, config, out_flag),
        Command::Estimate(args) => run_estimate(args, config, out_flag),
        Command::Verify(args) => run_verify(args, config),
        Command::Figures(args) => run_figures(args, config, out_flag),
    }
}

fn ensure_out_dir(config: &Config, out_flag: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = config.out_dir(out_flag);
    std::fs::create_dir_all(&dir)
        .map_err(|err| CliError::usage(format!("cannot create {}: {err}", dir.display())))?;
    Ok(dir)
}

#[derive(Args)]
pub struct MarginalArgs {
    #[arg(long, value_enum)]
    family: FamilyToken,
    #[arg(long)]
    prior: PriorToken,
    /// Evaluation point.
    #[arg(long, allow_negative_numbers = true)]
    x: f64,
    #[arg(long, value_enum)]
    kind: KindToken,
    /// Location parameter for the normal families.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    theta: f64,
}

fn run_marginal(args: &MarginalArgs) -> Result<(), CliError> {
    let family = args.family.to_family(args.theta)?;
    let prior = args.prior.to_prior()?;
    let f = MarginalCdf::new(args.kind.to_kind(), family, prior);
    let value = f
        .eval(args.x)
        .map_err(marginal_failure("marginal evaluation"))?;
    println!("{value:.6}");
    Ok(())
}

#[derive(Args)]
pub struct ApproxArgs {
    #[arg(long, value_enum)]
    algorithm: AlgorithmToken,
    #[arg(long, value_enum)]
    family: FamilyToken,
    #[arg(long)]
    prior: PriorToken,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    theta: f64,
    /// Evaluation grid as min:max:points.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<GridSpec>,
    /// Prior draws.
    #[arg(long)]
    k: Option<usize>,
    /// Simulated observations per prior draw (empirical estimators).
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Redraw independently at every grid point.
    #[arg(long)]
    resample_per_x: bool,
    /// Write the isotonic projection of the curve.
    #[arg(long)]
    isotonic: bool,
}

fn run_approx(args: &ApproxArgs, config: &Config, out_flag: Option<&Path>) -> Result<(), CliError> {
    let grid = config.resolve(
        args.grid,
        "grid",
        GridSpec {
            min: 0.0,
            max: 10.0,
            points: 201,
        },
    )?;
    let k = config.resolve(args.k, "k", 1000)?;
    let l = config.resolve(args.l, "l", 1000)?;
    let seed = config.resolve(args.seed, "seed", 42)?;
    let out = ensure_out_dir(config, out_flag)?;

    let family = args.family.to_family(args.theta)?;
    let prior = args.prior.to_prior()?;
    let mut mc = McConfig::new(k, l, seed, grid.values());
    mc.resample_per_x = args.resample_per_x;
    let mut curve = approximate_curve(args.algorithm.to_algorithm(), &family, &prior, &mc)
        .map_err(mc_failure("curve approximation"))?;
    if args.isotonic {
        curve = curve.isotonic();
    }

    let name = args.algorithm.token();
    let mut spec = RunSpec::new("approx")
        .field("algorithm", name)
        .field("family", args.family.token())
        .field("prior", args.prior)
        .field("theta", args.theta)
        .field("grid", grid)
        .field("k", k);
    if matches!(args.algorithm, AlgorithmToken::M2 | AlgorithmToken::B2) {
        spec = spec.field("l", l);
    }
    let spec = spec
        .field("seed", seed)
        .field("resample_per_x", args.resample_per_x)
        .field("isotonic", args.isotonic);

    let path = out.join(format!("approx_{name}.csv"));
    write_csv(
        &path,
        &spec,
        &Table::from_curve("x", name, &curve.xs, &curve.values),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Args)]
pub struct PowerArgs {
    /// Nuisance prior: shape plus the scale it sits on.
    #[arg(long, value_enum)]
    prior: ScalePriorToken,
    #[arg(long)]
    alpha: Option<f64>,
    /// Location grid as min:max:points.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<GridSpec>,
    /// exact or mc.
    #[arg(long)]
    mode: Option<ModeToken>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn location_tests(
    target: ScalePriorToken,
    alpha: f64,
) -> Result<(SimpleHypothesisTest, SimpleHypothesisTest), CliError> {
    let calibrate = |kind: MarginalKind| {
        let model = MarginalCdf::new(kind, target.family(0.0), target.prior());
        mp_test_for_location(&model, 0.0, -1.0, alpha).map_err(test_failure("test calibration"))
    };
    Ok((calibrate(MarginalKind::Median)?, calibrate(MarginalKind::Mean)?))
}

fn run_power(args: &PowerArgs, config: &Config, out_flag: Option<&Path>) -> Result<(), CliError> {
    let alpha = config.resolve(args.alpha, "alpha", 0.05)?;
    let grid = config.resolve(
        args.grid,
        "grid",
        GridSpec {
            min: -3.0,
            max: 0.0,
            points: 61,
        },
    )?;
    let mode = config.resolve(args.mode, "mode", ModeToken::Exact)?;
    let mc_samples = config.resolve(args.mc_samples, "mc_samples", 100_000)?;
    let seed = config.resolve(args.seed, "seed", 42)?;
    let out = ensure_out_dir(config, out_flag)?;

    let (median, mean) = location_tests(args.prior, alpha)?;
    let narrow = ump_known_sigma(0.4, alpha).map_err(test_failure("test calibration"))?;
    let unit = ump_known_sigma(1.0, alpha).map_err(test_failure("test calibration"))?;

    let method = match mode {
        ModeToken::Exact => PowerMethod::Exact,
        ModeToken::Mc => PowerMethod::MonteCarlo,
    };
    let mus = grid.values();
    let tests = [&median, &mean, &narrow, &unit];
    let mut curves = Vec::with_capacity(tests.len());
    for (i, test) in tests.iter().enumerate() {
        let stream = seed.wrapping_add((i as u64).wrapping_mul(0x9E3779B97F4A7C15));
        curves.push(
            power_curve(test, &mus, method, mc_samples, stream)
                .map_err(test_failure("power evaluation"))?,
        );
    }

    let mut spec = RunSpec::new("power")
        .field("prior", args.prior.token())
        .field("alpha", alpha)
        .field("grid", grid)
        .field("mode", mode);
    if mode == ModeToken::Mc {
        spec = spec.field("mc_samples", mc_samples).field("seed", seed);
    }

    let columns = vec![
        "mu".to_string(),
        "power_median".to_string(),
        "power_mean".to_string(),
        "power_known_sigma_0.4".to_string(),
        "power_known_sigma_1".to_string(),
    ];
    let rows = mus
        .iter()
        .enumerate()
        .map(|(i, &mu)| {
            let mut row = vec![mu];
            row.extend(curves.iter().map(|c| c.power[i]));
            row
        })
        .collect();
    let path = out.join("power.csv");
    write_csv(&path, &spec, &Table::new(columns, rows))?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Args)]
pub struct EstimateArgs {
    /// File of observations, one number per line.
    #[arg(long, conflicts_with = "study")]
    data: Option<PathBuf>,
    /// Run a bias/variance simulation study instead of fitting data.
    #[arg(long)]
    study: bool,
    #[arg(long, value_enum, default_value = "normal-var")]
    family: FamilyToken,
    #[arg(long, default_value = "exp")]
    prior: PriorToken,
    /// Objective to maximise; both when omitted.
    #[arg(long, value_enum)]
    kind: Option<KindToken>,
    #[arg(long)]
    tol: Option<f64>,
    /// Search interval as lo:hi; defaults to the data range padded by 1.
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    true_theta: f64,
    /// Observations per replication in study mode.
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_data_file(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| CliError::usage(format!("cannot read {}: {err}", path.display())))?;
    let mut data = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| {
            CliError::usage(format!(
                "{} line {}: not a number: `{line}`",
                path.display(),
                lineno + 1
            ))
        })?;
        data.push(value);
    }
    Ok(data)
}

fn parse_bounds(raw: &str) -> Result<(f64, f64), CliError> {
    let Some((lo, hi)) = raw.split_once(':') else {
        return Err(CliError::usage(format!(
            "bad bounds `{raw}` (expected lo:hi)"
        )));
    };
    let lo: f64 = lo
        .parse()
        .map_err(|_| CliError::usage(format!("bad lower bound `{lo}`")))?;
    let hi: f64 = hi
        .parse()
        .map_err(|_| CliError::usage(format!("bad upper bound `{hi}`")))?;
    Ok((lo, hi))
}

fn objective_label(kind: KindToken) -> &'static str {
    match kind {
        KindToken::Mean => "mean_objective",
        KindToken::Median => "median_objective",
    }
}

fn run_estimate(
    args: &EstimateArgs,
    config: &Config,
    out_flag: Option<&Path>,
) -> Result<(), CliError> {
    let tol = config.resolve(args.tol, "tol", 1e-6)?;
    let seed = config.resolve(args.seed, "seed", 42)?;
    let family = args.family.to_family(0.0)?;
    let prior = args.prior.to_prior()?;

    if args.study {
        let out = ensure_out_dir(config, out_flag)?;
        let generative = GenerativeSpec { family, prior };
        let table = simulation_study(args.true_theta, &generative, args.n, args.reps, seed)
            .map_err(estimation_failure("simulation study"))?;
        let spec = RunSpec::new("estimate")
            .field("study", true)
            .field("family", args.family.token())
            .field("prior", args.prior)
            .field("true_theta", args.true_theta)
            .field("n", args.n)
            .field("reps", args.reps)
            .field("seed", seed)
            .field("tol", tol);
        let columns = vec![
            "rep".to_string(),
            "mean_estimate".to_string(),
            "median_estimate".to_string(),
        ];
        let rows = table
            .estimates
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| vec![i as f64, a, b])
            .collect();
        let path = out.join("estimate_study.csv");
        write_csv(&path, &spec, &Table::new(columns, rows))?;
        for (label, summary) in [
            ("mean_objective", &table.mean_objective),
            ("median_objective", &table.median_objective),
        ] {
            println!(
                "{label}: bias={:.6} variance={:.6} mse={:.6} failures={}",
                summary.bias, summary.variance, summary.mse, summary.failures
            );
        }
        println!("wrote {}", path.display());
        return Ok(());
    }

    let Some(data_path) = &args.data else {
        return Err(CliError::usage("pass either --data <file> or --study"));
    };
    let data = parse_data_file(data_path)?;
    let theta_bounds = match &args.bounds {
        Some(raw) => parse_bounds(raw)?,
        None => {
            let min = data.iter().copied().fold(f64::INFINITY, f64::min);
            let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (min - 1.0, max + 1.0)
        }
    };
    let kinds = match args.kind {
        Some(kind) => vec![kind],
        None => vec![KindToken::Mean, KindToken::Median],
    };
    for kind in kinds {
        let problem = EstimationProblem {
            data: data.clone(),
            family,
            prior: prior.clone(),
            theta_bounds,
            objective_kind: kind.to_kind(),
        };
        let fit = estimate(&problem, tol).map_err(estimation_failure("estimation"))?;
        println!(
            "{}: theta_hat={:.6} log_objective={:.6} evaluations={} converged={}",
            objective_label(kind),
            fit.theta_hat,
            fit.log_objective,
            fit.evaluations,
            fit.converged
        );
    }
    Ok(())
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long)]
    tol: Option<f64>,
    /// Probe-grid size per setup.
    #[arg(long)]
    points: Option<usize>,
}

fn builtin_median_marginals() -> [(&'static str, ConditionalFamily, PriorSpec); 4] {
    [
        (
            "exp rate, uniform prior",
            ConditionalFamily::exponential_rate(),
            PriorSpec::uniform_unit(),
        ),
        (
            "exp rate, exponential prior",
            ConditionalFamily::exponential_rate(),
            PriorSpec::exponential_unit(),
        ),
        (
            "normal on variance, uniform prior",
            ConditionalFamily::normal_mean_var(0.0),
            PriorSpec::uniform_unit(),
        ),
        (
            "normal on variance, exponential prior",
            ConditionalFamily::normal_mean_var(0.0),
            PriorSpec::exponential_unit(),
        ),
    ]
}

fn run_verify(args: &VerifyArgs, config: &Config) -> Result<(), CliError> {
    let tol = config.resolve(args.tol, "tol", 1e-6)?;
    let points = config.resolve(args.points, "points", 500)?;
    if points < 2 {
        return Err(CliError::usage("--points must be at least 2"));
    }
    let mut failed = Vec::new();
    for (name, family, prior) in builtin_median_marginals() {
        let f = MarginalCdf::new(MarginalKind::Median, family, prior);
        let (grid, far) = if family.support().0 == 0.0 {
            (linspace(0.02, 10.0, points), (-1.0, 1e6))
        } else {
            (linspace(-8.0, 8.0, points), (-60.0, 60.0))
        };
        let report = verify_distribution_function(&f, &grid, far, tol)
            .map_err(marginal_failure("distribution verification"))?;
        if report.passed {
            println!(
                "{name}: pass (worst violation {:.2e}, max jump {:.2e})",
                report.worst_violation, report.max_jump
            );
        } else {
            println!(
                "{name}: FAIL (monotone={}, bounds_ok={}, limits_ok={}, worst violation {:.2e})",
                report.monotone, report.bounds_ok, report.limits_ok, report.worst_violation
            );
            failed.push(name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "distribution verification failed for: {}",
            failed.join("; ")
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FigureSelect {
    One,
    Two,
    Three,
    Four,
    All,
}

impl FromStr for FigureSelect {
    type Err = String;

    fn from_str(s: &str) -> Result<FigureSelect, String> {
        match s {
            "1" => Ok(FigureSelect::One),
            "2" => Ok(FigureSelect::Two),
            "3" => Ok(FigureSelect::Three),
            "4" => Ok(FigureSelect::Four),
            "all" => Ok(FigureSelect::All),
            _ => Err(format!("unknown figure `{s}` (expected 1, 2, 3, 4, or all)")),
        }
    }
}

impl fmt::Display for FigureSelect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FigureSelect::One => write!(f, "1"),
            FigureSelect::Two => write!(f, "2"),
            FigureSelect::Three => write!(f, "3"),
            FigureSelect::Four => write!(f, "4"),
            FigureSelect::All => write!(f, "all"),
        }
    }
}

#[derive(Args)]
pub struct FiguresArgs {
    /// Which figure to write: 1, 2, 3, 4, or all.
    #[arg(long, default_value = "all")]
    which: FigureSelect,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
}

struct NamedCurve {
    name: String,
    values: Vec<f64>,
}

fn write_figure(
    out: &Path,
    figure: u8,
    spec: &RunSpec,
    x_label: &str,
    xs: &[f64],
    curves: &[NamedCurve],
) -> Result<(), CliError> {
    for curve in curves {
        let path = out.join(format!("fig{figure}_{}.csv", curve.name));
        write_csv(
            &path,
            spec,
            &Table::from_curve(x_label, &curve.name, xs, &curve.values),
        )?;
        println!("wrote {}", path.display());
    }
    let svg_curves = curves
        .iter()
        .map(|c| (c.name.clone(), xs, c.values.as_slice()))
        .collect();
    let path = out.join(format!("fig{figure}.svg"));
    write_svg(
        &path,
        spec,
        &FigureSpec {
            x_label,
            curves: svg_curves,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn approximation_figure(
    out: &Path,
    figure: u8,
    prior_token: PriorToken,
    algorithms: [AlgorithmToken; 2],
    k: usize,
    l: usize,
    seed: u64,
) -> Result<(), CliError> {
    let operation = format!("figure {figure}");
    let grid = GridSpec {
        min: 0.0,
        max: 10.0,
        points: 201,
    };
    let xs = grid.values();
    let family = ConditionalFamily::exponential_rate();
    let prior = prior_token.to_prior()?;

    let mut curves = Vec::new();
    for (kind, name) in [
        (MarginalKind::Median, "exact_median"),
        (MarginalKind::Mean, "exact_mean"),
    ] {
        let f = MarginalCdf::new(kind, family, prior.clone());
        curves.push(NamedCurve {
            name: name.to_string(),
            values: f.eval_grid(&xs).map_err(marginal_failure(&operation))?,
        });
    }
    let mc = McConfig::new(k, l, seed, xs.clone());
    for algorithm in algorithms {
        let curve = approximate_curve(algorithm.to_algorithm(), &family, &prior, &mc)
            .map_err(mc_failure(&operation))?;
        curves.push(NamedCurve {
            name: algorithm.token().to_string(),
            values: curve.values,
        });
    }

    let mut spec = RunSpec::new("figures")
        .field("figure", figure)
        .field("family", "exp")
        .field("prior", prior_token)
        .field("grid", grid)
        .field("k", k);
    if matches!(algorithms[0], AlgorithmToken::M2) {
        spec = spec.field("l", l);
    }
    let spec = spec.field("seed", seed);
    write_figure(out, figure, &spec, "x", &xs, &curves)
}

fn power_figure(out: &Path, figure: u8, on_sd: bool, alpha: f64) -> Result<(), CliError> {
    let grid = GridSpec {
        min: -3.0,
        max: 0.0,
        points: 61,
    };
    let mus = grid.values();
    let exact = |test: &SimpleHypothesisTest| {
        power_curve(test, &mus, PowerMethod::Exact, 0, 0)
            .map(|c| c.power)
            .map_err(test_failure("power evaluation"))
    };

    let mut curves = Vec::new();
    for (target, label) in if on_sd {
        [
            (ScalePriorToken::UniformOnSd, "uniform"),
            (ScalePriorToken::ExpOnSd, "exp"),
        ]
    } else {
        [
            (ScalePriorToken::UniformOnVariance, "uniform"),
            (ScalePriorToken::ExpOnVariance, "exp"),
        ]
    } {
        let (median, mean) = location_tests(target, alpha)?;
        curves.push(NamedCurve {
            name: format!("{label}_median"),
            values: exact(&median)?,
        });
        curves.push(NamedCurve {
            name: format!("{label}_mean"),
            values: exact(&mean)?,
        });
    }
    if !on_sd {
        for (sigma, name) in [(0.4, "known_sigma_0.4"), (1.0, "known_sigma_1")] {
            let test = ump_known_sigma(sigma, alpha).map_err(test_failure("test calibration"))?;
            curves.push(NamedCurve {
                name: name.to_string(),
                values: exact(&test)?,
            });
        }
    }

    let spec = RunSpec::new("figures")
        .field("figure", figure)
        .field("scale", if on_sd { "sd" } else { "variance" })
        .field("grid", grid)
        .field("alpha", alpha);
    write_figure(out, figure, &spec, "mu", &mus, &curves)
}

fn run_figures(
    args: &FiguresArgs,
    config: &Config,
    out_flag: Option<&Path>,
) -> Result<(), CliError> {
    let k = config.resolve(args.k, "k", 1000)?;
    let l = config.resolve(args.l, "l", 1000)?;
    let seed = config.resolve(args.seed, "seed", 42)?;
    let alpha = config.resolve(args.alpha, "alpha", 0.05)?;
    let out = ensure_out_dir(config, out_flag)?;

    let selected = |figure: FigureSelect| args.which == figure || args.which == FigureSelect::All;
    if selected(FigureSelect::One) {
        approximation_figure(
            &out,
            1,
            PriorToken::Uniform01,
            [AlgorithmToken::M1, AlgorithmToken::B1],
            k,
            l,
            seed,
        )?;
    }
    if selected(FigureSelect::Two) {
        approximation_figure(
            &out,
            2,
            PriorToken::Exp,
            [AlgorithmToken::M2, AlgorithmToken::B2],
            k,
            l,
            seed,
        )?;
    }
    if selected(FigureSelect::Three) {
        power_figure(&out, 3, false, alpha)?;
    }
    if selected(FigureSelect::Four) {
        power_figure(&out, 4, true, alpha)?;
    }
    Ok(())
}
