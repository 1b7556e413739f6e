use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use medmarg::dist::{ConditionalFamily, PriorSpec};
use medmarg::estimation::EstimationError;
use medmarg::hypothesis::TestError;
use medmarg::marginal::{MarginalError, MarginalKind};
use medmarg::mc::{CurveAlgorithm, McError};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }

    pub fn numerical(operation: &str, err: impl fmt::Display) -> CliError {
        CliError::Numerical(format!("{operation}: {err}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> CliError {
        CliError::Usage(format!("i/o failure: {err}"))
    }
}

pub fn marginal_failure(operation: &str) -> impl Fn(MarginalError) -> CliError + '_ {
    move |err| CliError::numerical(operation, err)
}

pub fn mc_failure(operation: &str) -> impl Fn(McError) -> CliError + '_ {
    move |err| CliError::numerical(operation, err)
}

pub fn test_failure(operation: &str) -> impl Fn(TestError) -> CliError + '_ {
    move |err| CliError::numerical(operation, err)
}

pub fn estimation_failure(operation: &str) -> impl Fn(EstimationError) -> CliError + '_ {
    move |err| match err {
        EstimationError::EmptyData
        | EstimationError::NonFiniteData(_)
        | EstimationError::InvalidBounds(_, _)
        | EstimationError::InvalidTolerance(_)
        | EstimationError::InvalidSampleSize(_)
        | EstimationError::TooFewReplications(_) => CliError::Usage(err.to_string()),
        other => CliError::numerical(operation, other),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FamilyToken {
    /// Exponential with rate nu.
    Exp,
    /// Normal with mean theta and variance nu.
    NormalVar,
    /// Normal with mean theta and standard deviation nu.
    NormalSd,
}

impl FamilyToken {
    pub fn to_family(self, theta: f64) -> Result<ConditionalFamily, CliError> {
        match self {
            FamilyToken::Exp => {
                if theta != 0.0 {
                    Err(CliError::usage(
                        "the exponential family has no location parameter",
                    ))
                } else {
                    Ok(ConditionalFamily::exponential_rate())
                }
            }
            FamilyToken::NormalVar => Ok(ConditionalFamily::normal_mean_var(theta)),
            FamilyToken::NormalSd => Ok(ConditionalFamily::normal_mean_sd(theta)),
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            FamilyToken::Exp => "exp",
            FamilyToken::NormalVar => "normal-var",
            FamilyToken::NormalSd => "normal-sd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PriorToken {
    Uniform01,
    Exp,
    Point(f64),
}

impl FromStr for PriorToken {
    type Err = String;

    fn from_str(s: &str) -> Result<PriorToken, String> {
        match s {
            "uniform01" => Ok(PriorToken::Uniform01),
            "exp" => Ok(PriorToken::Exp),
            _ => match s.strip_prefix("point:") {
                Some(v) => v
                    .parse::<f64>()
                    .map(PriorToken::Point)
                    .map_err(|_| format!("bad point-mass value in prior `{s}`")),
                None => Err(format!(
                    "unknown prior `{s}` (expected uniform01, exp, or point:<value>)"
                )),
            },
        }
    }
}

impl fmt::Display for PriorToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorToken::Uniform01 => write!(f, "uniform01"),
            PriorToken::Exp => write!(f, "exp"),
            PriorToken::Point(v) => write!(f, "point:{v}"),
        }
    }
}

impl PriorToken {
    pub fn to_prior(self) -> Result<PriorSpec, CliError> {
        match self {
            PriorToken::Uniform01 => Ok(PriorSpec::uniform_unit()),
            PriorToken::Exp => Ok(PriorSpec::exponential_unit()),
            PriorToken::Point(v) => {
                PriorSpec::point_mass(v).map_err(|err| CliError::usage(err.to_string()))
            }
        }
    }
}

/// Prior selector for the location-testing commands: names both the
/// prior shape and the nuisance scale it sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ScalePriorToken {
    ExpOnVariance,
    UniformOnVariance,
    ExpOnSd,
    UniformOnSd,
}

impl ScalePriorToken {
    pub fn family(self, theta: f64) -> ConditionalFamily {
        match self {
            ScalePriorToken::ExpOnVariance | ScalePriorToken::UniformOnVariance => {
                ConditionalFamily::normal_mean_var(theta)
            }
            ScalePriorToken::ExpOnSd | ScalePriorToken::UniformOnSd => {
                ConditionalFamily::normal_mean_sd(theta)
            }
        }
    }

    pub fn prior(self) -> PriorSpec {
        match self {
            ScalePriorToken::ExpOnVariance | ScalePriorToken::ExpOnSd => {
                PriorSpec::exponential_unit()
            }
            ScalePriorToken::UniformOnVariance | ScalePriorToken::UniformOnSd => {
                PriorSpec::uniform_unit()
            }
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            ScalePriorToken::ExpOnVariance => "exp-on-variance",
            ScalePriorToken::UniformOnVariance => "uniform-on-variance",
            ScalePriorToken::ExpOnSd => "exp-on-sd",
            ScalePriorToken::UniformOnSd => "uniform-on-sd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum KindToken {
    Median,
    Mean,
}

impl KindToken {
    pub fn to_kind(self) -> MarginalKind {
        match self {
            KindToken::Median => MarginalKind::Median,
            KindToken::Mean => MarginalKind::Mean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AlgorithmToken {
    M1,
    M2,
    B1,
    B2,
}

impl AlgorithmToken {
    pub fn to_algorithm(self) -> CurveAlgorithm {
        match self {
            AlgorithmToken::M1 => CurveAlgorithm::MedianOfConditionals,
            AlgorithmToken::M2 => CurveAlgorithm::MedianOfEmpiricals,
            AlgorithmToken::B1 => CurveAlgorithm::MeanOfConditionals,
            AlgorithmToken::B2 => CurveAlgorithm::MeanOfEmpiricals,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            AlgorithmToken::M1 => "m1",
            AlgorithmToken::M2 => "m2",
            AlgorithmToken::B1 => "b1",
            AlgorithmToken::B2 => "b2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeToken {
    Exact,
    Mc,
}

impl FromStr for ModeToken {
    type Err = String;

    fn from_str(s: &str) -> Result<ModeToken, String> {
        match s {
            "exact" => Ok(ModeToken::Exact),
            "mc" => Ok(ModeToken::Mc),
            _ => Err(format!("unknown mode `{s}` (expected exact or mc)")),
        }
    }
}

impl fmt::Display for ModeToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeToken::Exact => write!(f, "exact"),
            ModeToken::Mc => write!(f, "mc"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<GridSpec, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("bad grid `{s}` (expected min:max:points)"));
        }
        let min: f64 = parts[0]
            .parse()
            .map_err(|_| format!("bad grid minimum `{}`", parts[0]))?;
        let max: f64 = parts[1]
            .parse()
            .map_err(|_| format!("bad grid maximum `{}`", parts[1]))?;
        let points: usize = parts[2]
            .parse()
            .map_err(|_| format!("bad grid point count `{}`", parts[2]))?;
        if !min.is_finite() || !max.is_finite() || min >= max {
            return Err(format!("grid `{s}` needs finite min < max"));
        }
        if points < 2 {
            return Err(format!("grid `{s}` needs at least 2 points"));
        }
        Ok(GridSpec { min, max, points })
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.min, self.max, self.points)
    }
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        medmarg::linspace(self.min, self.max, self.points)
    }
}

const CONFIG_KEYS: [&str; 10] = [
    "alpha", "grid", "k", "l", "mc_samples", "mode", "out", "points", "seed", "tol",
];

/// Defaults loaded from a plain-text `key=value` file; a flag given on
/// the command line always wins over the file.
#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|err| CliError::usage(format!("cannot read {}: {err}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "{} line {}: expected key=value, got `{line}`",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim();
            if !CONFIG_KEYS.contains(&key) {
                return Err(CliError::usage(format!(
                    "{} line {}: unknown key `{key}`",
                    path.display(),
                    lineno + 1
                )));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Config { entries })
    }

    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        if let Some(value) = flag {
            return Ok(value);
        }
        match self.entries.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|err| CliError::usage(format!("config key {key}: {err}"))),
            None => Ok(default),
        }
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(dir) = flag {
            return dir.to_path_buf();
        }
        if let Some(dir) = self.entries.get("out") {
            return PathBuf::from(dir);
        }
        match std::env::var_os("MEDMARG_OUT_DIR") {
            Some(dir) => PathBuf::from(dir),
            None => PathBuf::from("."),
        }
    }
}

/// The resolved settings of one invocation, embedded verbatim in every
/// output file so a run can be reproduced from its artifacts.
#[derive(Clone, Debug)]
pub struct RunSpec {
    fields: Vec<(&'static str, String)>,
}

impl RunSpec {
    pub fn new(subcommand: &'static str) -> RunSpec {
        RunSpec {
            fields: vec![("subcommand", subcommand.to_string())],
        }
    }

    pub fn field(mut self, key: &'static str, value: impl fmt::Display) -> RunSpec {
        self.fields.push((key, value.to_string()));
        self
    }

    pub fn lines(&self) -> impl Iterator<Item = String> + '_ {
        self.fields.iter().map(|(k, v)| format!("{k}={v}"))
    }
}
