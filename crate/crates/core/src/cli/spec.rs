//! Run specifications: command-line flags over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::channel::Scenario;
use crate::estimators::Observable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Moments,
    Error,
    Sweep,
    Optimize,
    PhaseMap,
    Scaling,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Moments => "moments",
            Command::Error => "error",
            Command::Sweep => "sweep",
            Command::Optimize => "optimize",
            Command::PhaseMap => "phase-map",
            Command::Scaling => "scaling",
            Command::Validate => "validate",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Flags shared by every subcommand. Values left unset fall back to the
/// config file, then to per-command defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// TOML file with any of the keys below (flags take precedence).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// vacuum, single, double, classical; comma list or `all`.
    #[arg(long)]
    pub scenario: Option<String>,
    /// NRF, G11, g11; comma list or `all`.
    #[arg(long)]
    pub observable: Option<String>,
    /// Total photon number: `500`, `100,1000`, `1e2:1e5` or `1e2:1e5:7`.
    #[arg(long = "nT")]
    pub n_total: Option<String>,
    /// Points in an `a:b` photon-number range (log-spaced).
    #[arg(long)]
    pub points: Option<usize>,
    /// Transmissivity, single value or comma list.
    #[arg(long)]
    pub eta: Option<String>,
    /// Squeezing parameter (fixes r for optimize/sweep).
    #[arg(long)]
    pub r: Option<f64>,
    /// Fraction of the seed intensity in mode 1.
    #[arg(long)]
    pub seed_split: Option<f64>,
    /// Relative phase θ − (φ₁ + φ₂).
    #[arg(long)]
    pub phase: Option<f64>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub phi1: Option<f64>,
    #[arg(long)]
    pub phi2: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub theta_points: Option<usize>,
    #[arg(long)]
    pub phi_points: Option<usize>,
    /// Emit the (θ, Φ) landscape around the optimum (optimize).
    #[arg(long)]
    pub phase_map: bool,
    /// Validation suite: `default` (50 probes) or `quick` (8).
    #[arg(long)]
    pub suite: Option<String>,
    /// Seed of the validation suite.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Worker threads (default: logical CPUs).
    #[arg(long, env = "TPA_METROLOGY_JOBS")]
    pub jobs: Option<usize>,
}

/// Scalar or list in a config file.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum NumberOrText {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSpec {
    command: Option<Command>,
    scenario: Option<OneOrMany<String>>,
    observable: Option<OneOrMany<String>>,
    #[serde(rename = "n_T")]
    n_total: Option<OneOrMany<NumberOrText>>,
    points: Option<usize>,
    eta: Option<OneOrMany<f64>>,
    r: Option<f64>,
    seed_split: Option<f64>,
    phase: Option<f64>,
    alpha1: Option<f64>,
    alpha2: Option<f64>,
    phi1: Option<f64>,
    phi2: Option<f64>,
    theta: Option<f64>,
    theta_points: Option<usize>,
    phi_points: Option<usize>,
    phase_map: Option<bool>,
    suite: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<OutputFormat>,
    jobs: Option<usize>,
}

/// Explicit seed and squeezer settings, bypassing the `n_T` constraint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExplicitProbe {
    pub alpha1: f64,
    pub alpha2: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub theta: f64,
}

/// Fully resolved run. Serialized into every output header.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSpec {
    pub command: Command,
    pub scenarios: Vec<Scenario>,
    pub observables: Vec<Observable>,
    #[serde(rename = "n_T")]
    pub n_total: Vec<f64>,
    pub eta: Vec<f64>,
    pub r: Option<f64>,
    pub seed_split: Option<f64>,
    pub phase: Option<f64>,
    pub probe: Option<ExplicitProbe>,
    pub theta_points: usize,
    pub phi_points: usize,
    pub phase_map: bool,
    pub suite: String,
    pub seed: u64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    #[serde(skip)]
    pub jobs: Option<usize>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Spec(msg.into())
}

fn parse_list<T>(text: &str, what: &str, all: &[T], parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, CliError>
where
    T: Copy + PartialEq,
{
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(all.to_vec());
    }
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v = parse(item).ok_or_else(|| invalid(format!("unknown {what} '{item}'")))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(invalid(format!("empty {what} list")));
    }
    Ok(out)
}

fn parse_number(text: &str, what: &str) -> Result<f64, CliError> {
    let v: f64 = text.trim().parse().map_err(|_| invalid(format!("{what}: '{text}' is not a number")))?;
    if !v.is_finite() {
        return Err(invalid(format!("{what}: '{text}' is not finite")));
    }
    Ok(v)
}

/// Photon-number grid from `v`, `v₁,v₂,…`, `lo:hi` or `lo:hi:n`
/// (log-spaced, `points` samples when `n` is absent). Values must be
/// finite, positive and strictly increasing.
pub fn parse_n_grid(text: &str, points: usize) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [single] => single.split(',').map(|t| parse_number(t, "nT")).collect::<Result<Vec<_>, _>>()?,
        [lo, hi] | [lo, hi, _] => {
            let (lo, hi) = (parse_number(lo, "nT")?, parse_number(hi, "nT")?);
            let n = match parts.get(2) {
                Some(t) => t.trim().parse().map_err(|_| invalid(format!("nT: bad point count '{t}'")))?,
                None => points,
            };
            if !(lo > 0.0 && hi > lo) || n < 2 {
                return Err(invalid(format!("nT range {text} must satisfy 0 < lo < hi with at least 2 points")));
            }
            crate::optimizer::log_grid(lo, hi, n)
        }
        _ => return Err(invalid(format!("nT: cannot parse '{text}'"))),
    };
    check_increasing(&grid, "nT")?;
    Ok(grid)
}

fn check_increasing(values: &[f64], what: &str) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(invalid(format!("{what}: no values")));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(invalid(format!("{what}: values must be finite and positive")));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(format!("{what}: values must be strictly increasing")));
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<FileSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn join_numbers(v: &[NumberOrText]) -> String {
    v.iter()
        .map(|x| match x {
            NumberOrText::Number(n) => format!("{n:e}"),
            NumberOrText::Text(t) => t.clone(),
        })
        .collect::<Vec<_>>()
        .join(",")
}

impl RunSpec {
    /// Merge flags over the config file. A `command` key in the file must
    /// agree with the subcommand.
    pub fn resolve(command: Command, args: &RunArgs) -> Result<RunSpec, CliError> {
        let file = match &args.config {
            Some(p) => read_file(p)?,
            None => FileSpec::default(),
        };
        if let Some(c) = file.command {
            if c != command {
                return Err(invalid(format!("config is for '{}', not '{}'", c.name(), command.name())));
            }
        }
        let scenario_text = args.scenario.clone().or(file.scenario.map(|s| s.into_vec().join(",")));
        let observable_text = args.observable.clone().or(file.observable.map(|s| s.into_vec().join(",")));
        let points = args.points.or(file.points).unwrap_or(7);
        let n_text = args.n_total.clone().or(file.n_total.map(|v| join_numbers(&v.into_vec())));
        let eta = match (&args.eta, file.eta) {
            (Some(t), _) => t.split(',').map(|x| parse_number(x, "eta")).collect::<Result<Vec<_>, _>>()?,
            (None, Some(v)) => v.into_vec(),
            (None, None) => vec![1.0],
        };
        if eta.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(invalid("eta values must lie in [0, 1]"));
        }

        let default_scenarios: &[Scenario] = match command {
            Command::Sweep | Command::Scaling => &Scenario::ALL,
            Command::PhaseMap => &[Scenario::DoubleSeeded],
            _ => &[],
        };
        let scenarios = match scenario_text {
            Some(t) => parse_list(&t, "scenario", &Scenario::ALL, |s| s.parse().ok())?,
            None if command == Command::Validate => Vec::new(),
            None if !default_scenarios.is_empty() => default_scenarios.to_vec(),
            None => return Err(invalid("--scenario is required")),
        };
        if command == Command::PhaseMap && scenarios != [Scenario::DoubleSeeded] {
            return Err(invalid("phase-map applies to double seeding only"));
        }
        let observables = match observable_text {
            Some(t) => parse_list(&t, "observable", &Observable::ALL, |s| s.parse().ok())?,
            None => Observable::ALL.to_vec(),
        };

        let pick = |flag: Option<f64>, file: Option<f64>| flag.or(file);
        let alpha1 = pick(args.alpha1, file.alpha1);
        let alpha2 = pick(args.alpha2, file.alpha2);
        let probe = if alpha1.is_some() || alpha2.is_some() {
            Some(ExplicitProbe {
                alpha1: alpha1.unwrap_or(0.0),
                alpha2: alpha2.unwrap_or(0.0),
                phi1: pick(args.phi1, file.phi1).unwrap_or(0.0),
                phi2: pick(args.phi2, file.phi2).unwrap_or(0.0),
                theta: pick(args.theta, file.theta).unwrap_or(0.0),
            })
        } else {
            None
        };
        if probe.is_some() && !matches!(command, Command::Moments | Command::Error) {
            return Err(invalid("explicit seeds (--alpha1/--alpha2) apply to moments and error only"));
        }

        let n_total = match n_text {
            Some(t) => parse_n_grid(&t, points)?,
            None if command == Command::Validate || probe.is_some() => Vec::new(),
            None => return Err(invalid("--nT is required")),
        };
        if command == Command::Scaling && n_total.len() < 3 {
            return Err(invalid("scaling needs at least three photon numbers"));
        }

        let r = pick(args.r, file.r);
        let seed_split = pick(args.seed_split, file.seed_split);
        let phase = pick(args.phase, file.phase);
        if r.is_some_and(|r| !(r.is_finite() && r >= 0.0)) {
            return Err(invalid("r must be finite and non-negative"));
        }
        if seed_split.is_some_and(|s| !(0.0..=1.0).contains(&s)) {
            return Err(invalid("seed_split must lie in [0, 1]"));
        }
        if phase.is_some_and(|p| !p.is_finite()) {
            return Err(invalid("phase must be finite"));
        }
        if command == Command::PhaseMap && r.is_none() {
            return Err(invalid("phase-map needs --r"));
        }

        let suite = args.suite.clone().or(file.suite).unwrap_or_else(|| "default".into());
        if command == Command::Validate && !matches!(suite.as_str(), "default" | "quick") {
            return Err(invalid(format!("unknown suite '{suite}'")));
        }
        let theta_points = args.theta_points.or(file.theta_points).unwrap_or(64);
        let phi_points = args.phi_points.or(file.phi_points).unwrap_or(64);
        if theta_points == 0 || phi_points == 0 {
            return Err(invalid("phase grids need at least one point"));
        }
        let jobs = args.jobs.or(file.jobs);
        if jobs == Some(0) {
            return Err(invalid("--jobs must be at least 1"));
        }

        Ok(RunSpec {
            command,
            scenarios,
            observables,
            n_total,
            eta,
            r,
            seed_split,
            phase,
            probe,
            theta_points,
            phi_points,
            phase_map: args.phase_map || file.phase_map.unwrap_or(false),
            suite,
            seed: args.seed.or(file.seed).unwrap_or(2024),
            out: args.out.clone().or(file.out),
            format: args.format.or(file.format).unwrap_or_default(),
            jobs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_n_grid("500", 7).unwrap(), vec![500.0]);
        assert_eq!(parse_n_grid("100, 1000", 7).unwrap(), vec![100.0, 1000.0]);
        let g = parse_n_grid("1e2:1e5", 7).unwrap();
        assert_eq!(g.len(), 7);
        assert!((g[0] - 100.0).abs() < 1e-9 && (g[6] - 1e5).abs() < 1e-6);
        assert_eq!(parse_n_grid("1e2:1e4:3", 7).unwrap().len(), 3);
        for bad in ["", "x", "1e5:1e2", "0:10", "10,5", "-1", "inf", "1:2:3:4", "1:10:1"] {
            assert!(parse_n_grid(bad, 7).is_err(), "{bad}");
        }
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "command = \"scaling\"\nscenario = [\"classical\"]\nobservable = \"G11\"\nn_T = \"1e2:1e4\"\npoints = 5\neta = [1.0, 0.5]\n").unwrap();
        let args = RunArgs { config: Some(path.clone()), eta: Some("0.7".into()), ..Default::default() };
        let spec = RunSpec::resolve(Command::Scaling, &args).unwrap();
        assert_eq!(spec.scenarios, vec![Scenario::ClassicalCoherent]);
        assert_eq!(spec.observables, vec![Observable::BigG11]);
        assert_eq!(spec.n_total.len(), 5);
        assert_eq!(spec.eta, vec![0.7]);
        assert!(RunSpec::resolve(Command::Sweep, &args).is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        let base = RunArgs { n_total: Some("500".into()), ..Default::default() };
        assert!(RunSpec::resolve(Command::Optimize, &base).is_err(), "scenario required");
        let with = |f: fn(&mut RunArgs)| {
            let mut a = RunArgs { scenario: Some("double".into()), ..base.clone() };
            f(&mut a);
            RunSpec::resolve(Command::Optimize, &a)
        };
        assert!(with(|_| {}).is_ok());
        assert!(with(|a| a.eta = Some("1.5".into())).is_err());
        assert!(with(|a| a.scenario = Some("quad".into())).is_err());
        assert!(with(|a| a.observable = Some("G22".into())).is_err());
        assert!(with(|a| a.seed_split = Some(2.0)).is_err());
        assert!(with(|a| a.alpha1 = Some(1.0)).is_err());
        assert!(with(|a| a.jobs = Some(0)).is_err());
        let all = with(|a| a.scenario = Some("all".into())).unwrap();
        assert_eq!(all.scenarios.len(), 4);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "scenario = \"double\"\nwavelength = 800\n").unwrap();
        let args = RunArgs { config: Some(path), n_total: Some("500".into()), ..Default::default() };
        assert!(RunSpec::resolve(Command::Optimize, &args).is_err());
    }
}
