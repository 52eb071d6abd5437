//! Command-line driver: resolves a [`RunSpec`], runs it on a worker pool
//! and writes one deterministic CSV or JSON artifact.
//!
//! Exit codes: 0 success, 2 invalid spec, 3 infeasible physics (including
//! poor scaling fits), 4 validation failure. Errors go to stderr as one JSON
//! object; whatever was computed before a failure is still written, marked
//! `partial: true`.

mod output;
mod spec;

use std::f64::consts::TAU;
use std::fs::File;
use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

pub use output::{Artifact, FitRow, MomentRow, PhaseRow, ResultRow, Table, ValidationRow};
pub use spec::{parse_n_grid, Command, ExplicitProbe, OutputFormat, RunArgs, RunSpec};

use crate::channel::{incident_photon_number, ProbeConfig, Scenario};
use crate::estimators::{delta_eps_sq, ErrorBudget, Observable};
use crate::moments::compute_moments;
use crate::optimizer::{
    fit_scaling_with, max_squeezing, optimize_with, phase_map, solve_constraint, OptimizationResult, OptimizeOptions,
    Phases,
};
use crate::oracle::suite::{random_suite, run_suite};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "tpa-metrology", version, about = "Absorbance estimation errors for two-photon absorption probed with squeezed light")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Moment table ⟨n₁ᵖn₂^q⟩ (p+q ≤ 4) with ε-derivatives.
    Moments(RunArgs),
    /// Error budgets of a fixed probe.
    Error(RunArgs),
    /// Optimized Δε² over a grid of photon numbers and transmissivities.
    Sweep(RunArgs),
    /// Optimized probe for each requested point.
    Optimize(RunArgs),
    /// Δε² over (θ, Φ) for double seeding at fixed r and seed split.
    PhaseMap(RunArgs),
    /// Power-law fits of the optimized Δε² against n_T.
    Scaling(RunArgs),
    /// Symbolic engine against the Fock-space oracle.
    Validate(RunArgs),
}

impl CliCommand {
    fn split(&self) -> (Command, &RunArgs) {
        match self {
            CliCommand::Moments(a) => (Command::Moments, a),
            CliCommand::Error(a) => (Command::Error, a),
            CliCommand::Sweep(a) => (Command::Sweep, a),
            CliCommand::Optimize(a) => (Command::Optimize, a),
            CliCommand::PhaseMap(a) => (Command::PhaseMap, a),
            CliCommand::Scaling(a) => (Command::Scaling, a),
            CliCommand::Validate(a) => (Command::Validate, a),
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Spec(String),
    Io(String),
    Physics(Error),
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Spec(_) | CliError::Io(_) => 2,
            CliError::Physics(e) => match e {
                Error::InvalidConfig(_) | Error::InvalidGrid(_) | Error::MomentOrder(_) => 2,
                _ => 3,
            },
            CliError::Validation(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Spec(_) => "InvalidSpec",
            CliError::Io(_) => "Io",
            CliError::Validation(_) => "ValidationFailed",
            CliError::Physics(e) => match e {
                Error::InvalidConfig(_) => "InvalidConfig",
                Error::MomentOrder(_) => "MomentOrder",
                Error::ZeroDenominator { .. } => "ZeroDenominator",
                Error::InsensitiveObservable { .. } => "InsensitiveObservable",
                Error::Infeasible { .. } => "Infeasible",
                Error::NoRoot(_) => "NoRoot",
                Error::PoorFit { .. } => "PoorFit",
                Error::InvalidGrid(_) => "InvalidGrid",
                Error::TruncationUnsafe { .. } => "TruncationUnsafe",
                Error::DerivativeUnstable { .. } => "DerivativeUnstable",
            },
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Spec(m) | CliError::Io(m) | CliError::Validation(m) => m.clone(),
            CliError::Physics(e) => e.to_string(),
        }
    }

    /// One-line machine-readable form.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: &'a str,
            message: String,
            exit_code: u8,
        }
        serde_json::to_string(&Report { error: self.kind(), message: self.message(), exit_code: self.exit_code() })
            .expect("error report serializes")
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Physics(e)
    }
}

/// Outcome of a run: the artifact (possibly partial) and the error that
/// stopped it, if any.
pub struct Outcome {
    pub artifact: Artifact,
    pub error: Option<CliError>,
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = cli.command.split();
    ExitCode::from(run_command(command, args))
}

/// Resolve, run and write; returns the exit code.
pub fn run_command(command: Command, args: &RunArgs) -> u8 {
    let spec = match RunSpec::resolve(command, args) {
        Ok(s) => s,
        Err(e) => return report(&e),
    };
    // fail on an unwritable destination before computing anything
    let mut sink: Box<dyn Write> = match &spec.out {
        Some(path) => match File::create(path) {
            Ok(f) => Box::new(f),
            Err(e) => return report(&CliError::Io(format!("cannot write {}: {e}", path.display()))),
        },
        None => Box::new(std::io::stdout().lock()),
    };
    let outcome = match execute(&spec) {
        Ok(o) => o,
        Err(e) => return report(&e),
    };
    let text = outcome.artifact.render(spec.format);
    if let Err(e) = sink.write_all(text.as_bytes()).and_then(|_| sink.flush()) {
        return report(&CliError::Io(format!("write failed: {e}")));
    }
    if let Table::Validation(rows) = &outcome.artifact.table {
        let passed = rows.iter().filter(|r| r.passed).count();
        eprintln!("{passed}/{} oracle agreements", rows.len());
    }
    match outcome.error {
        Some(e) => report(&e),
        None => 0,
    }
}

fn report(e: &CliError) -> u8 {
    eprintln!("{}", e.to_json());
    e.exit_code()
}

/// Run a resolved spec on a pool of `spec.jobs` threads.
pub fn execute(spec: &RunSpec) -> Result<Outcome, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = spec.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::Spec(format!("thread pool: {e}")))?;
    pool.install(|| match spec.command {
        Command::Moments => run_moments(spec),
        Command::Error => run_error(spec),
        Command::Sweep | Command::Optimize => run_optimize(spec),
        Command::PhaseMap => run_phase_map(spec),
        Command::Scaling => run_scaling(spec),
        Command::Validate => run_validate(spec),
    })
}

fn partial(spec: &RunSpec, table: Table, error: CliError) -> Outcome {
    let mut artifact = Artifact::new(spec, table);
    artifact.partial = true;
    Outcome { artifact, error: Some(error) }
}

fn done(spec: &RunSpec, table: Table) -> Outcome {
    Outcome { artifact: Artifact::new(spec, table), error: None }
}

/// Probes of fixed-probe commands, in spec order.
fn fixed_probes(spec: &RunSpec) -> Result<Vec<ProbeConfig>, CliError> {
    let mut out = Vec::new();
    for &scenario in &spec.scenarios {
        for &eta in &spec.eta {
            if let Some(p) = spec.probe {
                let r = spec.r.unwrap_or(0.0);
                let cfg = match scenario {
                    Scenario::SqueezedVacuum => ProbeConfig::squeezed_vacuum(r, p.theta, eta),
                    Scenario::SingleSeeded => ProbeConfig::single_seeded(p.alpha1, p.phi1, r, p.theta, eta),
                    Scenario::DoubleSeeded => ProbeConfig::double_seeded(p.alpha1, p.alpha2, p.phi1, p.phi2, r, p.theta, eta),
                    Scenario::ClassicalCoherent => ProbeConfig::classical(p.alpha1, p.alpha2, p.phi1, p.phi2, eta),
                };
                cfg.validate()?;
                out.push(cfg);
                continue;
            }
            for &n in &spec.n_total {
                let r = match (scenario, spec.r) {
                    (Scenario::SingleSeeded | Scenario::DoubleSeeded, None) => {
                        return Err(CliError::Spec(format!("{scenario} probe needs --r")))
                    }
                    (_, r) => r.unwrap_or(0.0),
                };
                let split = spec.seed_split.unwrap_or(0.5);
                let phases = Phases::relative(spec.phase.unwrap_or(0.0).rem_euclid(TAU));
                out.push(solve_constraint(scenario, n, r, split, phases)?.config(eta));
            }
        }
    }
    Ok(out)
}

fn seed_split_of(cfg: &ProbeConfig) -> f64 {
    let (i1, i2) = (cfg.alpha1 * cfg.alpha1, cfg.alpha2 * cfg.alpha2);
    if i1 + i2 > 0.0 {
        i1 / (i1 + i2)
    } else {
        0.0
    }
}

fn budget_row(cfg: &ProbeConfig, b: &ErrorBudget, flags: Vec<&str>) -> ResultRow {
    let mut flags = flags;
    if b.insensitive {
        flags.push("insensitive");
    }
    ResultRow {
        n_total: incident_photon_number(cfg),
        eta: cfg.eta,
        scenario: cfg.scenario,
        observable: b.observable,
        r_opt: cfg.r,
        seed_split_opt: seed_split_of(cfg),
        phase_opt: cfg.relative_phase(),
        delta_eps_sq: b.delta_eps_sq,
        value0: b.value0,
        dvalue: b.dvalue,
        variance: b.variance,
        flags: flags.join(";"),
    }
}

fn run_moments(spec: &RunSpec) -> Result<Outcome, CliError> {
    let cfgs = fixed_probes(spec)?;
    let tables: Vec<_> = cfgs.par_iter().map(compute_moments).collect();
    let mut rows = Vec::new();
    for (cfg, table) in cfgs.iter().zip(tables) {
        let table = match table {
            Ok(t) => t,
            Err(e) => return Ok(partial(spec, Table::Moments(rows), e.into())),
        };
        let n_total = incident_photon_number(cfg);
        for ((p, q), jet) in table.iter() {
            rows.push(MomentRow { n_total, eta: cfg.eta, scenario: cfg.scenario, p, q, value0: jet.value0.re, dvalue: jet.dvalue.re });
        }
    }
    Ok(done(spec, Table::Moments(rows)))
}

fn run_error(spec: &RunSpec) -> Result<Outcome, CliError> {
    let cfgs = fixed_probes(spec)?;
    let tasks: Vec<(ProbeConfig, Observable)> =
        cfgs.iter().flat_map(|c| spec.observables.iter().map(move |&o| (*c, o))).collect();
    let budgets: Vec<_> = tasks.par_iter().map(|(c, o)| delta_eps_sq(c, *o)).collect();
    let mut rows = Vec::new();
    for ((cfg, _), b) in tasks.iter().zip(budgets) {
        match b {
            Ok(b) => rows.push(budget_row(cfg, &b, vec![])),
            Err(e) => return Ok(partial(spec, Table::Results(rows), e.into())),
        }
    }
    Ok(done(spec, Table::Results(rows)))
}

fn options(spec: &RunSpec) -> OptimizeOptions {
    OptimizeOptions { fixed_r: spec.r, ..OptimizeOptions::default() }
}

fn optimum_row(o: &OptimizationResult) -> ResultRow {
    let mut flags = Vec::new();
    if !o.converged {
        flags.push("not_converged");
    }
    if o.optimal_set.len() > 1 {
        flags.push("degenerate");
    }
    let mut row = budget_row(&o.cfg_star, &o.budget, flags);
    row.n_total = o.n_total;
    row
}

/// Row for a point where the observable carries no information: the
/// vacuum-limit probe with `Δε² = +∞`.
fn insensitive_row(scenario: Scenario, observable: Observable, n: f64, eta: f64) -> Result<ResultRow, Error> {
    let solve = solve_constraint(scenario, n, max_squeezing(n), 0.5, Phases::ZERO)?;
    let cfg = solve.config(eta);
    let b = delta_eps_sq(&cfg, observable)?;
    let mut row = budget_row(&cfg, &b, vec![]);
    if !row.flags.contains("insensitive") {
        row.flags = "insensitive".into();
    }
    row.delta_eps_sq = f64::INFINITY;
    row.n_total = n;
    Ok(row)
}

type Task = (Scenario, Observable, f64, f64);

fn optimize_tasks(spec: &RunSpec) -> Vec<Task> {
    let mut tasks = Vec::new();
    for &sc in &spec.scenarios {
        for &obs in &spec.observables {
            for &eta in &spec.eta {
                for &n in &spec.n_total {
                    tasks.push((sc, obs, n, eta));
                }
            }
        }
    }
    tasks
}

fn run_optimize(spec: &RunSpec) -> Result<Outcome, CliError> {
    if spec.phase_map && spec.scenarios != [Scenario::DoubleSeeded] {
        return Err(CliError::Spec("--phase-map needs --scenario double".into()));
    }
    let opts = options(spec);
    let tasks = optimize_tasks(spec);
    let results: Vec<_> = tasks.par_iter().map(|&(sc, obs, n, eta)| optimize_with(sc, obs, n, eta, &opts)).collect();
    let mut rows = Vec::new();
    let mut optima = Vec::new();
    for (&(sc, obs, n, eta), res) in tasks.iter().zip(results) {
        match res {
            Ok(o) => {
                rows.push(optimum_row(&o));
                optima.push(o);
            }
            Err(Error::InsensitiveObservable { .. }) => match insensitive_row(sc, obs, n, eta) {
                Ok(r) => rows.push(r),
                Err(e) => return Ok(partial(spec, Table::Results(rows), e.into())),
            },
            Err(e) => return Ok(partial(spec, Table::Results(rows), e.into())),
        }
    }
    if !spec.phase_map {
        return Ok(done(spec, Table::Results(rows)));
    }
    let mut points = Vec::new();
    for o in &optima {
        match phase_map(o.observable, o.n_total, o.eta, o.solve.r, o.solve.seed_split, spec.theta_points, spec.phi_points) {
            Ok(map) => points.extend(map.into_iter().map(|p| PhaseRow::new(o.observable, o.n_total, o.eta, o.solve.r, o.solve.seed_split, &p))),
            Err(e) => {
                let mut out = partial(spec, Table::PhaseMap(points), e.into());
                out.artifact.summary = rows;
                return Ok(out);
            }
        }
    }
    let mut out = done(spec, Table::PhaseMap(points));
    out.artifact.summary = rows;
    Ok(out)
}

fn run_phase_map(spec: &RunSpec) -> Result<Outcome, CliError> {
    let r = spec.r.expect("resolved spec carries r");
    let split = spec.seed_split.unwrap_or(0.5);
    let mut points = Vec::new();
    for &obs in &spec.observables {
        for &eta in &spec.eta {
            for &n in &spec.n_total {
                match phase_map(obs, n, eta, r, split, spec.theta_points, spec.phi_points) {
                    Ok(map) => points.extend(map.iter().map(|p| PhaseRow::new(obs, n, eta, r, split, p))),
                    Err(e) => return Ok(partial(spec, Table::PhaseMap(points), e.into())),
                }
            }
        }
    }
    Ok(done(spec, Table::PhaseMap(points)))
}

fn run_scaling(spec: &RunSpec) -> Result<Outcome, CliError> {
    let opts = options(spec);
    let mut fits = Vec::new();
    let mut rows = Vec::new();
    let mut failure: Option<CliError> = None;
    for &sc in &spec.scenarios {
        for &obs in &spec.observables {
            for &eta in &spec.eta {
                let base = FitRow::empty(sc, obs, eta, &spec.n_total);
                match fit_scaling_with(sc, obs, eta, &spec.n_total, &opts) {
                    Ok(fit) => {
                        rows.extend(fit.optima.iter().map(optimum_row));
                        fits.push(FitRow { exponent: fit.exponent, prefactor: fit.prefactor, r_squared: fit.r_squared, ..base });
                    }
                    Err(Error::InsensitiveObservable { .. }) => fits.push(FitRow { flags: "insensitive".into(), ..base }),
                    Err(Error::PoorFit { r_squared, exponent, prefactor, .. }) => {
                        fits.push(FitRow { exponent, prefactor, r_squared, flags: "poor_fit".into(), ..base });
                        failure.get_or_insert(CliError::Physics(Error::PoorFit {
                            r_squared,
                            required: crate::optimizer::MIN_R_SQUARED,
                            exponent,
                            prefactor,
                        }));
                    }
                    Err(e) => {
                        let mut out = partial(spec, Table::Results(rows), e.into());
                        out.artifact.fits = fits;
                        return Ok(out);
                    }
                }
            }
        }
    }
    let mut out = match failure {
        Some(e) => partial(spec, Table::Results(rows), e),
        None => done(spec, Table::Results(rows)),
    };
    out.artifact.fits = fits;
    Ok(out)
}

fn run_validate(spec: &RunSpec) -> Result<Outcome, CliError> {
    let count = if spec.suite == "quick" { 8 } else { 50 };
    let cfgs = random_suite(spec.seed, count);
    let results = run_suite(&cfgs);
    let mut rows = Vec::new();
    let mut failures = 0;
    for (k, (cfg, res)) in cfgs.iter().zip(results).enumerate() {
        let row = match res {
            Ok(a) => ValidationRow::from_agreement(k, &a),
            Err(e) => ValidationRow::failed(k, cfg, &e),
        };
        failures += usize::from(!row.passed);
        rows.push(row);
    }
    let mut out = done(spec, Table::Validation(rows));
    if failures > 0 {
        out.error = Some(CliError::Validation(format!("{failures} of {count} probes disagree with the oracle")));
    }
    Ok(out)
}
