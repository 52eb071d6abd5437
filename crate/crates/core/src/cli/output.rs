//! Artifact rows and their CSV / JSON rendering.

use std::f64::consts::TAU;
use std::fmt::Write;

use serde::Serialize;

use super::spec::{OutputFormat, RunSpec};
use crate::channel::{incident_photon_number, ProbeConfig, Scenario};
use crate::error::Error;
use crate::estimators::Observable;
use crate::optimizer::PhaseMapPoint;
use crate::oracle::suite::Agreement;

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

trait CsvRow {
    const COLUMNS: &'static [&'static str];
    fn cells(&self) -> Vec<String>;
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    #[serde(rename = "n_T")]
    pub n_total: f64,
    pub eta: f64,
    pub scenario: Scenario,
    pub observable: Observable,
    pub r_opt: f64,
    pub seed_split_opt: f64,
    pub phase_opt: f64,
    pub delta_eps_sq: f64,
    pub value0: f64,
    pub dvalue: f64,
    pub variance: f64,
    pub flags: String,
}

impl CsvRow for ResultRow {
    const COLUMNS: &'static [&'static str] = &[
        "n_T", "eta", "scenario", "observable", "r_opt", "seed_split_opt", "phase_opt", "delta_eps_sq", "value0",
        "dvalue", "variance", "flags",
    ];
    fn cells(&self) -> Vec<String> {
        vec![
            num(self.n_total),
            num(self.eta),
            self.scenario.to_string(),
            self.observable.to_string(),
            num(self.r_opt),
            num(self.seed_split_opt),
            num(self.phase_opt),
            num(self.delta_eps_sq),
            num(self.value0),
            num(self.dvalue),
            num(self.variance),
            self.flags.clone(),
        ]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    #[serde(rename = "n_T")]
    pub n_total: f64,
    pub eta: f64,
    pub scenario: Scenario,
    pub p: usize,
    pub q: usize,
    pub value0: f64,
    pub dvalue: f64,
}

impl CsvRow for MomentRow {
    const COLUMNS: &'static [&'static str] = &["n_T", "eta", "scenario", "p", "q", "value0", "dvalue"];
    fn cells(&self) -> Vec<String> {
        vec![
            num(self.n_total),
            num(self.eta),
            self.scenario.to_string(),
            self.p.to_string(),
            self.q.to_string(),
            num(self.value0),
            num(self.dvalue),
        ]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseRow {
    #[serde(rename = "n_T")]
    pub n_total: f64,
    pub eta: f64,
    pub observable: Observable,
    pub r: f64,
    pub seed_split: f64,
    pub theta: f64,
    pub big_phi: f64,
    pub relative_phase: f64,
    pub delta_eps_sq: f64,
}

impl PhaseRow {
    pub fn new(observable: Observable, n_total: f64, eta: f64, r: f64, seed_split: f64, p: &PhaseMapPoint) -> Self {
        PhaseRow {
            n_total,
            eta,
            observable,
            r,
            seed_split,
            theta: p.theta,
            big_phi: p.big_phi,
            relative_phase: (p.theta - p.big_phi).rem_euclid(TAU),
            delta_eps_sq: p.delta_eps_sq,
        }
    }
}

impl CsvRow for PhaseRow {
    const COLUMNS: &'static [&'static str] =
        &["n_T", "eta", "observable", "r", "seed_split", "theta", "big_phi", "relative_phase", "delta_eps_sq"];
    fn cells(&self) -> Vec<String> {
        vec![
            num(self.n_total),
            num(self.eta),
            self.observable.to_string(),
            num(self.r),
            num(self.seed_split),
            num(self.theta),
            num(self.big_phi),
            num(self.relative_phase),
            num(self.delta_eps_sq),
        ]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationRow {
    pub index: usize,
    pub scenario: Scenario,
    #[serde(rename = "n_T")]
    pub n_total: f64,
    pub eta: f64,
    pub r: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub relative_phase: f64,
    pub n_max: usize,
    pub value_rel: f64,
    pub dvalue_rel: f64,
    pub worst_p: usize,
    pub worst_q: usize,
    pub passed: bool,
    pub error: String,
}

impl ValidationRow {
    fn base(index: usize, cfg: &ProbeConfig) -> Self {
        ValidationRow {
            index,
            scenario: cfg.scenario,
            n_total: incident_photon_number(cfg),
            eta: cfg.eta,
            r: cfg.r,
            alpha1: cfg.alpha1,
            alpha2: cfg.alpha2,
            relative_phase: cfg.relative_phase(),
            n_max: 0,
            value_rel: f64::NAN,
            dvalue_rel: f64::NAN,
            worst_p: 0,
            worst_q: 0,
            passed: false,
            error: String::new(),
        }
    }

    pub fn from_agreement(index: usize, a: &Agreement) -> Self {
        ValidationRow {
            n_max: a.n_max,
            value_rel: a.value_rel,
            dvalue_rel: a.dvalue_rel,
            worst_p: a.worst_entry.0,
            worst_q: a.worst_entry.1,
            passed: a.passed(),
            ..Self::base(index, &a.cfg)
        }
    }

    pub fn failed(index: usize, cfg: &ProbeConfig, e: &Error) -> Self {
        ValidationRow { error: e.to_string(), ..Self::base(index, cfg) }
    }
}

impl CsvRow for ValidationRow {
    const COLUMNS: &'static [&'static str] = &[
        "index", "scenario", "n_T", "eta", "r", "alpha1", "alpha2", "relative_phase", "n_max", "value_rel",
        "dvalue_rel", "worst_p", "worst_q", "passed", "error",
    ];
    fn cells(&self) -> Vec<String> {
        vec![
            self.index.to_string(),
            self.scenario.to_string(),
            num(self.n_total),
            num(self.eta),
            num(self.r),
            num(self.alpha1),
            num(self.alpha2),
            num(self.relative_phase),
            self.n_max.to_string(),
            num(self.value_rel),
            num(self.dvalue_rel),
            self.worst_p.to_string(),
            self.worst_q.to_string(),
            self.passed.to_string(),
            // keep the row on one CSV line
            self.error.replace(',', ";"),
        ]
    }
}

/// One power-law fit `Δε² ≈ C / n_T^k`.
#[derive(Clone, Debug, Serialize)]
pub struct FitRow {
    pub scenario: Scenario,
    pub observable: Observable,
    pub eta: f64,
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub n_min: f64,
    pub n_max: f64,
    pub points: usize,
    pub flags: String,
}

impl FitRow {
    pub fn empty(scenario: Scenario, observable: Observable, eta: f64, grid: &[f64]) -> Self {
        FitRow {
            scenario,
            observable,
            eta,
            exponent: f64::NAN,
            prefactor: f64::NAN,
            r_squared: f64::NAN,
            n_min: grid.iter().copied().fold(f64::INFINITY, f64::min),
            n_max: grid.iter().copied().fold(0.0, f64::max),
            points: grid.len(),
            flags: String::new(),
        }
    }

    fn line(&self) -> String {
        format!(
            "scenario={} observable={} eta={} exponent={} prefactor={} r_squared={} n_min={} n_max={} points={} flags={}",
            self.scenario,
            self.observable,
            num(self.eta),
            num(self.exponent),
            num(self.prefactor),
            num(self.r_squared),
            num(self.n_min),
            num(self.n_max),
            self.points,
            self.flags
        )
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", content = "rows", rename_all = "kebab-case")]
pub enum Table {
    Results(Vec<ResultRow>),
    Moments(Vec<MomentRow>),
    PhaseMap(Vec<PhaseRow>),
    Validation(Vec<ValidationRow>),
}

impl Table {
    pub fn len(&self) -> usize {
        match self {
            Table::Results(r) => r.len(),
            Table::Moments(r) => r.len(),
            Table::PhaseMap(r) => r.len(),
            Table::Validation(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything one run writes.
#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub artifact: String,
    pub spec: RunSpec,
    pub partial: bool,
    /// Optimum rows when the body is a phase map.
    pub summary: Vec<ResultRow>,
    pub fits: Vec<FitRow>,
    pub table: Table,
}

fn csv_block<R: CsvRow>(out: &mut String, rows: &[R]) {
    out.push_str(&R::COLUMNS.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.cells().join(","));
        out.push('\n');
    }
}

impl Artifact {
    pub fn new(spec: &RunSpec, table: Table) -> Self {
        Artifact {
            artifact: format!("tpa-metrology {}", env!("CARGO_PKG_VERSION")),
            spec: spec.clone(),
            partial: false,
            summary: Vec::new(),
            fits: Vec::new(),
            table,
        }
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
                s.push('\n');
                s
            }
            OutputFormat::Csv => self.to_csv(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let spec = serde_json::to_string(&self.spec).expect("spec serializes");
        let _ = writeln!(out, "# {}", self.artifact);
        let _ = writeln!(out, "# command: {}", self.spec.command.name());
        let _ = writeln!(out, "# spec: {spec}");
        let _ = writeln!(out, "# partial: {}", self.partial);
        for row in &self.summary {
            let _ = writeln!(out, "# optimum: {}", row.cells().join(","));
        }
        for fit in &self.fits {
            let _ = writeln!(out, "# fit: {}", fit.line());
        }
        match &self.table {
            Table::Results(rows) => csv_block(&mut out, rows),
            Table::Moments(rows) => csv_block(&mut out, rows),
            Table::PhaseMap(rows) => csv_block(&mut out, rows),
            Table::Validation(rows) => csv_block(&mut out, rows),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0 / 3.0, 6.02e23, -1e-300] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(f64::NAN), "nan");
    }
}
