//! Probe optimization at fixed incident photon number `n_T` and loss `η`,
//! and power-law fits `Δε² ≈ C / n_T^k` of the optima.
//!
//! Double seeding is described by the squeezing `r`, the fraction
//! `seed_split` of the total seed intensity `α₁² + α₂²` carried by mode 1,
//! and the relative phase `θ − (φ₁ + φ₂)`; the seed intensity itself is
//! fixed by the `n_T` constraint. The search runs over the equivalent
//! mean-field coordinates (see [`solve_mean_fields`]), whose landscape stays
//! regular where anti-phased seeds are strongly de-amplified.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use num_complex::Complex64;

use crate::channel::{incident_photon_number, ProbeConfig, Scenario};
use crate::error::{Error, Result};
use crate::estimators::{delta_eps_sq, ErrorBudget, Observable};

const TAU: f64 = 2.0 * PI;
const GOLDEN: f64 = 0.618_033_988_749_894_8;
/// Relative `n_T` mismatch tolerated after the constraint solve.
pub const CONSTRAINT_TOL: f64 = 1e-9;
/// `r²` below which a scaling fit is rejected.
pub const MIN_R_SQUARED: f64 = 0.999;

/// `2 sinh² r`, the photons produced by squeezing alone.
pub fn squeezed_floor(r: f64) -> f64 {
    2.0 * r.sinh().powi(2)
}

/// Squeezing at which the vacuum contribution alone reaches `n_total`.
pub fn max_squeezing(n_total: f64) -> f64 {
    (n_total / 2.0).sqrt().asinh()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Phases {
    pub phi1: f64,
    pub phi2: f64,
    pub theta: f64,
}

impl Phases {
    pub const ZERO: Phases = Phases { phi1: 0.0, phi2: 0.0, theta: 0.0 };

    /// Seeds at phase zero, squeezer at `θ − Φ = relative`.
    pub fn relative(relative: f64) -> Self {
        Phases { theta: relative, ..Phases::ZERO }
    }

    pub fn relative_phase(&self) -> f64 {
        (self.theta - self.phi1 - self.phi2).rem_euclid(TAU)
    }
}

/// Seed amplitudes resolved from the `n_T` constraint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConstraintSolve {
    pub scenario: Scenario,
    pub n_total: f64,
    pub r: f64,
    pub seed_split: f64,
    pub phases: Phases,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl ConstraintSolve {
    pub fn config(&self, eta: f64) -> ProbeConfig {
        let p = self.phases;
        match self.scenario {
            Scenario::SqueezedVacuum => ProbeConfig::squeezed_vacuum(self.r, p.theta, eta),
            Scenario::SingleSeeded => ProbeConfig::single_seeded(self.alpha1, p.phi1, self.r, p.theta, eta),
            Scenario::DoubleSeeded => {
                ProbeConfig::double_seeded(self.alpha1, self.alpha2, p.phi1, p.phi2, self.r, p.theta, eta)
            }
            Scenario::ClassicalCoherent => ProbeConfig::classical(self.alpha1, self.alpha2, p.phi1, p.phi2, eta),
        }
    }
}

fn check_inputs(n_total: f64, r: f64, seed_split: f64) -> Result<()> {
    if !(n_total.is_finite() && n_total > 0.0) {
        return Err(Error::InvalidConfig(format!("n_T = {n_total} must be positive and finite")));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::InvalidConfig(format!("r = {r} must be non-negative and finite")));
    }
    if !(0.0..=1.0).contains(&seed_split) {
        return Err(Error::InvalidConfig(format!("seed_split = {seed_split} outside [0, 1]")));
    }
    Ok(())
}

/// Resolve the seed amplitudes so the probe carries `n_total` photons.
///
/// The squeezed vacuum has no free amplitude and takes `r` from `n_total`
/// (the argument is ignored). Coherent pairs ignore `r` and split
/// `n_total` directly.
pub fn solve_constraint(
    scenario: Scenario,
    n_total: f64,
    r: f64,
    seed_split: f64,
    phases: Phases,
) -> Result<ConstraintSolve> {
    check_inputs(n_total, r, seed_split)?;
    let mut out = ConstraintSolve { scenario, n_total, r, seed_split, phases, alpha1: 0.0, alpha2: 0.0 };
    match scenario {
        Scenario::SqueezedVacuum => {
            out.r = max_squeezing(n_total);
            out.seed_split = 0.0;
        }
        Scenario::ClassicalCoherent => {
            out.r = 0.0;
            out.alpha1 = (seed_split * n_total).sqrt();
            out.alpha2 = ((1.0 - seed_split) * n_total).sqrt();
        }
        Scenario::SingleSeeded => {
            let floor = squeezed_floor(r);
            if floor > n_total {
                return Err(Error::Infeasible { n_total, floor, r });
            }
            out.seed_split = 1.0;
            out.alpha1 = ((n_total - floor) / (2.0 * r).cosh()).sqrt();
        }
        Scenario::DoubleSeeded => {
            let floor = squeezed_floor(r);
            if floor > n_total {
                return Err(Error::Infeasible { n_total, floor, r });
            }
            let seed = solve_seed_intensity(n_total, r, seed_split, phases)?;
            out.alpha1 = (seed_split * seed).sqrt();
            out.alpha2 = ((1.0 - seed_split) * seed).sqrt();
        }
    }
    Ok(out)
}

/// Double seeding specified by the squeezed mean fields `⟨b̂₁⟩ = √(u n_s)`
/// and `⟨b̂₂⟩ = √((1−u) n_s)` with squeezer phase `θ = field_phase`, where
/// `n_s = n_T − 2 sinh² r`. The seeds follow from the inverse Bogoliubov map
/// `a₁ = cosh r ⟨b̂₁⟩ − e^{iθ} sinh r ⟨b̂₂⟩*` (and `1 ↔ 2`).
pub fn solve_mean_fields(n_total: f64, r: f64, field_split: f64, field_phase: f64) -> Result<ConstraintSolve> {
    check_inputs(n_total, r, field_split)?;
    let floor = squeezed_floor(r);
    if floor > n_total {
        return Err(Error::Infeasible { n_total, floor, r });
    }
    let seeded = n_total - floor;
    let (b1, b2) = ((field_split * seeded).sqrt(), ((1.0 - field_split) * seeded).sqrt());
    let (c, s) = (r.cosh(), Complex64::from_polar(r.sinh(), field_phase));
    let a1 = b1 * c - s * b2;
    let a2 = b2 * c - s * b1;
    let (i1, i2) = (a1.norm_sqr(), a2.norm_sqr());
    let seed_split = if i1 + i2 > 0.0 { i1 / (i1 + i2) } else { 0.5 };
    let phases = Phases { phi1: a1.arg(), phi2: a2.arg(), theta: field_phase };
    Ok(ConstraintSolve {
        scenario: Scenario::DoubleSeeded,
        n_total,
        r,
        seed_split,
        phases,
        alpha1: a1.norm(),
        alpha2: a2.norm(),
    })
}

fn double_config(seed: f64, r: f64, split: f64, p: Phases) -> ProbeConfig {
    ProbeConfig::double_seeded((split * seed).sqrt(), ((1.0 - split) * seed).sqrt(), p.phi1, p.phi2, r, p.theta, 1.0)
}

/// Total seed intensity `S = α₁² + α₂²` meeting the constraint. `n_T` is
/// affine in `S` with slope `|β₁|² + |β₂|²` per unit seed (the squeezed mean
/// fields); the slope is taken from the amplitudes, which keeps the
/// `cosh 2r − sinh 2r` cancellation of anti-phased seeds inside one complex
/// sum. The result is checked against the operator algebra and falls back to
/// bracketed bisection.
fn solve_seed_intensity(n_total: f64, r: f64, split: f64, p: Phases) -> Result<f64> {
    let floor = squeezed_floor(r);
    let target = |s: f64| incident_photon_number(&double_config(s, r, split, p)) - n_total;
    let (b1, b2) = double_config(1.0, r, split, p).mean_fields();
    let slope = b1.norm_sqr() + b2.norm_sqr();
    if slope > 0.0 && slope.is_finite() {
        let guess = (n_total - floor) / slope;
        if target(guess).abs() <= CONSTRAINT_TOL * n_total {
            return Ok(guess);
        }
    }
    if n_total == floor {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut grow = 0;
    while target(hi) < 0.0 {
        hi *= 4.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::NoRoot(format!("no seed intensity reaches n_T = {n_total} at r = {r}")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = target(mid);
        if f.abs() <= CONSTRAINT_TOL * n_total {
            return Ok(mid);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoRoot(format!("bisection did not reach n_T = {n_total} to {CONSTRAINT_TOL:e} at r = {r}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LandscapeSample {
    pub r: f64,
    pub seed_split: f64,
    pub phase: f64,
    pub delta_eps_sq: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizeOptions {
    pub r_points: usize,
    pub split_points: usize,
    pub phase_points: usize,
    /// Relative objective change per sweep below which refinement stops.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Number of grid basins refined.
    pub basins: usize,
    pub keep_landscape: bool,
    /// Restrict the search to one squeezing value.
    pub fixed_r: Option<f64>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            r_points: 24,
            split_points: 11,
            phase_points: 64,
            tol: 1e-6,
            max_sweeps: 100,
            basins: 4,
            keep_landscape: false,
            fixed_r: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizationResult {
    pub scenario: Scenario,
    pub observable: Observable,
    pub n_total: f64,
    pub eta: f64,
    pub solve: ConstraintSolve,
    pub cfg_star: ProbeConfig,
    pub budget: ErrorBudget,
    pub delta_eps_sq_star: f64,
    pub objective_evaluations: usize,
    pub converged: bool,
    /// Refined optima equal to the reported one within the tolerance,
    /// e.g. the mirror images `±(θ − Φ)`.
    pub optimal_set: Vec<LandscapeSample>,
    pub landscape_samples: Option<Vec<LandscapeSample>>,
}

/// Search coordinates, in the order `r, split, phase`; for double seeding
/// split and phase are the mean-field ones.
#[derive(Clone, Copy, Debug)]
struct Axis {
    lo: f64,
    hi: f64,
    periodic: bool,
}

struct Problem<'a> {
    scenario: Scenario,
    observable: Observable,
    n_total: f64,
    eta: f64,
    opts: &'a OptimizeOptions,
    r_max: f64,
}

impl Problem<'_> {
    fn point(&self, x: [f64; 3]) -> [f64; 3] {
        [self.opts.fixed_r.unwrap_or(x[0]), x[1], x[2]]
    }

    fn solve(&self, x: [f64; 3]) -> Result<ConstraintSolve> {
        let [r, split, phase] = self.point(x);
        match self.scenario {
            Scenario::DoubleSeeded => solve_mean_fields(self.n_total, r, split, phase.rem_euclid(TAU)),
            sc => solve_constraint(sc, self.n_total, r, split, Phases::ZERO),
        }
    }

    /// `Δε²` at a point, `+∞` where the probe is insensitive, degenerate or
    /// cannot meet the constraint.
    fn objective(&self, x: [f64; 3]) -> f64 {
        let Ok(solve) = self.solve(x) else { return f64::INFINITY };
        match delta_eps_sq(&solve.config(self.eta), self.observable) {
            Ok(b) if !b.insensitive && b.delta_eps_sq.is_finite() && b.delta_eps_sq > 0.0 => b.delta_eps_sq,
            _ => f64::INFINITY,
        }
    }

    fn free(&self) -> [bool; 3] {
        let o = self.opts;
        let (r, split, phase) = match self.scenario {
            Scenario::SqueezedVacuum => (false, false, false),
            Scenario::SingleSeeded => (true, false, false),
            Scenario::DoubleSeeded => (true, true, true),
            Scenario::ClassicalCoherent => (false, true, false),
        };
        [r && o.fixed_r.is_none(), split, phase]
    }

    fn axes(&self) -> [Axis; 3] {
        [
            Axis { lo: 0.0, hi: self.r_max, periodic: false },
            Axis { lo: 0.0, hi: 1.0, periodic: false },
            Axis { lo: 0.0, hi: TAU, periodic: true },
        ]
    }

    fn grids(&self) -> [Vec<f64>; 3] {
        let free = self.free();
        let o = self.opts;
        let r = if free[0] {
            // log-spaced over three decades below the feasibility edge
            let n = o.r_points.max(2);
            (0..n).map(|k| self.r_max * 10f64.powf(-3.0 * (1.0 - k as f64 / (n - 1) as f64))).collect()
        } else {
            vec![o.fixed_r.unwrap_or(self.r_max)]
        };
        let split = if free[1] {
            let n = o.split_points.max(2);
            (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
        } else {
            vec![match self.scenario {
                Scenario::SingleSeeded => 1.0,
                Scenario::SqueezedVacuum => 0.0,
                _ => 0.5,
            }]
        };
        let phase = if free[2] {
            let n = o.phase_points.max(1);
            (0..n).map(|k| TAU * k as f64 / n as f64).collect()
        } else {
            vec![0.0]
        };
        [r, split, phase]
    }
}

/// Golden-section search of `f` over `[a, b]`, returning the best point
/// seen (`start` included) and the number of evaluations.
fn golden_section(f: impl Fn(f64) -> f64, a: f64, b: f64, start: (f64, f64), tol: f64) -> ((f64, f64), usize) {
    let (mut a, mut b) = (a, b);
    let mut best = start;
    let mut evals = 0;
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    evals += 2;
    for _ in 0..200 {
        if (b - a).abs() <= tol * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
        evals += 1;
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v < best.1 {
            best = (x, v);
        }
    }
    (best, evals)
}

struct Refined {
    x: [f64; 3],
    value: f64,
    evals: usize,
    converged: bool,
}

/// Coordinate-wise golden-section refinement starting from a grid point.
fn refine(problem: &Problem, start: [f64; 3], value: f64, steps: [f64; 3]) -> Refined {
    let free = problem.free();
    let axes = problem.axes();
    let mut x = start;
    let mut fx = value;
    let mut h = steps;
    let mut evals = 0;
    let mut converged = !free.iter().any(|&f| f);
    for _ in 0..problem.opts.max_sweeps {
        if converged {
            break;
        }
        let before = fx;
        for i in 0..3 {
            if !free[i] {
                continue;
            }
            let ax = axes[i];
            let (mut lo, mut hi) = (x[i] - h[i], x[i] + h[i]);
            if !ax.periodic {
                lo = lo.max(ax.lo);
                hi = hi.min(ax.hi);
            }
            let line = |t: f64| {
                let mut y = x;
                y[i] = t;
                problem.objective(y)
            };
            let ((t, ft), n) = golden_section(line, lo, hi, (x[i], fx), 1e-12);
            evals += n;
            let moved = (t - x[i]).abs();
            if ft < fx {
                x[i] = t;
                fx = ft;
            }
            // keep the bracket a little wider than the last move
            h[i] = (0.5 * h[i]).max(4.0 * moved).max(1e-9 * (1.0 + x[i].abs()));
        }
        let change = (before - fx).abs() / fx.abs().max(f64::MIN_POSITIVE);
        if fx.is_finite() && change < problem.opts.tol {
            converged = true;
        }
    }
    if free[2] {
        x[2] = x[2].rem_euclid(TAU);
    }
    Refined { x, value: fx, evals, converged }
}

/// Minimize `Δε²` with default search options.
pub fn optimize(scenario: Scenario, observable: Observable, n_total: f64, eta: f64) -> Result<OptimizationResult> {
    optimize_with(scenario, observable, n_total, eta, &OptimizeOptions::default())
}

pub fn optimize_with(
    scenario: Scenario,
    observable: Observable,
    n_total: f64,
    eta: f64,
    opts: &OptimizeOptions,
) -> Result<OptimizationResult> {
    check_inputs(n_total, opts.fixed_r.unwrap_or(0.0), 0.5)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidConfig(format!("eta = {eta} outside [0, 1]")));
    }
    let r_max = max_squeezing(n_total);
    if let Some(r) = opts.fixed_r {
        if matches!(scenario, Scenario::SingleSeeded | Scenario::DoubleSeeded) && squeezed_floor(r) > n_total {
            return Err(Error::Infeasible { n_total, floor: squeezed_floor(r), r });
        }
    }
    let problem = Problem { scenario, observable, n_total, eta, opts, r_max };
    let grids = problem.grids();
    let shape = [grids[0].len(), grids[1].len(), grids[2].len()];
    let (splits, phases) = (&grids[1], &grids[2]);
    let points: Vec<[f64; 3]> = grids[0]
        .iter()
        .flat_map(|&r| splits.iter().flat_map(move |&s| phases.iter().map(move |&p| [r, s, p])))
        .collect();
    let values: Vec<f64> = points.par_iter().map(|&x| problem.objective(x)).collect();
    let mut evaluations = values.len();

    if values.iter().all(|v| v.is_infinite()) {
        // surface the physical reason from a representative point
        let solve = problem.solve(points[points.len() / 2])?;
        let b = delta_eps_sq(&solve.config(eta), observable)?;
        if b.insensitive {
            return Err(Error::InsensitiveObservable { observable: observable.name() });
        }
        return Err(Error::InvalidConfig(format!("no admissible probe for {observable} at n_T = {n_total}")));
    }

    let seeds = grid_basins(&values, shape, opts.basins.max(1));
    let steps = |idx: [usize; 3]| -> [f64; 3] {
        let mut h = [0.0; 3];
        for i in 0..3 {
            let g = &grids[i];
            if g.len() < 2 {
                continue;
            }
            let k = idx[i];
            let left = if k > 0 { g[k] - g[k - 1] } else { g[1] - g[0] };
            let right = if k + 1 < g.len() { g[k + 1] - g[k] } else { g[k] - g[k - 1] };
            h[i] = left.max(right);
        }
        h
    };
    let refined: Vec<Refined> = seeds
        .par_iter()
        .map(|&flat| {
            let idx = unflatten(flat, shape);
            refine(&problem, points[flat], values[flat], steps(idx))
        })
        .collect();
    evaluations += refined.iter().map(|r| r.evals).sum::<usize>();

    // report in input coordinates: squeezing, seed split and θ − φ₁ − φ₂
    let sample = |x: [f64; 3], v: f64| match problem.solve(x) {
        Ok(c) => LandscapeSample {
            r: c.r,
            seed_split: c.seed_split,
            phase: c.phases.relative_phase().rem_euclid(TAU),
            delta_eps_sq: v,
        },
        Err(_) => {
            let [r, s, p] = problem.point(x);
            LandscapeSample { r, seed_split: s, phase: p.rem_euclid(TAU), delta_eps_sq: v }
        }
    };
    let best_value = refined.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let tie = |v: f64| v <= best_value * (1.0 + opts.tol);
    let mut optimal: Vec<(&Refined, LandscapeSample)> =
        refined.iter().filter(|r| tie(r.value)).map(|r| (r, sample(r.x, r.value))).collect();
    optimal.sort_by(|a, b| a.1.phase.total_cmp(&b.1.phase).then(a.0.value.total_cmp(&b.0.value)));
    let winner = optimal[0].0;
    let solve = problem.solve(winner.x)?;
    let cfg_star = solve.config(eta);
    let budget = delta_eps_sq(&cfg_star, observable)?;
    let mut optimal_set: Vec<LandscapeSample> = Vec::new();
    for (_, s) in optimal {
        let dup = optimal_set.iter().any(|o| {
            (o.r - s.r).abs() < 1e-6 && (o.seed_split - s.seed_split).abs() < 1e-6 && (o.phase - s.phase).abs() < 1e-6
        });
        if !dup {
            optimal_set.push(s);
        }
    }
    let landscape_samples =
        opts.keep_landscape.then(|| points.iter().zip(&values).map(|(&x, &v)| sample(x, v)).collect());
    Ok(OptimizationResult {
        scenario,
        observable,
        n_total,
        eta,
        solve,
        cfg_star,
        budget,
        delta_eps_sq_star: budget.delta_eps_sq,
        objective_evaluations: evaluations,
        converged: winner.converged,
        optimal_set,
        landscape_samples,
    })
}

fn unflatten(flat: usize, shape: [usize; 3]) -> [usize; 3] {
    [flat / (shape[1] * shape[2]), (flat / shape[2]) % shape[1], flat % shape[2]]
}

/// Indices of the lowest grid local minima (phase axis periodic), best
/// first; ties keep grid order.
fn grid_basins(values: &[f64], shape: [usize; 3], keep: usize) -> Vec<usize> {
    let flat = |i: [usize; 3]| (i[0] * shape[1] + i[1]) * shape[2] + i[2];
    let mut minima: Vec<usize> = (0..values.len())
        .filter(|&k| {
            let v = values[k];
            if !v.is_finite() {
                return false;
            }
            let idx = unflatten(k, shape);
            (0..3).all(|axis| {
                let n = shape[axis];
                let mut neighbours = Vec::with_capacity(2);
                if axis == 2 && n > 2 {
                    neighbours.push((idx[axis] + n - 1) % n);
                    neighbours.push((idx[axis] + 1) % n);
                } else {
                    if idx[axis] > 0 {
                        neighbours.push(idx[axis] - 1);
                    }
                    if idx[axis] + 1 < n {
                        neighbours.push(idx[axis] + 1);
                    }
                }
                neighbours.into_iter().all(|j| {
                    let mut other = idx;
                    other[axis] = j;
                    values[flat(other)] >= v
                })
            })
        })
        .collect();
    if minima.is_empty() {
        let best = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
        minima.push(best);
    }
    minima.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    minima.truncate(keep);
    minima
}

/// `Δε²` over a `θ × Φ` grid for double seeding at fixed `r` and split,
/// with `φ₁ = φ₂ = Φ/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseMapPoint {
    pub theta: f64,
    pub big_phi: f64,
    pub delta_eps_sq: f64,
}

pub fn phase_map(
    observable: Observable,
    n_total: f64,
    eta: f64,
    r: f64,
    seed_split: f64,
    theta_points: usize,
    phi_points: usize,
) -> Result<Vec<PhaseMapPoint>> {
    check_inputs(n_total, r, seed_split)?;
    if theta_points == 0 || phi_points == 0 {
        return Err(Error::InvalidGrid("phase map needs at least one point per axis".into()));
    }
    let cells: Vec<(f64, f64)> = (0..theta_points)
        .flat_map(|i| {
            (0..phi_points)
                .map(move |j| (TAU * i as f64 / theta_points as f64, TAU * j as f64 / phi_points as f64))
        })
        .collect();
    cells
        .par_iter()
        .map(|&(theta, big_phi)| {
            let phases = Phases { phi1: 0.5 * big_phi, phi2: 0.5 * big_phi, theta };
            let solve = solve_constraint(Scenario::DoubleSeeded, n_total, r, seed_split, phases)?;
            let b = delta_eps_sq(&solve.config(eta), observable)?;
            Ok(PhaseMapPoint { theta, big_phi, delta_eps_sq: b.delta_eps_sq })
        })
        .collect()
}

/// Best relative phase `θ − Φ` for double seeding on a fixed `(r, split)`
/// slice: `points`-cell scan, then golden-section refinement around each
/// local minimum. Returns every minimum within `1 + tol` of the best as
/// `(phase, Δε²)`, smallest phase first.
pub fn phase_optimum(
    observable: Observable,
    n_total: f64,
    eta: f64,
    r: f64,
    seed_split: f64,
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    check_inputs(n_total, r, seed_split)?;
    if points < 3 {
        return Err(Error::InvalidGrid("phase scan needs at least three points".into()));
    }
    let value = |chi: f64| -> f64 {
        solve_constraint(Scenario::DoubleSeeded, n_total, r, seed_split, Phases::relative(chi.rem_euclid(TAU)))
            .and_then(|c| delta_eps_sq(&c.config(eta), observable))
            .map(|b| if b.insensitive { f64::INFINITY } else { b.delta_eps_sq })
            .unwrap_or(f64::INFINITY)
    };
    let h = TAU / points as f64;
    let grid: Vec<f64> = (0..points).into_par_iter().map(|k| value(h * k as f64)).collect();
    let mut minima = Vec::new();
    for k in 0..points {
        let (l, r) = (grid[(k + points - 1) % points], grid[(k + 1) % points]);
        if grid[k].is_finite() && grid[k] <= l && grid[k] <= r {
            let x = h * k as f64;
            let ((t, v), _) = golden_section(value, x - h, x + h, (x, grid[k]), 1e-10);
            minima.push((t.rem_euclid(TAU), v));
        }
    }
    let best = minima.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::InsensitiveObservable { observable: observable.name() });
    }
    minima.retain(|m| m.1 <= best * (1.0 + 1e-9));
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    minima.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-6);
    Ok(minima)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingFit {
    pub scenario: Scenario,
    pub observable: Observable,
    pub eta: f64,
    /// `k` in `Δε² ≈ C / n_T^k`.
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub n_range: (f64, f64),
    pub optima: Vec<OptimizationResult>,
}

/// Least-squares line through `(ln n, ln Δε²)`: returns `(k, C, r²)` for
/// `Δε² = C n^{−k}`.
pub fn fit_power_law(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (-slope, intercept.exp(), r_squared)
}

/// Fit the optimal `Δε²` over a grid of photon numbers.
pub fn fit_scaling(scenario: Scenario, observable: Observable, eta: f64, n_grid: &[f64]) -> Result<ScalingFit> {
    fit_scaling_with(scenario, observable, eta, n_grid, &OptimizeOptions::default())
}

pub fn fit_scaling_with(
    scenario: Scenario,
    observable: Observable,
    eta: f64,
    n_grid: &[f64],
    opts: &OptimizeOptions,
) -> Result<ScalingFit> {
    if n_grid.len() < 3 {
        return Err(Error::InvalidGrid("need at least three photon numbers".into()));
    }
    if n_grid.iter().any(|&n| !(n.is_finite() && n >= 100.0)) {
        return Err(Error::InvalidGrid("all photon numbers must be finite and ≥ 100".into()));
    }
    let lo = n_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = n_grid.iter().copied().fold(0.0, f64::max);
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidGrid(format!("grid spans {:.3} decades, need ≥ 2", (hi / lo).log10())));
    }
    let optima: Vec<OptimizationResult> =
        n_grid.par_iter().map(|&n| optimize_with(scenario, observable, n, eta, opts)).collect::<Result<_>>()?;
    let points: Vec<(f64, f64)> = optima.iter().map(|o| (o.n_total, o.delta_eps_sq_star)).collect();
    let (exponent, prefactor, r_squared) = fit_power_law(&points);
    if r_squared < MIN_R_SQUARED {
        return Err(Error::PoorFit { r_squared, required: MIN_R_SQUARED, exponent, prefactor });
    }
    Ok(ScalingFit { scenario, observable, eta, exponent, prefactor, r_squared, n_range: (lo, hi), optima })
}

/// `n_grid` points log-spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    // powers of ten stay exact on decade grids
    let (a, b) = (lo.log10(), hi.log10());
    let mut grid: Vec<f64> = (0..points).map(|k| 10f64.powf(a + (b - a) * k as f64 / (points - 1) as f64)).collect();
    grid[0] = lo;
    grid[points - 1] = hi;
    grid
}
