//! Random engine-versus-oracle agreement runs.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{oracle_moments_adaptive, FockConfig};
use crate::channel::{ProbeConfig, Scenario};
use crate::error::Result;
use crate::moments::{compute_moments, MomentTable, MOMENT_INDICES};

/// Relative tolerance of the agreement check.
pub const AGREEMENT_TOL: f64 = 1e-6;

/// `count` probes with `r ≤ 0.6`, seeds `≤ 1.5`, uniform phases and
/// `η ∈ {1, 0.7}`, cycling through the four scenarios.
pub fn random_suite(seed: u64, count: usize) -> Vec<ProbeConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let r = rng.gen_range(0.0..=0.6);
            let (a1, a2) = (rng.gen_range(0.0..=1.5), rng.gen_range(0.0..=1.5));
            let (p1, p2, th) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
            let eta = if rng.gen_bool(0.5) { 1.0 } else { 0.7 };
            match Scenario::ALL[k % 4] {
                Scenario::SqueezedVacuum => ProbeConfig::squeezed_vacuum(r, th, eta),
                Scenario::SingleSeeded => ProbeConfig::single_seeded(a1, p1, r, th, eta),
                Scenario::DoubleSeeded => ProbeConfig::double_seeded(a1, a2, p1, p2, r, th, eta),
                Scenario::ClassicalCoherent => ProbeConfig::classical(a1, a2, p1, p2, eta),
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Agreement {
    pub cfg: ProbeConfig,
    pub n_max: usize,
    /// Worst relative disagreement over the value entries.
    pub value_rel: f64,
    /// Worst relative disagreement over the ε-derivatives.
    pub dvalue_rel: f64,
    pub worst_entry: (usize, usize),
}

impl Agreement {
    pub fn passed(&self) -> bool {
        self.value_rel <= AGREEMENT_TOL && self.dvalue_rel <= AGREEMENT_TOL
    }
}

/// Entry-wise comparison. Derivatives are measured against at least
/// `10⁻⁴ |value|`, so one that vanishes analytically (the norm, say) must
/// come out below `10⁻¹⁰ |value|`, well above difference roundoff.
pub fn compare_tables(cfg: &ProbeConfig, engine: &MomentTable, oracle: &MomentTable, n_max: usize) -> Agreement {
    let mut out = Agreement { cfg: *cfg, n_max, value_rel: 0.0, dvalue_rel: 0.0, worst_entry: (0, 0) };
    let mut worst = 0.0;
    for (p, q) in MOMENT_INDICES {
        let (a, b) = (engine.value(p, q), oracle.value(p, q));
        let v = (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        let v = if a == b { 0.0 } else { v };
        let (da, db) = (engine.deriv(p, q), oracle.deriv(p, q));
        let floor = 1e-4 * a.abs();
        let d = if da == db { 0.0 } else { (da - db).abs() / da.abs().max(db.abs()).max(floor) };
        out.value_rel = out.value_rel.max(v);
        out.dvalue_rel = out.dvalue_rel.max(d);
        if v.max(d) > worst {
            worst = v.max(d);
            out.worst_entry = (p, q);
        }
    }
    out
}

pub fn check_agreement(cfg: &ProbeConfig) -> Result<Agreement> {
    let engine = compute_moments(cfg)?;
    let (oracle, fock): (MomentTable, FockConfig) = oracle_moments_adaptive(cfg)?;
    Ok(compare_tables(cfg, &engine, &oracle, fock.n_max))
}

/// Agreement for every probe, in input order.
pub fn run_suite(cfgs: &[ProbeConfig]) -> Vec<Result<Agreement>> {
    cfgs.par_iter().map(check_agreement).collect()
}
