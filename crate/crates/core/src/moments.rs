//! Joint photon-number moments `⟨n₁ᵖn₂^q⟩` (p+q ≤ 4) and their ε-derivatives.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::Serialize;

use crate::algebra::{EpsJet, Ket, OperatorPoly, VacuumEvaluator};
use crate::channel::{detected_fields, moment_skeleton, state_substitution, ProbeConfig, MAX_MOMENT_ORDER};
use crate::error::Result;

/// Moment indices in table order: by total order, then descending `p`.
pub const MOMENT_INDICES: [(usize, usize); 15] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
    (4, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 4),
];

fn slot(p: usize, q: usize) -> Option<usize> {
    if p + q > MAX_MOMENT_ORDER {
        return None;
    }
    let n = p + q;
    // entries before total order n: n(n+1)/2, then descending p within the order
    Some(n * (n + 1) / 2 + (n - p))
}

/// Moments of one probe. Each entry is `⟨n₁ᵖn₂^q⟩ + ε ∂⟨n₁ᵖn₂^q⟩/∂ε` at ε = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    entries: [EpsJet; 15],
    cfg_hash: u64,
    difference: Option<DifferenceStats>,
}

/// Statistics of the difference `D = n₁ − n₂` and the sum `T = n₁ + n₂`,
/// evaluated directly rather than from the raw table.
///
/// For twin beams the raw fourth moments exceed `Var(D²)` by up to
/// `n_T⁴`, so combining them in double precision loses every digit once
/// `n_T ≳ 10⁴`. Here `D` is expanded with collected coefficients, where the
/// `cosh²r − sinh²r` cancellation is exact, and the moments are norms and
/// overlaps of the kets `D|0⟩`, `D²|0⟩`, `T|0⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DifferenceStats {
    pub mean_d: EpsJet,
    pub mean_d2: EpsJet,
    pub mean_t: EpsJet,
    pub mean_d3: f64,
    pub mean_d4: f64,
    pub mean_t2: f64,
    pub mean_dt: f64,
    pub mean_d2t: f64,
}

impl DifferenceStats {
    pub fn compute(cfg: &ProbeConfig) -> Self {
        let ([f1, f2], jump) = detected_fields(cfg);
        let n1 = f1.adjoint().mul_normal(&f1);
        let n2 = f2.adjoint().mul_normal(&f2);
        let (d, t) = (&n1 - &n2, &n1 + &n2);
        let vac = Ket::vacuum();
        let kd = vac.apply_poly(&d);
        let kdd = kd.apply_poly(&d);
        let kt = vac.apply_poly(&t);
        // ∂⟨Y⟩/∂ε = ⟨ψ|Y|ψ⟩ − Re⟨χ|Y|0⟩ with ψ = J|0⟩, χ = J†J|0⟩ and J the
        // jump operator in the input modes
        let psi = vac.apply_poly(&jump);
        let chi = psi.apply_poly(&jump.adjoint());
        let d_psi = psi.apply_poly(&d);
        let jet = |value: EpsJet, sandwich: EpsJet, anti: EpsJet| {
            EpsJet::new(value.value0.re.into(), (sandwich.value0.re - anti.value0.re).into())
        };
        DifferenceStats {
            mean_d: jet(vac.inner(&kd), psi.inner(&d_psi), chi.inner(&kd)),
            mean_d2: jet(kd.inner(&kd), d_psi.inner(&d_psi), chi.inner(&kdd)),
            mean_t: jet(vac.inner(&kt), psi.inner(&psi.apply_poly(&t)), chi.inner(&kt)),
            mean_d3: kd.inner(&kdd).value0.re,
            mean_d4: kdd.inner(&kdd).value0.re,
            mean_t2: kt.inner(&kt).value0.re,
            mean_dt: kd.inner(&kt).value0.re,
            mean_d2t: kdd.inner(&kt).value0.re,
        }
    }
}

#[derive(Serialize)]
struct EntryRecord {
    p: usize,
    q: usize,
    value0: f64,
    dvalue: f64,
}

impl Serialize for MomentTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let records: Vec<EntryRecord> = MOMENT_INDICES
            .iter()
            .map(|&(p, q)| EntryRecord { p, q, value0: self.value(p, q), dvalue: self.deriv(p, q) })
            .collect();
        records.serialize(s)
    }
}

impl MomentTable {
    /// Assemble from entries listed in [`MOMENT_INDICES`] order.
    pub fn from_entries(entries: [EpsJet; 15], cfg_hash: u64) -> Self {
        MomentTable { entries, cfg_hash, difference: None }
    }

    /// Attach directly evaluated difference statistics.
    pub fn with_difference(mut self, stats: DifferenceStats) -> Self {
        self.difference = Some(stats);
        self
    }

    pub fn difference(&self) -> Option<&DifferenceStats> {
        self.difference.as_ref()
    }

    pub fn cfg_hash(&self) -> u64 {
        self.cfg_hash
    }

    /// Panics if `p + q > 4`.
    pub fn get(&self, p: usize, q: usize) -> EpsJet {
        self.entries[slot(p, q).expect("moment order beyond table")]
    }

    /// Real part at ε = 0.
    pub fn value(&self, p: usize, q: usize) -> f64 {
        self.get(p, q).value0.re
    }

    /// Real part of the ε-derivative at ε = 0.
    pub fn deriv(&self, p: usize, q: usize) -> f64 {
        self.get(p, q).dvalue.re
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), EpsJet)> + '_ {
        MOMENT_INDICES.iter().map(move |&(p, q)| ((p, q), self.get(p, q)))
    }

    /// Entries with modes 1 and 2 swapped.
    pub fn exchanged(&self) -> MomentTable {
        let mut entries = self.entries;
        for &(p, q) in &MOMENT_INDICES {
            entries[slot(p, q).unwrap()] = self.get(q, p);
        }
        let difference = self.difference.map(|mut d| {
            d.mean_d = -d.mean_d;
            d.mean_d3 = -d.mean_d3;
            d.mean_dt = -d.mean_dt;
            d
        });
        MomentTable { entries, cfg_hash: self.cfg_hash, difference }
    }
}

type SkeletonSet = Arc<Vec<OperatorPoly>>;

fn skeleton_cache() -> &'static RwLock<HashMap<u64, SkeletonSet>> {
    static CACHE: OnceLock<RwLock<HashMap<u64, SkeletonSet>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Heisenberg-picture observables for all fifteen moments at one
/// transmissivity. They depend on η only, so sweeps over probe parameters
/// share them.
fn skeletons(eta: f64) -> Result<SkeletonSet> {
    let key = eta.to_bits();
    if let Some(s) = skeleton_cache().read().unwrap().get(&key) {
        return Ok(s.clone());
    }
    let built: Vec<OperatorPoly> =
        MOMENT_INDICES.iter().map(|&(p, q)| moment_skeleton(eta, p, q)).collect::<Result<_>>()?;
    let built = Arc::new(built);
    let mut cache = skeleton_cache().write().unwrap();
    if cache.len() > 512 {
        cache.clear();
    }
    cache.insert(key, built.clone());
    Ok(built)
}

/// Evaluate the full moment table for a probe.
pub fn compute_moments(cfg: &ProbeConfig) -> Result<MomentTable> {
    cfg.validate()?;
    let skel = skeletons(cfg.eta)?;
    let mut ev = VacuumEvaluator::new(&state_substitution(cfg));
    let mut entries = [EpsJet::ZERO; 15];
    for (slot, poly) in entries.iter_mut().zip(skel.iter()) {
        *slot = ev.expectation(poly);
    }
    entries[0] = EpsJet::ONE;
    Ok(MomentTable { entries, cfg_hash: cfg.digest(), difference: Some(DifferenceStats::compute(cfg)) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_port_operators, number_moment_monomial};

    fn thermal_moments(m: f64) -> [f64; 5] {
        // ⟨nᵏ⟩ for a thermal distribution with mean m, k = 0..4
        [
            1.0,
            m,
            2.0 * m * m + m,
            6.0 * m.powi(3) + 6.0 * m * m + m,
            24.0 * m.powi(4) + 36.0 * m.powi(3) + 14.0 * m * m + m,
        ]
    }

    #[test]
    fn slots_are_a_bijection() {
        let mut seen = [false; 15];
        for (i, &(p, q)) in MOMENT_INDICES.iter().enumerate() {
            assert_eq!(slot(p, q), Some(i));
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(slot(5, 0), None);
    }

    #[test]
    fn vacuum_in_vacuum_out() {
        let m = compute_moments(&ProbeConfig::squeezed_vacuum(0.0, 0.3, 0.8)).unwrap();
        for ((p, q), e) in m.iter() {
            if (p, q) == (0, 0) {
                assert_eq!(e, EpsJet::ONE);
            } else {
                assert!(e.norm_max() < 1e-15, "({p},{q}) = {e}");
            }
        }
    }

    #[test]
    fn squeezed_vacuum_is_twin_thermal() {
        // Lossless twin beam: n₁ = n₂ with thermal statistics, so
        // ⟨n₁ᵖn₂^q⟩ = ⟨n^(p+q)⟩ and ∂⟨n₁n₂⟩/∂ε = −(2⟨n³⟩ − ⟨n²⟩).
        let r: f64 = 0.5;
        let mean = r.sinh().powi(2);
        let th = thermal_moments(mean);
        let m = compute_moments(&ProbeConfig::squeezed_vacuum(r, 1.2, 1.0)).unwrap();
        for ((p, q), e) in m.iter() {
            let want = th[p + q];
            assert!((e.value0.re - want).abs() < 1e-12 * want.max(1.0), "({p},{q})");
            assert!(e.value0.im.abs() < 1e-12);
        }
        let d11 = -(2.0 * th[3] - th[2]);
        assert!((m.deriv(1, 1) - d11).abs() < 1e-12);
        // dn₁/dε = −⟨n₁n₂⟩
        assert!((m.deriv(1, 0) + th[2]).abs() < 1e-12);
    }

    #[test]
    fn matches_expanded_monomials() {
        let cfg = ProbeConfig::single_seeded(0.8, 0.4, 0.45, 1.9, 0.7);
        let table = compute_moments(&cfg).unwrap();
        let ports = build_port_operators(&cfg).unwrap();
        for &(p, q) in &[(1, 0), (0, 1), (1, 1), (2, 1), (0, 3)] {
            let direct = number_moment_monomial(&ports, p, q).unwrap().vacuum_expectation();
            let e = table.get(p, q);
            assert!((direct.value0 - e.value0).norm() < 1e-10 * (1.0 + e.value0.norm()));
            assert!((direct.dvalue - e.dvalue).norm() < 1e-10 * (1.0 + e.dvalue.norm()));
        }
    }

    #[test]
    fn first_moments_scale_with_eta() {
        let base = ProbeConfig::double_seeded(0.9, 0.5, 0.3, 2.2, 0.6, 0.1, 1.0);
        let full = compute_moments(&base).unwrap();
        for eta in [0.0, 0.3, 0.77] {
            let lossy = compute_moments(&base.with_eta(eta)).unwrap();
            assert!((lossy.value(1, 0) - eta * full.value(1, 0)).abs() < 1e-12);
            assert!((lossy.value(0, 1) - eta * full.value(0, 1)).abs() < 1e-12);
            assert!((lossy.deriv(1, 0) - eta * full.deriv(1, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn difference_stats_match_raw_moments() {
        let cfg = ProbeConfig::double_seeded(1.1, 0.6, 0.3, 1.7, 0.5, 0.9, 0.8);
        let m = compute_moments(&cfg).unwrap();
        let s = *m.difference().unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-10 * (1.0 + b.abs());
        let g = |p, q| m.get(p, q);
        let d1 = g(1, 0) - g(0, 1);
        let d2 = g(2, 0) - g(1, 1) * 2.0 + g(0, 2);
        let t1 = g(1, 0) + g(0, 1);
        assert!(close(s.mean_d.value0.re, d1.value0.re) && close(s.mean_d.dvalue.re, d1.dvalue.re));
        assert!(close(s.mean_d2.value0.re, d2.value0.re) && close(s.mean_d2.dvalue.re, d2.dvalue.re));
        assert!(close(s.mean_t.value0.re, t1.value0.re) && close(s.mean_t.dvalue.re, t1.dvalue.re));
        let v = |p, q| m.value(p, q);
        assert!(close(s.mean_d3, v(3, 0) - 3.0 * v(2, 1) + 3.0 * v(1, 2) - v(0, 3)));
        assert!(close(s.mean_d4, v(4, 0) - 4.0 * v(3, 1) + 6.0 * v(2, 2) - 4.0 * v(1, 3) + v(0, 4)));
        assert!(close(s.mean_t2, v(2, 0) + 2.0 * v(1, 1) + v(0, 2)));
        assert!(close(s.mean_dt, v(2, 0) - v(0, 2)));
        assert!(close(s.mean_d2t, v(3, 0) - v(2, 1) - v(1, 2) + v(0, 3)));
    }

    #[test]
    fn lossless_difference_commutes_with_absorption() {
        let m = compute_moments(&ProbeConfig::single_seeded(2.0, 0.4, 1.5, 0.0, 1.0)).unwrap();
        let s = m.difference().unwrap();
        assert!(s.mean_d.dvalue.norm() < 1e-9);
        assert!(s.mean_d2.dvalue.norm() < 1e-9);
        assert!(s.mean_t.dvalue.re < 0.0);
    }

    #[test]
    fn classical_pair_correlation_derivative() {
        let m = compute_moments(&ProbeConfig::classical(1.0, 1.0, 0.0, 0.0, 1.0)).unwrap();
        assert!((m.value(1, 1) - 1.0).abs() < 1e-13);
        assert!((m.deriv(1, 1) + 3.0).abs() < 1e-12);
    }
}
