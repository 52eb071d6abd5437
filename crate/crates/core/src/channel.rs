//! Probe description and the operator transformation chain
//! displacement → two-mode squeezing → two-photon absorption → linear loss.
//!
//! Two routes are provided. [`build_port_operators`] composes the
//! single-operator output relations `d̂ᵢ = √η ĉᵢ + √(1−η) ûᵢ` with
//! `ĉ₁ = b̂₁ − (ε/2) b̂₂†b̂₂b̂₁`. Those relations are exact to first order for
//! linear observables, but a product of them drops the quantum-jump part of
//! the absorption generator, so photon-number *moments* are instead obtained
//! by applying the adjoint generator to the whole monomial
//! ([`moment_skeleton`], [`number_moment_monomial`]).

use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{EpsJet, Mode, OperatorPoly, Substitution};
use crate::error::{Error, Result};

/// Highest joint moment order `p + q` the estimators need.
pub const MAX_MOMENT_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    #[serde(rename = "vacuum")]
    SqueezedVacuum,
    #[serde(rename = "single")]
    SingleSeeded,
    #[serde(rename = "double")]
    DoubleSeeded,
    #[serde(rename = "classical")]
    ClassicalCoherent,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::SqueezedVacuum,
        Scenario::SingleSeeded,
        Scenario::DoubleSeeded,
        Scenario::ClassicalCoherent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SqueezedVacuum => "vacuum",
            Scenario::SingleSeeded => "single",
            Scenario::DoubleSeeded => "double",
            Scenario::ClassicalCoherent => "classical",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "vacuum" | "squeezed-vacuum" | "squeezedvacuum" => Ok(Scenario::SqueezedVacuum),
            "single" | "single-seeded" | "singleseeded" => Ok(Scenario::SingleSeeded),
            "double" | "double-seeded" | "doubleseeded" => Ok(Scenario::DoubleSeeded),
            "classical" | "coherent" | "classicalcoherent" => Ok(Scenario::ClassicalCoherent),
            other => Err(format!("unknown scenario '{other}'")),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Full probe description: coherent seeds, squeezing and transmissivity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub r: f64,
    pub theta: f64,
    pub eta: f64,
    pub scenario: Scenario,
}

impl ProbeConfig {
    pub fn squeezed_vacuum(r: f64, theta: f64, eta: f64) -> Self {
        ProbeConfig {
            alpha1: 0.0,
            alpha2: 0.0,
            phi1: 0.0,
            phi2: 0.0,
            r,
            theta,
            eta,
            scenario: Scenario::SqueezedVacuum,
        }
    }

    pub fn single_seeded(alpha1: f64, phi1: f64, r: f64, theta: f64, eta: f64) -> Self {
        ProbeConfig { alpha1, phi1, scenario: Scenario::SingleSeeded, ..Self::squeezed_vacuum(r, theta, eta) }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn double_seeded(
        alpha1: f64,
        alpha2: f64,
        phi1: f64,
        phi2: f64,
        r: f64,
        theta: f64,
        eta: f64,
    ) -> Self {
        ProbeConfig { alpha1, alpha2, phi1, phi2, r, theta, eta, scenario: Scenario::DoubleSeeded }
    }

    pub fn classical(alpha1: f64, alpha2: f64, phi1: f64, phi2: f64, eta: f64) -> Self {
        ProbeConfig {
            alpha1,
            alpha2,
            phi1,
            phi2,
            r: 0.0,
            theta: 0.0,
            eta,
            scenario: Scenario::ClassicalCoherent,
        }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        ProbeConfig { eta, ..self }
    }

    /// `θ − Φ` with `Φ = φ₁ + φ₂`, wrapped to `[0, 2π)`.
    pub fn relative_phase(&self) -> f64 {
        (self.theta - self.phi1 - self.phi2).rem_euclid(2.0 * PI)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("phi1", self.phi1),
            ("phi2", self.phi2),
            ("r", self.r),
            ("theta", self.theta),
            ("eta", self.eta),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} = {v} is not finite")));
            }
        }
        if self.alpha1 < 0.0 || self.alpha2 < 0.0 || self.r < 0.0 {
            return Err(Error::InvalidConfig("alpha1, alpha2 and r must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidConfig(format!("eta = {} outside [0, 1]", self.eta)));
        }
        match self.scenario {
            Scenario::SqueezedVacuum if self.alpha1 != 0.0 || self.alpha2 != 0.0 => {
                Err(Error::InvalidConfig("squeezed vacuum requires alpha1 = alpha2 = 0".into()))
            }
            Scenario::SingleSeeded if self.alpha2 != 0.0 => {
                Err(Error::InvalidConfig("single seeding requires alpha2 = 0".into()))
            }
            Scenario::ClassicalCoherent if self.r != 0.0 => {
                Err(Error::InvalidConfig("classical coherent probe requires r = 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Stable digest of the configuration (bit patterns of every field).
    pub fn digest(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for v in [self.alpha1, self.alpha2, self.phi1, self.phi2, self.r, self.theta, self.eta] {
            v.to_bits().hash(&mut h);
        }
        self.scenario.hash(&mut h);
        h.finish()
    }

    /// Mean fields `⟨b̂₁⟩, ⟨b̂₂⟩` after squeezing.
    pub fn mean_fields(&self) -> (Complex64, Complex64) {
        let s1 = Complex64::from_polar(self.alpha1, self.phi1);
        let s2 = Complex64::from_polar(self.alpha2, self.phi2);
        let (c, s) = (self.r.cosh(), Complex64::from_polar(self.r.sinh(), self.theta));
        (s1 * c + s * s2.conj(), s2 * c + s * s1.conj())
    }
}

/// Images of the squeezed, displaced modes in terms of the vacuum modes:
/// `b̂₁ = cosh r (v̂₁ + α₁e^{iφ₁}) + e^{iθ} sinh r (v̂₂ + α₂e^{iφ₂})†` and
/// symmetrically for `b̂₂`.
pub fn state_substitution(cfg: &ProbeConfig) -> Substitution {
    let (b1, b2) = bogoliubov_images(cfg);
    Substitution::new().with(Mode::V1, b1).with(Mode::V2, b2)
}

fn bogoliubov_images(cfg: &ProbeConfig) -> (OperatorPoly, OperatorPoly) {
    let a1 = OperatorPoly::annihilation(Mode::V1).substitute_displacement(Mode::V1, cfg.alpha1, cfg.phi1);
    let a2 = OperatorPoly::annihilation(Mode::V2).substitute_displacement(Mode::V2, cfg.alpha2, cfg.phi2);
    let c = cfg.r.cosh();
    let s = Complex64::from_polar(cfg.r.sinh(), cfg.theta);
    let b1 = a1.scale(c) + a2.adjoint().scale(s);
    let b2 = a2.scale(c) + a1.adjoint().scale(s);
    (b1, b2)
}

/// Detected fields at ε = 0, `√η b̂ᵢ + √(1−η) ûᵢ`, and the absorption jump
/// operator `b̂₁b̂₂` seen by the sample, all in the input vacuum modes.
pub(crate) fn detected_fields(cfg: &ProbeConfig) -> ([OperatorPoly; 2], OperatorPoly) {
    let (b1, b2) = bogoliubov_images(cfg);
    let jump = b1.mul_normal(&b2);
    let (t, l) = (cfg.eta.sqrt(), (1.0 - cfg.eta).sqrt());
    let mut d1 = b1.scale(t);
    let mut d2 = b2.scale(t);
    if l > 0.0 {
        d1 = d1 + OperatorPoly::annihilation(Mode::U1).scale(l);
        d2 = d2 + OperatorPoly::annihilation(Mode::U2).scale(l);
    }
    ([d1, d2], jump)
}

/// Output-port operators of the first-order chain.
#[derive(Clone, Debug)]
pub struct PortOperators {
    pub d1: OperatorPoly,
    pub d2: OperatorPoly,
    pub d1dag: OperatorPoly,
    pub d2dag: OperatorPoly,
    pub cfg: ProbeConfig,
}

/// Compose displacement, squeezing, the first-order absorption correction
/// and the loss beam splitter into `d̂₁, d̂₂` over the modes `v1, v2, u1, u2`.
pub fn build_port_operators(cfg: &ProbeConfig) -> Result<PortOperators> {
    cfg.validate()?;
    let (b1, b2) = bogoliubov_images(cfg);
    let half_eps = EpsJet::EPS * 0.5;
    let c1 = &b1 - &b2.adjoint().mul_normal(&b2).mul_normal(&b1).scale(half_eps);
    let c2 = &b2 - &b1.adjoint().mul_normal(&b1).mul_normal(&b2).scale(half_eps);
    let (t, l) = (cfg.eta.sqrt(), (1.0 - cfg.eta).sqrt());
    // bath modes are kept even at η = 1 (zero coefficient drops out)
    let d1 = c1.scale(t) + OperatorPoly::annihilation(Mode::U1).scale(l);
    let d2 = c2.scale(t) + OperatorPoly::annihilation(Mode::U2).scale(l);
    Ok(PortOperators { d1dag: d1.adjoint(), d2dag: d2.adjoint(), d1, d2, cfg: *cfg })
}

/// Adjoint two-photon absorption generator acting on an observable written in
/// the sample-output modes (labelled `v1, v2`):
/// `L'(O) = L†OL − ½(L†L O + O L†L)` with `L = v̂₁v̂₂`.
pub fn tpa_adjoint(obs: &OperatorPoly) -> OperatorPoly {
    let jump = OperatorPoly::annihilation(Mode::V1).mul_normal(&OperatorPoly::annihilation(Mode::V2));
    let jump_dag = jump.adjoint();
    let rate = jump_dag.mul_normal(&jump);
    let sandwich = jump_dag.mul_normal(obs).mul_normal(&jump);
    let anti = rate.mul_normal(obs) + obs.mul_normal(&rate);
    sandwich - anti.scale(0.5)
}

/// Heisenberg-picture loss: `v̂ᵢ → √η v̂ᵢ + √(1−η) ûᵢ`, bath traced in vacuum.
pub fn apply_loss_adjoint(obs: &OperatorPoly, eta: f64) -> OperatorPoly {
    let (t, l) = (eta.sqrt(), (1.0 - eta).sqrt());
    let img = |v: Mode, u: Mode| {
        OperatorPoly::annihilation(v).scale(t) + OperatorPoly::annihilation(u).scale(l)
    };
    let sub = Substitution::new().with(Mode::V1, img(Mode::V1, Mode::U1)).with(Mode::V2, img(Mode::V2, Mode::U2));
    obs.substitute(&sub).vacuum_trace(&[Mode::U1, Mode::U2])
}

/// `n̂₁ᵖ n̂₂^q` in normal order.
pub fn number_monomial(p: usize, q: usize) -> OperatorPoly {
    let n1 = OperatorPoly::number(Mode::V1).pow_normal(p as u32);
    let n2 = OperatorPoly::number(Mode::V2).pow_normal(q as u32);
    n1.mul_normal(&n2)
}

fn check_order(p: usize, q: usize) -> Result<()> {
    if p + q > MAX_MOMENT_ORDER {
        return Err(Error::MomentOrder(p + q));
    }
    Ok(())
}

/// The detected observable `n̂₁ᵖ n̂₂^q` pulled back through loss and the
/// first-order absorption map to the sample input: `Λ(O) + ε L'(Λ(O))`,
/// with `Λ` the loss adjoint. The result lives on the modes `v1, v2`, which
/// here stand for the light incident on the sample.
pub fn moment_skeleton(eta: f64, p: usize, q: usize) -> Result<OperatorPoly> {
    check_order(p, q)?;
    let lossy = apply_loss_adjoint(&number_monomial(p, q), eta);
    Ok(&lossy + &tpa_adjoint(&lossy).scale(EpsJet::EPS))
}

/// `(d̂₁†d̂₁)ᵖ(d̂₂†d̂₂)^q` to first order in ε, fully expanded over the vacuum
/// modes. Its vacuum expectation is the joint moment `⟨n₁ᵖn₂^q⟩`.
///
/// This is the expanded reference form; [`crate::moments::compute_moments`]
/// evaluates the same quantity without expanding.
pub fn number_moment_monomial(ports: &PortOperators, p: usize, q: usize) -> Result<OperatorPoly> {
    check_order(p, q)?;
    let skeleton = moment_skeleton(ports.cfg.eta, p, q)?;
    Ok(skeleton.substitute(&state_substitution(&ports.cfg)))
}

/// Total photon number incident on the sample, `⟨n̂₁ + n̂₂⟩` at `ε = 0`,
/// computed from the operator algebra (loss is ignored).
pub fn incident_photon_number(cfg: &ProbeConfig) -> f64 {
    let (b1, b2) = bogoliubov_images(cfg);
    let n = b1.adjoint().mul_normal(&b1) + b2.adjoint().mul_normal(&b2);
    n.vacuum_expectation().value0.re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::VacuumEvaluator;

    fn v(mode: Mode) -> OperatorPoly {
        OperatorPoly::annihilation(mode)
    }

    #[test]
    fn identity_channel() {
        let cfg = ProbeConfig::squeezed_vacuum(0.0, 0.0, 1.0);
        let ports = build_port_operators(&cfg).unwrap();
        // identity at ε = 0; the absorption term survives as an operator
        let jet_free = |p: &OperatorPoly| {
            OperatorPoly::formal(
                p.terms()
                    .into_iter()
                    .map(|t| crate::algebra::OperatorTerm::new(EpsJet::constant(t.coeff.value0), t.factors))
                    .collect(),
            )
            .normal_order()
        };
        assert_eq!(jet_free(&ports.d1).max_abs_diff(&v(Mode::V1)), 0.0);
        assert_eq!(jet_free(&ports.d2).max_abs_diff(&v(Mode::V2)), 0.0);
        let eps_part = &ports.d1 - &v(Mode::V1);
        let expected = OperatorPoly::number(Mode::V2).mul_normal(&v(Mode::V1)).scale(EpsJet::EPS * -0.5);
        assert!(eps_part.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn single_seed_first_order_term() {
        let alpha = 1.3;
        let cfg = ProbeConfig::single_seeded(alpha, 0.0, 0.0, 0.0, 1.0);
        let ports = build_port_operators(&cfg).unwrap();
        let a1 = v(Mode::V1) + OperatorPoly::scalar(alpha);
        let expected = &a1 - &OperatorPoly::number(Mode::V2).mul_normal(&a1).scale(EpsJet::EPS * 0.5);
        assert!(ports.d1.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn full_loss_leaves_bath() {
        let cfg = ProbeConfig::squeezed_vacuum(0.7, 0.2, 0.0);
        let ports = build_port_operators(&cfg).unwrap();
        assert!(ports.d1.max_abs_diff(&v(Mode::U1)) < 1e-15);
        assert!(ports.d2dag.max_abs_diff(&OperatorPoly::creation(Mode::U2)) < 1e-15);
    }

    #[test]
    fn adjoint_relation_between_ports() {
        let cfg = ProbeConfig::double_seeded(0.4, 0.9, 0.3, -1.0, 0.5, 0.8, 0.6);
        let p = build_port_operators(&cfg).unwrap();
        assert!(p.d1dag.max_abs_diff(&p.d1.adjoint()) == 0.0);
        assert!(p.d2dag.adjoint().max_abs_diff(&p.d2) == 0.0);
    }

    #[test]
    fn absorption_on_single_operator_matches_output_relation() {
        // L'(a₁) = −½ n̂₂ a₁, which is where ĉ₁ = b̂₁ − (ε/2) b̂₂†b̂₂b̂₁ comes from.
        let got = tpa_adjoint(&v(Mode::V1));
        let expected = OperatorPoly::number(Mode::V2).mul_normal(&v(Mode::V1)).scale(-0.5);
        assert!(got.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn absorption_generator_on_pair_number() {
        // L'(n₁n₂) = n₁n₂(1 − n₁ − n₂): removing one pair changes n₁n₂ by 1 − n₁ − n₂.
        let n1 = OperatorPoly::number(Mode::V1);
        let n2 = OperatorPoly::number(Mode::V2);
        let n12 = n1.mul_normal(&n2);
        let expected = &n12 - &(n12.mul_normal(&(&n1 + &n2)));
        assert!(tpa_adjoint(&n12).max_abs_diff(&expected) < 1e-13);
    }

    #[test]
    fn rejects_high_moment_order() {
        let cfg = ProbeConfig::squeezed_vacuum(0.2, 0.0, 1.0);
        let ports = build_port_operators(&cfg).unwrap();
        assert!(matches!(number_moment_monomial(&ports, 3, 2), Err(Error::MomentOrder(5))));
    }

    #[test]
    fn zeroth_moment_is_identity() {
        let cfg = ProbeConfig::single_seeded(0.5, 0.1, 0.3, 0.0, 0.8);
        let ports = build_port_operators(&cfg).unwrap();
        let p = number_moment_monomial(&ports, 0, 0).unwrap();
        assert!(p.max_abs_diff(&OperatorPoly::identity()) == 0.0);
    }

    #[test]
    fn vacuum_first_moment_is_sinh_squared() {
        let r = 0.9;
        let cfg = ProbeConfig::squeezed_vacuum(r, 0.4, 1.0);
        let ports = build_port_operators(&cfg).unwrap();
        let n1 = number_moment_monomial(&ports, 1, 0).unwrap().vacuum_expectation();
        assert!((n1.value0.re - r.sinh().powi(2)).abs() < 1e-13);
    }

    #[test]
    fn first_moments_agree_with_port_products() {
        let cfg = ProbeConfig::double_seeded(0.7, 0.4, 0.2, 1.1, 0.35, 2.0, 0.75);
        let ports = build_port_operators(&cfg).unwrap();
        let via_ports = ports.d1dag.mul_normal(&ports.d1).vacuum_expectation();
        let via_generator = number_moment_monomial(&ports, 1, 0).unwrap().vacuum_expectation();
        assert!((via_ports.value0 - via_generator.value0).norm() < 1e-12);
        assert!((via_ports.dvalue - via_generator.dvalue).norm() < 1e-12);
    }

    #[test]
    fn port_products_miss_the_jump_term_in_pair_correlation() {
        // Coherent α₁ = α₂ = 1: ∂⟨n₁n₂⟩/∂ε = −⟨n₁n₂(n₁+n₂−1)⟩ = −3, while the
        // product of first-order port operators gives −⟨n₁n₂(n₁+n₂)⟩ = −4.
        let cfg = ProbeConfig::classical(1.0, 1.0, 0.0, 0.0, 1.0);
        let ports = build_port_operators(&cfg).unwrap();
        let exact = number_moment_monomial(&ports, 1, 1).unwrap().vacuum_expectation();
        assert!((exact.value0.re - 1.0).abs() < 1e-13);
        assert!((exact.dvalue.re + 3.0).abs() < 1e-12);
        let naive = ports
            .d1dag
            .mul_normal(&ports.d1)
            .mul_normal(&ports.d2dag.mul_normal(&ports.d2))
            .vacuum_expectation();
        assert!((naive.dvalue.re + 4.0).abs() < 1e-12);
    }

    #[test]
    fn incident_photon_number_formulas() {
        let r: f64 = 0.8;
        let sv = ProbeConfig::squeezed_vacuum(r, 0.3, 1.0);
        assert!((incident_photon_number(&sv) - 2.0 * r.sinh().powi(2)).abs() < 1e-12);
        let a1: f64 = 1.7;
        let ss = ProbeConfig::single_seeded(a1, 0.9, r, 2.1, 1.0);
        let expect = a1 * a1 * (2.0 * r).cosh() + 2.0 * r.sinh().powi(2);
        assert!((incident_photon_number(&ss) - expect).abs() < 1e-12);
        let (a1, a2, th) = (1.1_f64, 0.6_f64, 0.7_f64);
        let ds = ProbeConfig::double_seeded(a1, a2, 0.0, 0.0, r, th, 1.0);
        let expect = (a1 * a1 + a2 * a2) * (2.0 * r).cosh()
            + 2.0 * a1 * a2 * th.cos() * (2.0 * r).sinh()
            + 2.0 * r.sinh().powi(2);
        assert!((incident_photon_number(&ds) - expect).abs() < 1e-12);
    }

    #[test]
    fn evaluator_matches_expanded_moment() {
        let cfg = ProbeConfig::double_seeded(0.5, 0.3, 0.4, 1.2, 0.3, 0.9, 0.7);
        let ports = build_port_operators(&cfg).unwrap();
        let mut ev = VacuumEvaluator::new(&state_substitution(&cfg));
        for (p, q) in [(1, 1), (2, 0), (1, 2)] {
            let full = number_moment_monomial(&ports, p, q).unwrap().vacuum_expectation();
            let fast = ev.expectation(&moment_skeleton(cfg.eta, p, q).unwrap());
            assert!((full.value0 - fast.value0).norm() < 1e-11 * (1.0 + full.value0.norm()));
            assert!((full.dvalue - fast.dvalue).norm() < 1e-11 * (1.0 + full.dvalue.norm()));
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ProbeConfig::squeezed_vacuum(0.5, 0.0, 1.0);
        cfg.alpha1 = 0.1;
        assert!(cfg.validate().is_err());
        assert!(ProbeConfig::squeezed_vacuum(0.5, 0.0, 1.2).validate().is_err());
        assert!(ProbeConfig::squeezed_vacuum(f64::NAN, 0.0, 1.0).validate().is_err());
        let mut c = ProbeConfig::classical(1.0, 1.0, 0.0, 0.0, 1.0);
        c.r = 0.1;
        assert!(c.validate().is_err());
    }
}
