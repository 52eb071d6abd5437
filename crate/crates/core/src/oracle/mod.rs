//! Brute-force reference: evolve the truncated two-mode density matrix
//! through seeding, squeezing, absorption and loss, and read the moments
//! off its diagonal. Shares nothing with the symbolic engine.

mod fock;
pub mod suite;

pub use fock::{apply_displacement, apply_loss, apply_tpa, apply_two_mode_squeeze, DensityOperator, TpaMode};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::algebra::EpsJet;
use crate::channel::ProbeConfig;
use crate::error::{Error, Result};
use crate::moments::{MomentTable, MOMENT_INDICES};

#[derive(Clone, Debug, PartialEq)]
pub struct FockConfig {
    /// Per-mode photon cutoff.
    pub n_max: usize,
    /// Finite-difference steps, largest first; the first two are used.
    pub eps_values: Vec<f64>,
    pub tail_tol: f64,
    pub tpa: TpaMode,
    /// Allowed relative spread between the two step estimates.
    pub richardson_tol: f64,
}

impl FockConfig {
    pub fn new(n_max: usize) -> Self {
        FockConfig { n_max, eps_values: vec![1e-4, 5e-5], tail_tol: 1e-10, tpa: TpaMode::Exact, richardson_tol: 1e-7 }
    }

    /// Cutoff `⌈4 n̄ + 12⌉` from a bound on the per-mode mean photon number.
    /// The steps shrink with `(1 + n̄₁)(1 + n̄₂)`, which tracks the curvature
    /// of the moments in ε, so the second-order difference error stays
    /// below the Richardson tolerance.
    pub fn for_probe(cfg: &ProbeConfig) -> Self {
        let (c, s) = (cfg.r.cosh(), cfg.r.sinh());
        let m1 = (c * cfg.alpha1 + s * cfg.alpha2).powi(2) + s * s;
        let m2 = (c * cfg.alpha2 + s * cfg.alpha1).powi(2) + s * s;
        let mut fock = Self::new((4.0 * m1.max(m2) + 12.0).ceil() as usize);
        let rate = (1.0 + m1) * (1.0 + m2);
        fock.eps_values.iter_mut().for_each(|h| *h /= rate);
        fock
    }
}

/// The probe state before absorption: squeezer applied to the displaced
/// vacuum, built as a pure state and then lifted to a density matrix.
pub fn prepare_state(cfg: &ProbeConfig, fock: &FockConfig) -> Result<DensityOperator> {
    cfg.validate()?;
    let n = fock.n_max;
    let mut psi = fock::vacuum_vector(n);
    for (mode, alpha, phi) in [(1, cfg.alpha1, cfg.phi1), (2, cfg.alpha2, cfg.phi2)] {
        if alpha != 0.0 {
            psi = fock::displacement(n, alpha, phi, mode).exp_action(&psi);
        }
    }
    if cfg.r != 0.0 {
        psi = fock::squeezer(n, cfg.r, cfg.theta).exp_action(&psi);
    }
    let rho = DensityOperator::from_pure(&psi, n, fock.tail_tol);
    rho.check_tail()?;
    Ok(rho)
}

fn detected_moments(rho: &DensityOperator, eta: f64) -> Result<[f64; 15]> {
    let pop: DMatrix<f64> = apply_loss(rho, eta)?.populations();
    Ok(MOMENT_INDICES.map(|(p, q)| fock::moment_of(&pop, p as u32, q as u32)))
}

/// Moment table by direct trace, derivatives by central differences at the
/// two configured steps combined by Richardson extrapolation. The steps are
/// quartered (at most three times) until the two estimates agree.
pub fn oracle_moments(cfg: &ProbeConfig, fock: &FockConfig) -> Result<MomentTable> {
    let (h1, h2) = match fock.eps_values.as_slice() {
        [a, b, ..] if *a > *b && *b > 0.0 => (*a, *b),
        _ => return Err(Error::InvalidConfig("eps_values must hold two decreasing positive steps".into())),
    };
    let rho = prepare_state(cfg, fock)?;
    let f0 = detected_moments(&rho, cfg.eta)?;
    // loss is linear, so the difference quotient passes through it
    let central = |h: f64| detected_moments(&fock::tpa_central_difference(&rho, h, fock.tpa), cfg.eta);
    let q2 = (h1 / h2).powi(2);
    let mut shrink = 1.0;
    let mut worst = 0.0;
    // quarter both steps while the two estimates disagree
    for _ in 0..4 {
        let (d1, d2) = (central(h1 * shrink)?, central(h2 * shrink)?);
        let mut entries = [EpsJet::real(0.0); 15];
        worst = 0.0f64;
        for k in 0..15 {
            let rich = (q2 * d2[k] - d1[k]) / (q2 - 1.0);
            // a derivative that vanishes analytically is resolved only to rounding
            let noise = 1e3 * f64::EPSILON * f0[k].abs();
            let spread = (d1[k] - d2[k]).abs();
            if spread > fock.richardson_tol * rich.abs() + noise {
                worst = worst.max(spread / rich.abs().max(f64::MIN_POSITIVE));
            }
            entries[k] = EpsJet::new(Complex64::new(f0[k], 0.0), Complex64::new(rich, 0.0));
        }
        if worst == 0.0 {
            return Ok(MomentTable::from_entries(entries, cfg.digest()));
        }
        shrink *= 0.25;
    }
    Err(Error::DerivativeUnstable { rel: worst })
}

/// [`oracle_moments`] starting from [`FockConfig::for_probe`], enlarging the
/// cutoff by a quarter (up to four times) while the tail check fails.
/// Displaced squeezed states are broader than the heuristic assumes.
pub fn oracle_moments_adaptive(cfg: &ProbeConfig) -> Result<(MomentTable, FockConfig)> {
    let mut fock = FockConfig::for_probe(cfg);
    let mut attempt = 0;
    loop {
        match oracle_moments(cfg, &fock) {
            Err(Error::TruncationUnsafe { .. }) if attempt < 4 => {
                fock.n_max = (fock.n_max as f64 * 1.25).ceil() as usize;
                attempt += 1;
            }
            other => return other.map(|m| (m, fock)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::compute_moments;

    const TOL: f64 = 1e-10;

    fn vacuum(n: usize) -> DensityOperator {
        DensityOperator::vacuum(n, TOL)
    }

    fn max_moment_gap(a: &DensityOperator, b: &DensityOperator) -> f64 {
        MOMENT_INDICES
            .iter()
            .map(|&(p, q)| (a.moment(p as u32, q as u32) - b.moment(p as u32, q as u32)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn displacement_examples() {
        let v = vacuum(20);
        assert_eq!(apply_displacement(&v, 0.0, 0.3, 1).unwrap(), v);
        let d = apply_displacement(&v, 1.0, 0.3, 1).unwrap();
        assert!((d.moment(1, 0) - 1.0).abs() < 1e-8);
        assert!(d.moment(0, 1).abs() < 1e-14);
        let back = apply_displacement(&d, 1.0, 0.3 + std::f64::consts::PI, 1).unwrap();
        assert!(back.fidelity_with(&fock::vacuum_vector(20)) >= 1.0 - 1e-8);
        assert!((back.trace() - 1.0).abs() < 1e-10);
        assert!(apply_displacement(&v, 1.0, 0.0, 3).is_err());
    }

    #[test]
    fn squeeze_examples() {
        let v = vacuum(24);
        assert_eq!(apply_two_mode_squeeze(&v, 0.0, 1.0).unwrap(), v);
        let r: f64 = 0.5;
        let s = apply_two_mode_squeeze(&v, r, 0.7).unwrap();
        let total = s.moment(1, 0) + s.moment(0, 1);
        assert!((total - 2.0 * r.sinh().powi(2)).abs() < 1e-7);
        let pop = s.populations();
        let off_diagonal: f64 = (0..25).flat_map(|i| (0..25).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| pop[(i, j)].abs()).sum();
        assert!(off_diagonal < 1e-14, "pair emission keeps n₁ = n₂");
    }

    #[test]
    fn truncation_is_detected() {
        let v = vacuum(6);
        assert!(matches!(apply_displacement(&v, 2.0, 0.0, 1), Err(Error::TruncationUnsafe { .. })));
        let cfg = ProbeConfig::single_seeded(2.0, 0.0, 0.2, 0.0, 1.0);
        let small = FockConfig { n_max: 8, ..FockConfig::new(8) };
        assert!(matches!(oracle_moments(&cfg, &small), Err(Error::TruncationUnsafe { .. })));
    }

    #[test]
    fn tpa_examples() {
        let eps = 1e-3;
        let v = DensityOperator::fock(4, 1, 1, TOL);
        assert_eq!(apply_tpa(&v, 0.0, TpaMode::Exact).unwrap(), v);
        let first = apply_tpa(&v, eps, TpaMode::FirstOrder).unwrap();
        assert!((first.moment(1, 0) - (1.0 - eps)).abs() < 1e-14);
        let single = DensityOperator::fock(4, 1, 0, TOL);
        for mode in [TpaMode::FirstOrder, TpaMode::Exact] {
            assert_eq!(apply_tpa(&single, 0.3, mode).unwrap(), single);
        }
        assert!(apply_tpa(&v, -1e-3, TpaMode::Exact).is_err());
    }

    #[test]
    fn exact_tpa_is_a_semigroup_and_conserves_the_difference() {
        let rho = prepare_state(&ProbeConfig::double_seeded(0.8, 0.5, 0.4, 1.0, 0.3, 2.0, 1.0), &FockConfig::new(22)).unwrap();
        let once = apply_tpa(&rho, 2e-2, TpaMode::Exact).unwrap();
        let twice = apply_tpa(&apply_tpa(&rho, 1e-2, TpaMode::Exact).unwrap(), 1e-2, TpaMode::Exact).unwrap();
        assert!(max_moment_gap(&once, &twice) < 1e-10);
        let diff = |r: &DensityOperator| r.moment(1, 0) - r.moment(0, 1);
        assert!((diff(&once) - diff(&rho)).abs() < 1e-12);
        assert!(once.moment(1, 0) < rho.moment(1, 0));
    }

    #[test]
    fn first_order_error_is_quadratic() {
        let rho = prepare_state(&ProbeConfig::classical(1.0, 1.0, 0.0, 0.0, 1.0), &FockConfig::new(16)).unwrap();
        let gaps = |eps| {
            let a = apply_tpa(&rho, eps, TpaMode::FirstOrder).unwrap();
            let b = apply_tpa(&rho, eps, TpaMode::Exact).unwrap();
            MOMENT_INDICES.map(|(p, q)| (a.moment(p as u32, q as u32) - b.moment(p as u32, q as u32)).abs())
        };
        let (g3, g4) = (gaps(1e-3), gaps(1e-4));
        for k in 1..15 {
            let (p, q) = MOMENT_INDICES[k];
            // ε²/2 times the curvature, about 1.2e-6 for ⟨n₁²n₂²⟩
            if p + q <= 2 {
                assert!(g4[k] <= 1e-7, "({p},{q}) {}", g4[k]);
            }
            let ratio = g3[k] / g4[k];
            assert!((ratio - 100.0).abs() < 2.0, "({p},{q}) ratio {ratio}");
        }
    }

    #[test]
    fn loss_examples() {
        let rho = prepare_state(&ProbeConfig::classical(1.2, 0.0, 0.4, 0.0, 1.0), &FockConfig::new(18)).unwrap();
        assert_eq!(apply_loss(&rho, 1.0).unwrap(), rho);
        let dark = apply_loss(&rho, 0.0).unwrap();
        assert!((dark.matrix[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!((dark.trace() - 1.0).abs() < 1e-12);
        let lossy = apply_loss(&rho, 0.6).unwrap();
        assert!((lossy.moment(1, 0) - 0.6 * 1.44).abs() < 1e-8);
    }

    #[test]
    fn every_stage_is_a_legal_state() {
        let cfg = ProbeConfig::double_seeded(0.7, 0.4, 0.2, 1.3, 0.25, 0.9, 0.7);
        let fock = FockConfig { tail_tol: 1e-6, ..FockConfig::new(12) };
        let mut rho = DensityOperator::vacuum(12, 1e-6);
        rho = apply_displacement(&rho, cfg.alpha1, cfg.phi1, 1).unwrap();
        assert!(rho.is_legal(1e-10));
        rho = apply_displacement(&rho, cfg.alpha2, cfg.phi2, 2).unwrap();
        rho = apply_two_mode_squeeze(&rho, cfg.r, cfg.theta).unwrap();
        assert!(rho.is_legal(1e-10));
        let pure = prepare_state(&cfg, &fock).unwrap();
        assert!(max_moment_gap(&rho, &pure) < 1e-12);
        rho = apply_tpa(&rho, 0.05, TpaMode::Exact).unwrap();
        assert!(rho.is_legal(1e-10));
        rho = apply_loss(&rho, cfg.eta).unwrap();
        assert!(rho.is_legal(1e-10));
    }

    #[test]
    fn squeezed_vacuum_matches_engine() {
        let cfg = ProbeConfig::squeezed_vacuum(0.3, 0.0, 1.0);
        let oracle = oracle_moments(&cfg, &FockConfig::for_probe(&cfg)).unwrap();
        let engine = compute_moments(&cfg).unwrap();
        let (a, b) = (oracle.get(1, 1), engine.get(1, 1));
        assert!((a.value0.re - b.value0.re).abs() <= 1e-8 * b.value0.re.abs());
        assert!((a.dvalue.re - b.dvalue.re).abs() <= 1e-8 * b.dvalue.re.abs());
    }

    #[test]
    fn total_loss_leaves_only_the_norm() {
        let cfg = ProbeConfig::double_seeded(0.9, 0.6, 0.1, 0.2, 0.3, 0.4, 0.0);
        let (m, _) = oracle_moments_adaptive(&cfg).unwrap();
        for ((p, q), e) in m.iter() {
            let expect = if (p, q) == (0, 0) { 1.0 } else { 0.0 };
            assert!((e.value0.re - expect).abs() < 1e-12 && e.dvalue.re.abs() < 1e-8, "({p},{q}) {e}");
        }
    }

    #[test]
    fn steps_scale_with_pair_rate() {
        assert_eq!(FockConfig::new(5).eps_values, vec![1e-4, 5e-5]);
        let dim = FockConfig::for_probe(&ProbeConfig::squeezed_vacuum(0.3, 0.0, 1.0));
        assert_eq!(dim.n_max, 13);
        let bright = FockConfig::for_probe(&ProbeConfig::classical(2.0, 2.0, 0.0, 0.0, 1.0));
        assert!((bright.eps_values[0] - 1e-4 / 25.0).abs() < 1e-18);
        assert!((bright.eps_values[1] - 5e-5 / 25.0).abs() < 1e-18);
        assert!(oracle_moments(&ProbeConfig::classical(1.0, 1.0, 0.0, 0.0, 1.0), &FockConfig { eps_values: vec![1e-4], ..FockConfig::new(12) }).is_err());
    }
}
