//! Estimation error `Δε² = Var(Ô) / (∂⟨Ô⟩/∂ε)²` for the three correlation
//! observables, by first-order error propagation through moment functions:
//! the observable is a function `f(x₁,…,xₙ)` of raw moments, its
//! sensitivity is `∇f · ∂x/∂ε` and its variance is `∇f M ∇fᵀ` with `M` the
//! central co-moment matrix of the underlying operators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::channel::{ProbeConfig, MAX_MOMENT_ORDER};
use crate::error::{Error, Result};
use crate::moments::{compute_moments, DifferenceStats, MomentTable};

/// Cancellation depth below which a chain-rule sensitivity counts as zero.
pub const INSENSITIVE_REL_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Observable {
    /// Noise reduction factor `Var(n₁−n₂)/(⟨n₁⟩+⟨n₂⟩)`.
    #[serde(rename = "NRF")]
    Nrf,
    /// Intensity cross-correlation `G(1,1) = ⟨n₁n₂⟩`.
    #[serde(rename = "G11")]
    BigG11,
    /// Normalized cross-correlation `g(1,1) = ⟨n₁n₂⟩/(⟨n₁⟩⟨n₂⟩)`.
    #[serde(rename = "g11")]
    SmallG11,
}

impl Observable {
    pub const ALL: [Observable; 3] = [Observable::Nrf, Observable::BigG11, Observable::SmallG11];

    pub fn name(self) -> &'static str {
        match self {
            Observable::Nrf => "NRF",
            Observable::BigG11 => "G11",
            Observable::SmallG11 => "g11",
        }
    }
}

impl std::fmt::Display for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Observable {
    type Err = String;
    /// `G11` and `g11` are distinct; other spellings are case-insensitive.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "G11" | "G(1,1)" | "big-g11" => Ok(Observable::BigG11),
            "g11" | "g(1,1)" | "small-g11" => Ok(Observable::SmallG11),
            _ if s.eq_ignore_ascii_case("nrf") => Ok(Observable::Nrf),
            other => Err(format!("unknown observable '{other}' (expected NRF, G11 or g11)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub observable: Observable,
    pub value0: f64,
    pub dvalue: f64,
    pub variance: f64,
    pub delta_eps_sq: f64,
    /// Set when the sensitivity vanishes; `delta_eps_sq` is then `+∞`.
    pub insensitive: bool,
}

impl ErrorBudget {
    fn assemble(observable: Observable, value0: f64, dvalue: f64, variance: f64, scale: f64) -> Self {
        let insensitive = dvalue == 0.0 || dvalue.abs() <= INSENSITIVE_REL_TOL * scale;
        let delta_eps_sq = if insensitive { f64::INFINITY } else { variance / (dvalue * dvalue) };
        ErrorBudget { observable, value0, dvalue, variance, delta_eps_sq, insensitive }
    }
}

/// Central co-moments `⟨Δxᵢ Δxⱼ⟩` of photon-number monomials `xᵢ = n₁^aᵢ n₂^bᵢ`
/// at ε = 0. The monomials commute, so `⟨xᵢxⱼ⟩` is the raw moment of the
/// summed exponents.
#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    pub labels: Vec<(usize, usize)>,
    pub entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn from_moments(m: &MomentTable, labels: &[(usize, usize)]) -> Result<Self> {
        let n = labels.len();
        for &(a, b) in labels {
            for &(c, d) in labels {
                if a + b + c + d > MAX_MOMENT_ORDER {
                    return Err(Error::MomentOrder(a + b + c + d));
                }
            }
        }
        let entries = DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = labels[i];
            let (c, d) = labels[j];
            m.value(a + c, b + d) - m.value(a, b) * m.value(c, d)
        });
        Ok(CovarianceMatrix { labels: labels.to_vec(), entries })
    }

    pub fn quadratic_form(&self, a: &[f64]) -> f64 {
        let v = DVector::from_column_slice(a);
        (v.transpose() * &self.entries * &v)[(0, 0)]
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries == self.entries.transpose()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(self.entries.clone()).eigenvalues.iter().copied().collect()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// PSD up to `slack · trace`.
    pub fn is_psd(&self, slack: f64) -> bool {
        let floor = -slack * self.trace().abs().max(f64::MIN_POSITIVE);
        self.eigenvalues().into_iter().all(|e| e >= floor)
    }
}

const NRF_LABELS: [(usize, usize); 5] = [(2, 0), (0, 2), (1, 1), (1, 0), (0, 1)];
const G11_LABELS: [(usize, usize); 3] = [(1, 1), (1, 0), (0, 1)];

fn chain(gradient: &[f64], labels: &[(usize, usize)], m: &MomentTable) -> (f64, f64) {
    let terms: Vec<f64> = gradient.iter().zip(labels).map(|(g, &(p, q))| g * m.deriv(p, q)).collect();
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
}

/// Noise reduction factor, through the five moments
/// `(⟨n₁²⟩, ⟨n₂²⟩, ⟨n₁n₂⟩, ⟨n₁⟩, ⟨n₂⟩)` and their 5×5 co-moment matrix.
///
/// Tables carrying [`DifferenceStats`] use the equivalent difference/sum
/// form, which stays accurate for bright twin beams.
pub fn nrf_budget(m: &MomentTable) -> Result<ErrorBudget> {
    match m.difference() {
        Some(stats) => nrf_from_difference(stats),
        None => nrf_from_raw(m),
    }
}

/// `N = Var(D)/⟨T⟩`. The linearized estimator is
/// `F = D²/⟨T⟩ − 2⟨D⟩D/⟨T⟩ − N T/⟨T⟩`, whose variance is expanded in
/// central moments of `(D², D, T)`.
fn nrf_from_difference(s: &DifferenceStats) -> Result<ErrorBudget> {
    let total = s.mean_t.value0.re;
    if total <= 0.0 {
        return Err(Error::ZeroDenominator { observable: "NRF" });
    }
    let (d1, d2) = (s.mean_d.value0.re, s.mean_d2.value0.re);
    let value0 = (d2 - d1 * d1) / total;
    let (a, b, c) = (1.0 / total, -2.0 * d1 / total, -value0 / total);
    let terms = [a * s.mean_d2.dvalue.re, b * s.mean_d.dvalue.re, c * s.mean_t.dvalue.re];
    let dvalue: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    let t1 = total;
    let var_d2 = s.mean_d4 - d2 * d2;
    let var_d = d2 - d1 * d1;
    let var_t = s.mean_t2 - t1 * t1;
    let cov_d2_d = s.mean_d3 - d2 * d1;
    let cov_d2_t = s.mean_d2t - d2 * t1;
    let cov_d_t = s.mean_dt - d1 * t1;
    let variance = a * a * var_d2
        + b * b * var_d
        + c * c * var_t
        + 2.0 * (a * b * cov_d2_d + a * c * cov_d2_t + b * c * cov_d_t);
    Ok(ErrorBudget::assemble(Observable::Nrf, value0, dvalue, variance, scale))
}

fn nrf_from_raw(m: &MomentTable) -> Result<ErrorBudget> {
    let x: Vec<f64> = NRF_LABELS.iter().map(|&(p, q)| m.value(p, q)).collect();
    let total = x[3] + x[4];
    if total <= 0.0 {
        return Err(Error::ZeroDenominator { observable: "NRF" });
    }
    let imbalance = x[3] - x[4];
    let numerator = x[0] + x[1] - 2.0 * x[2] - imbalance * imbalance;
    let value0 = numerator / total;
    let gradient = [
        1.0 / total,
        1.0 / total,
        -2.0 / total,
        -2.0 * imbalance / total - numerator / (total * total),
        2.0 * imbalance / total - numerator / (total * total),
    ];
    let (dvalue, scale) = chain(&gradient, &NRF_LABELS, m);
    let cov = CovarianceMatrix::from_moments(m, &NRF_LABELS)?;
    let variance = cov.quadratic_form(&gradient);
    Ok(ErrorBudget::assemble(Observable::Nrf, value0, dvalue, variance, scale))
}

/// Intensity cross-correlation: `Var(G) = ⟨n₁²n₂²⟩ − ⟨n₁n₂⟩²`.
pub fn g11_budget(m: &MomentTable) -> Result<ErrorBudget> {
    let value0 = m.value(1, 1);
    let dvalue = m.deriv(1, 1);
    let variance = m.value(2, 2) - value0 * value0;
    Ok(ErrorBudget::assemble(Observable::BigG11, value0, dvalue, variance, dvalue.abs()))
}

/// Normalized cross-correlation, through `(⟨n₁n₂⟩, ⟨n₁⟩, ⟨n₂⟩)` and their 3×3
/// co-moment matrix.
pub fn small_g11_budget(m: &MomentTable) -> Result<ErrorBudget> {
    let (x12, x1, x2) = (m.value(1, 1), m.value(1, 0), m.value(0, 1));
    if x1 <= 0.0 || x2 <= 0.0 {
        return Err(Error::ZeroDenominator { observable: "g11" });
    }
    let value0 = x12 / (x1 * x2);
    let gradient = [1.0 / (x1 * x2), -x12 / (x1 * x1 * x2), -x12 / (x1 * x2 * x2)];
    let (dvalue, scale) = chain(&gradient, &G11_LABELS, m);
    let cov = CovarianceMatrix::from_moments(m, &G11_LABELS)?;
    let variance = cov.quadratic_form(&gradient);
    Ok(ErrorBudget::assemble(Observable::SmallG11, value0, dvalue, variance, scale))
}

pub fn budget(m: &MomentTable, obs: Observable) -> Result<ErrorBudget> {
    match obs {
        Observable::Nrf => nrf_budget(m),
        Observable::BigG11 => g11_budget(m),
        Observable::SmallG11 => small_g11_budget(m),
    }
}

/// Co-moment matrix used for an observable (G11 has a single entry).
pub fn covariance_for(m: &MomentTable, obs: Observable) -> Result<CovarianceMatrix> {
    match obs {
        Observable::Nrf => CovarianceMatrix::from_moments(m, &NRF_LABELS),
        Observable::BigG11 => CovarianceMatrix::from_moments(m, &[(1, 1)]),
        Observable::SmallG11 => CovarianceMatrix::from_moments(m, &G11_LABELS),
    }
}

/// `Δε²(lossy) / Δε²(lossless)` for two probes that differ only in η.
pub fn normalized_error(cfg_lossy: &ProbeConfig, cfg_lossless: &ProbeConfig, obs: Observable) -> Result<f64> {
    if cfg_lossy.with_eta(cfg_lossless.eta) != *cfg_lossless {
        return Err(Error::InvalidConfig("normalized error needs probes that differ only in eta".into()));
    }
    let lossy = budget(&compute_moments(cfg_lossy)?, obs)?;
    let lossless = budget(&compute_moments(cfg_lossless)?, obs)?;
    if lossy.insensitive || lossless.insensitive {
        return Err(Error::InsensitiveObservable { observable: obs.name() });
    }
    Ok(lossy.delta_eps_sq / lossless.delta_eps_sq)
}

/// Estimation error of one observable for one probe.
pub fn delta_eps_sq(cfg: &ProbeConfig, obs: Observable) -> Result<ErrorBudget> {
    budget(&compute_moments(cfg)?, obs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(n_total: f64, eta: f64) -> ProbeConfig {
        ProbeConfig::squeezed_vacuum((n_total / 2.0).sqrt().asinh(), 0.0, eta)
    }

    #[test]
    fn observable_names_round_trip() {
        for o in Observable::ALL {
            assert_eq!(o.name().parse::<Observable>().unwrap(), o);
        }
        assert_eq!("nrf".parse::<Observable>().unwrap(), Observable::Nrf);
        assert!("G12".parse::<Observable>().is_err());
    }

    #[test]
    fn squeezed_vacuum_g11_spot_value() {
        // n_T = 2, η = 1: 132/1058
        let b = delta_eps_sq(&sv(2.0, 1.0), Observable::BigG11).unwrap();
        assert!((b.delta_eps_sq - 132.0 / 1058.0).abs() < 1e-12);
    }

    #[test]
    fn squeezed_vacuum_small_g11_spot_value() {
        let b = delta_eps_sq(&sv(2.0, 1.0), Observable::SmallG11).unwrap();
        assert!((b.delta_eps_sq - 0.72).abs() < 1e-12);
        assert!(b.value0 >= 1.0);
    }

    #[test]
    fn squeezed_vacuum_nrf_is_insensitive() {
        let b = delta_eps_sq(&ProbeConfig::squeezed_vacuum(0.9, 0.4, 0.7), Observable::Nrf).unwrap();
        assert!((b.value0 - 0.3).abs() < 1e-12);
        assert!(b.insensitive);
        assert!(b.delta_eps_sq.is_infinite());
    }

    #[test]
    fn coherent_pair_is_shot_noise_limited() {
        let b = delta_eps_sq(&ProbeConfig::classical(1.3, 1.3, 0.2, 2.0, 1.0), Observable::Nrf).unwrap();
        assert!((b.value0 - 1.0).abs() < 1e-12);
        let g = delta_eps_sq(&ProbeConfig::classical(1.3, 0.4, 0.2, 2.0, 1.0), Observable::SmallG11).unwrap();
        assert!((g.value0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vacuum_probe_has_zero_denominators() {
        let cfg = ProbeConfig::squeezed_vacuum(0.0, 0.0, 1.0);
        assert!(matches!(delta_eps_sq(&cfg, Observable::Nrf), Err(Error::ZeroDenominator { .. })));
        assert!(matches!(delta_eps_sq(&cfg, Observable::SmallG11), Err(Error::ZeroDenominator { .. })));
        let single_mode = ProbeConfig::classical(1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(delta_eps_sq(&single_mode, Observable::SmallG11), Err(Error::ZeroDenominator { .. })));
        let g = delta_eps_sq(&single_mode, Observable::BigG11).unwrap();
        assert!(g.insensitive);
    }

    #[test]
    fn error_propagation_identity() {
        let cfg = ProbeConfig::double_seeded(1.2, 0.7, 0.1, 0.5, 0.4, 2.5, 0.8);
        for obs in Observable::ALL {
            let b = delta_eps_sq(&cfg, obs).unwrap();
            assert!(!b.insensitive);
            assert!(b.variance >= 0.0);
            let rebuilt = b.delta_eps_sq * b.dvalue * b.dvalue;
            assert!((rebuilt - b.variance).abs() <= 1e-12 * b.variance);
        }
    }

    #[test]
    fn difference_form_agrees_with_raw_form() {
        for cfg in [
            ProbeConfig::single_seeded(1.5, 0.0, 0.6, 0.0, 0.6),
            ProbeConfig::double_seeded(1.2, 0.7, 0.1, 0.5, 0.4, 2.5, 0.8),
            ProbeConfig::classical(1.0, 2.0, 0.3, 0.1, 1.0),
        ] {
            let m = compute_moments(&cfg).unwrap();
            let raw = nrf_from_raw(&m).unwrap();
            let fine = nrf_budget(&m).unwrap();
            for (x, y) in [(raw.value0, fine.value0), (raw.dvalue, fine.dvalue), (raw.variance, fine.variance)] {
                assert!((x - y).abs() <= 1e-9 * y.abs().max(1e-12), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn bright_twin_beam_nrf_is_stable() {
        // balanced single seeding at n_T = 10⁵: smooth, positive, ≈ 3.6/n_T²
        let nt: f64 = 1e5;
        let r0 = (nt / 4.0).sqrt().asinh();
        let mut prev = None;
        for k in -2..=2 {
            let r = r0 + 0.01 * k as f64;
            let a2 = (nt - 2.0 * r.sinh().powi(2)) / (2.0 * r).cosh();
            let b = delta_eps_sq(&ProbeConfig::single_seeded(a2.sqrt(), 0.0, r, 0.0, 1.0), Observable::Nrf).unwrap();
            let scaled = b.delta_eps_sq * nt * nt;
            assert!(scaled > 3.0 && scaled < 4.5, "{scaled}");
            if let Some(p) = prev {
                assert!((scaled - p as f64).abs() < 0.05);
            }
            prev = Some(scaled);
        }
    }

    #[test]
    fn covariance_matrices_are_psd() {
        let cfg = ProbeConfig::single_seeded(1.5, 0.0, 0.6, 0.0, 0.6);
        let m = compute_moments(&cfg).unwrap();
        for obs in Observable::ALL {
            let c = covariance_for(&m, obs).unwrap();
            assert!(c.is_symmetric());
            assert!(c.is_psd(1e-9), "{obs}: {:?}", c.eigenvalues());
        }
    }

    #[test]
    fn normalized_error_requires_matching_probes() {
        let a = sv(3.0, 0.5);
        assert!((normalized_error(&a.with_eta(1.0), &a.with_eta(1.0), Observable::BigG11).unwrap() - 1.0).abs() < 1e-15);
        let mut b = a.with_eta(1.0);
        b.r += 0.1;
        assert!(normalized_error(&a, &b, Observable::BigG11).is_err());
        assert!(matches!(
            normalized_error(&a, &a.with_eta(1.0), Observable::Nrf),
            Err(Error::InsensitiveObservable { .. })
        ));
    }
}
