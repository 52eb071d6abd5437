//! Dense two-mode states on a truncated Fock space and the channels acting
//! on them. Basis index of `|m₁, m₂⟩` is `m₁ (n_max + 1) + m₂`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// How the absorption channel `e^{εL}` is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TpaMode {
    /// `ρ + ε L ρ`.
    FirstOrder,
    /// Taylor-series propagation in substeps of norm at most 1/4.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    pub matrix: DMatrix<Complex64>,
    pub n_max: usize,
    /// Largest population tolerated on the two highest levels of a mode.
    pub tail_tol: f64,
}

fn dim(n_max: usize) -> usize {
    (n_max + 1) * (n_max + 1)
}

fn check_mode(mode: usize) -> Result<()> {
    if mode == 1 || mode == 2 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("mode {mode} is not 1 or 2")))
    }
}

impl DensityOperator {
    pub fn vacuum(n_max: usize, tail_tol: f64) -> Self {
        Self::fock(n_max, 0, 0, tail_tol)
    }

    pub fn fock(n_max: usize, m1: usize, m2: usize, tail_tol: f64) -> Self {
        assert!(m1 <= n_max && m2 <= n_max, "Fock level above cutoff");
        let mut matrix = DMatrix::zeros(dim(n_max), dim(n_max));
        let i = m1 * (n_max + 1) + m2;
        matrix[(i, i)] = Complex64::new(1.0, 0.0);
        DensityOperator { matrix, n_max, tail_tol }
    }

    pub fn from_pure(psi: &DVector<Complex64>, n_max: usize, tail_tol: f64) -> Self {
        assert_eq!(psi.len(), dim(n_max));
        DensityOperator { matrix: psi * psi.adjoint(), n_max, tail_tol }
    }

    fn with_matrix(&self, matrix: DMatrix<Complex64>) -> Self {
        DensityOperator { matrix, n_max: self.n_max, tail_tol: self.tail_tol }
    }

    pub fn dim(&self) -> usize {
        dim(self.n_max)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// Largest entry of `ρ − ρ†`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part. Dense `O(d³)`.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Trace, hermiticity and positivity within `slack`.
    pub fn is_legal(&self, slack: f64) -> bool {
        (self.trace() - 1.0).abs() <= slack && self.hermiticity_error() <= slack && self.min_eigenvalue() >= -slack
    }

    /// Joint photon-number distribution `P(m₁, m₂)`, row index `m₁`.
    pub fn populations(&self) -> DMatrix<f64> {
        let n = self.n_max + 1;
        DMatrix::from_fn(n, n, |m1, m2| self.matrix[(m1 * n + m2, m1 * n + m2)].re)
    }

    /// `⟨n₁ᵖ n₂^q⟩`.
    pub fn moment(&self, p: u32, q: u32) -> f64 {
        moment_of(&self.populations(), p, q)
    }

    /// Population on the two highest levels of `mode`.
    pub fn tail_population(&self, mode: usize) -> f64 {
        tail_of(&self.populations(), mode)
    }

    /// `|⟨ψ|ρ|ψ⟩|` for a pure reference state.
    pub fn fidelity_with(&self, psi: &DVector<Complex64>) -> f64 {
        (psi.adjoint() * &self.matrix * psi)[(0, 0)].re
    }

    pub(crate) fn check_tail(&self) -> Result<()> {
        check_tail(&self.populations(), self.n_max, self.tail_tol)
    }

    /// `U ρ U†` with `U = exp(G)`, column by column.
    fn conjugate(&self, g: &Generator) -> DensityOperator {
        let n = self.dim();
        let mut x = self.matrix.clone();
        for j in 0..n {
            let col = g.exp_action(&x.column(j).into_owned());
            x.set_column(j, &col);
        }
        let mut y = x.adjoint();
        for j in 0..n {
            let col = g.exp_action(&y.column(j).into_owned());
            y.set_column(j, &col);
        }
        self.with_matrix(y.adjoint())
    }
}

pub(crate) fn moment_of(pop: &DMatrix<f64>, p: u32, q: u32) -> f64 {
    let mut acc = 0.0;
    for m1 in 0..pop.nrows() {
        let w1 = (m1 as f64).powi(p as i32);
        for m2 in 0..pop.ncols() {
            acc += pop[(m1, m2)] * w1 * (m2 as f64).powi(q as i32);
        }
    }
    acc
}

fn tail_of(pop: &DMatrix<f64>, mode: usize) -> f64 {
    let n = pop.nrows();
    let top = n.saturating_sub(2);
    if mode == 1 {
        (top..n).map(|m| pop.row(m).sum()).sum()
    } else {
        (top..n).map(|m| pop.column(m).sum()).sum()
    }
}

fn check_tail(pop: &DMatrix<f64>, n_max: usize, tol: f64) -> Result<()> {
    let tail = tail_of(pop, 1).max(tail_of(pop, 2));
    if tail > tol {
        return Err(Error::TruncationUnsafe { tail, level: n_max.saturating_sub(1), tol });
    }
    Ok(())
}

/// Anti-Hermitian generators of the probe unitaries, applied matrix-free.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Generator {
    /// `α â† − α* â` on one mode.
    Displace { n_max: usize, mode: usize, alpha: Complex64 },
    /// `ζ â₁†â₂† − ζ* â₁â₂`.
    Squeeze { n_max: usize, zeta: Complex64 },
}

impl Generator {
    fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::zeros(v.len());
        match *self {
            Generator::Displace { n_max, mode, alpha } => {
                let n = n_max + 1;
                for m1 in 0..n {
                    for m2 in 0..n {
                        let amp = v[m1 * n + m2];
                        if amp == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        let m = if mode == 1 { m1 } else { m2 };
                        let up = |k: usize| if mode == 1 { k * n + m2 } else { m1 * n + k };
                        if m < n_max {
                            out[up(m + 1)] += alpha * ((m + 1) as f64).sqrt() * amp;
                        }
                        if m > 0 {
                            out[up(m - 1)] -= alpha.conj() * (m as f64).sqrt() * amp;
                        }
                    }
                }
            }
            Generator::Squeeze { n_max, zeta } => {
                let n = n_max + 1;
                for m1 in 0..n {
                    for m2 in 0..n {
                        let amp = v[m1 * n + m2];
                        if amp == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        if m1 < n_max && m2 < n_max {
                            let c = (((m1 + 1) * (m2 + 1)) as f64).sqrt();
                            out[(m1 + 1) * n + m2 + 1] += zeta * c * amp;
                        }
                        if m1 > 0 && m2 > 0 {
                            let c = ((m1 * m2) as f64).sqrt();
                            out[(m1 - 1) * n + m2 - 1] -= zeta.conj() * c * amp;
                        }
                    }
                }
            }
        }
        out
    }

    /// Upper bound on the operator norm.
    fn norm_bound(&self) -> f64 {
        match *self {
            Generator::Displace { n_max, alpha, .. } => 2.0 * alpha.norm() * (n_max as f64).sqrt(),
            Generator::Squeeze { n_max, zeta } => 2.0 * zeta.norm() * n_max as f64,
        }
    }

    /// `exp(G) v` by Taylor series in substeps of norm ≤ 1/4.
    pub(crate) fn exp_action(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let steps = (4.0 * self.norm_bound()).ceil().max(1.0) as usize;
        let h = 1.0 / steps as f64;
        let mut x = v.clone();
        for _ in 0..steps {
            x = taylor(|y| self.apply(y) * Complex64::new(h, 0.0), &x);
        }
        x
    }
}

/// `Σ_k A^k x / k!` until terms stop contributing.
fn taylor<T>(apply: impl Fn(&T) -> T, x: &T) -> T
where
    T: Clone + std::ops::AddAssign<T> + NormLike,
{
    let mut sum = x.clone();
    let mut term = x.clone();
    let scale = x.norm_like().max(f64::MIN_POSITIVE);
    for k in 1..60 {
        term = apply(&term).scaled(1.0 / k as f64);
        let t = term.norm_like();
        sum += term.clone();
        if t <= 1e-18 * scale {
            break;
        }
    }
    sum
}

trait NormLike {
    fn norm_like(&self) -> f64;
    fn scaled(self, s: f64) -> Self;
}

impl NormLike for DVector<Complex64> {
    fn norm_like(&self) -> f64 {
        self.norm()
    }
    fn scaled(self, s: f64) -> Self {
        self * Complex64::new(s, 0.0)
    }
}

impl NormLike for DMatrix<Complex64> {
    fn norm_like(&self) -> f64 {
        self.norm()
    }
    fn scaled(self, s: f64) -> Self {
        self * Complex64::new(s, 0.0)
    }
}

pub(crate) fn vacuum_vector(n_max: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(dim(n_max));
    v[0] = Complex64::new(1.0, 0.0);
    v
}

pub(crate) fn displacement(n_max: usize, alpha: f64, phi: f64, mode: usize) -> Generator {
    Generator::Displace { n_max, mode, alpha: Complex64::from_polar(alpha, phi) }
}

pub(crate) fn squeezer(n_max: usize, r: f64, theta: f64) -> Generator {
    Generator::Squeeze { n_max, zeta: Complex64::from_polar(r, theta) }
}

/// `ρ → D ρ D†` with `D = exp(α e^{iφ} â† − h.c.)` on `mode` (1 or 2).
pub fn apply_displacement(rho: &DensityOperator, alpha: f64, phi: f64, mode: usize) -> Result<DensityOperator> {
    check_mode(mode)?;
    if alpha == 0.0 {
        return Ok(rho.clone());
    }
    let out = rho.conjugate(&displacement(rho.n_max, alpha, phi, mode));
    out.check_tail()?;
    Ok(out)
}

/// `ρ → U ρ U†` with `U = exp(r e^{iθ} â₁†â₂† − h.c.)`.
pub fn apply_two_mode_squeeze(rho: &DensityOperator, r: f64, theta: f64) -> Result<DensityOperator> {
    if r == 0.0 {
        return Ok(rho.clone());
    }
    let out = rho.conjugate(&squeezer(rho.n_max, r, theta));
    out.check_tail()?;
    Ok(out)
}

/// `L ρ = J ρ J† − ½{J†J, ρ}` with `J = â₁â₂`.
fn tpa_generator(rho: &DMatrix<Complex64>, n_max: usize) -> DMatrix<Complex64> {
    let n = n_max + 1;
    let d = n * n;
    let pairs = |i: usize| ((i / n) * (i % n)) as f64;
    // J|m₁,m₂⟩ = √(m₁m₂)|m₁−1,m₂−1⟩, so (JρJ†)ᵢⱼ picks ρ at (m₁+1, m₂+1)
    let raised = |i: usize| {
        let (m1, m2) = (i / n, i % n);
        (m1 < n_max && m2 < n_max).then(|| ((m1 + 1) * n + m2 + 1, (((m1 + 1) * (m2 + 1)) as f64).sqrt()))
    };
    DMatrix::from_fn(d, d, |i, j| {
        let mut v = rho[(i, j)] * (-0.5 * (pairs(i) + pairs(j)));
        if let (Some((ii, ci)), Some((jj, cj))) = (raised(i), raised(j)) {
            v += rho[(ii, jj)] * (ci * cj);
        }
        v
    })
}

/// Absorption for absorbance `eps`, which may be negative here so central
/// differences can straddle zero.
pub(crate) fn tpa_signed(rho: &DensityOperator, eps: f64, mode: TpaMode) -> DensityOperator {
    if eps == 0.0 {
        return rho.clone();
    }
    let n_max = rho.n_max;
    match mode {
        TpaMode::FirstOrder => {
            let l = tpa_generator(&rho.matrix, n_max);
            rho.with_matrix(&rho.matrix + l * Complex64::new(eps, 0.0))
        }
        TpaMode::Exact => {
            // ‖L‖ ≤ 2 max(m₁m₂)
            let bound = 2.0 * (n_max * n_max) as f64 * eps.abs();
            let steps = (4.0 * bound).ceil().max(1.0) as usize;
            let h = eps / steps as f64;
            let mut m = rho.matrix.clone();
            for _ in 0..steps {
                m = taylor(|y: &DMatrix<Complex64>| tpa_generator(y, n_max) * Complex64::new(h, 0.0), &m);
            }
            rho.with_matrix(m)
        }
    }
}

/// `(e^{hL} − e^{−hL}) ρ / 2h`. With a single Taylor substep the odd terms
/// are summed directly, so no cancellation between `ρ(±h)` occurs.
pub(crate) fn tpa_central_difference(rho: &DensityOperator, h: f64, mode: TpaMode) -> DensityOperator {
    let n_max = rho.n_max;
    let l = tpa_generator(&rho.matrix, n_max);
    let single_step = 8.0 * (n_max * n_max) as f64 * h <= 1.0;
    match mode {
        TpaMode::FirstOrder => rho.with_matrix(l),
        TpaMode::Exact if single_step => {
            // Σ_{k odd} h^{k−1} L^k ρ / k!
            let mut sum = l.clone();
            let mut term = l;
            let scale = sum.norm().max(f64::MIN_POSITIVE);
            for k in (3..60).step_by(2) {
                term = tpa_generator(&tpa_generator(&term, n_max), n_max) * Complex64::new(h * h / ((k - 1) * k) as f64, 0.0);
                sum += &term;
                if term.norm() <= 1e-18 * scale {
                    break;
                }
            }
            rho.with_matrix(sum)
        }
        TpaMode::Exact => {
            let plus = tpa_signed(rho, h, mode).matrix;
            let minus = tpa_signed(rho, -h, mode).matrix;
            rho.with_matrix((plus - minus) * Complex64::new(0.5 / h, 0.0))
        }
    }
}

/// `ρ → e^{εL} ρ` for `ε ≥ 0`.
pub fn apply_tpa(rho: &DensityOperator, eps: f64, mode: TpaMode) -> Result<DensityOperator> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidConfig(format!("absorbance {eps} must be finite and non-negative")));
    }
    Ok(tpa_signed(rho, eps, mode))
}

/// Binomial thinning weights `B[n][k] = C(n,k) ηⁿ⁻ᵏ (1−η)ᵏ`.
fn binomial_table(n_max: usize, eta: f64) -> Vec<Vec<f64>> {
    let mut b = vec![vec![0.0; n_max + 1]; n_max + 1];
    b[0][0] = 1.0;
    for n in 1..=n_max {
        for k in 0..=n {
            let keep = if k < n { eta * b[n - 1][k] } else { 0.0 };
            let lose = if k > 0 { (1.0 - eta) * b[n - 1][k - 1] } else { 0.0 };
            b[n][k] = keep + lose;
        }
    }
    b
}

/// Equal loss `η` on both modes through the Kraus operators
/// `E_k = Σₙ √(B[n][k]) |n−k⟩⟨n|`.
pub fn apply_loss(rho: &DensityOperator, eta: f64) -> Result<DensityOperator> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidConfig(format!("eta = {eta} outside [0, 1]")));
    }
    if eta == 1.0 {
        return Ok(rho.clone());
    }
    let n_max = rho.n_max;
    let n = n_max + 1;
    let b = binomial_table(n_max, eta);
    let w = |m: usize, k: usize| b[m + k][k].sqrt();
    let mut m = rho.matrix.clone();
    for mode in [1usize, 2] {
        let split = |i: usize| if mode == 1 { (i / n, i % n) } else { (i % n, i / n) };
        let join = |level: usize, other: usize| if mode == 1 { level * n + other } else { other * n + level };
        let src = m;
        m = DMatrix::from_fn(n * n, n * n, |i, j| {
            let (a, oa) = split(i);
            let (c, oc) = split(j);
            let mut v = Complex64::new(0.0, 0.0);
            for k in 0..n - a.max(c) {
                v += src[(join(a + k, oa), join(c + k, oc))] * (w(a, k) * w(c, k));
            }
            v
        });
    }
    Ok(rho.with_matrix(m))
}
