use std::collections::{BTreeMap, HashMap};

use super::jet::EpsJet;
use super::poly::{binom, factorial, Mode, Monomial, OperatorPoly, Substitution};

type Powers = [u8; 4];

/// A state `P(a†)|0000⟩`, stored as creation-power → amplitude. Ordered so
/// that sums accumulate in the same order in every process.
#[derive(Clone, Debug, Default)]
pub(crate) struct Ket {
    amps: BTreeMap<Powers, EpsJet>,
}

impl Ket {
    pub(crate) fn vacuum() -> Self {
        let mut amps = BTreeMap::new();
        amps.insert([0; 4], EpsJet::ONE);
        Ket { amps }
    }

    /// `op · self`, keeping only the part that survives on the vacuum.
    ///
    /// For one mode `a†^j a^k a†^c |0⟩ = c!/(c−k)! a†^(j+c−k) |0⟩` when `c ≥ k`
    /// and zero otherwise.
    pub(crate) fn apply(&self, op: &[(Monomial, EpsJet)]) -> Ket {
        let mut out: BTreeMap<Powers, EpsJet> = BTreeMap::new();
        for (mono, c) in op {
            let p = mono.powers();
            'amp: for (state, amp) in &self.amps {
                let mut w = 1.0;
                let mut next = [0u8; 4];
                for m in 0..4 {
                    let (j, k) = p[m];
                    let n = state[m];
                    if k > n {
                        continue 'amp;
                    }
                    if k > 0 {
                        w *= binom(n as usize, k as usize) * factorial(k as usize);
                    }
                    next[m] = n - k + j;
                }
                *out.entry(next).or_insert(EpsJet::ZERO) += *c * *amp * w;
            }
        }
        out.retain(|_, a| !a.is_zero());
        Ket { amps: out }
    }

    pub(crate) fn apply_poly(&self, op: &OperatorPoly) -> Ket {
        self.apply(&op.monomials())
    }

    /// `⟨self|other⟩` with `⟨n|n⟩ = ∏ nₘ!` in the unnormalized monomial basis.
    pub(crate) fn inner(&self, other: &Ket) -> EpsJet {
        let (small, large, flip) =
            if self.amps.len() <= other.amps.len() { (self, other, false) } else { (other, self, true) };
        let mut acc = EpsJet::ZERO;
        for (state, a) in &small.amps {
            if let Some(b) = large.amps.get(state) {
                let norm: f64 = state.iter().map(|&n| factorial(n as usize)).product();
                let term = if flip { b.conj() * *a } else { a.conj() * *b };
                acc += term * norm;
            }
        }
        acc
    }
}

/// Evaluates `⟨0000| S(P) |0000⟩` for a canonical polynomial `P` under a mode
/// substitution `S` without expanding `S(P)`.
///
/// Each normal-ordered monomial `∏ Aₘ†^jₘ Aₘ^kₘ` of the image is an inner
/// product `⟨ψ_j|ψ_k⟩` with `|ψ_k⟩ = ∏ Aₘ^kₘ |0⟩`. Kets and their inner
/// products are memoized, so repeated evaluation of many polynomials under
/// the same substitution (all moments of one probe) shares the work. Modes
/// without an image map to themselves.
///
/// The images must describe a canonical transformation: distinct-mode
/// images commute with each other and with each other's adjoints.
pub struct VacuumEvaluator {
    images: [Vec<(Monomial, EpsJet)>; 4],
    kets: HashMap<Powers, Ket>,
    gram: HashMap<(Powers, Powers), EpsJet>,
}

impl VacuumEvaluator {
    pub fn new(sub: &Substitution) -> Self {
        let images = Mode::ALL.map(|mode| match sub.image(mode) {
            Some(img) => img.monomials(),
            None => vec![(Monomial::single(super::poly::ModeOp::annihilate(mode)), EpsJet::ONE)],
        });
        let mut kets = HashMap::new();
        kets.insert([0; 4], Ket::vacuum());
        VacuumEvaluator { images, kets, gram: HashMap::new() }
    }

    fn ket(&mut self, powers: Powers) -> &Ket {
        if !self.kets.contains_key(&powers) {
            let m = (0..4).rev().find(|&m| powers[m] > 0).expect("vacuum ket is always cached");
            let mut prev = powers;
            prev[m] -= 1;
            self.ket(prev);
            let next = self.kets[&prev].apply(&self.images[m]);
            self.kets.insert(powers, next);
        }
        &self.kets[&powers]
    }

    fn overlap(&mut self, bra: Powers, ket: Powers) -> EpsJet {
        if let Some(v) = self.gram.get(&(bra, ket)) {
            return *v;
        }
        self.ket(bra);
        self.ket(ket);
        let v = self.kets[&bra].inner(&self.kets[&ket]);
        self.gram.insert((bra, ket), v);
        self.gram.insert((ket, bra), v.conj());
        v
    }

    /// `⟨0000| S(P) |0000⟩`.
    pub fn expectation(&mut self, poly: &OperatorPoly) -> EpsJet {
        let mut acc = EpsJet::ZERO;
        for (mono, c) in poly.monomials() {
            let p = mono.powers();
            let bra = [p[0].0, p[1].0, p[2].0, p[3].0];
            let ket = [p[0].1, p[1].1, p[2].1, p[3].1];
            acc += c * self.overlap(bra, ket);
        }
        acc
    }
}
