use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

use super::jet::EpsJet;

/// The four bosonic modes of the model: the two probe vacuum modes and the
/// two loss-bath modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    V1,
    V2,
    U1,
    U2,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::V1, Mode::V2, Mode::U1, Mode::U2];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Relabeling V1↔V2 and U1↔U2.
    pub fn exchanged(self) -> Mode {
        match self {
            Mode::V1 => Mode::V2,
            Mode::V2 => Mode::V1,
            Mode::U1 => Mode::U2,
            Mode::U2 => Mode::U1,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Mode::V1 => "v1",
            Mode::V2 => "v2",
            Mode::U1 => "u1",
            Mode::U2 => "u2",
        }
    }
}

/// A single creation (`dagger = true`) or annihilation operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModeOp {
    pub mode: Mode,
    pub dagger: bool,
}

impl ModeOp {
    pub fn annihilate(mode: Mode) -> Self {
        ModeOp { mode, dagger: false }
    }

    pub fn create(mode: Mode) -> Self {
        ModeOp { mode, dagger: true }
    }

    pub fn adjoint(self) -> Self {
        ModeOp { mode: self.mode, dagger: !self.dagger }
    }
}

impl fmt::Display for ModeOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dagger {
            write!(f, "{}†", self.mode.label())
        } else {
            write!(f, "{}", self.mode.label())
        }
    }
}

/// Normal-ordered monomial `∏ₘ aₘ†^jₘ aₘ^kₘ`, stored as per-mode
/// `(creation power, annihilation power)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial {
    powers: [(u8, u8); 4],
}

impl Monomial {
    pub fn identity() -> Self {
        Monomial::default()
    }

    pub fn from_powers(powers: [(u8, u8); 4]) -> Self {
        Monomial { powers }
    }

    pub fn single(op: ModeOp) -> Self {
        let mut m = Monomial::identity();
        let slot = &mut m.powers[op.mode.index()];
        if op.dagger {
            slot.0 = 1;
        } else {
            slot.1 = 1;
        }
        m
    }

    pub fn powers(&self) -> [(u8, u8); 4] {
        self.powers
    }

    pub fn power(&self, mode: Mode) -> (u8, u8) {
        self.powers[mode.index()]
    }

    pub fn is_identity(&self) -> bool {
        self.powers.iter().all(|&(j, k)| j == 0 && k == 0)
    }

    pub fn degree(&self) -> usize {
        self.powers.iter().map(|&(j, k)| j as usize + k as usize).sum()
    }

    /// `(∏ a†^j a^k)† = ∏ a†^k a^j`, again normal-ordered.
    pub fn adjoint(&self) -> Self {
        let mut out = *self;
        for p in out.powers.iter_mut() {
            *p = (p.1, p.0);
        }
        out
    }

    pub fn exchanged(&self) -> Self {
        let p = self.powers;
        Monomial { powers: [p[1], p[0], p[3], p[2]] }
    }

    /// Factor sequence in canonical order: modes V1..U2, creations first.
    pub fn factors(&self) -> Vec<ModeOp> {
        let mut out = Vec::with_capacity(self.degree());
        for mode in Mode::ALL {
            let (j, k) = self.power(mode);
            out.extend(std::iter::repeat_n(ModeOp::create(mode), j as usize));
            out.extend(std::iter::repeat_n(ModeOp::annihilate(mode), k as usize));
        }
        out
    }

    fn set_power(&mut self, mode: Mode, p: (u8, u8)) {
        self.powers[mode.index()] = p;
    }
}

const TABLE: usize = 64;

fn binomials() -> &'static Vec<[f64; TABLE]> {
    static CELL: OnceLock<Vec<[f64; TABLE]>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut rows = vec![[0.0; TABLE]; TABLE];
        for n in 0..TABLE {
            rows[n][0] = 1.0;
            for k in 1..=n {
                rows[n][k] = rows[n - 1][k - 1] + if k < n { rows[n - 1][k] } else { 0.0 };
            }
        }
        rows
    })
}

pub(crate) fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        0.0
    } else {
        binomials()[n][k]
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// `a^k a†^l = Σᵢ C(k,i) C(l,i) i! a†^(l−i) a^(k−i)`.
fn reorder_coeff(k: usize, l: usize, i: usize) -> f64 {
    binom(k, i) * binom(l, i) * factorial(i)
}

/// Product of two normal-ordered single-mode blocks, re-expanded in normal order.
fn mul_block(lhs: (u8, u8), rhs: (u8, u8)) -> impl Iterator<Item = ((u8, u8), f64)> {
    let (j, k) = (lhs.0 as usize, lhs.1 as usize);
    let (l, m) = (rhs.0 as usize, rhs.1 as usize);
    (0..=k.min(l)).map(move |i| (((j + l - i) as u8, (k + m - i) as u8), reorder_coeff(k, l, i)))
}

/// Normal-ordered expansion of the product of two normal-ordered monomials.
fn mul_monomials(a: &Monomial, b: &Monomial, mut sink: impl FnMut(Monomial, f64)) {
    let mut partial: Vec<(Monomial, f64)> = vec![(Monomial::identity(), 1.0)];
    for mode in Mode::ALL {
        let (pa, pb) = (a.power(mode), b.power(mode));
        if pa.1 == 0 || pb.0 == 0 {
            // no reordering inside this mode
            let p = (pa.0 + pb.0, pa.1 + pb.1);
            for (m, _) in partial.iter_mut() {
                m.set_power(mode, p);
            }
            continue;
        }
        let mut next = Vec::with_capacity(partial.len() * (pa.1.min(pb.0) as usize + 1));
        for (m, c) in &partial {
            for (p, w) in mul_block(pa, pb) {
                let mut m2 = *m;
                m2.set_power(mode, p);
                next.push((m2, c * w));
            }
        }
        partial = next;
    }
    for (m, c) in partial {
        sink(m, c);
    }
}

/// Normal-order a single-mode operator word given as a sequence of dagger flags.
fn normal_order_word(word: &[bool]) -> Vec<((u8, u8), f64)> {
    let mut acc: BTreeMap<(u8, u8), f64> = BTreeMap::new();
    acc.insert((0, 0), 1.0);
    for &dagger in word {
        let mut next = BTreeMap::new();
        for (&(j, k), &c) in &acc {
            if dagger {
                // a†^j a^k a† = a†^(j+1) a^k + k a†^j a^(k-1)
                *next.entry((j + 1, k)).or_insert(0.0) += c;
                if k > 0 {
                    *next.entry((j, k - 1)).or_insert(0.0) += c * k as f64;
                }
            } else {
                *next.entry((j, k + 1)).or_insert(0.0) += c;
            }
        }
        acc = next;
    }
    acc.into_iter().collect()
}

/// A coefficient times an ordered product of mode operators.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTerm {
    pub coeff: EpsJet,
    pub factors: Vec<ModeOp>,
}

impl OperatorTerm {
    pub fn new(coeff: EpsJet, factors: Vec<ModeOp>) -> Self {
        OperatorTerm { coeff, factors }
    }

    pub fn adjoint(&self) -> Self {
        OperatorTerm {
            coeff: self.coeff.conj(),
            factors: self.factors.iter().rev().map(|f| f.adjoint()).collect(),
        }
    }

    fn normal_ordered_into(&self, out: &mut BTreeMap<Monomial, EpsJet>) {
        let mut per_mode: Vec<Vec<((u8, u8), f64)>> = Vec::with_capacity(4);
        for mode in Mode::ALL {
            let word: Vec<bool> =
                self.factors.iter().filter(|f| f.mode == mode).map(|f| f.dagger).collect();
            per_mode.push(normal_order_word(&word));
        }
        let mut partial: Vec<(Monomial, f64)> = vec![(Monomial::identity(), 1.0)];
        for (mode, expansion) in Mode::ALL.iter().zip(&per_mode) {
            let mut next = Vec::with_capacity(partial.len() * expansion.len());
            for (m, c) in &partial {
                for &(p, w) in expansion {
                    let mut m2 = *m;
                    m2.set_power(*mode, p);
                    next.push((m2, c * w));
                }
            }
            partial = next;
        }
        for (m, w) in partial {
            accumulate(out, m, self.coeff * w);
        }
    }
}

fn accumulate(map: &mut BTreeMap<Monomial, EpsJet>, m: Monomial, c: EpsJet) {
    if c.is_zero() {
        return;
    }
    let slot = map.entry(m).or_insert(EpsJet::ZERO);
    *slot += c;
}

fn prune(mut map: BTreeMap<Monomial, EpsJet>) -> BTreeMap<Monomial, EpsJet> {
    map.retain(|_, c| !c.is_zero());
    map
}

#[derive(Clone, Debug)]
enum Repr {
    Normal(BTreeMap<Monomial, EpsJet>),
    Formal(Vec<OperatorTerm>),
}

/// Noncommutative polynomial in the four mode operators with ε-jet
/// coefficients.
///
/// A polynomial is either *canonical* (normal-ordered, like terms merged,
/// keyed by [`Monomial`]) or *formal* (an ordered list of factor strings that
/// has not been rewritten). Sums and scalar multiples of canonical
/// polynomials stay canonical; [`OperatorPoly::multiply`] produces formal
/// products and [`OperatorPoly::normal_order`] brings anything back to
/// canonical form.
#[derive(Clone, Debug)]
pub struct OperatorPoly {
    repr: Repr,
}

impl Default for OperatorPoly {
    fn default() -> Self {
        OperatorPoly::zero()
    }
}

impl OperatorPoly {
    pub fn zero() -> Self {
        OperatorPoly { repr: Repr::Normal(BTreeMap::new()) }
    }

    pub fn identity() -> Self {
        OperatorPoly::scalar(EpsJet::ONE)
    }

    pub fn scalar(c: impl Into<EpsJet>) -> Self {
        OperatorPoly::from_monomial(Monomial::identity(), c)
    }

    pub fn from_monomial(m: Monomial, c: impl Into<EpsJet>) -> Self {
        let mut map = BTreeMap::new();
        accumulate(&mut map, m, c.into());
        OperatorPoly { repr: Repr::Normal(map) }
    }

    pub fn op(op: ModeOp) -> Self {
        OperatorPoly::from_monomial(Monomial::single(op), EpsJet::ONE)
    }

    pub fn annihilation(mode: Mode) -> Self {
        OperatorPoly::op(ModeOp::annihilate(mode))
    }

    pub fn creation(mode: Mode) -> Self {
        OperatorPoly::op(ModeOp::create(mode))
    }

    /// `a†a` for one mode.
    pub fn number(mode: Mode) -> Self {
        OperatorPoly::from_monomial(
            Monomial::single(ModeOp::create(mode)).with(mode, (1, 1)),
            EpsJet::ONE,
        )
    }

    /// A formal (unrewritten) polynomial from explicit terms.
    pub fn formal(terms: Vec<OperatorTerm>) -> Self {
        let terms = terms.into_iter().filter(|t| !t.coeff.is_zero()).collect();
        OperatorPoly { repr: Repr::Formal(terms) }
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self.repr, Repr::Normal(_))
    }

    pub fn is_zero(&self) -> bool {
        match &self.repr {
            Repr::Normal(m) => m.is_empty(),
            Repr::Formal(t) => t.is_empty(),
        }
    }

    pub fn len(&self) -> usize {
        match &self.repr {
            Repr::Normal(m) => m.len(),
            Repr::Formal(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Terms as factor strings. Canonical polynomials list factors in
    /// canonical order.
    pub fn terms(&self) -> Vec<OperatorTerm> {
        match &self.repr {
            Repr::Normal(m) => {
                m.iter().map(|(mono, c)| OperatorTerm::new(*c, mono.factors())).collect()
            }
            Repr::Formal(t) => t.clone(),
        }
    }

    /// Canonical monomials and coefficients, in deterministic order.
    /// Formal polynomials are normal-ordered first.
    pub fn monomials(&self) -> Vec<(Monomial, EpsJet)> {
        match &self.repr {
            Repr::Normal(m) => m.iter().map(|(k, v)| (*k, *v)).collect(),
            Repr::Formal(_) => self.normal_order().monomials(),
        }
    }

    /// Coefficient of a normal-ordered monomial (zero when absent).
    pub fn coefficient(&self, m: &Monomial) -> EpsJet {
        match &self.repr {
            Repr::Normal(map) => map.get(m).copied().unwrap_or(EpsJet::ZERO),
            Repr::Formal(_) => self.normal_order().coefficient(m),
        }
    }

    pub fn max_degree(&self) -> usize {
        match &self.repr {
            Repr::Normal(m) => m.keys().map(|k| k.degree()).max().unwrap_or(0),
            Repr::Formal(t) => t.iter().map(|t| t.factors.len()).max().unwrap_or(0),
        }
    }

    fn normal_map(&self) -> std::borrow::Cow<'_, BTreeMap<Monomial, EpsJet>> {
        match &self.repr {
            Repr::Normal(m) => std::borrow::Cow::Borrowed(m),
            Repr::Formal(_) => match self.normal_order().repr {
                Repr::Normal(m) => std::borrow::Cow::Owned(m),
                Repr::Formal(_) => unreachable!(),
            },
        }
    }

    /// Rewrite into normal order using `[a, a†] = 1` within each mode and
    /// commutation across modes, merging like terms.
    pub fn normal_order(&self) -> OperatorPoly {
        match &self.repr {
            Repr::Normal(_) => self.clone(),
            Repr::Formal(terms) => {
                let mut map = BTreeMap::new();
                for t in terms {
                    t.normal_ordered_into(&mut map);
                }
                OperatorPoly { repr: Repr::Normal(prune(map)) }
            }
        }
    }

    /// Formal noncommutative product: factor strings are concatenated and no
    /// commutation rule is applied.
    pub fn multiply(&self, other: &OperatorPoly) -> OperatorPoly {
        let (lhs, rhs) = (self.terms(), other.terms());
        let mut out = Vec::with_capacity(lhs.len() * rhs.len());
        for a in &lhs {
            for b in &rhs {
                let coeff = a.coeff * b.coeff;
                if coeff.is_zero() {
                    continue;
                }
                let mut factors = a.factors.clone();
                factors.extend_from_slice(&b.factors);
                out.push(OperatorTerm::new(coeff, factors));
            }
        }
        OperatorPoly { repr: Repr::Formal(out) }
    }

    /// Product returned directly in canonical form. Equal to
    /// `self.multiply(other).normal_order()` but expands block-wise with the
    /// closed-form reordering of `a^k a†^l`.
    pub fn mul_normal(&self, other: &OperatorPoly) -> OperatorPoly {
        let (lhs, rhs) = (self.normal_map(), other.normal_map());
        let mut map = BTreeMap::new();
        for (ma, ca) in lhs.iter() {
            for (mb, cb) in rhs.iter() {
                let c = *ca * *cb;
                if c.is_zero() {
                    continue;
                }
                mul_monomials(ma, mb, |m, w| accumulate(&mut map, m, c * w));
            }
        }
        OperatorPoly { repr: Repr::Normal(prune(map)) }
    }

    pub fn pow_normal(&self, n: u32) -> OperatorPoly {
        let mut acc = OperatorPoly::identity();
        for _ in 0..n {
            acc = acc.mul_normal(self);
        }
        acc
    }

    /// Formal adjoint: reversed factors, flipped daggers, conjugated
    /// coefficients.
    pub fn adjoint(&self) -> OperatorPoly {
        match &self.repr {
            Repr::Normal(m) => OperatorPoly {
                repr: Repr::Normal(m.iter().map(|(k, c)| (k.adjoint(), c.conj())).collect()),
            },
            Repr::Formal(t) => OperatorPoly { repr: Repr::Formal(t.iter().map(|x| x.adjoint()).collect()) },
        }
    }

    pub fn scale(&self, c: impl Into<EpsJet>) -> OperatorPoly {
        let c = c.into();
        match &self.repr {
            Repr::Normal(m) => OperatorPoly {
                repr: Repr::Normal(prune(m.iter().map(|(k, v)| (*k, *v * c)).collect())),
            },
            Repr::Formal(t) => OperatorPoly::formal(
                t.iter().map(|x| OperatorTerm::new(x.coeff * c, x.factors.clone())).collect(),
            ),
        }
    }

    /// `⟨0000| p |0000⟩`: the identity coefficient of the normal-ordered form.
    pub fn vacuum_expectation(&self) -> EpsJet {
        match &self.repr {
            Repr::Normal(m) => m.get(&Monomial::identity()).copied().unwrap_or(EpsJet::ZERO),
            Repr::Formal(_) => self.normal_order().vacuum_expectation(),
        }
    }

    /// Partial vacuum expectation over the given modes. Terms carrying any
    /// operator of a traced mode vanish; the rest is unchanged.
    pub fn vacuum_trace(&self, modes: &[Mode]) -> OperatorPoly {
        let map = self.normal_map();
        let kept = map
            .iter()
            .filter(|(m, _)| modes.iter().all(|&md| m.power(md) == (0, 0)))
            .map(|(m, c)| (*m, *c))
            .collect();
        OperatorPoly { repr: Repr::Normal(kept) }
    }

    /// Relabel V1↔V2 and U1↔U2.
    pub fn exchange_modes(&self) -> OperatorPoly {
        match &self.repr {
            Repr::Normal(m) => OperatorPoly {
                repr: Repr::Normal(m.iter().map(|(k, c)| (k.exchanged(), *c)).collect()),
            },
            Repr::Formal(t) => OperatorPoly::formal(
                t.iter()
                    .map(|x| {
                        OperatorTerm::new(
                            x.coeff,
                            x.factors
                                .iter()
                                .map(|f| ModeOp { mode: f.mode.exchanged(), dagger: f.dagger })
                                .collect(),
                        )
                    })
                    .collect(),
            ),
        }
    }

    /// Replace `a → a + α e^{iφ}` (and `a† → a† + α e^{−iφ}`) for one mode and
    /// expand.
    pub fn substitute_displacement(&self, mode: Mode, amplitude: f64, phase: f64) -> OperatorPoly {
        let shift = Complex64::from_polar(amplitude, phase);
        let image = OperatorPoly::annihilation(mode) + OperatorPoly::scalar(shift);
        self.substitute(&Substitution::new().with(mode, image))
    }

    /// Apply a mode substitution homomorphism and return the canonical result.
    pub fn substitute(&self, sub: &Substitution) -> OperatorPoly {
        let map = self.normal_map();
        let mut powers = sub.power_cache();
        let mut out = BTreeMap::new();
        for (mono, c) in map.iter() {
            let mut acc = OperatorPoly::scalar(*c);
            let mut untouched = Monomial::identity();
            for mode in Mode::ALL {
                let (j, k) = mono.power(mode);
                if sub.images[mode.index()].is_none() {
                    untouched.set_power(mode, (j, k));
                    continue;
                }
                if j > 0 {
                    acc = acc.mul_normal(powers.creation(mode, j as usize));
                }
                if k > 0 {
                    acc = acc.mul_normal(powers.annihilation(mode, k as usize));
                }
            }
            if !untouched.is_identity() {
                acc = acc.mul_normal(&OperatorPoly::from_monomial(untouched, EpsJet::ONE));
            }
            for (m, v) in acc.monomials() {
                accumulate(&mut out, m, v);
            }
        }
        OperatorPoly { repr: Repr::Normal(prune(out)) }
    }

    /// Largest coefficient magnitude difference to another polynomial, both
    /// compared in canonical form.
    pub fn max_abs_diff(&self, other: &OperatorPoly) -> f64 {
        let diff = self.clone() - other.clone();
        diff.monomials().iter().map(|(_, c)| c.norm_max()).fold(0.0, f64::max)
    }
}

impl Monomial {
    fn with(mut self, mode: Mode, p: (u8, u8)) -> Self {
        self.set_power(mode, p);
        self
    }
}

/// Simultaneous replacement of annihilation operators by polynomial images;
/// creation operators map to the adjoint images.
///
/// The images of distinct modes must commute with each other and with each
/// other's adjoints (they represent a canonical transformation), otherwise
/// the result depends on the canonical factor order.
#[derive(Clone, Debug, Default)]
pub struct Substitution {
    images: [Option<OperatorPoly>; 4],
}

impl Substitution {
    pub fn new() -> Self {
        Substitution::default()
    }

    pub fn with(mut self, mode: Mode, image: OperatorPoly) -> Self {
        self.images[mode.index()] = Some(image.normal_order());
        self
    }

    pub fn image(&self, mode: Mode) -> Option<&OperatorPoly> {
        self.images[mode.index()].as_ref()
    }

    fn power_cache(&self) -> PowerCache<'_> {
        PowerCache { sub: self, plain: Default::default(), dagger: Default::default() }
    }
}

struct PowerCache<'a> {
    sub: &'a Substitution,
    plain: [Vec<OperatorPoly>; 4],
    dagger: [Vec<OperatorPoly>; 4],
}

impl PowerCache<'_> {
    fn fill(list: &mut Vec<OperatorPoly>, base: &OperatorPoly, n: usize) {
        if list.is_empty() {
            list.push(OperatorPoly::identity());
        }
        while list.len() <= n {
            let next = list.last().unwrap().mul_normal(base);
            list.push(next);
        }
    }

    fn annihilation(&mut self, mode: Mode, n: usize) -> &OperatorPoly {
        let base = self.sub.images[mode.index()].as_ref().expect("mode has no image");
        let list = &mut self.plain[mode.index()];
        Self::fill(list, base, n);
        &list[n]
    }

    fn creation(&mut self, mode: Mode, n: usize) -> &OperatorPoly {
        let base = self.sub.images[mode.index()].as_ref().expect("mode has no image").adjoint();
        let list = &mut self.dagger[mode.index()];
        Self::fill(list, &base, n);
        &list[n]
    }
}

fn combine(a: OperatorPoly, b: OperatorPoly, sign: f64) -> OperatorPoly {
    match (a.repr, b.repr) {
        (Repr::Normal(mut x), Repr::Normal(y)) => {
            for (m, c) in y {
                accumulate(&mut x, m, c * sign);
            }
            OperatorPoly { repr: Repr::Normal(prune(x)) }
        }
        (ra, rb) => {
            let mut terms = OperatorPoly { repr: ra }.terms();
            terms.extend(
                OperatorPoly { repr: rb }
                    .terms()
                    .into_iter()
                    .map(|t| OperatorTerm::new(t.coeff * sign, t.factors)),
            );
            OperatorPoly::formal(terms)
        }
    }
}

impl Add for OperatorPoly {
    type Output = OperatorPoly;
    fn add(self, rhs: OperatorPoly) -> OperatorPoly {
        combine(self, rhs, 1.0)
    }
}

impl Sub for OperatorPoly {
    type Output = OperatorPoly;
    fn sub(self, rhs: OperatorPoly) -> OperatorPoly {
        combine(self, rhs, -1.0)
    }
}

impl Neg for OperatorPoly {
    type Output = OperatorPoly;
    fn neg(self) -> OperatorPoly {
        self.scale(-1.0)
    }
}

impl Add for &OperatorPoly {
    type Output = OperatorPoly;
    fn add(self, rhs: &OperatorPoly) -> OperatorPoly {
        combine(self.clone(), rhs.clone(), 1.0)
    }
}

impl Sub for &OperatorPoly {
    type Output = OperatorPoly;
    fn sub(self, rhs: &OperatorPoly) -> OperatorPoly {
        combine(self.clone(), rhs.clone(), -1.0)
    }
}

/// Canonical product (see [`OperatorPoly::mul_normal`]).
impl Mul for &OperatorPoly {
    type Output = OperatorPoly;
    fn mul(self, rhs: &OperatorPoly) -> OperatorPoly {
        self.mul_normal(rhs)
    }
}

impl Mul for OperatorPoly {
    type Output = OperatorPoly;
    fn mul(self, rhs: OperatorPoly) -> OperatorPoly {
        self.mul_normal(&rhs)
    }
}

impl fmt::Display for OperatorPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms = self.terms();
        if terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            let c = t.coeff;
            if c.dvalue == Complex64::new(0.0, 0.0) {
                write!(f, "({})", c.value0)?;
            } else {
                write!(f, "[{}]", c)?;
            }
            for op in &t.factors {
                write!(f, " {}", op)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v1() -> OperatorPoly {
        OperatorPoly::annihilation(Mode::V1)
    }
    fn v1d() -> OperatorPoly {
        OperatorPoly::creation(Mode::V1)
    }

    #[test]
    fn formal_product_keeps_order() {
        let p = v1().multiply(&v1d());
        assert!(!p.is_canonical());
        let t = p.terms();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].factors, vec![ModeOp::annihilate(Mode::V1), ModeOp::create(Mode::V1)]);
    }

    #[test]
    fn identity_is_multiplicative_unit() {
        let p = v1d().mul_normal(&v1()) + OperatorPoly::scalar(2.5);
        let q = OperatorPoly::identity().multiply(&p).normal_order();
        assert!(q.max_abs_diff(&p) == 0.0);
    }

    #[test]
    fn eps_squared_truncates_to_zero() {
        let ev = v1().scale(EpsJet::EPS);
        assert!(ev.multiply(&ev).is_zero());
        assert!(ev.mul_normal(&ev).is_zero());
    }

    #[test]
    fn single_commutator() {
        let p = v1().multiply(&v1d()).normal_order();
        let expected = v1d().mul_normal(&v1()) + OperatorPoly::identity();
        assert!(p.is_canonical());
        assert_eq!(p.max_abs_diff(&expected), 0.0);
    }

    #[test]
    fn distinct_modes_commute() {
        let u1d = OperatorPoly::creation(Mode::U1);
        let p = v1().multiply(&u1d).normal_order();
        let q = u1d.multiply(&v1()).normal_order();
        assert_eq!(p.max_abs_diff(&q), 0.0);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn double_factorial_expansion() {
        // v v v† v† = v†² v² + 4 v† v + 2
        let p = v1().multiply(&v1()).multiply(&v1d()).multiply(&v1d()).normal_order();
        let m = |j, k| Monomial::from_powers([(j, k), (0, 0), (0, 0), (0, 0)]);
        assert_eq!(p.coefficient(&m(2, 2)), EpsJet::real(1.0));
        assert_eq!(p.coefficient(&m(1, 1)), EpsJet::real(4.0));
        assert_eq!(p.coefficient(&m(0, 0)), EpsJet::real(2.0));
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn fast_product_matches_rewriting() {
        let a = v1().multiply(&v1()).multiply(&v1d()) + OperatorPoly::creation(Mode::V2).scale(2.0);
        let b = v1d().multiply(&OperatorPoly::annihilation(Mode::V2)).multiply(&v1d())
            + OperatorPoly::scalar(EpsJet::EPS);
        let slow = a.multiply(&b).normal_order();
        let fast = a.normal_order().mul_normal(&b.normal_order());
        assert!(slow.max_abs_diff(&fast) < 1e-14);
    }

    #[test]
    fn vacuum_expectations() {
        assert_eq!(v1().multiply(&v1d()).vacuum_expectation(), EpsJet::ONE);
        assert_eq!(v1d().multiply(&v1()).vacuum_expectation(), EpsJet::ZERO);
        let alpha = 1.7;
        let shifted = OperatorPoly::number(Mode::V1).substitute_displacement(Mode::V1, alpha, 0.0);
        let e = shifted.vacuum_expectation();
        assert!((e.value0.re - alpha * alpha).abs() < 1e-14);
    }

    #[test]
    fn displacement_expansion() {
        let (alpha, phi) = (2.0, 0.3);
        let n = OperatorPoly::number(Mode::V1).substitute_displacement(Mode::V1, alpha, phi);
        let shift = Complex64::from_polar(alpha, phi);
        let expected = OperatorPoly::number(Mode::V1)
            + v1d().scale(shift)
            + v1().scale(shift.conj())
            + OperatorPoly::scalar(alpha * alpha);
        assert!(n.max_abs_diff(&expected) < 1e-14);

        let a = v1().substitute_displacement(Mode::V1, 2.0, 0.0);
        assert!(a.max_abs_diff(&(v1() + OperatorPoly::scalar(2.0))) == 0.0);
        assert!(n.substitute_displacement(Mode::V2, 0.0, 1.0).max_abs_diff(&n) == 0.0);
    }

    #[test]
    fn partial_vacuum_trace_drops_bath_terms() {
        let u = OperatorPoly::annihilation(Mode::U1);
        let p = (v1() + u.clone()).adjoint().mul_normal(&(v1() + u));
        let traced = p.vacuum_trace(&[Mode::U1]);
        assert_eq!(traced.max_abs_diff(&OperatorPoly::number(Mode::V1)), 0.0);
    }

    #[test]
    fn adjoint_of_formal_reverses() {
        let p = v1().multiply(&OperatorPoly::creation(Mode::V2)).scale(Complex64::new(0.0, 1.0));
        let t = p.adjoint().terms();
        assert_eq!(t[0].factors, vec![ModeOp::annihilate(Mode::V2), ModeOp::create(Mode::V1)]);
        assert_eq!(t[0].coeff.value0, Complex64::new(0.0, -1.0));
    }
}
