use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;

/// A first-order jet `value0 + dvalue·ε` with `ε² = 0`.
///
/// The absorbance enters every coefficient of the operator algebra only to
/// first order, so carrying it as a formal nilpotent gives `∂/∂ε` at `ε = 0`
/// exactly, without finite differencing.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpsJet {
    pub value0: Complex64,
    pub dvalue: Complex64,
}

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

impl EpsJet {
    pub const ZERO: EpsJet = EpsJet { value0: C0, dvalue: C0 };
    pub const ONE: EpsJet = EpsJet { value0: C1, dvalue: C0 };
    /// The absorbance itself.
    pub const EPS: EpsJet = EpsJet { value0: C0, dvalue: C1 };

    pub fn new(value0: Complex64, dvalue: Complex64) -> Self {
        EpsJet { value0, dvalue }
    }

    pub fn constant(value0: Complex64) -> Self {
        EpsJet { value0, dvalue: C0 }
    }

    pub fn real(x: f64) -> Self {
        EpsJet::constant(Complex64::new(x, 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.value0 == C0 && self.dvalue == C0
    }

    /// Complex conjugation; `ε` is a real parameter so both parts conjugate.
    pub fn conj(&self) -> Self {
        EpsJet { value0: self.value0.conj(), dvalue: self.dvalue.conj() }
    }

    /// First-order quotient. Undefined when the divisor vanishes at `ε = 0`.
    pub fn checked_div(self, rhs: EpsJet) -> Option<EpsJet> {
        if rhs.value0 == C0 {
            return None;
        }
        let q0 = self.value0 / rhs.value0;
        let q1 = (self.dvalue - q0 * rhs.dvalue) / rhs.value0;
        Some(EpsJet { value0: q0, dvalue: q1 })
    }

    pub fn scale(self, c: Complex64) -> Self {
        EpsJet { value0: self.value0 * c, dvalue: self.dvalue * c }
    }

    /// Largest absolute value of either part.
    pub fn norm_max(&self) -> f64 {
        self.value0.norm().max(self.dvalue.norm())
    }
}

impl From<f64> for EpsJet {
    fn from(x: f64) -> Self {
        EpsJet::real(x)
    }
}

impl From<Complex64> for EpsJet {
    fn from(c: Complex64) -> Self {
        EpsJet::constant(c)
    }
}

impl Add for EpsJet {
    type Output = EpsJet;
    fn add(self, rhs: EpsJet) -> EpsJet {
        EpsJet { value0: self.value0 + rhs.value0, dvalue: self.dvalue + rhs.dvalue }
    }
}

impl Sub for EpsJet {
    type Output = EpsJet;
    fn sub(self, rhs: EpsJet) -> EpsJet {
        EpsJet { value0: self.value0 - rhs.value0, dvalue: self.dvalue - rhs.dvalue }
    }
}

impl Neg for EpsJet {
    type Output = EpsJet;
    fn neg(self) -> EpsJet {
        EpsJet { value0: -self.value0, dvalue: -self.dvalue }
    }
}

impl Mul for EpsJet {
    type Output = EpsJet;
    fn mul(self, rhs: EpsJet) -> EpsJet {
        EpsJet {
            value0: self.value0 * rhs.value0,
            dvalue: self.value0 * rhs.dvalue + self.dvalue * rhs.value0,
        }
    }
}

impl Mul<Complex64> for EpsJet {
    type Output = EpsJet;
    fn mul(self, rhs: Complex64) -> EpsJet {
        self.scale(rhs)
    }
}

impl Mul<f64> for EpsJet {
    type Output = EpsJet;
    fn mul(self, rhs: f64) -> EpsJet {
        EpsJet { value0: self.value0 * rhs, dvalue: self.dvalue * rhs }
    }
}

impl AddAssign for EpsJet {
    fn add_assign(&mut self, rhs: EpsJet) {
        self.value0 += rhs.value0;
        self.dvalue += rhs.dvalue;
    }
}

impl SubAssign for EpsJet {
    fn sub_assign(&mut self, rhs: EpsJet) {
        self.value0 -= rhs.value0;
        self.dvalue -= rhs.dvalue;
    }
}

impl MulAssign for EpsJet {
    fn mul_assign(&mut self, rhs: EpsJet) {
        *self = *self * rhs;
    }
}

impl Sum for EpsJet {
    fn sum<I: Iterator<Item = EpsJet>>(iter: I) -> EpsJet {
        iter.fold(EpsJet::ZERO, |acc, x| acc + x)
    }
}

impl fmt::Display for EpsJet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) + ({})ε", self.value0, self.dvalue)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn product_truncates_at_first_order() {
        let a = EpsJet::new(c(2.0, 0.0), c(3.0, 0.0));
        let b = EpsJet::new(c(5.0, 0.0), c(7.0, 0.0));
        let p = a * b;
        assert_eq!(p.value0, c(10.0, 0.0));
        assert_eq!(p.dvalue, c(2.0 * 7.0 + 3.0 * 5.0, 0.0));
        assert!((EpsJet::EPS * EpsJet::EPS).is_zero());
    }

    #[test]
    fn division_inverts_multiplication() {
        let a = EpsJet::new(c(1.5, -0.5), c(0.25, 2.0));
        let b = EpsJet::new(c(-2.0, 1.0), c(3.0, 0.5));
        let q = (a * b).checked_div(b).unwrap();
        assert!((q.value0 - a.value0).norm() < 1e-14);
        assert!((q.dvalue - a.dvalue).norm() < 1e-14);
    }

    #[test]
    fn division_by_pure_eps_is_undefined() {
        assert!(EpsJet::ONE.checked_div(EpsJet::EPS).is_none());
    }
}
