//! Symbolic algebra of bosonic operator polynomials over the probe modes
//! `v1, v2` and loss-bath modes `u1, u2`, with first-order ε-jet coefficients.

mod jet;
mod poly;
mod vacuum;

pub use jet::EpsJet;
pub use poly::{Mode, ModeOp, Monomial, OperatorPoly, OperatorTerm, Substitution};
pub use vacuum::VacuumEvaluator;
pub(crate) use vacuum::Ket;
