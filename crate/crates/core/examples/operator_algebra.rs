//! Normal ordering, products and the absorption generator acting on a
//! pair-number observable.

use tpa_metrology::algebra::{Mode, OperatorPoly};
use tpa_metrology::channel::{number_monomial, tpa_adjoint};

fn main() {
    let a = OperatorPoly::annihilation(Mode::V1);
    let ad = OperatorPoly::creation(Mode::V1);

    // a a† = a† a + 1
    let product = a.multiply(&ad);
    println!("formal:  {}", product);
    println!("normal:  {}", product.normal_order());

    // (a† a)^3 in normal order
    let n = OperatorPoly::number(Mode::V1);
    println!("n^3:     {}", n.pow_normal(3));

    // L'(n1 n2) for L = a1 a2: the expected signal of a pair measurement
    let pair = number_monomial(1, 1);
    println!("L'(n1n2): {}", tpa_adjoint(&pair));

    let commutator = &a.mul_normal(&ad) - &ad.mul_normal(&a);
    println!("[a, a†] = {}", commutator);
}
