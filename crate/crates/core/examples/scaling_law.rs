//! Power-law fit of the optimized error for a coherent pair and a
//! double-seeded probe.

use tpa_metrology::channel::Scenario;
use tpa_metrology::estimators::Observable;
use tpa_metrology::optimizer::{fit_scaling, log_grid};

fn main() -> tpa_metrology::Result<()> {
    let grid = log_grid(1e2, 1e4, 5);
    for sc in [Scenario::ClassicalCoherent, Scenario::DoubleSeeded] {
        let fit = fit_scaling(sc, Observable::BigG11, 1.0, &grid)?;
        println!("{sc} G11: err^2 ~ {:.3} / n_T^{:.3}  (r^2 = {:.6})", fit.prefactor, fit.exponent, fit.r_squared);
        for o in &fit.optima {
            println!("    n_T = {:>9.1}  err^2 = {:.4e}  r = {:.4}", o.n_total, o.delta_eps_sq_star, o.solve.r);
        }
    }
    Ok(())
}
