//! Best probe of each scenario at a fixed photon budget.
//!
//! cargo run --release --example optimize_probe -- 1000 0.9

use tpa_metrology::channel::Scenario;
use tpa_metrology::estimators::Observable;
use tpa_metrology::optimizer::optimize;

fn main() -> tpa_metrology::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: f64 = args.next().map_or(1000.0, |s| s.parse().expect("n_T"));
    let eta: f64 = args.next().map_or(1.0, |s| s.parse().expect("eta"));
    for sc in Scenario::ALL {
        for obs in Observable::ALL {
            match optimize(sc, obs, n, eta) {
                Ok(o) => println!(
                    "{sc:>9} {obs:>3}: err^2 = {:.4e}  r = {:.4}  split = {:.4}  phase = {:.4}{}",
                    o.delta_eps_sq_star,
                    o.cfg_star.r,
                    o.solve.seed_split,
                    o.cfg_star.relative_phase(),
                    if o.converged { "" } else { "  (not converged)" }
                ),
                Err(e) => println!("{sc:>9} {obs:>3}: {e}"),
            }
        }
    }
    Ok(())
}
