//! Error budgets of the three observables for one probe, with the
//! covariance matrix behind each.

use tpa_metrology::channel::ProbeConfig;
use tpa_metrology::estimators::{budget, covariance_for, Observable};
use tpa_metrology::moments::compute_moments;

fn main() -> tpa_metrology::Result<()> {
    let cfg = ProbeConfig::single_seeded(3.0, 0.0, 0.5, 0.0, 0.9);
    let m = compute_moments(&cfg)?;
    for obs in Observable::ALL {
        let b = budget(&m, obs)?;
        let cov = covariance_for(&m, obs)?;
        println!(
            "{obs:>3}: <O> = {:.6}  d<O>/deps = {:.6}  Var = {:.6e}  err^2 = {:.6e}",
            b.value0, b.dvalue, b.variance, b.delta_eps_sq
        );
        println!("     covariance over {:?}, eigenvalues {:.3?}", cov.labels, cov.eigenvalues());
    }
    Ok(())
}
