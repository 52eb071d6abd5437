//! How much loss costs each observable for single seeding: optimized error at
//! eta over optimized error without loss.

use tpa_metrology::channel::Scenario;
use tpa_metrology::estimators::Observable;
use tpa_metrology::optimizer::optimize;

fn main() -> tpa_metrology::Result<()> {
    let n = 1e4;
    for obs in Observable::ALL {
        let lossless = optimize(Scenario::SingleSeeded, obs, n, 1.0)?.delta_eps_sq_star;
        let ratios: Vec<String> = [0.9, 0.7, 0.5]
            .iter()
            .map(|&eta| optimize(Scenario::SingleSeeded, obs, n, eta).map(|o| format!("eta={eta}: {:.3}", o.delta_eps_sq_star / lossless)))
            .collect::<Result<_, _>>()?;
        println!("{obs:>3}  {}", ratios.join("  "));
    }
    Ok(())
}
