//! Photon-number moments of a double-seeded probe and their derivatives
//! with respect to the absorbance.

use tpa_metrology::channel::{incident_photon_number, ProbeConfig};
use tpa_metrology::moments::compute_moments;

fn main() -> tpa_metrology::Result<()> {
    let cfg = ProbeConfig::double_seeded(2.0, 1.5, 0.0, 0.3, 0.6, 0.9, 0.8);
    println!("n_T = {:.6}", incident_photon_number(&cfg));
    let table = compute_moments(&cfg)?;
    println!("{:>2} {:>2} {:>22} {:>22}", "p", "q", "<n1^p n2^q>", "d/d eps");
    for ((p, q), jet) in table.iter() {
        println!("{p:>2} {q:>2} {:>22.12e} {:>22.12e}", jet.value0.re, jet.dvalue.re);
    }
    Ok(())
}
