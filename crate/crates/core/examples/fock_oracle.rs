//! Brute-force density-matrix simulation of one probe, checked against the
//! symbolic moments.

use tpa_metrology::channel::ProbeConfig;
use tpa_metrology::moments::compute_moments;
use tpa_metrology::oracle::{
    apply_displacement, apply_loss, apply_tpa, apply_two_mode_squeeze, oracle_moments_adaptive, DensityOperator,
    TpaMode,
};
use tpa_metrology::oracle::suite::compare_tables;

fn main() -> tpa_metrology::Result<()> {
    // stage by stage
    let rho = DensityOperator::vacuum(22, 1e-10);
    let rho = apply_displacement(&rho, 0.8, 0.0, 1)?;
    let rho = apply_two_mode_squeeze(&rho, 0.3, 0.0)?;
    let rho = apply_tpa(&rho, 0.01, TpaMode::Exact)?;
    let rho = apply_loss(&rho, 0.8)?;
    println!(
        "trace {:.12}  <n1 n2> {:.8}  min eigenvalue {:.2e}",
        rho.trace(),
        rho.moment(1, 1),
        rho.min_eigenvalue()
    );

    // full moment table with derivatives
    let cfg = ProbeConfig::double_seeded(1.0, 0.7, 0.4, 1.1, 0.4, 2.0, 0.7);
    let (oracle, fock) = oracle_moments_adaptive(&cfg)?;
    let engine = compute_moments(&cfg)?;
    let a = compare_tables(&cfg, &engine, &oracle, fock.n_max);
    println!(
        "n_max {}  worst value gap {:.2e}  worst derivative gap {:.2e} at {:?}  agree: {}",
        a.n_max,
        a.value_rel,
        a.dvalue_rel,
        a.worst_entry,
        a.passed()
    );
    Ok(())
}
