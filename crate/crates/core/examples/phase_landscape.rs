//! Relative-phase dependence of double seeding at n_T = 500, r = 1 and
//! balanced seeds.

use std::f64::consts::PI;

use tpa_metrology::estimators::Observable;
use tpa_metrology::optimizer::{phase_map, phase_optimum};

fn main() -> tpa_metrology::Result<()> {
    let (n, r, split) = (500.0, 1.0, 0.5);
    for obs in Observable::ALL {
        let minima = phase_optimum(obs, n, 1.0, r, split, 360)?;
        for (chi, v) in minima {
            println!("{obs:>3}: minimum at theta - Phi = {:.4} pi, err^2 = {v:.6e}", chi / PI);
        }
    }
    // coarse map; only theta - Phi matters, so rows repeat along diagonals
    let map = phase_map(Observable::BigG11, n, 1.0, r, split, 8, 8)?;
    for row in map.chunks(8) {
        let cells: Vec<String> = row.iter().map(|p| format!("{:.3e}", p.delta_eps_sq)).collect();
        println!("theta = {:.3} pi: {}", row[0].theta / PI, cells.join(" "));
    }
    Ok(())
}
