//! Smoothed four-well landscape: limit weights, barriers, grid export.
//!
//! cargo run --release --example landscape [-- out_dir]

use std::path::PathBuf;

use landscape_spde::config::Config;
use landscape_spde::export::write_landscape_csv;
use landscape_spde::ldp::barrier_table;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = Config::from_path(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/default.toml"))?;
    let land = cfg.landscape()?;
    let raw = land.raw();

    println!("filter width {:.4}, grad_tol {:.4}", land.filter_width(), land.grad_tol());
    let nu = raw.limit_measure().weights;
    for ((label, w), p) in raw.labels().iter().zip(raw.wells()).zip(&nu) {
        let f = land.potential_value(w.center)?;
        println!("{label:>7}  center {:?}  weight {}  F {:.2e}  nu0 {:.3}", w.center, w.weight, f, p);
    }

    println!("\nbarriers (from -> to):");
    for r in barrier_table(&land, cfg.solver.domain_length) {
        println!(
            "  {} -> {}: {:.5} at ({:.4}, {:.4})",
            raw.labels()[r.from_well],
            raw.labels()[r.to_well],
            r.barrier,
            r.saddle_point[0],
            r.saddle_point[1]
        );
    }

    if let Some(dir) = std::env::args().nth(1) {
        std::fs::create_dir_all(&dir)?;
        let path = PathBuf::from(dir).join("landscape.csv");
        write_landscape_csv(&path, &land)?;
        println!("\nwrote {}", path.display());
    }
    Ok(())
}
