//! Smeared energy inequality across a family of Hadamard states.
//!
//! Builds a seeded sweep of vacuum, thermal, coherent, and finite-particle
//! states for three masses, then verifies the bound
//! `omega(phi(f)^2) <= C (omega(T^ren(t t F^2)) + c)` with a single pair
//! `(C, c)` shared by the whole family. Prints the assembled constants and
//! the per-state headline margin `rhs - lhs`.
//!
//! Run with `cargo run --release --example energy_inequality_sweep`.

use qeilab::bounds::qei_verify;
use qeilab::config::StatesSection;
use qeilab::grid::{gaussian_window, make_grid, plateau, Box2, SpatialSupport};
use qeilab::run::build_sweep;

fn main() -> qeilab::Result<()> {
    let grid = make_grid(std::f64::consts::TAU, 3.6, 64, 64)?;
    let f = gaussian_window(&grid, 0.4, (-0.8, 0.8), (-1.7, 1.7))?;
    let envelope = plateau(
        &grid,
        Box2 { t_min: -1.8, t_max: 1.8, spatial: SpatialSupport::FullCircle },
        Box2 { t_min: -2.7, t_max: 2.7, spatial: SpatialSupport::FullCircle },
    )?;

    let states = StatesSection {
        masses: vec![0.5, 1.0, 2.0],
        n_max: 56,
        thermal_count: 2,
        beta_range: Some((0.5, 5.0)),
        coherent_count: 2,
        amplitude_max: 10.0,
        particle_count: 1,
        seed: 42,
    };
    let sweep = build_sweep(&states, grid.circumference, states.seed, 1)?;

    let report = qei_verify("example", &sweep, &f, &envelope, 2, &grid)?;
    println!(
        "constants: C' = {:.4e}, C = {:.4e}, c = {:.4e}, Delta_max = {:.3e}",
        report.c_prime, report.big_c, report.c, report.delta_max
    );
    println!("{:>34}  {:>12}  {:>12}  {:>12}", "state", "lhs", "rhs", "margin");
    for row in &report.rows {
        println!(
            "{:>34}  {:>12.5e}  {:>12.5e}  {:>12.5e}",
            row.state, row.lhs, row.rhs, row.margin3
        );
    }
    println!("all {} states verified", report.rows.len());
    Ok(())
}
