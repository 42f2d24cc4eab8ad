//! Pointwise field bound along a coherent amplitude family.
//!
//! For zero-mode coherent states the one-point function is a classical
//! solution, and the chain
//!   sup-norm-vs-slice-energy (Morrey) -> slice-vs-region energy estimate ->
//!   region-vs-smeared energy -> classical-vs-quantum stress
//! yields `|omega_1(p)|^2 <= C (omega(T^ren(t t F^2)) + c)` with one `(C, c)`
//! for the whole family. Prints the constants and every link's slack.
//!
//! Run with `cargo run --release --example pointwise_bound`.

use num_complex::Complex64;
use qeilab::bounds::pointwise_verify;
use qeilab::field::{ModeBasis, StateSpec};
use qeilab::grid::{make_grid, plateau, Box2, SpatialSupport};

fn main() -> qeilab::Result<()> {
    let grid = make_grid(std::f64::consts::TAU, 3.6, 48, 32)?;
    let envelope = plateau(
        &grid,
        Box2 { t_min: -1.8, t_max: 1.8, spatial: SpatialSupport::FullCircle },
        Box2 { t_min: -2.7, t_max: 2.7, spatial: SpatialSupport::FullCircle },
    )?;

    // Zero-mode coherent states phi = A cos(m t) for three masses and a
    // geometric amplitude ladder; A maps to the mode amplitude A sqrt(2mL)/2.
    let mut sweep = Vec::new();
    for &mass in &[0.5, 1.0, 2.0] {
        let basis = ModeBasis::new(mass, grid.circumference, 16)?;
        for &amp in &[0.0, 1.0, 5.0, 25.0] {
            let a0 = amp * (2.0 * mass * grid.circumference).sqrt() / 2.0;
            let amplitudes = if a0 == 0.0 { vec![] } else { vec![(0, Complex64::new(a0, 0.0))] };
            sweep.push((basis, StateSpec::Coherent { amplitudes }));
        }
    }

    let report = pointwise_verify(&sweep, (0.0, 1.0), &envelope, 0.5, 0.0)?;
    println!(
        "constants: C0 = {:.4}, C4 = {:.4}, width = {:.3}, C = {:.4e}, c = {:.4e}",
        report.c0, report.c4, report.width, report.big_c, report.c
    );
    println!(
        "{:>28}  {:>11}  {:>11}  {:>11}  {:>11}",
        "state", "|omega_1|", "stress", "morrey", "final slack"
    );
    for row in &report.rows {
        println!(
            "{:>28}  {:>11.4e}  {:>11.4e}  {:>11.4e}  {:>11.4e}",
            row.state, row.one_point_abs, row.stress, row.morrey_slack, row.final_slack
        );
    }
    Ok(())
}
