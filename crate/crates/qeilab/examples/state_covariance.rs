//! State-model sanity checks: commutator, field equation, and normal ordering.
//!
//! Exercises the two-point functions of the state family on three structural
//! properties:
//!   - the antisymmetric part of the two-point pairing is state independent
//!     (it is the commutator, fixed by the field algebra);
//!   - every two-point function annihilates the Klein-Gordon operator in
//!     both slots;
//!   - the renormalized stress energy vanishes identically in the vacuum and
//!     is positive for thermal states.
//!
//! Run with `cargo run --release --example state_covariance`.

use num_complex::Complex64;
use qeilab::field::{two_point, ModeBasis, StateSpec, StressSmearing, kg_defect};
use qeilab::grid::{gaussian_window, make_grid, plateau, Box2, SpatialSupport};

fn main() -> qeilab::Result<()> {
    let grid = make_grid(std::f64::consts::TAU, 3.6, 48, 32)?;
    let basis = ModeBasis::new(1.0, grid.circumference, 24)?;
    let f = gaussian_window(&grid, 0.4, (-0.8, 0.8), (-1.7, 1.7))?;
    let h = gaussian_window(&grid, 0.5, (-0.3, 1.2), (-1.2, 2.1))?;

    let states = [
        StateSpec::Vacuum,
        StateSpec::Thermal { beta: 2.0 },
        StateSpec::Coherent { amplitudes: vec![(1, Complex64::new(1.5, -0.5))] },
        StateSpec::Particles { occupations: vec![(0, 1), (2, 2)] },
    ];

    // Commutator: Im omega_2(f, h) must agree across all states.
    let mut commutators = Vec::new();
    for state in &states {
        let tp = two_point(state.clone(), basis)?;
        let pairing = tp.pair_smeared(&f, &h)?;
        commutators.push(pairing.im);
        let defect = kg_defect(&tp, &f, &h)?;
        println!(
            "{:>34}: Im omega_2 = {:+.10e}, KG residual = {:.3e}",
            format!("{state:?}").chars().take(34).collect::<String>(),
            pairing.im,
            defect
        );
    }
    let spread = commutators
        .iter()
        .map(|c| (c - commutators[0]).abs())
        .fold(0.0f64, f64::max);
    println!("commutator spread across states: {spread:.3e}");

    // Normal ordering: vacuum stress is exactly zero, thermal is positive.
    let envelope = plateau(
        &grid,
        Box2 { t_min: -1.8, t_max: 1.8, spatial: SpatialSupport::FullCircle },
        Box2 { t_min: -2.7, t_max: 2.7, spatial: SpatialSupport::FullCircle },
    )?;
    let smearing = StressSmearing::new(envelope)?;
    let vac = two_point(StateSpec::Vacuum, basis)?;
    let thermal = two_point(StateSpec::Thermal { beta: 2.0 }, basis)?;
    println!(
        "smeared stress: vacuum = {:?}, thermal = {:.6e}",
        qeilab::field::stress_expectation(&vac, &smearing)?,
        qeilab::field::stress_expectation(&thermal, &smearing)?
    );
    Ok(())
}
