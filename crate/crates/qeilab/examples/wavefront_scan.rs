//! Numerical wavefront scan of the vacuum two-point kernel.
//!
//! Localizes one column of the vacuum two-point function near a point with a
//! Gaussian window and integrates its spectrum over shrinking conic
//! neighbourhoods with a Sobolev weight `(1+|k|^2)^s`. Away from the null
//! directions the partial integrals stay bounded as the cutoff grows
//! (singular support is only lightcone-directed); along the null directions
//! they grow once `s` exceeds the critical order. A smooth control function
//! is bounded in every direction.
//!
//! Run with `cargo run --release --example wavefront_scan`.

use qeilab::field::{localized_vacuum_column, ModeBasis};
use qeilab::grid::{make_grid, SpatialSupport, SupportBox, TestFunction};
use qeilab::kernels::{cone_sobolev_integral, ConeSpec};

fn scan(label: &str, f: &TestFunction, direction: (f64, f64), s: f64) -> qeilab::Result<()> {
    let cone = ConeSpec::new(direction, 0.3, s, vec![5.0, 10.0, 20.0])?;
    let ladder = cone_sobolev_integral(f, &cone)?;
    println!(
        "{label:>14}  dir ({:+.2}, {:+.2})  s = {s:.1}  integrals {:?}  -> {}",
        direction.0,
        direction.1,
        ladder.values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>(),
        if ladder.bounded { "bounded" } else { "growing" },
    );
    Ok(())
}

fn main() -> qeilab::Result<()> {
    let grid = make_grid(std::f64::consts::TAU, 3.0, 128, 64)?;
    let basis = ModeBasis::new(1.0, grid.circumference, 20)?;
    let anchor = grid.site(grid.nt / 2, grid.nx / 4);
    let (t0, x0) = grid.site_coords(anchor);
    let whole = SupportBox {
        t_min: -grid.half_width,
        t_max: grid.half_width,
        spatial: SpatialSupport::FullCircle,
    };
    let localizer = TestFunction::from_real_fn(grid, whole, |t, x| {
        let dt = t - t0;
        let dx = grid.wrap(x - x0);
        (-(dt * dt + dx * dx) / 0.5).exp()
    });
    let column = localized_vacuum_column(&basis, &grid, anchor, &localizer)?;

    let root2 = std::f64::consts::SQRT_2;
    println!("vacuum kernel column:");
    scan("timelike", &column, (1.0, 0.0), 0.4)?;
    scan("spacelike", &column, (0.0, 1.0), 0.4)?;
    scan("null", &column, (-1.0 / root2, 1.0 / root2), 0.6)?;
    scan("null", &column, (-1.0 / root2, -1.0 / root2), 0.6)?;
    println!("smooth control:");
    scan("timelike", &localizer, (1.0, 0.0), 0.6)?;
    scan("null", &localizer, (-1.0 / root2, 1.0 / root2), 0.6)?;
    Ok(())
}
