//! Grids on the flat cylinder, smooth compactly supported test functions,
//! mollifiers and discrete Fourier analysis with continuum normalization.
//!
//! The spacetime is the flat cylinder R x S^1 with metric signature
//! diag(+1, -1) in coordinates (t, x). All operations are pure; values are
//! immutable after construction.

use num_complex::Complex64;

use crate::error::{QeiError, Result};

/// Smooth standard bump profile `exp(-1/(1-r^2))` on |r| < 1, zero outside.
pub fn bump_profile(r: f64) -> f64 {
    if r.abs() < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Integral of `bump_profile` over [-1, 1], computed once by composite Simpson.
pub fn bump_profile_mass() -> f64 {
    static MASS: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *MASS.get_or_init(|| simpson(bump_profile, -1.0, 1.0, 1 << 14))
}

/// Composite Simpson quadrature with `n` (even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0 && n >= 2);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Smooth monotone ramp: integrated bump, exactly 0 for s <= -1 and exactly 1
/// for s >= 1.
pub fn bump_ramp(s: f64) -> f64 {
    if s <= -1.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        simpson(bump_profile, -1.0, s, 1 << 11) / bump_profile_mass()
    }
}

/// Error function, rational approximation (Abramowitz & Stegun 7.1.26 form),
/// absolute error below 1.5e-7.
fn erf_approx(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Reach (in standard deviations) of the clipped error-function ramp.
const GAUSS_RAMP_REACH: f64 = 3.5;

/// Monotone ramp with near-Gaussian spectral decay: a renormalized
/// error-function step, clipped to exactly 0 for s <= -1 and exactly 1 for
/// s >= 1.  The underlying Gaussian has standard deviation `1/3.5` in ramp
/// units, so a ramp of width `w` contributes spectral tails like
/// `exp(-(w k / 7)^2 / 2)` — far steeper than the integrated bump, whose
/// tails only fall off like `exp(-c sqrt(w k))`.
pub fn gauss_ramp(s: f64) -> f64 {
    if s <= -1.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let c = GAUSS_RAMP_REACH / std::f64::consts::SQRT_2;
        let edge = erf_approx(c);
        (erf_approx(c * s) + edge) / (2.0 * edge)
    }
}

/// Uniform sampling of a time window times a circle.
///
/// Node coordinates are `t_i = -T + (i + 1/2) dt` and `x_j = j dx`; the site
/// quadrature weight is `dt * dx`. Sites are flattened row-major as
/// `a = i * nx + j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimeGrid {
    /// Circumference L of the spatial circle.
    pub circumference: f64,
    /// Half-width T of the time window (-T, T).
    pub half_width: f64,
    pub nt: usize,
    pub nx: usize,
    pub dt: f64,
    pub dx: f64,
    /// Quadrature weight per site, `dt * dx`.
    pub w_site: f64,
}

/// Build a grid, rejecting odd or too-small sample counts and non-positive
/// extents. DFT symmetry handling requires `nt, nx >= 8` and even.
pub fn make_grid(circumference: f64, half_width: f64, nt: usize, nx: usize) -> Result<SpacetimeGrid> {
    if !(circumference > 0.0) || !(half_width > 0.0) {
        return Err(QeiError::InvalidParameter(format!(
            "grid extents must be positive, got L={circumference}, T={half_width}"
        )));
    }
    for (name, n) in [("Nt", nt), ("Nx", nx)] {
        if n < 8 {
            return Err(QeiError::InvalidParameter(format!("{name}={n} below minimum 8")));
        }
        if n % 2 != 0 {
            return Err(QeiError::InvalidParameter(format!("{name}={n} must be even")));
        }
    }
    let dt = 2.0 * half_width / nt as f64;
    let dx = circumference / nx as f64;
    Ok(SpacetimeGrid {
        circumference,
        half_width,
        nt,
        nx,
        dt,
        dx,
        w_site: dt * dx,
    })
}

impl SpacetimeGrid {
    pub fn n_sites(&self) -> usize {
        self.nt * self.nx
    }

    pub fn time(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.dt
    }

    pub fn space(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    pub fn site(&self, i: usize, j: usize) -> usize {
        i * self.nx + j
    }

    pub fn site_coords(&self, a: usize) -> (f64, f64) {
        (self.time(a / self.nx), self.space(a % self.nx))
    }

    /// Time frequency lattice `2 pi m / (2T)` for signed `m` in [-Nt/2, Nt/2).
    pub fn time_freqs(&self) -> Vec<f64> {
        let base = std::f64::consts::PI / self.half_width;
        (0..self.nt).map(|i| (i as isize - (self.nt / 2) as isize) as f64 * base).collect()
    }

    /// Spatial frequency lattice `2 pi n / L` for signed `n` in [-Nx/2, Nx/2).
    pub fn space_freqs(&self) -> Vec<f64> {
        let base = 2.0 * std::f64::consts::PI / self.circumference;
        (0..self.nx).map(|j| (j as isize - (self.nx / 2) as isize) as f64 * base).collect()
    }

    /// Frequency cell volume of the lattice.
    pub fn freq_cell(&self) -> f64 {
        (std::f64::consts::PI / self.half_width) * (2.0 * std::f64::consts::PI / self.circumference)
    }

    /// Signed distance on the circle, wrapped to [-L/2, L/2).
    pub fn wrap(&self, dx: f64) -> f64 {
        let l = self.circumference;
        let mut d = dx % l;
        if d < -l / 2.0 {
            d += l;
        } else if d >= l / 2.0 {
            d -= l;
        }
        d
    }
}

/// Declared support of a test function: a time interval times a spatial arc
/// (possibly the full circle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialSupport {
    FullCircle,
    Arc { center: f64, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportBox {
    pub t_min: f64,
    pub t_max: f64,
    pub spatial: SpatialSupport,
}

impl SupportBox {
    pub fn contains(&self, grid: &SpacetimeGrid, t: f64, x: f64) -> bool {
        if t < self.t_min || t > self.t_max {
            return false;
        }
        match self.spatial {
            SpatialSupport::FullCircle => true,
            SpatialSupport::Arc { center, radius } => grid.wrap(x - center).abs() <= radius,
        }
    }
}

/// How a test function was constructed; carries closed-form parameters where
/// available.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionOrigin {
    Bump {
        center: (f64, f64),
        time_radius: f64,
        space_radius: Option<f64>,
    },
    Plateau {
        inner: Box2,
        outer: Box2,
    },
    Synthetic,
}

/// An axis-aligned box: a time interval times a spatial arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2 {
    pub t_min: f64,
    pub t_max: f64,
    pub spatial: SpatialSupport,
}

/// Complex samples on a spacetime grid with a declared support box.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub grid: SpacetimeGrid,
    pub values: Vec<Complex64>,
    pub support: SupportBox,
    pub origin: FunctionOrigin,
}

impl TestFunction {
    pub fn zero(grid: SpacetimeGrid) -> Self {
        TestFunction {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n_sites()],
            support: SupportBox {
                t_min: 0.0,
                t_max: 0.0,
                spatial: SpatialSupport::FullCircle,
            },
            origin: FunctionOrigin::Synthetic,
        }
    }

    pub fn from_fn<F: Fn(f64, f64) -> Complex64>(grid: SpacetimeGrid, support: SupportBox, f: F) -> Self {
        let mut values = Vec::with_capacity(grid.n_sites());
        for i in 0..grid.nt {
            for j in 0..grid.nx {
                values.push(f(grid.time(i), grid.space(j)));
            }
        }
        TestFunction {
            grid,
            values,
            support,
            origin: FunctionOrigin::Synthetic,
        }
    }

    pub fn from_real_fn<F: Fn(f64, f64) -> f64>(grid: SpacetimeGrid, support: SupportBox, f: F) -> Self {
        Self::from_fn(grid, support, |t, x| Complex64::new(f(t, x), 0.0))
    }

    /// Site quadrature `sum f * w_site`.
    pub fn quadrature(&self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for v in &self.values {
            acc += v;
        }
        acc * self.grid.w_site
    }

    /// Weighted L2 inner product `<f, g> = sum conj(f) g w_site`.
    pub fn inner(&self, other: &TestFunction) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(QeiError::GridMismatch);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a.conj() * b;
        }
        Ok(acc * self.grid.w_site)
    }

    pub fn scaled(&self, s: Complex64) -> TestFunction {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    /// Pointwise product; the support shrinks to this function's box.
    pub fn product(&self, other: &TestFunction) -> Result<TestFunction> {
        if self.grid != other.grid {
            return Err(QeiError::GridMismatch);
        }
        let mut out = self.clone();
        for (v, o) in out.values.iter_mut().zip(&other.values) {
            *v *= o;
        }
        out.origin = FunctionOrigin::Synthetic;
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Smooth bump test function, peak-normalized to 1 at its center.
///
/// With `space_radius = None` the function is 1 in space times a time bump
/// (legal because the circle is compact). The scaled radius is elliptical:
/// `rho^2 = (dt/r_t)^2 + (dx/r_x)^2`.
pub fn bump(
    grid: &SpacetimeGrid,
    center: (f64, f64),
    time_radius: f64,
    space_radius: Option<f64>,
) -> Result<TestFunction> {
    let (t0, x0) = center;
    if !(time_radius > 0.0) {
        return Err(QeiError::InvalidParameter("bump time radius must be positive".into()));
    }
    if t0 - time_radius <= -grid.half_width || t0 + time_radius >= grid.half_width {
        return Err(QeiError::SupportViolation(format!(
            "bump time support [{}, {}] leaks out of the open window (-{}, {})",
            t0 - time_radius,
            t0 + time_radius,
            grid.half_width,
            grid.half_width
        )));
    }
    if let Some(rx) = space_radius {
        if !(rx > 0.0) || rx >= grid.circumference / 2.0 {
            return Err(QeiError::InvalidParameter(format!(
                "bump space radius {rx} must lie in (0, L/2)"
            )));
        }
    }
    let spatial = match space_radius {
        None => SpatialSupport::FullCircle,
        Some(rx) => SpatialSupport::Arc { center: x0, radius: rx },
    };
    let support = SupportBox {
        t_min: t0 - time_radius,
        t_max: t0 + time_radius,
        spatial,
    };
    let g = *grid;
    let tf = TestFunction::from_real_fn(g, support, move |t, x| {
        let rt2 = ((t - t0) / time_radius).powi(2);
        let rho2 = match space_radius {
            None => rt2,
            Some(rx) => rt2 + (g.wrap(x - x0) / rx).powi(2),
        };
        if rho2 < 1.0 {
            // peak-normalized: exp(1) * exp(-1/(1-rho^2)) = 1 at rho = 0
            (1.0 - 1.0 / (1.0 - rho2)).exp()
        } else {
            0.0
        }
    });
    let mut tf = tf;
    tf.origin = FunctionOrigin::Bump {
        center,
        time_radius,
        space_radius,
    };
    Ok(tf)
}

fn ramp_between(x: f64, lo: f64, hi: f64) -> f64 {
    // 0 at x <= lo, 1 at x >= hi, monotone in between; the steep-spectrum
    // ramp keeps plateau-based cutoffs resolvable on coarse grids
    gauss_ramp(2.0 * (x - lo) / (hi - lo) - 1.0)
}

/// 1-d plateau: exactly 1 on `inner`, exactly 0 outside `outer`, smooth and
/// monotone on the transition bands.
pub fn plateau_profile(x: f64, outer: (f64, f64), inner: (f64, f64)) -> f64 {
    ramp_between(x, outer.0, inner.0) * (1.0 - ramp_between(x, inner.1, outer.1))
}

fn axis_plateau(x: f64, outer: (f64, f64), inner: (f64, f64)) -> f64 {
    plateau_profile(x, outer, inner)
}

/// Smooth real plateau: exactly 1 on `inner`, exactly 0 outside `outer`,
/// monotone transitions, built from integrated bumps.
pub fn plateau(grid: &SpacetimeGrid, inner: Box2, outer: Box2) -> Result<TestFunction> {
    if !(outer.t_min < inner.t_min && inner.t_min <= inner.t_max && inner.t_max < outer.t_max) {
        return Err(QeiError::InvalidParameter(
            "plateau inner time interval must be strictly inside the outer one".into(),
        ));
    }
    match (inner.spatial, outer.spatial) {
        (SpatialSupport::FullCircle, SpatialSupport::FullCircle) => {}
        (SpatialSupport::Arc { center: ci, radius: ri }, SpatialSupport::Arc { center: co, radius: ro }) => {
            let off = grid.wrap(ci - co).abs();
            if !(off + ri < ro) {
                return Err(QeiError::InvalidParameter(
                    "plateau inner arc must be strictly inside the outer arc".into(),
                ));
            }
            if ro >= grid.circumference / 2.0 {
                return Err(QeiError::InvalidParameter(
                    "plateau outer arc must fit inside half the circle; use FullCircle otherwise".into(),
                ));
            }
        }
        _ => {
            return Err(QeiError::InvalidParameter(
                "plateau inner and outer boxes must both be arcs or both full circle".into(),
            ));
        }
    }
    let g = *grid;
    let inner_c = inner;
    let outer_c = outer;
    let mut tf = TestFunction::from_real_fn(
        g,
        SupportBox {
            t_min: outer.t_min,
            t_max: outer.t_max,
            spatial: outer.spatial,
        },
        move |t, x| {
            let pt = axis_plateau(t, (outer_c.t_min, outer_c.t_max), (inner_c.t_min, inner_c.t_max));
            let px = match (inner_c.spatial, outer_c.spatial) {
                (SpatialSupport::FullCircle, SpatialSupport::FullCircle) => 1.0,
                (
                    SpatialSupport::Arc { center: ci, radius: ri },
                    SpatialSupport::Arc { center: co, radius: ro },
                ) => {
                    // unwrap relative to the outer arc center
                    let u = g.wrap(x - co);
                    let ui = g.wrap(ci - co);
                    axis_plateau(u, (-ro, ro), (ui - ri, ui + ri))
                }
                _ => unreachable!(),
            };
            pt * px
        },
    );
    tf.origin = FunctionOrigin::Plateau { inner, outer };
    Ok(tf)
}

/// Real test function concentrated in time: a Gaussian of width `sigma`
/// multiplied by a smooth time plateau (1 on `inner`, 0 outside `outer`),
/// constant around the spatial circle.  The Gaussian core keeps the
/// time-frequency spectrum steep while the plateau enforces compact support.
pub fn gaussian_window(
    grid: &SpacetimeGrid,
    sigma: f64,
    inner: (f64, f64),
    outer: (f64, f64),
) -> Result<TestFunction> {
    if !(sigma > 0.0) {
        return Err(QeiError::InvalidParameter(format!(
            "gaussian width must be positive, got {sigma}"
        )));
    }
    if !(outer.0 < inner.0 && inner.0 <= inner.1 && inner.1 < outer.1) {
        return Err(QeiError::InvalidParameter(
            "gaussian window inner interval must be strictly inside the outer one".into(),
        ));
    }
    if outer.0 <= -grid.half_width || outer.1 >= grid.half_width {
        return Err(QeiError::SupportViolation(
            "gaussian window support reaches the time boundary".into(),
        ));
    }
    Ok(TestFunction::from_real_fn(
        *grid,
        SupportBox {
            t_min: outer.0,
            t_max: outer.1,
            spatial: SpatialSupport::FullCircle,
        },
        move |t, _| {
            (-t * t / (2.0 * sigma * sigma)).exp() * axis_plateau(t, outer, inner)
        },
    ))
}

/// Spectral samples of a test function on the grid frequency lattice.
#[derive(Debug, Clone)]
pub struct SpectralSamples {
    pub grid: SpacetimeGrid,
    /// Row-major over (time frequency index, space frequency index).
    pub values: Vec<Complex64>,
    pub kt: Vec<f64>,
    pub kx: Vec<f64>,
}

impl SpectralSamples {
    pub fn value(&self, mi: usize, ni: usize) -> Complex64 {
        self.values[mi * self.grid.nx + ni]
    }
}

/// Forward transform `fhat(k) = sum_sites f exp(-i k.x) w_site` on the grid
/// frequency lattice, with continuum normalization (plain, non-Lorentzian dot
/// product in chart coordinates).
pub fn fourier(f: &TestFunction) -> SpectralSamples {
    fourier_samples(&f.grid, &f.values)
}

/// Forward transform of raw flattened samples on a grid.
pub fn fourier_samples(grid: &SpacetimeGrid, samples: &[Complex64]) -> SpectralSamples {
    let g = *grid;
    let f_values = samples;
    let kt = g.time_freqs();
    let kx = g.space_freqs();
    // phase tables keep the trig work at O(N^2) while the summation order
    // stays exactly as in the direct double loop
    let space_phase: Vec<Complex64> = kx
        .iter()
        .flat_map(|&k| (0..g.nx).map(move |j| (k, j)))
        .map(|(k, j)| Complex64::from_polar(1.0, -k * g.space(j)))
        .collect();
    let time_phase: Vec<Complex64> = kt
        .iter()
        .flat_map(|&w| (0..g.nt).map(move |i| (w, i)))
        .map(|(w, i)| Complex64::from_polar(1.0, -w * g.time(i)))
        .collect();
    // separable: first transform rows in space, then columns in time
    let mut row_spec = vec![Complex64::new(0.0, 0.0); g.nt * g.nx];
    for i in 0..g.nt {
        for ni in 0..g.nx {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..g.nx {
                acc += f_values[g.site(i, j)] * space_phase[ni * g.nx + j];
            }
            row_spec[i * g.nx + ni] = acc;
        }
    }
    let mut values = vec![Complex64::new(0.0, 0.0); g.nt * g.nx];
    for mi in 0..g.nt {
        for ni in 0..g.nx {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..g.nt {
                acc += row_spec[i * g.nx + ni] * time_phase[mi * g.nt + i];
            }
            values[mi * g.nx + ni] = acc * g.w_site;
        }
    }
    SpectralSamples { grid: g, values, kt, kx }
}

/// Inverse transform; `inverse(fourier(f)) == f` to roundoff.
pub fn inverse_fourier(spec: &SpectralSamples) -> TestFunction {
    let g = spec.grid;
    let norm = 1.0 / (2.0 * g.half_width * g.circumference);
    let mut row = vec![Complex64::new(0.0, 0.0); g.nt * g.nx];
    for (mi, &w) in spec.kt.iter().enumerate() {
        for i in 0..g.nt {
            let phase = Complex64::from_polar(1.0, w * g.time(i));
            for ni in 0..g.nx {
                row[i * g.nx + ni] += spec.values[mi * g.nx + ni] * phase;
            }
        }
    }
    let mut values = vec![Complex64::new(0.0, 0.0); g.nt * g.nx];
    for i in 0..g.nt {
        for j in 0..g.nx {
            let mut acc = Complex64::new(0.0, 0.0);
            for (ni, &k) in spec.kx.iter().enumerate() {
                acc += row[i * g.nx + ni] * Complex64::from_polar(1.0, k * g.space(j));
            }
            values[g.site(i, j)] = acc * norm;
        }
    }
    TestFunction {
        grid: g,
        values,
        support: SupportBox {
            t_min: -g.half_width,
            t_max: g.half_width,
            spatial: SpatialSupport::FullCircle,
        },
        origin: FunctionOrigin::Synthetic,
    }
}

/// Evaluate the forward transform at one arbitrary (non-lattice) frequency by
/// direct summation.
pub fn fourier_at(f: &TestFunction, kt: f64, kx: f64) -> Complex64 {
    let g = f.grid;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..g.nt {
        let t = g.time(i);
        let mut racc = Complex64::new(0.0, 0.0);
        for j in 0..g.nx {
            racc += f.values[g.site(i, j)] * Complex64::from_polar(1.0, -kx * g.space(j));
        }
        acc += racc * Complex64::from_polar(1.0, -kt * t);
    }
    acc * g.w_site
}

/// Normalized mollifier profile: product of 1-d standard bumps with unit
/// integral, supported in the unit box.
#[derive(Debug, Clone)]
pub struct Mollifier {
    /// 1-d normalization `1 / int bump_profile`.
    inv_mass_1d: f64,
}

impl Default for Mollifier {
    fn default() -> Self {
        Mollifier::standard()
    }
}

impl Mollifier {
    pub fn standard() -> Self {
        Mollifier {
            inv_mass_1d: 1.0 / bump_profile_mass(),
        }
    }

    /// Profile value `eta(t, x)`, nonnegative with unit integral.
    pub fn profile(&self, t: f64, x: f64) -> f64 {
        bump_profile(t) * bump_profile(x) * self.inv_mass_1d * self.inv_mass_1d
    }

    /// Scaled profile `eta_lambda(x) = lambda^{-d} eta(x / lambda)` with d = 2.
    pub fn scaled(&self, lambda: f64, t: f64, x: f64) -> f64 {
        self.profile(t / lambda, x / lambda) / (lambda * lambda)
    }

    /// Separable discrete kernel at scale `lambda` on the grid, renormalized to
    /// unit discrete mass per axis so convolution preserves quadrature exactly.
    pub fn grid_kernel(&self, grid: &SpacetimeGrid, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let min_spacing = grid.dt.max(grid.dx);
        if lambda <= min_spacing {
            return Err(QeiError::UnresolvedScale {
                lambda,
                spacing: min_spacing,
            });
        }
        let half_t = (lambda / grid.dt).ceil() as usize;
        let mut kt = Vec::with_capacity(2 * half_t + 1);
        for o in -(half_t as isize)..=(half_t as isize) {
            kt.push(bump_profile(o as f64 * grid.dt / lambda));
        }
        let st: f64 = kt.iter().sum();
        for v in &mut kt {
            *v /= st;
        }
        let half_x = (lambda / grid.dx).ceil() as usize;
        let mut kx = Vec::with_capacity(2 * half_x + 1);
        for o in -(half_x as isize)..=(half_x as isize) {
            kx.push(bump_profile(o as f64 * grid.dx / lambda));
        }
        let sx: f64 = kx.iter().sum();
        for v in &mut kx {
            *v /= sx;
        }
        Ok((kt, kx))
    }
}

/// Discrete convolution with `eta_lambda`: circular in space, zero-padded in
/// time. Preserves total quadrature for functions supported away from the time
/// boundary.
pub fn mollify(f: &TestFunction, mollifier: &Mollifier, lambda: f64) -> Result<TestFunction> {
    let g = f.grid;
    let (kt, kx) = mollifier.grid_kernel(&g, lambda)?;
    let values = mollify_samples(&g, &f.values, &kt, &kx);
    let widen_t = (kt.len() / 2) as f64 * g.dt;
    let widen_x = (kx.len() / 2) as f64 * g.dx;
    let spatial = match f.support.spatial {
        SpatialSupport::FullCircle => SpatialSupport::FullCircle,
        SpatialSupport::Arc { center, radius } => {
            let r = radius + widen_x;
            if r >= g.circumference / 2.0 {
                SpatialSupport::FullCircle
            } else {
                SpatialSupport::Arc { center, radius: r }
            }
        }
    };
    Ok(TestFunction {
        grid: g,
        values,
        support: SupportBox {
            t_min: (f.support.t_min - widen_t).max(-g.half_width),
            t_max: (f.support.t_max + widen_t).min(g.half_width),
            spatial,
        },
        origin: FunctionOrigin::Synthetic,
    })
}

/// Separable convolution pass over flattened grid samples. Shared with the
/// kernel mollification in the kernels module.
pub fn mollify_samples(g: &SpacetimeGrid, values: &[Complex64], kt: &[f64], kx: &[f64]) -> Vec<Complex64> {
    let half_t = (kt.len() / 2) as isize;
    let half_x = (kx.len() / 2) as isize;
    // spatial pass, circular
    let mut tmp = vec![Complex64::new(0.0, 0.0); values.len()];
    for i in 0..g.nt {
        for j in 0..g.nx as isize {
            let mut acc = Complex64::new(0.0, 0.0);
            for (oi, &w) in kx.iter().enumerate() {
                let o = oi as isize - half_x;
                let jj = (j - o).rem_euclid(g.nx as isize) as usize;
                acc += values[g.site(i, jj)] * w;
            }
            tmp[g.site(i, j as usize)] = acc;
        }
    }
    // time pass, zero-padded
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    for i in 0..g.nt as isize {
        for j in 0..g.nx {
            let mut acc = Complex64::new(0.0, 0.0);
            for (oi, &w) in kt.iter().enumerate() {
                let o = oi as isize - half_t;
                let ii = i - o;
                if ii >= 0 && (ii as usize) < g.nt {
                    acc += tmp[g.site(ii as usize, j)] * w;
                }
            }
            out[g.site(i as usize, j)] = acc;
        }
    }
    out
}

/// Axis selector for grid derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Time,
    Space,
}

/// Spectral derivative of grid samples along one axis (the time window is
/// treated as a 2T-periodic interval, accurate for samples vanishing near the
/// window boundary).
pub fn spectral_derivative(grid: &SpacetimeGrid, values: &[Complex64], axis: Axis) -> Vec<Complex64> {
    let mut spec = fourier_samples(grid, values);
    for (mi, &kt) in spec.kt.clone().iter().enumerate() {
        for (ni, &kx) in spec.kx.clone().iter().enumerate() {
            let k = match axis {
                Axis::Time => kt,
                Axis::Space => kx,
            };
            spec.values[mi * grid.nx + ni] *= Complex64::new(0.0, k);
        }
    }
    inverse_fourier(&spec).values
}

/// Uniform 1-d lattice on an interval [-X, X], used for the spectral symbol
/// diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineGrid {
    pub half_width: f64,
    pub n: usize,
    pub dx: f64,
}

impl LineGrid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0) || n < 8 || n % 2 != 0 {
            return Err(QeiError::InvalidParameter(format!(
                "line grid needs positive half width and even n >= 8, got X={half_width}, n={n}"
            )));
        }
        Ok(LineGrid {
            half_width,
            n,
            dx: 2.0 * half_width / n as f64,
        })
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + (j as f64 + 0.5) * self.dx
    }

    /// Frequency lattice `pi m / X` for signed m in [-n/2, n/2).
    pub fn freqs(&self) -> Vec<f64> {
        let base = std::f64::consts::PI / self.half_width;
        (0..self.n).map(|j| (j as isize - (self.n / 2) as isize) as f64 * base).collect()
    }

    pub fn freq_cell(&self) -> f64 {
        std::f64::consts::PI / self.half_width
    }

    pub fn fourier(&self, values: &[Complex64]) -> Vec<Complex64> {
        self.freqs()
            .iter()
            .map(|&k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, v) in values.iter().enumerate() {
                    acc += v * Complex64::from_polar(1.0, -k * self.node(j));
                }
                acc * self.dx
            })
            .collect()
    }

    pub fn fourier_at(&self, values: &[Complex64], k: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, v) in values.iter().enumerate() {
            acc += v * Complex64::from_polar(1.0, -k * self.node(j));
        }
        acc * self.dx
    }

    pub fn inverse(&self, spec: &[Complex64]) -> Vec<Complex64> {
        let freqs = self.freqs();
        let norm = 1.0 / (2.0 * self.half_width);
        (0..self.n)
            .map(|j| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (m, &k) in freqs.iter().enumerate() {
                    acc += spec[m] * Complex64::from_polar(1.0, k * self.node(j));
                }
                acc * norm
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_grid_arithmetic() {
        let g = make_grid(2.0 * std::f64::consts::PI, 4.0, 64, 64).unwrap();
        assert!((g.dt - 0.125).abs() < 1e-15);
        assert!((g.dx - 2.0 * std::f64::consts::PI / 64.0).abs() < 1e-15);
    }

    #[test]
    fn make_grid_rejects_odd_counts() {
        assert!(make_grid(2.0 * std::f64::consts::PI, 4.0, 7, 64).is_err());
        assert!(make_grid(1.0, 1.0, 8, 9).is_err());
        assert!(make_grid(-1.0, 1.0, 8, 8).is_err());
        assert!(make_grid(1.0, 1.0, 4, 8).is_err());
    }

    #[test]
    fn w_site_value() {
        let g = make_grid(1.0, 1.0, 8, 8).unwrap();
        assert!((g.w_site - 0.25 * 0.125).abs() < 1e-15);
    }

    #[test]
    fn bump_peak_and_support() {
        let g = make_grid(2.0 * std::f64::consts::PI, 4.0, 16, 16).unwrap();
        // place the center exactly on a node
        let t0 = g.time(8);
        let x0 = g.space(4);
        let f = bump(&g, (t0, x0), 1.0, Some(1.0)).unwrap();
        assert!((f.values[g.site(8, 4)].re - 1.0).abs() < 1e-15);
        // outside support box: exactly zero
        for i in 0..g.nt {
            for j in 0..g.nx {
                let (t, x) = (g.time(i), g.space(j));
                if !f.support.contains(&g, t, x) {
                    assert_eq!(f.values[g.site(i, j)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn bump_rejects_leaky_support() {
        let g = make_grid(2.0 * std::f64::consts::PI, 1.0, 16, 16).unwrap();
        assert!(bump(&g, (0.5, 0.0), 0.8, None).is_err());
    }

    #[test]
    fn fourier_constant_window_spatial_spectrum() {
        let g = make_grid(2.0 * std::f64::consts::PI, 4.0, 16, 16).unwrap();
        let f = bump(&g, (0.0, 0.0), 1.0, None).unwrap();
        let spec = fourier(&f);
        // constant in space: spatial spectrum supported at n = 0
        for mi in 0..g.nt {
            for (ni, &k) in spec.kx.iter().enumerate() {
                if k != 0.0 {
                    assert!(spec.value(mi, ni).norm() < 1e-10 * g.circumference);
                }
            }
        }
        // value at n = 0 equals L times the 1-d time transform
        let ni0 = spec.kx.iter().position(|&k| k == 0.0).unwrap();
        let mut time_sum = Complex64::new(0.0, 0.0);
        for i in 0..g.nt {
            time_sum += f.values[g.site(i, 0)];
        }
        let expected = time_sum * g.dt * g.circumference;
        let got = spec.value(g.nt / 2, ni0);
        assert!((got - expected).norm() < 1e-10 * expected.norm());
    }

    #[test]
    fn fourier_inversion_roundtrip() {
        let g = make_grid(3.0, 2.0, 16, 8).unwrap();
        let f = bump(&g, (0.2, 1.1), 0.9, Some(1.2)).unwrap();
        let back = inverse_fourier(&fourier(&f));
        let scale = f.max_abs();
        for (a, b) in f.values.iter().zip(&back.values) {
            assert!((a - b).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn parseval() {
        let g = make_grid(3.0, 2.0, 16, 16).unwrap();
        let f = bump(&g, (-0.3, 0.7), 1.0, Some(1.0)).unwrap();
        let site: f64 = f.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.w_site;
        let spec = fourier(&f);
        let freq: f64 = spec.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
            / (2.0 * g.half_width * g.circumference);
        assert!((site - freq).abs() <= 1e-8 * site);
    }

    #[test]
    fn plateau_exact_inside_and_outside() {
        let g = make_grid(2.0 * std::f64::consts::PI, 4.0, 32, 32).unwrap();
        let inner = Box2 {
            t_min: -1.0,
            t_max: 1.0,
            spatial: SpatialSupport::Arc { center: 2.0, radius: 0.8 },
        };
        let outer = Box2 {
            t_min: -2.5,
            t_max: 2.5,
            spatial: SpatialSupport::Arc { center: 2.0, radius: 2.0 },
        };
        let f = plateau(&g, inner, outer).unwrap();
        for i in 0..g.nt {
            for j in 0..g.nx {
                let (t, x) = (g.time(i), g.space(j));
                let v = f.values[g.site(i, j)].re;
                assert!((0.0..=1.0).contains(&v));
                let din = t >= inner.t_min
                    && t <= inner.t_max
                    && g.wrap(x - 2.0).abs() <= 0.8;
                let dout = t < outer.t_min || t > outer.t_max || g.wrap(x - 2.0).abs() > 2.0;
                if din {
                    assert_eq!(v, 1.0, "inside inner box at ({t}, {x})");
                }
                if dout {
                    assert_eq!(v, 0.0, "outside outer box at ({t}, {x})");
                }
            }
        }
    }

    #[test]
    fn plateau_monotone_transition() {
        let g = make_grid(2.0 * std::f64::consts::PI, 4.0, 64, 8).unwrap();
        let inner = Box2 {
            t_min: -1.0,
            t_max: 1.0,
            spatial: SpatialSupport::FullCircle,
        };
        let outer = Box2 {
            t_min: -3.0,
            t_max: 3.0,
            spatial: SpatialSupport::FullCircle,
        };
        let f = plateau(&g, inner, outer).unwrap();
        // scan the rising band along the time axis at fixed x
        let mut prev = -1.0;
        for i in 0..g.nt {
            let t = g.time(i);
            if t > -3.0 && t < -1.0 {
                let v = f.values[g.site(i, 0)].re;
                assert!(v >= prev, "transition not monotone at t={t}");
                prev = v;
            }
        }
        assert!(prev > 0.9);
    }

    #[test]
    fn plateau_rejects_non_nested() {
        let g = make_grid(2.0 * std::f64::consts::PI, 4.0, 16, 16).unwrap();
        let inner = Box2 {
            t_min: -3.0,
            t_max: 3.0,
            spatial: SpatialSupport::FullCircle,
        };
        let outer = Box2 {
            t_min: -2.0,
            t_max: 2.0,
            spatial: SpatialSupport::FullCircle,
        };
        assert!(plateau(&g, inner, outer).is_err());
    }

    #[test]
    fn plateau_times_bump_is_bump() {
        let g = make_grid(2.0 * std::f64::consts::PI, 4.0, 24, 24).unwrap();
        let f = bump(&g, (0.0, 3.0), 1.0, Some(1.0)).unwrap();
        let inner = Box2 {
            t_min: -1.0,
            t_max: 1.0,
            spatial: SpatialSupport::Arc { center: 3.0, radius: 1.0 },
        };
        let outer = Box2 {
            t_min: -3.0,
            t_max: 3.0,
            spatial: SpatialSupport::Arc { center: 3.0, radius: 2.5 },
        };
        let big = plateau(&g, inner, outer).unwrap();
        let prod = big.product(&f).unwrap();
        for (a, b) in prod.values.iter().zip(&f.values) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mollifier_profile_unit_mass() {
        let m = Mollifier::standard();
        // fine 2-d quadrature of the profile
        let n = 400;
        let h = 2.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let t = -1.0 + (i as f64 + 0.5) * h;
                let x = -1.0 + (j as f64 + 0.5) * h;
                acc += m.profile(t, x) * h * h;
            }
        }
        assert!((acc - 1.0).abs() < 1e-10, "profile mass {acc}");
        assert!(m.profile(0.3, -0.2) >= 0.0);
        assert_eq!(m.profile(1.1, 0.0), 0.0);
    }

    #[test]
    fn mollify_preserves_quadrature() {
        let g = make_grid(2.0 * std::f64::consts::PI, 4.0, 32, 32).unwrap();
        let f = bump(&g, (0.0, 1.0), 1.0, Some(1.0)).unwrap();
        let before = f.quadrature();
        let out = mollify(&f, &Mollifier::standard(), 0.6).unwrap();
        let after = out.quadrature();
        assert!((before - after).norm() <= 1e-8 * before.norm());
    }

    #[test]
    fn mollify_spike_reproduces_kernel() {
        let g = make_grid(2.0 * std::f64::consts::PI, 4.0, 64, 64).unwrap();
        let m = Mollifier::standard();
        let lambda = 1.0;
        let mut f = TestFunction::zero(g);
        let (ci, cj) = (32usize, 16usize);
        f.values[g.site(ci, cj)] = Complex64::new(1.0, 0.0);
        let out = mollify(&f, &m, lambda).unwrap();
        let (kt, kx) = m.grid_kernel(&g, lambda).unwrap();
        let (ht, hx) = (kt.len() / 2, kx.len() / 2);
        for (oi, &wt) in kt.iter().enumerate() {
            for (oj, &wx) in kx.iter().enumerate() {
                let i = (ci as isize + oi as isize - ht as isize) as usize;
                let j = (cj as isize + oj as isize - hx as isize).rem_euclid(g.nx as isize) as usize;
                let got = out.values[g.site(i, j)].re;
                assert!((got - wt * wx).abs() < 1e-14);
            }
        }
        // at this resolved scale the discrete renormalization is small, so the
        // samples match eta_lambda itself after one cell-volume factor up to
        // the per-axis quadrature error of the renormalizing sums
        let center_direct = m.scaled(lambda, 0.0, 0.0) * g.w_site;
        let center_kernel = kt[ht] * kx[hx];
        assert!((center_direct - center_kernel).abs() < 1e-3 * center_kernel);
    }

    #[test]
    fn mollify_matches_direct_sum_oracle() {
        let g = make_grid(2.0 * std::f64::consts::PI, 3.0, 24, 24).unwrap();
        let m = Mollifier::standard();
        let lambda = 0.7;
        let f = bump(&g, (0.0, 2.0), 1.0, Some(1.2)).unwrap();
        let out = mollify(&f, &m, lambda).unwrap();
        let (kt, kx) = m.grid_kernel(&g, lambda).unwrap();
        let (ht, hx) = (kt.len() / 2, kx.len() / 2);
        // full direct double sum oracle
        for i in 0..g.nt {
            for j in 0..g.nx {
                let mut acc = 0.0;
                for (oi, &wt) in kt.iter().enumerate() {
                    let ii = i as isize - (oi as isize - ht as isize);
                    if ii < 0 || ii >= g.nt as isize {
                        continue;
                    }
                    for (oj, &wx) in kx.iter().enumerate() {
                        let jj = (j as isize - (oj as isize - hx as isize))
                            .rem_euclid(g.nx as isize) as usize;
                        acc += wt * wx * f.values[g.site(ii as usize, jj)].re;
                    }
                }
                assert!((out.values[g.site(i, j)].re - acc).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mollify_rejects_unresolved_scale() {
        let g = make_grid(2.0 * std::f64::consts::PI, 4.0, 16, 16).unwrap();
        let f = bump(&g, (0.0, 0.0), 1.0, None).unwrap();
        let err = mollify(&f, &Mollifier::standard(), 0.01).unwrap_err();
        assert!(matches!(err, QeiError::UnresolvedScale { .. }));
    }

    #[test]
    fn line_grid_roundtrip() {
        let lg = LineGrid::new(8.0, 64).unwrap();
        let values: Vec<Complex64> = (0..lg.n)
            .map(|j| Complex64::new(bump_profile(lg.node(j) / 3.0), 0.0))
            .collect();
        let spec = lg.fourier(&values);
        let back = lg.inverse(&spec);
        for (a, b) in values.iter().zip(&back) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn fourier_at_matches_lattice() {
        let g = make_grid(2.0 * std::f64::consts::PI, 4.0, 16, 16).unwrap();
        let f = bump(&g, (0.0, 1.0), 1.0, Some(1.0)).unwrap();
        let spec = fourier(&f);
        for (mi, &kt) in spec.kt.iter().enumerate().step_by(5) {
            for (ni, &kx) in spec.kx.iter().enumerate().step_by(5) {
                let direct = fourier_at(&f, kt, kx);
                assert!((direct - spec.value(mi, ni)).norm() < 1e-10);
            }
        }
    }
}
