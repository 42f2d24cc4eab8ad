//! Exact mode-sum theory of the massive minimally coupled scalar on the
//! cylinder: mode basis, state variants, two-point functions, Wick square and
//! point-split renormalized stress tensor, plus classical solutions.
//!
//! Conventions: mode functions u_n(t,x) = (2 omega_n L)^{-1/2} e^{-i omega_n t
//! + i k_n x} with k_n = 2 pi n / L and omega_n = sqrt(k_n^2 + m^2).  Smearing
//! uses the conjugate-linear first slot of [`crate::kernels::pair`]:
//! `<f, u> = sum conj(f) u w_site`.  All states are renormalized against the
//! vacuum, so the vacuum Wick square and stress expectation are exactly zero.

use num_complex::Complex64;

use crate::error::{QeiError, Result};
use crate::grid::{SpacetimeGrid, TestFunction};
use crate::kernels::KernelMatrix;

/// Smallest retained thermal occupation factor demanded of the cutoff.
pub const THERMAL_TAIL_TOLERANCE: f64 = 1e-12;

/// Largest occupancy per mode in a particle state.
pub const MAX_OCCUPANCY: usize = 2;

/// Largest number of distinct occupied modes in a particle state.
pub const MAX_OCCUPIED_MODES: usize = 3;

/// Truncated Fourier mode basis on the spatial circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeBasis {
    pub mass: f64,
    pub circumference: f64,
    pub n_max: i64,
}

impl ModeBasis {
    pub fn new(mass: f64, circumference: f64, n_max: i64) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(QeiError::InvalidParameter(format!(
                "mass must be positive and finite, got {mass}"
            )));
        }
        if !(circumference > 0.0) || !circumference.is_finite() {
            return Err(QeiError::InvalidParameter(format!(
                "circumference must be positive, got {circumference}"
            )));
        }
        if n_max < 0 {
            return Err(QeiError::InvalidParameter(format!(
                "mode cutoff must be non-negative, got {n_max}"
            )));
        }
        Ok(ModeBasis { mass, circumference, n_max })
    }

    pub fn momentum(&self, n: i64) -> f64 {
        2.0 * std::f64::consts::PI * n as f64 / self.circumference
    }

    pub fn frequency(&self, n: i64) -> f64 {
        let k = self.momentum(n);
        (k * k + self.mass * self.mass).sqrt()
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        -self.n_max..=self.n_max
    }

    /// Positive-frequency mode function u_n(t,x).
    pub fn mode_function(&self, n: i64, t: f64, x: f64) -> Complex64 {
        let omega = self.frequency(n);
        let k = self.momentum(n);
        let norm = 1.0 / (2.0 * omega * self.circumference).sqrt();
        norm * Complex64::new(0.0, -omega * t + k * x).exp()
    }
}

/// `<f, u_n>` with the conjugate-linear first slot and site weights.
pub fn mode_smear(basis: &ModeBasis, f: &TestFunction, n: i64) -> Complex64 {
    let g = &f.grid;
    let w = g.w_site;
    let mut acc = Complex64::ZERO;
    for a in 0..g.n_sites() {
        let (t, x) = g.site_coords(a);
        acc += f.values[a].conj() * basis.mode_function(n, t, x);
    }
    acc * w
}

/// The four supported Hadamard state families.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpec {
    Vacuum,
    Thermal { beta: f64 },
    /// Finitely many nonzero mode amplitudes `(n, a_n)`.
    Coherent { amplitudes: Vec<(i64, Complex64)> },
    /// Occupation list `(n, multiplicity)`.
    Particles { occupations: Vec<(i64, usize)> },
}

/// Two-point function evaluator for one state over one mode basis.
#[derive(Debug, Clone)]
pub struct TwoPoint {
    pub basis: ModeBasis,
    pub state: StateSpec,
}

/// Validates the state against the basis and builds the evaluator.
pub fn two_point(state: StateSpec, basis: ModeBasis) -> Result<TwoPoint> {
    match &state {
        StateSpec::Vacuum => {}
        StateSpec::Thermal { beta } => {
            if !(*beta > 0.0) || !beta.is_finite() {
                return Err(QeiError::InvalidParameter(format!(
                    "inverse temperature must be positive, got {beta}"
                )));
            }
            let tail = (-beta * basis.frequency(basis.n_max)).exp();
            if tail > THERMAL_TAIL_TOLERANCE {
                return Err(QeiError::CutoffInsufficient(format!(
                    "thermal tail factor {tail:.3e} above {THERMAL_TAIL_TOLERANCE:.0e}; raise the mode cutoff"
                )));
            }
        }
        StateSpec::Coherent { amplitudes } => {
            for &(n, a) in amplitudes {
                if n.abs() > basis.n_max {
                    return Err(QeiError::CutoffInsufficient(format!(
                        "coherent amplitude on mode {n} outside cutoff {}",
                        basis.n_max
                    )));
                }
                if !a.is_finite() {
                    return Err(QeiError::NonFinite("coherent amplitudes".into()));
                }
            }
        }
        StateSpec::Particles { occupations } => {
            if occupations.len() > MAX_OCCUPIED_MODES {
                return Err(QeiError::InvalidParameter(format!(
                    "at most {MAX_OCCUPIED_MODES} occupied modes supported"
                )));
            }
            let mut seen = Vec::new();
            for &(n, m) in occupations {
                if n.abs() > basis.n_max {
                    return Err(QeiError::CutoffInsufficient(format!(
                        "occupied mode {n} outside cutoff {}",
                        basis.n_max
                    )));
                }
                if m == 0 || m > MAX_OCCUPANCY {
                    return Err(QeiError::InvalidParameter(format!(
                        "occupancy {m} outside 1..={MAX_OCCUPANCY}"
                    )));
                }
                if seen.contains(&n) {
                    return Err(QeiError::InvalidParameter(format!(
                        "mode {n} occupied twice"
                    )));
                }
                seen.push(n);
            }
        }
    }
    Ok(TwoPoint { basis, state })
}

/// One positive rank-one correction term `weight * p (x) conj(p)` on a grid.
struct CorrectionTerm {
    weight: f64,
    vector: Vec<Complex64>,
}

impl TwoPoint {
    fn bose_factor(&self, beta: f64, n: i64) -> f64 {
        1.0 / ((beta * self.basis.frequency(n)).exp() - 1.0)
    }

    /// Symmetric mode occupation weight of the state correction: Bose factor
    /// for thermal, multiplicity for particle states, zero otherwise.
    pub fn occupation(&self, n: i64) -> f64 {
        match &self.state {
            StateSpec::Thermal { beta } => self.bose_factor(*beta, n),
            StateSpec::Particles { occupations } => occupations
                .iter()
                .find(|&&(p, _)| p == n)
                .map(|&(_, m)| m as f64)
                .unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// One-point function sampled on a grid.
    pub fn one_point_samples(&self, grid: &SpacetimeGrid) -> Vec<Complex64> {
        self.one_point_values(grid)
    }

    fn mode_values(&self, grid: &SpacetimeGrid, n: i64) -> Vec<Complex64> {
        (0..grid.n_sites())
            .map(|a| {
                let (t, x) = grid.site_coords(a);
                self.basis.mode_function(n, t, x)
            })
            .collect()
    }

    /// One-point function of the state at a point (zero except coherent).
    pub fn one_point(&self, t: f64, x: f64) -> f64 {
        match &self.state {
            StateSpec::Coherent { amplitudes } => amplitudes
                .iter()
                .map(|&(n, a)| 2.0 * (a * self.basis.mode_function(n, t, x)).re)
                .sum(),
            _ => 0.0,
        }
    }

    fn one_point_values(&self, grid: &SpacetimeGrid) -> Vec<Complex64> {
        (0..grid.n_sites())
            .map(|a| {
                let (t, x) = grid.site_coords(a);
                Complex64::new(self.one_point(t, x), 0.0)
            })
            .collect()
    }

    /// The smooth correction `S = omega_2 - omega_2^vac` as a positive
    /// rank-one sum sampled on a grid.
    fn corrections(&self, grid: &SpacetimeGrid) -> Vec<CorrectionTerm> {
        match &self.state {
            StateSpec::Vacuum => Vec::new(),
            StateSpec::Thermal { beta } => {
                let mut out = Vec::new();
                for n in self.basis.modes() {
                    let nb = self.bose_factor(*beta, n);
                    let u = self.mode_values(grid, n);
                    let ubar = u.iter().map(|z| z.conj()).collect();
                    out.push(CorrectionTerm { weight: nb, vector: u });
                    out.push(CorrectionTerm { weight: nb, vector: ubar });
                }
                out
            }
            StateSpec::Coherent { .. } => vec![CorrectionTerm {
                weight: 1.0,
                vector: self.one_point_values(grid),
            }],
            StateSpec::Particles { occupations } => {
                let mut out = Vec::new();
                for &(n, m) in occupations {
                    let u = self.mode_values(grid, n);
                    let ubar = u.iter().map(|z: &Complex64| z.conj()).collect();
                    out.push(CorrectionTerm { weight: m as f64, vector: u });
                    out.push(CorrectionTerm { weight: m as f64, vector: ubar });
                }
                out
            }
        }
    }

    fn smear_vector(f: &TestFunction, v: &[Complex64]) -> Complex64 {
        let w = f.grid.w_site;
        let mut acc = Complex64::ZERO;
        for a in 0..v.len() {
            acc += f.values[a].conj() * v[a];
        }
        acc * w
    }

    /// `pair(omega_2, f, h)` by mode sums, conjugate-linear in `f`.
    pub fn pair_smeared(&self, f: &TestFunction, h: &TestFunction) -> Result<Complex64> {
        if f.grid != h.grid {
            return Err(QeiError::GridMismatch);
        }
        let mut acc = Complex64::ZERO;
        for n in self.basis.modes() {
            acc += mode_smear(&self.basis, f, n) * mode_smear(&self.basis, h, n).conj();
        }
        for term in self.corrections(&f.grid) {
            acc += term.weight
                * Self::smear_vector(f, &term.vector)
                * Self::smear_vector(h, &term.vector).conj();
        }
        Ok(acc)
    }

    /// Samples `omega_2` as a kernel density on the grid.
    pub fn kernel(&self, grid: &SpacetimeGrid) -> Result<KernelMatrix> {
        let mut k = self.vacuum_kernel_values(grid);
        for term in self.corrections(grid) {
            accumulate_rank_one(&mut k, term.weight, &term.vector);
        }
        KernelMatrix::from_grid_density(*grid, k)
    }

    /// Samples the truncated kernel `omega_2 - omega_1 (x) omega_1`.
    pub fn truncated_kernel(&self, grid: &SpacetimeGrid) -> Result<KernelMatrix> {
        let mut k = self.vacuum_kernel_values(grid);
        for term in self.corrections(grid) {
            if !matches!(self.state, StateSpec::Coherent { .. }) {
                accumulate_rank_one(&mut k, term.weight, &term.vector);
            }
        }
        KernelMatrix::from_grid_density(*grid, k)
    }

    fn vacuum_kernel_values(&self, grid: &SpacetimeGrid) -> Vec<Complex64> {
        let ns = grid.n_sites();
        let mut k = vec![Complex64::ZERO; ns * ns];
        for n in self.basis.modes() {
            let u = self.mode_values(grid, n);
            accumulate_rank_one(&mut k, 1.0, &u);
        }
        k
    }
}

fn accumulate_rank_one(k: &mut [Complex64], weight: f64, v: &[Complex64]) {
    let ns = v.len();
    for a in 0..ns {
        let va = weight * v[a];
        let row = &mut k[a * ns..(a + 1) * ns];
        for b in 0..ns {
            row[b] += va * v[b].conj();
        }
    }
}

/// The state-independent commutator pairing `i E(f, h)` from vacuum mode sums.
pub fn commutator_pairing(basis: &ModeBasis, f: &TestFunction, h: &TestFunction) -> Result<Complex64> {
    if f.grid != h.grid {
        return Err(QeiError::GridMismatch);
    }
    let mut acc = Complex64::ZERO;
    for n in basis.modes() {
        let fu = mode_smear(basis, f, n);
        let hu = mode_smear(basis, h, n);
        acc += fu * hu.conj() - hu * fu.conj();
    }
    Ok(acc)
}

/// Relative Klein-Gordon defect of the smeared two-point function.
///
/// Each mode contributes the coefficient `-omega^2 + k^2 + m^2`, with the
/// frequency recomputed through the dispersion relation; the returned value is
/// the smeared residual relative to the same sum with `+omega^2`.
pub fn kg_defect(tp: &TwoPoint, f: &TestFunction, h: &TestFunction) -> Result<f64> {
    if f.grid != h.grid {
        return Err(QeiError::GridMismatch);
    }
    let basis = &tp.basis;
    let m2 = basis.mass * basis.mass;
    let mut residual = Complex64::ZERO;
    let mut scale = 0.0f64;
    let mut per_mode = Vec::new();
    for n in basis.modes() {
        let omega2 = basis.frequency(n).powi(2);
        let k2 = basis.momentum(n).powi(2);
        let fu = mode_smear(basis, f, n);
        let hu = mode_smear(basis, h, n);
        let weight = fu * hu.conj();
        residual += (-omega2 + k2 + m2) * weight;
        scale += (omega2 + k2 + m2) * weight.norm();
        per_mode.push((n, fu, hu));
    }
    // state corrections share the mode structure; coherent adds P omega_1
    match &tp.state {
        StateSpec::Vacuum => {}
        StateSpec::Thermal { beta } => {
            for &(n, fu, hu) in &per_mode {
                let nb = tp.bose_factor(*beta, n);
                let omega2 = basis.frequency(n).powi(2);
                let k2 = basis.momentum(n).powi(2);
                let fubar = mode_smear(basis, f, n).conj();
                let hubar = mode_smear(basis, h, n).conj();
                residual += nb * (-omega2 + k2 + m2) * (fu * hu.conj() + fubar.conj() * hubar);
                scale += 2.0 * nb * (omega2 + k2 + m2) * (fu * hu.conj()).norm();
            }
        }
        StateSpec::Particles { occupations } => {
            for &(n, m) in occupations {
                let omega2 = basis.frequency(n).powi(2);
                let k2 = basis.momentum(n).powi(2);
                let fu = mode_smear(basis, f, n);
                let hu = mode_smear(basis, h, n);
                residual += 2.0 * m as f64 * (-omega2 + k2 + m2) * fu * hu.conj();
                scale += 2.0 * m as f64 * (omega2 + k2 + m2) * (fu * hu.conj()).norm();
            }
        }
        StateSpec::Coherent { amplitudes } => {
            // < f, P omega_1 > conj(< h, omega_1 >) + symmetric term
            let g = &f.grid;
            let w = g.w_site;
            let mut fp = Complex64::ZERO;
            let mut hp = Complex64::ZERO;
            let mut f1 = Complex64::ZERO;
            let mut h1 = Complex64::ZERO;
            let mut sc = 0.0f64;
            for a in 0..g.n_sites() {
                let (t, x) = g.site_coords(a);
                let mut p = 0.0;
                let mut v = 0.0;
                let mut s = 0.0;
                for &(n, amp) in amplitudes {
                    let omega2 = basis.frequency(n).powi(2);
                    let k2 = basis.momentum(n).powi(2);
                    let u = basis.mode_function(n, t, x);
                    p += 2.0 * ((-omega2 + k2 + m2) * amp * u).re;
                    v += 2.0 * (amp * u).re;
                    s += 2.0 * ((omega2 + k2 + m2) * amp * u).norm();
                }
                fp += f.values[a].conj() * p;
                hp += h.values[a].conj() * p;
                f1 += f.values[a].conj() * v;
                h1 += h.values[a].conj() * v;
                sc = sc.max(s);
            }
            residual += w * w * (fp * h1.conj() + f1 * hp.conj());
            scale += w * w * 2.0 * sc.max(1.0) * (f1.norm() * h1.norm()).max(1e-300);
        }
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(residual.norm() / scale)
}

/// Real classical solution stored by its positive-frequency mode amplitudes.
#[derive(Debug, Clone)]
pub struct ClassicalSolution {
    pub basis: ModeBasis,
    pub amplitudes: Vec<(i64, Complex64)>,
}

impl ClassicalSolution {
    pub fn new(basis: ModeBasis, amplitudes: Vec<(i64, Complex64)>) -> Result<Self> {
        for &(n, a) in &amplitudes {
            if n.abs() > basis.n_max {
                return Err(QeiError::CutoffInsufficient(format!(
                    "amplitude on mode {n} outside cutoff {}",
                    basis.n_max
                )));
            }
            if !a.is_finite() {
                return Err(QeiError::NonFinite("solution amplitudes".into()));
            }
        }
        Ok(ClassicalSolution { basis, amplitudes })
    }

    /// Spatially homogeneous solution `A cos(m t)`.
    pub fn zero_mode(basis: ModeBasis, amplitude: f64) -> Result<Self> {
        let a0 = amplitude * (2.0 * basis.mass * basis.circumference).sqrt() / 2.0;
        Self::new(basis, vec![(0, Complex64::new(a0, 0.0))])
    }

    fn sum_with<F: Fn(f64, f64) -> Complex64>(&self, t: f64, x: f64, coeff: F) -> f64 {
        self.amplitudes
            .iter()
            .map(|&(n, a)| {
                let u = self.basis.mode_function(n, t, x);
                2.0 * (coeff(self.basis.frequency(n), self.basis.momentum(n)) * a * u).re
            })
            .sum()
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.sum_with(t, x, |_, _| Complex64::ONE)
    }

    pub fn dt(&self, t: f64, x: f64) -> f64 {
        self.sum_with(t, x, |omega, _| Complex64::new(0.0, -omega))
    }

    pub fn dx(&self, t: f64, x: f64) -> f64 {
        self.sum_with(t, x, |_, k| Complex64::new(0.0, k))
    }

    pub fn dtt(&self, t: f64, x: f64) -> f64 {
        self.sum_with(t, x, |omega, _| Complex64::new(-omega * omega, 0.0))
    }

    pub fn dxx(&self, t: f64, x: f64) -> f64 {
        self.sum_with(t, x, |_, k| Complex64::new(-k * k, 0.0))
    }

    /// Max relative wave-operator residual over the grid, with each derivative
    /// evaluated by its own mode sum.
    pub fn kg_residual(&self, grid: &SpacetimeGrid) -> f64 {
        let m2 = self.basis.mass * self.basis.mass;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for a in 0..grid.n_sites() {
            let (t, x) = grid.site_coords(a);
            let r = self.dtt(t, x) - self.dxx(t, x) + m2 * self.value(t, x);
            worst = worst.max(r.abs());
            scale = scale.max(self.dtt(t, x).abs()).max(m2 * self.value(t, x).abs());
        }
        if scale == 0.0 { 0.0 } else { worst / scale }
    }

    /// Conserved total energy from the mode amplitudes.
    pub fn energy(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|&(n, a)| self.basis.frequency(n) * a.norm_sqr())
            .sum()
    }

    /// Energy on the constant-time slice through grid row `i`, by spatial
    /// quadrature of the energy density.
    pub fn slice_energy(&self, grid: &SpacetimeGrid, i: usize) -> f64 {
        let t = grid.time(i);
        (0..grid.nx)
            .map(|j| classical_stress(self, t, grid.space(j))[0][0] * grid.dx)
            .sum()
    }
}

/// Stress tensor of a classical solution at a point, signature (+,-).
pub fn classical_stress(phi: &ClassicalSolution, t: f64, x: f64) -> [[f64; 2]; 2] {
    let pt = phi.dt(t, x);
    let px = phi.dx(t, x);
    let v = phi.value(t, x);
    let m2 = phi.basis.mass * phi.basis.mass;
    let t00 = 0.5 * (pt * pt + px * px + m2 * v * v);
    let t11 = 0.5 * (pt * pt + px * px - m2 * v * v);
    let t01 = pt * px;
    [[t00, t01], [t01, t11]]
}

/// Stress smearing data: the timelike field is `d/dt` (unit length on the
/// flat cylinder), so the effective weight equals the plateau itself.
#[derive(Debug, Clone)]
pub struct StressSmearing {
    pub weight: TestFunction,
}

impl StressSmearing {
    pub fn new(weight: TestFunction) -> Result<Self> {
        for &v in &weight.values {
            if v.im.abs() > 1e-12 || v.re < -1e-12 || v.re > 1.0 + 1e-12 {
                return Err(QeiError::InvalidParameter(
                    "stress smearing weight must be real with values in [0,1]".into(),
                ));
            }
        }
        Ok(StressSmearing { weight })
    }

    /// Quadrature of the squared weight.
    pub fn square_mass(&self) -> f64 {
        let g = &self.weight.grid;
        self.weight.values.iter().map(|v| v.re * v.re).sum::<f64>() * g.w_site
    }
}

fn require_real(f: &TestFunction, what: &str) -> Result<()> {
    let scale = f.max_abs().max(1e-300);
    for v in &f.values {
        if v.im.abs() > 1e-12 * scale {
            return Err(QeiError::InvalidParameter(format!("{what} must be real")));
        }
    }
    Ok(())
}

/// Wick square of the state smeared with a real density `g`, renormalized
/// against the vacuum.
pub fn wick_square(tp: &TwoPoint, g: &TestFunction) -> Result<f64> {
    require_real(g, "wick square smearing")?;
    let basis = &tp.basis;
    let mass_g = g.quadrature().re;
    match &tp.state {
        StateSpec::Vacuum => Ok(0.0),
        StateSpec::Thermal { beta } => {
            let density: f64 = basis
                .modes()
                .map(|n| tp.bose_factor(*beta, n) / (basis.frequency(n) * basis.circumference))
                .sum();
            Ok(density * mass_g)
        }
        StateSpec::Particles { occupations } => {
            let density: f64 = occupations
                .iter()
                .map(|&(n, m)| m as f64 / (basis.frequency(n) * basis.circumference))
                .sum();
            Ok(density * mass_g)
        }
        StateSpec::Coherent { .. } => {
            let grid = &g.grid;
            let mut acc = 0.0;
            for a in 0..grid.n_sites() {
                let (t, x) = grid.site_coords(a);
                let w1 = tp.one_point(t, x);
                acc += g.values[a].re * w1 * w1;
            }
            Ok(acc * grid.w_site)
        }
    }
}

/// Renormalized energy expectation `integral F^2 <T_00>`, by point-split
/// differentiation of the vacuum-subtracted two-point function.
pub fn stress_expectation(tp: &TwoPoint, smearing: &StressSmearing) -> Result<f64> {
    let basis = &tp.basis;
    match &tp.state {
        StateSpec::Vacuum => Ok(0.0),
        StateSpec::Thermal { beta } => {
            let density: f64 = basis
                .modes()
                .map(|n| tp.bose_factor(*beta, n) * basis.frequency(n) / basis.circumference)
                .sum();
            Ok(density * smearing.square_mass())
        }
        StateSpec::Particles { occupations } => {
            let density: f64 = occupations
                .iter()
                .map(|&(n, m)| m as f64 * basis.frequency(n) / basis.circumference)
                .sum();
            Ok(density * smearing.square_mass())
        }
        StateSpec::Coherent { amplitudes } => {
            // D^split_00 of omega_1 (x) omega_1 at coincidence is the classical
            // energy density of the one-point function
            let sol = ClassicalSolution::new(*basis, amplitudes.clone())?;
            let grid = &smearing.weight.grid;
            let m2 = basis.mass * basis.mass;
            let mut acc = 0.0;
            for a in 0..grid.n_sites() {
                let (t, x) = grid.site_coords(a);
                let f2 = smearing.weight.values[a].re.powi(2);
                if f2 == 0.0 {
                    continue;
                }
                let pt = sol.dt(t, x);
                let px = sol.dx(t, x);
                let v = sol.value(t, x);
                acc += f2 * 0.5 * (pt * pt + px * px + m2 * v * v);
            }
            Ok(acc * grid.w_site)
        }
    }
}

/// `omega(phi(f)^2)` for real `f`.
pub fn smeared_field_square(tp: &TwoPoint, f: &TestFunction) -> Result<f64> {
    require_real(f, "field square smearing")?;
    let v = tp.pair_smeared(f, f)?;
    if v.im.abs() > 1e-10 * v.re.abs().max(1.0) {
        return Err(QeiError::NonFinite(format!(
            "field square acquired imaginary part {:.3e}",
            v.im
        )));
    }
    Ok(v.re)
}

/// Vacuum two-point column anchored at a grid site and cut off by a smooth
/// localizer, for microlocal frequency scans.
pub fn localized_vacuum_column(
    basis: &ModeBasis,
    grid: &SpacetimeGrid,
    anchor: usize,
    localizer: &TestFunction,
) -> Result<TestFunction> {
    if localizer.grid != *grid {
        return Err(QeiError::GridMismatch);
    }
    let (t0, x0) = grid.site_coords(anchor);
    let mut col = TestFunction::zero(*grid);
    col.support = localizer.support;
    for a in 0..grid.n_sites() {
        let (t, x) = grid.site_coords(a);
        let mut v = Complex64::ZERO;
        for n in basis.modes() {
            v += basis.mode_function(n, t, x) * basis.mode_function(n, t0, x0).conj();
        }
        col.values[a] = localizer.values[a] * v;
    }
    Ok(col)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, plateau, Box2, SpatialSupport, SupportBox};
    use crate::kernels::{pair, positivity_check, ConeSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const L: f64 = 2.0 * std::f64::consts::PI;

    fn basis(mass: f64, n_max: i64) -> ModeBasis {
        ModeBasis::new(mass, L, n_max).unwrap()
    }

    fn random_function(g: &crate::grid::SpacetimeGrid, rng: &mut ChaCha8Rng) -> TestFunction {
        let support = SupportBox {
            t_min: -g.half_width,
            t_max: g.half_width,
            spatial: SpatialSupport::FullCircle,
        };
        let mut f = TestFunction::zero(*g);
        f.support = support;
        for v in f.values.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        f
    }

    fn random_real_function(g: &crate::grid::SpacetimeGrid, rng: &mut ChaCha8Rng) -> TestFunction {
        let mut f = random_function(g, rng);
        for v in f.values.iter_mut() {
            *v = Complex64::new(v.re, 0.0);
        }
        f
    }

    fn state_family(rng: &mut ChaCha8Rng) -> Vec<StateSpec> {
        vec![
            StateSpec::Vacuum,
            StateSpec::Thermal { beta: 3.0 },
            StateSpec::Coherent {
                amplitudes: vec![
                    (0, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
                    (1, Complex64::new(rng.gen_range(-1.0..1.0), 0.3)),
                    (-2, Complex64::new(0.2, rng.gen_range(-1.0..1.0))),
                ],
            },
            StateSpec::Particles { occupations: vec![(1, 1), (-1, 2), (0, 1)] },
        ]
    }

    proptest! {
        #[test]
        fn mode_basis_invariants(mass in 0.3f64..3.0, n in -12i64..=12) {
            let b = basis(mass, 12);
            prop_assert!(b.frequency(n) >= mass);
            prop_assert!((b.frequency(n) - b.frequency(-n)).abs() < 1e-14);
            prop_assert!((b.momentum(n) + b.momentum(-n)).abs() < 1e-14);
        }
    }

    #[test]
    fn thermal_cutoff_guard() {
        let b = basis(1.0, 4);
        let r = two_point(StateSpec::Thermal { beta: 0.5 }, b);
        assert!(matches!(r, Err(QeiError::CutoffInsufficient(_))));
        let b = basis(1.0, 80);
        assert!(two_point(StateSpec::Thermal { beta: 0.5 }, b).is_ok());
    }

    #[test]
    fn particle_state_limits() {
        let b = basis(1.0, 8);
        assert!(two_point(StateSpec::Particles { occupations: vec![(1, 3)] }, b).is_err());
        assert!(two_point(
            StateSpec::Particles { occupations: vec![(0, 1), (1, 1), (2, 1), (3, 1)] },
            b
        )
        .is_err());
        assert!(two_point(StateSpec::Particles { occupations: vec![(1, 1), (1, 1)] }, b).is_err());
        assert!(two_point(StateSpec::Particles { occupations: vec![(1, 2), (-3, 1)] }, b).is_ok());
    }

    #[test]
    fn vacuum_pairing_is_positive() {
        let g = make_grid(L, 2.0, 12, 12).unwrap();
        let tp = two_point(StateSpec::Vacuum, basis(1.0, 8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let f = random_function(&g, &mut rng);
            let v = tp.pair_smeared(&f, &f).unwrap();
            assert!(v.re >= -1e-12 * v.re.abs().max(1.0));
            assert!(v.im.abs() <= 1e-10 * v.re.max(1.0));
        }
    }

    #[test]
    fn vacuum_pairing_matches_mode_sum_oracle() {
        let g = make_grid(L, 2.0, 12, 12).unwrap();
        let b = basis(0.7, 6);
        let tp = two_point(StateSpec::Vacuum, b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = random_real_function(&g, &mut rng);
        // direct oracle: sum |<f,u_n>|^2 via explicit site loops, no shared code
        let mut oracle = 0.0;
        for n in -6i64..=6 {
            let omega = ((2.0 * std::f64::consts::PI * n as f64 / L).powi(2) + 0.49).sqrt();
            let k = 2.0 * std::f64::consts::PI * n as f64 / L;
            let mut s = Complex64::ZERO;
            for a in 0..g.n_sites() {
                let (t, x) = g.site_coords(a);
                s += f.values[a].conj()
                    * Complex64::new(0.0, -omega * t + k * x).exp()
                    / (2.0 * omega * L).sqrt();
            }
            oracle += (s * g.w_site).norm_sqr();
        }
        let v = smeared_field_square(&tp, &f).unwrap();
        assert_relative_eq!(v, oracle, max_relative = 1e-12);
    }

    #[test]
    fn field_square_zero_and_thermal_monotone() {
        let g = make_grid(L, 2.0, 12, 12).unwrap();
        let b = basis(1.0, 40);
        let vac = two_point(StateSpec::Vacuum, b).unwrap();
        let th = two_point(StateSpec::Thermal { beta: 1.0 }, b).unwrap();
        assert_eq!(smeared_field_square(&vac, &TestFunction::zero(g)).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_real_function(&g, &mut rng);
        let v0 = smeared_field_square(&vac, &f).unwrap();
        let v1 = smeared_field_square(&th, &f).unwrap();
        assert!(v1 > v0, "thermal {v1} not above vacuum {v0}");
    }

    #[test]
    fn commutator_is_state_independent() {
        let g = make_grid(L, 2.0, 10, 10).unwrap();
        let b = basis(1.0, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let states = state_family(&mut rng);
        // real test functions: state corrections are real symmetric kernels,
        // so they drop out of the antisymmetrized pairing only in that case
        for _ in 0..10 {
            let f = random_real_function(&g, &mut rng);
            let h = random_real_function(&g, &mut rng);
            let reference = commutator_pairing(&b, &f, &h).unwrap();
            let scale = reference.norm().max(1.0);
            for s in &states {
                let tp = two_point(s.clone(), b).unwrap();
                let c = tp.pair_smeared(&f, &h).unwrap() - tp.pair_smeared(&h, &f).unwrap();
                assert!(
                    (c - reference).norm() <= 1e-8 * scale,
                    "commutator defect {:.3e} in {s:?}",
                    (c - reference).norm()
                );
            }
        }
    }

    #[test]
    fn kernels_are_positive_type() {
        let g = make_grid(L, 1.5, 8, 8).unwrap();
        let b = basis(1.0, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in state_family(&mut rng) {
            let tp = two_point(s.clone(), b).unwrap();
            let w = positivity_check(&tp.kernel(&g).unwrap()).unwrap();
            assert!(w.positive, "{s:?}: min eigenvalue {:.3e}", w.min_eigenvalue);
            let wt = positivity_check(&tp.truncated_kernel(&g).unwrap()).unwrap();
            assert!(wt.positive, "{s:?} truncated: {:.3e}", wt.min_eigenvalue);
        }
    }

    #[test]
    fn kernel_agrees_with_smeared_pairing() {
        let g = make_grid(L, 1.5, 8, 8).unwrap();
        let b = basis(1.0, 6);
        let tp = two_point(
            StateSpec::Coherent { amplitudes: vec![(1, Complex64::new(0.5, 0.2))] },
            b,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_function(&g, &mut rng);
        let h = random_function(&g, &mut rng);
        let k = tp.kernel(&g).unwrap();
        let direct = pair(&k, &f, &h).unwrap();
        let smeared = tp.pair_smeared(&f, &h).unwrap();
        assert!((direct - smeared).norm() <= 1e-10 * smeared.norm().max(1.0));
    }

    #[test]
    fn kg_defect_is_tiny_for_all_states() {
        let g = make_grid(L, 2.0, 10, 10).unwrap();
        let b = basis(0.8, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = random_function(&g, &mut rng);
        let h = random_function(&g, &mut rng);
        for s in state_family(&mut rng) {
            let tp = two_point(s.clone(), b).unwrap();
            let d = kg_defect(&tp, &f, &h).unwrap();
            assert!(d <= 1e-6, "{s:?}: defect {d:.3e}");
        }
    }

    #[test]
    fn single_particle_pairing_matches_fock_oracle() {
        // brute-force matrix elements of phi(f) phi(h) in a truncated Fock
        // space over three modes
        let g = make_grid(L, 2.0, 10, 10).unwrap();
        let b = basis(1.0, 1);
        let modes: Vec<i64> = vec![-1, 0, 1];
        let cap = 4usize; // occupancy per mode in the truncated space
        let dim = cap * cap * cap;
        let idx = |o: [usize; 3]| o[0] * cap * cap + o[1] * cap + o[2];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = random_real_function(&g, &mut rng);
        let h = random_real_function(&g, &mut rng);
        let field_matrix = |func: &TestFunction| -> Vec<Complex64> {
            let mut m = vec![Complex64::ZERO; dim * dim];
            for (mi, &n) in modes.iter().enumerate() {
                let amp = mode_smear(&b, func, n);
                for o0 in 0..cap {
                    for o1 in 0..cap {
                        for o2 in 0..cap {
                            let o = [o0, o1, o2];
                            let occ = o[mi];
                            // annihilation: |occ> -> sqrt(occ) |occ-1>
                            if occ > 0 {
                                let mut lo = o;
                                lo[mi] -= 1;
                                m[idx(lo) * dim + idx(o)] += amp * (occ as f64).sqrt();
                            }
                            // creation: |occ> -> sqrt(occ+1) |occ+1>
                            if occ + 1 < cap {
                                let mut hi = o;
                                hi[mi] += 1;
                                m[idx(hi) * dim + idx(o)] += amp.conj() * ((occ + 1) as f64).sqrt();
                            }
                        }
                    }
                }
            }
            m
        };
        let mf = field_matrix(&f);
        let mh = field_matrix(&h);
        // state |1_{n=+1}>: occupancy 1 in modes[2]
        let psi = idx([0, 0, 1]);
        let mut hpsi = vec![Complex64::ZERO; dim];
        for r in 0..dim {
            hpsi[r] = mh[r * dim + psi];
        }
        let mut oracle = Complex64::ZERO;
        for r in 0..dim {
            oracle += mf[psi * dim + r] * hpsi[r];
        }
        let tp = two_point(StateSpec::Particles { occupations: vec![(1, 1)] }, b).unwrap();
        let v = tp.pair_smeared(&f, &h).unwrap();
        assert!(
            (v - oracle).norm() <= 1e-10 * oracle.norm().max(1.0),
            "pair {v} vs Fock oracle {oracle}"
        );
    }

    #[test]
    fn zero_mode_stress_is_constant() {
        let b = basis(1.3, 4);
        let sol = ClassicalSolution::zero_mode(b, 2.0).unwrap();
        let expected = 0.5 * 4.0 * 1.3f64.powi(2);
        for (t, x) in [(0.0, 0.1), (0.7, 3.0), (-1.2, 5.5)] {
            let s = classical_stress(&sol, t, x);
            assert_relative_eq!(s[0][0], expected, max_relative = 1e-12);
            assert!(s[0][1].abs() < 1e-12);
        }
        assert_relative_eq!(sol.value(0.0, 1.0), 2.0, max_relative = 1e-12);
        let zero = ClassicalSolution::new(b, vec![]).unwrap();
        let s = classical_stress(&zero, 0.3, 1.0);
        assert_eq!(s, [[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn stress_energy_is_positive_and_conserved() {
        let g = make_grid(L, 2.0, 16, 24).unwrap();
        let b = basis(0.9, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..4 {
            let amplitudes: Vec<(i64, Complex64)> = [-3i64, -1, 0, 2, 5]
                .iter()
                .map(|&n| (n, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
                .collect();
            let sol = ClassicalSolution::new(b, amplitudes).unwrap();
            assert!(sol.kg_residual(&g) <= 1e-8);
            let e = sol.energy();
            for i in 0..g.nt {
                let es = sol.slice_energy(&g, i);
                assert_relative_eq!(es, e, max_relative = 1e-6);
                let t = g.time(i);
                for j in 0..g.nx {
                    assert!(classical_stress(&sol, t, g.space(j))[0][0] >= 0.0);
                }
            }
        }
    }

    fn plateau_weight(g: &crate::grid::SpacetimeGrid) -> TestFunction {
        plateau(
            g,
            Box2 { t_min: -0.8, t_max: 0.8, spatial: SpatialSupport::FullCircle },
            Box2 { t_min: -1.6, t_max: 1.6, spatial: SpatialSupport::FullCircle },
        )
        .unwrap()
    }

    #[test]
    fn wick_square_closed_forms() {
        let g = make_grid(L, 2.0, 24, 16).unwrap();
        let b = basis(1.0, 40);
        let vac = two_point(StateSpec::Vacuum, b).unwrap();
        let fw = plateau_weight(&g);
        assert_eq!(wick_square(&vac, &fw).unwrap(), 0.0);

        // thermal against a direct Bose sum
        let beta = 1.2;
        let th = two_point(StateSpec::Thermal { beta }, b).unwrap();
        let g1 = fw.scaled(Complex64::new(1.0 / fw.quadrature().re, 0.0));
        let mut oracle = 0.0;
        for n in -40i64..=40 {
            let k = 2.0 * std::f64::consts::PI * n as f64 / L;
            let omega = (k * k + 1.0).sqrt();
            oracle += 1.0 / ((beta * omega).exp() - 1.0) / (omega * L);
        }
        assert_relative_eq!(wick_square(&th, &g1).unwrap(), oracle, max_relative = 1e-8);

        // coherent zero mode against a quadrature of the squared solution
        let amp = 1.5;
        let coh = two_point(
            StateSpec::Coherent {
                amplitudes: vec![(0, Complex64::new(amp * (2.0 * b.mass * L).sqrt() / 2.0, 0.0))],
            },
            b,
        )
        .unwrap();
        let f2 = fw.product(&fw).unwrap();
        let mut quad = 0.0;
        for a in 0..g.n_sites() {
            let (t, _) = g.site_coords(a);
            quad += f2.values[a].re * (amp * (b.mass * t).cos()).powi(2);
        }
        quad *= g.w_site;
        assert_relative_eq!(wick_square(&coh, &f2).unwrap(), quad, max_relative = 1e-10);
    }

    #[test]
    fn stress_expectation_closed_forms() {
        let g = make_grid(L, 2.0, 24, 16).unwrap();
        let b = basis(1.0, 60);
        let sm = StressSmearing::new(plateau_weight(&g)).unwrap();
        let vac = two_point(StateSpec::Vacuum, b).unwrap();
        assert_eq!(stress_expectation(&vac, &sm).unwrap(), 0.0);

        let beta = 0.9;
        let th = two_point(StateSpec::Thermal { beta }, b).unwrap();
        let mut density = 0.0;
        for n in -60i64..=60 {
            let k = 2.0 * std::f64::consts::PI * n as f64 / L;
            let omega = (k * k + 1.0).sqrt();
            density += omega / ((beta * omega).exp() - 1.0) / L;
        }
        assert_relative_eq!(
            stress_expectation(&th, &sm).unwrap(),
            density * sm.square_mass(),
            max_relative = 1e-8
        );
    }

    #[test]
    fn coherent_stress_equals_classical_quadrature() {
        let g = make_grid(L, 2.0, 24, 16).unwrap();
        let b = basis(0.8, 8);
        let sm = StressSmearing::new(plateau_weight(&g)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let amplitudes: Vec<(i64, Complex64)> = [0i64, 1, -2]
                .iter()
                .map(|&n| (n, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
                .collect();
            let tp = two_point(StateSpec::Coherent { amplitudes: amplitudes.clone() }, b).unwrap();
            let sol = ClassicalSolution::new(b, amplitudes).unwrap();
            let mut oracle = 0.0;
            for a in 0..g.n_sites() {
                let (t, x) = g.site_coords(a);
                oracle += sm.weight.values[a].re.powi(2) * classical_stress(&sol, t, x)[0][0];
            }
            oracle *= g.w_site;
            let v = stress_expectation(&tp, &sm).unwrap();
            assert!(
                (v - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
                "stress {v} vs classical quadrature {oracle}"
            );
        }
    }

    #[test]
    fn one_point_values_and_residual() {
        let b = basis(1.0, 4);
        let vac = two_point(StateSpec::Vacuum, b).unwrap();
        assert_eq!(vac.one_point(0.3, 1.0), 0.0);
        let a0 = 2.0 * (2.0 * b.mass * L).sqrt() / 2.0;
        let coh = two_point(
            StateSpec::Coherent { amplitudes: vec![(0, Complex64::new(a0, 0.0))] },
            b,
        )
        .unwrap();
        assert_relative_eq!(coh.one_point(0.0, 2.5), 2.0, max_relative = 1e-12);
        if let StateSpec::Coherent { amplitudes } = &coh.state {
            let sol = ClassicalSolution::new(b, amplitudes.clone()).unwrap();
            let g = make_grid(L, 2.0, 16, 16).unwrap();
            assert!(sol.kg_residual(&g) <= 1e-8);
        }
    }

    #[test]
    fn microlocal_scan_separates_null_directions() {
        let g = make_grid(L, 3.0, 128, 64).unwrap();
        let b = basis(1.0, 20);
        let anchor = g.site(g.nt / 2, g.nx / 4);
        let (t0, x0) = g.site_coords(anchor);
        // Gaussian localizer: its transform tails fall off fast enough for
        // the non-null ladders to settle within the scanned cutoffs
        let sigma = 0.5;
        let localizer = TestFunction::from_real_fn(
            g,
            SupportBox {
                t_min: -g.half_width,
                t_max: g.half_width,
                spatial: SpatialSupport::FullCircle,
            },
            |t, x| {
                let dt = t - t0;
                let dx = g.wrap(x - x0);
                (-(dt * dt + dx * dx) / (2.0 * sigma * sigma)).exp()
            },
        );
        let col = localized_vacuum_column(&b, &g, anchor, &localizer).unwrap();
        let cutoffs = vec![5.0, 10.0, 20.0];
        let root2 = std::f64::consts::SQRT_2;
        let ladder = |dir: (f64, f64), s: f64| {
            let cone = ConeSpec::new(dir, 0.3, s, cutoffs.clone()).unwrap();
            crate::kernels::cone_sobolev_integral(&col, &cone).unwrap()
        };
        for dir in [(1.0, 0.0), (0.0, 1.0)] {
            let lad = ladder(dir, 0.4);
            assert!(lad.bounded, "non-null {dir:?} ladder diverged: {:?}", lad.ratios);
        }
        for dir in [(-1.0 / root2, 1.0 / root2), (-1.0 / root2, -1.0 / root2)] {
            let lad = ladder(dir, 0.6);
            assert!(!lad.bounded, "null {dir:?} ladder converged: {:?}", lad.ratios);
        }
    }
}
