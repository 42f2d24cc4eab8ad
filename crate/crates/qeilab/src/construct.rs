//! Explicit constructions underlying the bounds: the two-branch spectral
//! symbol, the two-chart atlas on the cylinder with a quadratic partition of
//! unity, the half-delta comparison kernel u with its bound constant C', the
//! derivative kernel w, and the assembly of reference constants.

use num_complex::Complex64;

use crate::error::{QeiError, Result};
use crate::grid::{
    fourier_samples, plateau_profile, spectral_derivative, Axis, LineGrid, SpacetimeGrid,
    SpectralSamples, TestFunction,
};
use crate::kernels::KernelMatrix;

/// Two-branch frequency symbol `v_hat(k) = 1/2 (1+k^2)^{-l}` for k > 0 and
/// `1 - 1/2 (1+k^2)^{-l}` for k <= 0. Assumes order l >= 1.
pub fn v_hat(l: u32, k: f64) -> f64 {
    let base = 0.5 * (1.0 + k * k).powi(-(l as i32));
    if k > 0.0 {
        base
    } else {
        1.0 - base
    }
}

/// The symbol together with its order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectralSymbol {
    pub order: u32,
}

impl SpectralSymbol {
    pub fn new(order: u32) -> Result<Self> {
        if order < 1 {
            return Err(QeiError::InvalidParameter("symbol order must be >= 1".into()));
        }
        Ok(SpectralSymbol { order })
    }

    pub fn value(&self, k: f64) -> f64 {
        v_hat(self.order, k)
    }

    /// Symbol values on a fftshifted frequency lattice of even length.
    ///
    /// The unpaired negative-Nyquist slot (index 0) takes the symmetrized value
    /// 1/2: the positive Nyquist frequency aliases onto the same lattice
    /// phases, and the exchange identity `v_hat(k) + v_hat(-k) = 1` then holds
    /// exactly on the lattice. The value still dominates
    /// `1/2 (1+k^2)^{-l}`, so no certificate is weakened.
    pub fn on_lattice(&self, freqs: &[f64]) -> Vec<f64> {
        freqs
            .iter()
            .enumerate()
            .map(|(i, &k)| if i == 0 { 0.5 } else { self.value(k) })
            .collect()
    }
}

/// Inverse transform of the symbol restricted to the lattice of a line grid;
/// used for decay and cone scans.
pub fn build_v(l: u32, lg: &LineGrid) -> Result<Vec<Complex64>> {
    let sym = SpectralSymbol::new(l)?;
    let kmax = lg.freqs().iter().fold(0.0f64, |m, k| m.max(k.abs()));
    if kmax < 8.0 {
        return Err(QeiError::InvalidParameter(format!(
            "frequency lattice must resolve |k| <= 8, reaches only {kmax:.2}"
        )));
    }
    let spec: Vec<Complex64> = lg
        .freqs()
        .iter()
        .zip(sym.on_lattice(&lg.freqs()))
        .map(|(_, v)| Complex64::new(v, 0.0))
        .collect();
    Ok(lg.inverse(&spec))
}

/// One angular chart: an arc domain, the angle-unwrapping coordinate map
/// (affine in time) and the cutoff samples. The volume density is identically
/// one on the flat cylinder.
#[derive(Debug, Clone)]
pub struct Chart {
    /// Arc center angle.
    pub center: f64,
    /// Arc half width (strictly below half the circumference).
    pub arc_radius: f64,
    /// Cutoff samples on the grid, real and nonnegative.
    pub cutoff: Vec<f64>,
}

impl Chart {
    /// Chart coordinate of an angle: unwrapped to (center - L/2, center + L/2].
    pub fn unwrap_coord(&self, grid: &SpacetimeGrid, x: f64) -> f64 {
        self.center + grid.wrap(x - self.center)
    }

    /// Constant chart volume density.
    pub fn density(&self) -> f64 {
        1.0
    }
}

/// Two overlapping angular charts whose squared cutoffs sum to one on the
/// covered region (a time band times the full circle).
#[derive(Debug, Clone)]
pub struct ChartAtlas {
    pub grid: SpacetimeGrid,
    /// Covered time interval; the full circle is covered spatially.
    pub covered: (f64, f64),
    pub charts: Vec<Chart>,
}

impl ChartAtlas {
    /// Max deviation of `sum_j chi_j^2` from 1 over grid nodes in the covered
    /// region.
    pub fn partition_defect(&self) -> f64 {
        let g = self.grid;
        let mut defect = 0.0f64;
        for i in 0..g.nt {
            let t = g.time(i);
            if t < self.covered.0 || t > self.covered.1 {
                continue;
            }
            for j in 0..g.nx {
                let a = g.site(i, j);
                let s: f64 = self.charts.iter().map(|c| c.cutoff[a] * c.cutoff[a]).sum();
                defect = defect.max((s - 1.0).abs());
            }
        }
        defect
    }

    fn partition_sum_at(&self, a: usize) -> f64 {
        self.charts.iter().map(|c| c.cutoff[a] * c.cutoff[a]).sum()
    }
}

/// Build the two-chart cylinder atlas covering a time band.
pub fn build_atlas_cylinder(grid: &SpacetimeGrid, covered: (f64, f64)) -> Result<ChartAtlas> {
    let (t0, t1) = covered;
    let t_half = grid.half_width;
    if !(t0 < t1) {
        return Err(QeiError::InvalidParameter("covered time interval is empty".into()));
    }
    let margin = (t0 + t_half).min(t_half - t1);
    if !(margin > 0.0) {
        return Err(QeiError::CoverageFailure(
            "covered region touches the time boundary".into(),
        ));
    }
    // use most of the remaining margin: the wider the time ramp, the steeper
    // its spectrum, which keeps the chart cutoffs resolvable on the grid
    let band = 0.8 * margin;
    let l = grid.circumference;
    let centers = [0.0, 0.5 * l];
    // inner cores of half-width L/4 cover the circle; outer arcs stay strictly
    // inside half the circle so each cutoff is compactly supported in its chart
    let inner_r = 0.25 * l;
    let outer_r = 0.45 * l;
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(2);
    for &c in &centers {
        let mut vals = Vec::with_capacity(grid.n_sites());
        for i in 0..grid.nt {
            let t = grid.time(i);
            let tau = plateau_profile(t, (t0 - band, t1 + band), (t0, t1));
            for j in 0..grid.nx {
                let u = grid.wrap(grid.space(j) - c);
                let p = plateau_profile(u, (-outer_r, outer_r), (-inner_r, inner_r));
                vals.push(tau * p);
            }
        }
        raw.push(vals);
    }
    // quadratic normalization: chi_j = tau p_j / sqrt(p_1^2 + p_2^2)
    let n = grid.n_sites();
    // spatial normalizer per column: chi_j = tau p_j / sqrt(p_1^2 + p_2^2),
    // so the squared cutoffs sum to tau^2, identically 1 on the covered band
    let mut spatial_norm = Vec::with_capacity(grid.nx);
    for j in 0..grid.nx {
        let x = grid.space(j);
        let q: f64 = centers
            .iter()
            .map(|&c| {
                let p = plateau_profile(grid.wrap(x - c), (-outer_r, outer_r), (-inner_r, inner_r));
                p * p
            })
            .sum();
        if q <= 0.0 {
            return Err(QeiError::CoverageFailure(format!(
                "spatial cores fail to cover angle {x}"
            )));
        }
        spatial_norm.push(q.sqrt());
    }
    let mut charts = Vec::with_capacity(2);
    for (ci, &c) in centers.iter().enumerate() {
        let mut cutoff = Vec::with_capacity(n);
        for a in 0..n {
            cutoff.push(raw[ci][a] / spatial_norm[a % grid.nx]);
        }
        charts.push(Chart {
            center: c,
            arc_radius: outer_r,
            cutoff,
        });
    }
    Ok(ChartAtlas {
        grid: *grid,
        covered,
        charts,
    })
}

fn check_real(f: &TestFunction, what: &str) -> Result<Vec<f64>> {
    let scale = f.max_abs().max(f64::MIN_POSITIVE);
    for v in &f.values {
        if v.im.abs() > 1e-12 * scale {
            return Err(QeiError::InvalidParameter(format!("{what} must be real-valued")));
        }
    }
    Ok(f.values.iter().map(|v| v.re).collect())
}

fn check_inputs(
    f: Option<&TestFunction>,
    envelope: &TestFunction,
    atlas: &ChartAtlas,
) -> Result<Vec<f64>> {
    if envelope.grid != atlas.grid {
        return Err(QeiError::GridMismatch);
    }
    let env = check_real(envelope, "envelope")?;
    let env_scale = env.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    // partition of unity must hold wherever the envelope is active
    for (a, &e) in env.iter().enumerate() {
        if e.abs() > 1e-12 * env_scale {
            let s = atlas.partition_sum_at(a);
            if (s - 1.0).abs() > 1e-10 {
                return Err(QeiError::CoverageFailure(format!(
                    "partition sum {s} at an active envelope site"
                )));
            }
        }
    }
    if let Some(f) = f {
        if f.grid != atlas.grid {
            return Err(QeiError::GridMismatch);
        }
        let f_scale = f.max_abs().max(f64::MIN_POSITIVE);
        for (a, v) in f.values.iter().enumerate() {
            if v.norm() > 1e-12 * f_scale && env[a] <= 0.0 {
                return Err(QeiError::SupportViolation(
                    "test function support escapes the positive envelope region".into(),
                ));
            }
        }
    }
    Ok(env)
}

/// Time-lattice tables `T_r(dt_idx) = sum_m sym_m k_m^r exp(i k_m dt)` indexed
/// by `dt_idx + Nt - 1`.
fn time_tables(grid: &SpacetimeGrid, sym: &[f64], max_power: usize) -> Vec<Vec<Complex64>> {
    let kt = grid.time_freqs();
    let nt = grid.nt;
    let mut tables = vec![vec![Complex64::new(0.0, 0.0); 2 * nt - 1]; max_power + 1];
    for di in -(nt as isize - 1)..=(nt as isize - 1) {
        let dt = di as f64 * grid.dt;
        let idx = (di + nt as isize - 1) as usize;
        for (m, &k) in kt.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, k * dt);
            let mut kp = 1.0;
            for table in tables.iter_mut() {
                table[idx] += phase * (sym[m] * kp);
                kp *= k;
            }
        }
    }
    tables
}

/// Spatial-lattice tables `S_r(dj) = sum_n k_n^r exp(i k_n dj dx)` indexed by
/// `dj mod Nx` (periodic because lattice frequencies satisfy k L in 2 pi Z).
fn space_tables(grid: &SpacetimeGrid, max_power: usize) -> Vec<Vec<Complex64>> {
    let kx = grid.space_freqs();
    let nx = grid.nx;
    let mut tables = vec![vec![Complex64::new(0.0, 0.0); nx]; max_power + 1];
    for dj in 0..nx {
        let dx = dj as f64 * grid.dx;
        for &k in &kx {
            let phase = Complex64::from_polar(1.0, k * dx);
            let mut kp = 1.0;
            for table in tables.iter_mut() {
                table[dj] += phase * kp;
                kp *= k;
            }
        }
    }
    tables
}

fn mirror_spec_index(mi: usize, n: usize) -> usize {
    (n - mi) % n
}

/// Transform of `conj(f) . g` looked up at `-k` for lattice `k`.
struct NegatedSpectrum {
    spec: SpectralSamples,
}

impl NegatedSpectrum {
    fn new(grid: &SpacetimeGrid, f: &[Complex64], g: &[f64]) -> Self {
        let prod: Vec<Complex64> = f.iter().zip(g).map(|(a, &b)| a.conj() * b).collect();
        NegatedSpectrum {
            spec: fourier_samples(grid, &prod),
        }
    }

    fn at(&self, mi: usize, ni: usize) -> Complex64 {
        let g = self.spec.grid;
        self.spec
            .value(mirror_spec_index(mi, g.nt), mirror_spec_index(ni, g.nx))
    }
}

/// The half-delta comparison kernel in factorized per-chart form:
/// `U = 1/(2TL) sum_{j,k} vhat(k_t) psi_{j,k} (x) conj(psi_{j,k})` with
/// `psi_{j,k} = envelope chi_j exp(i k.x)`.
#[derive(Debug, Clone)]
pub struct HalfDeltaKernel {
    pub grid: SpacetimeGrid,
    pub order: u32,
    /// Per chart: envelope times cutoff.
    pub chart_fns: Vec<Vec<f64>>,
}

impl HalfDeltaKernel {
    pub fn assemble(
        f: &TestFunction,
        envelope: &TestFunction,
        atlas: &ChartAtlas,
        l: u32,
    ) -> Result<Self> {
        SpectralSymbol::new(l)?;
        let env = check_inputs(Some(f), envelope, atlas)?;
        let chart_fns = atlas
            .charts
            .iter()
            .map(|c| env.iter().zip(&c.cutoff).map(|(&e, &x)| e * x).collect())
            .collect();
        Ok(HalfDeltaKernel {
            grid: atlas.grid,
            order: l,
            chart_fns,
        })
    }

    fn norm_factor(&self) -> f64 {
        1.0 / (2.0 * self.grid.half_width * self.grid.circumference)
    }

    /// Densify by summing the frequency lattice per chart (the spatial phase
    /// factors collapse through the lattice identity `k L in 2 pi Z`, leaving
    /// per-axis tables).
    pub fn to_dense(&self) -> KernelMatrix {
        let g = self.grid;
        let sym = SpectralSymbol { order: self.order }.on_lattice(&g.time_freqs());
        let t0 = &time_tables(&g, &sym, 0)[0];
        let s0 = &space_tables(&g, 0)[0];
        let n = g.n_sites();
        let mut values = vec![Complex64::new(0.0, 0.0); n * n];
        let norm = self.norm_factor();
        for gj in &self.chart_fns {
            for a in 0..n {
                let (ia, ja) = (a / g.nx, a % g.nx);
                if gj[a] == 0.0 {
                    continue;
                }
                for b in 0..n {
                    if gj[b] == 0.0 {
                        continue;
                    }
                    let (ib, jb) = (b / g.nx, b % g.nx);
                    let ti = (ia as isize - ib as isize + g.nt as isize - 1) as usize;
                    let sj = (ja + g.nx - jb) % g.nx;
                    values[a * n + b] += t0[ti] * s0[sj] * (gj[a] * gj[b] * norm);
                }
            }
        }
        KernelMatrix::from_grid_density(g, values).unwrap()
    }

    /// `pair(U, f, f)` straight from the factorization; real and nonnegative
    /// up to roundoff.
    pub fn quadratic_form(&self, f: &[Complex64]) -> f64 {
        let g = self.grid;
        let sym = SpectralSymbol { order: self.order }.on_lattice(&g.time_freqs());
        let norm = self.norm_factor();
        let mut acc = 0.0;
        for gj in &self.chart_fns {
            let neg = NegatedSpectrum::new(&g, f, gj);
            for mi in 0..g.nt {
                let s = sym[mi];
                for ni in 0..g.nx {
                    acc += s * neg.at(mi, ni).norm_sqr();
                }
            }
        }
        acc * norm
    }
}

/// Build the half-delta kernel as a dense matrix.
pub fn build_u(
    f: &TestFunction,
    envelope: &TestFunction,
    atlas: &ChartAtlas,
    l: u32,
) -> Result<KernelMatrix> {
    Ok(HalfDeltaKernel::assemble(f, envelope, atlas, l)?.to_dense())
}

/// The constant of the comparison estimate:
/// `C' = 2 n max_j sum_k (1+k_t^2)^l |[chi_j f/envelope]^(k)|^2 / (2 T L)`.
pub fn bound_constant_cprime(
    f: &TestFunction,
    envelope: &TestFunction,
    atlas: &ChartAtlas,
    l: u32,
) -> Result<f64> {
    SpectralSymbol::new(l)?;
    let env = check_inputs(Some(f), envelope, atlas)?;
    let g = atlas.grid;
    let ftilde: Vec<Complex64> = f
        .values
        .iter()
        .zip(&env)
        .map(|(v, &e)| if e != 0.0 { v / e } else { Complex64::new(0.0, 0.0) })
        .collect();
    let kt = g.time_freqs();
    let n_charts = atlas.charts.len() as f64;
    let mut max_integral: f64 = 0.0;
    for chart in &atlas.charts {
        let h: Vec<Complex64> = ftilde
            .iter()
            .zip(&chart.cutoff)
            .map(|(v, &x)| v * x)
            .collect();
        let spec = fourier_samples(&g, &h);
        // marginal over the time frequency, for the decay check at the edge
        let mut marginal = vec![0.0f64; g.nt];
        for (mi, &w) in kt.iter().enumerate() {
            let weight = (1.0 + w * w).powi(l as i32);
            for ni in 0..g.nx {
                marginal[mi] += weight * spec.value(mi, ni).norm_sqr();
            }
        }
        let peak = marginal.iter().fold(0.0f64, |m, &v| m.max(v));
        let edge = marginal[0].max(marginal[g.nt - 1]);
        if peak > 0.0 && edge > 1e-2 * peak {
            return Err(QeiError::DivergentIntegrand(format!(
                "edge/peak marginal ratio {:.3e} at the time-frequency lattice boundary; raise the time resolution",
                edge / peak
            )));
        }
        max_integral = max_integral.max(marginal.iter().sum());
    }
    Ok(2.0 * n_charts * max_integral / (2.0 * g.half_width * g.circumference))
}

/// An orthonormal frame on the flat cylinder; components are coefficients of
/// (d/dt, d/dx).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthonormalFrame {
    pub e1: (f64, f64),
    pub e2: (f64, f64),
}

impl Default for OrthonormalFrame {
    fn default() -> Self {
        OrthonormalFrame {
            e1: (1.0, 0.0),
            e2: (0.0, 1.0),
        }
    }
}

/// The derivative comparison kernel in factorized form:
/// `W = 1/(2TL) sum_{j,k,a} vhat_{l+1}(k_t) phi (x) conj(phi)` with
/// `phi = (e_a d)(envelope chi_j exp(i k.x))`, the derivative acting on the
/// whole chart factor so W is a manifest sum of squares.
#[derive(Debug, Clone)]
pub struct DerivativeKernel {
    pub grid: SpacetimeGrid,
    /// Symbol order actually used: the requested order plus one.
    pub order: u32,
    pub frame: OrthonormalFrame,
    /// Per chart: the chart factor G = envelope * chi_j.
    pub chart_fns: Vec<Vec<f64>>,
    /// Per chart: frame derivatives (e_a d) G for a = 1, 2.
    pub chart_derivs: Vec<[Vec<f64>; 2]>,
}

impl DerivativeKernel {
    pub fn assemble(
        envelope: &TestFunction,
        atlas: &ChartAtlas,
        frame: OrthonormalFrame,
        l: u32,
    ) -> Result<Self> {
        SpectralSymbol::new(l)?;
        let env = check_inputs(None, envelope, atlas)?;
        let g = atlas.grid;
        let mut chart_fns = Vec::new();
        let mut chart_derivs = Vec::new();
        for c in &atlas.charts {
            let gj: Vec<f64> = env.iter().zip(&c.cutoff).map(|(&e, &x)| e * x).collect();
            let gj_c: Vec<Complex64> = gj.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let dt: Vec<f64> = spectral_derivative(&g, &gj_c, Axis::Time)
                .iter()
                .map(|v| v.re)
                .collect();
            let dx: Vec<f64> = spectral_derivative(&g, &gj_c, Axis::Space)
                .iter()
                .map(|v| v.re)
                .collect();
            let combine = |e: (f64, f64)| -> Vec<f64> {
                dt.iter().zip(&dx).map(|(&a, &b)| e.0 * a + e.1 * b).collect()
            };
            chart_derivs.push([combine(frame.e1), combine(frame.e2)]);
            chart_fns.push(gj);
        }
        Ok(DerivativeKernel {
            grid: g,
            order: l + 1,
            frame,
            chart_fns,
            chart_derivs,
        })
    }

    fn norm_factor(&self) -> f64 {
        1.0 / (2.0 * self.grid.half_width * self.grid.circumference)
    }

    pub fn to_dense(&self) -> KernelMatrix {
        let g = self.grid;
        let sym = SpectralSymbol { order: self.order }.on_lattice(&g.time_freqs());
        let t = time_tables(&g, &sym, 2);
        let s = space_tables(&g, 2);
        let n = g.n_sites();
        let mut values = vec![Complex64::new(0.0, 0.0); n * n];
        let norm = self.norm_factor();
        let frame_vectors = [self.frame.e1, self.frame.e2];
        for (gj, derivs) in self.chart_fns.iter().zip(&self.chart_derivs) {
            for (fv, ej) in frame_vectors.iter().zip(derivs.iter()) {
                let (alpha, beta) = *fv;
                for a in 0..n {
                    let (ia, ja) = (a / g.nx, a % g.nx);
                    let (ga, ea) = (gj[a], ej[a]);
                    if ga == 0.0 && ea == 0.0 {
                        continue;
                    }
                    for b in 0..n {
                        let (gb, eb) = (gj[b], ej[b]);
                        if gb == 0.0 && eb == 0.0 {
                            continue;
                        }
                        let (ib, jb) = (b / g.nx, b % g.nx);
                        let ti = (ia as isize - ib as isize + g.nt as isize - 1) as usize;
                        let sj = (ja + g.nx - jb) % g.nx;
                        let phase00 = t[0][ti] * s[0][sj];
                        let phase10 = t[1][ti] * s[0][sj];
                        let phase01 = t[0][ti] * s[1][sj];
                        let phase20 = t[2][ti] * s[0][sj];
                        let phase11 = t[1][ti] * s[1][sj];
                        let phase02 = t[0][ti] * s[2][sj];
                        let linear = phase10 * alpha + phase01 * beta;
                        let square = phase20 * (alpha * alpha)
                            + phase11 * (2.0 * alpha * beta)
                            + phase02 * (beta * beta);
                        let mut entry = phase00 * (ea * eb);
                        entry += Complex64::new(0.0, 1.0) * linear * (ga * eb - ea * gb);
                        entry += square * (ga * gb);
                        values[a * n + b] += entry * norm;
                    }
                }
            }
        }
        KernelMatrix::from_grid_density(g, values).unwrap()
    }

    /// `pair(W, f, f)` from the factorization; real and nonnegative up to
    /// roundoff.
    pub fn quadratic_form(&self, f: &[Complex64]) -> f64 {
        let g = self.grid;
        let sym = SpectralSymbol { order: self.order }.on_lattice(&g.time_freqs());
        let kt = g.time_freqs();
        let kx = g.space_freqs();
        let norm = self.norm_factor();
        let frame_vectors = [self.frame.e1, self.frame.e2];
        let mut acc = 0.0;
        for (gj, derivs) in self.chart_fns.iter().zip(&self.chart_derivs) {
            let neg_g = NegatedSpectrum::new(&g, f, gj);
            for (fv, ej) in frame_vectors.iter().zip(derivs.iter()) {
                let (alpha, beta) = *fv;
                let neg_e = NegatedSpectrum::new(&g, f, ej);
                for mi in 0..g.nt {
                    let s = sym[mi];
                    for ni in 0..g.nx {
                        let kdot = alpha * kt[mi] + beta * kx[ni];
                        let amp = neg_e.at(mi, ni)
                            + Complex64::new(0.0, kdot) * neg_g.at(mi, ni);
                        acc += s * amp.norm_sqr();
                    }
                }
            }
        }
        acc * norm
    }
}

/// Build the derivative kernel as a dense matrix (symbol order used is l + 1).
pub fn build_w(
    envelope: &TestFunction,
    atlas: &ChartAtlas,
    frame: OrthonormalFrame,
    l: u32,
) -> Result<KernelMatrix> {
    Ok(DerivativeKernel::assemble(envelope, atlas, frame, l)?.to_dense())
}

/// Assembled constants of the energy bound.
#[derive(Debug, Clone, Copy)]
pub struct BoundConstants {
    pub c_prime: f64,
    /// C = C' / m^2.
    pub big_c: f64,
    /// Reference pairing with the half-delta kernel.
    pub c0: f64,
    /// Reference pairing with the derivative kernel.
    pub c2: f64,
    /// Configured cross-term discrepancy budget.
    pub delta_max: f64,
    /// c = m^2 c0 + c2 + delta_max.
    pub c: f64,
    pub mass: f64,
}

pub fn assemble_constants(
    c_prime: f64,
    c0: f64,
    c2: f64,
    mass: f64,
    delta_max: f64,
) -> Result<BoundConstants> {
    if !(mass > 0.0) {
        return Err(QeiError::InvalidParameter(format!("mass must be positive, got {mass}")));
    }
    for (name, v) in [("C'", c_prime), ("c0", c0), ("c2", c2), ("delta_max", delta_max)] {
        if !v.is_finite() {
            return Err(QeiError::NonFinite(format!("constant {name}")));
        }
    }
    Ok(BoundConstants {
        c_prime,
        big_c: c_prime / (mass * mass),
        c0,
        c2,
        delta_max,
        c: mass * mass * c0 + c2 + delta_max,
        mass,
    })
}
