//! Discretized bikernel calculus: pairings against test functions, positive
//! type certificates, Schur products, mollified pairing limits and Sobolev
//! cone-integral diagnostics.

use faer::Mat;
use num_complex::Complex64;

use crate::error::{QeiError, Result};
use crate::grid::{fourier, fourier_at, mollify_samples, LineGrid, Mollifier, SpacetimeGrid, TestFunction};

/// Dense bikernel sampled on (site, site) pairs.
///
/// When `density` is true the entries are densities with respect to the site
/// quadrature weights, so pairings pick up one weight factor per argument.
/// Kernels without a grid act on plain vectors with unit weights.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub grid: Option<SpacetimeGrid>,
    pub n: usize,
    /// Row-major (n x n).
    pub values: Vec<Complex64>,
    pub density: bool,
}

impl KernelMatrix {
    pub fn from_grid_density(grid: SpacetimeGrid, values: Vec<Complex64>) -> Result<Self> {
        let n = grid.n_sites();
        if values.len() != n * n {
            return Err(QeiError::InvalidParameter(format!(
                "kernel needs {} entries, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(KernelMatrix {
            grid: Some(grid),
            n,
            values,
            density: true,
        })
    }

    pub fn from_raw(n: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(QeiError::InvalidParameter(format!(
                "kernel needs {} entries, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(KernelMatrix {
            grid: None,
            n,
            values,
            density: false,
        })
    }

    pub fn from_raw_real(n: usize, values: &[f64]) -> Result<Self> {
        Self::from_raw(n, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Discrete delta with respect to the site measure: pairing with (f, f)
    /// returns the site quadrature of |f|^2.
    pub fn identity_density(grid: SpacetimeGrid) -> Self {
        let n = grid.n_sites();
        let mut values = vec![Complex64::new(0.0, 0.0); n * n];
        let inv_w = 1.0 / grid.w_site;
        for a in 0..n {
            values[a * n + a] = Complex64::new(inv_w, 0.0);
        }
        KernelMatrix {
            grid: Some(grid),
            n,
            values,
            density: true,
        }
    }

    /// Rank-one kernel `g (x) conj(g)`.
    pub fn rank_one(g: &TestFunction) -> Self {
        let n = g.grid.n_sites();
        let mut values = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                values.push(g.values[a] * g.values[b].conj());
            }
        }
        KernelMatrix {
            grid: Some(g.grid),
            n,
            values,
            density: true,
        }
    }

    pub fn at(&self, a: usize, b: usize) -> Complex64 {
        self.values[a * self.n + b]
    }

    /// Quadrature weight attached to one argument slot.
    pub fn weight(&self) -> f64 {
        match (&self.grid, self.density) {
            (Some(g), true) => g.w_site,
            _ => 1.0,
        }
    }

    pub fn scaled(&self, s: Complex64) -> KernelMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &KernelMatrix) -> Result<KernelMatrix> {
        if self.n != other.n || self.grid != other.grid || self.density != other.density {
            return Err(QeiError::GridMismatch);
        }
        let mut out = self.clone();
        for (v, o) in out.values.iter_mut().zip(&other.values) {
            *v += o;
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        for a in 0..self.n {
            for b in a..self.n {
                defect = defect.max((self.at(a, b) - self.at(b, a).conj()).norm());
            }
        }
        defect
    }

    /// Symmetrize in the Hermitian sense: (K + K^H) / 2.
    pub fn hermitized(&self) -> KernelMatrix {
        let mut out = self.clone();
        for a in 0..self.n {
            for b in 0..self.n {
                out.values[a * self.n + b] =
                    (self.at(a, b) + self.at(b, a).conj()) * 0.5;
            }
        }
        out
    }

    /// Weighted Hermitian form `diag(sqrt w) K diag(sqrt w)` as a faer matrix,
    /// Hermitized by averaging.
    fn weighted_form(&self) -> Result<Mat<Complex64>> {
        if self.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(QeiError::NonFinite("kernel entries".into()));
        }
        let w = self.weight();
        Ok(Mat::from_fn(self.n, self.n, |a, b| {
            (self.at(a, b) + self.at(b, a).conj()) * (0.5 * w)
        }))
    }

    /// Quadratic form `pair(K, f, f)` evaluated on raw coefficient vectors
    /// (weights applied per the density flag).
    pub fn quadratic_form(&self, f: &[Complex64]) -> Complex64 {
        let w = self.weight();
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..self.n {
            let mut row = Complex64::new(0.0, 0.0);
            for b in 0..self.n {
                row += self.at(a, b) * f[b];
            }
            acc += f[a].conj() * row;
        }
        acc * (w * w)
    }
}

/// Conjugate-bilinear pairing `sum conj(f_a) K_ab g_b w_a w_b`.
pub fn pair(k: &KernelMatrix, f: &TestFunction, g: &TestFunction) -> Result<Complex64> {
    match k.grid {
        Some(kg) if kg == f.grid && kg == g.grid => {}
        _ => return Err(QeiError::GridMismatch),
    }
    let w = k.weight();
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..k.n {
        let fa = f.values[a].conj();
        if fa == Complex64::new(0.0, 0.0) {
            continue;
        }
        let mut row = Complex64::new(0.0, 0.0);
        for b in 0..k.n {
            row += k.at(a, b) * g.values[b];
        }
        acc += fa * row;
    }
    Ok(acc * (w * w))
}

/// Outcome of a positive type check on the weighted Hermitian form.
#[derive(Debug, Clone, Copy)]
pub struct PositivityWitness {
    pub min_eigenvalue: f64,
    /// Spectral norm of the weighted, Hermitized form.
    pub norm: f64,
    pub tolerance: f64,
    pub positive: bool,
    /// Max entrywise deviation of K from its conjugate transpose.
    pub hermiticity_defect: f64,
}

pub const POSITIVITY_TOLERANCE: f64 = 1e-8;

/// Eigenvalues of the weighted Hermitian form, ascending.
pub fn weighted_eigenvalues(k: &KernelMatrix) -> Result<Vec<f64>> {
    let m = k.weighted_form()?;
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| QeiError::NonFinite(format!("eigendecomposition failed: {e:?}")))?;
    let mut vals: Vec<f64> = evd.S().column_vector().iter().map(|c| c.re).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

pub fn positivity_check(k: &KernelMatrix) -> Result<PositivityWitness> {
    positivity_check_with_tolerance(k, POSITIVITY_TOLERANCE)
}

pub fn positivity_check_with_tolerance(k: &KernelMatrix, tolerance: f64) -> Result<PositivityWitness> {
    let vals = weighted_eigenvalues(k)?;
    let min_eigenvalue = *vals.first().unwrap();
    let norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(PositivityWitness {
        min_eigenvalue,
        norm,
        tolerance,
        positive: min_eigenvalue >= -tolerance * norm.max(f64::MIN_POSITIVE),
        hermiticity_defect: k.hermiticity_defect(),
    })
}

/// Entrywise product; the discrete counterpart of multiplying bidistributions.
pub fn schur_product(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<KernelMatrix> {
    if k1.n != k2.n || k1.grid != k2.grid {
        return Err(QeiError::GridMismatch);
    }
    let mut out = k1.clone();
    for (v, o) in out.values.iter_mut().zip(&k2.values) {
        *v *= o;
    }
    // a density times a density stays a density: pairings still carry one
    // weight per argument, matching the continuum product of distributions
    out.density = k1.density && k2.density;
    Ok(out)
}

/// One term of a Hilbert-Schmidt decomposition: weight and vector.
#[derive(Debug, Clone)]
pub struct HsTerm {
    pub weight: f64,
    pub vector: Vec<Complex64>,
}

/// Spectral decomposition `K = sum x_j psi_j (x) conj(psi_j)` of a
/// positive-type kernel; the vectors are orthonormal in the weighted inner
/// product.
pub fn hs_decompose(k: &KernelMatrix) -> Result<Vec<HsTerm>> {
    let m = k.weighted_form()?;
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| QeiError::NonFinite(format!("eigendecomposition failed: {e:?}")))?;
    let s: Vec<f64> = evd.S().column_vector().iter().map(|c| c.re).collect();
    let norm = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = -POSITIVITY_TOLERANCE * norm.max(f64::MIN_POSITIVE);
    if let Some(&min) = s.iter().min_by(|a, b| a.partial_cmp(b).unwrap()) {
        if min < floor {
            return Err(QeiError::NotPositiveType {
                min_eigenvalue: min,
                tolerance: -floor,
            });
        }
    }
    let u = evd.U();
    let inv_sqrt_w = 1.0 / k.weight().sqrt();
    let mut terms = Vec::new();
    for j in 0..k.n {
        let x = s[j].max(0.0);
        if x == 0.0 {
            continue;
        }
        let vector: Vec<Complex64> = (0..k.n).map(|a| u[(a, j)] * inv_sqrt_w).collect();
        terms.push(HsTerm { weight: x, vector });
    }
    terms.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap());
    Ok(terms)
}

/// Rebuild the kernel from its decomposition (for round-trip checks).
pub fn hs_reconstruct(k_like: &KernelMatrix, terms: &[HsTerm]) -> KernelMatrix {
    let n = k_like.n;
    let mut values = vec![Complex64::new(0.0, 0.0); n * n];
    for t in terms {
        for a in 0..n {
            let va = t.vector[a] * t.weight;
            for b in 0..n {
                values[a * n + b] += va * t.vector[b].conj();
            }
        }
    }
    let mut out = k_like.clone();
    out.values = values;
    out
}

/// Mollify a grid kernel in both arguments with `eta_lambda (x) eta_lambda`.
pub fn mollify_kernel(k: &KernelMatrix, mollifier: &Mollifier, lambda: f64) -> Result<KernelMatrix> {
    let g = k
        .grid
        .ok_or_else(|| QeiError::InvalidParameter("mollification needs a grid-borne kernel".into()))?;
    let (kt, kx) = mollifier.grid_kernel(&g, lambda)?;
    let n = k.n;
    // second argument: mollify each row as a grid function
    let mut stage = vec![Complex64::new(0.0, 0.0); n * n];
    for a in 0..n {
        let row = &k.values[a * n..(a + 1) * n];
        let out = mollify_samples(&g, row, &kt, &kx);
        stage[a * n..(a + 1) * n].copy_from_slice(&out);
    }
    // first argument: mollify each column
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    let mut values = stage.clone();
    for b in 0..n {
        for a in 0..n {
            col[a] = stage[a * n + b];
        }
        let out = mollify_samples(&g, &col, &kt, &kx);
        for a in 0..n {
            values[a * n + b] = out[a];
        }
    }
    let mut out = k.clone();
    out.values = values;
    Ok(out)
}

/// Ladder of mollified cross pairings `p(lambda)` and a convergence report.
#[derive(Debug, Clone)]
pub struct MollifiedPairingReport {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    /// |p(lambda_{r+1}) - p(lambda_r)|.
    pub diffs: Vec<f64>,
    pub value: f64,
    pub convergent: bool,
}

/// Cross pairing of two kernels under simultaneous mollification:
/// `p(lambda) = sum K1^l_ab K2^l_ab w_a w_b` along a decreasing lambda ladder.
pub fn mollified_pairing_limit(
    k1: &KernelMatrix,
    k2: &KernelMatrix,
    mollifier: &Mollifier,
    lambdas: &[f64],
) -> Result<MollifiedPairingReport> {
    if k1.n != k2.n || k1.grid != k2.grid {
        return Err(QeiError::GridMismatch);
    }
    if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(QeiError::InvalidParameter(
            "lambda ladder must be nonempty and strictly decreasing".into(),
        ));
    }
    let w1 = k1.weight();
    let w2 = k2.weight();
    let cross = |a: &KernelMatrix, b: &KernelMatrix| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, y) in a.values.iter().zip(&b.values) {
            acc += x * y;
        }
        (acc * (w1 * w2)).re
    };
    let mut values = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let m1 = mollify_kernel(k1, mollifier, l)?;
        let m2 = mollify_kernel(k2, mollifier, l)?;
        values.push(cross(&m1, &m2));
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let noise = 1e-12 * scale.max(1e-300);
    let convergent = diffs
        .windows(2)
        .all(|w| w[1] <= w[0] || w[1] <= noise);
    Ok(MollifiedPairingReport {
        lambdas: lambdas.to_vec(),
        values: values.clone(),
        diffs,
        value: *values.last().unwrap(),
        convergent,
    })
}

/// An open convex frequency cone around a unit direction, with a Sobolev order
/// and a radial cutoff ladder.
#[derive(Debug, Clone)]
pub struct ConeSpec {
    /// Unit covector p.
    pub direction: (f64, f64),
    /// Opening parameter: k is inside iff `alpha (k.p) > |k - (k.p) p|`.
    pub alpha: f64,
    pub sobolev_order: f64,
    pub cutoffs: Vec<f64>,
}

impl ConeSpec {
    pub fn new(direction: (f64, f64), alpha: f64, sobolev_order: f64, cutoffs: Vec<f64>) -> Result<Self> {
        let norm = (direction.0 * direction.0 + direction.1 * direction.1).sqrt();
        if !(norm > 0.0) || !(alpha > 0.0) {
            return Err(QeiError::InvalidParameter(
                "cone needs a nonzero direction and positive opening".into(),
            ));
        }
        if cutoffs.is_empty() || cutoffs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QeiError::InvalidParameter(
                "cutoff ladder must be nonempty and strictly increasing".into(),
            ));
        }
        Ok(ConeSpec {
            direction: (direction.0 / norm, direction.1 / norm),
            alpha,
            sobolev_order,
            cutoffs,
        })
    }

    pub fn contains(&self, kt: f64, kx: f64) -> bool {
        let (pt, px) = self.direction;
        let kp = kt * pt + kx * px;
        let (rt, rx) = (kt - kp * pt, kx - kp * px);
        self.alpha * kp > (rt * rt + rx * rx).sqrt()
    }
}

/// Partial Sobolev cone integrals at the cutoff ladder.
#[derive(Debug, Clone)]
pub struct ConeLadder {
    pub cutoffs: Vec<f64>,
    pub values: Vec<f64>,
    /// `values[r+1] / values[r]`.
    pub ratios: Vec<f64>,
    pub bounded: bool,
    pub ratio_threshold: f64,
}

pub const CONE_RATIO_THRESHOLD: f64 = 1.0 + 1e-2;

fn ladder_from_points(
    points: &[(f64, f64)],
    s: f64,
    cutoffs: &[f64],
    cell: f64,
    threshold: f64,
) -> Result<ConeLadder> {
    if points.is_empty() {
        return Err(QeiError::EmptyCone);
    }
    let mut values = Vec::with_capacity(cutoffs.len());
    for &kr in cutoffs {
        let mut acc = 0.0;
        for &(knorm, amp2) in points {
            if knorm <= kr {
                acc += (1.0 + knorm * knorm).powf(s) * amp2;
            }
        }
        values.push(acc * cell);
    }
    let ratios: Vec<f64> = values
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { f64::INFINITY })
        .collect();
    let bounded = ratios.last().map(|&r| r <= threshold).unwrap_or(true);
    Ok(ConeLadder {
        cutoffs: cutoffs.to_vec(),
        values,
        ratios,
        bounded,
        ratio_threshold: threshold,
    })
}

/// Partial integrals `sum_{k in cone, |k| <= K_r} (1+|k|^2)^s |fhat(k)|^2 cell`
/// over the grid frequency lattice of localized samples.
pub fn cone_sobolev_integral(f: &TestFunction, cone: &ConeSpec) -> Result<ConeLadder> {
    cone_sobolev_integral_with_threshold(f, cone, CONE_RATIO_THRESHOLD)
}

pub fn cone_sobolev_integral_with_threshold(
    f: &TestFunction,
    cone: &ConeSpec,
    threshold: f64,
) -> Result<ConeLadder> {
    let spec = fourier(f);
    let g = f.grid;
    let mut points = Vec::new();
    for (mi, &kt) in spec.kt.iter().enumerate() {
        for (ni, &kx) in spec.kx.iter().enumerate() {
            if cone.contains(kt, kx) {
                let knorm = (kt * kt + kx * kx).sqrt();
                points.push((knorm, spec.value(mi, ni).norm_sqr()));
            }
        }
    }
    ladder_from_points(&points, cone.sobolev_order, &cone.cutoffs, g.freq_cell(), threshold)
}

/// 1-d variant on a line grid: the cone is a frequency half-line.
pub fn cone_sobolev_integral_line(
    lg: &LineGrid,
    values: &[Complex64],
    positive_ray: bool,
    s: f64,
    cutoffs: &[f64],
) -> Result<ConeLadder> {
    let spec = lg.fourier(values);
    let mut points = Vec::new();
    for (m, &k) in lg.freqs().iter().enumerate() {
        let inside = if positive_ray { k > 0.0 } else { k < 0.0 };
        if inside {
            points.push((k.abs(), spec[m].norm_sqr()));
        }
    }
    ladder_from_points(&points, s, cutoffs, lg.freq_cell(), CONE_RATIO_THRESHOLD)
}

/// Least-squares decay slope of `log |fhat|` against `log |k|` along a ray.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    pub slope: f64,
    /// One standard error of the fitted slope.
    pub slope_stderr: f64,
    pub points_used: usize,
    pub below_noise: bool,
}

pub const DECAY_NOISE_FLOOR: f64 = 1e-14;

/// Fit on precomputed (radius, amplitude) samples, skipping the lowest
/// quartile of radii.
pub fn fit_log_slope(radii: &[f64], amps: &[f64]) -> Result<DecayFit> {
    if radii.len() != amps.len() || radii.len() < 16 {
        return Err(QeiError::InvalidParameter(format!(
            "decay fit needs at least 16 ray samples, got {}",
            radii.len()
        )));
    }
    let skip = radii.len() / 4;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&r, &a) in radii.iter().zip(amps).skip(skip) {
        if a > DECAY_NOISE_FLOOR {
            xs.push(r.ln());
            ys.push(a.ln());
        }
    }
    if xs.len() < 4 {
        return Ok(DecayFit {
            slope: 0.0,
            slope_stderr: f64::INFINITY,
            points_used: xs.len(),
            below_noise: true,
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let resid2: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let pred = my + slope * (x - mx);
            (y - pred) * (y - pred)
        })
        .sum();
    let dof = (xs.len() as f64 - 2.0).max(1.0);
    let slope_stderr = (resid2 / dof / sxx).sqrt();
    Ok(DecayFit {
        slope,
        slope_stderr,
        points_used: xs.len(),
        below_noise: false,
    })
}

/// Sample the transform of localized grid samples along a frequency ray and
/// fit its decay slope.
pub fn decay_exponent(f: &TestFunction, direction: (f64, f64)) -> Result<DecayFit> {
    let norm = (direction.0 * direction.0 + direction.1 * direction.1).sqrt();
    if !(norm > 0.0) {
        return Err(QeiError::InvalidParameter("decay ray needs a nonzero direction".into()));
    }
    let (pt, px) = (direction.0 / norm, direction.1 / norm);
    let g = f.grid;
    let k_nyq_t = std::f64::consts::PI / g.dt;
    let k_nyq_x = std::f64::consts::PI / g.dx;
    // stay inside the resolved band along the ray
    let rmax = if pt.abs() < 1e-12 {
        k_nyq_x / px.abs()
    } else if px.abs() < 1e-12 {
        k_nyq_t / pt.abs()
    } else {
        (k_nyq_t / pt.abs()).min(k_nyq_x / px.abs())
    };
    let step = (std::f64::consts::PI / g.half_width).max(2.0 * std::f64::consts::PI / g.circumference);
    let mut radii = Vec::new();
    let mut amps = Vec::new();
    let mut r = step;
    while r < rmax {
        radii.push(r);
        amps.push(fourier_at(f, r * pt, r * px).norm());
        r += step;
    }
    fit_log_slope(&radii, &amps)
}

/// Fit the decay of precomputed line spectral samples along one ray.
pub fn decay_exponent_line(lg: &LineGrid, values: &[Complex64], positive_ray: bool) -> Result<DecayFit> {
    let spec = lg.fourier(values);
    let mut radii = Vec::new();
    let mut amps = Vec::new();
    for (m, &k) in lg.freqs().iter().enumerate() {
        let inside = if positive_ray { k > 0.0 } else { k < 0.0 };
        if inside {
            radii.push(k.abs());
            amps.push(spec[m].norm());
        }
    }
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].partial_cmp(&radii[b]).unwrap());
    let radii: Vec<f64> = order.iter().map(|&i| radii[i]).collect();
    let amps: Vec<f64> = order.iter().map(|&i| amps[i]).collect();
    fit_log_slope(&radii, &amps)
}
