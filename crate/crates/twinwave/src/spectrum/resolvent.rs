//! Resolvent norms along the imaginary axis, in the energy operator norm.
//!
//! With `H = L L^T` the energy-norm resolvent is similar to the Euclidean
//! one: `|(i l I - A)^-1|_H = sigma_max(L^T (i l I - A)^-1 L^-T)`. A point
//! evaluation factorizes `i l I - A` once and runs Golub-Kahan-Lanczos
//! bidiagonalization on the factored operator; the dense form-and-SVD route
//! stays available as the small-scale reference. Sweeps fit the growth
//! exponent of the envelope (local maxima over the frequency grid), since
//! the pointwise norm oscillates between resonance peaks while the
//! sup-statement concerns their heights.

use nalgebra::{Complex, DMatrix, DVector};

use super::{seeded_vector, shifted_matrix, SpectrumError};
use crate::generator::GeneratorOperator;

/// Norms at or above this value are flagged as near-singular evaluations.
pub const NEAR_SINGULAR_NORM: f64 = 1e8;

/// Fraction of the mesh Nyquist frequency kept as the resolved band; above
/// it the discrete dispersion relation no longer tracks the continuum.
const BAND_SAFETY: f64 = 0.2;

type C64 = Complex<f64>;

/// Single resolvent evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventPoint {
    pub lambda: f64,
    pub norm: f64,
    /// Set when the frequency sits within roundoff of an eigenvalue of the
    /// generator; the value is still returned.
    pub near_singular: bool,
}

/// Least-squares exponent of the envelope in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeFit {
    pub exponent: f64,
    pub r_squared: f64,
    pub n_envelope: usize,
}

/// Resolvent sweep output.
#[derive(Debug, Clone)]
pub struct ResolventSamples {
    pub points: Vec<ResolventPoint>,
    /// Marks the local maxima the fit ran on, aligned with `points`.
    pub is_envelope: Vec<bool>,
    pub fit: Option<EnvelopeFit>,
    /// Resolved frequency band `(0, BAND_SAFETY * pi / h)`.
    pub valid_band: (f64, f64),
    /// Set when near-singular evaluations dominate (undamped spectra on the
    /// axis); no exponent is fitted then.
    pub abstained: bool,
}

/// Logarithmically spaced frequency grid.
pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    assert!(min > 0.0 && max > min && points >= 2);
    (0..points)
        .map(|i| min * (max / min).powf(i as f64 / (points - 1) as f64))
        .collect()
}

/// Resolved frequency band of the generator's mesh.
pub fn valid_band(gen: &GeneratorOperator) -> (f64, f64) {
    (0.0, BAND_SAFETY * std::f64::consts::PI / gen.mesh_h())
}

/// LU factors of a complex matrix with partial pivoting, kept in a form that
/// supports both direct and adjoint solves from the single factorization.
pub(crate) struct ComplexLuFactors {
    l: DMatrix<C64>,
    u: DMatrix<C64>,
    perm: Vec<usize>,
    dim: usize,
}

impl ComplexLuFactors {
    /// Factorizes `m`; `None` when a pivot vanishes exactly.
    pub fn new(m: DMatrix<C64>) -> Option<Self> {
        let dim = m.nrows();
        let lu = m.lu();
        let l = lu.l();
        let u = lu.u();
        for i in 0..dim {
            if u[(i, i)].norm() == 0.0 {
                return None;
            }
        }
        // extract the row permutation by tracing index positions
        let mut idx = DVector::from_fn(dim, |i, _| i as f64);
        lu.p().permute_rows(&mut idx);
        let perm: Vec<usize> = (0..dim).map(|i| idx[i] as usize).collect();
        Some(ComplexLuFactors { l, u, perm, dim })
    }

    /// Solves `M x = b` via `P M = L U`.
    pub fn solve(&self, b: &DVector<C64>) -> DVector<C64> {
        let n = self.dim;
        let mut y = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        // forward: L (unit lower)
        for j in 0..n {
            let yj = y[j];
            if yj != C64::new(0.0, 0.0) {
                for i in j + 1..n {
                    let lij = self.l[(i, j)];
                    y[i] -= lij * yj;
                }
            }
        }
        // backward: U
        for j in (0..n).rev() {
            let xj = y[j] / self.u[(j, j)];
            y[j] = xj;
            for i in 0..j {
                let uij = self.u[(i, j)];
                y[i] -= uij * xj;
            }
        }
        y
    }

    /// Solves `M^T x = b` using the same factors: `M^T = U^T L^T P`.
    fn solve_transpose(&self, b: &DVector<C64>) -> DVector<C64> {
        let n = self.dim;
        let mut y = DVector::from_element(n, C64::new(0.0, 0.0));
        // forward: U^T (lower triangular, diagonal of U)
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.u[(k, i)] * y[k];
            }
            y[i] = s / self.u[(i, i)];
        }
        // backward: L^T (unit upper)
        let mut z = DVector::from_element(n, C64::new(0.0, 0.0));
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * z[k];
            }
            z[i] = s;
        }
        // undo the row permutation
        let mut x = DVector::from_element(n, C64::new(0.0, 0.0));
        for i in 0..n {
            x[self.perm[i]] = z[i];
        }
        x
    }

    /// Solves `M^* x = b` through the transpose solve with conjugations.
    pub fn solve_adjoint(&self, b: &DVector<C64>) -> DVector<C64> {
        let conj_b = b.map(|z| z.conj());
        self.solve_transpose(&conj_b).map(|z| z.conj())
    }
}

// Triangular kernels mixing the real Cholesky factor with complex vectors.

fn real_lower_solve(l: &DMatrix<f64>, b: &DVector<C64>) -> DVector<C64> {
    let n = l.nrows();
    let mut y = b.clone();
    for j in 0..n {
        let yj = y[j] / Complex::new(l[(j, j)], 0.0);
        y[j] = yj;
        for i in j + 1..n {
            let lij = l[(i, j)];
            if lij != 0.0 {
                y[i] -= Complex::new(lij, 0.0) * yj;
            }
        }
    }
    y
}

fn real_lower_transpose_solve(l: &DMatrix<f64>, b: &DVector<C64>) -> DVector<C64> {
    let n = l.nrows();
    let mut y = DVector::from_element(n, C64::new(0.0, 0.0));
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            let lki = l[(k, i)];
            if lki != 0.0 {
                s -= Complex::new(lki, 0.0) * y[k];
            }
        }
        y[i] = s / Complex::new(l[(i, i)], 0.0);
    }
    y
}

fn real_lower_mul(l: &DMatrix<f64>, x: &DVector<C64>) -> DVector<C64> {
    let n = l.nrows();
    let mut y = DVector::from_element(n, C64::new(0.0, 0.0));
    for j in 0..n {
        let xj = x[j];
        if xj == C64::new(0.0, 0.0) {
            continue;
        }
        for i in j..n {
            let lij = l[(i, j)];
            if lij != 0.0 {
                y[i] += Complex::new(lij, 0.0) * xj;
            }
        }
    }
    y
}

fn real_lower_transpose_mul(l: &DMatrix<f64>, x: &DVector<C64>) -> DVector<C64> {
    let n = l.nrows();
    let mut y = DVector::from_element(n, C64::new(0.0, 0.0));
    for i in 0..n {
        let mut s = C64::new(0.0, 0.0);
        for k in i..n {
            let lki = l[(k, i)];
            if lki != 0.0 {
                s += Complex::new(lki, 0.0) * x[k];
            }
        }
        y[i] = s;
    }
    y
}

/// The factored operator `R = L^T (i l I - A)^-1 L^-T` and its adjoint.
struct ResolventOperator<'a> {
    gram_l: &'a DMatrix<f64>,
    lu: ComplexLuFactors,
}

impl ResolventOperator<'_> {
    fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        let w = real_lower_transpose_solve(self.gram_l, x);
        let s = self.lu.solve(&w);
        real_lower_transpose_mul(self.gram_l, &s)
    }

    fn apply_adjoint(&self, x: &DVector<C64>) -> DVector<C64> {
        let w = real_lower_mul(self.gram_l, x);
        let s = self.lu.solve_adjoint(&w);
        real_lower_solve(self.gram_l, &s)
    }
}

/// Largest singular value of the factored operator by Golub-Kahan-Lanczos
/// bidiagonalization with full reorthogonalization. Returns the estimate,
/// the corresponding right vector (reusable as a warm start nearby), and a
/// convergence flag.
fn sigma_max(
    op: &ResolventOperator<'_>,
    start: Option<&DVector<C64>>,
    tol: f64,
    max_iter: usize,
) -> (f64, DVector<C64>, bool) {
    let dim = op.gram_l.nrows();
    let mut v = match start {
        Some(v0) => {
            let norm = v0.norm();
            if norm.is_finite() && norm > 0.0 {
                v0 / Complex::new(norm, 0.0)
            } else {
                seeded_vector(dim, 0xb1d1)
            }
        }
        None => seeded_vector(dim, 0xb1d1),
    };

    let mut vs: Vec<DVector<C64>> = vec![v.clone()];
    let mut us: Vec<DVector<C64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut u = op.apply(&v);
    let alpha1 = u.norm();
    if !alpha1.is_finite() {
        return (f64::INFINITY, v, true);
    }
    if alpha1 == 0.0 {
        return (0.0, v, true);
    }
    u /= Complex::new(alpha1, 0.0);
    alphas.push(alpha1);
    us.push(u.clone());

    let mut sigma_prev = alpha1;
    let mut stagnant = 0usize;
    let min_iter = 12usize;

    for j in 0..max_iter {
        // w = R^* u_j - alpha_j v_j, reorthogonalized against V
        let mut w = op.apply_adjoint(&u);
        if !w.norm().is_finite() {
            return (f64::INFINITY, v, true);
        }
        w -= &vs[j] * Complex::new(alphas[j], 0.0);
        for vk in &vs {
            let c = vk.dotc(&w);
            w -= vk * c;
        }
        let beta = w.norm();
        if beta <= f64::EPSILON * alphas[0].max(1.0) {
            // invariant subspace: the bidiagonal block is exact
            let sigma = bidiagonal_sigma_max(&alphas, &betas);
            let warm = top_right_vector(&alphas, &betas, &vs);
            return (sigma, warm, true);
        }
        betas.push(beta);
        v = w / Complex::new(beta, 0.0);
        vs.push(v.clone());

        // z = R v_{j+1} - beta_j u_j, reorthogonalized against U
        let mut z = op.apply(&v);
        if !z.norm().is_finite() {
            return (f64::INFINITY, v, true);
        }
        z -= &us[j] * Complex::new(beta, 0.0);
        for uk in &us {
            let c = uk.dotc(&z);
            z -= uk * c;
        }
        let alpha = z.norm();
        if alpha <= f64::EPSILON * alphas[0].max(1.0) {
            let sigma = bidiagonal_sigma_max(&alphas, &betas);
            let warm = top_right_vector(&alphas, &betas, &vs);
            return (sigma, warm, true);
        }
        alphas.push(alpha);
        u = z / Complex::new(alpha, 0.0);
        us.push(u.clone());

        let sigma = bidiagonal_sigma_max(&alphas, &betas);
        if (sigma - sigma_prev).abs() <= tol * sigma.max(f64::MIN_POSITIVE) && j + 1 >= min_iter {
            stagnant += 1;
            if stagnant >= 2 {
                let warm = top_right_vector(&alphas, &betas, &vs);
                return (sigma, warm, true);
            }
        } else {
            stagnant = 0;
        }
        sigma_prev = sigma;
    }
    let sigma = bidiagonal_sigma_max(&alphas, &betas);
    let warm = top_right_vector(&alphas, &betas, &vs);
    (sigma, warm, false)
}

fn bidiagonal_matrix(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let k = alphas.len();
    let mut b = DMatrix::zeros(k, k);
    for i in 0..k {
        b[(i, i)] = alphas[i];
        if i + 1 < k && i < betas.len() {
            b[(i + 1, i)] = betas[i];
        }
    }
    b
}

fn bidiagonal_sigma_max(alphas: &[f64], betas: &[f64]) -> f64 {
    bidiagonal_matrix(alphas, betas).singular_values()[0]
}

/// Ritz approximation of the top right singular vector, for warm starts.
fn top_right_vector(alphas: &[f64], betas: &[f64], vs: &[DVector<C64>]) -> DVector<C64> {
    let b = bidiagonal_matrix(alphas, betas);
    let svd = b.svd(false, true);
    let vt = svd.v_t.expect("requested");
    // index of the largest singular value (nalgebra sorts descending)
    let coeffs = vt.row(0);
    let k = alphas.len();
    let dim = vs[0].len();
    let mut out = DVector::from_element(dim, C64::new(0.0, 0.0));
    for j in 0..k {
        out += &vs[j] * Complex::new(coeffs[j], 0.0);
    }
    let norm = out.norm();
    if norm.is_finite() && norm > 0.0 {
        out /= Complex::new(norm, 0.0);
    }
    out
}

fn resolvent_point(
    gen: &GeneratorOperator,
    lambda: f64,
    warm: Option<&DVector<C64>>,
) -> (ResolventPoint, Option<DVector<C64>>) {
    let shifted = shifted_matrix(gen.dense_matrix(), Complex::new(0.0, lambda));
    match ComplexLuFactors::new(shifted) {
        None => (
            ResolventPoint { lambda, norm: f64::INFINITY, near_singular: true },
            None,
        ),
        Some(lu) => {
            let op = ResolventOperator { gram_l: gen.gram().l_factor(), lu };
            let (sigma, vector, _converged) = sigma_max(&op, warm, 1e-9, 200);
            let near_singular = !sigma.is_finite() || sigma >= NEAR_SINGULAR_NORM;
            (
                ResolventPoint { lambda, norm: sigma, near_singular },
                Some(vector),
            )
        }
    }
}

/// Energy-operator norm of the resolvent at frequency `lambda`.
pub fn resolvent_norm(gen: &GeneratorOperator, lambda: f64) -> ResolventPoint {
    resolvent_point(gen, lambda, None).0
}

/// Reference route: forms the transformed resolvent densely and takes the
/// largest singular value of the explicit matrix. Cubic in the state
/// dimension per call; meant for cross-checks and small systems.
pub fn resolvent_norm_dense(gen: &GeneratorOperator, lambda: f64) -> f64 {
    let dim = gen.state_dim();
    let shifted = shifted_matrix(gen.dense_matrix(), Complex::new(0.0, lambda));
    let lu = match ComplexLuFactors::new(shifted) {
        Some(lu) => lu,
        None => return f64::INFINITY,
    };
    let op = ResolventOperator { gram_l: gen.gram().l_factor(), lu };
    let mut r = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
    for j in 0..dim {
        let mut e = DVector::from_element(dim, C64::new(0.0, 0.0));
        e[j] = C64::new(1.0, 0.0);
        r.set_column(j, &op.apply(&e));
    }
    r.singular_values()[0]
}

/// Sweeps the resolvent norm over an ascending frequency grid inside the
/// resolved band, marks the envelope (local maxima), and fits the growth
/// exponent `norm ~ lambda^l` on the envelope by least squares in log-log
/// coordinates.
pub fn resolvent_sweep(
    gen: &GeneratorOperator,
    grid: &[f64],
) -> Result<ResolventSamples, SpectrumError> {
    let band = valid_band(gen);
    if grid.len() < 3 {
        return Err(SpectrumError::BandTooNarrow {
            detail: format!("{} grid points; need at least 3", grid.len()),
        });
    }
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(|a, b| a.partial_cmp(b).expect("finite frequencies"));
    if lambdas[0] <= band.0 || *lambdas.last().unwrap() > band.1 {
        return Err(SpectrumError::BandTooNarrow {
            detail: format!(
                "grid [{}, {}] leaves the resolved band ({}, {:.3}]",
                lambdas[0],
                lambdas.last().unwrap(),
                band.0,
                band.1
            ),
        });
    }

    let mut points = Vec::with_capacity(lambdas.len());
    let mut warm: Option<DVector<C64>> = None;
    for &lambda in &lambdas {
        let (point, vector) = resolvent_point(gen, lambda, warm.as_ref());
        warm = vector;
        points.push(point);
    }

    let n = points.len();
    let mut is_envelope = vec![false; n];
    for i in 1..n - 1 {
        let (a, b, c) = (points[i - 1].norm, points[i].norm, points[i + 1].norm);
        if b >= a && b >= c && (b > a || b > c) && b.is_finite() {
            is_envelope[i] = true;
        }
    }

    let singular_count = points.iter().filter(|p| p.near_singular).count();
    let abstained = singular_count * 10 > n * 3; // more than 30%
    if abstained {
        return Ok(ResolventSamples { points, is_envelope, fit: None, valid_band: band, abstained });
    }

    let envelope: Vec<(f64, f64)> = points
        .iter()
        .zip(&is_envelope)
        .filter(|(p, &e)| e && p.norm.is_finite() && p.norm > 0.0)
        .map(|(p, _)| (p.lambda.ln(), p.norm.ln()))
        .collect();
    if envelope.len() < 8 {
        return Err(SpectrumError::BandTooNarrow {
            detail: format!("{} envelope points; need at least 8", envelope.len()),
        });
    }

    let (slope, _intercept, r_squared) = least_squares(&envelope);
    let fit = Some(EnvelopeFit { exponent: slope, r_squared, n_envelope: envelope.len() });
    Ok(ResolventSamples { points, is_envelope, fit, valid_band: band, abstained })
}

/// Ordinary least squares for `y = slope x + intercept`, with `R^2`.
pub(crate) fn least_squares(data: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = data.len() as f64;
    let mean_x = data.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = data.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in data {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res = syy - slope * sxy;
    let r_squared = if syy <= f64::EPSILON * n {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    (slope, intercept, r_squared)
}
