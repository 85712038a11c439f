//! Soft thresholding, ISTA, least-squares updates and atom normalization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Error, Result};
use crate::linalg::{
    ensure_finite, frobenius_sq, l1_norm, random_unit_dictionary, solve_normal_equations, Matrix,
    Ridge,
};
use crate::model::SparseCode;

/// Power-method cap; iteration stops earlier once the Rayleigh quotient settles.
const POWER_MAX_ITERS: usize = 1000;
const POWER_MIN_ITERS: usize = 50;
const POWER_RTOL: f64 = 1e-15;
const POWER_START_SEED: u64 = 0x5eed_5eed;

pub fn soft_threshold(v: f64, theta: f64) -> Result<f64> {
    check_threshold(theta)?;
    Ok(shrink(v, theta))
}

pub fn nonneg_soft_threshold(v: f64, theta: f64) -> Result<f64> {
    check_threshold(theta)?;
    Ok(shrink_nonneg(v, theta))
}

fn check_threshold(theta: f64) -> Result<()> {
    if theta >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("threshold must be >= 0, got {theta}")))
    }
}

#[inline]
fn shrink(v: f64, theta: f64) -> f64 {
    v.signum() * (v.abs() - theta).max(0.0)
}

#[inline]
fn shrink_nonneg(v: f64, theta: f64) -> f64 {
    (v - theta).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IstaOptions {
    pub max_iters: usize,
    /// Stop once the relative objective decrease of one iteration is below this.
    pub tol: f64,
    pub nonneg: bool,
    /// Overrides the spectral step `1/(2σ²_max)`.
    pub step: Option<f64>,
}

impl Default for IstaOptions {
    fn default() -> Self {
        Self {
            max_iters: 300,
            tol: 1e-6,
            nonneg: false,
            step: None,
        }
    }
}

impl IstaOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("ista max_iters must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid(format!("ista tol must be > 0, got {}", self.tol)));
        }
        if let Some(step) = self.step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(invalid(format!("ista step must be positive, got {step}")));
            }
        }
        Ok(())
    }

    pub fn with_nonneg(mut self, nonneg: bool) -> Self {
        self.nonneg = nonneg;
        self
    }
}

#[derive(Debug, Clone)]
pub struct IstaOutcome {
    pub code: SparseCode,
    /// Objective at the starting point followed by one entry per iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `‖X − D Z‖²_F + λ‖Z‖₁`
pub fn lasso_objective(d: &Matrix, x: &Matrix, z: &Matrix, lambda: f64) -> f64 {
    frobenius_sq(&(d * z - x)) + lambda * l1_norm(z)
}

/// Minimizes `‖X − D Z‖²_F + λ‖Z‖₁` from `Z = 0`.
pub fn ista_solve(d: &Matrix, x: &Matrix, lambda: f64, opts: &IstaOptions) -> Result<SparseCode> {
    let z0 = Matrix::zeros(d.ncols(), x.ncols());
    Ok(ista_solve_from(d, x, lambda, &z0, opts)?.code)
}

/// Warm-started ISTA. Each iteration is a proximal gradient step with the
/// constant spectral step, so the objective never increases; with
/// `opts.nonneg` the prox also projects onto `Z ≥ 0`.
pub fn ista_solve_from(
    d: &Matrix,
    x: &Matrix,
    lambda: f64,
    z0: &Matrix,
    opts: &IstaOptions,
) -> Result<IstaOutcome> {
    opts.validate()?;
    if d.nrows() != x.nrows() {
        return Err(dims(format!(
            "ista: dictionary has {} rows, data has {}",
            d.nrows(),
            x.nrows()
        )));
    }
    if z0.shape() != (d.ncols(), x.ncols()) {
        return Err(dims(format!(
            "ista: initial code is {}x{}, expected {}x{}",
            z0.nrows(),
            z0.ncols(),
            d.ncols(),
            x.ncols()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    ensure_finite(d, "ista dictionary")?;
    ensure_finite(x, "ista data")?;
    ensure_finite(z0, "ista initial code")?;

    let finish = |z: Matrix, trace: Vec<f64>, iterations, converged| IstaOutcome {
        code: SparseCode {
            matrix: z,
            nonneg: opts.nonneg,
            lambda,
        },
        objective_trace: trace,
        iterations,
        converged,
    };

    let mut z = if opts.nonneg {
        z0.map(|v| v.max(0.0))
    } else {
        z0.clone()
    };
    let mut residual = d * &z - x;
    let mut objective = frobenius_sq(&residual) + lambda * l1_norm(&z);
    let mut trace = vec![objective];

    if d.iter().all(|&v| v == 0.0) {
        // Z = 0 is optimal for a zero dictionary.
        let z = Matrix::zeros(d.ncols(), x.ncols());
        let objective = frobenius_sq(x);
        if objective < trace[0] {
            trace.push(objective);
        }
        return Ok(finish(z, trace, 0, true));
    }

    let step = match opts.step {
        Some(s) => s,
        None => spectral_step(d)?,
    };
    let threshold = step * lambda;
    let dt = d.transpose();

    for iter in 1..=opts.max_iters {
        let gradient = &dt * &residual * 2.0;
        let mut candidate = &z - gradient * step;
        if opts.nonneg {
            candidate.apply(|v| *v = shrink_nonneg(*v, threshold));
        } else {
            candidate.apply(|v| *v = shrink(*v, threshold));
        }
        let cand_residual = d * &candidate - x;
        let cand_objective = frobenius_sq(&cand_residual) + lambda * l1_norm(&candidate);
        if !cand_objective.is_finite() {
            return Err(Error::Diverged {
                iteration: iter,
                what: "ista objective".into(),
            });
        }
        if cand_objective > objective {
            // Only roundoff can push a monotone step uphill: we are at the floor.
            return Ok(finish(z, trace, iter - 1, true));
        }
        let decrease = objective - cand_objective;
        z = candidate;
        residual = cand_residual;
        let previous = objective;
        objective = cand_objective;
        trace.push(objective);
        if decrease <= opts.tol * previous.abs().max(f64::MIN_POSITIVE) {
            return Ok(finish(z, trace, iter, true));
        }
    }
    Ok(finish(z, trace, opts.max_iters, false))
}

/// Largest singular value by power iteration on the smaller Gram matrix.
pub fn largest_singular_value(d: &Matrix) -> Result<f64> {
    ensure_finite(d, "spectral norm input")?;
    if d.iter().all(|&v| v == 0.0) {
        return Err(invalid("spectral step of a zero matrix"));
    }
    let gram = if d.ncols() <= d.nrows() {
        d.transpose() * d
    } else {
        d * d.transpose()
    };
    let n = gram.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_START_SEED);
    let mut v = nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(0.5..1.5));
    v /= v.norm();
    let mut rho = 0.0_f64;
    for iter in 0..POWER_MAX_ITERS {
        let w = &gram * &v;
        let next_rho = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / norm;
        let settled = (next_rho - rho).abs() <= POWER_RTOL * next_rho.abs();
        rho = next_rho;
        if settled && iter >= POWER_MIN_ITERS {
            break;
        }
    }
    // One last Rayleigh quotient with the converged vector.
    rho = rho.max(v.dot(&(&gram * &v)));
    Ok(rho.sqrt())
}

/// ISTA step `1/(2σ²_max(D))` for the gradient of `‖X − D Z‖²_F`.
pub fn spectral_step(d: &Matrix) -> Result<f64> {
    let sigma = largest_singular_value(d)?;
    Ok(1.0 / (2.0 * sigma * sigma))
}

/// `argmin_Z ‖X − D Z‖²_F`.
pub fn lsq_code(d: &Matrix, x: &Matrix) -> Result<Matrix> {
    lsq_code_with(d, x, Ridge::Auto)
}

pub fn lsq_code_with(d: &Matrix, x: &Matrix, ridge: Ridge) -> Result<Matrix> {
    if d.nrows() != x.nrows() {
        return Err(dims(format!(
            "lsq_code: dictionary has {} rows, data has {}",
            d.nrows(),
            x.nrows()
        )));
    }
    let dt = d.transpose();
    solve_normal_equations(&(&dt * d), &(&dt * x), ridge)
}

/// `argmin_D ‖X − D Z‖²_F`.
pub fn lsq_dictionary(x: &Matrix, z: &Matrix) -> Result<Matrix> {
    lsq_dictionary_with(x, z, Ridge::Auto)
}

pub fn lsq_dictionary_with(x: &Matrix, z: &Matrix, ridge: Ridge) -> Result<Matrix> {
    if x.ncols() != z.ncols() {
        return Err(dims(format!(
            "lsq_dictionary: data has {} columns, code has {}",
            x.ncols(),
            z.ncols()
        )));
    }
    let zt = z.transpose();
    // (Z Zᵀ) Dᵀ = Z Xᵀ
    let dt = solve_normal_equations(&(z * &zt), &(z * x.transpose()), ridge)?;
    Ok(dt.transpose())
}

/// Scales every column to unit ℓ2 norm. Returns the original norms; zero
/// columns are replaced by a random unit vector drawn from `rng` and get a
/// recorded norm of 0.
pub fn normalize_columns<R: Rng + ?Sized>(d: &Matrix, rng: &mut R) -> (Matrix, Vec<f64>) {
    let mut out = d.clone();
    let mut scales = Vec::with_capacity(d.ncols());
    for j in 0..d.ncols() {
        let norm = d.column(j).norm();
        if norm > 0.0 && norm.is_finite() {
            let mut col = out.column_mut(j);
            col /= norm;
            scales.push(norm);
        } else {
            let fresh = random_unit_dictionary(d.nrows(), 1, rng);
            out.set_column(j, &fresh.column(0));
            scales.push(0.0);
        }
    }
    (out, scales)
}

/// Multiplies row `i` of `z` by `scales[i]`; the counterpart of
/// [`normalize_columns`] that keeps `D Z` unchanged.
pub fn rescale_rows(z: &mut Matrix, scales: &[f64]) {
    debug_assert_eq!(z.nrows(), scales.len());
    for (i, &s) in scales.iter().enumerate() {
        let mut row = z.row_mut(i);
        row *= s;
    }
}
