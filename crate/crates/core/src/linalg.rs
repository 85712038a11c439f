//! Dense helpers shared by the solvers: regularized normal equations,
//! norms and seeded random matrices.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Matrix = DMatrix<f64>;

/// Tikhonov weight used by [`Ridge::Auto`], relative to the mean diagonal of
/// the Gram matrix.
pub const AUTO_RIDGE_SCALE: f64 = 1e-8;

/// Number of iterative-refinement passes against the unregularized system.
const REFINEMENT_PASSES: usize = 2;

/// Regularization applied when solving least-squares normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Ridge {
    /// `ε = 1e-8 · trace(G) / k`.
    #[default]
    Auto,
    /// Explicit `ε ≥ 0`. Zero fails on singular systems.
    Fixed(f64),
}

/// Solves `G Y = R` for symmetric positive semi-definite `G`.
///
/// The factorization is of `G + εI`; the returned point is then refined
/// against the unregularized `G` (iterated Tikhonov), so on well-conditioned
/// systems the result is the exact least-squares minimizer while rank
/// deficient systems stay bounded.
pub fn solve_normal_equations(gram: &Matrix, rhs: &Matrix, ridge: Ridge) -> Result<Matrix> {
    let k = gram.nrows();
    if gram.ncols() != k || rhs.nrows() != k {
        return Err(crate::error::dims(format!(
            "normal equations: gram {}x{}, rhs {}x{}",
            gram.nrows(),
            gram.ncols(),
            rhs.nrows(),
            rhs.ncols()
        )));
    }
    if k == 0 || rhs.ncols() == 0 {
        return Ok(Matrix::zeros(k, rhs.ncols()));
    }
    let eps = match ridge {
        Ridge::Auto => {
            let trace = gram.trace();
            if trace == 0.0 {
                // G = 0: every Y is a minimizer.
                return Ok(Matrix::zeros(k, rhs.ncols()));
            }
            AUTO_RIDGE_SCALE * trace / k as f64
        }
        Ridge::Fixed(e) if e >= 0.0 && e.is_finite() => e,
        Ridge::Fixed(e) => return Err(invalid(format!("ridge must be finite and >= 0, got {e}"))),
    };
    let mut regularized = gram.clone();
    for i in 0..k {
        regularized[(i, i)] += eps;
    }
    let chol = Cholesky::new(regularized)
        .ok_or_else(|| Error::Singular(format!("{k}x{k} gram, ridge {eps:e}")))?;
    let mut y = chol.solve(rhs);
    for _ in 0..REFINEMENT_PASSES {
        let residual = rhs - gram * &y;
        y += chol.solve(&residual);
    }
    Ok(y)
}

pub fn frobenius_sq(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn l1_norm(m: &Matrix) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if all_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// `‖X − D Z‖²_F`
pub fn fidelity(d: &Matrix, x: &Matrix, z: &Matrix) -> f64 {
    frobenius_sq(&(x - d * z))
}

pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    // Column-major fill order is part of the seeded contract.
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Gaussian matrix with unit ℓ2 columns.
pub fn random_unit_dictionary<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let mut d = random_gaussian(rows, cols, rng);
    for mut col in d.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        } else {
            // Only reachable with rows == 0.
            col.fill(0.0);
        }
    }
    d
}

/// Left-to-right product of a chain of matrices.
pub fn chain_product<'a, I>(layers: I) -> Result<Matrix>
where
    I: IntoIterator<Item = &'a Matrix>,
{
    let mut iter = layers.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| invalid("empty layer chain"))?
        .clone();
    iter.enumerate().try_fold(first, |acc, (j, next)| {
        if acc.ncols() != next.nrows() {
            return Err(crate::error::dims(format!(
                "chain mismatch at layer {}: {} columns vs {} rows",
                j + 2,
                acc.ncols(),
                next.nrows()
            )));
        }
        Ok(acc * next)
    })
}
