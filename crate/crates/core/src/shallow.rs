//! Single-layer dictionary learning by alternating minimization: sparse
//! coding with the dictionary fixed, then a least-squares dictionary update
//! followed by atom normalization. A dictionary step that would raise the
//! objective is skipped, so the objective never increases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Result};
use crate::linalg::{ensure_finite, fidelity, l1_norm, random_unit_dictionary, Matrix};
use crate::model::{LayerDictionary, SparseCode};
use crate::sparse_ops::{
    ista_solve_from, lsq_dictionary, normalize_columns, rescale_rows, IstaOptions,
};

pub const DEFAULT_OUTER_ITERS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShallowConfig {
    pub n_atoms: usize,
    pub lambda: f64,
    pub outer_iters: usize,
    pub nonneg_codes: bool,
    pub seed: u64,
    pub ista: IstaOptions,
}

impl ShallowConfig {
    pub fn new(n_atoms: usize) -> Self {
        Self {
            n_atoms,
            lambda: 1e-3,
            outer_iters: DEFAULT_OUTER_ITERS,
            nonneg_codes: true,
            seed: 0,
            ista: IstaOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(invalid("n_atoms must be >= 1"));
        }
        if self.outer_iters == 0 {
            return Err(invalid("outer_iters must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        self.ista.validate()
    }
}

/// Which half-step produced a trace entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Code,
    /// Least-squares update and atom normalization.
    Dictionary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfStep {
    pub phase: Phase,
    /// `‖X − DZ‖²_F + λ‖Z‖₁` (λ = 0 on non-sparse greedy layers).
    pub objective: f64,
    /// `‖X − DZ‖²_F`
    pub fidelity: f64,
}

#[derive(Debug, Clone)]
pub struct ShallowFit {
    pub dictionary: LayerDictionary,
    pub code: SparseCode,
    pub trace: Vec<HalfStep>,
}

impl ShallowFit {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |s| s.objective)
    }
}

/// Learns `X ≈ D Z` with unit-norm atoms and a sparse (optionally
/// non-negative) code, starting from a seeded Gaussian dictionary.
pub fn learn_shallow(x: &Matrix, cfg: &ShallowConfig) -> Result<ShallowFit> {
    check_input(x, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d0 = random_unit_dictionary(x.nrows(), cfg.n_atoms, &mut rng);
    alternate(x, cfg, d0, &mut rng)
}

/// Same as [`learn_shallow`] but starting from a caller-supplied dictionary
/// (normalized before use). The seeded RNG is still used for atom redraws.
pub fn learn_shallow_from(x: &Matrix, cfg: &ShallowConfig, initial: &Matrix) -> Result<ShallowFit> {
    check_input(x, cfg)?;
    if initial.shape() != (x.nrows(), cfg.n_atoms) {
        return Err(dims(format!(
            "initial dictionary is {}x{}, expected {}x{}",
            initial.nrows(),
            initial.ncols(),
            x.nrows(),
            cfg.n_atoms
        )));
    }
    ensure_finite(initial, "initial dictionary")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (d0, _) = normalize_columns(initial, &mut rng);
    alternate(x, cfg, d0, &mut rng)
}

fn check_input(x: &Matrix, cfg: &ShallowConfig) -> Result<()> {
    cfg.validate()?;
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(dims("empty data matrix"));
    }
    ensure_finite(x, "training data")?;
    if cfg.n_atoms >= x.nrows() * x.ncols() && x.len() > 1 {
        return Err(invalid(format!(
            "{} atoms for a {}x{} data matrix",
            cfg.n_atoms,
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

fn alternate(x: &Matrix, cfg: &ShallowConfig, d0: Matrix, rng: &mut ChaCha8Rng) -> Result<ShallowFit> {
    let ista = cfg.ista.with_nonneg(cfg.nonneg_codes);
    let lambda = cfg.lambda;
    let mut d = d0;
    let mut z = Matrix::zeros(cfg.n_atoms, x.ncols());
    let record = |phase, d: &Matrix, z: &Matrix| {
        let fid = fidelity(d, x, z);
        HalfStep {
            phase,
            objective: fid + lambda * l1_norm(z),
            fidelity: fid,
        }
    };
    let mut trace = vec![record(Phase::Init, &d, &z)];

    for outer in 0..cfg.outer_iters {
        z = ista_solve_from(&d, x, lambda, &z, &ista)?.code.matrix;
        trace.push(record(Phase::Code, &d, &z));

        if let Some((unit, scales)) = dictionary_half_step(x, &z, &d, lambda, rng)? {
            d = unit;
            rescale_rows(&mut z, &scales);
        }
        trace.push(record(Phase::Dictionary, &d, &z));
        log::trace!(
            "shallow iter {}: objective {:.6e}",
            outer + 1,
            trace.last().map_or(f64::NAN, |s| s.objective)
        );
    }

    Ok(ShallowFit {
        dictionary: LayerDictionary::new(d, true),
        code: SparseCode {
            matrix: z,
            nonneg: cfg.nonneg_codes,
            lambda,
        },
        trace,
    })
}

/// Least-squares dictionary update followed by atom normalization, with the
/// atom scales moved into the code rows. Returns the unit dictionary and the
/// scales, or `None` when the step would raise `‖X − DZ‖²_F + λ‖Z‖₁` (the
/// rescaled code can carry a larger ℓ1 norm than before).
pub(crate) fn dictionary_half_step(
    x: &Matrix,
    z: &Matrix,
    current: &Matrix,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(Matrix, Vec<f64>)>> {
    let candidate = lsq_dictionary(x, z)?;
    let (unit, scales) = normalize_columns(&candidate, rng);
    let mut scaled = z.clone();
    rescale_rows(&mut scaled, &scales);
    let before = fidelity(current, x, z) + lambda * l1_norm(z);
    let after = fidelity(&unit, x, &scaled) + lambda * l1_norm(&scaled);
    Ok((after <= before).then_some((unit, scales)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_gaussian;

    fn planted(seed: u64, m: usize, k: usize, s: usize, density: f64) -> (Matrix, Matrix, Matrix) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d0 = random_unit_dictionary(m, k, &mut rng);
        let z0 = Matrix::from_fn(k, s, |_, _| {
            if rng.gen_bool(density) {
                rng.gen_range(0.5..1.5)
            } else {
                0.0
            }
        });
        (&d0 * &z0, d0, z0)
    }

    #[test]
    fn recovers_planted_factorization() {
        let (x, _, _) = planted(21, 16, 8, 200, 0.2);
        let cfg = ShallowConfig {
            outer_iters: 100,
            ..ShallowConfig::new(8)
        };
        let fit = learn_shallow(&x, &cfg).unwrap();
        let resid = (&x - &fit.dictionary.matrix * &fit.code.matrix).norm() / x.norm();
        assert!(resid <= 0.05, "relative residual {resid}");
    }

    #[test]
    fn one_iteration_from_truth_descends_from_zero_code() {
        let (x, d0, _) = planted(5, 16, 8, 40, 0.2);
        let cfg = ShallowConfig {
            outer_iters: 1,
            ..ShallowConfig::new(8)
        };
        let fit = learn_shallow_from(&x, &cfg, &d0).unwrap();
        let at_zero = fidelity(&d0, &x, &Matrix::zeros(8, 40));
        assert_eq!(fit.trace[0].objective, at_zero);
        assert!(fit.final_objective() <= at_zero);
    }

    #[test]
    fn zero_data_gives_zero_code_and_flat_trace() {
        let x = Matrix::zeros(6, 5);
        let fit = learn_shallow(&x, &ShallowConfig::new(3)).unwrap();
        assert!(fit.code.matrix.iter().all(|&v| v == 0.0));
        assert!(fit.trace[1..].iter().all(|s| s.objective == 0.0));
    }

    #[test]
    fn trace_is_monotone_and_atoms_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_gaussian(16, 40, &mut rng).map(f64::abs);
        let fit = learn_shallow(&x, &ShallowConfig::new(8)).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-9);
        }
        for col in fit.dictionary.matrix.column_iter() {
            assert!((col.norm() - 1.0).abs() <= 1e-12);
        }
        assert!(fit.code.matrix.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Matrix::from_element(4, 3, f64::INFINITY);
        assert!(learn_shallow(&x, &ShallowConfig::new(2)).is_err());
        assert!(learn_shallow(&Matrix::zeros(0, 3), &ShallowConfig::new(2)).is_err());
        assert!(learn_shallow(&Matrix::zeros(4, 3), &ShallowConfig::new(0)).is_err());
    }
}
