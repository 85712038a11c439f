//! Greedy layer-wise training of a dictionary cascade.
//!
//! Layer 1 factors `X ≈ D₁ Z₁` without any penalty, layer 2 factors
//! `Z₁ ≈ D₂ Z₂`, and so on. Only the last layer carries the ℓ1 term, where
//! the problem is ordinary shallow sparse coding. Each layer reads nothing but
//! the code handed down by the previous one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Result};
use crate::linalg::{chain_product, ensure_finite, fidelity, frobenius_sq, l1_norm, random_unit_dictionary, Matrix};
use crate::model::{DeepDictionary, LayerDictionary, SparseCode};
use crate::shallow::{dictionary_half_step, learn_shallow, HalfStep, Phase, ShallowConfig};
use crate::sparse_ops::{lsq_code, rescale_rows, IstaOptions};

pub const DEFAULT_PER_LAYER_ITERS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub layer_widths: Vec<usize>,
    /// ℓ1 weight on the last layer's code.
    pub lambda: f64,
    pub per_layer_iters: usize,
    pub nonneg_final: bool,
    pub seed: u64,
    pub ista: IstaOptions,
}

impl GreedyConfig {
    pub fn new(layer_widths: Vec<usize>) -> Self {
        Self {
            layer_widths,
            lambda: 1e-3,
            per_layer_iters: DEFAULT_PER_LAYER_ITERS,
            nonneg_final: true,
            seed: 0,
            ista: IstaOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    /// 1-based.
    pub layer: usize,
    pub steps: Vec<HalfStep>,
}

#[derive(Debug, Clone)]
pub struct GreedyFit {
    pub dictionary: DeepDictionary,
    pub code: SparseCode,
    /// `Z₁ … Z_{N−1}`, the codes handed from one layer to the next.
    pub intermediate_codes: Vec<Matrix>,
    pub trace: Vec<LayerTrace>,
}

pub fn train_greedy(x: &Matrix, cfg: &GreedyConfig) -> Result<GreedyFit> {
    if cfg.layer_widths.is_empty() || cfg.layer_widths.contains(&0) {
        return Err(invalid(format!("bad layer widths {:?}", cfg.layer_widths)));
    }
    if cfg.per_layer_iters == 0 {
        return Err(invalid("per_layer_iters must be >= 1"));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(dims("empty data matrix"));
    }
    ensure_finite(x, "training data")?;

    let n = cfg.layer_widths.len();
    let mut layers = Vec::with_capacity(n);
    let mut intermediate_codes = Vec::with_capacity(n - 1);
    let mut trace = Vec::with_capacity(n);
    let mut input = x.clone();

    for (j, &width) in cfg.layer_widths[..n - 1].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(layer_seed(cfg.seed, j));
        let (d, z, steps) = fit_linear_layer(&input, width, cfg.per_layer_iters, &mut rng)?;
        log::debug!(
            "greedy layer {}: fidelity {:.6e}",
            j + 1,
            steps.last().map_or(f64::NAN, |s| s.fidelity)
        );
        layers.push(LayerDictionary::new(d, true));
        trace.push(LayerTrace { layer: j + 1, steps });
        intermediate_codes.push(z.clone());
        input = z;
    }

    let last = ShallowConfig {
        n_atoms: cfg.layer_widths[n - 1],
        lambda: cfg.lambda,
        outer_iters: cfg.per_layer_iters,
        nonneg_codes: cfg.nonneg_final,
        seed: layer_seed(cfg.seed, n - 1),
        ista: cfg.ista,
    };
    let fit = learn_shallow(&input, &last)?;
    layers.push(fit.dictionary);
    trace.push(LayerTrace {
        layer: n,
        steps: fit.trace,
    });

    Ok(GreedyFit {
        dictionary: DeepDictionary::from_layers(layers)?,
        code: fit.code,
        intermediate_codes,
        trace,
    })
}

/// Layer `j` (0-based) draws from its own stream, so a one-layer run is
/// seeded exactly like [`learn_shallow`].
fn layer_seed(seed: u64, j: usize) -> u64 {
    seed.wrapping_add(j as u64)
}

/// Unpenalized alternation `Z ← argmin ‖Y − DZ‖`, `D ← argmin ‖Y − DZ‖`,
/// normalizing atoms after each dictionary update. Ends on a code step so the
/// returned code is the least-squares code of the returned dictionary.
fn fit_linear_layer(
    input: &Matrix,
    width: usize,
    iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Matrix, Matrix, Vec<HalfStep>)> {
    let record = |phase, d: &Matrix, z: &Matrix| {
        let fid = fidelity(d, input, z);
        HalfStep {
            phase,
            objective: fid,
            fidelity: fid,
        }
    };
    let mut d = random_unit_dictionary(input.nrows(), width, rng);
    let mut z = lsq_code(&d, input)?;
    let mut steps = vec![record(Phase::Code, &d, &z)];
    for _ in 0..iters {
        if let Some((unit, scales)) = dictionary_half_step(input, &z, &d, 0.0, rng)? {
            d = unit;
            rescale_rows(&mut z, &scales);
        }
        steps.push(record(Phase::Dictionary, &d, &z));

        let candidate = lsq_code(&d, input)?;
        if fidelity(&d, input, &candidate) <= fidelity(&d, input, &z) {
            z = candidate;
        }
        steps.push(record(Phase::Code, &d, &z));
    }
    Ok((d, z, steps))
}

/// `‖X − D₁ D₂ … D_N Z‖²_F + λ‖Z‖₁`
pub fn deep_objective(x: &Matrix, layers: &[Matrix], z: &Matrix, lambda: f64) -> Result<f64> {
    let product = chain_product(layers)?;
    if product.nrows() != x.nrows() || product.ncols() != z.nrows() || z.ncols() != x.ncols() {
        return Err(dims(format!(
            "deep objective: X {}x{}, chain {}x{}, Z {}x{}",
            x.nrows(),
            x.ncols(),
            product.nrows(),
            product.ncols(),
            z.nrows(),
            z.ncols()
        )));
    }
    Ok(frobenius_sq(&(x - product * z)) + lambda * l1_norm(z))
}

impl DeepDictionary {
    /// [`deep_objective`] for this cascade.
    pub fn objective(&self, x: &Matrix, z: &Matrix, lambda: f64) -> Result<f64> {
        let layers: Vec<Matrix> = self.matrices().cloned().collect();
        deep_objective(x, &layers, z, lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_gaussian;
    use crate::shallow::learn_shallow;

    #[test]
    fn single_layer_matches_shallow() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_gaussian(12, 30, &mut rng).map(f64::abs);
        let cfg = GreedyConfig {
            seed: 17,
            ..GreedyConfig::new(vec![6])
        };
        let g = train_greedy(&x, &cfg).unwrap();
        let s = learn_shallow(
            &x,
            &ShallowConfig {
                outer_iters: cfg.per_layer_iters,
                seed: 17,
                ..ShallowConfig::new(6)
            },
        )
        .unwrap();
        assert_eq!(g.dictionary.layers[0].matrix, s.dictionary.matrix);
        assert_eq!(g.code.matrix, s.code.matrix);
    }

    #[test]
    fn zero_data_gives_zero_code() {
        let x = Matrix::zeros(8, 10);
        let g = train_greedy(&x, &GreedyConfig::new(vec![5, 3])).unwrap();
        assert!(g.code.matrix.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn objective_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_gaussian(4, 3, &mut rng);
        let id = Matrix::identity(4, 4);
        assert!(deep_objective(&x, &[id.clone()], &x, 0.0).unwrap().abs() < 1e-15);
        let f = deep_objective(&x, &[id], &Matrix::zeros(4, 3), 0.7).unwrap();
        assert!((f - frobenius_sq(&x)).abs() < 1e-12);
        assert!(deep_objective(&x, &[Matrix::zeros(4, 2), Matrix::zeros(3, 2)], &Matrix::zeros(2, 3), 0.0).is_err());
    }
}
