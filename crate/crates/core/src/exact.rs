//! Joint training of all layers of a cascade by variable splitting.
//!
//! The chain `X = D₁ D₂ … D_N Z` is split with auxiliaries
//! `Y_j ≈ D_{j+1} Y_{j+1}` (with `Y_N := Z`) and Bregman variables `B_j`.
//! One outer iteration walks down the chain: update `D_j` by least squares,
//! then `Y_j` by a two-term least squares (or `Z` by ISTA at the bottom),
//! and finally refreshes every `B_j ← Y_j − D_{j+1} Y_{j+1} − B_j`.
//!
//! Raw iterates may oscillate, so the solver keeps the iterate with the
//! lowest `‖X − D₁…D_N Z‖²_F + λ‖Z‖₁` seen so far and returns that one.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Error, Result};
use crate::greedy::{deep_objective, train_greedy, GreedyConfig, DEFAULT_PER_LAYER_ITERS};
use crate::linalg::{all_finite, ensure_finite, random_unit_dictionary, solve_normal_equations, Matrix, Ridge};
use crate::model::{DeepDictionary, LayerDictionary, SparseCode};
use crate::shallow::dictionary_half_step;
use crate::sparse_ops::{ista_solve_from, lsq_code, normalize_columns, rescale_rows, IstaOptions};

pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-6;
/// Consecutive small-change iterations required before stopping.
pub const STALL_PATIENCE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExactInit {
    Random,
    #[default]
    FromGreedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactConfig {
    pub layer_widths: Vec<usize>,
    pub lambda: f64,
    /// `μ₁ … μ_{N−1}`
    pub mu: Vec<f64>,
    pub max_iters: usize,
    /// Relative objective change treated as converged; 0 disables it.
    pub tol: f64,
    pub nonneg_final: bool,
    pub seed: u64,
    pub init: ExactInit,
    /// Per-layer alternations for the greedy warm start.
    pub greedy_iters: usize,
    pub ista: IstaOptions,
}

impl ExactConfig {
    pub fn new(layer_widths: Vec<usize>) -> Self {
        let n = layer_widths.len();
        Self {
            layer_widths,
            lambda: 1e-3,
            mu: vec![1.0; n.saturating_sub(1)],
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            nonneg_final: true,
            seed: 0,
            init: ExactInit::FromGreedy,
            greedy_iters: DEFAULT_PER_LAYER_ITERS,
            ista: IstaOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.layer_widths.len();
        if n == 0 || self.layer_widths.contains(&0) {
            return Err(invalid(format!("bad layer widths {:?}", self.layer_widths)));
        }
        if self.mu.len() + 1 != n {
            return Err(invalid(format!("{} layers need {} mu values, got {}", n, n - 1, self.mu.len())));
        }
        if let Some(m) = self.mu.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(invalid(format!("mu must be positive, got {m}")));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(invalid(format!("tol must be >= 0, got {}", self.tol)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        self.ista.validate()
    }

    fn greedy(&self) -> GreedyConfig {
        GreedyConfig {
            layer_widths: self.layer_widths.clone(),
            lambda: self.lambda,
            per_layer_iters: self.greedy_iters,
            nonneg_final: self.nonneg_final,
            seed: self.seed,
            ista: self.ista,
        }
    }
}

/// Minimizer of `w₁‖C₁ − A₁Y‖²_F + w₂‖C₂ − A₂Y‖²_F`.
pub fn solve_stacked_lsq(top: (&Matrix, &Matrix, f64), bottom: (&Matrix, &Matrix, f64)) -> Result<Matrix> {
    let (a1, c1, w1) = top;
    let (a2, c2, w2) = bottom;
    if a1.ncols() != a2.ncols() || a1.nrows() != c1.nrows() || a2.nrows() != c2.nrows() || c1.ncols() != c2.ncols() {
        return Err(dims(format!(
            "stacked lsq: A1 {}x{}, C1 {}x{}, A2 {}x{}, C2 {}x{}",
            a1.nrows(),
            a1.ncols(),
            c1.nrows(),
            c1.ncols(),
            a2.nrows(),
            a2.ncols(),
            c2.nrows(),
            c2.ncols()
        )));
    }
    if !(w1 >= 0.0 && w2 >= 0.0) {
        return Err(invalid("stacked lsq weights must be >= 0"));
    }
    let a1t = a1.transpose();
    let a2t = a2.transpose();
    let gram = (&a1t * a1) * w1 + (&a2t * a2) * w2;
    let rhs = (&a1t * c1) * w1 + (&a2t * c2) * w2;
    solve_normal_equations(&gram, &rhs, Ridge::Auto)
}

/// `Y − D_next · next_code − B`
pub fn bregman_update(y: &Matrix, d_next: &Matrix, next_code: &Matrix, b: &Matrix) -> Result<Matrix> {
    if d_next.ncols() != next_code.nrows()
        || d_next.nrows() != y.nrows()
        || next_code.ncols() != y.ncols()
        || b.shape() != y.shape()
    {
        return Err(dims(format!(
            "bregman update: Y {}x{}, D {}x{}, code {}x{}, B {}x{}",
            y.nrows(),
            y.ncols(),
            d_next.nrows(),
            d_next.ncols(),
            next_code.nrows(),
            next_code.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(y - d_next * next_code - b)
}

/// Full variable set of the split problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactState {
    /// `D₁ … D_N`
    pub layers: Vec<Matrix>,
    /// `Y₁ … Y_{N−1}`, `Y_j` is `k_j × s`.
    pub aux: Vec<Matrix>,
    /// `B₁ … B_{N−1}`
    pub bregman: Vec<Matrix>,
    pub code: Matrix,
}

impl ExactState {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Builds a state from dictionaries and a code: `Y_j` are the
    /// least-squares chain codes and `B_j = 0`.
    pub fn from_dictionaries(x: &Matrix, layers: Vec<Matrix>, code: Matrix) -> Result<Self> {
        let mut aux = Vec::with_capacity(layers.len().saturating_sub(1));
        let mut input = x.clone();
        for d in &layers[..layers.len() - 1] {
            let y = lsq_code(d, &input)?;
            input = y.clone();
            aux.push(y);
        }
        let bregman = aux.iter().map(|y| Matrix::zeros(y.nrows(), y.ncols())).collect();
        let state = Self {
            layers,
            aux,
            bregman,
            code,
        };
        state.check_shapes(x)?;
        Ok(state)
    }

    fn check_shapes(&self, x: &Matrix) -> Result<()> {
        let n = self.layers.len();
        if n == 0 || self.aux.len() + 1 != n || self.bregman.len() + 1 != n {
            return Err(dims("state needs N layers, N−1 auxiliaries and N−1 Bregman variables"));
        }
        let mut rows = x.nrows();
        for (j, d) in self.layers.iter().enumerate() {
            if d.nrows() != rows {
                return Err(dims(format!("chain mismatch at layer {}", j + 1)));
            }
            rows = d.ncols();
            let downstream = self.downstream(j);
            if downstream.shape() != (d.ncols(), x.ncols()) {
                return Err(dims(format!("variable below layer {} has the wrong shape", j + 1)));
            }
            if j + 1 < n && self.bregman[j].shape() != self.aux[j].shape() {
                return Err(dims(format!("B_{} and Y_{} differ in shape", j + 1, j + 1)));
            }
        }
        Ok(())
    }

    /// `Y_j` for `j < N−1`, `Z` for the last layer (0-based `j`).
    pub fn downstream(&self, j: usize) -> &Matrix {
        if j + 1 < self.layers.len() {
            &self.aux[j]
        } else {
            &self.code
        }
    }

    fn downstream_mut(&mut self, j: usize) -> &mut Matrix {
        if j + 1 < self.layers.len() {
            &mut self.aux[j]
        } else {
            &mut self.code
        }
    }

    /// Left-hand side that `D_j · downstream(j)` should match: `X` for the
    /// first layer, `Y_{j−1} − B_{j−1}` below it.
    pub fn target(&self, x: &Matrix, j: usize) -> Matrix {
        if j == 0 {
            x.clone()
        } else {
            &self.aux[j - 1] - &self.bregman[j - 1]
        }
    }

    /// Weight on the fidelity term that layer `j` is fitted against.
    fn upper_weight(mu: &[f64], j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            mu[j - 1]
        }
    }

    /// Dictionary sub-problem for layer `j`, then atom normalization. The
    /// scale of each atom moves into the matching row of everything
    /// downstream (`Y_j` or `Z`, `B_j`, and the rows of `D_{j+1}`), which
    /// leaves every product unchanged. For the last layer the least-squares
    /// step is skipped if it would raise `‖T − D_N Z‖²_F + (λ/μ)‖Z‖₁`, for the
    /// others if it would raise `‖T − D_j Y_j‖²_F`; a skipped layer is still
    /// renormalized.
    pub fn update_dictionary(&mut self, x: &Matrix, lambda: f64, mu: &[f64], j: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let last = j + 1 == self.layers.len();
        let weight = if last { lambda / Self::upper_weight(mu, j) } else { 0.0 };
        let target = self.target(x, j);
        let step = dictionary_half_step(&target, self.downstream(j), &self.layers[j], weight, rng)?;
        let (unit, scales) = match step {
            Some(accepted) => accepted,
            // Layers below the first may carry row scales from the layer above.
            None if j > 0 => normalize_columns(&self.layers[j], rng),
            None => return Ok(()),
        };
        self.layers[j] = unit;
        rescale_rows(self.downstream_mut(j), &scales);
        if !last {
            rescale_rows(&mut self.bregman[j], &scales);
            rescale_rows(&mut self.layers[j + 1], &scales);
        }
        Ok(())
    }

    /// Auxiliary sub-problem for `Y_j`, `j < N−1`:
    /// `min w‖T_j − D_j Y‖² + μ_j‖Y − D_{j+1} Y_{j+1} − B_j‖²`.
    pub fn update_aux(&mut self, x: &Matrix, mu: &[f64], j: usize) -> Result<()> {
        let n = self.layers.len();
        if j + 1 >= n {
            return Err(invalid(format!("layer {} has no auxiliary variable", j + 1)));
        }
        let target = self.target(x, j);
        let below = &self.layers[j + 1] * self.downstream(j + 1) + &self.bregman[j];
        let eye = Matrix::identity(self.aux[j].nrows(), self.aux[j].nrows());
        self.aux[j] = solve_stacked_lsq(
            (&self.layers[j], &target, Self::upper_weight(mu, j)),
            (&eye, &below, mu[j]),
        )?;
        Ok(())
    }

    /// Sparse coding sub-problem: ISTA on `(D_N, Y_{N−1} − B_{N−1})` with
    /// weight `λ/μ_{N−1}`, warm-started from the current code.
    pub fn update_code(&mut self, x: &Matrix, lambda: f64, mu: &[f64], ista: &IstaOptions) -> Result<Vec<f64>> {
        let last = self.layers.len() - 1;
        let target = self.target(x, last);
        let weight = lambda / Self::upper_weight(mu, last);
        let out = ista_solve_from(&self.layers[last], &target, weight, &self.code, ista)?;
        self.code = out.code.matrix;
        Ok(out.objective_trace)
    }

    /// `B_j ← Y_j − D_{j+1} Y_{j+1} − B_j` for every split.
    pub fn update_bregman(&mut self) -> Result<()> {
        for j in 0..self.bregman.len() {
            self.bregman[j] = bregman_update(&self.aux[j], &self.layers[j + 1], self.downstream(j + 1), &self.bregman[j])?;
        }
        Ok(())
    }

    /// `‖Y_j − D_{j+1} Y_{j+1}‖_F` for every split.
    pub fn gaps(&self) -> Vec<f64> {
        (0..self.aux.len())
            .map(|j| (&self.aux[j] - &self.layers[j + 1] * self.downstream(j + 1)).norm())
            .collect()
    }

    pub fn objective(&self, x: &Matrix, lambda: f64) -> Result<f64> {
        deep_objective(x, &self.layers, &self.code, lambda)
    }

    fn is_finite(&self) -> bool {
        self.layers.iter().chain(&self.aux).chain(&self.bregman).all(all_finite) && all_finite(&self.code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactIteration {
    pub iter: usize,
    pub objective: f64,
    pub best_objective: f64,
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExactTrace {
    pub iterations: Vec<ExactIteration>,
}

impl ExactTrace {
    /// CSV rows `iter,objective,gap_1,…,gap_{N−1}`.
    pub fn write_csv<W: Write>(&self, mut w: W, n_layers: usize) -> Result<()> {
        let mut header = String::from("iter,objective");
        for j in 1..n_layers {
            header.push_str(&format!(",gap_{j}"));
        }
        writeln!(w, "{header}")?;
        for it in &self.iterations {
            write!(w, "{},{}", it.iter, it.objective)?;
            for g in &it.gaps {
                write!(w, ",{g}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExactFit {
    pub dictionary: DeepDictionary,
    pub code: SparseCode,
    pub trace: ExactTrace,
    /// Objective of the initial state (the greedy solution for `from_greedy`).
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Splitting gaps of the returned state.
    pub final_gaps: Vec<f64>,
    /// The returned (best) state.
    pub state: ExactState,
}

/// Builds the starting state and the RNG used for atom redraws.
pub fn initial_state(x: &Matrix, cfg: &ExactConfig) -> Result<(ExactState, ChaCha8Rng)> {
    cfg.validate()?;
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(dims("empty data matrix"));
    }
    ensure_finite(x, "training data")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let state = match cfg.init {
        ExactInit::Random => {
            let mut rows = x.nrows();
            let layers: Vec<Matrix> = cfg
                .layer_widths
                .iter()
                .map(|&k| {
                    let d = random_unit_dictionary(rows, k, &mut rng);
                    rows = k;
                    d
                })
                .collect();
            let k_last = *cfg.layer_widths.last().unwrap_or(&0);
            let mut state = ExactState::from_dictionaries(x, layers, Matrix::zeros(k_last, x.ncols()))?;
            state.update_code(x, cfg.lambda, &cfg.mu, &cfg.ista.with_nonneg(cfg.nonneg_final))?;
            state
        }
        ExactInit::FromGreedy => {
            let greedy = train_greedy(x, &cfg.greedy())?;
            let layers = greedy.dictionary.matrices().cloned().collect();
            ExactState::from_dictionaries(x, layers, greedy.code.matrix)?
        }
    };
    Ok((state, rng))
}

pub fn train_exact(x: &Matrix, cfg: &ExactConfig) -> Result<ExactFit> {
    let (state, mut rng) = initial_state(x, cfg)?;
    let ista = cfg.ista.with_nonneg(cfg.nonneg_final);
    let initial_objective = state.objective(x, cfg.lambda)?;
    if !initial_objective.is_finite() {
        return Err(Error::Diverged {
            iteration: 0,
            what: "objective".into(),
        });
    }

    let mut best = state.clone();
    let mut best_objective = initial_objective;
    let mut state = state;
    let mut previous = initial_objective;
    let mut stalled = 0;
    let mut trace = ExactTrace::default();
    let n = state.n_layers();

    for iter in 1..=cfg.max_iters {
        for j in 0..n {
            state.update_dictionary(x, cfg.lambda, &cfg.mu, j, &mut rng)?;
            if j + 1 < n {
                state.update_aux(x, &cfg.mu, j)?;
            } else {
                state.update_code(x, cfg.lambda, &cfg.mu, &ista)?;
            }
        }
        state.update_bregman()?;

        if !state.is_finite() {
            return Err(Error::Diverged {
                iteration: iter,
                what: "iterate".into(),
            });
        }
        let objective = state.objective(x, cfg.lambda)?;
        if !objective.is_finite() {
            return Err(Error::Diverged {
                iteration: iter,
                what: "objective".into(),
            });
        }
        if objective < best_objective {
            best_objective = objective;
            best = state.clone();
        }
        trace.iterations.push(ExactIteration {
            iter,
            objective,
            best_objective,
            gaps: state.gaps(),
        });
        log::trace!("exact iter {iter}: objective {objective:.6e}, best {best_objective:.6e}");

        let change = (objective - previous).abs() / previous.abs().max(f64::MIN_POSITIVE);
        stalled = if change < cfg.tol { stalled + 1 } else { 0 };
        previous = objective;
        if stalled >= STALL_PATIENCE {
            break;
        }
    }
    log::debug!(
        "exact: {} iterations, objective {:.6e} -> {:.6e}",
        trace.iterations.len(),
        initial_objective,
        best_objective
    );

    let layers = best
        .layers
        .iter()
        .map(|d| LayerDictionary::new(d.clone(), true))
        .collect();
    Ok(ExactFit {
        dictionary: DeepDictionary::from_layers(layers)?,
        code: SparseCode {
            matrix: best.code.clone(),
            nonneg: cfg.nonneg_final,
            lambda: cfg.lambda,
        },
        trace,
        initial_objective,
        final_objective: best_objective,
        final_gaps: best.gaps(),
        state: best,
    })
}
