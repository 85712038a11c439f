//! Splitting an aggregate signal over a set of appliance models by joint
//! non-negative sparse coding on the concatenated effective dictionaries.

use std::io::Write;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::{unwindowize, write_columns_csv, AGGREGATE_COLUMN};

use crate::error::{dims, invalid, Result};
use crate::linalg::{chain_product, frobenius_sq, l1_norm, Matrix};
use crate::model::{validate, ApplianceModel, LayerDictionary, SignalMatrix};
use crate::sparse_ops::{ista_solve_from, IstaOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisaggConfig {
    pub lambda: f64,
    pub ista: IstaOptions,
    /// Rescale the columns of each effective dictionary to unit norm.
    pub renormalize_effective: bool,
}

impl Default for DisaggConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            ista: IstaOptions {
                max_iters: 2000,
                tol: 1e-9,
                nonneg: true,
                step: None,
            },
            renormalize_effective: true,
        }
    }
}

impl DisaggConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("disaggregation lambda must be > 0, got {}", self.lambda)));
        }
        self.ista.validate()
    }
}

/// `D₁ D₂ … D_N`, optionally with unit columns. A column that multiplies out
/// to zero stays zero.
pub fn effective_dictionary(model: &ApplianceModel, renormalize: bool) -> Result<LayerDictionary> {
    let mut d = chain_product(model.dictionary.matrices())?;
    if renormalize {
        for mut col in d.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
    }
    Ok(LayerDictionary::new(d, renormalize))
}

#[derive(Debug, Clone)]
pub struct DisaggregationResult {
    /// Per-appliance estimates, ordered by appliance id.
    pub estimates: IndexMap<String, SignalMatrix>,
    /// Block of the joint code belonging to each appliance.
    pub codes: IndexMap<String, Matrix>,
    /// `X − Σ estimates`, adjusted so that [`Self::reconstruct`] is exact
    /// wherever floating point permits.
    pub residual: Matrix,
    pub residual_norm: f64,
    /// Joint objective `‖X − D Z‖²_F + λ‖Z‖₁` of the returned code.
    pub objective: f64,
}

impl DisaggregationResult {
    /// Estimates summed in map order, then the residual added last. Equals the
    /// aggregate bit for bit wherever some floating-point residual allows it,
    /// which includes every entry with `X/2 ≤ S ≤ 2X`. Elsewhere the rounding
    /// of `S + R` can skip over `X`, and the result is off by one ulp.
    pub fn reconstruct(&self) -> Matrix {
        let mut total = sum_estimates(self.estimates.values().map(|s| &s.data), self.residual.shape());
        total += &self.residual;
        total
    }
}

fn sum_estimates<'a>(estimates: impl Iterator<Item = &'a Matrix>, shape: (usize, usize)) -> Matrix {
    let mut total = Matrix::zeros(shape.0, shape.1);
    for e in estimates {
        total += e;
    }
    total
}

pub fn disaggregate(x_agg: &SignalMatrix, models: &[ApplianceModel], cfg: &DisaggConfig) -> Result<DisaggregationResult> {
    cfg.validate()?;
    if models.is_empty() {
        return Err(invalid("no appliance models"));
    }
    // Work in id order so the result does not depend on how models are listed.
    let mut order: Vec<&ApplianceModel> = models.iter().collect();
    order.sort_by(|a, b| a.appliance_id.cmp(&b.appliance_id));
    if let Some(w) = order.windows(2).find(|w| w[0].appliance_id == w[1].appliance_id) {
        return Err(invalid(format!("duplicate appliance id {:?}", w[0].appliance_id)));
    }

    let m = x_agg.window_len();
    let mut blocks = Vec::with_capacity(order.len());
    for model in &order {
        if let Some(v) = validate(model).first() {
            return Err(crate::error::Error::InvalidModel(format!("{}: {v}", model.appliance_id)));
        }
        if model.dictionary.window_len() != m {
            return Err(dims(format!(
                "model {:?} has window length {}, aggregate has {}",
                model.appliance_id,
                model.dictionary.window_len(),
                m
            )));
        }
        blocks.push(effective_dictionary(model, cfg.renormalize_effective)?.matrix);
    }

    let total_atoms: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut stacked = Matrix::zeros(m, total_atoms);
    let mut offset = 0;
    for b in &blocks {
        stacked.columns_mut(offset, b.ncols()).copy_from(b);
        offset += b.ncols();
    }

    let x = &x_agg.data;
    let z0 = Matrix::zeros(total_atoms, x.ncols());
    let ista = cfg.ista.with_nonneg(true);
    let out = ista_solve_from(&stacked, x, cfg.lambda, &z0, &ista)?;
    let z = out.code.matrix;
    log::debug!(
        "disaggregation: {} appliances, {} atoms, {} ista iterations",
        order.len(),
        total_atoms,
        out.iterations
    );

    let mut estimates = IndexMap::with_capacity(order.len());
    let mut codes = IndexMap::with_capacity(order.len());
    let mut offset = 0;
    for (model, d) in order.iter().zip(&blocks) {
        let code = z.rows(offset, d.ncols()).into_owned();
        offset += d.ncols();
        let estimate = d * &code;
        estimates.insert(
            model.appliance_id.clone(),
            SignalMatrix::new(estimate, x_agg.window_seconds)?,
        );
        codes.insert(model.appliance_id.clone(), code);
    }

    let sum = sum_estimates(estimates.values().map(|s| &s.data), x.shape());
    let residual = exact_residual(x, &sum);
    let objective = frobenius_sq(&(x - &stacked * &z)) + cfg.lambda * l1_norm(&z);
    Ok(DisaggregationResult {
        estimates,
        codes,
        residual_norm: residual.norm(),
        residual,
        objective,
    })
}

pub const RESIDUAL_COLUMN: &str = "residual";

/// `timestamp,<appliance…>,residual,aggregate`, one row per sample, appliance
/// columns in the order of `result.estimates`. `timestamps` must cover the
/// windowed samples of `x_agg`.
pub fn write_estimates_csv<W: Write>(
    w: W,
    timestamps: &[i64],
    x_agg: &SignalMatrix,
    result: &DisaggregationResult,
) -> Result<()> {
    let mut columns: IndexMap<String, Vec<f64>> = result
        .estimates
        .iter()
        .map(|(id, e)| (id.clone(), unwindowize(&e.data)))
        .collect();
    for reserved in [RESIDUAL_COLUMN, AGGREGATE_COLUMN] {
        if columns.contains_key(reserved) {
            return Err(invalid(format!("appliance id {reserved:?} is reserved")));
        }
    }
    columns.insert(RESIDUAL_COLUMN.into(), unwindowize(&result.residual));
    columns.insert(AGGREGATE_COLUMN.into(), unwindowize(&x_agg.data));
    write_columns_csv(w, timestamps, &columns)
}

/// `X − S`, corrected where needed so that the floating-point sum `S + R`
/// reproduces `X`. Always succeeds for `X/2 ≤ S ≤ 2X` (entrywise), where
/// the difference is exact.
fn exact_residual(x: &Matrix, sum: &Matrix) -> Matrix {
    x.zip_map(sum, |xv, sv| {
        let mut r = xv - sv;
        for _ in 0..4 {
            let back = sv + r;
            if back == xv {
                return r;
            }
            r += xv - back;
        }
        for _ in 0..64 {
            let back = sv + r;
            if back == xv {
                break;
            }
            r = if back < xv { r.next_up() } else { r.next_down() };
        }
        r
    })
}
