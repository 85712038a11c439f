//! Domain types shared across the crate, their invariants, and the model
//! file format.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Error, Result};
use crate::exact::ExactInit;
use crate::linalg::{all_finite, chain_product, Matrix};
use crate::sparse_ops::IstaOptions;

/// Tolerance on column norms for dictionaries flagged `unit_columns`.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Uniformly sampled power readings for one meter channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries {
    pub appliance_id: Option<String>,
    timestamps: Vec<i64>,
    values: Vec<f64>,
}

impl EnergySeries {
    /// Timestamps are epoch seconds and must be strictly increasing; values
    /// must be finite.
    pub fn new(appliance_id: Option<String>, timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(dims(format!(
                "series has {} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "timestamps not strictly increasing at index {}",
                w + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("series value at index {i}")));
        }
        Ok(Self {
            appliance_id,
            timestamps,
            values,
        })
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The common spacing between samples, if there are at least two samples
    /// and the spacing is uniform.
    pub fn sampling_period(&self) -> Option<i64> {
        let first = self.timestamps.get(1)? - self.timestamps[0];
        self.timestamps
            .windows(2)
            .all(|w| w[1] - w[0] == first)
            .then_some(first)
    }
}

/// Matrix whose columns are fixed-length windows of readings.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    pub data: Matrix,
    /// Duration covered by one column.
    pub window_seconds: f64,
}

impl SignalMatrix {
    pub fn new(data: Matrix, window_seconds: f64) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(dims(format!(
                "signal matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !all_finite(&data) {
            return Err(Error::NonFinite("signal matrix".into()));
        }
        Ok(Self {
            data,
            window_seconds,
        })
    }

    pub fn window_len(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_windows(&self) -> usize {
        self.data.ncols()
    }
}

/// One layer of a dictionary cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDictionary {
    pub matrix: Matrix,
    pub unit_columns: bool,
}

impl LayerDictionary {
    pub fn new(matrix: Matrix, unit_columns: bool) -> Self {
        Self {
            matrix,
            unit_columns,
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Cascade `D₁ D₂ … D_N` for one appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepDictionary {
    pub layers: Vec<LayerDictionary>,
    pub layer_widths: Vec<usize>,
}

impl DeepDictionary {
    /// Builds a dictionary from its layers, checking the chain shapes.
    pub fn from_layers(layers: Vec<LayerDictionary>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("deep dictionary needs at least one layer"));
        }
        for (j, pair) in layers.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(dims(format!("chain mismatch at layer {}", j + 2)));
            }
        }
        let layer_widths = layers.iter().map(LayerDictionary::cols).collect();
        Ok(Self {
            layers,
            layer_widths,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Row count of the first layer, i.e. the window length `m`.
    pub fn window_len(&self) -> usize {
        self.layers.first().map_or(0, LayerDictionary::rows)
    }

    pub fn matrices(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().map(|l| &l.matrix)
    }

    /// `D₁ · … · D_N`, of shape `m × k_N`.
    pub fn product(&self) -> Result<Matrix> {
        chain_product(self.matrices())
    }
}

/// Coefficient matrix `Z` paired with a dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub matrix: Matrix,
    pub nonneg: bool,
    /// ℓ1 weight used to produce the code.
    pub lambda: f64,
}

impl SparseCode {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !all_finite(&self.matrix) {
            out.push(Violation::NonFiniteCode);
        }
        if self.nonneg && self.matrix.iter().any(|&v| v < 0.0) {
            out.push(Violation::NegativeCode);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Shallow,
    Greedy,
    Exact,
    /// Ground-truth model emitted by the synthetic generator.
    Synthetic,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Shallow => "shallow",
            SolverKind::Greedy => "greedy",
            SolverKind::Exact => "exact",
            SolverKind::Synthetic => "synthetic",
        })
    }
}

/// Everything needed to rerun the training that produced a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub solver: SolverKind,
    pub layer_widths: Vec<usize>,
    pub lambda: f64,
    /// Coupling weights `μ₁…μ_{N−1}` (exact solver only).
    pub mu: Vec<f64>,
    /// Alternations (shallow), alternations per layer (greedy) or outer
    /// Split Bregman iterations (exact).
    pub iters: usize,
    /// Per-layer alternations of the greedy warm start for `init = from_greedy`.
    pub greedy_iters: usize,
    pub tol: f64,
    pub nonneg: bool,
    pub init: ExactInit,
    pub seed: u64,
    pub ista: IstaOptions,
}

impl TrainingConfig {
    pub fn new(solver: SolverKind, layer_widths: Vec<usize>) -> Self {
        let n = layer_widths.len();
        let iters = match solver {
            SolverKind::Shallow => crate::shallow::DEFAULT_OUTER_ITERS,
            SolverKind::Greedy => crate::greedy::DEFAULT_PER_LAYER_ITERS,
            SolverKind::Exact => crate::exact::DEFAULT_MAX_ITERS,
            SolverKind::Synthetic => 0,
        };
        Self {
            solver,
            layer_widths,
            lambda: 1e-3,
            mu: vec![1.0; n.saturating_sub(1)],
            iters,
            greedy_iters: crate::greedy::DEFAULT_PER_LAYER_ITERS,
            tol: crate::exact::DEFAULT_TOL,
            nonneg: true,
            init: ExactInit::FromGreedy,
            seed: 0,
            ista: IstaOptions::default(),
        }
    }
}

/// A trained (or generating) dictionary cascade for one appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceModel {
    pub appliance_id: String,
    pub dictionary: DeepDictionary,
    pub training_config: TrainingConfig,
}

/// A broken invariant reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyApplianceId,
    NoLayers,
    /// Layer `layer` (1-based) does not chain onto the layer before it.
    ChainMismatch { layer: usize },
    WidthMismatch { layer: usize, declared: usize, actual: usize },
    NonFiniteLayer { layer: usize },
    ZeroColumn { layer: usize, column: usize },
    NonUnitColumn { layer: usize, column: usize, norm: f64 },
    ConfigWidths,
    BadLambda,
    BadMu,
    NonFiniteCode,
    NegativeCode,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyApplianceId => write!(f, "empty appliance id"),
            Violation::NoLayers => write!(f, "no layers"),
            Violation::ChainMismatch { layer } => write!(f, "chain mismatch at layer {layer}"),
            Violation::WidthMismatch {
                layer,
                declared,
                actual,
            } => write!(
                f,
                "width mismatch at layer {layer}: declared {declared}, matrix has {actual} columns"
            ),
            Violation::NonFiniteLayer { layer } => write!(f, "non-finite entry in layer {layer}"),
            Violation::ZeroColumn { .. } => write!(f, "zero column"),
            Violation::NonUnitColumn {
                layer,
                column,
                norm,
            } => write!(f, "column {column} of layer {layer} has norm {norm}"),
            Violation::ConfigWidths => write!(f, "training config widths differ from dictionary"),
            Violation::BadLambda => write!(f, "lambda must be finite and >= 0"),
            Violation::BadMu => write!(f, "mu must hold n_layers - 1 positive weights"),
            Violation::NonFiniteCode => write!(f, "non-finite code entry"),
            Violation::NegativeCode => write!(f, "negative entry in non-negative code"),
        }
    }
}

/// Lists every broken invariant of `model`; empty iff the model is well formed.
pub fn validate(model: &ApplianceModel) -> Vec<Violation> {
    let mut out = Vec::new();
    if model.appliance_id.is_empty() {
        out.push(Violation::EmptyApplianceId);
    }
    let dict = &model.dictionary;
    if dict.layers.is_empty() {
        out.push(Violation::NoLayers);
    }
    for (j, layer) in dict.layers.iter().enumerate() {
        let layer_no = j + 1;
        if j > 0 && dict.layers[j - 1].cols() != layer.rows() {
            out.push(Violation::ChainMismatch { layer: layer_no });
        }
        match dict.layer_widths.get(j) {
            Some(&w) if w == layer.cols() => {}
            declared => out.push(Violation::WidthMismatch {
                layer: layer_no,
                declared: declared.copied().unwrap_or(0),
                actual: layer.cols(),
            }),
        }
        if !all_finite(&layer.matrix) {
            out.push(Violation::NonFiniteLayer { layer: layer_no });
            continue;
        }
        if layer.unit_columns {
            for (c, col) in layer.matrix.column_iter().enumerate() {
                let norm = col.norm();
                if norm == 0.0 {
                    out.push(Violation::ZeroColumn {
                        layer: layer_no,
                        column: c + 1,
                    });
                } else if (norm - 1.0).abs() > UNIT_NORM_TOL {
                    out.push(Violation::NonUnitColumn {
                        layer: layer_no,
                        column: c + 1,
                        norm,
                    });
                }
            }
        }
    }
    if dict.layer_widths.len() > dict.layers.len() {
        out.push(Violation::WidthMismatch {
            layer: dict.layers.len() + 1,
            declared: dict.layer_widths[dict.layers.len()],
            actual: 0,
        });
    }

    let cfg = &model.training_config;
    if cfg.layer_widths != dict.layer_widths {
        out.push(Violation::ConfigWidths);
    }
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        out.push(Violation::BadLambda);
    }
    let mu_ok = cfg.mu.iter().all(|&m| m.is_finite() && m > 0.0);
    let mu_len_ok = cfg.solver != SolverKind::Exact || cfg.mu.len() + 1 == dict.layers.len();
    if !mu_ok || !mu_len_ok {
        out.push(Violation::BadMu);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    unit_columns: bool,
    /// Row-major.
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    appliance_id: String,
    layer_widths: Vec<usize>,
    layers: Vec<LayerRecord>,
    training_config: TrainingConfig,
}

impl ApplianceModel {
    /// Serializes to the JSON model format. Floats are written in shortest
    /// round-trip form, so reading the document back is bit-exact.
    pub fn to_json(&self) -> Result<String> {
        let record = ModelRecord {
            appliance_id: self.appliance_id.clone(),
            layer_widths: self.dictionary.layer_widths.clone(),
            layers: self
                .dictionary
                .layers
                .iter()
                .map(|l| LayerRecord {
                    rows: l.rows(),
                    cols: l.cols(),
                    unit_columns: l.unit_columns,
                    data: l.matrix.transpose().as_slice().to_vec(),
                })
                .collect(),
            training_config: self.training_config.clone(),
        };
        let mut text = serde_json::to_string_pretty(&record)?;
        text.push('\n');
        Ok(text)
    }

    /// Parses the JSON model format and checks every model invariant.
    pub fn from_json(text: &str) -> Result<Self> {
        let record: ModelRecord = serde_json::from_str(text)?;
        let mut layers = Vec::with_capacity(record.layers.len());
        for (j, l) in record.layers.into_iter().enumerate() {
            if l.data.len() != l.rows * l.cols {
                return Err(Error::InvalidModel(format!(
                    "layer {} declares {}x{} but holds {} numbers",
                    j + 1,
                    l.rows,
                    l.cols,
                    l.data.len()
                )));
            }
            layers.push(LayerDictionary::new(
                Matrix::from_row_slice(l.rows, l.cols, &l.data),
                l.unit_columns,
            ));
        }
        let model = ApplianceModel {
            appliance_id: record.appliance_id,
            dictionary: DeepDictionary {
                layers,
                layer_widths: record.layer_widths,
            },
            training_config: record.training_config,
        };
        let violations = validate(&model);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidModel(list.join("; ")));
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
