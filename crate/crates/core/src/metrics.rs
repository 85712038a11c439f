//! Disaggregation accuracy and per-appliance normalized error.
//!
//! Both metrics are computed over every entry of the per-appliance matrices,
//! so a "timestep" is one sample of one window.

use std::io::Write;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Result};
use crate::linalg::Matrix;

fn check_sets(truth: &IndexMap<String, Matrix>, est: &IndexMap<String, Matrix>) -> Result<(usize, usize)> {
    if truth.is_empty() {
        return Err(invalid("no appliances to evaluate"));
    }
    if truth.len() != est.len() {
        return Err(invalid(format!(
            "truth has {} appliances, estimate has {}",
            truth.len(),
            est.len()
        )));
    }
    let shape = truth[0].shape();
    for (id, t) in truth {
        let e = est
            .get(id)
            .ok_or_else(|| invalid(format!("appliance {id:?} has no estimate")))?;
        if t.shape() != shape || e.shape() != shape {
            return Err(dims(format!(
                "appliance {id:?}: truth {}x{}, estimate {}x{}, expected {}x{}",
                t.nrows(),
                t.ncols(),
                e.nrows(),
                e.ncols(),
                shape.0,
                shape.1
            )));
        }
    }
    Ok(shape)
}

/// `1 − Σ_t Σ_n |ŷ_t⁽ⁿ⁾ − y_t⁽ⁿ⁾| / (2 Σ_t ȳ_t)` with `ȳ_t = Σ_n y_t⁽ⁿ⁾`.
///
/// Appliances are matched by id; their order in either map is irrelevant.
pub fn disagg_accuracy(truth: &IndexMap<String, Matrix>, est: &IndexMap<String, Matrix>) -> Result<f64> {
    check_sets(truth, est)?;
    // Visit appliances in id order so the sums do not depend on map order.
    let mut ids: Vec<&String> = truth.keys().collect();
    ids.sort();
    let mut abs_err = 0.0;
    let mut aggregate = 0.0;
    for id in ids {
        let t = &truth[id];
        let e = &est[id];
        abs_err += t.iter().zip(e.iter()).map(|(a, b)| (b - a).abs()).sum::<f64>();
        aggregate += t.sum();
    }
    if !(aggregate > 0.0) {
        return Err(invalid(format!("aggregate truth energy must be > 0, got {aggregate}")));
    }
    Ok(1.0 - abs_err / (2.0 * aggregate))
}

/// `Σ_t |ŷ_t − y_t| / Σ_t |y_t|`, the ℓ1 error relative to the truth.
pub fn normalized_error(truth: &Matrix, est: &Matrix) -> Result<f64> {
    if truth.shape() != est.shape() {
        return Err(dims(format!(
            "truth {}x{}, estimate {}x{}",
            truth.nrows(),
            truth.ncols(),
            est.nrows(),
            est.ncols()
        )));
    }
    let denom: f64 = truth.iter().map(|v| v.abs()).sum();
    if !(denom > 0.0) {
        return Err(invalid("normalized error undefined for an all-zero truth"));
    }
    let num: f64 = truth.iter().zip(est.iter()).map(|(a, b)| (b - a).abs()).sum();
    Ok(num / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Appliances whose truth is identically zero have no normalized error and
    /// are left out.
    pub per_appliance_error: IndexMap<String, f64>,
    pub n_timesteps: usize,
    pub n_appliances: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Long format: `metric,appliance,value`, accuracy first with an empty
    /// appliance field.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "appliance", "value"])?;
        out.write_record(["accuracy", "", &self.accuracy.to_string()])?;
        for (id, e) in &self.per_appliance_error {
            out.write_record(["normalized_error", id.as_str(), &e.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn evaluate(truth: &IndexMap<String, Matrix>, est: &IndexMap<String, Matrix>) -> Result<EvalReport> {
    let (rows, cols) = check_sets(truth, est)?;
    let accuracy = disagg_accuracy(truth, est)?;
    let mut per_appliance_error = IndexMap::with_capacity(truth.len());
    for (id, t) in truth {
        if t.iter().all(|&v| v == 0.0) {
            log::warn!("appliance {id:?} has no energy in the truth; skipping its normalized error");
            continue;
        }
        per_appliance_error.insert(id.clone(), normalized_error(t, &est[id])?);
    }
    Ok(EvalReport {
        accuracy,
        per_appliance_error,
        n_timesteps: rows * cols,
        n_appliances: truth.len(),
    })
}
