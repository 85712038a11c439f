//! Per-appliance training behind one entry point, whatever the solver.

use std::io::Write;

use crate::error::{invalid, Result};
use crate::exact::{train_exact, ExactConfig, ExactTrace};
use crate::greedy::{train_greedy, GreedyConfig, LayerTrace};
use crate::model::{validate, ApplianceModel, DeepDictionary, SignalMatrix, SolverKind, SparseCode, TrainingConfig};
use crate::shallow::{learn_shallow, HalfStep, ShallowConfig};

#[derive(Debug, Clone)]
pub enum TrainTrace {
    Shallow(Vec<HalfStep>),
    Greedy(Vec<LayerTrace>),
    Exact(ExactTrace),
}

impl TrainTrace {
    /// Shallow: `step,phase,objective,fidelity`; greedy adds a leading
    /// `layer` column; exact: `iter,objective,gap_1,…`.
    pub fn write_csv<W: Write>(&self, mut w: W, n_layers: usize) -> Result<()> {
        match self {
            TrainTrace::Shallow(steps) => {
                writeln!(w, "step,phase,objective,fidelity")?;
                for (i, s) in steps.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", i, phase_name(s), s.objective, s.fidelity)?;
                }
            }
            TrainTrace::Greedy(layers) => {
                writeln!(w, "layer,step,phase,objective,fidelity")?;
                for l in layers {
                    for (i, s) in l.steps.iter().enumerate() {
                        writeln!(w, "{},{},{},{},{}", l.layer, i, phase_name(s), s.objective, s.fidelity)?;
                    }
                }
            }
            TrainTrace::Exact(trace) => trace.write_csv(w, n_layers)?,
        }
        Ok(())
    }

    /// Objective the returned model attains on its training data.
    pub fn final_objective(&self) -> Option<f64> {
        match self {
            TrainTrace::Shallow(steps) => steps.last().map(|s| s.objective),
            TrainTrace::Greedy(layers) => layers.last()?.steps.last().map(|s| s.objective),
            TrainTrace::Exact(trace) => trace.iterations.last().map(|it| it.best_objective),
        }
    }
}

fn phase_name(s: &HalfStep) -> &'static str {
    match s.phase {
        crate::shallow::Phase::Init => "init",
        crate::shallow::Phase::Code => "code",
        crate::shallow::Phase::Dictionary => "dictionary",
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ApplianceModel,
    pub code: SparseCode,
    pub trace: TrainTrace,
}

/// Trains one appliance's cascade on its windows (one window per column).
pub fn train_appliance(appliance_id: &str, x: &SignalMatrix, cfg: &TrainingConfig) -> Result<TrainOutcome> {
    if appliance_id.is_empty() {
        return Err(invalid("empty appliance id"));
    }
    let data = &x.data;
    let (dictionary, code, trace) = match cfg.solver {
        SolverKind::Shallow => {
            if cfg.layer_widths.len() != 1 {
                return Err(invalid(format!(
                    "shallow solver takes one width, got {:?}",
                    cfg.layer_widths
                )));
            }
            let fit = learn_shallow(
                data,
                &ShallowConfig {
                    n_atoms: cfg.layer_widths[0],
                    lambda: cfg.lambda,
                    outer_iters: cfg.iters,
                    nonneg_codes: cfg.nonneg,
                    seed: cfg.seed,
                    ista: cfg.ista,
                },
            )?;
            (
                DeepDictionary::from_layers(vec![fit.dictionary])?,
                fit.code,
                TrainTrace::Shallow(fit.trace),
            )
        }
        SolverKind::Greedy => {
            let fit = train_greedy(
                data,
                &GreedyConfig {
                    layer_widths: cfg.layer_widths.clone(),
                    lambda: cfg.lambda,
                    per_layer_iters: cfg.iters,
                    nonneg_final: cfg.nonneg,
                    seed: cfg.seed,
                    ista: cfg.ista,
                },
            )?;
            (fit.dictionary, fit.code, TrainTrace::Greedy(fit.trace))
        }
        SolverKind::Exact => {
            let fit = train_exact(
                data,
                &ExactConfig {
                    layer_widths: cfg.layer_widths.clone(),
                    lambda: cfg.lambda,
                    mu: cfg.mu.clone(),
                    max_iters: cfg.iters,
                    tol: cfg.tol,
                    nonneg_final: cfg.nonneg,
                    seed: cfg.seed,
                    init: cfg.init,
                    greedy_iters: cfg.greedy_iters,
                    ista: cfg.ista,
                },
            )?;
            (fit.dictionary, fit.code, TrainTrace::Exact(fit.trace))
        }
        SolverKind::Synthetic => return Err(invalid("synthetic models are generated, not trained")),
    };
    let model = ApplianceModel {
        appliance_id: appliance_id.to_string(),
        dictionary,
        training_config: cfg.clone(),
    };
    let broken = validate(&model);
    if let Some(v) = broken.first() {
        return Err(crate::error::Error::InvalidModel(format!("{appliance_id}: {v}")));
    }
    Ok(TrainOutcome { model, code, trace })
}
