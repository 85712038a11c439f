use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use indexmap::IndexMap;
use rayon::prelude::*;

use deep_disagg::data::synth::{synth_generate, SynthConfig};
use deep_disagg::data::{
    concat_windows, load_csv, read_columns_csv, split_homes, windowize, write_home_csv, CsvSchema, AGGREGATE_COLUMN,
};
use deep_disagg::disagg::{write_estimates_csv, RESIDUAL_COLUMN};
use deep_disagg::sparse_ops::IstaOptions;
use deep_disagg::{
    disaggregate, evaluate, train_appliance, ApplianceModel, DisaggConfig, EnergySeries, Matrix, TrainingConfig,
};

use crate::args::{DisaggArgs, EvalArgs, SynthArgs, TrainArgs};
use crate::fsutil::{files_with_ext, stem, write_atomic, write_atomic_with};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::plot::truth_vs_estimate_svg;

pub const MODELS_DIR: &str = "models";
pub const TRACES_DIR: &str = "traces";
pub const PLOTS_DIR: &str = "plots";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// Ids become file names, so they must not walk out of the output directory.
fn check_file_id(id: &str) -> Result<()> {
    ensure!(
        !id.is_empty() && id != "." && id != ".." && !id.contains(['/', '\\']),
        "appliance id {id:?} cannot be used as a file name"
    );
    Ok(())
}

fn write_model(path: &Path, model: &ApplianceModel) -> Result<()> {
    write_atomic(path, model.to_json()?.as_bytes())?;
    let back = ApplianceModel::load(path).with_context(|| format!("re-reading {}", path.display()))?;
    ensure!(back == *model, "model {} did not read back identically", path.display());
    Ok(())
}

pub fn synth(a: &SynthArgs, manifest: &mut RunManifest) -> Result<()> {
    let cfg = SynthConfig {
        n_appliances: a.appliances,
        layer_widths: a.widths.clone(),
        window_len: a.window,
        n_homes: a.homes,
        windows_per_home: a.windows_per_home,
        density: a.density,
        noise_std: a.noise,
        seed: a.seed,
        sample_period: a.sample_period,
        start_timestamp: a.start_timestamp,
    };
    let (homes, models) = synth_generate(&cfg)?;
    let (train, test) = split_homes(homes, a.train_fraction, a.seed)?;
    manifest.seed = Some(a.seed);
    manifest.config = serde_json::to_value(&cfg)?;

    let schema = CsvSchema::default();
    for (dir, part) in [("train", &train), ("test", &test)] {
        for home in part.iter() {
            let path = a.out.join(dir).join(format!("{}.csv", home.home_id));
            write_atomic_with(&path, |tmp| Ok(write_home_csv(tmp, home)?))?;
            let back = load_csv(&path, &schema).with_context(|| format!("re-reading {}", path.display()))?;
            ensure!(
                back.appliance_series == home.appliance_series && back.aggregate() == home.aggregate(),
                "{} did not read back identically",
                path.display()
            );
            manifest.outputs.push(path);
        }
    }
    for model in &models {
        let path = a.out.join(MODELS_DIR).join(format!("{}.json", model.appliance_id));
        write_model(&path, model)?;
        manifest.outputs.push(path);
    }
    log::info!("synth: {} train homes, {} test homes, {} appliances", train.len(), test.len(), models.len());
    Ok(())
}

impl TrainArgs {
    pub fn training_config(&self) -> TrainingConfig {
        let mut cfg = TrainingConfig::new(self.solver.into(), self.widths.clone());
        cfg.lambda = self.lambda;
        if let Some(mu) = &self.mu {
            cfg.mu = mu.clone();
        }
        if let Some(iters) = self.iters {
            cfg.iters = iters;
        }
        if let Some(g) = self.greedy_iters {
            cfg.greedy_iters = g;
        }
        cfg.tol = self.tol;
        cfg.init = self.init.into();
        cfg.seed = self.seed;
        if let Some(n) = self.ista_iters {
            cfg.ista.max_iters = n;
        }
        cfg
    }
}

pub fn train(a: &TrainArgs, manifest: &mut RunManifest) -> Result<()> {
    let files = files_with_ext(&a.data, "csv")?;
    let schema = CsvSchema::default();
    let mut homes = Vec::with_capacity(files.len());
    for path in &files {
        let home = load_csv(path, &schema).with_context(|| format!("loading {}", path.display()))?;
        homes.push(match a.resample {
            Some(w) => home.resampled(w).with_context(|| format!("resampling {}", path.display()))?,
            None => home,
        });
    }
    let ids: Vec<String> = match &a.appliances {
        Some(ids) => ids.clone(),
        None => homes[0].appliance_series.keys().cloned().collect(),
    };
    for id in &ids {
        check_file_id(id)?;
        if let Some(h) = homes.iter().find(|h| !h.appliance_series.contains_key(id)) {
            bail!("home {:?} has no appliance {id:?}", h.home_id);
        }
    }
    let cfg = a.training_config();
    manifest.seed = Some(a.seed);
    manifest.config = serde_json::to_value(&cfg)?;
    manifest.inputs = files;

    let outcomes = pool(a.jobs)?.install(|| {
        ids.par_iter()
            .map(|id| {
                let parts = homes
                    .iter()
                    .map(|h| windowize(&h.appliance_series[id], a.window))
                    .collect::<deep_disagg::Result<Vec<_>>>()?;
                let x = concat_windows(&parts)?;
                train_appliance(id, &x, &cfg).with_context(|| format!("training {id:?}"))
            })
            .collect::<Vec<_>>()
    });
    for (id, outcome) in ids.iter().zip(outcomes) {
        let outcome = outcome?;
        let path = a.out.join(MODELS_DIR).join(format!("{id}.json"));
        write_model(&path, &outcome.model)?;
        manifest.outputs.push(path);

        let path = a.out.join(TRACES_DIR).join(format!("{id}.csv"));
        let mut buf = Vec::new();
        outcome.trace.write_csv(&mut buf, outcome.model.dictionary.n_layers())?;
        write_atomic(&path, &buf)?;
        manifest.outputs.push(path);
        log::info!(
            "trained {id:?}: final objective {:.6e}",
            outcome.trace.final_objective().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn load_models(dir: &Path) -> Result<(Vec<PathBuf>, Vec<ApplianceModel>)> {
    let files: Vec<PathBuf> = files_with_ext(dir, "json")?
        .into_iter()
        .filter(|p| p.file_name().is_some_and(|n| n != MANIFEST_FILE))
        .collect();
    ensure!(!files.is_empty(), "no model files in {}", dir.display());
    let models = files
        .iter()
        .map(|p| ApplianceModel::load(p).with_context(|| format!("loading model {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok((files, models))
}

/// Re-reads an estimates file and checks that every row's appliance columns
/// plus the residual add up to the aggregate. Returns how many rows miss it
/// by one ulp, which floating point cannot always avoid.
fn check_estimates(path: &Path, ids: &[String], n_rows: usize) -> Result<usize> {
    let (ts, cols) = read_columns_csv(path)?;
    ensure!(ts.len() == n_rows, "{}: expected {n_rows} rows, read {}", path.display(), ts.len());
    let mut expected: Vec<&str> = ids.iter().map(String::as_str).collect();
    expected.extend([RESIDUAL_COLUMN, AGGREGATE_COLUMN]);
    ensure!(
        cols.keys().map(String::as_str).eq(expected.iter().copied()),
        "{}: unexpected columns",
        path.display()
    );
    let mut off_by_one = 0;
    for t in 0..n_rows {
        let sum = ids.iter().fold(0.0, |acc, id| acc + cols[id.as_str()][t]) + cols[RESIDUAL_COLUMN][t];
        let agg = cols[AGGREGATE_COLUMN][t];
        if sum != agg {
            ensure!(
                sum == agg.next_up() || sum == agg.next_down(),
                "{}: row {} sums to {sum}, aggregate is {agg}",
                path.display(),
                t + 1
            );
            off_by_one += 1;
        }
    }
    Ok(off_by_one)
}

pub fn disaggregate_cmd(a: &DisaggArgs, manifest: &mut RunManifest) -> Result<()> {
    let (model_files, models) = load_models(&a.models)?;
    let m = models[0].dictionary.window_len();
    if let Some(bad) = models.iter().find(|x| x.dictionary.window_len() != m) {
        bail!(
            "model {:?} has window length {}, others have {m}",
            bad.appliance_id,
            bad.dictionary.window_len()
        );
    }
    let inputs = files_with_ext(&a.input, "csv")?;
    let cfg = DisaggConfig {
        lambda: a.lambda,
        ista: IstaOptions {
            max_iters: a.ista_iters,
            tol: a.ista_tol,
            nonneg: true,
            step: None,
        },
        renormalize_effective: true,
    };
    manifest.config = serde_json::to_value(cfg)?;
    manifest.inputs = model_files.into_iter().chain(inputs.iter().cloned()).collect();

    let results = pool(a.jobs)?.install(|| {
        inputs
            .par_iter()
            .map(|path| -> Result<_> {
                let (ts, cols) = read_columns_csv(path)?;
                let agg = cols
                    .get(AGGREGATE_COLUMN)
                    .with_context(|| format!("{} has no {AGGREGATE_COLUMN:?} column", path.display()))?;
                let series = EnergySeries::new(None, ts.clone(), agg.clone())?;
                let x = windowize(&series, m).with_context(|| format!("windowing {}", path.display()))?;
                let result = disaggregate(&x, &models, &cfg).with_context(|| format!("disaggregating {}", path.display()))?;
                Ok((ts, x, result))
            })
            .collect::<Vec<_>>()
    });
    for (path, r) in inputs.iter().zip(results) {
        let (ts, x, result) = r?;
        let n = x.data.len();
        let out = a.out.join(format!("{}.csv", stem(path)?));
        let mut buf = Vec::new();
        write_estimates_csv(&mut buf, &ts[..n], &x, &result)?;
        write_atomic(&out, &buf)?;
        let ids: Vec<String> = result.estimates.keys().cloned().collect();
        let missed = check_estimates(&out, &ids, n)?;
        if missed > 0 {
            log::warn!("{}: {missed} rows reproduce the aggregate only to one ulp", out.display());
        }
        log::info!("{}: residual norm {:.6e}", out.display(), result.residual_norm);
        manifest.outputs.push(out);
    }
    Ok(())
}

/// Appliance columns of a truth file, indexed by timestamp.
struct Truth {
    row_of: HashMap<i64, usize>,
    columns: IndexMap<String, Vec<f64>>,
}

fn read_truth(path: &Path) -> Result<Truth> {
    let (ts, mut columns) = read_columns_csv(path)?;
    columns.shift_remove(AGGREGATE_COLUMN);
    Ok(Truth {
        row_of: ts.iter().enumerate().map(|(i, &t)| (t, i)).collect(),
        columns,
    })
}

/// Pairs estimate files with truth files of the same name when both are
/// directories; two files are paired directly.
fn pair_files(truth: &Path, estimates: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if truth.is_file() && estimates.is_file() {
        return Ok(vec![(truth.to_path_buf(), estimates.to_path_buf())]);
    }
    ensure!(
        truth.is_dir() && estimates.is_dir(),
        "--truth and --estimates must both be files or both be directories"
    );
    files_with_ext(estimates, "csv")?
        .into_iter()
        .filter(|p| p.file_name().is_some_and(|n| n != REPORT_CSV))
        .map(|est| {
            let t = truth.join(est.file_name().expect("listed files have names"));
            ensure!(t.is_file(), "no truth file {} for {}", t.display(), est.display());
            Ok((t, est))
        })
        .collect()
}

pub fn evaluate_cmd(a: &EvalArgs, manifest: &mut RunManifest) -> Result<()> {
    let pairs = pair_files(&a.truth, &a.estimates)?;
    let mut truth_all: IndexMap<String, Vec<f64>> = IndexMap::new();
    let mut est_all: IndexMap<String, Vec<f64>> = IndexMap::new();
    let mut plots = Vec::new();
    for (truth_path, est_path) in &pairs {
        let truth = read_truth(truth_path).with_context(|| format!("reading {}", truth_path.display()))?;
        let (ts, mut est) = read_columns_csv(est_path).with_context(|| format!("reading {}", est_path.display()))?;
        est.shift_remove(RESIDUAL_COLUMN);
        est.shift_remove(AGGREGATE_COLUMN);
        ensure!(!est.is_empty(), "{} has no appliance columns", est_path.display());
        let mut truth_ids: Vec<&String> = truth.columns.keys().collect();
        let mut est_ids: Vec<&String> = est.keys().collect();
        truth_ids.sort();
        est_ids.sort();
        ensure!(
            truth_ids == est_ids,
            "{} and {} cover different appliances: {truth_ids:?} vs {est_ids:?}",
            truth_path.display(),
            est_path.display()
        );
        let rows = ts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                truth.row_of.get(t).copied().with_context(|| {
                    format!(
                        "{} line {}: timestamp {t} not in {}",
                        est_path.display(),
                        i + 2,
                        truth_path.display()
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let home = stem(est_path)?;
        for (id, values) in &est {
            let aligned: Vec<f64> = rows.iter().map(|&r| truth.columns[id][r]).collect();
            if a.plot {
                check_file_id(id)?;
                let path = a.out.join(PLOTS_DIR).join(format!("{home}__{id}.svg"));
                plots.push((path, truth_vs_estimate_svg(&format!("{home} / {id}"), &aligned, values)));
            }
            truth_all.entry(id.clone()).or_default().extend(aligned);
            est_all.entry(id.clone()).or_default().extend_from_slice(values);
        }
        manifest.inputs.push(truth_path.clone());
        manifest.inputs.push(est_path.clone());
    }

    let as_rows = |cols: IndexMap<String, Vec<f64>>| -> IndexMap<String, Matrix> {
        cols.into_iter()
            .map(|(id, v)| (id, Matrix::from_row_slice(1, v.len(), &v)))
            .collect()
    };
    let report = evaluate(&as_rows(truth_all), &as_rows(est_all))?;
    manifest.config = serde_json::json!({ "plot": a.plot });

    let json_path = a.out.join(REPORT_JSON);
    let json = report.to_json()?;
    write_atomic(&json_path, json.as_bytes())?;
    let back: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
    ensure!(
        back["accuracy"].as_f64() == Some(report.accuracy),
        "{} did not read back",
        json_path.display()
    );
    let csv_path = a.out.join(REPORT_CSV);
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_atomic(&csv_path, &buf)?;
    manifest.outputs.extend([json_path, csv_path]);
    for (path, svg) in plots {
        write_atomic(&path, svg.as_bytes())?;
        manifest.outputs.push(path);
    }
    log::info!("accuracy {:.6}", report.accuracy);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use deep_disagg::data::TIMESTAMP_COLUMN;

    #[test]
    fn file_ids() {
        assert!(check_file_id("fridge").is_ok());
        for bad in ["", "..", "a/b", "a\\b"] {
            assert!(check_file_id(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn estimates_check_catches_bad_sums() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let ids = vec!["a".to_string()];
        fs::write(&p, format!("{TIMESTAMP_COLUMN},a,residual,aggregate\n1,0.1,0.2,0.30000000000000004\n")).unwrap();
        assert_eq!(check_estimates(&p, &ids, 1).unwrap(), 0);
        fs::write(&p, format!("{TIMESTAMP_COLUMN},a,residual,aggregate\n1,0.1,0.2,0.3\n")).unwrap();
        assert_eq!(check_estimates(&p, &ids, 1).unwrap(), 1);
        fs::write(&p, format!("{TIMESTAMP_COLUMN},a,residual,aggregate\n1,1,0.2,0.3\n")).unwrap();
        assert!(check_estimates(&p, &ids, 1).is_err());
        fs::write(&p, format!("{TIMESTAMP_COLUMN},b,residual,aggregate\n1,0.1,0.2,0.3\n")).unwrap();
        assert!(check_estimates(&p, &ids, 1).is_err());
    }
}
