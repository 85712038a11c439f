//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p deep-disagg --test acceptance -- --nocapture`
//! (the binary prints regardless; `--nocapture` is accepted and ignored).

use std::path::Path;
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deep_disagg::data::synth::{synth_generate, SynthConfig};
use deep_disagg::data::{concat_windows, read_columns_csv, split_homes, windowize, HomeDataset};
use deep_disagg::disagg::{write_estimates_csv, RESIDUAL_COLUMN};
use deep_disagg::exact::{train_exact, ExactConfig, ExactInit, ExactState};
use deep_disagg::greedy::{deep_objective, train_greedy, GreedyConfig};
use deep_disagg::linalg::{random_gaussian, Matrix};
use deep_disagg::shallow::{learn_shallow, ShallowConfig};
use deep_disagg::sparse_ops::{ista_solve, lasso_objective, IstaOptions};
use deep_disagg::{
    disagg_accuracy, disaggregate, normalized_error, train_appliance, validate, ApplianceModel, DisaggConfig,
    SignalMatrix, SolverKind, TrainingConfig,
};

// Criterion 2
const MIN_ACCURACY: f64 = 0.85;
const MAX_RUNTIME: Duration = Duration::from_secs(300);
const WINDOW_LEN: usize = 64;
const WIDTHS: [usize; 2] = [24, 12];
const LAMBDA: f64 = 1e-3;
const TRAIN_FRACTION: f64 = 0.8;
// Criterion 3
const ORDERING_SLACK: f64 = 1e-9;
const ORDERING_SEEDS: u64 = 10;
// Criterion 4
const MONOTONE_SLACK: f64 = 1e-9;
const MONOTONE_SEEDS: u64 = 20;
// Criterion 5
const DEGENERATION_RTOL: f64 = 1e-6;
const DEGENERATION_INSTANCES: u64 = 5;
const DEGENERATION_WARM_ITERS: usize = 100;
const DEGENERATION_ITERS: usize = 100;
// Criterion 6
const ISTA_ORACLE_SLACK: f64 = 1e-6;
const ISTA_INSTANCES: u64 = 10;
/// ISTA run to convergence; the default relative-change stop (1e-6) is
/// reported alongside but bounds the per-step decrease, not the gap.
const ISTA_CONVERGED: IstaOptions = IstaOptions {
    max_iters: 200_000,
    tol: 1e-15,
    nonneg: false,
    step: None,
};
// Criterion 7
const GRADIENT_RTOL: f64 = 1e-8;
const GRADIENT_SEEDS: u64 = 10;
// Criterion 8
const METRIC_TOL: f64 = 1e-15;
// Criterion 9
const UNIT_NORM_TOL: f64 = 1e-12;
// Criterion 10
const STOPPING_ITERS: usize = 200;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// The data set of the end-to-end criteria: 3 appliances with 2-layer
/// cascades, 5 homes of 50 windows split 4/1.
fn end_to_end_data(seed: u64) -> Result<(Vec<HomeDataset>, Vec<HomeDataset>, Vec<String>), String> {
    let cfg = SynthConfig {
        n_appliances: 3,
        layer_widths: WIDTHS.to_vec(),
        window_len: WINDOW_LEN,
        n_homes: 5,
        windows_per_home: 50,
        density: 0.2,
        noise_std: 0.0,
        seed,
        ..SynthConfig::default()
    };
    let (homes, _) = synth_generate(&cfg).map_err(e2s)?;
    let (train, test) = split_homes(homes, TRAIN_FRACTION, seed).map_err(e2s)?;
    Ok((train, test, cfg.appliance_ids()))
}

fn training_matrix(train: &[HomeDataset], id: &str) -> Result<SignalMatrix, String> {
    let parts = train
        .iter()
        .map(|h| windowize(&h.appliance_series[id], WINDOW_LEN))
        .collect::<Result<Vec<_>, _>>()
        .map_err(e2s)?;
    concat_windows(&parts).map_err(e2s)
}

struct EndToEnd {
    models: Vec<ApplianceModel>,
    codes: Vec<Matrix>,
    test_home: HomeDataset,
}

fn criterion_2(state: &mut Option<EndToEnd>) -> Outcome {
    let start = Instant::now();
    let (train, test, ids) = end_to_end_data(0)?;
    check(train.iter().all(|h| h.timestamps().len() == 50 * WINDOW_LEN), || "bad home size".into())?;
    let mut models = Vec::new();
    let mut codes = Vec::new();
    for id in &ids {
        let x = training_matrix(&train, id)?;
        check(x.n_windows() == 200, || format!("{} training windows", x.n_windows()))?;
        let mut cfg = TrainingConfig::new(SolverKind::Exact, WIDTHS.to_vec());
        cfg.lambda = LAMBDA;
        cfg.mu = vec![1.0];
        cfg.init = ExactInit::FromGreedy;
        let out = train_appliance(id, &x, &cfg).map_err(e2s)?;
        models.push(out.model);
        codes.push(out.code.matrix);
    }
    let home = test.into_iter().next().ok_or("no test home")?;
    let agg = windowize(home.aggregate(), WINDOW_LEN).map_err(e2s)?;
    check(agg.n_windows() == 50, || format!("{} test windows", agg.n_windows()))?;
    let result = disaggregate(&agg, &models, &DisaggConfig::default()).map_err(e2s)?;
    let elapsed = start.elapsed();

    let truth: IndexMap<String, Matrix> = home
        .appliance_series
        .iter()
        .map(|(id, s)| Ok((id.clone(), windowize(s, WINDOW_LEN)?.data)))
        .collect::<Result<_, deep_disagg::Error>>()
        .map_err(e2s)?;
    let est: IndexMap<String, Matrix> = result.estimates.iter().map(|(k, v)| (k.clone(), v.data.clone())).collect();
    let acc = disagg_accuracy(&truth, &est).map_err(e2s)?;
    *state = Some(EndToEnd {
        models,
        codes,
        test_home: home,
    });
    let detail = format!("accuracy {acc:.4} (min {MIN_ACCURACY}), runtime {elapsed:.2?} (max {MAX_RUNTIME:?})");
    check(acc >= MIN_ACCURACY && elapsed <= MAX_RUNTIME, || detail.clone())?;
    Ok(detail)
}

fn criterion_3() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut improved = 0;
    let mut gain_sum = 0.0;
    for seed in 0..ORDERING_SEEDS {
        let (train, _, ids) = end_to_end_data(seed)?;
        for id in &ids {
            let x = training_matrix(&train, id)?.data;
            let mut cfg = ExactConfig::new(WIDTHS.to_vec());
            cfg.lambda = LAMBDA;
            cfg.seed = seed;
            cfg.init = ExactInit::FromGreedy;
            let greedy = train_greedy(
                &x,
                &GreedyConfig {
                    layer_widths: cfg.layer_widths.clone(),
                    lambda: cfg.lambda,
                    per_layer_iters: cfg.greedy_iters,
                    nonneg_final: cfg.nonneg_final,
                    seed,
                    ista: cfg.ista,
                },
            )
            .map_err(e2s)?;
            let greedy_obj = greedy.dictionary.objective(&x, &greedy.code.matrix, LAMBDA).map_err(e2s)?;
            let exact = train_exact(&x, &cfg).map_err(e2s)?;
            let exact_obj = exact.dictionary.objective(&x, &exact.code.matrix, LAMBDA).map_err(e2s)?;
            worst = worst.max(exact_obj - greedy_obj);
            if exact_obj < greedy_obj {
                improved += 1;
            }
            gain_sum += 1.0 - exact_obj / greedy_obj;
            check(exact_obj <= greedy_obj + ORDERING_SLACK, || {
                format!("seed {seed} {id}: exact {exact_obj:.12e} > greedy {greedy_obj:.12e}")
            })?;
        }
    }
    Ok(format!(
        "{} runs, max(exact - greedy) = {worst:.3e} (slack {ORDERING_SLACK:e}), exact lower in {improved}, mean reduction {:.2}%",
        ORDERING_SEEDS * 3,
        100.0 * gain_sum / (ORDERING_SEEDS * 3) as f64
    ))
}

fn criterion_4() -> Outcome {
    let mut steps = 0;
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..MONOTONE_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x = random_gaussian(16, 40, &mut rng).map(f64::abs);
        let fit = learn_shallow(
            &x,
            &ShallowConfig {
                seed,
                ..ShallowConfig::new(8)
            },
        )
        .map_err(e2s)?;
        for (i, w) in fit.trace.windows(2).enumerate() {
            steps += 1;
            worst = worst.max(w[1].objective - w[0].objective);
            check(w[1].objective <= w[0].objective + MONOTONE_SLACK, || {
                format!(
                    "seed {seed}, half-step {}: {:.12e} -> {:.12e}",
                    i + 1,
                    w[0].objective,
                    w[1].objective
                )
            })?;
        }
    }
    Ok(format!(
        "{steps} half-steps over {MONOTONE_SEEDS} seeds, largest increase {worst:.3e}"
    ))
}

fn criterion_5() -> Outcome {
    let ista = IstaOptions {
        max_iters: 5000,
        tol: 1e-10,
        ..IstaOptions::default()
    };
    let mut worst: f64 = 0.0;
    for inst in 0..DEGENERATION_INSTANCES {
        let (homes, _) = synth_generate(&SynthConfig {
            n_appliances: 1,
            layer_widths: vec![8],
            window_len: 16,
            n_homes: 1,
            windows_per_home: 40,
            seed: 100 + inst,
            ..SynthConfig::default()
        })
        .map_err(e2s)?;
        let x = windowize(&homes[0].appliance_series[0], 16).map_err(e2s)?;
        let total = DEGENERATION_WARM_ITERS + DEGENERATION_ITERS;
        let seed = 7;

        let mut shallow = TrainingConfig::new(SolverKind::Shallow, vec![8]);
        shallow.iters = total;
        shallow.seed = seed;
        shallow.ista = ista;
        let s = train_appliance("a", &x, &shallow).map_err(e2s)?;
        let s_obj = s.trace.final_objective().ok_or("empty trace")?;

        let mut greedy = shallow.clone();
        greedy.solver = SolverKind::Greedy;
        let g = train_appliance("a", &x, &greedy).map_err(e2s)?;
        let g_obj = g.trace.final_objective().ok_or("empty trace")?;

        let mut exact = shallow.clone();
        exact.solver = SolverKind::Exact;
        exact.mu = vec![];
        exact.greedy_iters = DEGENERATION_WARM_ITERS;
        exact.iters = DEGENERATION_ITERS;
        exact.tol = 0.0;
        let e = train_appliance("a", &x, &exact).map_err(e2s)?;
        let e_obj = e.trace.final_objective().ok_or("empty trace")?;

        for (name, obj) in [("greedy", g_obj), ("exact", e_obj)] {
            let rel = (obj - s_obj).abs() / s_obj.abs();
            worst = worst.max(rel);
            check(rel <= DEGENERATION_RTOL, || {
                format!("instance {inst}: {name} {obj:.12e} vs shallow {s_obj:.12e} (rel {rel:.3e})")
            })?;
        }
    }
    Ok(format!(
        "{DEGENERATION_INSTANCES} instances, worst relative gap {worst:.3e} (tol {DEGENERATION_RTOL:e})"
    ))
}

/// Cyclic coordinate descent to convergence; each coordinate update is the
/// exact one-dimensional minimizer.
fn coordinate_descent(d: &Matrix, x: &[f64], lambda: f64, nonneg: bool) -> Vec<f64> {
    let (m, k) = d.shape();
    let mut z = vec![0.0; k];
    for _ in 0..100_000 {
        let mut moved: f64 = 0.0;
        for j in 0..k {
            let mut rho = 0.0;
            let mut nn = 0.0;
            for i in 0..m {
                let mut r = x[i];
                for l in 0..k {
                    if l != j {
                        r -= d[(i, l)] * z[l];
                    }
                }
                rho += d[(i, j)] * r;
                nn += d[(i, j)] * d[(i, j)];
            }
            let t = lambda / 2.0;
            let v = if rho > t {
                (rho - t) / nn
            } else if rho < -t && !nonneg {
                (rho + t) / nn
            } else {
                0.0
            };
            moved = moved.max((v - z[j]).abs());
            z[j] = v;
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

fn criterion_6() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut worst_default = f64::NEG_INFINITY;
    for inst in 0..ISTA_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + inst);
        let d = random_gaussian(4, 3, &mut rng);
        let x = random_gaussian(4, 1, &mut rng);
        let lambda = rng.gen_range(0.05..1.0);
        for nonneg in [false, true] {
            let oracle_z = Matrix::from_vec(3, 1, coordinate_descent(&d, x.as_slice(), lambda, nonneg));
            let oracle = lasso_objective(&d, &x, &oracle_z, lambda);

            let opts = IstaOptions { nonneg, ..ISTA_CONVERGED };
            let z = ista_solve(&d, &x, lambda, &opts).map_err(e2s)?.matrix;
            let ours = lasso_objective(&d, &x, &z, lambda);
            worst = worst.max(ours - oracle);
            check(ours <= oracle + ISTA_ORACLE_SLACK, || {
                format!("instance {inst} (nonneg {nonneg}): ista {ours:.12e} vs oracle {oracle:.12e}")
            })?;

            let opts = IstaOptions { nonneg, ..IstaOptions::default() };
            let z = ista_solve(&d, &x, lambda, &opts).map_err(e2s)?.matrix;
            worst_default = worst_default.max(lasso_objective(&d, &x, &z, lambda) - oracle);
        }
    }
    Ok(format!(
        "{} solves, max(ista - oracle) = {worst:.3e} (slack {ISTA_ORACLE_SLACK:e}); with default stopping {worst_default:.3e}",
        ISTA_INSTANCES * 2
    ))
}

fn rel_gradient(grad: &Matrix, scale: f64) -> f64 {
    grad.norm() / scale.max(f64::MIN_POSITIVE)
}

fn criterion_7() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..GRADIENT_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let (m, k1, k2, k3, s) = (20, 14, 10, 6, 60);
        let x = random_gaussian(m, s, &mut rng);
        let mu = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
        let lambda = LAMBDA;
        let mut st = ExactState {
            layers: vec![
                random_gaussian(m, k1, &mut rng),
                random_gaussian(k1, k2, &mut rng),
                random_gaussian(k2, k3, &mut rng),
            ],
            aux: vec![random_gaussian(k1, s, &mut rng), random_gaussian(k2, s, &mut rng)],
            bregman: vec![random_gaussian(k1, s, &mut rng), random_gaussian(k2, s, &mut rng)],
            code: random_gaussian(k3, s, &mut rng).map(f64::abs),
        };
        let mut redraw = ChaCha8Rng::seed_from_u64(seed);

        // P1: min_D1 ‖X − D1 Y1‖²
        st.update_dictionary(&x, lambda, &mu, 0, &mut redraw).map_err(e2s)?;
        let (d1, y1) = (&st.layers[0], &st.aux[0]);
        let g = (d1 * y1 - &x) * y1.transpose();
        let r = rel_gradient(&g, (d1 * y1 * y1.transpose()).norm() + (&x * y1.transpose()).norm());
        worst = worst.max(r);
        check(r <= GRADIENT_RTOL, || format!("seed {seed} P1: {r:.3e}"))?;

        // P2: min_Y1 ‖X − D1 Y1‖² + μ1‖Y1 − D2 Y2 − B1‖²
        st.update_aux(&x, &mu, 0).map_err(e2s)?;
        let (d1, y1, d2, y2, b1) = (&st.layers[0], &st.aux[0], &st.layers[1], &st.aux[1], &st.bregman[0]);
        let below = d2 * y2 + b1;
        let g = d1.transpose() * (d1 * y1 - &x) + (y1 - &below) * mu[0];
        let scale = (d1.transpose() * d1 * y1).norm() + (d1.transpose() * &x).norm() + mu[0] * (y1.norm() + below.norm());
        let r = rel_gradient(&g, scale);
        worst = worst.max(r);
        check(r <= GRADIENT_RTOL, || format!("seed {seed} P2: {r:.3e}"))?;

        // P3: min_D2 ‖Y1 − B1 − D2 Y2‖²
        st.update_dictionary(&x, lambda, &mu, 1, &mut redraw).map_err(e2s)?;
        let (d2, y2) = (&st.layers[1], &st.aux[1]);
        let t = &st.aux[0] - &st.bregman[0];
        let g = (d2 * y2 - &t) * y2.transpose();
        let r = rel_gradient(&g, (d2 * y2 * y2.transpose()).norm() + (&t * y2.transpose()).norm());
        worst = worst.max(r);
        check(r <= GRADIENT_RTOL, || format!("seed {seed} P3: {r:.3e}"))?;

        // P4: min_Y2 μ1‖Y1 − B1 − D2 Y2‖² + μ2‖Y2 − D3 Z − B2‖²
        st.update_aux(&x, &mu, 1).map_err(e2s)?;
        let (d2, y2, d3, b2) = (&st.layers[1], &st.aux[1], &st.layers[2], &st.bregman[1]);
        let below = d3 * &st.code + b2;
        let g = d2.transpose() * (d2 * y2 - &t) * mu[0] + (y2 - &below) * mu[1];
        let scale = mu[0] * ((d2.transpose() * d2 * y2).norm() + (d2.transpose() * &t).norm()) + mu[1] * (y2.norm() + below.norm());
        let r = rel_gradient(&g, scale);
        worst = worst.max(r);
        check(r <= GRADIENT_RTOL, || format!("seed {seed} P4: {r:.3e}"))?;

        // P5: min_D3 ‖Y2 − B2 − D3 Z‖²
        let before = st.layers[2].clone();
        st.update_dictionary(&x, lambda, &mu, 2, &mut redraw).map_err(e2s)?;
        check(st.layers[2] != before, || format!("seed {seed} P5: update was skipped"))?;
        let (d3, z) = (&st.layers[2], &st.code);
        let t = &st.aux[1] - &st.bregman[1];
        let g = (d3 * z - &t) * z.transpose();
        let r = rel_gradient(&g, (d3 * z * z.transpose()).norm() + (&t * z.transpose()).norm());
        worst = worst.max(r);
        check(r <= GRADIENT_RTOL, || format!("seed {seed} P5: {r:.3e}"))?;
    }
    Ok(format!(
        "{} sub-problem solves, worst relative gradient {worst:.3e} (tol {GRADIENT_RTOL:e})",
        GRADIENT_SEEDS * 5
    ))
}

fn row_set(items: &[(&str, &[f64])]) -> IndexMap<String, Matrix> {
    items
        .iter()
        .map(|(id, v)| (id.to_string(), Matrix::from_row_slice(1, v.len(), v)))
        .collect()
}

fn criterion_8() -> Outcome {
    let truth = row_set(&[("n1", &[1.0, 1.0]), ("n2", &[1.0, 0.0])]);
    let zero = row_set(&[("n1", &[0.0, 0.0]), ("n2", &[0.0, 0.0])]);
    let hand = row_set(&[("n1", &[1.0, 0.0]), ("n2", &[1.0, 1.0])]);
    let acc = [
        disagg_accuracy(&truth, &truth).map_err(e2s)?,
        disagg_accuracy(&truth, &zero).map_err(e2s)?,
        disagg_accuracy(&truth, &hand).map_err(e2s)?,
    ];
    let row = |v: &[f64]| Matrix::from_row_slice(1, v.len(), v);
    let t = row(&[2.0, 2.0]);
    let ne = [
        normalized_error(&t, &t).map_err(e2s)?,
        normalized_error(&t, &row(&[0.0, 0.0])).map_err(e2s)?,
        normalized_error(&t, &row(&[3.0, 1.0])).map_err(e2s)?,
    ];
    let want_acc = [1.0, 0.5, 2.0 / 3.0];
    let want_ne = [0.0, 1.0, 0.5];
    for (got, want) in acc.iter().zip(&want_acc).chain(ne.iter().zip(&want_ne)) {
        check((got - want).abs() <= METRIC_TOL, || format!("got {got}, want {want}"))?;
    }
    Ok(format!("accuracy {acc:?}, normalized error {ne:?}"))
}

fn criterion_9(state: &Option<EndToEnd>, scratch: &Path) -> Outcome {
    let e2e = state.as_ref().ok_or("end-to-end run did not complete")?;
    let mut columns = 0;
    for (model, code) in e2e.models.iter().zip(&e2e.codes) {
        check(validate(model).is_empty(), || format!("{} invalid", model.appliance_id))?;
        for (l, d) in model.dictionary.matrices().enumerate() {
            for (c, col) in d.column_iter().enumerate() {
                columns += 1;
                let n = col.norm();
                check((n - 1.0).abs() <= UNIT_NORM_TOL, || {
                    format!("{} layer {} column {c}: norm {n}", model.appliance_id, l + 1)
                })?;
            }
        }
        check(code.iter().all(|&v| v >= 0.0), || format!("{}: negative code", model.appliance_id))?;

        let json = model.to_json().map_err(e2s)?;
        let back = ApplianceModel::from_json(&json).map_err(e2s)?;
        check(&back == model, || format!("{}: JSON round trip changed the model", model.appliance_id))?;
        check(back.to_json().map_err(e2s)? == json, || "JSON not byte-stable".into())?;
    }

    let home = &e2e.test_home;
    let agg = windowize(home.aggregate(), WINDOW_LEN).map_err(e2s)?;
    let result = disaggregate(&agg, &e2e.models, &DisaggConfig::default()).map_err(e2s)?;
    let path = scratch.join("estimates.csv");
    let file = std::fs::File::create(&path).map_err(e2s)?;
    let n = agg.data.len();
    write_estimates_csv(file, &home.timestamps()[..n], &agg, &result).map_err(e2s)?;
    let (_, cols) = read_columns_csv(&path).map_err(e2s)?;
    let aggregate = &cols["aggregate"];
    let residual = &cols[RESIDUAL_COLUMN];
    let estimates: Vec<&Vec<f64>> = cols
        .iter()
        .filter(|(k, _)| k.as_str() != "aggregate" && k.as_str() != RESIDUAL_COLUMN)
        .map(|(_, v)| v)
        .collect();
    let mut mismatches = 0;
    for t in 0..n {
        let mut sum = 0.0;
        for e in &estimates {
            sum += e[t];
        }
        if sum + residual[t] != aggregate[t] {
            mismatches += 1;
        }
    }
    check(mismatches == 0, || format!("{mismatches} of {n} output rows do not sum exactly"))?;
    Ok(format!(
        "{columns} unit columns, non-negative codes, {n} output rows sum exactly, {} models round-trip",
        e2e.models.len()
    ))
}

fn criterion_10() -> Outcome {
    let (train, _, ids) = end_to_end_data(0)?;
    let x = training_matrix(&train, &ids[0])?.data;
    let mut cfg = ExactConfig::new(WIDTHS.to_vec());
    cfg.max_iters = STOPPING_ITERS;
    cfg.tol = 0.0;
    let fit = train_exact(&x, &cfg).map_err(e2s)?;
    let len = fit.trace.iterations.len();
    check(len == STOPPING_ITERS, || format!("trace has {len} iterations"))?;
    let objective = deep_objective(&x, &fit.state.layers, &fit.state.code, cfg.lambda).map_err(e2s)?;
    Ok(format!(
        "{len} outer iterations with tol = 0, best objective {objective:.6e}"
    ))
}

fn criterion_1() -> Outcome {
    let readme = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let text = std::fs::read_to_string(&readme).map_err(|e| format!("{}: {e}", readme.display()))?;
    for needle in ["66.13", "72.72", "synthetic"] {
        check(text.contains(needle), || format!("README does not mention {needle:?}"))?;
    }
    Ok("README maps the published aggregate accuracies to the synthetic oracle".into())
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let scratch = tempfile::tempdir().expect("temp dir");
    let mut e2e = None;

    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let wanted = |n: u32| filter.is_empty() || filter.iter().any(|f| f == &n.to_string());
    macro_rules! run {
        ($n:expr, $name:expr, $body:expr) => {
            if wanted($n) {
                let t = Instant::now();
                let out = $body;
                eprintln!("   ({} finished in {:.2?})", $name, t.elapsed());
                results.push(($n, $name, out));
            }
        };
    }
    run!(1, "published accuracies mapped to synthetic oracle", criterion_1());
    run!(2, "synthetic end-to-end recovery", criterion_2(&mut e2e));
    run!(3, "exact objective never above greedy", criterion_3());
    run!(4, "shallow objective trace non-increasing", criterion_4());
    run!(5, "one-layer greedy and exact match shallow", criterion_5());
    run!(6, "ISTA matches coordinate-descent oracle", criterion_6());
    run!(7, "closed-form sub-problems are stationary", criterion_7());
    run!(8, "metric values", criterion_8());
    if wanted(9) && e2e.is_none() && !wanted(2) {
        let _ = criterion_2(&mut e2e);
    }
    run!(9, "invariant suite", criterion_9(&e2e, scratch.path()));
    run!(10, "split Bregman runs exactly max_iters", criterion_10());

    let mut failed = 0;
    println!();
    for (n, name, out) in &results {
        match out {
            Ok(detail) => println!("PASS  {n:>2}. {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {n:>2}. {name}: {why}");
            }
        }
    }
    println!("\n{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
