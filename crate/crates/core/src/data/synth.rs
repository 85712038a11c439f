//! Synthetic homes generated from known appliance cascades, so that training
//! and disaggregation can be checked against a ground truth.

use indexmap::IndexMap;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::HomeDataset;
use crate::error::{invalid, Result};
use crate::linalg::{chain_product, Matrix};
use crate::model::{ApplianceModel, DeepDictionary, EnergySeries, LayerDictionary, SolverKind, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_appliances: usize,
    /// Widths of the generating cascade; its depth is the number of layers.
    pub layer_widths: Vec<usize>,
    /// Samples per window (`m`).
    pub window_len: usize,
    pub n_homes: usize,
    pub windows_per_home: usize,
    /// Probability that a code entry is active.
    pub density: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub sample_period: i64,
    pub start_timestamp: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_appliances: 3,
            layer_widths: vec![24, 12],
            window_len: 64,
            n_homes: 5,
            windows_per_home: 50,
            density: 0.2,
            noise_std: 0.0,
            seed: 0,
            sample_period: 600,
            start_timestamp: 1_300_000_000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_appliances == 0 {
            return Err(invalid("n_appliances must be >= 1"));
        }
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return Err(invalid(format!("bad layer widths {:?}", self.layer_widths)));
        }
        if self.window_len == 0 || self.n_homes == 0 || self.windows_per_home == 0 {
            return Err(invalid("window_len, n_homes and windows_per_home must be >= 1"));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(invalid(format!("density must be in (0, 1], got {}", self.density)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if self.sample_period <= 0 {
            return Err(invalid("sample_period must be > 0"));
        }
        Ok(())
    }

    pub fn appliance_ids(&self) -> Vec<String> {
        (1..=self.n_appliances).map(|i| format!("appliance_{i}")).collect()
    }

    pub fn home_ids(&self) -> Vec<String> {
        let width = self.n_homes.to_string().len().max(2);
        (1..=self.n_homes).map(|i| format!("home_{i:0width$}")).collect()
    }
}

/// Layer with entries `|N(0,1)|`, columns scaled to unit norm. Non-negative
/// layers keep every generated window non-negative.
fn positive_layer(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut d = Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal).abs());
    for mut col in d.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        } else {
            col[0] = 1.0;
        }
    }
    d
}

/// Bernoulli(`density`) support with magnitudes uniform on `[0.5, 1.5)`.
fn sparse_code(rows: usize, cols: usize, density: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        if rng.gen_bool(density) {
            rng.gen_range(0.5..1.5)
        } else {
            0.0
        }
    })
}

/// Draws one cascade per appliance, then for every home and appliance a
/// sparse code, the windows `D₁…D_N Z` plus clamped noise, and the aggregate
/// as the appliance sum. Returns the homes and the generating models.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(Vec<HomeDataset>, Vec<ApplianceModel>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ids = cfg.appliance_ids();

    let mut models = Vec::with_capacity(ids.len());
    let mut effective = Vec::with_capacity(ids.len());
    for id in &ids {
        let mut rows = cfg.window_len;
        let layers: Vec<Matrix> = cfg
            .layer_widths
            .iter()
            .map(|&k| {
                let d = positive_layer(rows, k, &mut rng);
                rows = k;
                d
            })
            .collect();
        effective.push(chain_product(&layers)?);
        let mut training_config = TrainingConfig::new(SolverKind::Synthetic, cfg.layer_widths.clone());
        training_config.seed = cfg.seed;
        models.push(ApplianceModel {
            appliance_id: id.clone(),
            dictionary: DeepDictionary::from_layers(layers.into_iter().map(|l| LayerDictionary::new(l, true)).collect())?,
            training_config,
        });
    }

    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| invalid(e.to_string()))?;
    let k_last = *cfg.layer_widths.last().expect("validated non-empty");
    let n_samples = cfg.window_len * cfg.windows_per_home;
    let timestamps: Vec<i64> = (0..n_samples as i64)
        .map(|i| cfg.start_timestamp + i * cfg.sample_period)
        .collect();

    let mut homes = Vec::with_capacity(cfg.n_homes);
    for home_id in cfg.home_ids() {
        let mut series = IndexMap::with_capacity(ids.len());
        for (id, d) in ids.iter().zip(&effective) {
            let z = sparse_code(k_last, cfg.windows_per_home, cfg.density, &mut rng);
            let mut x = d * z;
            if cfg.noise_std > 0.0 {
                x.apply(|v| *v = (*v + noise.sample(&mut rng)).max(0.0));
            }
            series.insert(
                id.clone(),
                EnergySeries::new(Some(id.clone()), timestamps.clone(), x.as_slice().to_vec())?,
            );
        }
        homes.push(HomeDataset::new(home_id, series, None)?);
    }
    Ok((homes, models))
}
