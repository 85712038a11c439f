//! CSV ingestion, resampling, home-level splits and windowing.
//!
//! The on-disk format is one file per home:
//! `timestamp,<appliance_1>,…,<appliance_n>[,aggregate]`, integer epoch
//! seconds and decimal watts.

pub mod synth;

use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Error, Result};
use crate::linalg::Matrix;
use crate::model::{EnergySeries, SignalMatrix};

pub const TIMESTAMP_COLUMN: &str = "timestamp";
pub const AGGREGATE_COLUMN: &str = "aggregate";

#[derive(Debug, Clone, PartialEq)]
pub struct HomeDataset {
    pub home_id: String,
    pub appliance_series: IndexMap<String, EnergySeries>,
    pub aggregate_series: Option<EnergySeries>,
}

impl HomeDataset {
    /// Checks that every series shares one time axis. A missing aggregate is
    /// filled in as the row-wise sum of the appliances, in column order.
    pub fn new(
        home_id: String,
        appliance_series: IndexMap<String, EnergySeries>,
        aggregate_series: Option<EnergySeries>,
    ) -> Result<Self> {
        let first = appliance_series
            .values()
            .next()
            .ok_or_else(|| invalid(format!("home {home_id:?} has no appliances")))?;
        let ts = first.timestamps().to_vec();
        for (id, s) in &appliance_series {
            if s.timestamps() != ts.as_slice() {
                return Err(dims(format!("home {home_id:?}: appliance {id:?} is on a different time axis")));
            }
        }
        let aggregate = match aggregate_series {
            Some(a) if a.timestamps() != ts.as_slice() => {
                return Err(dims(format!("home {home_id:?}: aggregate is on a different time axis")));
            }
            Some(a) => a,
            None => {
                let mut sum = vec![0.0; ts.len()];
                for s in appliance_series.values() {
                    for (acc, v) in sum.iter_mut().zip(s.values()) {
                        *acc += v;
                    }
                }
                EnergySeries::new(Some(AGGREGATE_COLUMN.into()), ts, sum)?
            }
        };
        Ok(Self {
            home_id,
            appliance_series,
            aggregate_series: Some(aggregate),
        })
    }

    pub fn timestamps(&self) -> &[i64] {
        self.appliance_series[0].timestamps()
    }

    pub fn aggregate(&self) -> &EnergySeries {
        self.aggregate_series
            .as_ref()
            .expect("HomeDataset::new always fills the aggregate")
    }

    /// Applies [`resample_mean`] to every series.
    pub fn resampled(&self, window_seconds: i64) -> Result<Self> {
        let appliances = self
            .appliance_series
            .iter()
            .map(|(id, s)| Ok((id.clone(), resample_mean(s, window_seconds)?)))
            .collect::<Result<_>>()?;
        let aggregate = self
            .aggregate_series
            .as_ref()
            .map(|a| resample_mean(a, window_seconds))
            .transpose()?;
        Self::new(self.home_id.clone(), appliances, aggregate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    DropRow,
    ZeroFill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NegativePolicy {
    Reject,
    #[default]
    Clamp,
}

/// How to treat empty cells and negative readings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CsvSchema {
    pub missing: MissingPolicy,
    pub negatives: NegativePolicy,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads one home. The home id is the file stem. Rows are sorted by
/// timestamp; a repeated timestamp is an error naming both lines.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<HomeDataset> {
    let home_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| invalid(format!("cannot take a home id from {}", path.display())))?
        .to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some(TIMESTAMP_COLUMN) {
        return Err(parse_err(path, 1, format!("first column must be {TIMESTAMP_COLUMN:?}")));
    }
    let mut aggregate_col = None;
    let mut appliance_cols = Vec::new();
    for (i, name) in header.iter().enumerate().skip(1) {
        if name.is_empty() {
            return Err(parse_err(path, 1, format!("column {} has an empty name", i + 1)));
        }
        if header[..i].contains(name) {
            return Err(parse_err(path, 1, format!("duplicate column {name:?}")));
        }
        if name == AGGREGATE_COLUMN {
            aggregate_col = Some(i);
        } else {
            appliance_cols.push(i);
        }
    }
    if appliance_cols.is_empty() {
        return Err(parse_err(path, 1, "no appliance columns"));
    }

    // (line, timestamp, values by column index 1..)
    let mut rows: Vec<(u64, i64, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let ts: i64 = record[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad timestamp {:?}", &record[0])))?;
        let mut values = Vec::with_capacity(header.len() - 1);
        let mut drop = false;
        for (i, field) in record.iter().enumerate().skip(1) {
            let v = if field.is_empty() {
                match schema.missing {
                    MissingPolicy::DropRow => {
                        drop = true;
                        0.0
                    }
                    MissingPolicy::ZeroFill => 0.0,
                }
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(path, line, format!("bad value {field:?} in column {:?}", header[i])))?;
                if !v.is_finite() {
                    return Err(parse_err(path, line, format!("non-finite value in column {:?}", header[i])));
                }
                if v < 0.0 {
                    match schema.negatives {
                        NegativePolicy::Reject => {
                            return Err(parse_err(path, line, format!("negative value in column {:?}", header[i])))
                        }
                        NegativePolicy::Clamp => 0.0,
                    }
                } else {
                    v
                }
            };
            values.push(v);
        }
        if !drop {
            rows.push((line, ts, values));
        }
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    rows.sort_by_key(|r| r.1);
    if let Some(w) = rows.windows(2).find(|w| w[0].1 == w[1].1) {
        let (a, b) = (w[0].0.min(w[1].0), w[0].0.max(w[1].0));
        return Err(parse_err(path, b, format!("duplicate timestamp {} (also on line {a})", w[0].1)));
    }

    let timestamps: Vec<i64> = rows.iter().map(|r| r.1).collect();
    let column = |i: usize| -> Vec<f64> { rows.iter().map(|r| r.2[i - 1]).collect() };
    let mut appliances = IndexMap::with_capacity(appliance_cols.len());
    for &i in &appliance_cols {
        let id = header[i].clone();
        appliances.insert(id.clone(), EnergySeries::new(Some(id), timestamps.clone(), column(i))?);
    }
    let aggregate = aggregate_col
        .map(|i| EnergySeries::new(Some(AGGREGATE_COLUMN.into()), timestamps.clone(), column(i)))
        .transpose()?;
    HomeDataset::new(home_id, appliances, aggregate)
}

/// Writes a home in the format read by [`load_csv`], aggregate last.
pub fn write_home_csv(path: &Path, home: &HomeDataset) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    let mut header = vec![TIMESTAMP_COLUMN.to_string()];
    header.extend(home.appliance_series.keys().cloned());
    header.push(AGGREGATE_COLUMN.into());
    out.write_record(&header)?;
    let aggregate = home.aggregate();
    for (t, ts) in home.timestamps().iter().enumerate() {
        let mut record = Vec::with_capacity(header.len());
        record.push(ts.to_string());
        for s in home.appliance_series.values() {
            record.push(s.values()[t].to_string());
        }
        record.push(aggregate.values()[t].to_string());
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Loads every `*.csv` file of a directory, sorted by file name.
pub fn load_dir(dir: &Path, schema: &CsvSchema) -> Result<Vec<HomeDataset>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(invalid(format!("no .csv files in {}", dir.display())));
    }
    paths.iter().map(|p| load_csv(p, schema)).collect()
}

/// Averages non-overlapping windows of `window_seconds`. The input must be
/// uniformly sampled with a period dividing the window; a trailing partial
/// window is dropped and each output sample is stamped with its window start.
pub fn resample_mean(series: &EnergySeries, window_seconds: i64) -> Result<EnergySeries> {
    let period = series
        .sampling_period()
        .ok_or_else(|| invalid("resampling needs a uniformly sampled series of at least two samples"))?;
    if window_seconds < period {
        return Err(invalid(format!(
            "window of {window_seconds}s is shorter than the sampling period of {period}s"
        )));
    }
    if window_seconds % period != 0 {
        return Err(invalid(format!(
            "window of {window_seconds}s is not a multiple of the sampling period of {period}s"
        )));
    }
    let k = (window_seconds / period) as usize;
    let n = series.len() / k;
    if n == 0 {
        return Err(invalid(format!("series of {} samples is shorter than one window", series.len())));
    }
    let timestamps = (0..n).map(|i| series.timestamps()[i * k]).collect();
    let values = series
        .values()
        .chunks_exact(k)
        .map(|c| c.iter().sum::<f64>() / k as f64)
        .collect();
    EnergySeries::new(series.appliance_id.clone(), timestamps, values)
}

/// Seeded shuffle, then the first part goes to training. The test side gets
/// `floor(n · (1 − train_fraction))` items, but never fewer than one and
/// never all of them.
pub fn split_homes<T>(items: Vec<T>, train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let n = items.len();
    if n < 2 {
        return Err(invalid(format!("need at least 2 homes to split, got {n}")));
    }
    let n_test = ((n as f64 * (1.0 - train_fraction) + 1e-9).floor() as usize).clamp(1, n - 1);
    let mut items = items;
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = items.split_off(n - n_test);
    Ok((items, test))
}

/// Consecutive length-`m` segments as columns; a trailing partial segment is
/// dropped.
pub fn windowize(series: &EnergySeries, m: usize) -> Result<SignalMatrix> {
    if m == 0 {
        return Err(invalid("window length must be >= 1"));
    }
    let n = series.len() / m;
    if n == 0 {
        return Err(invalid(format!("series of {} samples is shorter than a window of {m}", series.len())));
    }
    let data = Matrix::from_column_slice(m, n, &series.values()[..n * m]);
    let period = series.sampling_period().unwrap_or(0) as f64;
    SignalMatrix::new(data, period * m as f64)
}

/// Column-major flattening, the inverse of [`windowize`] on the kept samples.
pub fn unwindowize(x: &Matrix) -> Vec<f64> {
    x.as_slice().to_vec()
}

/// Stacks the windows of several homes side by side, in order.
pub fn concat_windows(parts: &[SignalMatrix]) -> Result<SignalMatrix> {
    let first = parts.first().ok_or_else(|| invalid("nothing to concatenate"))?;
    let m = first.window_len();
    if parts.iter().any(|p| p.window_len() != m) {
        return Err(dims("window lengths differ"));
    }
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
    for p in parts {
        data.extend_from_slice(p.data.as_slice());
    }
    let n = data.len() / m;
    SignalMatrix::new(Matrix::from_vec(m, n, data), first.window_seconds)
}

/// Writes `timestamp,<columns…>` rows; every column must have one value per
/// timestamp.
pub fn write_columns_csv<W: Write>(w: W, timestamps: &[i64], columns: &IndexMap<String, Vec<f64>>) -> Result<()> {
    if let Some((id, _)) = columns.iter().find(|(_, c)| c.len() != timestamps.len()) {
        return Err(dims(format!("column {id:?} does not match the timestamps")));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![TIMESTAMP_COLUMN.to_string()];
    header.extend(columns.keys().cloned());
    out.write_record(&header)?;
    for (t, ts) in timestamps.iter().enumerate() {
        let mut record = vec![ts.to_string()];
        record.extend(columns.values().map(|c| c[t].to_string()));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `timestamp,<columns…>` without any interpretation of the column
/// names. Rows stay in file order.
pub fn read_columns_csv(path: &Path) -> Result<(Vec<i64>, IndexMap<String, Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some(TIMESTAMP_COLUMN) {
        return Err(parse_err(path, 1, format!("first column must be {TIMESTAMP_COLUMN:?}")));
    }
    let mut columns: IndexMap<String, Vec<f64>> = IndexMap::new();
    for name in &header[1..] {
        if columns.insert(name.clone(), Vec::new()).is_some() {
            return Err(parse_err(path, 1, format!("duplicate column {name:?}")));
        }
    }
    let mut timestamps = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        timestamps.push(
            record[0]
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad timestamp {:?}", &record[0])))?,
        );
        for (i, (name, col)) in columns.iter_mut().enumerate() {
            let field = &record[i + 1];
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad value {field:?} in column {name:?}")))?;
            col.push(v);
        }
    }
    Ok((timestamps, columns))
}
