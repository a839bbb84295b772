//! Trial execution: sample, fit, validate, record.

use std::path::Path;

use gekrig::benchmarks::{relative_error, BenchmarkFunction};
use gekrig::doe::{lhs, Criterion};
use gekrig::error::{Error, Result};
use gekrig::models::{
    fit_gek_direct, fit_gek_indirect, fit_gekpls, fit_kpls, fit_kplsk, fit_kriging,
    FittedSurrogate, GeKplsConfig, ModelKind, TrainingData,
};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Validation plans draw from a stream decorrelated from the training seed.
const VALIDATION_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// One trial's outcome. Failed trials keep their slot with NaN metrics and a
/// diagnostic message.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub function: String,
    pub d: usize,
    pub model: String,
    pub h: usize,
    pub m: usize,
    /// Samples this model actually trained on.
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub re: f64,
    pub fit_seconds: f64,
    pub nugget: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExperimentRecord {
    pub fn failed(&self) -> bool {
        !self.re.is_finite()
    }

    /// Grouping key for summaries.
    pub fn config_key(&self) -> (String, usize, String, usize, usize, usize) {
        (
            self.function.clone(),
            self.d,
            self.model.clone(),
            self.h,
            self.m,
            self.n,
        )
    }
}

/// Run all trials of one configuration. Trials are independent and run on
/// the current rayon pool; records come back ordered by trial index.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let function = BenchmarkFunction::<f64>::from_registry_id(&cfg.function)?;
    let kind = cfg.model_kind()?;
    let n_model = cfg.model_samples()?;
    let h = cfg.components()?;
    let m = if kind == ModelKind::GeKpls {
        cfg.extra_points()
    } else {
        0
    };

    let mut records: Vec<ExperimentRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, &function, kind, n_model, h, m, trial))
        .collect();
    records.sort_by_key(|r| r.trial);
    Ok(records)
}

fn run_trial(
    cfg: &ExperimentConfig,
    function: &BenchmarkFunction<f64>,
    kind: ModelKind,
    n_model: usize,
    h: usize,
    m: usize,
    trial: usize,
) -> ExperimentRecord {
    let seed = cfg.base_seed.wrapping_add(trial as u64);
    let mut record = ExperimentRecord {
        function: cfg.function.clone(),
        d: function.d,
        model: kind.name().into(),
        h,
        m,
        n: n_model,
        trial,
        seed,
        re: f64::NAN,
        fit_seconds: f64::NAN,
        nugget: f64::NAN,
        error: None,
    };
    match fit_and_score(cfg, function, kind, n_model, h, m, seed) {
        Ok((re, fit_seconds, nugget)) => {
            record.re = re;
            record.fit_seconds = fit_seconds;
            record.nugget = nugget;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

fn fit_and_score(
    cfg: &ExperimentConfig,
    function: &BenchmarkFunction<f64>,
    kind: ModelKind,
    n_model: usize,
    h: usize,
    m: usize,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let data = sample_training_data(function, n_model, kind.uses_gradients(), seed)?;
    let model = fit_model(kind, &data, h, m, cfg.fota_step, seed)?;

    let val_seed = seed.wrapping_add(VALIDATION_SEED_OFFSET);
    let val = lhs(cfg.n_v, &function.bounds, Criterion::Random, val_seed)?;
    let mut truth = Vec::with_capacity(cfg.n_v);
    let mut preds = Vec::with_capacity(cfg.n_v);
    for row in val.points.rows() {
        let x: Vec<f64> = row.to_vec();
        truth.push(function.eval(&x)?);
        preds.push(model.predict(&x)?);
    }
    let re = relative_error(&truth, &preds)?;
    Ok((re, model.meta.fit_seconds, model.meta.nugget_used))
}

/// Maximin training design plus responses (and gradients when needed).
pub fn sample_training_data(
    function: &BenchmarkFunction<f64>,
    n: usize,
    gradients: bool,
    seed: u64,
) -> Result<TrainingData<f64>> {
    let plan = lhs(n, &function.bounds, Criterion::Maximin, seed)?;
    let y = {
        let mut y = Array1::zeros(n);
        for i in 0..n {
            y[i] = function.eval(&plan.points.row(i).to_vec())?;
        }
        y
    };
    if gradients {
        let mut dy = Array2::zeros((n, function.d));
        for i in 0..n {
            let g = function.grad(&plan.points.row(i).to_vec())?;
            for j in 0..function.d {
                dy[[i, j]] = g[j];
            }
        }
        TrainingData::with_gradients(plan.points.clone(), y, dy, function.bounds.clone())
    } else {
        TrainingData::new(plan.points.clone(), y, function.bounds.clone())
    }
}

/// Dispatch a fit by model kind.
pub fn fit_model(
    kind: ModelKind,
    data: &TrainingData<f64>,
    h: usize,
    m: usize,
    fota_step: f64,
    seed: u64,
) -> Result<FittedSurrogate<f64>> {
    match kind {
        ModelKind::Kriging => fit_kriging(data, seed),
        ModelKind::Kpls => fit_kpls(data, h, seed),
        ModelKind::Kplsk => fit_kplsk(data, h, seed),
        ModelKind::GekIndirect => fit_gek_indirect(data, fota_step, seed),
        ModelKind::GekDirect => fit_gek_direct(data, seed),
        ModelKind::GeKpls => fit_gekpls(data, &GeKplsConfig::new(h, m, fota_step), seed),
    }
}

/// Per-configuration means over successful trials; failures are counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub function: String,
    pub d: usize,
    pub model: String,
    pub h: usize,
    pub m: usize,
    pub n: usize,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub mean_re: f64,
    pub mean_fit_seconds: f64,
}

/// Arithmetic means over trials, grouped by configuration key. Rows appear
/// in sorted key order, independent of completion order.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, usize, String, usize, usize, usize), Vec<&ExperimentRecord>> =
        BTreeMap::new();
    for r in records {
        groups.entry(r.config_key()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((function, d, model, h, m, n), rs)| {
            let ok: Vec<&&ExperimentRecord> = rs.iter().filter(|r| !r.failed()).collect();
            let count = ok.len();
            let (mean_re, mean_fit) = if count > 0 {
                (
                    ok.iter().map(|r| r.re).sum::<f64>() / count as f64,
                    ok.iter().map(|r| r.fit_seconds).sum::<f64>() / count as f64,
                )
            } else {
                (f64::NAN, f64::NAN)
            };
            SummaryRow {
                function,
                d,
                model,
                h,
                m,
                n,
                trials_ok: count,
                trials_failed: rs.len() - count,
                mean_re,
                mean_fit_seconds: mean_fit,
            }
        })
        .collect()
}

const RECORD_HEADERS: [&str; 11] = [
    "function",
    "d",
    "model",
    "h",
    "m",
    "n",
    "trial",
    "seed",
    "re",
    "fit_seconds",
    "nugget",
];

/// Write trial records with the fixed column schema.
pub fn write_records_csv(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(RECORD_HEADERS)
        .map_err(|e| Error::Io(e.to_string()))?;
    for r in records {
        w.write_record(&[
            r.function.clone(),
            r.d.to_string(),
            r.model.clone(),
            r.h.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            format_f64(r.re),
            format_f64(r.fit_seconds),
            format_f64(r.nugget),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
    let expected: Vec<&str> = RECORD_HEADERS.to_vec();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Io(format!(
            "unexpected record CSV headers: {headers:?}"
        )));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Io(e.to_string()))?;
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        let parse_u = |i: usize| -> Result<usize> {
            get(i)
                .parse()
                .map_err(|_| Error::Io(format!("bad integer '{}' in records CSV", get(i))))
        };
        out.push(ExperimentRecord {
            function: get(0),
            d: parse_u(1)?,
            model: get(2),
            h: parse_u(3)?,
            m: parse_u(4)?,
            n: parse_u(5)?,
            trial: parse_u(6)?,
            seed: get(7)
                .parse()
                .map_err(|_| Error::Io("bad seed in records CSV".into()))?,
            re: parse_f64(&get(8))?,
            fit_seconds: parse_f64(&get(9))?,
            nugget: parse_f64(&get(10))?,
            error: None,
        });
    }
    Ok(out)
}

const SUMMARY_HEADERS: [&str; 10] = [
    "function",
    "d",
    "model",
    "h",
    "m",
    "n",
    "trials_ok",
    "trials_failed",
    "mean_re",
    "mean_fit_seconds",
];

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(SUMMARY_HEADERS)
        .map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&[
            r.function.clone(),
            r.d.to_string(),
            r.model.clone(),
            r.h.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            r.trials_ok.to_string(),
            r.trials_failed.to_string(),
            format_f64(r.mean_re),
            format_f64(r.mean_fit_seconds),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Io(e.to_string()))?;
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        let parse_u = |i: usize| -> Result<usize> {
            get(i)
                .parse()
                .map_err(|_| Error::Io("bad integer in summary CSV".into()))
        };
        out.push(SummaryRow {
            function: get(0),
            d: parse_u(1)?,
            model: get(2),
            h: parse_u(3)?,
            m: parse_u(4)?,
            n: parse_u(5)?,
            trials_ok: parse_u(6)?,
            trials_failed: parse_u(7)?,
            mean_re: parse_f64(&get(8))?,
            mean_fit_seconds: parse_f64(&get(9))?,
        });
    }
    Ok(out)
}

/// Round-trip-exact float formatting; NaN marks failed trials.
fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    if s == "NaN" {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| Error::Io(format!("bad float '{s}' in CSV")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record(trial: usize, re: f64) -> ExperimentRecord {
        ExperimentRecord {
            function: "y1:2".into(),
            d: 2,
            model: "kriging".into(),
            h: 0,
            m: 0,
            n: 12,
            trial,
            seed: 100 + trial as u64,
            re,
            fit_seconds: 0.25,
            nugget: 1e-12,
            error: None,
        }
    }

    #[test]
    fn summary_means_and_failure_counts() {
        let mut records = vec![sample_record(0, 0.1), sample_record(1, 0.3)];
        let mut failed = sample_record(2, f64::NAN);
        failed.error = Some("boom".into());
        records.push(failed);
        let rows = summarize(&records);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].mean_re - 0.2).abs() < 1e-15);
        assert_eq!(rows[0].trials_ok, 2);
        assert_eq!(rows[0].trials_failed, 1);

        let single = summarize(&records[..1]);
        assert_eq!(single[0].mean_re, 0.1);
        assert_eq!(single[0].trials_ok, 1);
    }

    #[test]
    fn records_csv_round_trip_bitwise() {
        let dir = std::env::temp_dir().join("gekrig-harness-test-records");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("records.csv");
        let records = vec![
            sample_record(0, 0.12345678901234567),
            sample_record(1, f64::NAN),
        ];
        write_records_csv(&path, &records).unwrap();
        let back = read_records_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.function, b.function);
            assert_eq!(a.trial, b.trial);
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.fit_seconds.to_bits(), b.fit_seconds.to_bits());
            assert_eq!(a.nugget.to_bits(), b.nugget.to_bits());
        }
    }

    #[test]
    fn record_schema_is_fixed() {
        let dir = std::env::temp_dir().join("gekrig-harness-test-schema");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("records.csv");
        write_records_csv(&path, &[sample_record(0, 0.5)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("function,d,model,h,m,n,trial,seed,re,fit_seconds,nugget\n"));
    }
}
