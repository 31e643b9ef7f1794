//! Fitted models on disk: a `key=value` manifest plus one coefficient CSV per
//! horizon (and the pixel ranking it was built from, when satellite inputs
//! are used). Weights are stored with round-trip float formatting, so a
//! reloaded model predicts bit-identically.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use pvfc_core::features::ColumnSource;
use pvfc_core::models::{Estimator, FittedModel, HorizonModel, ModelSpec, RankLag, Variant};
use pvfc_core::regression::{Coefficients, FitDiagnostics, FitMethod, LassoConfig};
use pvfc_core::TimeSpan;

use crate::error::{PvfcError, Result};
use crate::formats::{parse_timestamp, read_coefficients, write_coefficients, write_ranking};

const FORMAT_TAG: &str = "pvfc-model 1";
const MANIFEST: &str = "model.txt";

fn coef_file(h: usize) -> String {
    format!("h{h:02}.csv")
}

fn ranking_file(h: usize) -> String {
    format!("h{h:02}_ranking.csv")
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// Writes `model` into `dir` (created if needed), replacing earlier files.
pub fn save_model(dir: &Path, model: &FittedModel) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| PvfcError::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| PvfcError::io(dir, e))?;
    let spec = &model.spec;
    let mut kv: Vec<(String, String)> = vec![
        ("format".into(), FORMAT_TAG.into()),
        ("name".into(), spec.name.clone()),
        ("variant".into(), spec.variant.label().into()),
        ("lags".into(), spec.lags.to_string()),
        ("neighbor_k".into(), spec.neighbor_k.to_string()),
        ("satellite_pixels".into(), spec.satellite_pixels.map(|n| n.to_string()).unwrap_or_default()),
        ("nwp_model".into(), spec.nwp_model.clone().unwrap_or_default()),
        ("horizons".into(), join(&spec.horizons)),
        ("radius_km".into(), spec.radius_km.to_string()),
        (
            "rank_lag".into(),
            match spec.rank_lag {
                RankLag::Fixed(l) => l.to_string(),
                RankLag::Horizon => "horizon".into(),
            },
        ),
    ];
    match spec.estimator {
        Estimator::Ols => kv.push(("estimator".into(), "ols".into())),
        Estimator::Lasso(c) => {
            kv.push(("estimator".into(), "lasso".into()));
            kv.push(("lasso.lambda".into(), c.lambda.to_string()));
            kv.push(("lasso.max_iter".into(), c.max_iter.to_string()));
            kv.push(("lasso.tol".into(), c.tol.to_string()));
            kv.push(("lasso.path_length".into(), c.path_length.to_string()));
            kv.push(("lasso.path_ratio".into(), c.path_ratio.to_string()));
        }
    }
    kv.push(("site_id".into(), model.site_id.clone()));
    kv.push(("neighbors".into(), model.neighbors.join(",")));
    kv.push(("train_start".into(), model.train_span.start.to_string()));
    kv.push(("train_end".into(), model.train_span.end.to_string()));
    kv.push(("fitted".into(), join(&model.per_horizon.keys().copied().collect::<Vec<_>>())));
    for (h, hm) in &model.per_horizon {
        kv.push((format!("h{h}.n_rows"), hm.n_rows.to_string()));
        kv.push((format!("h{h}.lambda"), hm.lambda.map(|l| l.to_string()).unwrap_or_default()));
        let path = dir.join(coef_file(*h));
        let f = fs::File::create(&path).map_err(|e| PvfcError::io(&path, e))?;
        write_coefficients(BufWriter::new(f), &hm.coefficients).map_err(|e| PvfcError::io(&path, e))?;
        if let Some(r) = &hm.ranking {
            let path = dir.join(ranking_file(*h));
            let f = fs::File::create(&path).map_err(|e| PvfcError::io(&path, e))?;
            write_ranking(BufWriter::new(f), r).map_err(|e| PvfcError::io(&path, e))?;
        }
    }
    for (h, reason) in &model.missing {
        kv.push((format!("missing.h{h}"), one_line(reason)));
    }
    let text: String = kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| PvfcError::io(&path, e))
}

fn join(v: &[usize]) -> String {
    v.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",")
}

pub fn model_exists(dir: &Path) -> bool {
    dir.join(MANIFEST).is_file()
}

struct Manifest {
    path: PathBuf,
    kv: BTreeMap<String, String>,
}

impl Manifest {
    fn err(&self, msg: impl Into<String>) -> PvfcError {
        PvfcError::format(&self.path.display().to_string(), None, msg)
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.kv.get(key).map(String::as_str).ok_or_else(|| self.err(format!("missing key {key}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse().map_err(|_| self.err(format!("invalid value {v:?} for {key}")))
    }

    fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        let v = self.get(key)?;
        if v.is_empty() {
            return Ok(None);
        }
        v.parse().map(Some).map_err(|_| self.err(format!("invalid value {v:?} for {key}")))
    }

    fn list(&self, key: &str) -> Result<Vec<usize>> {
        let v = self.get(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(|s| s.parse().map_err(|_| self.err(format!("invalid list {v:?} for {key}")))).collect()
    }
}

pub fn load_model(dir: &Path) -> Result<FittedModel> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| PvfcError::io(&path, e))?;
    let mut kv = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| PvfcError::format(&path.display().to_string(), Some(i as u64 + 1), "expected key=value"))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let m = Manifest { path, kv };
    if m.get("format")? != FORMAT_TAG {
        return Err(m.err("unsupported model format"));
    }
    let estimator = match m.get("estimator")? {
        "ols" => Estimator::Ols,
        "lasso" => Estimator::Lasso(LassoConfig {
            lambda: m.parse("lasso.lambda")?,
            max_iter: m.parse("lasso.max_iter")?,
            tol: m.parse("lasso.tol")?,
            path_length: m.parse("lasso.path_length")?,
            path_ratio: m.parse("lasso.path_ratio")?,
        }),
        other => return Err(m.err(format!("unknown estimator {other:?}"))),
    };
    let rank_lag = match m.get("rank_lag")? {
        "horizon" => RankLag::Horizon,
        _ => RankLag::Fixed(m.parse("rank_lag")?),
    };
    let nwp: String = m.get("nwp_model")?.to_string();
    let spec = ModelSpec {
        name: m.get("name")?.to_string(),
        variant: Variant::parse(m.get("variant")?)?,
        lags: m.parse("lags")?,
        neighbor_k: m.parse("neighbor_k")?,
        satellite_pixels: m.opt("satellite_pixels")?,
        nwp_model: (!nwp.is_empty()).then_some(nwp),
        horizons: m.list("horizons")?,
        estimator,
        radius_km: m.parse("radius_km")?,
        rank_lag,
    };
    spec.validate()?;
    let neighbors = m.get("neighbors")?;
    let neighbors: Vec<String> =
        if neighbors.is_empty() { Vec::new() } else { neighbors.split(',').map(str::to_string).collect() };
    let ts = |key: &str| -> Result<pvfc_core::Timestamp> { parse_timestamp(m.get(key)?).map_err(|e| m.err(e)) };
    let train_span = TimeSpan::new(ts("train_start")?, ts("train_end")?)?;
    let mut per_horizon = BTreeMap::new();
    for h in m.list("fitted")? {
        let path = dir.join(coef_file(h));
        let f = fs::File::open(&path).map_err(|e| PvfcError::io(&path, e))?;
        let rows = read_coefficients(std::io::BufReader::new(f), &path.display().to_string())?;
        let columns = rows.names.iter().map(|n| ColumnSource::parse(n)).collect::<pvfc_core::Result<Vec<_>>>()?;
        let lambda: Option<f64> = m.opt(&format!("h{h}.lambda"))?;
        let method = match lambda {
            Some(lambda) => FitMethod::Lasso { lambda },
            None => FitMethod::Ols,
        };
        let coefficients = Coefficients {
            intercept: rows.intercept,
            names: rows.names,
            weights: rows.weights,
            standardization: Vec::new(),
            diagnostics: FitDiagnostics { method, iterations: 0, converged: true, objective_trace: Vec::new(), warnings: Vec::new() },
        };
        let n_rows = m.parse(&format!("h{h}.n_rows"))?;
        per_horizon.insert(h, HorizonModel { horizon_steps: h, columns, coefficients, ranking: None, lambda, n_rows });
    }
    let mut missing = Vec::new();
    for (k, v) in &m.kv {
        if let Some(h) = k.strip_prefix("missing.h") {
            let h = h.parse().map_err(|_| m.err(format!("invalid key {k}")))?;
            missing.push((h, v.clone()));
        }
    }
    missing.sort();
    Ok(FittedModel { spec, site_id: m.get("site_id")?.to_string(), neighbors, per_horizon, train_span, missing })
}
