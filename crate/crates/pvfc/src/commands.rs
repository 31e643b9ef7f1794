//! The pipeline steps behind each CLI command. Every output goes under the
//! configured directory, and each command also writes a manifest there.
//! Manifests hold the config copy, the tool version and the data timestamps,
//! but no wall-clock time, so reruns produce byte-identical files.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use pvfc_core::bundle::DataBundle;
use pvfc_core::evaluation::{evaluate, EvalOptions, ALL_SITES};
use pvfc_core::features::rank_pixels;
use pvfc_core::ingestion::{mw_to_wm2, resample_to_15min, SiteMetadata};
use pvfc_core::models::{predict_batch, FitPlan, FittedModel, Forecaster, ModelSpec};
use pvfc_core::synthgen::generate;
use pvfc_core::{TimeSeries15, TimeSpan, Unit};

use crate::config::RunConfig;
use crate::error::{PvfcError, Result};
use crate::formats::{self, ScoreRecord};
use crate::persist::{load_model, model_exists, save_model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Ingest,
    Rank,
    Fit,
    Predict,
    Evaluate,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ingest => "ingest",
            Command::Rank => "rank",
            Command::Fit => "fit",
            Command::Predict => "predict",
            Command::Evaluate => "evaluate",
            Command::Report => "report",
        }
    }
}

/// Optional `--model` / `--site` selectors. `model` may list several names
/// separated by commas.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub model: Option<String>,
    pub site: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Done,
    /// Completed, but some parts could not be produced.
    Partial(Vec<String>),
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Done => 0,
            Outcome::Partial(_) => 3,
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, sel: &Selection) -> Result<Outcome> {
    match cmd {
        Command::Simulate => simulate(cfg),
        Command::Ingest => ingest(cfg, sel),
        Command::Rank => rank(cfg, sel),
        Command::Fit => fit(cfg, sel),
        Command::Predict => predict(cfg, sel),
        Command::Evaluate => evaluate_cmd(cfg, sel),
        Command::Report => report(cfg),
    }
}

// ----- helpers -----

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PvfcError::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| PvfcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| PvfcError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| PvfcError::io(path, e))
}

fn fname(path: &Path) -> String {
    path.display().to_string()
}

/// Path as recorded in manifests: relative to the output directory when
/// inside it, so identical runs in different directories match byte for byte.
fn manifest_path(cfg: &RunConfig, path: &Path) -> String {
    fname(path.strip_prefix(&cfg.output_dir).unwrap_or(path))
}

fn write_manifest(cfg: &RunConfig, cmd: Command, lines: &[(String, String)]) -> Result<()> {
    let path = cfg.output_dir.join("manifest").join(format!("{}.txt", cmd.name()));
    let mut text = format!("tool=pvfc {}\ncommand={}\n", env!("CARGO_PKG_VERSION"), cmd.name());
    for (k, v) in lines {
        text.push_str(&format!("{k}={v}\n"));
    }
    if let Some(s) = cfg.train_span {
        text.push_str(&format!("train_span={}/{}\n", s.start, s.end));
    }
    if let Some(s) = cfg.test_span {
        text.push_str(&format!("test_span={}/{}\n", s.start, s.end));
    }
    text.push_str("\n[config]\n");
    text.push_str(&cfg.text);
    if !cfg.text.ends_with('\n') {
        text.push('\n');
    }
    write_file(&path, |w| w.write_all(text.as_bytes()))
}

fn span_line(key: &str, s: TimeSpan) -> (String, String) {
    (key.to_string(), format!("{}/{}", s.start, s.end))
}

/// Reads the configured data files and assembles the model-ready bundle.
pub fn load_bundle(cfg: &RunConfig) -> Result<DataBundle> {
    cfg.require_inputs()?;
    let d = &cfg.data;
    let read_sat = || -> Result<_> {
        if !cfg.use_satellite {
            return Ok(None);
        }
        formats::read_satellite(open(&d.satellite)?, &fname(&d.satellite)).map(Some)
    };
    let read_nwp = || -> Result<_> {
        if !cfg.use_nwp {
            return Ok(Vec::new());
        }
        formats::read_nwp(open(&d.nwp)?, &fname(&d.nwp))
    };
    let read_prod = || -> Result<_> {
        let meta = formats::read_metadata(open(&d.metadata)?, &fname(&d.metadata))?;
        let prod = formats::read_production(open(&d.production)?, &fname(&d.production))?;
        Ok((meta, prod))
    };
    let ((meta, prod), (sat, nwp)) = {
        let (a, (b, c)) = rayon::join(read_prod, || rayon::join(read_sat, read_nwp));
        (a?, (b?, c?))
    };
    for (id, _) in &prod {
        if !meta.iter().any(|m| &m.site_id == id) {
            return Err(PvfcError::format(&fname(&d.metadata), None, format!("no metadata for site {id}")));
        }
    }
    let wanted: Vec<&SiteMetadata> = match &cfg.sites {
        Some(list) => list
            .iter()
            .map(|id| {
                meta.iter()
                    .find(|m| &m.site_id == id)
                    .ok_or_else(|| PvfcError::usage(format!("site {id} is not in {}", fname(&d.metadata))))
            })
            .collect::<Result<_>>()?,
        None => meta.iter().collect(),
    };
    let mut production = Vec::with_capacity(wanted.len());
    for m in wanted {
        let (_, native) = prod
            .iter()
            .find(|(id, _)| *id == m.site_id)
            .ok_or_else(|| PvfcError::format(&fname(&d.production), None, format!("no production rows for site {}", m.site_id)))?;
        let mw = resample_to_15min(native)?;
        production.push((m.clone(), mw_to_wm2(&mw, m)?));
    }
    Ok(DataBundle::assemble(production, sat, &nwp, cfg.bundle)?)
}

fn selected_sites(bundle: &DataBundle, sel: &Selection) -> Result<Vec<String>> {
    match &sel.site {
        Some(s) => {
            if bundle.site(s).is_none() {
                let ids: Vec<&str> = bundle.sites.iter().map(|x| x.meta.site_id.as_str()).collect();
                return Err(PvfcError::usage(format!("unknown site {s:?}; available: {}", ids.join(", "))));
            }
            Ok(vec![s.clone()])
        }
        None => Ok(bundle.sites.iter().map(|s| s.meta.site_id.clone()).collect()),
    }
}

fn selected_models<'a>(cfg: &'a RunConfig, names: Option<&str>) -> Result<Vec<&'a ModelSpec>> {
    let specs: Vec<&ModelSpec> = match names {
        Some(list) => list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|n| cfg.model(n)).collect::<Result<_>>()?,
        None => cfg.models.iter().collect(),
    };
    if specs.is_empty() {
        return Err(PvfcError::usage("no models configured"));
    }
    Ok(specs)
}

pub fn model_dir(cfg: &RunConfig, model: &str, site: &str) -> PathBuf {
    cfg.output_dir.join("models").join(model).join(site)
}

fn load_fitted(cfg: &RunConfig, model: &str, site: &str) -> Result<FittedModel> {
    let dir = model_dir(cfg, model, site);
    if !model_exists(&dir) {
        return Err(PvfcError::format(&fname(&dir), None, format!("model {model} is not fitted for site {site}; run fit first")));
    }
    load_model(&dir)
}

// ----- commands -----

fn simulate(cfg: &RunConfig) -> Result<Outcome> {
    let seed = cfg.seed.ok_or_else(|| PvfcError::usage("simulate needs a seed key in the config"))?;
    let scene = generate(&cfg.scene)?;
    let d = &cfg.data;
    let production: Vec<(String, pvfc_core::NativeSeries)> = scene
        .production
        .iter()
        .map(|(m, s)| -> Result<_> {
            let area = m.panel_area_m2;
            let mw: TimeSeries15 = s.map_valid(Unit::MegaWatt, |v| v * area / 1e6)?;
            Ok((m.site_id.clone(), formats::native_from_15min(&mw)))
        })
        .collect::<Result<_>>()?;
    let metas: Vec<SiteMetadata> = scene.production.iter().map(|(m, _)| m.clone()).collect();
    write_file(&d.production, |w| formats::write_production(w, &production))?;
    write_file(&d.metadata, |w| formats::write_metadata(w, &metas))?;
    write_file(&d.satellite, |w| formats::write_satellite(w, &scene.satellite))?;
    write_file(&d.nwp, |w| formats::write_nwp(w, &scene.nwp_runs))?;
    write_manifest(
        cfg,
        Command::Simulate,
        &[
            ("seed".into(), seed.to_string()),
            span_line("scene_span", cfg.scene.span),
            ("production_csv".into(), manifest_path(cfg, &d.production)),
            ("metadata_csv".into(), manifest_path(cfg, &d.metadata)),
            ("satellite_csv".into(), manifest_path(cfg, &d.satellite)),
            ("nwp_csv".into(), manifest_path(cfg, &d.nwp)),
        ],
    )?;
    Ok(Outcome::Done)
}

fn ingest(cfg: &RunConfig, sel: &Selection) -> Result<Outcome> {
    let bundle = load_bundle(cfg)?;
    let sites = selected_sites(&bundle, sel)?;
    let path = cfg.output_dir.join("ingest").join("summary.csv");
    write_file(&path, |w| {
        writeln!(w, "site_id,start_utc,end_utc,n_steps,n_valid_wm2,n_valid_index,nwp_models")?;
        for id in &sites {
            let s = bundle.site(id).expect("selected site exists");
            let models: Vec<&str> = s.nwp_index.keys().map(String::as_str).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                id,
                s.production.start(),
                s.production.end(),
                s.production.len(),
                s.production.valid_count(),
                s.index.index.valid_count(),
                models.join(";")
            )?;
        }
        Ok(())
    })?;
    let mut lines = vec![];
    if let Some(sat) = &bundle.satellite {
        lines.push(("satellite_cells".to_string(), sat.grid.n_cells().to_string()));
        lines.push(("satellite_frames".to_string(), sat.grid.n_times().to_string()));
    }
    write_manifest(cfg, Command::Ingest, &lines)?;
    Ok(Outcome::Done)
}

fn rank(cfg: &RunConfig, sel: &Selection) -> Result<Outcome> {
    let bundle = load_bundle(cfg)?;
    let sat = bundle.satellite.as_ref().ok_or_else(|| PvfcError::usage("rank needs satellite data (use_satellite=true)"))?;
    let sites = selected_sites(&bundle, sel)?;
    let rankings = sites
        .par_iter()
        .map(|id| {
            let s = bundle.site(id).expect("selected site exists");
            rank_pixels(&s.meta, sat, &s.index.index, cfg.rank_radius_km, cfg.rank_lag, cfg.train_span)
        })
        .collect::<pvfc_core::Result<Vec<_>>>()?;
    for (id, r) in sites.iter().zip(&rankings) {
        let path = cfg.output_dir.join("rank").join(format!("{id}.csv"));
        write_file(&path, |w| formats::write_ranking(w, r))?;
    }
    write_manifest(
        cfg,
        Command::Rank,
        &[("radius_km".into(), cfg.rank_radius_km.to_string()), ("lag_steps".into(), cfg.rank_lag.to_string())],
    )?;
    Ok(Outcome::Done)
}

/// Fits the model at every site, with the (site, horizon) fits in parallel.
pub fn fit_sites(spec: &ModelSpec, sites: &[String], bundle: &DataBundle, train: TimeSpan) -> Result<Vec<FittedModel>> {
    let plans = sites.iter().map(|id| FitPlan::new(spec, id, bundle, train)).collect::<pvfc_core::Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..plans.len()).flat_map(|p| spec.horizons.iter().map(move |h| (p, *h))).collect();
    let mut results: Vec<Vec<(usize, pvfc_core::Result<_>)>> = (0..plans.len()).map(|_| Vec::new()).collect();
    let fitted: Vec<_> = jobs.par_iter().map(|&(p, h)| (p, h, plans[p].fit_horizon(h))).collect();
    for (p, h, r) in fitted {
        results[p].push((h, r));
    }
    plans.into_iter().zip(results).map(|(plan, r)| plan.finish(r).map_err(PvfcError::from)).collect()
}

fn fit(cfg: &RunConfig, sel: &Selection) -> Result<Outcome> {
    let specs = selected_models(cfg, sel.model.as_deref())?;
    let train = cfg.train_span()?;
    let bundle = load_bundle(cfg)?;
    let sites = selected_sites(&bundle, sel)?;
    let mut warnings = Vec::new();
    for spec in &specs {
        let models = fit_sites(spec, &sites, &bundle, train)?;
        for m in &models {
            for (h, why) in &m.missing {
                warnings.push(format!("{} at {}: horizon {h} not fitted: {why}", spec.name, m.site_id));
            }
            save_model(&model_dir(cfg, &spec.name, &m.site_id), m)?;
        }
    }
    let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    write_manifest(cfg, Command::Fit, &[("models".into(), names.join(",")), ("sites".into(), sites.join(","))])?;
    Ok(if warnings.is_empty() { Outcome::Done } else { Outcome::Partial(warnings) })
}

fn predict(cfg: &RunConfig, sel: &Selection) -> Result<Outcome> {
    let specs = selected_models(cfg, sel.model.as_deref())?;
    let test = cfg.test_span()?;
    let bundle = load_bundle(cfg)?;
    let sites = selected_sites(&bundle, sel)?;
    for spec in &specs {
        for site in &sites {
            let model = load_fitted(cfg, &spec.name, site)?;
            let per_h = model
                .per_horizon
                .keys()
                .copied()
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&h| predict_batch(&model, &bundle, test, h, cfg.eval.missing_policy))
                .collect::<pvfc_core::Result<Vec<_>>>()?;
            let all: Vec<_> = per_h.into_iter().flatten().collect();
            let path = cfg.output_dir.join("forecasts").join(&spec.name).join(format!("{site}.csv"));
            write_file(&path, |w| formats::write_forecasts(w, site, &all))?;
        }
    }
    let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    write_manifest(cfg, Command::Predict, &[("models".into(), names.join(",")), ("sites".into(), sites.join(","))])?;
    Ok(Outcome::Done)
}

pub fn scores_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("scores").join("scores.csv")
}

fn evaluate_cmd(cfg: &RunConfig, sel: &Selection) -> Result<Outcome> {
    let mut names: Vec<String> = match (&sel.model, &cfg.eval.models) {
        (Some(m), _) => selected_models(cfg, Some(m))?.iter().map(|s| s.name.clone()).collect(),
        (None, Some(list)) => selected_models(cfg, Some(&list.join(",")))?.iter().map(|s| s.name.clone()).collect(),
        (None, None) => selected_models(cfg, None)?.iter().map(|s| s.name.clone()).collect(),
    };
    if let Some(r) = &cfg.eval.reference {
        cfg.model(r)?;
        if !names.contains(r) {
            names.insert(0, r.clone());
        }
    }
    let test = cfg.test_span()?;
    let bundle = load_bundle(cfg)?;
    let sites = selected_sites(&bundle, sel)?;
    let mut fitted = Vec::new();
    for name in &names {
        for site in &sites {
            fitted.push(load_fitted(cfg, name, site)?);
        }
    }
    let refs: Vec<&dyn Forecaster> = fitted.iter().map(|m| m as &dyn Forecaster).collect();
    let opts = EvalOptions { daytime_filter: cfg.eval.daytime_filter, reference: cfg.eval.reference.clone() };
    let table = evaluate(&refs, &bundle, test, &opts)?;
    let records = formats::score_records(&table, cfg.eval.reference.as_deref());
    write_file(&scores_path(cfg), |w| formats::write_scores(w, &records))?;
    let by_h = cfg.output_dir.join("scores").join("scores_by_horizon.csv");
    write_file(&by_h, |w| formats::write_scores_by_horizon(w, &records, ALL_SITES))?;
    write_manifest(
        cfg,
        Command::Evaluate,
        &[
            ("models".into(), names.join(",")),
            ("reference".into(), cfg.eval.reference.clone().unwrap_or_default()),
            ("sites".into(), sites.join(",")),
        ],
    )?;
    Ok(Outcome::Done)
}

/// One tidy CSV per configured comparison (all models when none is
/// configured), from the aggregate rows of the score file.
fn report(cfg: &RunConfig) -> Result<Outcome> {
    let path = scores_path(cfg);
    let records = formats::read_scores(open(&path)?, &fname(&path))?;
    let all: Vec<ScoreRecord> = records.into_iter().filter(|r| r.site == ALL_SITES).collect();
    if all.is_empty() {
        return Err(PvfcError::format(&fname(&path), None, "no aggregate score rows"));
    }
    let comparisons: Vec<(String, Vec<String>)> = if cfg.report.is_empty() {
        let mut models: Vec<String> = Vec::new();
        for r in &all {
            if !models.contains(&r.model) {
                models.push(r.model.clone());
            }
        }
        vec![("all".to_string(), models)]
    } else {
        cfg.report.clone()
    };
    for (name, models) in &comparisons {
        let mut rows: Vec<&ScoreRecord> = Vec::new();
        for m in models {
            let mut mine: Vec<&ScoreRecord> = all.iter().filter(|r| &r.model == m).collect();
            if mine.is_empty() {
                return Err(PvfcError::format(&fname(&path), None, format!("report {name}: no scores for model {m}")));
            }
            mine.sort_by_key(|r| r.horizon_minutes);
            rows.extend(mine);
        }
        let out = cfg.output_dir.join("report").join(format!("{name}.csv"));
        write_file(&out, |w| {
            writeln!(w, "comparison,model,reference,horizon_minutes,rmse_wm2,skill")?;
            for r in &rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    name,
                    r.model,
                    r.reference.as_deref().unwrap_or(""),
                    r.horizon_minutes,
                    r.rmse_wm2,
                    r.skill.map(|s| s.to_string()).unwrap_or_default()
                )?;
            }
            Ok(())
        })?;
    }
    let names: Vec<&str> = comparisons.iter().map(|(n, _)| n.as_str()).collect();
    write_manifest(cfg, Command::Report, &[("comparisons".into(), names.join(","))])?;
    Ok(Outcome::Done)
}
