//! Long-format CSV files for the three data sources and the pipeline outputs.
//!
//! Missing values are empty fields. Floats are written with the shortest
//! representation that parses back to the same bits, so every writer here
//! round-trips through its reader.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use pvfc_core::evaluation::ScoreTable;
use pvfc_core::features::PixelRanking;
use pvfc_core::geo_solar::{GeoPoint, PanelOrientation};
use pvfc_core::ingestion::{nwp_runs_from_records, GridRecord, GridStack, NwpRecord, NwpRun, SiteMetadata};
use pvfc_core::models::Forecast;
use pvfc_core::regression::Coefficients;
use pvfc_core::{NativeSeries, TimeSeries15, Timestamp, Unit, STEP_SECONDS};

use crate::error::{PvfcError, Result};

pub const PRODUCTION_HEADER: &[&str] = &["site_id", "timestamp_utc", "power_mw"];
pub const METADATA_HEADER: &[&str] =
    &["site_id", "lat", "lon", "tilt_deg", "azimuth_deg", "panel_area_m2", "installed_power_mw"];
pub const SATELLITE_HEADER: &[&str] = &["timestamp_utc", "lat", "lon", "ghi_wm2"];
pub const NWP_HEADER: &[&str] = &["model", "issue_time_utc", "lead_hours", "lat", "lon", "ssrd_jm2"];
pub const RANKING_HEADER: &[&str] = &["rank", "lat", "lon", "distance_km", "pearson_r"];
pub const COEFFICIENTS_HEADER: &[&str] = &["column_name", "weight"];
pub const SCORES_HEADER: &[&str] =
    &["model", "reference", "site", "horizon_minutes", "rmse_wm2", "skill", "n_samples"];
pub const FORECAST_HEADER: &[&str] =
    &["site_id", "issue_time_utc", "horizon_minutes", "target_time_utc", "forecast_wm2", "forecast_index"];
pub const INTERCEPT: &str = "__intercept__";

/// Accepts RFC 3339 timestamps (`2016-05-01T00:00:00Z`, offsets allowed).
pub fn parse_timestamp(s: &str) -> std::result::Result<Timestamp, String> {
    chrono::DateTime::parse_from_rfc3339(s.trim())
        .map(|dt| Timestamp(dt.timestamp()))
        .map_err(|e| format!("invalid timestamp {s:?}: {e}"))
}

/// One data row with its line number and named field access.
pub struct Row<'a> {
    file: &'a str,
    line: u64,
    record: &'a csv::StringRecord,
    cols: &'a [usize],
    names: &'a [&'a str],
}

impl Row<'_> {
    pub fn line(&self) -> u64 {
        self.line
    }

    pub fn err(&self, msg: impl Into<String>) -> PvfcError {
        PvfcError::format(self.file, Some(self.line), msg)
    }

    pub fn str(&self, i: usize) -> &str {
        self.record.get(self.cols[i]).unwrap_or("").trim()
    }

    pub fn opt_f64(&self, i: usize) -> Result<Option<f64>> {
        let s = self.str(i);
        if s.is_empty() {
            return Ok(None);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(self.err(format!("invalid {} value {s:?}", self.names[i]))),
        }
    }

    pub fn f64(&self, i: usize) -> Result<f64> {
        self.opt_f64(i)?.ok_or_else(|| self.err(format!("missing {}", self.names[i])))
    }

    pub fn parsed<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        let s = self.str(i);
        s.parse().map_err(|_| self.err(format!("invalid {} value {s:?}", self.names[i])))
    }

    pub fn timestamp(&self, i: usize) -> Result<Timestamp> {
        parse_timestamp(self.str(i)).map_err(|e| self.err(e))
    }

    pub fn text(&self, i: usize) -> Result<String> {
        let s = self.str(i);
        if s.is_empty() {
            return Err(self.err(format!("empty {}", self.names[i])));
        }
        Ok(s.to_string())
    }
}

/// Runs `f` over every data row of a CSV with the required columns (in any
/// order; extra columns are ignored).
pub fn for_each_row<R: Read>(
    input: R,
    file: &str,
    required: &[&str],
    mut f: impl FnMut(&Row<'_>) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    if header.iter().all(|h| h.trim().is_empty()) {
        return Err(PvfcError::format(file, None, "no data rows"));
    }
    let mut cols = Vec::with_capacity(required.len());
    for name in required {
        match header.iter().position(|h| h.trim() == *name) {
            Some(i) => cols.push(i),
            None => return Err(PvfcError::format(file, Some(1), format!("missing column {name:?} in header"))),
        }
    }
    let mut record = csv::StringRecord::new();
    let mut rows = 0usize;
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(file, e)),
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|v| v.trim().is_empty()) {
            continue;
        }
        if record.len() < header.len() {
            return Err(PvfcError::format(file, Some(line), format!("expected {} fields, got {}", header.len(), record.len())));
        }
        rows += 1;
        f(&Row { file, line, record: &record, cols: &cols, names: required })?;
    }
    if rows == 0 {
        return Err(PvfcError::format(file, None, "no data rows"));
    }
    Ok(())
}

fn csv_error(file: &str, e: csv::Error) -> PvfcError {
    let line = e.position().map(|p| p.line());
    PvfcError::format(file, line, e.to_string())
}

struct CsvOut<W: Write> {
    out: W,
    buf: String,
}

impl<W: Write> CsvOut<W> {
    fn new(out: W, header: &[&str]) -> std::io::Result<Self> {
        let mut w = CsvOut { out, buf: String::new() };
        w.row(header.iter().map(|s| s.to_string()))?;
        Ok(w)
    }

    fn row(&mut self, fields: impl IntoIterator<Item = String>) -> std::io::Result<()> {
        self.buf.clear();
        for (i, f) in fields.into_iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            if f.contains([',', '"', '\n', '\r']) {
                let _ = write!(self.buf, "\"{}\"", f.replace('"', "\"\""));
            } else {
                self.buf.push_str(&f);
            }
        }
        self.buf.push('\n');
        self.out.write_all(self.buf.as_bytes())
    }

    fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ----- production -----

/// Production series per site, on the native step inferred from the rows.
///
/// The step is the smallest gap between consecutive timestamps of a site;
/// rows absent from that grid and empty power fields become masked points.
pub fn read_production<R: Read>(input: R, file: &str) -> Result<Vec<(String, NativeSeries)>> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(u64, Timestamp, Option<f64>)>> = BTreeMap::new();
    for_each_row(input, file, PRODUCTION_HEADER, |r| {
        let site = r.text(0)?;
        let t = r.timestamp(1)?;
        let p = r.opt_f64(2)?;
        if !rows.contains_key(&site) {
            order.push(site.clone());
        }
        rows.entry(site).or_default().push((r.line(), t, p));
        Ok(())
    })?;
    let mut out = Vec::with_capacity(order.len());
    for site in order {
        let mut pts = rows.remove(&site).unwrap_or_default();
        pts.sort_by_key(|p| (p.1, p.0));
        for w in pts.windows(2) {
            if w[0].1 == w[1].1 {
                return Err(PvfcError::format(file, Some(w[1].0), format!("duplicate timestamp {} for site {site}", w[1].1)));
            }
        }
        let step = pts.windows(2).map(|w| w[1].1 .0 - w[0].1 .0).min().unwrap_or(STEP_SECONDS);
        let start = pts[0].1;
        let n = ((pts[pts.len() - 1].1 .0 - start.0) / step) as usize + 1;
        let mut values = vec![0.0; n];
        let mut valid = vec![false; n];
        for (line, t, p) in &pts {
            let off = t.0 - start.0;
            if off % step != 0 {
                return Err(PvfcError::format(file, Some(*line), format!("timestamp {t} is off the {step} s native step")));
            }
            let i = (off / step) as usize;
            if let Some(v) = p {
                values[i] = *v;
                valid[i] = true;
            }
        }
        let series = NativeSeries::new(start, step, values, valid, Unit::MegaWatt)?;
        out.push((site, series));
    }
    Ok(out)
}

pub fn write_production<W: Write>(out: W, sites: &[(String, NativeSeries)]) -> std::io::Result<()> {
    let mut w = CsvOut::new(out, PRODUCTION_HEADER)?;
    for (site, s) in sites {
        for i in 0..s.len() {
            let v = if s.valid[i] { Some(s.values[i]) } else { None };
            w.row([site.clone(), s.time_at(i).to_string(), opt(v)])?;
        }
    }
    w.finish()
}

/// A 15-minute series viewed as a native series with a 900 s step.
pub fn native_from_15min(s: &TimeSeries15) -> NativeSeries {
    NativeSeries {
        start: s.start(),
        step_seconds: STEP_SECONDS,
        values: s.values().to_vec(),
        valid: s.mask().to_vec(),
        unit: s.unit(),
    }
}

pub fn read_metadata<R: Read>(input: R, file: &str) -> Result<Vec<SiteMetadata>> {
    let mut out: Vec<SiteMetadata> = Vec::new();
    for_each_row(input, file, METADATA_HEADER, |r| {
        let id = r.text(0)?;
        if out.iter().any(|m| m.site_id == id) {
            return Err(r.err(format!("duplicate site id {id}")));
        }
        let loc = GeoPoint::new(r.f64(1)?, r.f64(2)?).map_err(|e| r.err(e.to_string()))?;
        let orient = PanelOrientation::new(r.f64(3)?, r.f64(4)?).map_err(|e| r.err(e.to_string()))?;
        let meta = SiteMetadata::new(id, loc, orient, r.f64(5)?, r.f64(6)?).map_err(|e| r.err(e.to_string()))?;
        out.push(meta);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_metadata<W: Write>(out: W, sites: &[SiteMetadata]) -> std::io::Result<()> {
    let mut w = CsvOut::new(out, METADATA_HEADER)?;
    for m in sites {
        w.row([
            m.site_id.clone(),
            m.location.latitude_deg.to_string(),
            m.location.longitude_deg.to_string(),
            m.orientation.tilt_deg.to_string(),
            m.orientation.azimuth_deg.to_string(),
            m.panel_area_m2.to_string(),
            m.installed_power_mw.to_string(),
        ])?;
    }
    w.finish()
}

// ----- satellite -----

pub fn read_satellite<R: Read>(input: R, file: &str) -> Result<GridStack> {
    let mut records = Vec::new();
    for_each_row(input, file, SATELLITE_HEADER, |r| {
        let ghi = r.opt_f64(3)?;
        if ghi.is_some_and(|g| g < 0.0) {
            return Err(r.err("negative GHI"));
        }
        records.push(GridRecord { time: r.timestamp(0)?, lat: r.f64(1)?, lon: r.f64(2)?, ghi });
        Ok(())
    })?;
    GridStack::from_records(&records).map_err(|e| PvfcError::format(file, None, e.to_string()))
}

pub fn write_satellite<W: Write>(out: W, grid: &GridStack) -> std::io::Result<()> {
    let mut w = CsvOut::new(out, SATELLITE_HEADER)?;
    for r in grid.to_records() {
        w.row([r.time.to_string(), r.lat.to_string(), r.lon.to_string(), opt(r.ghi)])?;
    }
    w.finish()
}

// ----- NWP -----

pub fn read_nwp<R: Read>(input: R, file: &str) -> Result<Vec<NwpRun>> {
    let mut records = Vec::new();
    for_each_row(input, file, NWP_HEADER, |r| {
        records.push(NwpRecord {
            model: r.text(0)?,
            issue_time: r.timestamp(1)?,
            lead_hours: r.parsed(2)?,
            lat: r.f64(3)?,
            lon: r.f64(4)?,
            ssrd_jm2: r.opt_f64(5)?,
        });
        Ok(())
    })?;
    nwp_runs_from_records(&records).map_err(|e| PvfcError::format(file, None, e.to_string()))
}

pub fn write_nwp<W: Write>(out: W, runs: &[NwpRun]) -> std::io::Result<()> {
    let mut w = CsvOut::new(out, NWP_HEADER)?;
    for run in runs {
        for r in run.to_records() {
            w.row([
                r.model,
                r.issue_time.to_string(),
                r.lead_hours.to_string(),
                r.lat.to_string(),
                r.lon.to_string(),
                opt(r.ssrd_jm2),
            ])?;
        }
    }
    w.finish()
}

// ----- outputs -----

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub rank: usize,
    pub lat: f64,
    pub lon: f64,
    pub distance_km: f64,
    pub pearson_r: f64,
}

pub fn write_ranking<W: Write>(out: W, ranking: &PixelRanking) -> std::io::Result<()> {
    let mut w = CsvOut::new(out, RANKING_HEADER)?;
    for (i, e) in ranking.entries.iter().enumerate() {
        w.row([(i + 1).to_string(), e.lat.to_string(), e.lon.to_string(), e.distance_km.to_string(), e.pearson_r.to_string()])?;
    }
    w.finish()
}

pub fn read_ranking<R: Read>(input: R, file: &str) -> Result<Vec<RankRow>> {
    let mut out = Vec::new();
    for_each_row(input, file, RANKING_HEADER, |r| {
        out.push(RankRow { rank: r.parsed(0)?, lat: r.f64(1)?, lon: r.f64(2)?, distance_km: r.f64(3)?, pearson_r: r.f64(4)? });
        Ok(())
    })?;
    Ok(out)
}

/// Intercept first, then one row per column in design-matrix order.
pub fn write_coefficients<W: Write>(out: W, c: &Coefficients) -> std::io::Result<()> {
    let mut w = CsvOut::new(out, COEFFICIENTS_HEADER)?;
    w.row([INTERCEPT.to_string(), c.intercept.to_string()])?;
    for (name, weight) in c.names.iter().zip(&c.weights) {
        w.row([name.clone(), weight.to_string()])?;
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRows {
    pub intercept: f64,
    pub names: Vec<String>,
    pub weights: Vec<f64>,
}

pub fn read_coefficients<R: Read>(input: R, file: &str) -> Result<CoefficientRows> {
    let mut intercept = None;
    let mut names = Vec::new();
    let mut weights = Vec::new();
    for_each_row(input, file, COEFFICIENTS_HEADER, |r| {
        let name = r.text(0)?;
        let w = r.f64(1)?;
        if name == INTERCEPT {
            if intercept.replace(w).is_some() {
                return Err(r.err("duplicate intercept row"));
            }
        } else {
            names.push(name);
            weights.push(w);
        }
        Ok(())
    })?;
    let intercept = intercept.ok_or_else(|| PvfcError::format(file, None, format!("missing {INTERCEPT} row")))?;
    Ok(CoefficientRows { intercept, names, weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub model: String,
    pub reference: Option<String>,
    pub site: String,
    pub horizon_minutes: u64,
    pub rmse_wm2: f64,
    pub skill: Option<f64>,
    pub n_samples: usize,
}

/// Flattens a score table; `skill` is filled where the table has a skill
/// row against `reference`.
pub fn score_records(table: &ScoreTable, reference: Option<&str>) -> Vec<ScoreRecord> {
    table
        .rows
        .iter()
        .map(|r| ScoreRecord {
            model: r.model.clone(),
            reference: reference.map(str::to_string),
            site: r.site.clone(),
            horizon_minutes: r.horizon_steps as u64 * (STEP_SECONDS as u64 / 60),
            rmse_wm2: r.rmse_wm2,
            skill: reference.and_then(|_| table.skill(&r.model, &r.site, r.horizon_steps)),
            n_samples: r.n_samples,
        })
        .collect()
}

pub fn write_scores<W: Write>(out: W, rows: &[ScoreRecord]) -> std::io::Result<()> {
    let mut w = CsvOut::new(out, SCORES_HEADER)?;
    for r in rows {
        w.row([
            r.model.clone(),
            r.reference.clone().unwrap_or_default(),
            r.site.clone(),
            r.horizon_minutes.to_string(),
            r.rmse_wm2.to_string(),
            opt(r.skill),
            r.n_samples.to_string(),
        ])?;
    }
    w.finish()
}

pub fn read_scores<R: Read>(input: R, file: &str) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for_each_row(input, file, SCORES_HEADER, |r| {
        let reference = r.str(1);
        out.push(ScoreRecord {
            model: r.text(0)?,
            reference: (!reference.is_empty()).then(|| reference.to_string()),
            site: r.text(2)?,
            horizon_minutes: r.parsed(3)?,
            rmse_wm2: r.f64(4)?,
            skill: r.opt_f64(5)?,
            n_samples: r.parsed(6)?,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Aggregate (`site = ALL`) rows only, one line per (horizon, model).
pub fn write_scores_by_horizon<W: Write>(out: W, rows: &[ScoreRecord], site: &str) -> std::io::Result<()> {
    let mut w = CsvOut::new(out, &["horizon_minutes", "model", "rmse_wm2", "skill"])?;
    let mut sel: Vec<&ScoreRecord> = rows.iter().filter(|r| r.site == site).collect();
    let model_pos = |m: &str| rows.iter().position(|r| r.model == m).unwrap_or(usize::MAX);
    sel.sort_by_key(|r| (r.horizon_minutes, model_pos(&r.model)));
    for r in sel {
        w.row([r.horizon_minutes.to_string(), r.model.clone(), r.rmse_wm2.to_string(), opt(r.skill)])?;
    }
    w.finish()
}

pub fn write_forecasts<W: Write>(out: W, site_id: &str, forecasts: &[Forecast]) -> std::io::Result<()> {
    let mut w = CsvOut::new(out, FORECAST_HEADER)?;
    for f in forecasts {
        w.row([
            site_id.to_string(),
            f.issue_time.to_string(),
            (f.horizon_steps as i64 * STEP_SECONDS / 60).to_string(),
            f.target_time().to_string(),
            f.value_wm2.to_string(),
            f.value_index.to_string(),
        ])?;
    }
    w.finish()
}
