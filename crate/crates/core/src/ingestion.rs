//! Source data types and the transformations that put every source on the
//! common 15-minute UTC grid: resampling, quality check, unit conversion,
//! pixel extraction and NWP de-cumulation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::geo_solar::{ClearSkyProfile, GeoPoint, PanelOrientation};
use crate::series::{NativeSeries, TimeSeries15, Unit};
use crate::time::{TimeSpan, Timestamp, HOUR_SECONDS, STEP_SECONDS};

/// Production at or below this value (series unit) counts as zero.
pub const ZERO_THRESHOLD: f64 = 1e-6;
/// Clear-sky irradiance above which a timestamp counts as daylight, W/m².
pub const DAYLIGHT_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteMetadata {
    pub site_id: String,
    pub location: GeoPoint,
    pub orientation: PanelOrientation,
    pub panel_area_m2: f64,
    pub installed_power_mw: f64,
}

impl SiteMetadata {
    pub fn new(
        site_id: impl Into<String>,
        location: GeoPoint,
        orientation: PanelOrientation,
        panel_area_m2: f64,
        installed_power_mw: f64,
    ) -> Result<Self> {
        let site_id = site_id.into();
        if site_id.is_empty() {
            return Err(invalid("empty site id"));
        }
        if !(panel_area_m2 > 0.0 && panel_area_m2.is_finite()) {
            return Err(invalid(format!("site {site_id}: panel area must be > 0")));
        }
        if !(installed_power_mw > 0.0 && installed_power_mw.is_finite()) {
            return Err(invalid(format!("site {site_id}: installed power must be > 0")));
        }
        Ok(SiteMetadata { site_id, location, orientation, panel_area_m2, installed_power_mw })
    }
}

/// Linear interpolation from a native step onto the 15-minute grid.
///
/// A grid point is valid only when both bracketing native samples are valid.
pub fn resample_to_15min(series: &NativeSeries) -> Result<TimeSeries15> {
    let step = series.step_seconds;
    if step <= 0 || lcm(step, STEP_SECONDS) > HOUR_SECONDS {
        return Err(invalid(format!("unsupported native step of {step} s")));
    }
    if series.is_empty() {
        return Err(invalid("empty native series"));
    }
    let first = series.start.ceil_to(STEP_SECONDS);
    let last = series.time_at(series.len() - 1);
    let mut values = Vec::new();
    let mut valid = Vec::new();
    let mut t = first;
    while t <= last {
        let offset = t.0 - series.start.0;
        let i = (offset / step) as usize;
        let rem = offset % step;
        if rem == 0 {
            values.push(series.values[i]);
            valid.push(series.valid[i]);
        } else {
            let ok = series.valid[i] && series.valid[i + 1];
            let w = rem as f64 / step as f64;
            let (a, b) = (series.values[i], series.values[i + 1]);
            values.push(if ok { a + w * (b - a) } else { 0.0 });
            valid.push(ok);
        }
        t = t.add_steps(1);
    }
    TimeSeries15::new(first, values, valid, series.unit)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: i64, b: i64) -> i64 {
    a / gcd(a, b) * b
}

/// Masks whole UTC days on which the plant produced nothing while the sun was up.
pub fn quality_check_days(series: &TimeSeries15, cs: &ClearSkyProfile) -> Result<TimeSeries15> {
    series.ensure_same_grid(&cs.series, "quality check")?;
    let mut shut: BTreeMap<i64, bool> = BTreeMap::new();
    for (i, (t, v)) in series.iter().enumerate() {
        let csv = cs.series.values()[i];
        if csv <= DAYLIGHT_THRESHOLD {
            continue;
        }
        if let Some(v) = v {
            let entry = shut.entry(t.utc_day()).or_insert(true);
            *entry &= v <= ZERO_THRESHOLD;
        }
    }
    let mut out = series.clone();
    for i in 0..out.len() {
        if shut.get(&out.time_at(i).utc_day()).copied().unwrap_or(false) {
            out.mask_at(i);
        }
    }
    Ok(out)
}

pub fn mw_to_wm2(series: &TimeSeries15, meta: &SiteMetadata) -> Result<TimeSeries15> {
    if series.unit() != Unit::MegaWatt {
        return Err(invalid(format!("expected a MW series, got {}", series.unit().tag())));
    }
    let area = meta.panel_area_m2;
    series.map_valid(Unit::WattPerSquareMetre, |mw| mw * 1e6 / area)
}

/// A grid cell, as (latitude index, longitude index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub lat_idx: usize,
    pub lon_idx: usize,
}

impl Cell {
    pub fn new(lat_idx: usize, lon_idx: usize) -> Self {
        Cell { lat_idx, lon_idx }
    }
}

/// Time-indexed stack of geolocated GHI frames.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStack {
    lat_axis: Vec<f64>,
    lon_axis: Vec<f64>,
    start: Timestamp,
    n_times: usize,
    /// Row-major `(time, lat, lon)`.
    frames: Vec<f64>,
    valid: Vec<bool>,
}

/// One row of a satellite file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRecord {
    pub time: Timestamp,
    pub lat: f64,
    pub lon: f64,
    pub ghi: Option<f64>,
}

impl GridStack {
    pub fn new(
        lat_axis: Vec<f64>,
        lon_axis: Vec<f64>,
        start: Timestamp,
        n_times: usize,
        frames: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if lat_axis.is_empty() || lon_axis.is_empty() {
            return Err(invalid("grid axes must be non-empty"));
        }
        if !is_ascending(&lat_axis) || !is_ascending(&lon_axis) {
            return Err(invalid("grid axes must be strictly ascending"));
        }
        if !start.is_step_aligned() {
            return Err(invalid("grid start is not aligned to the 15-minute grid"));
        }
        let n = n_times * lat_axis.len() * lon_axis.len();
        if frames.len() != n || valid.len() != n {
            return Err(invalid("frame dimensions do not match axes"));
        }
        let mut frames = frames;
        for (v, ok) in frames.iter_mut().zip(valid.iter()) {
            if *ok {
                if !v.is_finite() || *v < 0.0 {
                    return Err(invalid("grid GHI values must be finite and >= 0"));
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(GridStack { lat_axis, lon_axis, start, n_times, frames, valid })
    }

    /// Assembles a dense stack from long-format records.
    pub fn from_records(records: &[GridRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(invalid("no satellite records"));
        }
        let lat_axis = regular_axis(records.iter().map(|r| r.lat), "latitude")?;
        let lon_axis = regular_axis(records.iter().map(|r| r.lon), "longitude")?;
        let mut t0 = records[0].time;
        let mut t1 = records[0].time;
        for r in records {
            if !r.time.is_step_aligned() {
                return Err(invalid(format!("satellite timestamp {} is not on the 15-minute grid", r.time)));
            }
            if let Some(g) = r.ghi {
                if !g.is_finite() || g < 0.0 {
                    return Err(invalid(format!("negative or non-finite GHI at {} ({}, {})", r.time, r.lat, r.lon)));
                }
            }
            t0 = t0.min(r.time);
            t1 = t1.max(r.time);
        }
        let n_times = ((t1.0 - t0.0) / STEP_SECONDS) as usize + 1;
        let (nl, nm) = (lat_axis.len(), lon_axis.len());
        let mut frames = vec![0.0; n_times * nl * nm];
        let mut valid = vec![false; n_times * nl * nm];
        let mut seen = vec![false; n_times * nl * nm];
        for r in records {
            let ti = ((r.time.0 - t0.0) / STEP_SECONDS) as usize;
            let li = axis_index(&lat_axis, r.lat);
            let mi = axis_index(&lon_axis, r.lon);
            let k = (ti * nl + li) * nm + mi;
            if seen[k] {
                return Err(invalid(format!("duplicate satellite row at {} ({}, {})", r.time, r.lat, r.lon)));
            }
            seen[k] = true;
            if let Some(g) = r.ghi {
                frames[k] = g;
                valid[k] = true;
            }
        }
        GridStack::new(lat_axis, lon_axis, t0, n_times, frames, valid)
    }

    pub fn lat_axis(&self) -> &[f64] {
        &self.lat_axis
    }

    pub fn lon_axis(&self) -> &[f64] {
        &self.lon_axis
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn time_at(&self, i: usize) -> Timestamp {
        self.start.add_steps(i as i64)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let nm = self.lon_axis.len();
        (0..self.lat_axis.len() * nm).map(move |k| Cell::new(k / nm, k % nm))
    }

    pub fn n_cells(&self) -> usize {
        self.lat_axis.len() * self.lon_axis.len()
    }

    pub fn cell_center(&self, cell: Cell) -> GeoPoint {
        GeoPoint { latitude_deg: self.lat_axis[cell.lat_idx], longitude_deg: self.lon_axis[cell.lon_idx] }
    }

    fn offset(&self, ti: usize, cell: Cell) -> usize {
        (ti * self.lat_axis.len() + cell.lat_idx) * self.lon_axis.len() + cell.lon_idx
    }

    pub fn value(&self, ti: usize, cell: Cell) -> Option<f64> {
        let k = self.offset(ti, cell);
        self.valid[k].then(|| self.frames[k])
    }

    pub fn mask_cell(&mut self, ti: usize, cell: Cell) {
        let k = self.offset(ti, cell);
        self.valid[k] = false;
        self.frames[k] = 0.0;
    }

    fn check_cell(&self, cell: Cell) -> Result<()> {
        if cell.lat_idx >= self.lat_axis.len() || cell.lon_idx >= self.lon_axis.len() {
            return Err(Error::OutOfRange(format!(
                "cell ({}, {}) outside a {}x{} grid",
                cell.lat_idx,
                cell.lon_idx,
                self.lat_axis.len(),
                self.lon_axis.len()
            )));
        }
        Ok(())
    }

    /// The long-format records of this stack, masked cells included as `None`.
    pub fn to_records(&self) -> Vec<GridRecord> {
        let mut out = Vec::with_capacity(self.frames.len());
        for ti in 0..self.n_times {
            for cell in self.cells() {
                out.push(GridRecord {
                    time: self.time_at(ti),
                    lat: self.lat_axis[cell.lat_idx],
                    lon: self.lon_axis[cell.lon_idx],
                    ghi: self.value(ti, cell),
                });
            }
        }
        out
    }
}

fn is_ascending(axis: &[f64]) -> bool {
    axis.iter().all(|v| v.is_finite()) && axis.windows(2).all(|w| w[0] < w[1])
}

fn regular_axis(values: impl Iterator<Item = f64>, what: &str) -> Result<Vec<f64>> {
    let mut axis: Vec<f64> = values.collect();
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite {what}")));
    }
    axis.sort_by(|a, b| a.total_cmp(b));
    axis.dedup();
    if axis.len() > 2 {
        let spacing = axis[1] - axis[0];
        for w in axis.windows(2) {
            if ((w[1] - w[0]) - spacing).abs() > 1e-6 * spacing.abs().max(1e-9) {
                return Err(invalid(format!("inconsistent {what} axis values across frames")));
            }
        }
    }
    Ok(axis)
}

fn axis_index(axis: &[f64], v: f64) -> usize {
    axis.binary_search_by(|a| a.total_cmp(&v)).unwrap_or(0)
}

fn nearest_axis_index(axis: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (i, a) in axis.iter().enumerate() {
        if (a - v).abs() < (axis[best] - v).abs() {
            best = i;
        }
    }
    best
}

/// The GHI series of one cell across every frame.
pub fn pixel_series(grid: &GridStack, cell: Cell) -> Result<TimeSeries15> {
    grid.check_cell(cell)?;
    let (values, valid): (Vec<f64>, Vec<bool>) = (0..grid.n_times)
        .map(|ti| {
            let k = grid.offset(ti, cell);
            (grid.frames[k], grid.valid[k])
        })
        .unzip();
    TimeSeries15::new(grid.start, values, valid, Unit::WattPerSquareMetre)
}

/// One NWP run: SSRD accumulated since issue, per (lead, lat, lon).
#[derive(Debug, Clone, PartialEq)]
pub struct NwpRun {
    pub model_tag: String,
    pub issue_time: Timestamp,
    pub lead_hours: Vec<u32>,
    pub lat_axis: Vec<f64>,
    pub lon_axis: Vec<f64>,
    /// Row-major `(lead, lat, lon)`, J/m².
    pub ssrd_cumulated: Vec<f64>,
    pub valid: Vec<bool>,
}

/// One row of an NWP file.
#[derive(Debug, Clone, PartialEq)]
pub struct NwpRecord {
    pub model: String,
    pub issue_time: Timestamp,
    pub lead_hours: u32,
    pub lat: f64,
    pub lon: f64,
    pub ssrd_jm2: Option<f64>,
}

impl NwpRun {
    pub fn new(
        model_tag: String,
        issue_time: Timestamp,
        lead_hours: Vec<u32>,
        lat_axis: Vec<f64>,
        lon_axis: Vec<f64>,
        ssrd_cumulated: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if !issue_time.is_hour_aligned() {
            return Err(invalid(format!("run {issue_time} is not issued on the hour")));
        }
        if lead_hours.len() < 2 {
            return Err(invalid(format!("run {model_tag} {issue_time}: need >= 2 lead times to difference")));
        }
        if !lead_hours.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("lead times must be strictly ascending"));
        }
        if !is_ascending(&lat_axis) || !is_ascending(&lon_axis) || lat_axis.is_empty() || lon_axis.is_empty() {
            return Err(invalid("NWP axes must be non-empty and ascending"));
        }
        let ncell = lat_axis.len() * lon_axis.len();
        let n = lead_hours.len() * ncell;
        if ssrd_cumulated.len() != n || valid.len() != n {
            return Err(invalid("NWP array dimensions do not match axes"));
        }
        let mut ssrd_cumulated = ssrd_cumulated;
        for (v, ok) in ssrd_cumulated.iter_mut().zip(valid.iter()) {
            if !*ok {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(invalid("non-finite SSRD"));
            }
        }
        for c in 0..ncell {
            let mut last: Option<f64> = None;
            for li in 0..lead_hours.len() {
                let k = li * ncell + c;
                if !valid[k] {
                    continue;
                }
                if let Some(prev) = last {
                    if ssrd_cumulated[k] < prev {
                        return Err(invalid(format!(
                            "run {model_tag} {issue_time}: cumulated SSRD decreases at lead {} h",
                            lead_hours[li]
                        )));
                    }
                }
                last = Some(ssrd_cumulated[k]);
            }
        }
        Ok(NwpRun { model_tag, issue_time, lead_hours, lat_axis, lon_axis, ssrd_cumulated, valid })
    }

    fn ncell(&self) -> usize {
        self.lat_axis.len() * self.lon_axis.len()
    }

    pub fn value(&self, lead_idx: usize, cell: Cell) -> Option<f64> {
        let k = lead_idx * self.ncell() + cell.lat_idx * self.lon_axis.len() + cell.lon_idx;
        self.valid[k].then(|| self.ssrd_cumulated[k])
    }

    pub fn nearest_cell(&self, point: GeoPoint) -> Cell {
        Cell::new(
            nearest_axis_index(&self.lat_axis, point.latitude_deg),
            nearest_axis_index(&self.lon_axis, point.longitude_deg),
        )
    }

    pub fn cell_center(&self, cell: Cell) -> GeoPoint {
        GeoPoint { latitude_deg: self.lat_axis[cell.lat_idx], longitude_deg: self.lon_axis[cell.lon_idx] }
    }

    /// Cumulated value valid at `t`, if `t` is one of this run's lead times.
    pub fn at(&self, t: Timestamp, cell: Cell) -> Option<f64> {
        let d = t.0 - self.issue_time.0;
        if d < 0 || d % HOUR_SECONDS != 0 {
            return None;
        }
        let lead = (d / HOUR_SECONDS) as u32;
        let li = self.lead_hours.binary_search(&lead).ok()?;
        self.value(li, cell)
    }

    pub fn to_records(&self) -> Vec<NwpRecord> {
        let mut out = Vec::with_capacity(self.ssrd_cumulated.len());
        for (li, lead) in self.lead_hours.iter().enumerate() {
            for i in 0..self.lat_axis.len() {
                for j in 0..self.lon_axis.len() {
                    out.push(NwpRecord {
                        model: self.model_tag.clone(),
                        issue_time: self.issue_time,
                        lead_hours: *lead,
                        lat: self.lat_axis[i],
                        lon: self.lon_axis[j],
                        ssrd_jm2: self.value(li, Cell::new(i, j)),
                    });
                }
            }
        }
        out
    }
}

/// Groups long-format NWP rows into runs, ordered by (model, issue time).
pub fn nwp_runs_from_records(records: &[NwpRecord]) -> Result<Vec<NwpRun>> {
    let mut groups: BTreeMap<(String, Timestamp), Vec<&NwpRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.model.clone(), r.issue_time)).or_default().push(r);
    }
    let mut runs = Vec::with_capacity(groups.len());
    for ((model, issue), rows) in groups {
        let lat_axis = regular_axis(rows.iter().map(|r| r.lat), "NWP latitude")?;
        let lon_axis = regular_axis(rows.iter().map(|r| r.lon), "NWP longitude")?;
        let mut leads: Vec<u32> = rows.iter().map(|r| r.lead_hours).collect();
        leads.sort_unstable();
        leads.dedup();
        let ncell = lat_axis.len() * lon_axis.len();
        let mut values = vec![0.0; leads.len() * ncell];
        let mut valid = vec![false; leads.len() * ncell];
        let mut seen = vec![false; leads.len() * ncell];
        for r in rows {
            let li = leads.binary_search(&r.lead_hours).unwrap_or(0);
            let k = li * ncell + axis_index(&lat_axis, r.lat) * lon_axis.len() + axis_index(&lon_axis, r.lon);
            if seen[k] {
                return Err(invalid(format!("duplicate NWP row {model} {issue} +{}h ({}, {})", r.lead_hours, r.lat, r.lon)));
            }
            seen[k] = true;
            if let Some(v) = r.ssrd_jm2 {
                values[k] = v;
                valid[k] = true;
            }
        }
        runs.push(NwpRun::new(model, issue, leads, lat_axis, lon_axis, values, valid)?);
    }
    Ok(runs)
}

/// Hourly cumulated SSRD assembled from several runs. Each value keeps the
/// issue time of the run it came from, which is its accumulation origin.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulatedSeries {
    pub start: Timestamp,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub origins: Vec<Timestamp>,
}

impl CumulatedSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, i: usize) -> Timestamp {
        self.start.add_seconds(i as i64 * HOUR_SECONDS)
    }
}

/// Horizon-independent hourly series: every timestamp takes its value from
/// the run with the latest issue time at or before it.
pub fn latest_run_series(runs: &[NwpRun], point: GeoPoint, span: TimeSpan) -> Result<CumulatedSeries> {
    if span.is_empty() {
        return Err(invalid("empty span for NWP series"));
    }
    let mut sorted: Vec<&NwpRun> = runs.iter().collect();
    sorted.sort_by_key(|r| r.issue_time);
    let first = span.start.ceil_to(HOUR_SECONDS);
    let mut out = CumulatedSeries { start: first, values: Vec::new(), valid: Vec::new(), origins: Vec::new() };
    let mut t = first;
    while t <= span.end {
        let run = sorted.iter().rev().find(|r| r.issue_time <= t);
        let value = run.and_then(|r| r.at(t, r.nearest_cell(point)));
        out.values.push(value.unwrap_or(0.0));
        out.valid.push(value.is_some());
        out.origins.push(run.map(|r| r.issue_time).unwrap_or(t));
        t = t.add_seconds(HOUR_SECONDS);
    }
    Ok(out)
}

/// Clips negative slots to zero and rescales the positive ones so the
/// interval total is unchanged (or zeroes the interval if the total is < 0).
fn clip_preserving_total(slots: &mut [f64]) {
    if slots.iter().all(|v| *v >= 0.0) {
        return;
    }
    let total: f64 = slots.iter().sum();
    let positive: f64 = slots.iter().filter(|v| **v > 0.0).sum();
    let scale = if total > 0.0 && positive > 0.0 { total / positive } else { 0.0 };
    for v in slots.iter_mut() {
        *v = if *v > 0.0 { *v * scale } else { 0.0 };
    }
}

/// Clear-sky based hourly to 15-minute downscaling and de-cumulation.
///
/// Each hourly value is divided by the clear-sky energy accumulated since
/// its origin, the ratio is interpolated linearly to 15 minutes, multiplied
/// back by the 15-minute cumulated clear-sky energy and differenced.
/// Output slot `t` holds the mean irradiance over `(t - 15 min, t]`. Negative
/// slots are clipped to zero within their hour without changing the hourly
/// energy.
///
/// Ratios with no clear-sky energy behind them (before sunrise, or at a run's
/// issue time) are filled from the next defined ratio, so they never
/// distort the daylight slots that follow.
pub fn downscale_ssrd(hourly: &CumulatedSeries, cs: &ClearSkyProfile) -> Result<TimeSeries15> {
    if hourly.len() < 2 {
        return Err(invalid("need at least two hourly values to de-cumulate"));
    }
    let first_origin = hourly.origins.iter().copied().min().unwrap_or(hourly.start).min(hourly.start);
    let last = hourly.time_at(hourly.len() - 1);
    let cs_series = &cs.series;
    if cs_series.start() > first_origin.add_steps(1) || cs_series.end() <= last {
        return Err(Error::GridMismatch(format!(
            "clear-sky profile [{}, {}) does not cover ({}, {}]",
            cs_series.start(),
            cs_series.end(),
            first_origin,
            last
        )));
    }
    // prefix[k] = clear-sky energy of slots up to and including index k - 1.
    let mut prefix = Vec::with_capacity(cs_series.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in cs_series.values() {
        acc += v * STEP_SECONDS as f64;
        prefix.push(acc);
    }
    let cum_at = |t: Timestamp| -> f64 {
        // Energy of slots ending at or before t.
        let k = (t.0 - cs_series.start().0) / STEP_SECONDS + 1;
        prefix[k.clamp(0, cs_series.len() as i64) as usize]
    };
    let energy = |origin: Timestamp, t: Timestamp| -> f64 { (cum_at(t) - cum_at(origin)).max(0.0) };

    // Step 1: normalized hourly series.
    let m = hourly.len();
    let mut ratio: Vec<Option<f64>> = vec![None; m];
    for i in 0..m {
        if !hourly.valid[i] {
            continue;
        }
        let c = energy(hourly.origins[i], hourly.time_at(i));
        if c > 0.0 {
            ratio[i] = Some(hourly.values[i] / c);
        }
    }
    let mut filled = vec![0.0; m];
    for i in 0..m {
        if !hourly.valid[i] {
            continue;
        }
        filled[i] = match ratio[i] {
            Some(r) => r,
            None => {
                let next = (i + 1..m).take_while(|&j| hourly.valid[j]).find_map(|j| ratio[j]);
                let prev = || (0..i).rev().take_while(|&j| hourly.valid[j]).find_map(|j| ratio[j]);
                next.or_else(prev).unwrap_or(0.0)
            }
        };
    }

    // Steps 2-4, one hourly interval at a time.
    let per_hour = (HOUR_SECONDS / STEP_SECONDS) as usize;
    let start = hourly.start.add_steps(1);
    let mut values = Vec::with_capacity((m - 1) * per_hour);
    let mut valid = Vec::with_capacity((m - 1) * per_hour);
    for i in 1..m {
        let ok = hourly.valid[i - 1] && hourly.valid[i];
        if !ok {
            values.extend(core::iter::repeat(0.0).take(per_hour));
            valid.extend(core::iter::repeat(false).take(per_hour));
            continue;
        }
        let origin = hourly.origins[i - 1];
        let (n0, n1) = (filled[i - 1], filled[i]);
        let h0 = hourly.time_at(i - 1);
        let mut slots = [0.0f64; 4];
        for (k, slot) in (1..=per_hour).zip(slots.iter_mut()) {
            let t = h0.add_steps(k as i64);
            let n_now = n0 + (k as f64 / per_hour as f64) * (n1 - n0);
            let n_prev = n0 + ((k - 1) as f64 / per_hour as f64) * (n1 - n0);
            let slot_cs = cs_series.get(t).unwrap_or(0.0);
            // n_now*C(t) - n_prev*C(t-1), rearranged to avoid cancellation.
            *slot = n_now * slot_cs + (n_now - n_prev) * energy(origin, t.add_steps(-1)) / STEP_SECONDS as f64;
        }
        clip_preserving_total(&mut slots);
        values.extend_from_slice(&slots);
        valid.extend(core::iter::repeat(true).take(per_hour));
    }
    TimeSeries15::new(start, values, valid, Unit::WattPerSquareMetre)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo_solar::{clearsky_profile, Surface};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn day0() -> Timestamp {
        Timestamp::from_civil(2016, 6, 21, 0, 0, 0)
    }

    fn site() -> SiteMetadata {
        SiteMetadata::new(
            "S1",
            GeoPoint::new(44.75, 4.8).unwrap(),
            PanelOrientation::new(30.0, 180.0).unwrap(),
            10_000.0,
            1.5,
        )
        .unwrap()
    }

    #[test]
    fn resample_constant_and_ramp() {
        let n = NativeSeries::new(day0(), 600, vec![7.0; 13], vec![true; 13], Unit::MegaWatt).unwrap();
        let r = resample_to_15min(&n).unwrap();
        assert_eq!(r.len(), 9);
        assert!(r.values().iter().all(|v| *v == 7.0));

        let ramp: Vec<f64> = (0..7).map(|i| 3.0 * i as f64).collect();
        let n = NativeSeries::new(day0(), 600, ramp, vec![true; 7], Unit::MegaWatt).unwrap();
        let r = resample_to_15min(&n).unwrap();
        assert_eq!(r.values(), &[0.0, 4.5, 9.0, 13.5, 18.0]);
    }

    #[test]
    fn resample_gap_masks_neighbours() {
        let mut valid = vec![true; 7];
        valid[1] = false; // 10 min
        let n = NativeSeries::new(day0(), 600, vec![1.0; 7], valid, Unit::MegaWatt).unwrap();
        let r = resample_to_15min(&n).unwrap();
        // 15 min is bracketed by 10 and 20 min -> masked; 0 and 30 stay.
        assert_eq!(r.mask(), &[true, false, true, true, true]);
    }

    #[test]
    fn resample_rejects_odd_step() {
        let n = NativeSeries::new(day0(), 420, vec![1.0; 5], vec![true; 5], Unit::MegaWatt).unwrap();
        assert!(resample_to_15min(&n).is_err());
    }

    fn one_day_cs() -> ClearSkyProfile {
        let span = TimeSpan { start: day0(), end: day0().add_seconds(86_400) };
        clearsky_profile(site().location, Some(site().orientation), span, 0.3).unwrap()
    }

    #[test]
    fn quality_check_cases() {
        let cs = one_day_cs();
        let zero = TimeSeries15::from_values(day0(), vec![0.0; 96], Unit::WattPerSquareMetre).unwrap();
        let out = quality_check_days(&zero, &cs).unwrap();
        assert_eq!(out.valid_count(), 0);

        let sunny = cs.series.clone();
        assert_eq!(quality_check_days(&sunny, &cs).unwrap(), sunny);

        let night = ClearSkyProfile {
            series: TimeSeries15::from_values(day0(), vec![0.0; 96], Unit::WattPerSquareMetre).unwrap(),
            surface: Surface::PlaneOfArray,
        };
        assert_eq!(quality_check_days(&zero, &night).unwrap(), zero);
    }

    #[test]
    fn unit_conversion() {
        let s = TimeSeries15::from_options(day0(), &[Some(1.2), Some(0.0), None], Unit::MegaWatt).unwrap();
        let w = mw_to_wm2(&s, &site()).unwrap();
        assert_relative_eq!(w.values()[0], 120.0, max_relative = 1e-12);
        assert_eq!(w.values()[1], 0.0);
        assert!(!w.is_valid(2));
        assert_eq!(w.unit(), Unit::WattPerSquareMetre);
        assert!(mw_to_wm2(&w, &site()).is_err());
    }

    fn records_3x3(times: usize) -> Vec<GridRecord> {
        let mut out = Vec::new();
        for ti in 0..times {
            for i in 0..3 {
                for j in 0..3 {
                    out.push(GridRecord {
                        time: day0().add_steps(ti as i64),
                        lat: 44.0 + 0.0625 * i as f64,
                        lon: 4.0 + 0.0625 * j as f64,
                        ghi: Some((ti * 9 + i * 3 + j) as f64),
                    });
                }
            }
        }
        out
    }

    #[test]
    fn grid_from_records() {
        let g = GridStack::from_records(&records_3x3(2)).unwrap();
        assert_eq!(g.n_times(), 2);
        assert_eq!(g.lat_axis().len(), 3);
        let mut dup = records_3x3(1);
        dup.push(dup[0]);
        assert!(GridStack::from_records(&dup).is_err());
        let mut neg = records_3x3(1);
        neg[4].ghi = Some(-1.0);
        assert!(GridStack::from_records(&neg).is_err());
        let mut skew = records_3x3(2);
        skew[10].lat = 44.0701;
        assert!(GridStack::from_records(&skew).is_err());
    }

    #[test]
    fn pixel_series_cases() {
        let mut recs = records_3x3(1);
        let g1 = GridStack::from_records(&recs).unwrap();
        assert_eq!(pixel_series(&g1, Cell::new(1, 1)).unwrap().len(), 1);
        assert!(pixel_series(&g1, Cell::new(3, 0)).is_err());

        recs = records_3x3(3);
        recs.retain(|r| !(r.time == day0().add_steps(1) && r.lat == 44.0 && r.lon == 4.0));
        let g = GridStack::from_records(&recs).unwrap();
        let s = pixel_series(&g, Cell::new(0, 0)).unwrap();
        assert_eq!(s.mask(), &[true, false, true]);
        // Every cell's series rebuilds the stack.
        let mut rebuilt = Vec::new();
        for ti in 0..g.n_times() {
            for c in g.cells() {
                let ps = pixel_series(&g, c).unwrap();
                rebuilt.push(GridRecord {
                    time: ps.time_at(ti),
                    lat: g.lat_axis()[c.lat_idx],
                    lon: g.lon_axis()[c.lon_idx],
                    ghi: ps.get(ps.time_at(ti)),
                });
            }
        }
        assert_eq!(GridStack::from_records(&rebuilt).unwrap(), g);
    }

    fn nwp_rows(issue: Timestamp, leads: &[u32], per_hour: f64) -> Vec<NwpRecord> {
        leads
            .iter()
            .map(|l| NwpRecord {
                model: "ECMWF".into(),
                issue_time: issue,
                lead_hours: *l,
                lat: 44.75,
                lon: 4.8,
                ssrd_jm2: Some(per_hour * *l as f64),
            })
            .collect()
    }

    #[test]
    fn nwp_grouping_and_invariants() {
        let mut rows = nwp_rows(day0(), &[0, 1, 2], 10.0);
        rows.extend(nwp_rows(day0().add_seconds(43_200), &[0, 1, 2], 20.0));
        let runs = nwp_runs_from_records(&rows).unwrap();
        assert_eq!(runs.len(), 2);

        let mut bad = nwp_rows(day0(), &[0, 1, 2], 10.0);
        bad[2].ssrd_jm2 = Some(5.0);
        assert!(nwp_runs_from_records(&bad).is_err());

        let single = nwp_rows(day0(), &[0], 10.0);
        let err = nwp_runs_from_records(&single).unwrap_err();
        assert!(alloc::format!("{err}").contains("need >= 2 lead times"));
    }

    #[test]
    fn latest_run_selection() {
        let mut rows = nwp_rows(day0(), &(0..=24).collect::<Vec<_>>(), 10.0);
        rows.extend(nwp_rows(day0().add_seconds(43_200), &(0..=24).collect::<Vec<_>>(), 20.0));
        let runs = nwp_runs_from_records(&rows).unwrap();
        let p = GeoPoint::new(44.75, 4.8).unwrap();

        let span = TimeSpan { start: day0().add_seconds(-7200), end: day0().add_seconds(14 * 3600) };
        let s = latest_run_series(&runs, p, span).unwrap();
        assert!(!s.valid[0] && !s.valid[1]);
        // 13:00 comes from the 12:00 run at lead 1.
        let i13 = 15;
        assert_eq!(s.time_at(i13), day0().add_seconds(13 * 3600));
        assert_eq!(s.values[i13], 20.0);
        assert_eq!(s.origins[i13], day0().add_seconds(43_200));
        // 11:00 from the 00:00 run.
        assert_eq!(s.values[13], 110.0);

        let only = &runs[..1];
        let span = TimeSpan { start: day0(), end: day0().add_seconds(5 * 3600) };
        let s = latest_run_series(only, p, span).unwrap();
        assert_eq!(s.values, vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0]);
    }

    /// Hourly cumulated clear-sky energy since `origin`, summed directly from
    /// the 15-minute profile (test oracle).
    fn cumulated_clearsky(cs: &ClearSkyProfile, origin: Timestamp, t: Timestamp) -> f64 {
        cs.series.iter().filter(|(s, _)| *s > origin && *s <= t).map(|(_, v)| v.unwrap() * 900.0).sum()
    }

    fn hourly_from(cs: &ClearSkyProfile, origin: Timestamp, scale: &dyn Fn(usize) -> f64, hours: usize) -> CumulatedSeries {
        let mut values = Vec::new();
        let mut prev_c = 0.0;
        let mut acc = 0.0;
        for h in 0..=hours {
            let t = origin.add_seconds(h as i64 * 3600);
            let c = cumulated_clearsky(cs, origin, t);
            acc += scale(h) * (c - prev_c);
            prev_c = c;
            values.push(acc);
        }
        CumulatedSeries { start: origin, valid: vec![true; values.len()], origins: vec![origin; values.len()], values }
    }

    fn ghi_cs(days: i64) -> ClearSkyProfile {
        let span = TimeSpan { start: day0(), end: day0().add_seconds(days * 86_400) };
        clearsky_profile(GeoPoint::new(44.75, 4.8).unwrap(), None, span, 0.3).unwrap()
    }

    #[test]
    fn downscale_clear_day_is_identity() {
        let cs = ghi_cs(2);
        let hourly = hourly_from(&cs, day0(), &|_| 1.0, 24);
        let out = downscale_ssrd(&hourly, &cs).unwrap();
        assert_eq!(out.start(), day0().add_steps(1));
        assert_eq!(out.len(), 96);
        for (t, v) in out.iter() {
            let c = cs.get(t).unwrap();
            let v = v.unwrap();
            if c > DAYLIGHT_THRESHOLD {
                assert_relative_eq!(v, c, max_relative = 1e-9);
            } else {
                assert!((v - c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn downscale_half_and_night() {
        let cs = ghi_cs(2);
        let hourly = hourly_from(&cs, day0(), &|_| 0.5, 24);
        let out = downscale_ssrd(&hourly, &cs).unwrap();
        for (t, v) in out.iter() {
            let c = cs.get(t).unwrap();
            assert!((v.unwrap() - 0.5 * c).abs() <= 1e-9 * c.max(1.0));
            if c == 0.0 {
                assert_eq!(v.unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn downscale_rejects_short_profile() {
        let cs = ghi_cs(1);
        let hourly = hourly_from(&ghi_cs(2), day0(), &|_| 1.0, 30);
        assert!(matches!(downscale_ssrd(&hourly, &cs), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn downscale_across_run_switch_keeps_clear_day() {
        // Two runs: 00:00 and 12:00, assembled by latest-run selection.
        let cs = ghi_cs(2);
        let mut rows = Vec::new();
        for issue in [day0(), day0().add_seconds(43_200)] {
            for lead in 0..=24u32 {
                let t = issue.add_seconds(lead as i64 * 3600);
                rows.push(NwpRecord {
                    model: "M".into(),
                    issue_time: issue,
                    lead_hours: lead,
                    lat: 44.75,
                    lon: 4.8,
                    ssrd_jm2: Some(cumulated_clearsky(&cs, issue, t)),
                });
            }
        }
        let runs = nwp_runs_from_records(&rows).unwrap();
        let span = TimeSpan { start: day0(), end: day0().add_seconds(86_400) };
        let hourly = latest_run_series(&runs, GeoPoint::new(44.75, 4.8).unwrap(), span).unwrap();
        let out = downscale_ssrd(&hourly, &cs).unwrap();
        for (t, v) in out.iter() {
            let c = cs.get(t).unwrap();
            assert!((v.unwrap() - c).abs() <= 1e-9 * c.max(1.0), "{t}: {v:?} vs {c}");
        }
    }

    proptest! {
        #[test]
        fn downscale_conserves_energy(fracs in proptest::collection::vec(0.0f64..1.2, 25)) {
            let cs = ghi_cs(2);
            let hourly = hourly_from(&cs, day0(), &|h| fracs[h], 24);
            let out = downscale_ssrd(&hourly, &cs).unwrap();
            let mut acc = 0.0;
            for (i, (_, v)) in out.iter().enumerate() {
                acc += v.unwrap() * 900.0;
                if (i + 1) % 4 == 0 {
                    let h = (i + 1) / 4;
                    let c = cumulated_clearsky(&cs, day0(), hourly.time_at(h));
                    if c > 0.0 {
                        prop_assert!((acc - hourly.values[h]).abs() <= 1e-6 * hourly.values[h].abs().max(1.0),
                            "hour {}: {} vs {}", h, acc, hourly.values[h]);
                    }
                }
            }
        }

        #[test]
        fn resample_stays_within_brackets(vals in proptest::collection::vec(-100.0f64..100.0, 2..60)) {
            let n = vals.len();
            let s = NativeSeries::new(day0(), 600, vals.clone(), vec![true; n], Unit::MegaWatt).unwrap();
            let r = resample_to_15min(&s).unwrap();
            for (t, v) in r.iter() {
                let off = (t.0 - day0().0) as usize;
                let i = off / 600;
                let j = if off % 600 == 0 { i } else { i + 1 };
                let (lo, hi) = (vals[i].min(vals[j]), vals[i].max(vals[j]));
                let v = v.unwrap();
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }

        #[test]
        fn quality_check_idempotent(zero_days in proptest::collection::vec(any::<bool>(), 3)) {
            let span = TimeSpan { start: day0(), end: day0().add_seconds(3 * 86_400) };
            let cs = clearsky_profile(site().location, Some(site().orientation), span, 0.3).unwrap();
            let vals: Vec<f64> = cs.series.iter().map(|(t, v)| {
                let d = (t.utc_day() - day0().utc_day()) as usize;
                if zero_days[d] { 0.0 } else { v.unwrap() * 0.8 }
            }).collect();
            let s = TimeSeries15::from_values(day0(), vals, Unit::WattPerSquareMetre).unwrap();
            let once = quality_check_days(&s, &cs).unwrap();
            let twice = quality_check_days(&once, &cs).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
