//! Pixel ranking, neighbour selection and per-horizon design matrices.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::bundle::{DataBundle, SatelliteData};
use crate::error::{invalid, Error, Result};
use crate::geo_solar::haversine_km;
use crate::ingestion::{Cell, SiteMetadata};
use crate::linalg::Matrix;
use crate::math;
use crate::series::TimeSeries15;
use crate::time::{TimeSpan, Timestamp};

/// Minimum jointly valid pairs for a correlation.
pub const MIN_PEARSON_PAIRS: usize = 30;
/// Minimum rows of a usable design matrix.
pub const MIN_DESIGN_ROWS: usize = 50;
/// Number of pixels kept by default.
pub const DEFAULT_TOP_N: usize = 100;
/// Neighbouring plants used by spatio-temporal models.
pub const DEFAULT_NEIGHBORS: usize = 4;
/// Operating radius for pixel selection, km.
pub const DEFAULT_RADIUS_KM: f64 = 50.0;
/// Exploratory scan radius, km.
pub const SCAN_RADIUS_KM: f64 = 150.0;
/// Default maximum production lag, in steps.
pub const DEFAULT_MAX_LAG: usize = 4;

/// Pearson correlation of `x_t` against `y_{t+lag}` over jointly valid pairs.
pub fn pearson(x: &TimeSeries15, y: &TimeSeries15, lag_steps: usize) -> Result<f64> {
    pearson_within(x, y, lag_steps, None)
}

/// As [`pearson`], restricted to pairs whose two timestamps lie in `span`.
pub fn pearson_within(x: &TimeSeries15, y: &TimeSeries15, lag_steps: usize, span: Option<TimeSpan>) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, xv) in x.iter() {
        let Some(xv) = xv else { continue };
        let ty = t.add_steps(lag_steps as i64);
        if let Some(s) = span {
            if !s.contains(t) || !s.contains(ty) {
                continue;
            }
        }
        if let Some(yv) = y.get(ty) {
            xs.push(xv);
            ys.push(yv);
        }
    }
    pearson_slices(&xs, &ys)
}

pub(crate) fn pearson_slices(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < MIN_PEARSON_PAIRS {
        return Err(Error::InsufficientOverlap(format!("{n} jointly valid pairs, need {MIN_PEARSON_PAIRS}")));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in xs.iter().zip(ys) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::ZeroVariance("constant series in correlation".into()));
    }
    Ok((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub cell: Cell,
    pub lat: f64,
    pub lon: f64,
    pub distance_km: f64,
    pub pearson_r: f64,
}

/// Cells within a radius of a site, best correlated first.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelRanking {
    pub site_id: String,
    pub lag_steps: usize,
    pub radius_km: f64,
    pub entries: Vec<RankEntry>,
}

fn rank_order(a: &RankEntry, b: &RankEntry) -> Ordering {
    b.pearson_r
        .abs()
        .total_cmp(&a.pearson_r.abs())
        .then(a.distance_km.total_cmp(&b.distance_km))
        .then(a.cell.cmp(&b.cell))
}

/// Scores every cell within `radius_km` of the site by the correlation of its
/// index at `t` with the production index at `t + lag_steps`.
///
/// Cells without enough valid data are left out; an empty neighbourhood is an error.
pub fn rank_pixels(
    site: &SiteMetadata,
    sat: &SatelliteData,
    prod_index: &TimeSeries15,
    radius_km: f64,
    lag_steps: usize,
    span: Option<TimeSpan>,
) -> Result<PixelRanking> {
    let mut entries = Vec::new();
    let mut in_radius = 0usize;
    for (k, cell) in sat.grid.cells().enumerate() {
        let center = sat.grid.cell_center(cell);
        let d = haversine_km(site.location, center);
        if d > radius_km {
            continue;
        }
        in_radius += 1;
        if let Ok(r) = pearson_within(&sat.index[k], prod_index, lag_steps, span) {
            entries.push(RankEntry { cell, lat: center.latitude_deg, lon: center.longitude_deg, distance_km: d, pearson_r: r });
        }
    }
    if in_radius == 0 {
        return Err(invalid(format!("no satellite cell within {radius_km} km of site {}", site.site_id)));
    }
    entries.sort_by(rank_order);
    Ok(PixelRanking { site_id: site.site_id.clone(), lag_steps, radius_km, entries })
}

pub fn top_n(ranking: &PixelRanking, n: usize) -> Vec<Cell> {
    ranking.entries.iter().take(n).map(|e| e.cell).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    pub site_id: String,
    pub neighbors: Vec<String>,
}

/// The `k` closest other sites, nearest first (ties by site id).
pub fn nearest_neighbors(site: &SiteMetadata, all_sites: &[SiteMetadata], k: usize) -> Result<NeighborSet> {
    let mut others: Vec<(f64, &str)> = all_sites
        .iter()
        .filter(|s| s.site_id != site.site_id)
        .map(|s| (haversine_km(site.location, s.location), s.site_id.as_str()))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    others.dedup_by(|a, b| a.1 == b.1);
    if others.len() < k {
        return Err(invalid(format!("site {} has {} other sites, {k} neighbours requested", site.site_id, others.len())));
    }
    Ok(NeighborSet {
        site_id: site.site_id.clone(),
        neighbors: others.into_iter().take(k).map(|(_, id)| id.to_string()).collect(),
    })
}

/// Where a regressor column takes its values from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ColumnSource {
    /// Production index of `site_id` at `t - lag`.
    SiteLag { site_id: String, lag: usize },
    /// Satellite index of a cell at `t`.
    Pixel(Cell),
    /// NWP index of the target site at `t + h`.
    Nwp { site_id: String, model: String },
}

impl ColumnSource {
    pub fn name(&self) -> String {
        match self {
            ColumnSource::SiteLag { site_id, lag } => format!("prod:{site_id}:lag{lag}"),
            ColumnSource::Pixel(c) => format!("sat:{}:{}", c.lat_idx, c.lon_idx),
            ColumnSource::Nwp { site_id, model } => format!("nwp:{site_id}:{model}"),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let bad = || invalid(format!("unrecognized column name {name:?}"));
        if let Some(rest) = name.strip_prefix("prod:") {
            let (site, lag) = rest.rsplit_once(':').ok_or_else(bad)?;
            let lag = lag.strip_prefix("lag").and_then(|l| l.parse().ok()).ok_or_else(bad)?;
            if site.is_empty() {
                return Err(bad());
            }
            Ok(ColumnSource::SiteLag { site_id: site.to_string(), lag })
        } else if let Some(rest) = name.strip_prefix("sat:") {
            let (a, b) = rest.split_once(':').ok_or_else(bad)?;
            Ok(ColumnSource::Pixel(Cell::new(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?)))
        } else if let Some(rest) = name.strip_prefix("nwp:") {
            let (site, model) = rest.rsplit_once(':').ok_or_else(bad)?;
            if site.is_empty() || model.is_empty() {
                return Err(bad());
            }
            Ok(ColumnSource::Nwp { site_id: site.to_string(), model: model.to_string() })
        } else {
            Err(bad())
        }
    }

    /// Value of this regressor for issue time `t` and horizon `h`.
    pub fn value(&self, bundle: &DataBundle, t: Timestamp, horizon_steps: usize) -> Option<f64> {
        match self {
            ColumnSource::SiteLag { site_id, lag } => bundle.site(site_id)?.index.index.get(t.add_steps(-(*lag as i64))),
            ColumnSource::Pixel(cell) => bundle.satellite.as_ref()?.cell_index(*cell)?.get(t),
            ColumnSource::Nwp { site_id, model } => {
                bundle.site(site_id)?.nwp_index.get(model)?.get(t.add_steps(horizon_steps as i64))
            }
        }
    }
}

/// Regressor groups feeding one design matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sources {
    pub neighbors: Vec<String>,
    pub pixels: Vec<Cell>,
    pub nwp: Option<String>,
}

/// Column schema in fixed order: self lags, neighbour lags, pixels, NWP.
pub fn column_schema(target_site: &str, max_lag: usize, sources: &Sources) -> Vec<ColumnSource> {
    let mut cols = Vec::new();
    for site in core::iter::once(target_site).chain(sources.neighbors.iter().map(String::as_str)) {
        for lag in 0..=max_lag {
            cols.push(ColumnSource::SiteLag { site_id: site.to_string(), lag });
        }
    }
    cols.extend(sources.pixels.iter().map(|c| ColumnSource::Pixel(*c)));
    if let Some(model) = &sources.nwp {
        cols.push(ColumnSource::Nwp { site_id: target_site.to_string(), model: model.clone() });
    }
    cols
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub horizon_steps: usize,
    pub columns: Vec<ColumnSource>,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub row_times: Vec<Timestamp>,
}

impl DesignMatrix {
    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(ColumnSource::name).collect()
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// Keeps the rows (in order) whose time appears in `times`.
    pub fn restrict_to(&self, times: &[Timestamp]) -> DesignMatrix {
        let idx: Vec<usize> = self
            .row_times
            .iter()
            .enumerate()
            .filter(|(_, t)| times.binary_search(t).is_ok())
            .map(|(i, _)| i)
            .collect();
        self.select_rows(&idx)
    }

    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix {
            horizon_steps: self.horizon_steps,
            columns: self.columns.clone(),
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            row_times: idx.iter().map(|&i| self.row_times[i]).collect(),
        }
    }
}

/// Assembles regressors and target for one site and horizon over `span`.
///
/// Issue times `t` and targets `t + h` both lie in `span`; lagged inputs may
/// reach before it. Rows with any missing value are dropped.
pub fn build_design_matrix(
    bundle: &DataBundle,
    target_site: &str,
    horizon_steps: usize,
    max_lag: usize,
    sources: &Sources,
    span: TimeSpan,
) -> Result<DesignMatrix> {
    if !(1..=24).contains(&horizon_steps) {
        return Err(invalid(format!("horizon {horizon_steps} outside 1..=24 steps")));
    }
    let target = bundle
        .site(target_site)
        .ok_or_else(|| invalid(format!("unknown site {target_site}")))?;
    for n in &sources.neighbors {
        if bundle.site(n).is_none() {
            return Err(invalid(format!("unknown neighbour site {n}")));
        }
    }
    if !sources.pixels.is_empty() && bundle.satellite.is_none() {
        return Err(invalid("pixels requested but the bundle has no satellite data"));
    }
    if let Some(m) = &sources.nwp {
        if !target.nwp_index.contains_key(m) {
            return Err(invalid(format!("no NWP model {m} for site {target_site}")));
        }
    }
    let columns = column_schema(target_site, max_lag, sources);
    let mut names: Vec<String> = columns.iter().map(ColumnSource::name).collect();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("duplicate design-matrix columns"));
    }
    let p = columns.len();
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut row_times = Vec::new();
    let mut row = alloc::vec![0.0; p];
    'rows: for t in span.iter_steps() {
        let target_t = t.add_steps(horizon_steps as i64);
        if !span.contains(target_t) {
            break;
        }
        let Some(yv) = target.index.index.get(target_t) else { continue };
        for (j, col) in columns.iter().enumerate() {
            match col.value(bundle, t, horizon_steps) {
                Some(v) => row[j] = v,
                None => continue 'rows,
            }
        }
        data.extend_from_slice(&row);
        y.push(yv);
        row_times.push(t);
    }
    if y.len() < MIN_DESIGN_ROWS {
        return Err(Error::InsufficientData(format!(
            "site {target_site}, horizon {horizon_steps}: {} usable rows, need {MIN_DESIGN_ROWS}",
            y.len()
        )));
    }
    Ok(DesignMatrix { horizon_steps, columns, x: Matrix::from_row_major(y.len(), p, data), y, row_times })
}
