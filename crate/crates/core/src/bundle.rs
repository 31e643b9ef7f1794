//! Everything the models read, already on the 15-minute grid and normalized.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::geo_solar::{clearsky_profile, ClearSkyProfile, DEFAULT_DIFFUSE_FRACTION};
use crate::ingestion::{downscale_ssrd, latest_run_series, pixel_series, quality_check_days, Cell, GridStack, NwpRun, SiteMetadata};
use crate::series::{TimeSeries15, Unit};
use crate::stationarize::{normalize, NormalizedSeries, DEFAULT_EPS_FLOOR};
use crate::time::{TimeSpan, HOUR_SECONDS};

#[derive(Debug, Clone)]
pub struct SiteData {
    pub meta: SiteMetadata,
    /// Production in W/m² after the quality check.
    pub production: TimeSeries15,
    pub index: NormalizedSeries,
    /// Normalized NWP index at the site, per model tag.
    pub nwp_index: BTreeMap<String, TimeSeries15>,
    /// Downscaled NWP GHI at the site, per model tag.
    pub nwp_ghi: BTreeMap<String, TimeSeries15>,
}

impl SiteData {
    pub fn cs_poa(&self) -> &ClearSkyProfile {
        &self.index.cs_ref
    }
}

#[derive(Debug, Clone)]
pub struct SatelliteData {
    pub grid: GridStack,
    /// Clear-sky index per cell, in `grid.cells()` order, normalized by the
    /// pixel-local horizontal clear-sky.
    pub index: Vec<TimeSeries15>,
}

impl SatelliteData {
    pub fn cell_index(&self, cell: Cell) -> Option<&TimeSeries15> {
        if cell.lat_idx >= self.grid.lat_axis().len() || cell.lon_idx >= self.grid.lon_axis().len() {
            return None;
        }
        self.index.get(cell.lat_idx * self.grid.lon_axis().len() + cell.lon_idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleOptions {
    pub eps_floor: f64,
    pub diffuse_fraction: f64,
    pub quality_check: bool,
}

impl Default for BundleOptions {
    fn default() -> Self {
        BundleOptions { eps_floor: DEFAULT_EPS_FLOOR, diffuse_fraction: DEFAULT_DIFFUSE_FRACTION, quality_check: true }
    }
}

#[derive(Debug, Clone)]
pub struct DataBundle {
    pub sites: Vec<SiteData>,
    pub satellite: Option<SatelliteData>,
    pub options: BundleOptions,
}

impl DataBundle {
    /// Builds a bundle from production series in W/m², an optional satellite
    /// stack and any number of NWP runs (grouped by model tag).
    pub fn assemble(
        production: Vec<(SiteMetadata, TimeSeries15)>,
        satellite: Option<GridStack>,
        nwp_runs: &[NwpRun],
        options: BundleOptions,
    ) -> Result<DataBundle> {
        let mut by_model: BTreeMap<&str, Vec<NwpRun>> = BTreeMap::new();
        for run in nwp_runs {
            by_model.entry(run.model_tag.as_str()).or_default().push(run.clone());
        }
        let mut sites = Vec::with_capacity(production.len());
        for (meta, series) in production {
            if series.unit() != Unit::WattPerSquareMetre {
                return Err(invalid(format!("site {}: production must be in W/m2", meta.site_id)));
            }
            if sites.iter().any(|s: &SiteData| s.meta.site_id == meta.site_id) {
                return Err(invalid(format!("duplicate site id {}", meta.site_id)));
            }
            let span = series.span();
            let cs = clearsky_profile(meta.location, Some(meta.orientation), span, options.diffuse_fraction)?;
            let production = if options.quality_check { quality_check_days(&series, &cs)? } else { series };
            let index = normalize(&production, &cs, options.eps_floor)?;
            let mut nwp_index = BTreeMap::new();
            let mut nwp_ghi = BTreeMap::new();
            for (tag, runs) in &by_model {
                let ghi = nwp_ghi_on_grid(runs, &meta, span, options)?;
                let cs_h = clearsky_profile(meta.location, None, span, options.diffuse_fraction)?;
                let idx = normalize(&ghi, &cs_h, options.eps_floor)?;
                nwp_index.insert(String::from(*tag), idx.index);
                nwp_ghi.insert(String::from(*tag), ghi);
            }
            sites.push(SiteData { meta, production, index, nwp_index, nwp_ghi });
        }
        let satellite = satellite.map(|g| satellite_index(g, options)).transpose()?;
        Ok(DataBundle { sites, satellite, options })
    }

    pub fn site(&self, site_id: &str) -> Option<&SiteData> {
        self.sites.iter().find(|s| s.meta.site_id == site_id)
    }

    pub fn site_metas(&self) -> Vec<SiteMetadata> {
        self.sites.iter().map(|s| s.meta.clone()).collect()
    }
}

fn nwp_ghi_on_grid(runs: &[NwpRun], meta: &SiteMetadata, span: TimeSpan, options: BundleOptions) -> Result<TimeSeries15> {
    let hourly_span = TimeSpan { start: span.start.floor_to(HOUR_SECONDS), end: span.end.ceil_to(HOUR_SECONDS) };
    let hourly = latest_run_series(runs, meta.location, hourly_span)?;
    let n = span.steps();
    let mut values = alloc::vec![0.0; n];
    let mut valid = alloc::vec![false; n];
    if hourly.valid.iter().any(|v| *v) && hourly.len() >= 2 {
        let first_origin = hourly
            .origins
            .iter()
            .zip(&hourly.valid)
            .filter(|(_, v)| **v)
            .map(|(o, _)| *o)
            .min()
            .unwrap_or(hourly.start)
            .min(hourly.start);
        let cs_span = TimeSpan { start: first_origin, end: hourly.time_at(hourly.len() - 1).add_steps(1) };
        let cs = clearsky_profile(meta.location, None, cs_span, options.diffuse_fraction)?;
        let ghi = downscale_ssrd(&hourly, &cs)?;
        for (i, t) in span.iter_steps().enumerate() {
            if let Some(v) = ghi.get(t) {
                values[i] = v;
                valid[i] = true;
            }
        }
    }
    TimeSeries15::new(span.start, values, valid, Unit::WattPerSquareMetre)
}

fn satellite_index(grid: GridStack, options: BundleOptions) -> Result<SatelliteData> {
    let span = TimeSpan { start: grid.start(), end: grid.start().add_steps(grid.n_times() as i64) };
    let mut index = Vec::with_capacity(grid.n_cells());
    for cell in grid.cells() {
        let ghi = pixel_series(&grid, cell)?;
        let cs = clearsky_profile(grid.cell_center(cell), None, span, options.diffuse_fraction)?;
        index.push(normalize(&ghi, &cs, options.eps_floor)?.index);
    }
    Ok(SatelliteData { grid, index })
}
