//! Synthetic scenes: one advected cloud field sampled as PV production, a
//! satellite GHI grid and twice-daily NWP runs.
//!
//! The field is a sum of random Fourier modes with a Gaussian spectrum of
//! width `1 / cloud_length_scale_km`. Mode amplitudes follow an AR(1) process
//! with correlation `exp(-15 / cloud_time_scale_min)` per step, and every mode
//! is translated with the wind (frozen turbulence), so a site downwind of
//! another sees its past shifted by `distance / speed`. The field has unit
//! variance; attenuation is `a_min + (a_max - a_min) * Phi(field)`.
//!
//! Random draws come from ChaCha8 seeded with `seed`, one stream per product
//! (0 field, 1 production noise, 2 satellite noise, 3 NWP noise, 4 satellite
//! cell mask).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::bundle::{BundleOptions, DataBundle};
use crate::error::{invalid, Result};
use crate::geo_solar::{clearsky_at, GeoPoint, PanelOrientation, DEFAULT_DIFFUSE_FRACTION};
use crate::ingestion::{GridStack, NwpRun, SiteMetadata};
use crate::math;
use crate::series::{TimeSeries15, Unit};
use crate::time::{TimeSpan, Timestamp, DAY_SECONDS, HOUR_SECONDS, STEP_SECONDS};

/// Kilometres per degree of latitude on the haversine sphere.
pub const KM_PER_DEG: f64 = 6371.0 * math::PI / 180.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub seed: u64,
    pub span: TimeSpan,
    pub sites: Vec<SiteMetadata>,
    pub grid_lat: Vec<f64>,
    pub grid_lon: Vec<f64>,
    /// Eastward and northward wind, m/s.
    pub wind_velocity: (f64, f64),
    pub cloud_length_scale_km: f64,
    pub cloud_time_scale_min: f64,
    pub attenuation_range: (f64, f64),
    pub n_modes: usize,
    pub nwp_model: String,
    pub nwp_lat: Vec<f64>,
    pub nwp_lon: Vec<f64>,
    pub nwp_issue_hours: Vec<u32>,
    pub nwp_max_lead_hours: u32,
    pub nwp_smoothing_km: f64,
    /// Standard deviation of the NWP perturbation, in field units, drawn per
    /// (run, lead hour, cell).
    pub nwp_noise_sd: f64,
    /// Gaussian noise on satellite GHI, W/m², clipped at 3 sd.
    pub satellite_noise_sd: f64,
    /// Gaussian noise on production, W/m² of panel area, clipped at 3 sd.
    pub production_noise_sd: f64,
    pub diffuse_fraction: f64,
    /// Share of satellite cells masked for the whole span, drawn at random.
    pub satellite_mask_fraction: f64,
}

/// Evenly spaced axis of `n` values centred on `center`.
pub fn centered_axis(center: f64, n: usize, spacing: f64) -> Vec<f64> {
    (0..n).map(|i| center + (i as f64 - (n as f64 - 1.0) / 2.0) * spacing).collect()
}

/// `n` sites on an east-west line through `(lat, lon)`, `spacing_km` apart,
/// ids `S1..Sn` from west to east.
pub fn line_of_sites(n: usize, lat: f64, lon: f64, spacing_km: f64, orientation: PanelOrientation) -> Result<Vec<SiteMetadata>> {
    let km_per_deg_lon = KM_PER_DEG * math::cos(math::to_rad(lat));
    (0..n)
        .map(|i| {
            let dx = (i as f64 - (n as f64 - 1.0) / 2.0) * spacing_km;
            SiteMetadata::new(format!("S{}", i + 1), GeoPoint::new(lat, lon + dx / km_per_deg_lon)?, orientation, 1.0e4, 10.0)
        })
        .collect()
}

impl Default for SceneConfig {
    /// Six sites on a 100 km line at 44.75 N, a 20x20 grid at 0.0625 deg,
    /// 60 days from 2016-05-01, 10 m/s eastward wind.
    fn default() -> Self {
        let (lat, lon) = (44.75, 4.80);
        let orientation = PanelOrientation::new(30.0, 180.0).expect("valid orientation");
        let start = Timestamp::from_civil(2016, 5, 1, 0, 0, 0);
        SceneConfig {
            seed: 42,
            span: TimeSpan { start, end: start.add_seconds(60 * DAY_SECONDS) },
            sites: line_of_sites(6, lat, lon, 20.0, orientation).expect("valid sites"),
            grid_lat: centered_axis(lat, 20, 0.0625),
            grid_lon: centered_axis(lon, 20, 0.0625),
            wind_velocity: (10.0, 0.0),
            cloud_length_scale_km: 60.0,
            cloud_time_scale_min: 240.0,
            attenuation_range: (0.0, 0.9),
            n_modes: 128,
            nwp_model: String::from("ECMWF"),
            nwp_lat: centered_axis(lat, 13, 0.1),
            nwp_lon: centered_axis(lon, 17, 0.1),
            nwp_issue_hours: vec![0, 12],
            nwp_max_lead_hours: 24,
            nwp_smoothing_km: 10.0,
            nwp_noise_sd: 0.5,
            satellite_noise_sd: 10.0,
            production_noise_sd: 5.0,
            diffuse_fraction: DEFAULT_DIFFUSE_FRACTION,
            satellite_mask_fraction: 0.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.attenuation_range;
        if !(0.0 <= a && a <= b && b <= 1.0) {
            return Err(invalid("attenuation range must satisfy 0 <= a_min <= a_max <= 1"));
        }
        if !(self.cloud_length_scale_km > 0.0 && self.cloud_time_scale_min > 0.0 && self.nwp_smoothing_km >= 0.0) {
            return Err(invalid("cloud length and time scales must be > 0"));
        }
        for (name, sd) in [
            ("nwp_noise_sd", self.nwp_noise_sd),
            ("satellite_noise_sd", self.satellite_noise_sd),
            ("production_noise_sd", self.production_noise_sd),
        ] {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(invalid(format!("{name} must be >= 0")));
            }
        }
        if !(self.wind_velocity.0.is_finite() && self.wind_velocity.1.is_finite()) {
            return Err(invalid("wind velocity must be finite"));
        }
        if self.span.is_empty() || !self.span.is_step_aligned() {
            return Err(invalid("scene span must be non-empty and aligned to 15 minutes"));
        }
        if self.sites.is_empty() {
            return Err(invalid("scene needs at least one site"));
        }
        for (i, s) in self.sites.iter().enumerate() {
            if self.sites[..i].iter().any(|o| o.site_id == s.site_id) {
                return Err(invalid(format!("duplicate site id {}", s.site_id)));
            }
        }
        for (name, axis) in
            [("grid_lat", &self.grid_lat), ("grid_lon", &self.grid_lon), ("nwp_lat", &self.nwp_lat), ("nwp_lon", &self.nwp_lon)]
        {
            if axis.is_empty() || axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(format!("{name} must be non-empty and strictly ascending")));
            }
        }
        if !(0.0..1.0).contains(&self.satellite_mask_fraction) {
            return Err(invalid("satellite_mask_fraction must lie in [0, 1)"));
        }
        if self.n_modes == 0 {
            return Err(invalid("n_modes must be >= 1"));
        }
        if self.nwp_issue_hours.iter().any(|h| *h >= 24) || self.nwp_max_lead_hours == 0 {
            return Err(invalid("NWP issue hours must lie in 0..24 and max lead must be >= 1"));
        }
        if self.nwp_model.is_empty() {
            return Err(invalid("empty NWP model tag"));
        }
        Ok(())
    }

    fn origin(&self) -> (f64, f64) {
        let mid = |a: &[f64]| (a[0] + a[a.len() - 1]) / 2.0;
        (mid(&self.grid_lat), mid(&self.grid_lon))
    }

    /// Issue times of the NWP runs falling inside the span.
    pub fn nwp_issue_times(&self) -> Vec<Timestamp> {
        let mut out = Vec::new();
        let mut day = self.span.start.floor_to(DAY_SECONDS);
        while day < self.span.end {
            for &h in &self.nwp_issue_hours {
                let t = day.add_seconds(h as i64 * HOUR_SECONDS);
                if self.span.contains(t) {
                    out.push(t);
                }
            }
            day = day.add_seconds(DAY_SECONDS);
        }
        out.sort();
        out.dedup();
        out
    }
}

/// Attenuation actually applied, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthField {
    /// Per site, on the scene span.
    pub site_attenuation: Vec<Vec<f64>>,
    /// Row-major `(time, lat, lon)` on the satellite grid.
    pub grid_attenuation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    /// Production in W/m² of panel area, per site.
    pub production: Vec<(SiteMetadata, TimeSeries15)>,
    pub satellite: GridStack,
    pub nwp_runs: Vec<NwpRun>,
    pub truth: TruthField,
}

impl Scene {
    pub fn bundle(&self, options: BundleOptions) -> Result<DataBundle> {
        DataBundle::assemble(self.production.clone(), Some(self.satellite.clone()), &self.nwp_runs, options)
    }
}

/// Mode tables for a set of points: `cos(k.p)` and `sin(k.p)` scaled by
/// the per-mode gain, row-major `(point, mode)`.
struct PointTable {
    cp: Vec<f64>,
    sp: Vec<f64>,
}

fn point_table(points: &[(f64, f64)], kx: &[f64], ky: &[f64], gain: &[f64]) -> PointTable {
    let k = kx.len();
    let mut cp = Vec::with_capacity(points.len() * k);
    let mut sp = Vec::with_capacity(points.len() * k);
    for &(x, y) in points {
        for m in 0..k {
            let ph = kx[m] * x + ky[m] * y;
            cp.push(gain[m] * math::cos(ph));
            sp.push(gain[m] * math::sin(ph));
        }
    }
    PointTable { cp, sp }
}

impl PointTable {
    fn eval(&self, i: usize, alpha: &[f64], beta: &[f64]) -> f64 {
        let k = alpha.len();
        let cp = &self.cp[i * k..(i + 1) * k];
        let sp = &self.sp[i * k..(i + 1) * k];
        let mut acc = 0.0;
        for m in 0..k {
            acc += cp[m] * alpha[m] + sp[m] * beta[m];
        }
        acc
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + math::erf(x / math::SQRT_2))
}

fn clipped_noise(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sd * z.clamp(-3.0, 3.0)
}

/// `round(fraction * n)` distinct cell indices, by a partial Fisher-Yates shuffle.
fn masked_cells(rng: &mut ChaCha8Rng, n: usize, fraction: f64) -> Vec<usize> {
    let m = math::round(fraction * n as f64) as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m.min(n) {
        let j = i + (rng.next_u64() % (n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(m.min(n));
    idx.sort_unstable();
    idx
}

pub fn generate(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let (lat0, lon0) = cfg.origin();
    let km_per_deg_lon = KM_PER_DEG * math::cos(math::to_rad(lat0));
    let to_xy = |p: GeoPoint| ((p.longitude_deg - lon0) * km_per_deg_lon, (p.latitude_deg - lat0) * KM_PER_DEG);

    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(s);
        r
    };
    let mut field_rng = stream(0);
    let mut prod_rng = stream(1);
    let mut sat_rng = stream(2);
    let mut nwp_rng = stream(3);
    let mut mask_rng = stream(4);

    let k = cfg.n_modes;
    let normal = |r: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(r) };
    let kx: Vec<f64> = (0..k).map(|_| normal(&mut field_rng) / cfg.cloud_length_scale_km).collect();
    let ky: Vec<f64> = (0..k).map(|_| normal(&mut field_rng) / cfg.cloud_length_scale_km).collect();
    let amp_sd = 1.0 / math::sqrt(k as f64);
    let mut a: Vec<f64> = (0..k).map(|_| amp_sd * normal(&mut field_rng)).collect();
    let mut b: Vec<f64> = (0..k).map(|_| amp_sd * normal(&mut field_rng)).collect();
    let rho = math::exp(-15.0 / cfg.cloud_time_scale_min);
    let innov = amp_sd * math::sqrt(1.0 - rho * rho);
    let step_km = STEP_SECONDS as f64 / 1000.0;
    let (wx, wy) = (cfg.wind_velocity.0 * step_km, cfg.wind_velocity.1 * step_km);
    let omega: Vec<f64> = (0..k).map(|m| kx[m] * wx + ky[m] * wy).collect();

    let unit_gain = vec![1.0; k];
    let s2 = cfg.nwp_smoothing_km * cfg.nwp_smoothing_km;
    let damp: Vec<f64> = (0..k).map(|m| math::exp(-0.5 * (kx[m] * kx[m] + ky[m] * ky[m]) * s2)).collect();
    let damp_norm = math::sqrt(damp.iter().map(|d| d * d).sum::<f64>() / k as f64);
    let nwp_gain: Vec<f64> = damp.iter().map(|d| d / damp_norm).collect();

    let site_pts: Vec<(f64, f64)> = cfg.sites.iter().map(|s| to_xy(s.location)).collect();
    let mut cell_geo = Vec::new();
    for &la in &cfg.grid_lat {
        for &lo in &cfg.grid_lon {
            cell_geo.push(GeoPoint::new(la, lo)?);
        }
    }
    let mut nwp_geo = Vec::new();
    for &la in &cfg.nwp_lat {
        for &lo in &cfg.nwp_lon {
            nwp_geo.push(GeoPoint::new(la, lo)?);
        }
    }
    let cell_pts: Vec<(f64, f64)> = cell_geo.iter().map(|p| to_xy(*p)).collect();
    let nwp_pts: Vec<(f64, f64)> = nwp_geo.iter().map(|p| to_xy(*p)).collect();
    let site_tab = point_table(&site_pts, &kx, &ky, &unit_gain);
    let cell_tab = point_table(&cell_pts, &kx, &ky, &unit_gain);
    let nwp_tab = point_table(&nwp_pts, &kx, &ky, &nwp_gain);

    let n = cfg.span.steps();
    let issues = cfg.nwp_issue_times();
    let lead_steps = cfg.nwp_max_lead_hours as usize * 4;
    let n_ext = issues
        .last()
        .map(|t| ((t.0 - cfg.span.start.0) / STEP_SECONDS) as usize + lead_steps + 1)
        .unwrap_or(0)
        .max(n);

    let (amin, amax) = cfg.attenuation_range;
    let att = |f: f64| amin + (amax - amin) * std_normal_cdf(f);
    let n_sites = cfg.sites.len();
    let n_cells = cell_geo.len();
    let n_nwp = nwp_geo.len();
    let mut site_att = vec![vec![0.0; n]; n_sites];
    let mut grid_att = vec![0.0; n * n_cells];
    let mut nwp_field = vec![0.0; n_ext * n_nwp];
    let mut alpha = vec![0.0; k];
    let mut beta = vec![0.0; k];
    for step in 0..n_ext {
        if step > 0 {
            for m in 0..k {
                a[m] = rho * a[m] + innov * normal(&mut field_rng);
                b[m] = rho * b[m] + innov * normal(&mut field_rng);
            }
        }
        for m in 0..k {
            let ph = omega[m] * step as f64;
            let (c, s) = (math::cos(ph), math::sin(ph));
            alpha[m] = a[m] * c - b[m] * s;
            beta[m] = a[m] * s + b[m] * c;
        }
        if step < n {
            for (i, sa) in site_att.iter_mut().enumerate() {
                sa[step] = att(site_tab.eval(i, &alpha, &beta));
            }
            for c in 0..n_cells {
                grid_att[step * n_cells + c] = att(cell_tab.eval(c, &alpha, &beta));
            }
        }
        for c in 0..n_nwp {
            nwp_field[step * n_nwp + c] = nwp_tab.eval(c, &alpha, &beta);
        }
    }

    let mut production = Vec::with_capacity(n_sites);
    for (i, site) in cfg.sites.iter().enumerate() {
        let mut values = vec![0.0; n];
        for (j, t) in cfg.span.iter_steps().enumerate() {
            let cs = clearsky_at(site.location, Some(site.orientation), cfg.diffuse_fraction, t)?;
            let noise = clipped_noise(&mut prod_rng, cfg.production_noise_sd);
            if cs > 0.0 {
                values[j] = (cs * (1.0 - site_att[i][j]) + noise).max(0.0);
            }
        }
        production.push((site.clone(), TimeSeries15::from_values(cfg.span.start, values, Unit::WattPerSquareMetre)?));
    }

    let mut frames = vec![0.0; n * n_cells];
    for (j, t) in cfg.span.iter_steps().enumerate() {
        for (c, p) in cell_geo.iter().enumerate() {
            let cs = clearsky_at(*p, None, cfg.diffuse_fraction, t)?;
            let noise = clipped_noise(&mut sat_rng, cfg.satellite_noise_sd);
            if cs > 0.0 {
                frames[j * n_cells + c] = (cs * (1.0 - grid_att[j * n_cells + c]) + noise).max(0.0);
            }
        }
    }
    let mut sat_valid = vec![true; n * n_cells];
    for c in masked_cells(&mut mask_rng, n_cells, cfg.satellite_mask_fraction) {
        for j in 0..n {
            sat_valid[j * n_cells + c] = false;
        }
    }
    let satellite = GridStack::new(cfg.grid_lat.clone(), cfg.grid_lon.clone(), cfg.span.start, n, frames, sat_valid)?;

    // Clear-sky at the NWP points on the extended span, computed once.
    let mut nwp_cs = vec![0.0; n_ext * n_nwp];
    for step in 0..n_ext {
        let t = cfg.span.start.add_steps(step as i64);
        for (c, p) in nwp_geo.iter().enumerate() {
            nwp_cs[step * n_nwp + c] = clearsky_at(*p, None, cfg.diffuse_fraction, t)?;
        }
    }
    let leads: Vec<u32> = (0..=cfg.nwp_max_lead_hours).collect();
    let mut nwp_runs = Vec::with_capacity(issues.len());
    for issue in issues {
        let s0 = ((issue.0 - cfg.span.start.0) / STEP_SECONDS) as usize;
        let mut ssrd = vec![0.0; leads.len() * n_nwp];
        let mut acc = vec![0.0; n_nwp];
        for lead in 1..leads.len() {
            let eps: Vec<f64> = (0..n_nwp).map(|_| cfg.nwp_noise_sd * normal(&mut nwp_rng)).collect();
            // Slots ending in (lead - 1, lead] hours after issue.
            for q in 1..=4 {
                let step = s0 + (lead - 1) * 4 + q;
                for c in 0..n_nwp {
                    let cs = nwp_cs[step * n_nwp + c];
                    if cs > 0.0 {
                        let ghi = cs * (1.0 - att(nwp_field[step * n_nwp + c] + eps[c]));
                        acc[c] += ghi * STEP_SECONDS as f64;
                    }
                }
            }
            ssrd[lead * n_nwp..(lead + 1) * n_nwp].copy_from_slice(&acc);
        }
        nwp_runs.push(NwpRun::new(
            cfg.nwp_model.clone(),
            issue,
            leads.clone(),
            cfg.nwp_lat.clone(),
            cfg.nwp_lon.clone(),
            ssrd,
            vec![true; leads.len() * n_nwp],
        )?);
    }

    Ok(Scene {
        config: cfg.clone(),
        production,
        satellite,
        nwp_runs,
        truth: TruthField { site_attenuation: site_att, grid_attenuation: grid_att },
    })
}
