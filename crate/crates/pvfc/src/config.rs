//! Plain `key=value` run configuration. `#` starts a comment; unknown keys
//! are rejected so typos fail loudly.
//!
//! ```text
//! seed=42
//! output_dir=out
//! train_span=2016-05-01T00:00:00Z/2016-06-15T00:00:00Z
//! test_span=2016-06-15T00:00:00Z/2016-06-30T00:00:00Z
//! model.AR.variant=AR
//! model.ARX100.variant=ARX
//! model.ARX100.pixels=100
//! eval.reference=AR
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pvfc_core::bundle::BundleOptions;
use pvfc_core::geo_solar::PanelOrientation;
use pvfc_core::models::{Estimator, MissingPolicy, ModelSpec, RankLag, Variant};
use pvfc_core::regression::LassoConfig;
use pvfc_core::synthgen::{centered_axis, line_of_sites, SceneConfig};
use pvfc_core::time::DAY_SECONDS;
use pvfc_core::{TimeSpan, Timestamp};

use crate::error::{PvfcError, Result};
use crate::formats::parse_timestamp;

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub production: PathBuf,
    pub metadata: PathBuf,
    pub satellite: PathBuf,
    pub nwp: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub reference: Option<String>,
    pub daytime_filter: bool,
    pub missing_policy: MissingPolicy,
    /// Models scored by `evaluate` when none is named on the command line.
    pub models: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Config text as read, copied into run manifests.
    pub text: String,
    pub output_dir: PathBuf,
    pub data: DataPaths,
    pub use_satellite: bool,
    pub use_nwp: bool,
    pub sites: Option<Vec<String>>,
    pub train_span: Option<TimeSpan>,
    pub test_span: Option<TimeSpan>,
    pub seed: Option<u64>,
    pub scene: SceneConfig,
    pub models: Vec<ModelSpec>,
    pub bundle: BundleOptions,
    pub eval: EvalSettings,
    pub rank_radius_km: f64,
    pub rank_lag: usize,
    /// Named comparisons for `report`, each a list of model names.
    pub report: Vec<(String, Vec<String>)>,
}

/// Scene layout knobs that are expanded into a [`SceneConfig`].
struct SceneLayout {
    start: Timestamp,
    days: i64,
    n_sites: usize,
    site_spacing_km: f64,
    lat: f64,
    lon: f64,
    tilt: f64,
    azimuth: f64,
    grid_n_lat: usize,
    grid_n_lon: usize,
    grid_spacing: f64,
    nwp_n_lat: usize,
    nwp_n_lon: usize,
    nwp_spacing: f64,
}

impl Default for SceneLayout {
    fn default() -> Self {
        SceneLayout {
            start: Timestamp::from_civil(2016, 5, 1, 0, 0, 0),
            days: 60,
            n_sites: 6,
            site_spacing_km: 20.0,
            lat: 44.75,
            lon: 4.80,
            tilt: 30.0,
            azimuth: 180.0,
            grid_n_lat: 20,
            grid_n_lon: 20,
            grid_spacing: 0.0625,
            nwp_n_lat: 13,
            nwp_n_lon: 17,
            nwp_spacing: 0.1,
        }
    }
}

fn usage(line: usize, msg: impl std::fmt::Display) -> PvfcError {
    PvfcError::usage(format!("config line {line}: {msg}"))
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| usage(line, format!("invalid value {v:?} for {key}")))
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(usage(line, format!("invalid boolean {v:?} for {key}"))),
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

fn span(line: usize, key: &str, v: &str) -> Result<TimeSpan> {
    let (a, b) = v.split_once('/').ok_or_else(|| usage(line, format!("{key} must be start/end")))?;
    let a = parse_timestamp(a).map_err(|e| usage(line, e))?;
    let b = parse_timestamp(b).map_err(|e| usage(line, e))?;
    let s = TimeSpan::new(a, b).map_err(|e| usage(line, e))?;
    if s.is_empty() || !s.is_step_aligned() {
        return Err(usage(line, format!("{key} must be non-empty and aligned to 15 minutes")));
    }
    Ok(s)
}

/// Horizon list such as `1-8,12,24`.
pub fn parse_horizons(v: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || format!("invalid horizon list {v:?}");
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

struct ModelKeys {
    line: usize,
    variant: Option<Variant>,
    spec_edits: Vec<(usize, String, String)>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| PvfcError::usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut output_dir = base.join("out");
        let mut paths: [Option<PathBuf>; 4] = Default::default();
        let mut use_satellite = true;
        let mut use_nwp = true;
        let mut sites = None;
        let mut train_span = None;
        let mut test_span = None;
        let mut seed = None;
        let mut scene = SceneConfig::default();
        let mut layout = SceneLayout::default();
        let mut bundle = BundleOptions::default();
        let mut eval = EvalSettings { reference: None, daytime_filter: true, missing_policy: MissingPolicy::Skip, models: None };
        let mut rank_radius_km = pvfc_core::features::SCAN_RADIUS_KM;
        let mut rank_lag = 0usize;
        let mut report: Vec<(String, Vec<String>)> = Vec::new();
        let mut model_order: Vec<String> = Vec::new();
        let mut models: BTreeMap<String, ModelKeys> = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| usage(n, "expected key=value"))?;
            let (key, v) = (key.trim(), value.trim());
            if let Some(prev) = seen.insert(key.to_string(), n) {
                return Err(usage(n, format!("duplicate key {key} (first set on line {prev})")));
            }
            match key {
                "seed" => seed = Some(num(n, key, v)?),
                "output_dir" => output_dir = resolve(v),
                "production_csv" => paths[0] = Some(resolve(v)),
                "metadata_csv" => paths[1] = Some(resolve(v)),
                "satellite_csv" => paths[2] = Some(resolve(v)),
                "nwp_csv" => paths[3] = Some(resolve(v)),
                "use_satellite" => use_satellite = boolean(n, key, v)?,
                "use_nwp" => use_nwp = boolean(n, key, v)?,
                "sites" => sites = Some(list(v)),
                "train_span" => train_span = Some(span(n, key, v)?),
                "test_span" => test_span = Some(span(n, key, v)?),
                "bundle.eps_floor" => bundle.eps_floor = num(n, key, v)?,
                "bundle.diffuse_fraction" => bundle.diffuse_fraction = num(n, key, v)?,
                "bundle.quality_check" => bundle.quality_check = boolean(n, key, v)?,
                "eval.reference" => eval.reference = Some(v.to_string()),
                "eval.daytime_filter" => eval.daytime_filter = boolean(n, key, v)?,
                "eval.missing_policy" => eval.missing_policy = MissingPolicy::parse(v).map_err(|e| usage(n, e))?,
                "eval.models" => eval.models = Some(list(v)),
                "rank.radius_km" => rank_radius_km = num(n, key, v)?,
                "rank.lag" => rank_lag = num(n, key, v)?,
                "scene.start" => layout.start = parse_timestamp(v).map_err(|e| usage(n, e))?,
                "scene.days" => layout.days = num(n, key, v)?,
                "scene.n_sites" => layout.n_sites = num(n, key, v)?,
                "scene.site_spacing_km" => layout.site_spacing_km = num(n, key, v)?,
                "scene.lat" => layout.lat = num(n, key, v)?,
                "scene.lon" => layout.lon = num(n, key, v)?,
                "scene.tilt_deg" => layout.tilt = num(n, key, v)?,
                "scene.azimuth_deg" => layout.azimuth = num(n, key, v)?,
                "scene.grid_n_lat" => layout.grid_n_lat = num(n, key, v)?,
                "scene.grid_n_lon" => layout.grid_n_lon = num(n, key, v)?,
                "scene.grid_spacing_deg" => layout.grid_spacing = num(n, key, v)?,
                "scene.nwp_n_lat" => layout.nwp_n_lat = num(n, key, v)?,
                "scene.nwp_n_lon" => layout.nwp_n_lon = num(n, key, v)?,
                "scene.nwp_spacing_deg" => layout.nwp_spacing = num(n, key, v)?,
                "scene.wind_east_ms" => scene.wind_velocity.0 = num(n, key, v)?,
                "scene.wind_north_ms" => scene.wind_velocity.1 = num(n, key, v)?,
                "scene.cloud_length_scale_km" => scene.cloud_length_scale_km = num(n, key, v)?,
                "scene.cloud_time_scale_min" => scene.cloud_time_scale_min = num(n, key, v)?,
                "scene.attenuation_min" => scene.attenuation_range.0 = num(n, key, v)?,
                "scene.attenuation_max" => scene.attenuation_range.1 = num(n, key, v)?,
                "scene.n_modes" => scene.n_modes = num(n, key, v)?,
                "scene.nwp_model" => scene.nwp_model = v.to_string(),
                "scene.nwp_issue_hours" => {
                    scene.nwp_issue_hours =
                        list(v).iter().map(|h| num(n, key, h)).collect::<Result<Vec<u32>>>()?;
                }
                "scene.nwp_max_lead_hours" => scene.nwp_max_lead_hours = num(n, key, v)?,
                "scene.nwp_smoothing_km" => scene.nwp_smoothing_km = num(n, key, v)?,
                "scene.nwp_noise_sd" => scene.nwp_noise_sd = num(n, key, v)?,
                "scene.satellite_noise_sd" => scene.satellite_noise_sd = num(n, key, v)?,
                "scene.production_noise_sd" => scene.production_noise_sd = num(n, key, v)?,
                "scene.satellite_mask_fraction" => scene.satellite_mask_fraction = num(n, key, v)?,
                _ => {
                    if let Some(name) = key.strip_prefix("report.") {
                        if name.is_empty() {
                            return Err(usage(n, "empty report name"));
                        }
                        report.push((name.to_string(), list(v)));
                    } else if let Some(rest) = key.strip_prefix("model.") {
                        let (name, field) = rest.rsplit_once('.').ok_or_else(|| usage(n, format!("unknown key {key}")))?;
                        if name.is_empty() {
                            return Err(usage(n, "empty model name"));
                        }
                        let entry = models.entry(name.to_string()).or_insert_with(|| {
                            model_order.push(name.to_string());
                            ModelKeys { line: n, variant: None, spec_edits: Vec::new() }
                        });
                        if field == "variant" {
                            entry.variant = Some(Variant::parse(v).map_err(|e| usage(n, e))?);
                        } else {
                            entry.spec_edits.push((n, field.to_string(), v.to_string()));
                        }
                    } else {
                        return Err(usage(n, format!("unknown key {key}")));
                    }
                }
            }
        }

        if !(rank_radius_km > 0.0) {
            return Err(PvfcError::usage("rank.radius_km must be > 0"));
        }
        if let (Some(a), Some(b)) = (train_span, test_span) {
            if a.overlaps(&b) {
                return Err(PvfcError::usage(format!(
                    "train span {}..{} overlaps test span {}..{}",
                    a.start, a.end, b.start, b.end
                )));
            }
        }
        if let Some(s) = seed {
            scene.seed = s;
        }
        apply_layout(&mut scene, &layout)?;
        scene.diffuse_fraction = bundle.diffuse_fraction;

        let mut specs = Vec::with_capacity(model_order.len());
        for name in &model_order {
            let keys = &models[name];
            let variant = keys.variant.ok_or_else(|| usage(keys.line, format!("model {name} has no variant")))?;
            let spec = build_spec(name, variant, &keys.spec_edits)?;
            spec.validate().map_err(|e| usage(keys.line, e))?;
            specs.push(spec);
        }

        let data_dir = output_dir.join("data");
        let [p, m, s, w] = paths;
        let data = DataPaths {
            production: p.unwrap_or_else(|| data_dir.join("production.csv")),
            metadata: m.unwrap_or_else(|| data_dir.join("sites.csv")),
            satellite: s.unwrap_or_else(|| data_dir.join("satellite.csv")),
            nwp: w.unwrap_or_else(|| data_dir.join("nwp.csv")),
        };
        Ok(RunConfig {
            text: text.to_string(),
            output_dir,
            data,
            use_satellite,
            use_nwp,
            sites,
            train_span,
            test_span,
            seed,
            scene,
            models: specs,
            bundle,
            eval,
            rank_radius_km,
            rank_lag,
            report,
        })
    }

    pub fn model(&self, name: &str) -> Result<&ModelSpec> {
        self.models.iter().find(|m| m.name == name).ok_or_else(|| {
            let names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
            PvfcError::usage(format!(
                "unknown model {name:?}; available: {}",
                if names.is_empty() { "(none configured)".to_string() } else { names.join(", ") }
            ))
        })
    }

    pub fn train_span(&self) -> Result<TimeSpan> {
        self.train_span.ok_or_else(|| PvfcError::usage("config has no train_span"))
    }

    pub fn test_span(&self) -> Result<TimeSpan> {
        self.test_span.ok_or_else(|| PvfcError::usage("config has no test_span"))
    }

    /// Checks that every data file the command is about to read exists.
    pub fn require_inputs(&self) -> Result<()> {
        let mut need = vec![&self.data.production, &self.data.metadata];
        if self.use_satellite {
            need.push(&self.data.satellite);
        }
        if self.use_nwp {
            need.push(&self.data.nwp);
        }
        for p in need {
            if !p.is_file() {
                return Err(PvfcError::usage(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

fn apply_layout(scene: &mut SceneConfig, l: &SceneLayout) -> Result<()> {
    let bad = |e: pvfc_core::Error| PvfcError::usage(format!("scene: {e}"));
    if l.days <= 0 {
        return Err(PvfcError::usage("scene.days must be >= 1"));
    }
    let orientation = PanelOrientation::new(l.tilt, l.azimuth).map_err(bad)?;
    scene.span = TimeSpan::new(l.start, l.start.add_seconds(l.days * DAY_SECONDS)).map_err(bad)?;
    scene.sites = line_of_sites(l.n_sites, l.lat, l.lon, l.site_spacing_km, orientation).map_err(bad)?;
    scene.grid_lat = centered_axis(l.lat, l.grid_n_lat, l.grid_spacing);
    scene.grid_lon = centered_axis(l.lon, l.grid_n_lon, l.grid_spacing);
    scene.nwp_lat = centered_axis(l.lat, l.nwp_n_lat, l.nwp_spacing);
    scene.nwp_lon = centered_axis(l.lon, l.nwp_n_lon, l.nwp_spacing);
    scene.validate().map_err(bad)
}

fn build_spec(name: &str, variant: Variant, edits: &[(usize, String, String)]) -> Result<ModelSpec> {
    let mut spec = ModelSpec::new(name, variant);
    let mut estimator: Option<&str> = None;
    let mut lasso = LassoConfig::default();
    for (n, field, v) in edits {
        let (n, v) = (*n, v.as_str());
        match field.as_str() {
            "lags" => spec.lags = num(n, field, v)?,
            "neighbors" => spec.neighbor_k = num(n, field, v)?,
            "pixels" => spec.satellite_pixels = Some(num(n, field, v)?),
            "nwp" => spec.nwp_model = Some(v.to_string()),
            "horizons" => spec.horizons = parse_horizons(v).map_err(|e| usage(n, e))?,
            "radius_km" => spec.radius_km = num(n, field, v)?,
            "rank_lag" => spec.rank_lag = if v == "horizon" { RankLag::Horizon } else { RankLag::Fixed(num(n, field, v)?) },
            "estimator" => match v {
                "ols" | "lasso" => estimator = Some(if v == "ols" { "ols" } else { "lasso" }),
                _ => return Err(usage(n, format!("estimator must be ols or lasso, got {v:?}"))),
            },
            "lasso_max_iter" => lasso.max_iter = num(n, field, v)?,
            "lasso_tol" => lasso.tol = num(n, field, v)?,
            "lasso_path_length" => lasso.path_length = num(n, field, v)?,
            "lasso_path_ratio" => lasso.path_ratio = num(n, field, v)?,
            _ => return Err(usage(n, format!("unknown key model.{name}.{field}"))),
        }
    }
    let use_lasso = match estimator {
        Some(e) => e == "lasso",
        None => spec.satellite_pixels.is_some(),
    };
    spec.estimator = if use_lasso { Estimator::Lasso(lasso) } else { Estimator::Ols };
    Ok(spec)
}
