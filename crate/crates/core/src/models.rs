//! The AR / ARST / ARX / ARXST model family, fitted independently per horizon.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::bundle::{DataBundle, SiteData};
use crate::error::{invalid, Error, Result};
use crate::features::{
    build_design_matrix, nearest_neighbors, rank_pixels, top_n, ColumnSource, PixelRanking, Sources, DEFAULT_MAX_LAG,
    DEFAULT_NEIGHBORS, DEFAULT_RADIUS_KM,
};
use crate::geo_solar::clearsky_at;
use crate::regression::{ols_fit, select_lambda, Coefficients, LassoConfig};
use crate::time::{TimeSpan, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Ar,
    Arst,
    Arx,
    Arxst,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Ar => "AR",
            Variant::Arst => "ARST",
            Variant::Arx => "ARX",
            Variant::Arxst => "ARXST",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AR" => Ok(Variant::Ar),
            "ARST" => Ok(Variant::Arst),
            "ARX" => Ok(Variant::Arx),
            "ARXST" => Ok(Variant::Arxst),
            _ => Err(invalid(format!("unknown model variant {s:?}"))),
        }
    }

    pub fn spatio_temporal(self) -> bool {
        matches!(self, Variant::Arst | Variant::Arxst)
    }

    pub fn exogenous(self) -> bool {
        matches!(self, Variant::Arx | Variant::Arxst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Ols,
    /// Penalty chosen by [`select_lambda`]; `lambda` in the config is ignored.
    Lasso(LassoConfig),
}

/// Lag used when ranking satellite pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankLag {
    Fixed(usize),
    /// Rank at a lag equal to the horizon being fitted.
    Horizon,
}

impl RankLag {
    pub fn at(self, horizon_steps: usize) -> usize {
        match self {
            RankLag::Fixed(l) => l,
            RankLag::Horizon => horizon_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub variant: Variant,
    pub lags: usize,
    pub neighbor_k: usize,
    /// Number of top-ranked pixels, when satellite inputs are used.
    pub satellite_pixels: Option<usize>,
    /// NWP model tag, when NWP inputs are used.
    pub nwp_model: Option<String>,
    pub horizons: Vec<usize>,
    pub estimator: Estimator,
    pub radius_km: f64,
    pub rank_lag: RankLag,
}

impl ModelSpec {
    /// Spec with defaults for the variant: 4 lags, 4 neighbours when
    /// spatio-temporal, horizons 1..=24, OLS.
    pub fn new(name: impl Into<String>, variant: Variant) -> Self {
        ModelSpec {
            name: name.into(),
            variant,
            lags: DEFAULT_MAX_LAG,
            neighbor_k: if variant.spatio_temporal() { DEFAULT_NEIGHBORS } else { 0 },
            satellite_pixels: None,
            nwp_model: None,
            horizons: (1..=24).collect(),
            estimator: Estimator::Ols,
            radius_km: DEFAULT_RADIUS_KM,
            rank_lag: RankLag::Fixed(0),
        }
    }

    pub fn with_satellite(mut self, n: usize) -> Self {
        self.satellite_pixels = Some(n);
        if self.estimator == Estimator::Ols {
            self.estimator = Estimator::Lasso(LassoConfig::default());
        }
        self
    }

    pub fn with_nwp(mut self, model: impl Into<String>) -> Self {
        self.nwp_model = Some(model.into());
        self
    }

    pub fn with_horizons(mut self, horizons: Vec<usize>) -> Self {
        self.horizons = horizons;
        self
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(invalid("model name is empty"));
        }
        let v = self.variant;
        if v.spatio_temporal() && self.neighbor_k == 0 {
            return Err(invalid(format!("{}: {} needs neighbor_k >= 1", self.name, v.label())));
        }
        if !v.spatio_temporal() && self.neighbor_k != 0 {
            return Err(invalid(format!("{}: {} takes no neighbours", self.name, v.label())));
        }
        let exo = self.satellite_pixels.is_some() || self.nwp_model.is_some();
        if v.exogenous() && !exo {
            return Err(invalid(format!("{}: {} needs satellite or NWP inputs", self.name, v.label())));
        }
        if !v.exogenous() && exo {
            return Err(invalid(format!("{}: {} takes no exogenous inputs", self.name, v.label())));
        }
        if self.satellite_pixels == Some(0) {
            return Err(invalid(format!("{}: satellite pixel count must be >= 1", self.name)));
        }
        if self.satellite_pixels.is_some() && self.estimator == Estimator::Ols {
            return Err(invalid(format!("{}: satellite inputs require the LASSO estimator", self.name)));
        }
        if let Estimator::Lasso(cfg) = &self.estimator {
            cfg.validate()?;
        }
        if self.horizons.is_empty() {
            return Err(invalid(format!("{}: no horizons", self.name)));
        }
        if self.horizons.iter().any(|h| !(1..=24).contains(h)) {
            return Err(invalid(format!("{}: horizons must lie in 1..=24", self.name)));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!("{}: horizons must be strictly ascending", self.name)));
        }
        if !(self.radius_km > 0.0) {
            return Err(invalid(format!("{}: radius must be > 0", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonModel {
    pub horizon_steps: usize,
    pub columns: Vec<ColumnSource>,
    pub coefficients: Coefficients,
    pub ranking: Option<PixelRanking>,
    pub lambda: Option<f64>,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub site_id: String,
    pub neighbors: Vec<String>,
    pub per_horizon: BTreeMap<usize, HorizonModel>,
    pub train_span: TimeSpan,
    /// Horizons that could not be fitted, with the reason.
    pub missing: Vec<(usize, String)>,
}

impl FittedModel {
    pub fn is_partial(&self) -> bool {
        !self.missing.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    pub issue_time: Timestamp,
    pub horizon_steps: usize,
    pub value_wm2: f64,
    pub value_index: f64,
}

impl Forecast {
    pub fn target_time(&self) -> Timestamp {
        self.issue_time.add_steps(self.horizon_steps as i64)
    }
}

/// Everything shared by the per-horizon fits of one model at one site.
///
/// Horizons are independent, so callers may run [`FitPlan::fit_horizon`]
/// concurrently and hand the results to [`FitPlan::finish`].
pub struct FitPlan<'a> {
    pub spec: ModelSpec,
    pub site: &'a SiteData,
    pub bundle: &'a DataBundle,
    pub neighbors: Vec<String>,
    pub train_span: TimeSpan,
}

impl<'a> FitPlan<'a> {
    pub fn new(spec: &ModelSpec, site_id: &str, bundle: &'a DataBundle, train_span: TimeSpan) -> Result<Self> {
        spec.validate()?;
        let site = bundle.site(site_id).ok_or_else(|| invalid(format!("unknown site {site_id}")))?;
        let neighbors = if spec.variant.spatio_temporal() {
            nearest_neighbors(&site.meta, &bundle.site_metas(), spec.neighbor_k)?.neighbors
        } else {
            Vec::new()
        };
        if spec.satellite_pixels.is_some() && bundle.satellite.is_none() {
            return Err(invalid(format!("{}: satellite inputs requested but none loaded", spec.name)));
        }
        if let Some(m) = &spec.nwp_model {
            if !site.nwp_index.contains_key(m) {
                return Err(invalid(format!("{}: NWP model {m} not loaded", spec.name)));
            }
        }
        Ok(FitPlan { spec: spec.clone(), site, bundle, neighbors, train_span })
    }

    pub fn fit_horizon(&self, h: usize) -> Result<HorizonModel> {
        let (ranking, pixels) = match self.spec.satellite_pixels {
            Some(n) => {
                let sat = self.bundle.satellite.as_ref().ok_or_else(|| invalid("no satellite data"))?;
                let r = rank_pixels(
                    &self.site.meta,
                    sat,
                    &self.site.index.index,
                    self.spec.radius_km,
                    self.spec.rank_lag.at(h),
                    Some(self.train_span),
                )?;
                let cells = top_n(&r, n);
                (Some(r), cells)
            }
            None => (None, Vec::new()),
        };
        let sources = Sources { neighbors: self.neighbors.clone(), pixels, nwp: self.spec.nwp_model.clone() };
        let dm = build_design_matrix(self.bundle, &self.site.meta.site_id, h, self.spec.lags, &sources, self.train_span)?;
        let (coefficients, lambda) = match &self.spec.estimator {
            Estimator::Ols => (ols_fit(&dm)?, None),
            Estimator::Lasso(cfg) => {
                let sel = select_lambda(&dm, cfg)?;
                (sel.coefficients, Some(sel.lambda))
            }
        };
        Ok(HorizonModel { horizon_steps: h, columns: dm.columns, coefficients, ranking, lambda, n_rows: dm.y.len() })
    }

    /// Collects per-horizon results; fails only if no horizon was fitted.
    pub fn finish(self, results: Vec<(usize, Result<HorizonModel>)>) -> Result<FittedModel> {
        let mut per_horizon = BTreeMap::new();
        let mut missing = Vec::new();
        let mut first_err = None;
        for (h, r) in results {
            match r {
                Ok(m) => {
                    per_horizon.insert(h, m);
                }
                Err(e) => {
                    missing.push((h, e.to_string()));
                    first_err.get_or_insert(e);
                }
            }
        }
        if per_horizon.is_empty() {
            return Err(first_err.unwrap_or_else(|| invalid("no horizons to fit")));
        }
        Ok(FittedModel {
            spec: self.spec,
            site_id: self.site.meta.site_id.clone(),
            neighbors: self.neighbors,
            per_horizon,
            train_span: self.train_span,
            missing,
        })
    }
}

/// Fits every horizon of `spec` for one site on `train_span`.
pub fn fit(spec: &ModelSpec, site_id: &str, bundle: &DataBundle, train_span: TimeSpan) -> Result<FittedModel> {
    let plan = FitPlan::new(spec, site_id, bundle, train_span)?;
    let results = plan.spec.horizons.iter().map(|&h| (h, plan.fit_horizon(h))).collect();
    plan.finish(results)
}

/// Time at which a column's value is read for issue time `t`.
pub fn input_time(col: &ColumnSource, t: Timestamp, horizon_steps: usize) -> Timestamp {
    match col {
        ColumnSource::SiteLag { lag, .. } => t.add_steps(-(*lag as i64)),
        ColumnSource::Pixel(_) => t,
        ColumnSource::Nwp { .. } => t.add_steps(horizon_steps as i64),
    }
}

/// Regressor vector for one forecast, or the first missing input.
pub fn regressors(columns: &[ColumnSource], bundle: &DataBundle, t: Timestamp, h: usize) -> Result<Vec<f64>> {
    columns
        .iter()
        .map(|c| {
            c.value(bundle, t, h).ok_or_else(|| Error::MissingInput {
                timestamp: input_time(c, t, h).to_string(),
                column: c.name(),
            })
        })
        .collect()
}

/// Forecast issued at `t` for `t + h`, back in W/m² on the panel plane.
pub fn predict(model: &FittedModel, bundle: &DataBundle, t: Timestamp, h: usize) -> Result<Forecast> {
    let hm = model.per_horizon.get(&h).ok_or(Error::UnfittedHorizon(h))?;
    let site = bundle.site(&model.site_id).ok_or_else(|| invalid(format!("unknown site {}", model.site_id)))?;
    let x = regressors(&hm.columns, bundle, t, h)?;
    let value_index = hm.coefficients.predict_row(&x);
    let target = t.add_steps(h as i64);
    let cs = clearsky_at(site.meta.location, Some(site.meta.orientation), bundle.options.diffuse_fraction, target)?;
    Ok(Forecast { issue_time: t, horizon_steps: h, value_wm2: (value_index * cs).max(0.0), value_index })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    Skip,
    Error,
}

impl MissingPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(MissingPolicy::Skip),
            "error" => Ok(MissingPolicy::Error),
            _ => Err(invalid(format!("missing_policy must be skip or error, got {s:?}"))),
        }
    }
}

/// One forecast per issue time in `span`; with `Skip`, issue times with
/// missing inputs are left out.
pub fn predict_batch(
    model: &FittedModel,
    bundle: &DataBundle,
    span: TimeSpan,
    h: usize,
    policy: MissingPolicy,
) -> Result<Vec<Forecast>> {
    let mut out = Vec::new();
    for t in span.iter_steps() {
        match predict(model, bundle, t, h) {
            Ok(f) => out.push(f),
            Err(Error::MissingInput { .. }) if policy == MissingPolicy::Skip => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Anything that issues forecasts for one site; lets evaluation score fitted
/// models and reference forecasts alike.
pub trait Forecaster {
    fn label(&self) -> &str;
    fn site_id(&self) -> &str;
    fn horizons(&self) -> Vec<usize>;
    /// Span the forecaster was trained on, if any.
    fn train_span(&self) -> Option<TimeSpan>;
    fn forecast(&self, bundle: &DataBundle, t: Timestamp, h: usize) -> Result<Forecast>;
}

impl Forecaster for FittedModel {
    fn label(&self) -> &str {
        &self.spec.name
    }

    fn site_id(&self) -> &str {
        &self.site_id
    }

    fn horizons(&self) -> Vec<usize> {
        self.per_horizon.keys().copied().collect()
    }

    fn train_span(&self) -> Option<TimeSpan> {
        Some(self.train_span)
    }

    fn forecast(&self, bundle: &DataBundle, t: Timestamp, h: usize) -> Result<Forecast> {
        predict(self, bundle, t, h)
    }
}
