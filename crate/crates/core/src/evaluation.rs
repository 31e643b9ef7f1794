//! RMSE and skill scores per horizon, per site and averaged over sites.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::bundle::DataBundle;
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::models::{Forecast, Forecaster};
use crate::time::{TimeSpan, Timestamp};

/// Site label of the cross-site aggregate rows.
pub const ALL_SITES: &str = "ALL";

/// Root mean square error over jointly present pairs.
pub fn rmse(pred: &[Option<f64>], obs: &[Option<f64>]) -> Result<f64> {
    if pred.len() != obs.len() {
        return Err(invalid("prediction and observation lengths differ"));
    }
    let mut sse = 0.0;
    let mut n = 0usize;
    for (p, o) in pred.iter().zip(obs) {
        if let (Some(p), Some(o)) = (p, o) {
            sse += (p - o) * (p - o);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientData("no jointly available forecast/observation pairs".into()));
    }
    Ok(math::sqrt(sse / n as f64))
}

pub fn skill_score(rmse_extended: f64, rmse_reference: f64) -> Result<f64> {
    if !(rmse_reference > 0.0) {
        return Err(invalid("reference RMSE must be > 0 for a skill score"));
    }
    Ok(1.0 - rmse_extended / rmse_reference)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub model: String,
    pub site: String,
    pub horizon_steps: usize,
    pub rmse_wm2: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillRow {
    pub model: String,
    pub reference: String,
    pub site: String,
    pub horizon_steps: usize,
    pub skill: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
    pub skills: Vec<SkillRow>,
}

impl ScoreTable {
    pub fn rmse(&self, model: &str, site: &str, h: usize) -> Option<f64> {
        self.row(model, site, h).map(|r| r.rmse_wm2)
    }

    pub fn row(&self, model: &str, site: &str, h: usize) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.model == model && r.site == site && r.horizon_steps == h)
    }

    pub fn skill(&self, model: &str, site: &str, h: usize) -> Option<f64> {
        self.skills
            .iter()
            .find(|s| s.model == model && s.site == site && s.horizon_steps == h)
            .map(|s| s.skill)
    }

    pub fn models(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.model.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn horizons(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.rows.iter().map(|r| r.horizon_steps).collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Score only targets whose plane-of-array clear-sky exceeds the bundle's floor.
    pub daytime_filter: bool,
    /// Label of the reference model for skill rows.
    pub reference: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { daytime_filter: true, reference: None }
    }
}

/// Scores forecasters over `test_span`.
///
/// Forecasts are issued at every step `t` of the span whose target `t + h`
/// also lies in it. For each (site, horizon) only targets forecast by every
/// forecaster of that site are scored. The `ALL` row of a model is the mean
/// of its per-site RMSEs.
pub fn evaluate(
    models: &[&dyn Forecaster],
    bundle: &DataBundle,
    test_span: TimeSpan,
    opts: &EvalOptions,
) -> Result<ScoreTable> {
    if models.is_empty() {
        return Err(invalid("no models to evaluate"));
    }
    for m in models {
        if let Some(train) = m.train_span() {
            if train.overlaps(&test_span) {
                return Err(Error::Leakage(format!(
                    "model {} trained on {}..{} overlaps test span {}..{}",
                    m.label(),
                    train.start,
                    train.end,
                    test_span.start,
                    test_span.end
                )));
            }
        }
    }
    if let Some(r) = &opts.reference {
        if !models.iter().any(|m| m.label() == r) {
            return Err(invalid(format!("reference model {r} is not among the evaluated models")));
        }
    }

    let mut by_site: BTreeMap<&str, Vec<&dyn Forecaster>> = BTreeMap::new();
    for m in models {
        let group = by_site.entry(m.site_id()).or_default();
        if group.iter().any(|g| g.label() == m.label()) {
            return Err(invalid(format!("model {} given twice for site {}", m.label(), m.site_id())));
        }
        group.push(*m);
    }

    let mut table = ScoreTable::default();
    for (site_id, group) in &by_site {
        let site = bundle.site(site_id).ok_or_else(|| invalid(format!("unknown site {site_id}")))?;
        let horizons: BTreeSet<usize> = group.iter().flat_map(|m| m.horizons()).collect();
        for h in horizons {
            let members: Vec<&dyn Forecaster> = group.iter().copied().filter(|m| m.horizons().contains(&h)).collect();
            let mut targets: Vec<Timestamp> = Vec::new();
            let mut obs: Vec<f64> = Vec::new();
            for t in test_span.iter_steps() {
                let target = t.add_steps(h as i64);
                if !test_span.contains(target) {
                    break;
                }
                let Some(o) = site.production.get(target) else { continue };
                if opts.daytime_filter && !site.cs_poa().get(target).is_some_and(|c| c > bundle.options.eps_floor) {
                    continue;
                }
                targets.push(t);
                obs.push(o);
            }
            let mut preds: Vec<Vec<Option<f64>>> = Vec::with_capacity(members.len());
            for m in &members {
                preds.push(targets.iter().map(|&t| forecast_or_skip(*m, bundle, t, h)).collect::<Result<_>>()?);
            }
            let common: Vec<usize> = (0..targets.len()).filter(|&i| preds.iter().all(|p| p[i].is_some())).collect();
            if common.is_empty() {
                continue;
            }
            let o: Vec<Option<f64>> = common.iter().map(|&i| Some(obs[i])).collect();
            for (m, p) in members.iter().zip(&preds) {
                let p: Vec<Option<f64>> = common.iter().map(|&i| p[i]).collect();
                table.rows.push(ScoreRow {
                    model: m.label().to_string(),
                    site: site_id.to_string(),
                    horizon_steps: h,
                    rmse_wm2: rmse(&p, &o)?,
                    n_samples: common.len(),
                });
            }
        }
    }

    aggregate_sites(&mut table);
    if let Some(reference) = &opts.reference {
        add_skills(&mut table, reference);
    }
    Ok(table)
}

fn forecast_or_skip(m: &dyn Forecaster, bundle: &DataBundle, t: Timestamp, h: usize) -> Result<Option<f64>> {
    match m.forecast(bundle, t, h) {
        Ok(f) => Ok(Some(f.value_wm2)),
        Err(Error::MissingInput { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Adds the `ALL` rows: mean of per-site RMSEs, samples summed.
pub fn aggregate_sites(table: &mut ScoreTable) {
    let mut acc: BTreeMap<(String, usize), (Vec<f64>, usize)> = BTreeMap::new();
    for r in table.rows.iter().filter(|r| r.site != ALL_SITES) {
        let e = acc.entry((r.model.clone(), r.horizon_steps)).or_default();
        e.0.push(r.rmse_wm2);
        e.1 += r.n_samples;
    }
    for ((model, h), (rmses, n)) in acc {
        let mean = rmses.iter().sum::<f64>() / rmses.len() as f64;
        table.rows.push(ScoreRow { model, site: ALL_SITES.to_string(), horizon_steps: h, rmse_wm2: mean, n_samples: n });
    }
}

/// Skill of every model against `reference`, wherever both have a row.
pub fn add_skills(table: &mut ScoreTable, reference: &str) {
    let mut skills = Vec::new();
    for r in &table.rows {
        let Some(ref_rmse) = table.rmse(reference, &r.site, r.horizon_steps) else { continue };
        if let Ok(skill) = skill_score(r.rmse_wm2, ref_rmse) {
            skills.push(SkillRow {
                model: r.model.clone(),
                reference: reference.to_string(),
                site: r.site.clone(),
                horizon_steps: r.horizon_steps,
                skill,
            });
        }
    }
    table.skills = skills;
}

/// Replays the observed production as its own forecast.
#[derive(Debug, Clone)]
pub struct Replay {
    pub label: String,
    pub site_id: String,
    pub horizons: Vec<usize>,
}

impl Forecaster for Replay {
    fn label(&self) -> &str {
        &self.label
    }

    fn site_id(&self) -> &str {
        &self.site_id
    }

    fn horizons(&self) -> Vec<usize> {
        self.horizons.clone()
    }

    fn train_span(&self) -> Option<TimeSpan> {
        None
    }

    fn forecast(&self, bundle: &DataBundle, t: Timestamp, h: usize) -> Result<Forecast> {
        let site = bundle.site(&self.site_id).ok_or_else(|| invalid(format!("unknown site {}", self.site_id)))?;
        let target = t.add_steps(h as i64);
        let v = site.production.get(target).ok_or_else(|| Error::MissingInput {
            timestamp: target.to_string(),
            column: format!("obs:{}", self.site_id),
        })?;
        let idx = site.index.index.get(target).unwrap_or(0.0);
        Ok(Forecast { issue_time: t, horizon_steps: h, value_wm2: v, value_index: idx })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        let obs = [Some(1.0), Some(2.0), Some(3.0)];
        assert_eq!(rmse(&obs, &obs).unwrap(), 0.0);
        let off = [Some(6.0), Some(7.0), Some(8.0)];
        assert!((rmse(&off, &obs).unwrap() - 5.0).abs() < 1e-12);
        let r = rmse(&[Some(0.0), Some(2.0)], &[Some(0.0), Some(0.0)]).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[None], &[Some(1.0)]).is_err());
    }

    #[test]
    fn skill_examples() {
        assert_eq!(skill_score(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(skill_score(0.0, 3.0).unwrap(), 1.0);
        assert!((skill_score(6.0, 10.0).unwrap() - 0.4).abs() < 1e-15);
        assert!(skill_score(1.0, 0.0).is_err());
    }

    #[test]
    fn all_row_is_mean_of_sites() {
        let mut t = ScoreTable::default();
        for (site, r) in [("a", 4.0), ("b", 6.0)] {
            t.rows.push(ScoreRow { model: "m".into(), site: site.into(), horizon_steps: 1, rmse_wm2: r, n_samples: 10 });
        }
        aggregate_sites(&mut t);
        assert_eq!(t.rmse("m", ALL_SITES, 1), Some(5.0));
        assert_eq!(t.row("m", ALL_SITES, 1).unwrap().n_samples, 20);
    }
}
