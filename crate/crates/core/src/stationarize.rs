//! Clear-sky index: physical series divided by the clear-sky profile, and back.

use crate::error::Result;
use crate::geo_solar::ClearSkyProfile;
use crate::series::{TimeSeries15, Unit};

/// Default clear-sky floor under which the index is masked, W/m².
pub const DEFAULT_EPS_FLOOR: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub index: TimeSeries15,
    pub cs_ref: ClearSkyProfile,
    pub eps_floor: f64,
}

/// `index_t = value_t / cs_t` where `cs_t > eps_floor`, masked elsewhere.
///
/// Negative physical values (sensor offsets) map to an index of 0.
pub fn normalize(series: &TimeSeries15, cs: &ClearSkyProfile, eps_floor: f64) -> Result<NormalizedSeries> {
    series.ensure_same_grid(&cs.series, "normalize")?;
    let n = series.len();
    let mut values = alloc::vec![0.0; n];
    let mut valid = alloc::vec![false; n];
    for i in 0..n {
        let c = cs.series.values()[i];
        if series.is_valid(i) && cs.series.is_valid(i) && c > eps_floor {
            values[i] = series.values()[i].max(0.0) / c;
            valid[i] = true;
        }
    }
    Ok(NormalizedSeries {
        index: TimeSeries15::new(series.start(), values, valid, Unit::Dimensionless)?,
        cs_ref: cs.clone(),
        eps_floor,
    })
}

pub fn denormalize(norm: &NormalizedSeries) -> Result<TimeSeries15> {
    let cs = norm.cs_ref.series.values();
    let values = norm
        .index
        .values()
        .iter()
        .zip(cs)
        .map(|(k, c)| k * c)
        .collect();
    TimeSeries15::new(norm.index.start(), values, norm.index.mask().to_vec(), Unit::WattPerSquareMetre)
}
