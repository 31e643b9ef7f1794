//! Solar geometry, analytic clear-sky irradiance, plane-of-array transposition
//! and great-circle distances.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math::{self, to_deg, to_rad};
use crate::series::{TimeSeries15, Unit};
use crate::time::{TimeSpan, Timestamp};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Default share of diffuse light used by [`transpose_to_plane`].
pub const DEFAULT_DIFFUSE_FRACTION: f64 = 0.3;

/// Floor on `cos(zenith)` in the beam projection ratio (about cos 85°).
pub const PROJECTION_COS_FLOOR: f64 = 0.087;

const HAURWITZ_SCALE: f64 = 1098.0;
const HAURWITZ_EXTINCTION: f64 = 0.059;

/// Earliest and latest instants accepted by the ephemeris (1950-01-01, 2101-01-01).
const EPHEMERIS_MIN: i64 = -631_152_000;
const EPHEMERIS_MAX: i64 = 4_133_980_800;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl GeoPoint {
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Result<Self> {
        if !latitude_deg.is_finite() || !(-90.0..=90.0).contains(&latitude_deg) {
            return Err(invalid("latitude must lie in [-90, 90]"));
        }
        if !longitude_deg.is_finite() || !(-180.0..180.0).contains(&longitude_deg) {
            return Err(invalid("longitude must lie in [-180, 180)"));
        }
        Ok(GeoPoint { latitude_deg, longitude_deg })
    }
}

/// Sun position; azimuth is clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarPosition {
    pub zenith_deg: f64,
    pub azimuth_deg: f64,
}

impl SolarPosition {
    pub fn new(zenith_deg: f64, azimuth_deg: f64) -> Result<Self> {
        if !(0.0..=180.0).contains(&zenith_deg) {
            return Err(invalid("zenith must lie in [0, 180]"));
        }
        if !(0.0..360.0).contains(&azimuth_deg) {
            return Err(invalid("azimuth must lie in [0, 360)"));
        }
        Ok(SolarPosition { zenith_deg, azimuth_deg })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelOrientation {
    pub tilt_deg: f64,
    pub azimuth_deg: f64,
}

impl PanelOrientation {
    pub fn new(tilt_deg: f64, azimuth_deg: f64) -> Result<Self> {
        if !(0.0..=90.0).contains(&tilt_deg) {
            return Err(invalid("tilt must lie in [0, 90]"));
        }
        if !(0.0..360.0).contains(&azimuth_deg) {
            return Err(invalid("panel azimuth must lie in [0, 360)"));
        }
        Ok(PanelOrientation { tilt_deg, azimuth_deg })
    }

    pub fn horizontal() -> Self {
        PanelOrientation { tilt_deg: 0.0, azimuth_deg: 180.0 }
    }
}

/// Which surface a clear-sky profile refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Horizontal,
    PlaneOfArray,
}

/// Clear-sky irradiance sampled on the 15-minute grid, in W/m².
#[derive(Debug, Clone, PartialEq)]
pub struct ClearSkyProfile {
    pub series: TimeSeries15,
    pub surface: Surface,
}

impl ClearSkyProfile {
    pub fn get(&self, t: Timestamp) -> Option<f64> {
        self.series.get(t)
    }
}

/// Low-precision solar ephemeris (Astronomical Almanac formulation,
/// about 0.01° in declination between 1950 and 2050).
pub fn solar_position(point: GeoPoint, t: Timestamp) -> Result<SolarPosition> {
    if t.0 < EPHEMERIS_MIN || t.0 >= EPHEMERIS_MAX {
        return Err(invalid("timestamp outside the 1950-2100 ephemeris range"));
    }
    let n = t.days_since_j2000();
    let mean_lon = math::rem_euclid(280.460 + 0.985_647_4 * n, 360.0);
    let mean_anomaly = to_rad(math::rem_euclid(357.528 + 0.985_600_3 * n, 360.0));
    let ecl_lon = to_rad(
        mean_lon + 1.915 * math::sin(mean_anomaly) + 0.020 * math::sin(2.0 * mean_anomaly),
    );
    let obliquity = to_rad(23.439 - 0.000_000_4 * n);

    let right_ascension = math::atan2(math::cos(obliquity) * math::sin(ecl_lon), math::cos(ecl_lon));
    let declination = math::asin(math::sin(obliquity) * math::sin(ecl_lon));

    let gmst_hours = math::rem_euclid(18.697_374_558 + 24.065_709_824_419_08 * n, 24.0);
    let hour_angle = to_rad(gmst_hours * 15.0 + point.longitude_deg) - right_ascension;

    let lat = to_rad(point.latitude_deg);
    let cos_zenith = (math::sin(lat) * math::sin(declination)
        + math::cos(lat) * math::cos(declination) * math::cos(hour_angle))
    .clamp(-1.0, 1.0);
    let zenith_deg = to_deg(math::acos(cos_zenith));
    let azimuth = math::atan2(
        -math::sin(hour_angle),
        math::cos(lat) * math::sin(declination) / math::cos(declination).max(1e-12)
            - math::sin(lat) * math::cos(hour_angle),
    );
    let mut azimuth_deg = math::rem_euclid(to_deg(azimuth), 360.0);
    if azimuth_deg >= 360.0 {
        azimuth_deg = 0.0;
    }
    Ok(SolarPosition { zenith_deg, azimuth_deg })
}

/// Haurwitz clear-sky global horizontal irradiance.
pub fn clearsky_ghi(pos: SolarPosition) -> f64 {
    if pos.zenith_deg >= 90.0 {
        return 0.0;
    }
    let cz = math::cos(to_rad(pos.zenith_deg));
    if cz <= 0.0 {
        return 0.0;
    }
    HAURWITZ_SCALE * cz * math::exp(-HAURWITZ_EXTINCTION / cz)
}

fn cos_incidence(pos: SolarPosition, orient: PanelOrientation) -> f64 {
    let z = to_rad(pos.zenith_deg);
    let tilt = to_rad(orient.tilt_deg);
    math::cos(z) * math::cos(tilt)
        + math::sin(z) * math::sin(tilt) * math::cos(to_rad(pos.azimuth_deg - orient.azimuth_deg))
}

/// Isotropic-sky projection of horizontal irradiance onto a tilted plane.
pub fn transpose_to_plane(ghi: f64, pos: SolarPosition, orient: PanelOrientation, diffuse_fraction: f64) -> f64 {
    if ghi <= 0.0 {
        return 0.0;
    }
    let d = diffuse_fraction.clamp(0.0, 1.0);
    let cz = math::cos(to_rad(pos.zenith_deg));
    let beam_ratio = cos_incidence(pos, orient).max(0.0) / cz.max(PROJECTION_COS_FLOOR);
    let sky_view = (1.0 + math::cos(to_rad(orient.tilt_deg))) / 2.0;
    (ghi * (1.0 - d) * beam_ratio + ghi * d * sky_view).max(0.0)
}

/// Clear-sky irradiance at a single instant; plane-of-array when `orient` is given.
pub fn clearsky_at(point: GeoPoint, orient: Option<PanelOrientation>, diffuse_fraction: f64, t: Timestamp) -> Result<f64> {
    let pos = solar_position(point, t)?;
    let ghi = clearsky_ghi(pos);
    Ok(match orient {
        Some(o) => transpose_to_plane(ghi, pos, o, diffuse_fraction),
        None => ghi,
    })
}

pub fn clearsky_profile(
    point: GeoPoint,
    orient: Option<PanelOrientation>,
    span: TimeSpan,
    diffuse_fraction: f64,
) -> Result<ClearSkyProfile> {
    if span.is_empty() {
        return Err(invalid("empty span for clear-sky profile"));
    }
    if !span.is_step_aligned() {
        return Err(invalid("clear-sky span is not aligned to the 15-minute grid"));
    }
    let values = span
        .iter_steps()
        .map(|t| clearsky_at(point, orient, diffuse_fraction, t))
        .collect::<Result<Vec<f64>>>()?;
    let series = TimeSeries15::from_values(span.start, values, Unit::WattPerSquareMetre)?;
    let surface = if orient.is_some() { Surface::PlaneOfArray } else { Surface::Horizontal };
    Ok(ClearSkyProfile { series, surface })
}

/// Great-circle distance on a spherical Earth.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (la1, la2) = (to_rad(a.latitude_deg), to_rad(b.latitude_deg));
    let dlat = la2 - la1;
    let dlon = to_rad(b.longitude_deg - a.longitude_deg);
    let s = math::sin(dlat / 2.0);
    let c = math::sin(dlon / 2.0);
    let h = (s * s + math::cos(la1) * math::cos(la2) * c * c).clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_KM * math::asin(math::sqrt(h))
}
