//! Masked time series carriers.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::time::{TimeSpan, Timestamp, STEP_SECONDS};

/// Physical unit attached to a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    MegaWatt,
    WattPerSquareMetre,
    Dimensionless,
    JoulePerSquareMetreCumulated,
}

impl Unit {
    pub fn tag(self) -> &'static str {
        match self {
            Unit::MegaWatt => "MW",
            Unit::WattPerSquareMetre => "W/m2",
            Unit::Dimensionless => "1",
            Unit::JoulePerSquareMetreCumulated => "J/m2-cum",
        }
    }
}

/// A UTC series on the 15-minute grid with a validity mask.
///
/// Masked entries always store `0.0`, so two series with the same mask and
/// valid values compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries15 {
    start: Timestamp,
    values: Vec<f64>,
    valid: Vec<bool>,
    unit: Unit,
}

impl TimeSeries15 {
    pub fn new(start: Timestamp, values: Vec<f64>, valid: Vec<bool>, unit: Unit) -> Result<Self> {
        if !start.is_step_aligned() {
            return Err(invalid("series start is not aligned to the 15-minute grid"));
        }
        if values.len() != valid.len() {
            return Err(invalid("values and mask have different lengths"));
        }
        let mut values = values;
        for (v, ok) in values.iter_mut().zip(valid.iter()) {
            if *ok {
                if !v.is_finite() {
                    return Err(invalid("unmasked value is not finite"));
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(TimeSeries15 { start, values, valid, unit })
    }

    /// Series with every point valid.
    pub fn from_values(start: Timestamp, values: Vec<f64>, unit: Unit) -> Result<Self> {
        let valid = alloc::vec![true; values.len()];
        Self::new(start, values, valid, unit)
    }

    /// Options map to the mask: `None` is masked.
    pub fn from_options(start: Timestamp, values: &[Option<f64>], unit: Unit) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_some()).collect();
        let values = values.iter().map(|v| v.unwrap_or(0.0)).collect();
        Self::new(start, values, valid, unit)
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    /// Exclusive end of the covered grid.
    pub fn end(&self) -> Timestamp {
        self.start.add_steps(self.values.len() as i64)
    }

    pub fn span(&self) -> TimeSpan {
        TimeSpan { start: self.start, end: self.end() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn time_at(&self, i: usize) -> Timestamp {
        self.start.add_steps(i as i64)
    }

    pub fn index_of(&self, t: Timestamp) -> Option<usize> {
        let d = t.0 - self.start.0;
        if d < 0 || d % STEP_SECONDS != 0 {
            return None;
        }
        let i = (d / STEP_SECONDS) as usize;
        (i < self.values.len()).then_some(i)
    }

    /// Value at `t`, or `None` if `t` is off-grid, outside the series, or masked.
    pub fn get(&self, t: Timestamp) -> Option<f64> {
        let i = self.index_of(t)?;
        self.valid[i].then(|| self.values[i])
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Timestamp, Option<f64>)> + '_ {
        self.values
            .iter()
            .zip(self.valid.iter())
            .enumerate()
            .map(move |(i, (v, ok))| (self.time_at(i), ok.then_some(*v)))
    }

    pub fn same_grid(&self, other: &TimeSeries15) -> bool {
        self.start == other.start && self.len() == other.len()
    }

    pub fn ensure_same_grid(&self, other: &TimeSeries15, what: &str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(alloc::format!(
                "{what}: [{}, {}) vs [{}, {})",
                self.start,
                self.end(),
                other.start,
                other.end()
            )))
        }
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    /// Masks index `i`.
    pub fn mask_at(&mut self, i: usize) {
        self.valid[i] = false;
        self.values[i] = 0.0;
    }

    /// Sub-series restricted to `span` (intersected with the covered range).
    pub fn slice(&self, span: TimeSpan) -> TimeSeries15 {
        let start = span.start.max(self.start).ceil_to(STEP_SECONDS);
        let end = span.end.min(self.end());
        if end <= start {
            return TimeSeries15 { start, values: Vec::new(), valid: Vec::new(), unit: self.unit };
        }
        let i0 = self.index_of(start).unwrap_or(0);
        let n = ((end.0 - start.0 + STEP_SECONDS - 1) / STEP_SECONDS) as usize;
        TimeSeries15 {
            start,
            values: self.values[i0..i0 + n].to_vec(),
            valid: self.valid[i0..i0 + n].to_vec(),
            unit: self.unit,
        }
    }

    /// Pointwise map over valid values; masked stays masked.
    pub fn map_valid(&self, unit: Unit, f: impl Fn(f64) -> f64) -> Result<TimeSeries15> {
        let values = self
            .values
            .iter()
            .zip(self.valid.iter())
            .map(|(v, ok)| if *ok { f(*v) } else { 0.0 })
            .collect();
        TimeSeries15::new(self.start, values, self.valid.clone(), unit)
    }
}

/// A series on its native (source) step, prior to resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct NativeSeries {
    pub start: Timestamp,
    pub step_seconds: i64,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub unit: Unit,
}

impl NativeSeries {
    pub fn new(start: Timestamp, step_seconds: i64, values: Vec<f64>, valid: Vec<bool>, unit: Unit) -> Result<Self> {
        if step_seconds <= 0 {
            return Err(invalid("native step must be positive"));
        }
        if values.len() != valid.len() {
            return Err(invalid("values and mask have different lengths"));
        }
        let mut values = values;
        for (v, ok) in values.iter_mut().zip(valid.iter()) {
            if *ok && !v.is_finite() {
                return Err(invalid("unmasked value is not finite"));
            }
            if !*ok {
                *v = 0.0;
            }
        }
        Ok(NativeSeries { start, step_seconds, values, valid, unit })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, i: usize) -> Timestamp {
        self.start.add_seconds(i as i64 * self.step_seconds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_misaligned_start_and_nan() {
        assert!(TimeSeries15::from_values(Timestamp(60), vec![1.0], Unit::Dimensionless).is_err());
        assert!(TimeSeries15::from_values(Timestamp(0), vec![f64::NAN], Unit::Dimensionless).is_err());
        // NaN is fine when masked.
        let s = TimeSeries15::new(Timestamp(0), vec![f64::NAN], vec![false], Unit::Dimensionless).unwrap();
        assert_eq!(s.values()[0], 0.0);
    }

    #[test]
    fn lookup_by_time() {
        let s = TimeSeries15::from_options(Timestamp(900), &[Some(1.0), None, Some(3.0)], Unit::Dimensionless).unwrap();
        assert_eq!(s.get(Timestamp(900)), Some(1.0));
        assert_eq!(s.get(Timestamp(1800)), None);
        assert_eq!(s.get(Timestamp(2700)), Some(3.0));
        assert_eq!(s.get(Timestamp(3600)), None);
        assert_eq!(s.get(Timestamp(0)), None);
        assert_eq!(s.get(Timestamp(1000)), None);
        let sl = s.slice(TimeSpan { start: Timestamp(1800), end: Timestamp(9000) });
        assert_eq!(sl.len(), 2);
        assert_eq!(sl.get(Timestamp(2700)), Some(3.0));
    }
}
