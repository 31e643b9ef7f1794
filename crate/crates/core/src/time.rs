//! UTC timestamps on the fixed 15-minute grid.

use core::fmt;

use crate::error::{invalid, Result};

/// Length of one forecasting step, in seconds.
pub const STEP_SECONDS: i64 = 900;
pub const HOUR_SECONDS: i64 = 3600;
pub const DAY_SECONDS: i64 = 86_400;

/// Seconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_unix(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn unix(self) -> i64 {
        self.0
    }

    pub fn is_step_aligned(self) -> bool {
        self.0.rem_euclid(STEP_SECONDS) == 0
    }

    pub fn is_hour_aligned(self) -> bool {
        self.0.rem_euclid(HOUR_SECONDS) == 0
    }

    pub fn add_steps(self, steps: i64) -> Self {
        Timestamp(self.0 + steps * STEP_SECONDS)
    }

    pub fn add_seconds(self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }

    /// Index of the UTC day containing this instant.
    pub fn utc_day(self) -> i64 {
        self.0.div_euclid(DAY_SECONDS)
    }

    pub fn floor_to(self, period: i64) -> Self {
        Timestamp(self.0.div_euclid(period) * period)
    }

    pub fn ceil_to(self, period: i64) -> Self {
        Timestamp(-((-self.0).div_euclid(period)) * period)
    }

    /// Days (with fraction) since the J2000.0 epoch (2000-01-01 12:00 UTC).
    pub fn days_since_j2000(self) -> f64 {
        (self.0 - 946_728_000) as f64 / DAY_SECONDS as f64
    }

    /// Civil (year, month, day, hour, minute, second) in UTC.
    pub fn civil(self) -> (i64, u32, u32, u32, u32, u32) {
        let days = self.0.div_euclid(DAY_SECONDS);
        let secs = self.0.rem_euclid(DAY_SECONDS);
        let (y, m, d) = civil_from_days(days);
        (
            y,
            m,
            d,
            (secs / 3600) as u32,
            ((secs % 3600) / 60) as u32,
            (secs % 60) as u32,
        )
    }

    pub fn from_civil(year: i64, month: u32, day: u32, hour: u32, minute: u32, second: u32) -> Self {
        let days = days_from_civil(year, month, day);
        Timestamp(days * DAY_SECONDS + hour as i64 * 3600 + minute as i64 * 60 + second as i64)
    }
}

impl fmt::Display for Timestamp {
    /// ISO-8601 with a trailing `Z`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (y, mo, d, h, mi, s) = self.civil();
        write!(f, "{y:04}-{mo:02}-{d:02}T{h:02}:{mi:02}:{s:02}Z")
    }
}

// Howard Hinnant's civil calendar algorithms.
fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = m as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

/// Half-open time range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSpan {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeSpan {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self> {
        if end < start {
            return Err(invalid("time span ends before it starts"));
        }
        Ok(TimeSpan { start, end })
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.start && t < self.end
    }

    pub fn overlaps(&self, other: &TimeSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn is_step_aligned(&self) -> bool {
        self.start.is_step_aligned() && self.end.is_step_aligned()
    }

    /// Number of 15-minute steps covered.
    pub fn steps(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            ((self.end.0 - self.start.0 + STEP_SECONDS - 1) / STEP_SECONDS) as usize
        }
    }

    /// Step-aligned timestamps inside the span.
    pub fn iter_steps(&self) -> impl Iterator<Item = Timestamp> {
        let first = self.start.ceil_to(STEP_SECONDS);
        let end = self.end;
        (0..)
            .map(move |k| first.add_steps(k))
            .take_while(move |t| *t < end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn civil_round_trip() {
        let t = Timestamp::from_civil(2016, 6, 21, 12, 0, 0);
        assert_eq!(t.0, 1_466_510_400);
        assert_eq!(t.civil(), (2016, 6, 21, 12, 0, 0));
        assert_eq!(alloc::format!("{t}"), "2016-06-21T12:00:00Z");
        let early = Timestamp::from_civil(1950, 1, 1, 0, 0, 0);
        assert_eq!(early.civil(), (1950, 1, 1, 0, 0, 0));
    }

    #[test]
    fn rounding_and_days() {
        let t = Timestamp(1000);
        assert_eq!(t.floor_to(900), Timestamp(900));
        assert_eq!(t.ceil_to(900), Timestamp(1800));
        assert_eq!(Timestamp(900).ceil_to(900), Timestamp(900));
        assert_eq!(Timestamp(-1).utc_day(), -1);
    }

    #[test]
    fn span_steps() {
        let s = TimeSpan::new(Timestamp(0), Timestamp(3600)).unwrap();
        assert_eq!(s.steps(), 4);
        assert_eq!(s.iter_steps().count(), 4);
        assert!(TimeSpan::new(Timestamp(10), Timestamp(0)).is_err());
    }
}
