//! Calendar helpers.
//!
//! Onset dates are compared across years on a fixed 365-day calendar: in leap
//! years every date from March 1 on is shifted back by one, so April 1 is
//! always day 91 and October 31 always day 304.

use chrono::{Datelike, NaiveDate};
use std::fmt;
use std::str::FromStr;

/// A month/day pair without a year, e.g. `06-02`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthDay {
    pub month: u32,
    pub day: u32,
}

impl MonthDay {
    pub const fn new(month: u32, day: u32) -> Self {
        Self { month, day }
    }

    /// The date in `year`. Feb 29 maps to Feb 28 in common years.
    pub fn in_year(self, year: i32) -> NaiveDate {
        NaiveDate::from_ymd_opt(year, self.month, self.day)
            .or_else(|| NaiveDate::from_ymd_opt(year, self.month, self.day - 1))
            .expect("MonthDay validated at construction")
    }

    pub fn doy(self) -> u32 {
        season_doy(self.in_year(2001))
    }
}

impl fmt::Display for MonthDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}-{:02}", self.month, self.day)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid month-day `{0}` (expected MM-DD)")]
pub struct MonthDayParseError(pub String);

impl FromStr for MonthDay {
    type Err = MonthDayParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MonthDayParseError(s.to_string());
        let (m, d) = s.trim().split_once('-').ok_or_else(err)?;
        let month: u32 = m.parse().map_err(|_| err())?;
        let day: u32 = d.parse().map_err(|_| err())?;
        // 2000 is a leap year, so Feb 29 is accepted.
        NaiveDate::from_ymd_opt(2000, month, day).ok_or_else(err)?;
        Ok(Self { month, day })
    }
}

/// Day of year on the 365-day calendar (Jan 1 = 1, Dec 31 = 365).
pub fn season_doy(date: NaiveDate) -> u32 {
    let ord = date.ordinal();
    if date.leap_year() && ord >= 60 {
        // Feb 29 collapses onto Feb 28.
        ord - 1
    } else {
        ord
    }
}

pub fn parse_iso(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

pub fn fmt_iso(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}
