//! Rainfall and forecast-ensemble data: domain types, CSV readers/writers
//! and the seeded synthetic world.

pub(crate) mod csvio;
pub mod synthetic;

pub use csvio::{
    parse_forecast_csv, parse_grid_csv, parse_mok_csv, parse_rainfall_csv, read_forecast_csv,
    read_grid_csv, read_mok_csv, read_rainfall_csv, write_forecast_csv, write_grid_csv,
    write_mok_csv, write_rainfall_csv,
};
pub use synthetic::{
    generate_synthetic_forecasts, generate_synthetic_truth, SyntheticConfig, SyntheticWorld,
};

use crate::dates::fmt_iso;
use crate::onset::MokPolicy;
use chrono::{Days, NaiveDate};
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: negative rainfall {value}")]
    NegativeRain { line: u64, value: f64 },
    #[error("grid {grid_id}: missing day {date}")]
    MissingDay { grid_id: String, date: NaiveDate },
    #[error("ensemble {model}/{grid_id}/{init}: missing member {member} lead day {lead_day}")]
    RaggedEnsemble {
        model: String,
        grid_id: String,
        init: NaiveDate,
        member: usize,
        lead_day: usize,
    },
    #[error("forecast from {init} needs truth through {needed}, series ends {available}")]
    LeadWindowExceedsTruth {
        init: NaiveDate,
        needed: NaiveDate,
        available: NaiveDate,
    },
    #[error("invalid: {0}")]
    Invalid(String),
}

/// A grid cell and its onset-definition parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub five_day_threshold_mm: f64,
    pub mok_policy: MokPolicy,
}

impl GridCell {
    pub fn new(
        id: impl Into<String>,
        lat: f64,
        lon: f64,
        five_day_threshold_mm: f64,
        mok_policy: MokPolicy,
    ) -> Result<Self, IngestError> {
        if !(five_day_threshold_mm > 0.0 && five_day_threshold_mm.is_finite()) {
            return Err(IngestError::Invalid(format!(
                "five-day threshold must be positive, got {five_day_threshold_mm}"
            )));
        }
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(IngestError::Invalid(format!("coordinates ({lat}, {lon}) out of range")));
        }
        Ok(Self {
            id: id.into(),
            lat,
            lon,
            five_day_threshold_mm,
            mok_policy,
        })
    }
}

/// Contiguous daily rainfall for one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyRainSeries {
    pub grid_id: String,
    pub start_date: NaiveDate,
    values: Vec<f64>,
}

impl DailyRainSeries {
    pub fn new(
        grid_id: impl Into<String>,
        start_date: NaiveDate,
        values: Vec<f64>,
    ) -> Result<Self, IngestError> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(IngestError::Invalid(format!(
                "rain value {v} at {} is negative or not finite",
                fmt_iso(start_date + Days::new(i as u64))
            )));
        }
        Ok(Self {
            grid_id: grid_id.into(),
            start_date,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last covered date. Panics on an empty series.
    pub fn end_date(&self) -> NaiveDate {
        self.date_at(self.values.len() - 1)
    }

    pub fn date_at(&self, i: usize) -> NaiveDate {
        self.start_date + Days::new(i as u64)
    }

    /// Offset of `date` from the start, which may lie outside the series.
    pub fn offset_of(&self, date: NaiveDate) -> i64 {
        (date - self.start_date).num_days()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let off = self.offset_of(date);
        (off >= 0 && (off as usize) < self.values.len()).then_some(off as usize)
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.index_of(date).map(|i| self.values[i])
    }

    /// Values for `from..=to`, or `None` if not fully covered.
    pub fn window(&self, from: NaiveDate, to: NaiveDate) -> Option<&[f64]> {
        let a = self.index_of(from)?;
        let b = self.index_of(to)?;
        (a <= b).then(|| &self.values[a..=b])
    }
}

/// An M x L ensemble forecast: member m, lead day l (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastEnsemble {
    pub model_id: String,
    pub grid_id: String,
    pub init_date: NaiveDate,
    members: Vec<Vec<f64>>,
}

impl ForecastEnsemble {
    pub fn new(
        model_id: impl Into<String>,
        grid_id: impl Into<String>,
        init_date: NaiveDate,
        members: Vec<Vec<f64>>,
    ) -> Result<Self, IngestError> {
        let Some(first) = members.first() else {
            return Err(IngestError::Invalid("ensemble needs at least one member".into()));
        };
        let lead = first.len();
        if lead == 0 {
            return Err(IngestError::Invalid("ensemble needs at least one lead day".into()));
        }
        for (m, row) in members.iter().enumerate() {
            if row.len() != lead {
                return Err(IngestError::Invalid(format!(
                    "member {} has {} lead days, expected {lead}",
                    m + 1,
                    row.len()
                )));
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(IngestError::Invalid(format!(
                    "member {} has negative or non-finite rainfall",
                    m + 1
                )));
            }
        }
        Ok(Self {
            model_id: model_id.into(),
            grid_id: grid_id.into(),
            init_date,
            members,
        })
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn lead_days(&self) -> usize {
        self.members[0].len()
    }

    pub fn members(&self) -> &[Vec<f64>] {
        &self.members
    }

    /// Member `m` (0-based), indexed by lead day - 1.
    pub fn member(&self, m: usize) -> &[f64] {
        &self.members[m]
    }

    /// Ensemble-mean rainfall per lead day.
    pub fn mean_by_lead(&self) -> Vec<f64> {
        let m = self.members.len() as f64;
        (0..self.lead_days())
            .map(|l| self.members.iter().map(|row| row[l]).sum::<f64>() / m)
            .collect()
    }
}

/// Rounds to the 3-decimal precision used in rainfall files.
pub fn round_mm(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn series_rejects_negative() {
        assert!(DailyRainSeries::new("g", d(2000, 1, 1), vec![1.0, -0.5]).is_err());
        assert!(DailyRainSeries::new("g", d(2000, 1, 1), vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn series_windows() {
        let s = DailyRainSeries::new("g", d(2000, 6, 1), vec![0.0, 5.0, 12.0]).unwrap();
        assert_eq!(s.end_date(), d(2000, 6, 3));
        assert_eq!(s.get(d(2000, 6, 2)), Some(5.0));
        assert_eq!(s.get(d(2000, 5, 31)), None);
        assert_eq!(s.window(d(2000, 6, 2), d(2000, 6, 3)), Some(&[5.0, 12.0][..]));
        assert_eq!(s.window(d(2000, 6, 2), d(2000, 6, 4)), None);
    }

    #[test]
    fn ensemble_shape_checks() {
        let e = ForecastEnsemble::new("m", "g", d(2000, 5, 1), vec![vec![1.0, 3.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(e.mean_by_lead(), vec![2.0, 4.0]);
        assert!(ForecastEnsemble::new("m", "g", d(2000, 5, 1), vec![vec![1.0], vec![]]).is_err());
        assert!(ForecastEnsemble::new("m", "g", d(2000, 5, 1), vec![]).is_err());
    }

    #[test]
    fn grid_cell_validation() {
        assert!(GridCell::new("c", 18.0, 80.0, 20.0, MokPolicy::NoFilter).is_ok());
        assert!(GridCell::new("c", 18.0, 80.0, 0.0, MokPolicy::NoFilter).is_err());
        assert!(GridCell::new("c", 95.0, 80.0, 20.0, MokPolicy::NoFilter).is_err());
    }
}
