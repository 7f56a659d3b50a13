//! Modified Moron-Robertson onset detection.
//!
//! Onset is the first wet day `d` (on or after the effective season start)
//! such that the `spell_len_days` total starting at `d` reaches the grid's
//! threshold, and no `dry_len_days` window lying entirely inside the
//! `followup_days` after the spell totals less than `dry_total_mm`.

use crate::bins::{Bin, LAST_BINNED_DAY};
use crate::dates::{fmt_iso, MonthDay};
use crate::ingest::csvio::{checked_reader, date_field, field, line_of, num_field, open};
use crate::ingest::{DailyRainSeries, IngestError};
use chrono::{Datelike, Days, NaiveDate};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

/// How the monsoon-onset-over-Kerala date restricts candidate days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MokPolicy {
    /// Only days on or after the observed MOK date of that year.
    TrueMok,
    /// Only days on or after a fixed climatological MOK date.
    ClimMok(MonthDay),
    NoFilter,
}

impl MokPolicy {
    /// Climatological median MOK date used when scoring raw model output.
    pub const RAW_MODEL_DEFAULT: MokPolicy = MokPolicy::ClimMok(MonthDay::new(6, 2));
}

impl fmt::Display for MokPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MokPolicy::TrueMok => f.write_str("true-mok"),
            MokPolicy::ClimMok(md) => write!(f, "clim-mok={md}"),
            MokPolicy::NoFilter => f.write_str("none"),
        }
    }
}

impl FromStr for MokPolicy {
    type Err = OnsetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "true-mok" => Ok(MokPolicy::TrueMok),
            "none" => Ok(MokPolicy::NoFilter),
            _ => {
                let md = s
                    .strip_prefix("clim-mok=")
                    .ok_or_else(|| OnsetError::InvalidConfig(format!("unknown onset variant `{s}`")))?;
                md.parse()
                    .map(MokPolicy::ClimMok)
                    .map_err(|e| OnsetError::InvalidConfig(e.to_string()))
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OnsetError {
    #[error("series for {grid_id} cannot cover the follow-up window of any candidate day from {from}")]
    SeriesTooShort { grid_id: String, from: NaiveDate },
    #[error("true-MOK policy needs the observed MOK date for {0}")]
    MissingMok(i32),
    #[error("invalid onset config: {0}")]
    InvalidConfig(String),
    #[error("no rainfall history inside the threshold window")]
    EmptyHistory,
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Onset-definition parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetConfig {
    pub wet_day_mm: f64,
    pub spell_len_days: usize,
    pub spell_total_mm: f64,
    pub dry_len_days: usize,
    pub dry_total_mm: f64,
    pub followup_days: usize,
    pub season_start: MonthDay,
    /// Last candidate day of the search horizon.
    pub season_end: MonthDay,
    pub mok_policy: MokPolicy,
}

impl OnsetConfig {
    /// Defaults with the given five-day threshold, true-MOK filtering and an
    /// April 1 season start.
    pub fn new(spell_total_mm: f64) -> Self {
        Self {
            wet_day_mm: 1.0,
            spell_len_days: 5,
            spell_total_mm,
            dry_len_days: 10,
            dry_total_mm: 5.0,
            followup_days: 30,
            season_start: MonthDay::new(4, 1),
            season_end: MonthDay::new(10, 31),
            mok_policy: MokPolicy::TrueMok,
        }
    }

    /// Defaults for an onset variant. Without a MOK filter the season starts
    /// May 1 instead of April 1.
    pub fn for_variant(spell_total_mm: f64, policy: MokPolicy) -> Self {
        let mut c = Self::new(spell_total_mm);
        c.mok_policy = policy;
        if policy == MokPolicy::NoFilter {
            c.season_start = MonthDay::new(5, 1);
        }
        c
    }

    pub fn validate(&self) -> Result<(), OnsetError> {
        let bad = |m: String| Err(OnsetError::InvalidConfig(m));
        if self.spell_len_days < 1 || self.dry_len_days < 1 {
            return bad("spell and dry-spell lengths must be at least one day".into());
        }
        if self.followup_days < self.dry_len_days {
            return bad(format!(
                "followup_days ({}) must be at least dry_len_days ({})",
                self.followup_days, self.dry_len_days
            ));
        }
        for (name, v) in [
            ("wet_day_mm", self.wet_day_mm),
            ("spell_total_mm", self.spell_total_mm),
            ("dry_total_mm", self.dry_total_mm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.season_end < self.season_start {
            return bad("season_end precedes season_start".into());
        }
        Ok(())
    }

    /// First candidate day for `year` after applying the MOK policy.
    pub fn effective_start(&self, year: i32, mok: Option<NaiveDate>) -> Result<NaiveDate, OnsetError> {
        let start = self.season_start.in_year(year);
        let filter = match self.mok_policy {
            MokPolicy::TrueMok => Some(mok.ok_or(OnsetError::MissingMok(year))?),
            MokPolicy::ClimMok(md) => Some(md.in_year(year)),
            MokPolicy::NoFilter => None,
        };
        Ok(filter.map_or(start, |f| f.max(start)))
    }

    /// Days from a candidate's first spell day to the end of its follow-up.
    fn span(&self) -> usize {
        self.spell_len_days + self.followup_days
    }
}

/// Detected onset for one grid cell and season.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnsetRecord {
    pub grid_id: String,
    pub year: i32,
    pub onset_date: Option<NaiveDate>,
}

/// Sums of every `w`-day window, each summed left to right.
fn window_sums(values: &[f64], w: usize) -> Vec<f64> {
    if values.len() < w {
        return Vec::new();
    }
    (0..=values.len() - w).map(|s| values[s..s + w].iter().sum()).collect()
}

/// First qualifying candidate index in `candidates`. Dry windows are only
/// considered where they fit inside `values`; a candidate whose follow-up is
/// cut off by the end of `values` counts as onset unless a dry window is
/// visible before the cut.
fn first_onset(values: &[f64], candidates: std::ops::Range<usize>, cfg: &OnsetConfig) -> Option<usize> {
    let spell = window_sums(values, cfg.spell_len_days);
    let dry = window_sums(values, cfg.dry_len_days);
    // next_dry[k]: first dry-window start >= k, or usize::MAX.
    let mut next_dry = vec![usize::MAX; dry.len() + 1];
    for s in (0..dry.len()).rev() {
        next_dry[s] = if dry[s] < cfg.dry_total_mm { s } else { next_dry[s + 1] };
    }
    for i in candidates {
        if i >= spell.len() {
            break;
        }
        if values[i] < cfg.wet_day_mm || spell[i] < cfg.spell_total_mm {
            continue;
        }
        let lo = i + cfg.spell_len_days;
        let hi = i + cfg.span() - cfg.dry_len_days;
        let dry_visible = lo < dry.len() && next_dry[lo] <= hi;
        if !dry_visible {
            return Some(i);
        }
    }
    None
}

/// Onset date in `year`, or `None` if no day qualifies within the series.
///
/// Candidates run from the effective start through `season_end`, stopping
/// at the first one whose full follow-up window is not covered by the series.
pub fn detect_onset(
    series: &DailyRainSeries,
    config: &OnsetConfig,
    year: i32,
    mok_date: Option<NaiveDate>,
) -> Result<Option<NaiveDate>, OnsetError> {
    config.validate()?;
    let start = config.effective_start(year, mok_date)?;
    let end = config.season_end.in_year(year);
    let too_short = || OnsetError::SeriesTooShort {
        grid_id: series.grid_id.clone(),
        from: start,
    };
    let first = series.offset_of(start);
    if first < 0 {
        return Err(too_short());
    }
    let first = first as usize;
    // Last index whose follow-up window is fully covered.
    let covered = series.len().checked_sub(config.span()).ok_or_else(too_short)?;
    if first > covered {
        if start > end {
            return Ok(None);
        }
        return Err(too_short());
    }
    let last = (series.offset_of(end).max(-1) + 1) as usize;
    let stop = last.min(covered + 1);
    if first >= stop {
        return Ok(None);
    }
    // Restrict the scan to what the candidates can reach so censoring never
    // applies to observed series.
    let values = &series.values()[..stop - 1 + config.span()];
    Ok(first_onset(values, first..stop, config).map(|i| series.date_at(i)))
}

/// Onset for each season year the series covers. Years whose season cannot
/// be evaluated are skipped.
pub fn detect_onsets(
    series: &DailyRainSeries,
    config: &OnsetConfig,
    mok_dates: &BTreeMap<i32, NaiveDate>,
) -> Result<Vec<OnsetRecord>, OnsetError> {
    if series.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for year in series.start_date.year()..=series.end_date().year() {
        match detect_onset(series, config, year, mok_dates.get(&year).copied()) {
            Ok(onset_date) => out.push(OnsetRecord {
                grid_id: series.grid_id.clone(),
                year,
                onset_date,
            }),
            Err(OnsetError::SeriesTooShort { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Onset bin implied by one forecast member.
///
/// `member[l - 1]` is the forecast for lead day `l` after `init_date`.
/// Candidates are the days after init (and after the policy's start). A
/// spell must lie fully inside the forecast; a follow-up that runs past the
/// last lead day is censored: the candidate counts unless a dry window is
/// forecast before the end of the horizon. Returns [`Bin::LATER`] when no
/// onset falls within lead day 28.
pub fn detect_forecast_onset(
    init_date: NaiveDate,
    member: &[f64],
    config: &OnsetConfig,
) -> Result<Bin, OnsetError> {
    config.validate()?;
    if config.mok_policy == MokPolicy::TrueMok {
        return Err(OnsetError::InvalidConfig(
            "forecast onsets cannot use the observed MOK date; use clim-mok or none".into(),
        ));
    }
    if (member.len() as i64) < LAST_BINNED_DAY {
        return Err(OnsetError::SeriesTooShort {
            grid_id: String::new(),
            from: init_date,
        });
    }
    let year = init_date.year();
    let start = config.effective_start(year, None)?;
    let end = config.season_end.in_year(year);
    // Index 0 is lead day 1.
    let first_lead = (start - init_date).num_days().max(1);
    let last_lead = (end - init_date).num_days().min(LAST_BINNED_DAY);
    if first_lead > last_lead {
        return Ok(Bin::LATER);
    }
    let cands = (first_lead - 1) as usize..last_lead as usize;
    Ok(match first_onset(member, cands, config) {
        Some(i) => Bin::from_lead_day(i as i64 + 1),
        None => Bin::LATER,
    })
}

/// Season window for threshold estimation (inclusive month-days).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonWindow {
    pub start: MonthDay,
    pub end: MonthDay,
}

impl Default for SeasonWindow {
    /// June through September.
    fn default() -> Self {
        Self {
            start: MonthDay::new(6, 1),
            end: MonthDay::new(9, 30),
        }
    }
}

/// The grid's five-day wet-spell threshold: `override_mm` if given,
/// otherwise five times the mean over years of each year's mean daily
/// rainfall inside `window`.
pub fn compute_five_day_threshold(
    histories: &[DailyRainSeries],
    window: SeasonWindow,
    override_mm: Option<f64>,
) -> Result<f64, OnsetError> {
    if let Some(v) = override_mm {
        if !(v > 0.0 && v.is_finite()) {
            return Err(OnsetError::InvalidConfig(format!("threshold override must be positive, got {v}")));
        }
        return Ok(v);
    }
    let mut year_means = Vec::new();
    for s in histories.iter().filter(|s| !s.is_empty()) {
        for year in s.start_date.year()..=s.end_date().year() {
            let (a, b) = (window.start.in_year(year), window.end.in_year(year));
            let days: Vec<f64> = a
                .iter_days()
                .take_while(|d| *d <= b)
                .filter_map(|d| s.get(d))
                .collect();
            if !days.is_empty() {
                year_means.push(days.iter().sum::<f64>() / days.len() as f64);
            }
        }
    }
    if year_means.is_empty() {
        return Err(OnsetError::EmptyHistory);
    }
    Ok(5.0 * year_means.iter().sum::<f64>() / year_means.len() as f64)
}

const ONSET_HEADER: [&str; 3] = ["grid_id", "year", "onset_date"];

pub fn write_onset_csv<W: Write>(out: W, records: &[OnsetRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ONSET_HEADER)?;
    for r in records {
        w.write_record([
            r.grid_id.clone(),
            r.year.to_string(),
            r.onset_date.map(fmt_iso).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

pub fn parse_onset_csv(path: impl AsRef<Path>) -> Result<Vec<OnsetRecord>, IngestError> {
    read_onset_csv(open(path.as_ref())?)
}

/// Reads `grid_id,year,onset_date`; an empty date means no onset.
pub fn read_onset_csv<R: Read>(input: R) -> Result<Vec<OnsetRecord>, IngestError> {
    let mut rdr = checked_reader(input, &ONSET_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let onset_date = if field(&rec, 2, "onset_date")?.is_empty() {
            None
        } else {
            Some(date_field(&rec, 2, "onset_date")?)
        };
        let year: i32 = num_field(&rec, 1, "year")?;
        if let Some(d) = onset_date {
            if d.year() != year {
                return Err(IngestError::MalformedRow {
                    line: line_of(&rec),
                    reason: format!("onset {} not in year {year}", fmt_iso(d)),
                });
            }
        }
        out.push(OnsetRecord {
            grid_id: field(&rec, 0, "grid_id")?.to_string(),
            year,
            onset_date,
        });
    }
    Ok(out)
}

/// Calendar date `n` days after `d`.
pub(crate) fn plus_days(d: NaiveDate, n: i64) -> NaiveDate {
    if n >= 0 {
        d + Days::new(n as u64)
    } else {
        d - Days::new((-n) as u64)
    }
}
