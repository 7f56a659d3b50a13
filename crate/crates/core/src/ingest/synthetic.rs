//! Seeded synthetic rainfall and forecast worlds.
//!
//! Truth model, per cell and year (all days on the 365-day calendar):
//!
//! * an onset day `D ~ round(Normal(peak + cell offset, spread))`, clamped to
//!   days 130..=250;
//! * before `D - 4`, sparse light rain with every day capped at a sixth of
//!   the threshold, so no five-day total can reach it; days `D-4..D-1` are dry;
//! * optionally a false onset: a qualifying spell 21-35 days before `D`
//!   followed by 14 dry days, which the detector must reject;
//! * days `D..D+4` form a spell totalling more than the threshold;
//! * after that, monsoon rain (Bernoulli-Gamma) with every 10-day window of
//!   the 30-day follow-up topped up above the dry-spell limit.
//!
//! Forecast member rainfall for lead week `w` is
//! `rho_w * truth + (1 - rho_w) * analog`, where the analog is the same
//! cell's truth over the same calendar days in a different, randomly drawn
//! year (one analog year per member), so noise is climatological and keeps
//! realistic spell structure.
//!
//! Randomness comes from ChaCha8 streams seeded by `seed`, one stream per
//! (purpose, cell, year, init) key, so generation can run in parallel and is
//! identical across platforms.

use super::{round_mm, DailyRainSeries, ForecastEnsemble, GridCell, IngestError};
use crate::dates::{season_doy, MonthDay};
use crate::onset::{detect_onset, plus_days, MokPolicy, OnsetConfig};
use crate::par;
use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use std::collections::BTreeMap;

/// Identifier of the single-member forecast model.
pub const DETERMINISTIC_MODEL: &str = "model_a";
/// Identifier of the multi-member forecast model.
pub const ENSEMBLE_MODEL: &str = "model_b";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_years: usize,
    pub n_cells: usize,
    pub start_year: i32,
    /// Mean onset day-of-year (365-day calendar) of the middle cell.
    pub season_peak_doy: f64,
    pub onset_spread_days: f64,
    /// Spacing of mean onset between neighbouring cells.
    pub cell_offset_days: f64,
    /// Correlation-style skill per lead week; lead days 29+ use week 4.
    pub forecast_skill: [f64; 4],
    /// Members of the ensemble model. The deterministic model has one.
    pub ensemble_members: usize,
    pub lead_days: usize,
    pub five_day_threshold_mm: f64,
    /// Probability of a rejected early spell in a given year.
    pub false_onset_prob: f64,
    pub mok_mean_doy: f64,
    pub mok_spread_days: f64,
    /// Forecasts are initialized on these two weekdays.
    pub init_weekdays: [Weekday; 2],
    pub first_init: MonthDay,
    /// Initializations stop here if onset has not happened yet.
    pub last_init: MonthDay,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_years: 30,
            n_cells: 8,
            start_year: 1990,
            season_peak_doy: 170.0,
            onset_spread_days: 9.0,
            cell_offset_days: 3.0,
            forecast_skill: [0.9, 0.6, 0.3, 0.1],
            ensemble_members: 10,
            lead_days: 31,
            five_day_threshold_mm: 30.0,
            false_onset_prob: 0.3,
            mok_mean_doy: 152.0,
            mok_spread_days: 7.0,
            init_weekdays: [Weekday::Mon, Weekday::Thu],
            first_init: MonthDay::new(5, 1),
            last_init: MonthDay::new(8, 31),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::Invalid(m));
        if self.n_years == 0 || self.n_cells == 0 {
            return bad("n_years and n_cells must be positive".into());
        }
        if self.forecast_skill.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad(format!("forecast skill {:?} outside [0, 1]", self.forecast_skill));
        }
        if self.forecast_skill.windows(2).any(|w| w[1] > w[0]) {
            return bad(format!("forecast skill {:?} must be non-increasing", self.forecast_skill));
        }
        if !(self.onset_spread_days >= 0.0) || !(self.mok_spread_days >= 0.0) {
            return bad("spreads must be nonnegative".into());
        }
        if !(self.five_day_threshold_mm >= 5.0) {
            return bad("synthetic threshold must be at least 5 mm".into());
        }
        if !(0.0..=1.0).contains(&self.false_onset_prob) {
            return bad("false_onset_prob outside [0, 1]".into());
        }
        if self.ensemble_members == 0 || self.lead_days < 28 {
            return bad("need at least one member and 28 lead days".into());
        }
        Ok(())
    }

    pub fn years(&self) -> std::ops::RangeInclusive<i32> {
        self.start_year..=self.start_year + self.n_years as i32 - 1
    }

    pub fn cell_id(k: usize) -> String {
        format!("cell_{k:02}")
    }

    /// Onset-definition config matching how the truth was built.
    pub fn onset_config(&self) -> OnsetConfig {
        OnsetConfig::new(self.five_day_threshold_mm)
    }
}

/// Everything the generator knows about the synthetic truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub cells: Vec<GridCell>,
    /// One multi-year series per cell, Jan 1 of the first year through
    /// Dec 31 of the last.
    pub truth: Vec<DailyRainSeries>,
    pub mok: BTreeMap<i32, NaiveDate>,
    /// Planted onset per (cell index, year).
    pub planted: BTreeMap<(usize, i32), NaiveDate>,
}

// Stream tags keep the purposes of random draws apart.
const TAG_ONSET: u64 = 1;
const TAG_RAIN: u64 = 2;
const TAG_MOK: u64 = 3;
const TAG_FORECAST: u64 = 4;

fn rng_for(seed: u64, tag: u64, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 56) ^ (a << 40) ^ (b << 20) ^ c);
    rng
}

fn date_of_doy(year: i32, doy: u32) -> NaiveDate {
    let md = NaiveDate::from_yo_opt(2001, doy).expect("doy within 1..=365");
    NaiveDate::from_ymd_opt(year, md.month(), md.day()).expect("valid month-day")
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

/// Builds the synthetic truth world. Deterministic in `config`.
pub fn generate_synthetic_truth(config: &SyntheticConfig) -> Result<SyntheticWorld, IngestError> {
    config.validate()?;
    let years: Vec<i32> = config.years().collect();
    let mid = (config.n_cells as f64 - 1.0) / 2.0;

    // Planted onsets first so MOK can precede every cell's onset.
    let mut planted = BTreeMap::new();
    for k in 0..config.n_cells {
        let mean = config.season_peak_doy + (k as f64 - mid) * config.cell_offset_days;
        for &y in &years {
            let mut rng = rng_for(config.seed, TAG_ONSET, k as u64, (y - config.start_year) as u64, 0);
            let doy = (mean + config.onset_spread_days * std_normal(&mut rng)).round().clamp(130.0, 250.0);
            planted.insert((k, y), date_of_doy(y, doy as u32));
        }
    }
    let mut mok = BTreeMap::new();
    for &y in &years {
        let mut rng = rng_for(config.seed, TAG_MOK, 0, (y - config.start_year) as u64, 0);
        let doy = (config.mok_mean_doy + config.mok_spread_days * std_normal(&mut rng))
            .round()
            .clamp(100.0, 250.0) as u32;
        let earliest = (0..config.n_cells).map(|k| planted[&(k, y)]).min().expect("n_cells > 0");
        mok.insert(y, date_of_doy(y, doy).min(earliest));
    }

    let cells: Vec<GridCell> = (0..config.n_cells)
        .map(|k| {
            let frac = if config.n_cells > 1 { k as f64 / (config.n_cells - 1) as f64 } else { 0.5 };
            GridCell::new(
                SyntheticConfig::cell_id(k),
                16.0 + 8.0 * frac,
                74.0 + 10.0 * frac,
                config.five_day_threshold_mm,
                MokPolicy::TrueMok,
            )
        })
        .collect::<Result<_, _>>()?;

    let truth = par::try_map(&(0..config.n_cells).collect::<Vec<_>>(), |&k| {
        let mut values = Vec::with_capacity(years.len() * 366);
        for &y in &years {
            values.extend(season_rain(config, k, y, planted[&(k, y)]));
        }
        DailyRainSeries::new(
            SyntheticConfig::cell_id(k),
            NaiveDate::from_ymd_opt(config.start_year, 1, 1).expect("valid year"),
            values,
        )
    })?;

    Ok(SyntheticWorld { cells, truth, mok, planted })
}

/// Daily rain for Jan 1..Dec 31 of `year` with onset planted on `onset`.
fn season_rain(config: &SyntheticConfig, cell: usize, year: i32, onset: NaiveDate) -> Vec<f64> {
    let mut rng = rng_for(config.seed, TAG_RAIN, cell as u64, (year - config.start_year) as u64, 0);
    let t = config.five_day_threshold_mm;
    let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
    let n = (NaiveDate::from_ymd_opt(year + 1, 1, 1).expect("valid year") - jan1).num_days() as usize;
    let d = (onset - jan1).num_days() as usize;
    let light = Gamma::<f64>::new(0.7, 2.0).expect("valid gamma");
    let monsoon = Gamma::<f64>::new(0.8, 12.0).expect("valid gamma");
    let cap = t / 6.0;
    let post_season = season_doy(NaiveDate::from_ymd_opt(year, 10, 31).expect("valid date"));

    let mut v = vec![0.0; n];
    for (i, x) in v.iter_mut().enumerate() {
        let date = plus_days(jan1, i as i64);
        let monsoon_day = i >= d + 5 && season_doy(date) <= post_season;
        *x = if monsoon_day {
            if rng.gen_bool(0.6) { monsoon.sample(&mut rng) } else { 0.0 }
        } else if rng.gen_bool(0.12) {
            light.sample(&mut rng).min(cap)
        } else {
            0.0
        };
    }
    for x in &mut v[d.saturating_sub(4)..d] {
        *x = 0.0;
    }
    if rng.gen_bool(config.false_onset_prob) {
        let lag = rng.gen_range(21..=35usize);
        if d >= lag + 100 {
            let f = d - lag;
            for x in &mut v[f..f + 5] {
                *x = t / 5.0 * rng.gen_range(1.05..1.4);
            }
            for x in &mut v[f + 5..f + 19] {
                *x = 0.0;
            }
        }
    }
    for x in &mut v[d..d + 5] {
        *x = t / 5.0 * rng.gen_range(1.05..1.5);
    }
    for s in d + 5..=d + 25 {
        if v[s..s + 10].iter().sum::<f64>() < 6.0 {
            v[s + 5] += 6.0;
        }
    }
    v.into_iter().map(round_mm).collect()
}

/// Init dates for one cell-year: twice weekly from `first_init` until onset
/// (exclusive) or `last_init`.
fn init_dates(config: &SyntheticConfig, year: i32, onset: Option<NaiveDate>) -> Vec<NaiveDate> {
    let first = config.first_init.in_year(year);
    let last = config.last_init.in_year(year);
    first
        .iter_days()
        .take_while(|d| *d <= last && onset.is_none_or(|o| *d < o))
        .filter(|d| config.init_weekdays.contains(&d.weekday()))
        .collect()
}

/// Forecast ensembles for every cell, year and init date of `truth`, for
/// both synthetic models. Truth series must be the multi-year series
/// produced by [`generate_synthetic_truth`].
pub fn generate_synthetic_forecasts(
    truth: &[DailyRainSeries],
    config: &SyntheticConfig,
) -> Result<Vec<ForecastEnsemble>, IngestError> {
    config.validate()?;
    if config.n_years < 2 {
        return Err(IngestError::Invalid("analog noise needs at least two years".into()));
    }
    let detect_cfg = OnsetConfig::for_variant(config.five_day_threshold_mm, MokPolicy::NoFilter);
    let years: Vec<i32> = config.years().collect();
    let per_cell = par::try_map(&truth.iter().enumerate().collect::<Vec<_>>(), |&(k, series)| {
        let mut out = Vec::new();
        for &y in &years {
            let onset = detect_onset(series, &detect_cfg, y, None).ok().flatten();
            for (n, init) in init_dates(config, y, onset).into_iter().enumerate() {
                let needed = plus_days(init, config.lead_days as i64);
                let truth_window = series.window(plus_days(init, 1), needed).ok_or(
                    IngestError::LeadWindowExceedsTruth {
                        init,
                        needed,
                        available: series.end_date(),
                    },
                )?;
                let mut rng = rng_for(
                    config.seed,
                    TAG_FORECAST,
                    k as u64,
                    (y - config.start_year) as u64,
                    n as u64,
                );
                for (model, members) in [(DETERMINISTIC_MODEL, 1), (ENSEMBLE_MODEL, config.ensemble_members)] {
                    let mut rows = Vec::with_capacity(members);
                    for _ in 0..members {
                        let analog_year = loop {
                            let cand = years[rng.gen_range(0..years.len())];
                            if cand != y {
                                break cand;
                            }
                        };
                        let analog_init = MonthDay::new(init.month(), init.day()).in_year(analog_year);
                        let analog = series
                            .window(plus_days(analog_init, 1), plus_days(analog_init, config.lead_days as i64))
                            .ok_or(IngestError::LeadWindowExceedsTruth {
                                init: analog_init,
                                needed: plus_days(analog_init, config.lead_days as i64),
                                available: series.end_date(),
                            })?;
                        let row = (0..config.lead_days)
                            .map(|l| {
                                let rho = config.forecast_skill[(l / 7).min(3)];
                                round_mm(rho * truth_window[l] + (1.0 - rho) * analog[l])
                            })
                            .collect();
                        rows.push(row);
                    }
                    out.push(ForecastEnsemble::new(model, series.grid_id.clone(), init, rows)?);
                }
            }
        }
        Ok::<_, IngestError>(out)
    })?;
    Ok(per_cell.into_iter().flatten().collect())
}
