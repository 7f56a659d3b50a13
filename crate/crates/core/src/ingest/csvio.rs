use super::{DailyRainSeries, ForecastEnsemble, GridCell, IngestError};
use crate::dates::{fmt_iso, parse_iso};
use crate::onset::MokPolicy;
use chrono::{Days, NaiveDate};
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

pub(crate) const RAIN_HEADER: [&str; 3] = ["grid_id", "date", "rain_mm"];
pub(crate) const FORECAST_HEADER: [&str; 6] =
    ["model", "grid_id", "init_date", "member", "lead_day", "rain_mm"];
pub(crate) const GRID_HEADER: [&str; 5] = ["grid_id", "lat", "lon", "five_day_threshold_mm", "mok_policy"];
pub(crate) const MOK_HEADER: [&str; 2] = ["year", "mok_date"];

pub(crate) fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A csv reader whose header must equal `expected` exactly.
pub(crate) fn checked_reader<R: Read>(
    input: R,
    expected: &[&str],
) -> Result<csv::Reader<R>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let found = rdr.headers()?.clone();
    if found.iter().ne(expected.iter().copied()) {
        return Err(IngestError::BadHeader {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(rdr)
}

pub(crate) fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

pub(crate) fn field<'a>(rec: &'a csv::StringRecord, i: usize, name: &str) -> Result<&'a str, IngestError> {
    rec.get(i).ok_or_else(|| IngestError::MalformedRow {
        line: line_of(rec),
        reason: format!("missing column `{name}`"),
    })
}

pub(crate) fn date_field(rec: &csv::StringRecord, i: usize, name: &str) -> Result<NaiveDate, IngestError> {
    let s = field(rec, i, name)?;
    parse_iso(s).ok_or_else(|| IngestError::MalformedRow {
        line: line_of(rec),
        reason: format!("`{s}` is not a YYYY-MM-DD date"),
    })
}

pub(crate) fn num_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<T, IngestError> {
    let s = field(rec, i, name)?;
    s.parse().map_err(|_| IngestError::MalformedRow {
        line: line_of(rec),
        reason: format!("`{s}` is not a valid {name}"),
    })
}

fn rain_field(rec: &csv::StringRecord, i: usize) -> Result<f64, IngestError> {
    let v: f64 = num_field(rec, i, "rain_mm")?;
    if !v.is_finite() {
        return Err(IngestError::MalformedRow {
            line: line_of(rec),
            reason: format!("rain_mm `{v}` is not finite"),
        });
    }
    if v < 0.0 {
        return Err(IngestError::NegativeRain { line: line_of(rec), value: v });
    }
    Ok(v)
}

pub fn parse_rainfall_csv(path: impl AsRef<Path>) -> Result<Vec<DailyRainSeries>, IngestError> {
    read_rainfall_csv(open(path.as_ref())?)
}

/// Reads `grid_id,date,rain_mm` rows into one series per grid, in order of
/// first appearance. Rows may be interleaved and unsorted; gaps are errors.
pub fn read_rainfall_csv<R: Read>(input: R) -> Result<Vec<DailyRainSeries>, IngestError> {
    let mut rdr = checked_reader(input, &RAIN_HEADER)?;
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(NaiveDate, f64, u64)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != RAIN_HEADER.len() {
            return Err(IngestError::MalformedRow {
                line: line_of(&rec),
                reason: format!("expected {} fields, found {}", RAIN_HEADER.len(), rec.len()),
            });
        }
        let grid = field(&rec, 0, "grid_id")?.to_string();
        let date = date_field(&rec, 1, "date")?;
        let rain = rain_field(&rec, 2)?;
        let entry = rows.entry(grid.clone()).or_insert_with(|| {
            order.push(grid);
            Vec::new()
        });
        entry.push((date, rain, line_of(&rec)));
    }
    order
        .into_iter()
        .map(|grid| {
            let mut days = rows.remove(&grid).unwrap_or_default();
            days.sort_by_key(|(date, _, _)| *date);
            let start = days[0].0;
            for (k, pair) in days.windows(2).enumerate() {
                let (prev, next) = (pair[0].0, pair[1].0);
                if prev == next {
                    return Err(IngestError::MalformedRow {
                        line: pair[1].2,
                        reason: format!("duplicate date {} for grid {grid}", fmt_iso(next)),
                    });
                }
                let expected = start + Days::new(k as u64 + 1);
                if next != expected {
                    return Err(IngestError::MissingDay { grid_id: grid, date: expected });
                }
            }
            DailyRainSeries::new(grid, start, days.into_iter().map(|(_, v, _)| v).collect())
        })
        .collect()
}

pub fn write_rainfall_csv<W: Write>(out: W, series: &[DailyRainSeries]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RAIN_HEADER)?;
    for s in series {
        for (i, v) in s.values().iter().enumerate() {
            w.write_record([s.grid_id.as_str(), &fmt_iso(s.date_at(i)), &format!("{v:.3}")])?;
        }
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

pub fn parse_forecast_csv(path: impl AsRef<Path>) -> Result<Vec<ForecastEnsemble>, IngestError> {
    read_forecast_csv(open(path.as_ref())?)
}

type EnsembleKey = (String, String, NaiveDate);

/// Reads `model,grid_id,init_date,member,lead_day,rain_mm` rows into one
/// dense ensemble per (model, grid, init date), in order of first appearance.
pub fn read_forecast_csv<R: Read>(input: R) -> Result<Vec<ForecastEnsemble>, IngestError> {
    let mut rdr = checked_reader(input, &FORECAST_HEADER)?;
    let mut order: Vec<EnsembleKey> = Vec::new();
    let mut cells: HashMap<EnsembleKey, BTreeMap<(usize, usize), f64>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != FORECAST_HEADER.len() {
            return Err(IngestError::MalformedRow {
                line: line_of(&rec),
                reason: format!("expected {} fields, found {}", FORECAST_HEADER.len(), rec.len()),
            });
        }
        let key = (
            field(&rec, 0, "model")?.to_string(),
            field(&rec, 1, "grid_id")?.to_string(),
            date_field(&rec, 2, "init_date")?,
        );
        let member: usize = num_field(&rec, 3, "member")?;
        let lead: usize = num_field(&rec, 4, "lead_day")?;
        if member == 0 || lead == 0 {
            return Err(IngestError::MalformedRow {
                line: line_of(&rec),
                reason: "member and lead_day are 1-based".into(),
            });
        }
        let rain = rain_field(&rec, 5)?;
        let entry = cells.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            BTreeMap::new()
        });
        if entry.insert((member, lead), rain).is_some() {
            return Err(IngestError::MalformedRow {
                line: line_of(&rec),
                reason: format!("duplicate member {member} lead day {lead}"),
            });
        }
    }
    order
        .into_iter()
        .map(|key| {
            let grid = cells.remove(&key).unwrap_or_default();
            let n_members = grid.keys().map(|k| k.0).max().unwrap_or(0);
            let n_leads = grid.keys().map(|k| k.1).max().unwrap_or(0);
            let (model, grid_id, init) = key;
            let mut members = Vec::with_capacity(n_members);
            for m in 1..=n_members {
                let mut row = Vec::with_capacity(n_leads);
                for l in 1..=n_leads {
                    match grid.get(&(m, l)) {
                        Some(v) => row.push(*v),
                        None => {
                            return Err(IngestError::RaggedEnsemble {
                                model,
                                grid_id,
                                init,
                                member: m,
                                lead_day: l,
                            })
                        }
                    }
                }
                members.push(row);
            }
            ForecastEnsemble::new(model, grid_id, init, members)
        })
        .collect()
}

pub fn write_forecast_csv<W: Write>(out: W, ensembles: &[ForecastEnsemble]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FORECAST_HEADER)?;
    for e in ensembles {
        let init = fmt_iso(e.init_date);
        for (m, row) in e.members().iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                w.write_record([
                    e.model_id.as_str(),
                    e.grid_id.as_str(),
                    &init,
                    &(m + 1).to_string(),
                    &(l + 1).to_string(),
                    &format!("{v:.3}"),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

pub fn parse_grid_csv(path: impl AsRef<Path>) -> Result<Vec<GridCell>, IngestError> {
    read_grid_csv(open(path.as_ref())?)
}

pub fn read_grid_csv<R: Read>(input: R) -> Result<Vec<GridCell>, IngestError> {
    let mut rdr = checked_reader(input, &GRID_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let policy_s = field(&rec, 4, "mok_policy")?;
        let policy: MokPolicy = policy_s.parse().map_err(|e| IngestError::MalformedRow {
            line: line_of(&rec),
            reason: format!("{e}"),
        })?;
        let cell = GridCell::new(
            field(&rec, 0, "grid_id")?,
            num_field(&rec, 1, "lat")?,
            num_field(&rec, 2, "lon")?,
            num_field(&rec, 3, "five_day_threshold_mm")?,
            policy,
        )
        .map_err(|e| IngestError::MalformedRow {
            line: line_of(&rec),
            reason: e.to_string(),
        })?;
        out.push(cell);
    }
    Ok(out)
}

pub fn write_grid_csv<W: Write>(out: W, cells: &[GridCell]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GRID_HEADER)?;
    for c in cells {
        w.write_record([
            c.id.as_str(),
            &format!("{:.4}", c.lat),
            &format!("{:.4}", c.lon),
            &format!("{:.3}", c.five_day_threshold_mm),
            &c.mok_policy.to_string(),
        ])?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

pub fn parse_mok_csv(path: impl AsRef<Path>) -> Result<BTreeMap<i32, NaiveDate>, IngestError> {
    read_mok_csv(open(path.as_ref())?)
}

/// Reads observed monsoon-onset-over-Kerala dates, one per year.
pub fn read_mok_csv<R: Read>(input: R) -> Result<BTreeMap<i32, NaiveDate>, IngestError> {
    let mut rdr = checked_reader(input, &MOK_HEADER)?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let year: i32 = num_field(&rec, 0, "year")?;
        let date = date_field(&rec, 1, "mok_date")?;
        if out.insert(year, date).is_some() {
            return Err(IngestError::MalformedRow {
                line: line_of(&rec),
                reason: format!("duplicate year {year}"),
            });
        }
    }
    Ok(out)
}

pub fn write_mok_csv<W: Write>(out: W, mok: &BTreeMap<i32, NaiveDate>) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MOK_HEADER)?;
    for (year, date) in mok {
        w.write_record([year.to_string(), fmt_iso(*date)])?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}
