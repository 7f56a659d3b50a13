//! Per-forecast bin probabilities and their CSV form, shared by every model.

use crate::bins::{BinProbs, NUM_BINS};
use crate::dates::fmt_iso;
use crate::ingest::csvio::{checked_reader, date_field, field, line_of, num_field, open};
use crate::ingest::IngestError;
use chrono::NaiveDate;
use std::io::{Read, Write};
use std::path::Path;

pub const PREDICTION_HEADER: [&str; 7] =
    ["grid_id", "init_date", "p_week1", "p_week2", "p_week3", "p_week4", "p_later"];

/// Printed rows carry 6 decimals, so a re-read vector may miss 1 by this much.
const READ_SUM_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub grid_id: String,
    pub init_date: NaiveDate,
    pub probs: BinProbs,
}

pub fn write_predictions_csv<W: Write>(out: W, rows: &[Prediction]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PREDICTION_HEADER)?;
    for r in rows {
        let mut rec = vec![r.grid_id.clone(), fmt_iso(r.init_date)];
        rec.extend(r.probs.as_array().iter().map(|p| format!("{p:.6}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

pub fn parse_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<Prediction>, IngestError> {
    read_predictions_csv(open(path.as_ref())?)
}

/// Reads predictions, renormalizing the rounding error of printed rows.
pub fn read_predictions_csv<R: Read>(input: R) -> Result<Vec<Prediction>, IngestError> {
    let mut rdr = checked_reader(input, &PREDICTION_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut p = [0.0; NUM_BINS];
        for (j, pj) in p.iter_mut().enumerate() {
            *pj = num_field(&rec, 2 + j, PREDICTION_HEADER[2 + j])?;
        }
        let sum: f64 = p.iter().sum();
        let bad = p.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > READ_SUM_TOL;
        let probs = if bad { None } else { BinProbs::normalized(p).ok() };
        let Some(probs) = probs else {
            return Err(IngestError::MalformedRow {
                line: line_of(&rec),
                reason: format!("probabilities {p:?} are not a distribution"),
            });
        };
        out.push(Prediction {
            grid_id: field(&rec, 0, "grid_id")?.to_string(),
            init_date: date_field(&rec, 1, "init_date")?,
            probs,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_print_precision() {
        let rows = vec![Prediction {
            grid_id: "c1".into(),
            init_date: NaiveDate::from_ymd_opt(2001, 6, 4).unwrap(),
            probs: BinProbs::new([1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 12.0, 1.0 / 12.0]).unwrap(),
        }];
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("c1,2001-06-04,0.333333,0.333333,0.166667,0.083333,0.083333"));
        let back = read_predictions_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].grid_id, "c1");
        for j in 0..NUM_BINS {
            assert!((back[0].probs[j] - rows[0].probs[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_non_distribution() {
        let csv = "grid_id,init_date,p_week1,p_week2,p_week3,p_week4,p_later\nc,2001-06-04,0.5,0.5,0.5,0,0\n";
        assert!(matches!(read_predictions_csv(csv.as_bytes()), Err(IngestError::MalformedRow { .. })));
    }
}
