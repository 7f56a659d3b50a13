//! Blended onset model: evolving-climatology logits and two models' rainfall
//! window features feeding a multinomial logit.

mod features;
mod model;

pub use features::{build_features, build_features_with_offset, winsorize_logit, LOGIT_CLAMP};
pub use model::{
    fit_blend, predict_blend, predict_blend_standardized, BlendModel, BlendObjective, Coefficients,
    FitDiagnostics, Standardization, BASE_NAMES, DEFAULT_RIDGE, N_PARAMS, TERMS,
};

use crate::bins::Bin;
use crate::dates::fmt_iso;
use crate::ingest::csvio::{checked_reader, date_field, field, line_of, num_field, open};
use crate::ingest::IngestError;
use chrono::{Datelike, NaiveDate};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum BlendError {
    #[error("no {window_days}-day window starting in bin {bin} fits a {lead_days}-day forecast")]
    LeadWindowExceedsHorizon { bin: usize, window_days: usize, lead_days: usize },
    #[error("forecasts do not describe the same cell and init: {0}")]
    MismatchedForecasts(String),
    #[error("training needs at least two outcome classes; all rows are bin {}", .0.number())]
    SingleClass(Bin),
    #[error("blend fit did not converge after {iterations} iterations (gradient max-norm {grad_norm:.3e})")]
    NonConvergence { grad_norm: f64, iterations: usize },
    #[error("no training rows")]
    EmptyTraining,
    #[error("ridge must be finite and nonnegative, got {0}")]
    InvalidRidge(f64),
    #[error("training row {0} {1} has no outcome")]
    MissingOutcome(String, NaiveDate),
    #[error("row {0} {1} has non-finite features")]
    NonFinite(String, NaiveDate),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Features of one forecast (grid cell, init date); arrays are indexed by
/// lead bin 1..=4.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub grid_id: String,
    pub init_date: NaiveDate,
    /// Winsorized logit of the evolving-climatology probability.
    pub pi: [f64; 4],
    /// Model A: max 5-day total minus the onset threshold.
    pub alpha: [f64; 4],
    /// Model B: max 5-day total minus the onset threshold.
    pub nu: [f64; 4],
    /// Model A: min 10-day total.
    pub beta: [f64; 4],
    /// Model B: min 10-day total.
    pub mu: [f64; 4],
    pub outcome: Option<Bin>,
}

impl FeatureRow {
    /// Base features of lead bin `j` (0-based) in [`BASE_NAMES`] order.
    pub fn base(&self, j: usize) -> [f64; 5] {
        [self.pi[j], self.alpha[j], self.nu[j], self.beta[j], self.mu[j]]
    }

    pub fn year(&self) -> i32 {
        self.init_date.year()
    }

    pub fn is_finite(&self) -> bool {
        [self.pi, self.alpha, self.nu, self.beta, self.mu].iter().flatten().all(|v| v.is_finite())
    }
}

fn feature_header() -> Vec<String> {
    let mut h = vec!["grid_id".to_string(), "init_date".to_string()];
    for name in BASE_NAMES {
        h.extend((1..=4).map(|j| format!("{name}_{j}")));
    }
    h.push("outcome".into());
    h
}

/// Feature values use the shortest exact decimal form; `outcome` is empty
/// when unknown.
pub fn write_features_csv<W: Write>(out: W, rows: &[FeatureRow]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(feature_header())?;
    for r in rows {
        let mut rec = vec![r.grid_id.clone(), fmt_iso(r.init_date)];
        for arr in [r.pi, r.alpha, r.nu, r.beta, r.mu] {
            rec.extend(arr.iter().map(|v| v.to_string()));
        }
        rec.push(r.outcome.map(|b| b.number().to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

pub fn parse_features_csv(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>, IngestError> {
    read_features_csv(open(path.as_ref())?)
}

pub fn read_features_csv<R: Read>(input: R) -> Result<Vec<FeatureRow>, IngestError> {
    let header = feature_header();
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rdr = checked_reader(input, &refs)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut vals = [[0.0; 4]; 5];
        for (k, arr) in vals.iter_mut().enumerate() {
            for (j, v) in arr.iter_mut().enumerate() {
                let col = 2 + 4 * k + j;
                *v = num_field(&rec, col, &header[col])?;
            }
        }
        let outcome_col = field(&rec, 22, "outcome")?;
        let outcome = if outcome_col.is_empty() {
            None
        } else {
            let b: u8 = num_field(&rec, 22, "outcome")?;
            Some(Bin::new(b).ok_or_else(|| IngestError::MalformedRow {
                line: line_of(&rec),
                reason: format!("outcome {b} is not a bin 1-5"),
            })?)
        };
        let [pi, alpha, nu, beta, mu] = vals;
        out.push(FeatureRow {
            grid_id: field(&rec, 0, "grid_id")?.to_string(),
            init_date: date_field(&rec, 1, "init_date")?,
            pi,
            alpha,
            nu,
            beta,
            mu,
            outcome,
        });
    }
    Ok(out)
}

const MODEL_HEADER: [&str; 5] = ["kind", "term", "lead_bin", "outcome_bin", "value"];

fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

/// Coefficients `t` with 12 significant digits plus the standardization
/// constants they were fitted with.
pub fn write_blend_model_csv<W: Write>(out: W, model: &BlendModel) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MODEL_HEADER)?;
    for (l, (name, _)) in TERMS.iter().enumerate() {
        for j in 0..4 {
            for k in 0..4 {
                w.write_record(["t", name, &(j + 1).to_string(), &(k + 1).to_string(), &sig12(model.t[l][j][k])])?;
            }
        }
    }
    let s = &model.standardization;
    for (kind, table) in [("mean", &s.mean), ("scale", &s.scale)] {
        for (k, name) in BASE_NAMES.iter().enumerate() {
            for (j, row) in table.iter().enumerate() {
                w.write_record([kind, name, &(j + 1).to_string(), "", &sig12(row[k])])?;
            }
        }
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

pub fn parse_blend_model_csv(path: impl AsRef<Path>) -> Result<BlendModel, IngestError> {
    read_blend_model_csv(open(path.as_ref())?)
}

pub fn read_blend_model_csv<R: Read>(input: R) -> Result<BlendModel, IngestError> {
    let mut rdr = checked_reader(input, &MODEL_HEADER)?;
    let mut t = [[[f64::NAN; 4]; 4]; 10];
    let mut std = Standardization {
        mean: [[f64::NAN; 5]; 4],
        scale: [[f64::NAN; 5]; 4],
    };
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |reason: String| IngestError::MalformedRow { line: line_of(&rec), reason };
        let kind = field(&rec, 0, "kind")?;
        let term = field(&rec, 1, "term")?;
        let j: usize = num_field(&rec, 2, "lead_bin")?;
        if !(1..=4).contains(&j) {
            return Err(bad(format!("lead_bin {j} out of range")));
        }
        let value: f64 = num_field(&rec, 4, "value")?;
        if !value.is_finite() {
            return Err(bad(format!("non-finite value {value}")));
        }
        match kind {
            "t" => {
                let l = TERMS.iter().position(|(n, _)| *n == term).ok_or_else(|| bad(format!("unknown term `{term}`")))?;
                let k: usize = num_field(&rec, 3, "outcome_bin")?;
                if !(1..=4).contains(&k) {
                    return Err(bad(format!("outcome_bin {k} out of range")));
                }
                t[l][j - 1][k - 1] = value;
            }
            "mean" | "scale" => {
                let b = BASE_NAMES.iter().position(|n| *n == term).ok_or_else(|| bad(format!("unknown feature `{term}`")))?;
                if kind == "scale" {
                    if !(value > 0.0) {
                        return Err(bad(format!("scale must be positive, got {value}")));
                    }
                    std.scale[j - 1][b] = value;
                } else {
                    std.mean[j - 1][b] = value;
                }
            }
            other => return Err(bad(format!("unknown kind `{other}`"))),
        }
    }
    let complete = t.iter().flatten().flatten().chain(std.mean.iter().flatten()).chain(std.scale.iter().flatten()).all(|v| !v.is_nan());
    if !complete {
        return Err(IngestError::Invalid("blend model file is missing entries".into()));
    }
    Ok(BlendModel { t, standardization: std, diagnostics: None })
}
