//! Verification: Brier, RPS, AUC, skill against static climatology,
//! reliability tables, per-lead and per-year breakdowns, and the
//! leave-one-year-out harness.

mod loocv;
mod metrics;
mod reliability;

pub use loocv::loocv_run;
pub use metrics::{
    auc, auc_for_bin, auc_pairs, brier, brier_for_bin, brier_single, rps, rps_single, skill, TiePolicy,
};
pub use reliability::{reliability, Decile, Reliability, N_DECILES, N_HIST};

use crate::bins::{Bin, BinProbs, NUM_BINS};
use crate::ingest::IngestError;
use crate::onset::OnsetRecord;
use crate::predictions::Prediction;
use chrono::{Datelike, NaiveDate};
use std::collections::{BTreeMap, HashMap};
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("nothing to score")]
    EmptySet,
    #[error("AUC needs at least one occurred bin")]
    NoPositives,
    #[error("AUC needs at least one non-occurred bin")]
    NoNegatives,
    #[error("climatology score is zero; skill is undefined")]
    ZeroClimatologyScore,
    #[error("cross-validation needs at least 2 years, got {0}")]
    TooFewYears(usize),
    #[error("forecast sets are not aligned: {0}")]
    Misaligned(String),
    #[error("no observed onset record for {0} {1}")]
    MissingTruth(String, i32),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// One forecast with its observed outcome bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItem {
    pub grid_id: String,
    pub init_date: NaiveDate,
    pub probs: BinProbs,
    pub outcome: Bin,
}

impl ScoredItem {
    pub fn year(&self) -> i32 {
        self.init_date.year()
    }
}

/// Pairs predictions with observed onsets. Forecasts issued on or after the
/// observed onset are dropped.
pub fn score_predictions(preds: &[Prediction], truth: &[OnsetRecord]) -> Result<Vec<ScoredItem>, EvalError> {
    let lookup: HashMap<(&str, i32), Option<NaiveDate>> =
        truth.iter().map(|r| ((r.grid_id.as_str(), r.year), r.onset_date)).collect();
    let mut out = Vec::with_capacity(preds.len());
    for p in preds {
        let year = p.init_date.year();
        let onset = lookup
            .get(&(p.grid_id.as_str(), year))
            .ok_or_else(|| EvalError::MissingTruth(p.grid_id.clone(), year))?;
        if let Some(outcome) = Bin::for_onset(p.init_date, *onset) {
            out.push(ScoredItem {
                grid_id: p.grid_id.clone(),
                init_date: p.init_date,
                probs: p.probs,
                outcome,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeadScore {
    pub bin: Bin,
    pub brier: f64,
    pub bss: f64,
    /// `None` when the bin never (or always) occurred.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearScore {
    pub year: i32,
    pub n: usize,
    pub bss: f64,
    pub rpss: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub n: usize,
    pub brier: f64,
    pub rps: f64,
    pub auc: f64,
    pub bss: f64,
    pub rpss: f64,
    pub per_lead: Vec<LeadScore>,
    pub per_year: Vec<YearScore>,
    pub reliability: Reliability,
}

fn check_aligned(items: &[ScoredItem], clim: &[ScoredItem]) -> Result<(), EvalError> {
    if items.len() != clim.len() {
        return Err(EvalError::Misaligned(format!("{} forecasts vs {} climatology", items.len(), clim.len())));
    }
    for (a, b) in items.iter().zip(clim) {
        if a.grid_id != b.grid_id || a.init_date != b.init_date || a.outcome != b.outcome {
            return Err(EvalError::Misaligned(format!("{} {} vs {} {}", a.grid_id, a.init_date, b.grid_id, b.init_date)));
        }
    }
    Ok(())
}

/// Scores `items` against the static-climatology forecasts `clim` for the
/// same (cell, init) sequence.
pub fn evaluate(
    model: &str,
    items: &[ScoredItem],
    clim: &[ScoredItem],
    policy: TiePolicy,
) -> Result<EvalReport, EvalError> {
    check_aligned(items, clim)?;
    let (b, r) = (brier(items)?, rps(items)?);
    let (cb, cr) = (brier(clim)?, rps(clim)?);

    let mut per_lead = Vec::with_capacity(NUM_BINS);
    for j in 0..NUM_BINS {
        let bin = Bin::from_index(j);
        let bj = brier_for_bin(items, bin)?;
        per_lead.push(LeadScore {
            bin,
            brier: bj,
            bss: skill(bj, brier_for_bin(clim, bin)?).unwrap_or(f64::NAN),
            auc: auc_for_bin(items, bin, policy).ok(),
        });
    }

    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        by_year.entry(it.year()).or_default().push(i);
    }
    let mut per_year = Vec::with_capacity(by_year.len());
    for (year, idx) in by_year {
        let mine: Vec<ScoredItem> = idx.iter().map(|&i| items[i].clone()).collect();
        let theirs: Vec<ScoredItem> = idx.iter().map(|&i| clim[i].clone()).collect();
        per_year.push(YearScore {
            year,
            n: mine.len(),
            bss: skill(brier(&mine)?, brier(&theirs)?).unwrap_or(f64::NAN),
            rpss: skill(rps(&mine)?, rps(&theirs)?).unwrap_or(f64::NAN),
            auc: auc(&mine, policy).ok(),
        });
    }

    Ok(EvalReport {
        model: model.to_string(),
        n: items.len(),
        brier: b,
        rps: r,
        auc: auc(items, policy)?,
        bss: skill(b, cb)?,
        rpss: skill(r, cr)?,
        per_lead,
        per_year,
        reliability: reliability(items)?,
    })
}

fn f6(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.6}")
    }
}

/// Long-format scores: `model,scope,key,metric,value`, where scope is
/// `overall`, `lead` (key = bin) or `year`.
pub fn write_eval_report_csv<W: Write>(out: W, reports: &[EvalReport]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "scope", "key", "metric", "value"])?;
    for r in reports {
        let m = r.model.as_str();
        w.write_record([m, "overall", "", "n", &r.n.to_string()])?;
        for (name, v) in [("brier", r.brier), ("rps", r.rps), ("auc", r.auc), ("bss", r.bss), ("rpss", r.rpss)] {
            w.write_record([m, "overall", "", name, &f6(v)])?;
        }
        for l in &r.per_lead {
            let key = l.bin.number().to_string();
            w.write_record([m, "lead", &key, "brier", &f6(l.brier)])?;
            w.write_record([m, "lead", &key, "bss", &f6(l.bss)])?;
            w.write_record([m, "lead", &key, "auc", &f6(l.auc.unwrap_or(f64::NAN))])?;
        }
        for y in &r.per_year {
            let key = y.year.to_string();
            w.write_record([m, "year", &key, "n", &y.n.to_string()])?;
            w.write_record([m, "year", &key, "bss", &f6(y.bss)])?;
            w.write_record([m, "year", &key, "rpss", &f6(y.rpss)])?;
            w.write_record([m, "year", &key, "auc", &f6(y.auc.unwrap_or(f64::NAN))])?;
        }
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

/// Plot data: decile points (`kind = decile`, x = mean p, y = observed
/// frequency) and histogram bars (`kind = histogram`, x = bin start,
/// y = height).
pub fn write_reliability_csv<W: Write>(out: W, reports: &[EvalReport]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "kind", "index", "x", "y", "count"])?;
    for r in reports {
        for (i, d) in r.reliability.deciles.iter().enumerate() {
            w.write_record([&r.model, "decile", &(i + 1).to_string(), &f6(d.mean_p), &f6(d.observed_freq), &d.count.to_string()])?;
        }
        for (i, h) in r.reliability.histogram.iter().enumerate() {
            w.write_record([&r.model, "histogram", &(i + 1).to_string(), &f6(i as f64 / N_HIST as f64), &f6(*h), ""])?;
        }
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2001, m, day).unwrap()
    }

    #[test]
    fn scoring_drops_post_onset_forecasts() {
        let truth = vec![OnsetRecord { grid_id: "c".into(), year: 2001, onset_date: Some(d(6, 10)) }];
        let preds: Vec<Prediction> = [d(6, 1), d(6, 9), d(6, 10), d(6, 12)]
            .into_iter()
            .map(|init_date| Prediction { grid_id: "c".into(), init_date, probs: BinProbs::uniform() })
            .collect();
        let items = score_predictions(&preds, &truth).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].outcome.number(), 2);
        assert_eq!(items[1].outcome.number(), 1);
        let missing = score_predictions(&[Prediction { grid_id: "x".into(), init_date: d(6, 1), probs: BinProbs::uniform() }], &truth);
        assert!(matches!(missing, Err(EvalError::MissingTruth(..))));
    }

    #[test]
    fn climatology_has_zero_skill_everywhere() {
        let items: Vec<ScoredItem> = (0..40)
            .map(|i| ScoredItem {
                grid_id: format!("c{}", i % 3),
                init_date: NaiveDate::from_ymd_opt(2000 + i % 4, 6, 1).unwrap(),
                probs: BinProbs::normalized([1.0 + (i % 5) as f64, 2.0, 1.0, 0.5, 1.5]).unwrap(),
                outcome: Bin::from_index((i as usize * 7) % 5),
            })
            .collect();
        let r = evaluate("static", &items, &items, TiePolicy::Half).unwrap();
        assert_eq!(r.bss, 0.0);
        assert_eq!(r.rpss, 0.0);
        assert!(r.per_lead.iter().all(|l| l.bss == 0.0));
        assert!(r.per_year.iter().all(|y| y.bss == 0.0 && y.rpss == 0.0));
        let mut buf = Vec::new();
        write_eval_report_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("static,overall,,rpss,0.000000"));
    }
}
