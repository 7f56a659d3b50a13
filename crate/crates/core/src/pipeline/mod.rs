//! End-to-end run: data → onsets → climatology → features → blend, raw,
//! calibrated and multimodel forecasts → verification → artifacts.

mod config;

pub use config::{parse_years, CvMode, DataSource, OnsetSettings, RunConfig};

use crate::baselines::{
    self, mme_predict, optimize_mme_weights, platt_apply, platt_fit, raw_model_bin_probs, BaselineError,
    EnsembleWeights, PlattParams,
};
use crate::bins::{Bin, BinProbs};
use crate::blend::{self, build_features, fit_blend, predict_blend, winsorize_logit, BlendError, BlendModel, FeatureRow};
use crate::climatology::{self, evolving_bin_probs, fit_climatology, static_bin_probs, ClimError, ClimatologyKde};
use crate::dates::season_doy;
use crate::decision::{self, DecisionError};
use crate::eval::{self, evaluate, loocv_run, score_predictions, EvalError, EvalReport};
use crate::ingest::{self, DailyRainSeries, ForecastEnsemble, GridCell, IngestError};
use crate::onset::{self, detect_onsets, OnsetError, OnsetRecord};
use crate::par;
use crate::predictions::{write_predictions_csv, Prediction};
use chrono::{Datelike, NaiveDate};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    NonConvergence,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 1,
            ErrorKind::Data => 2,
            ErrorKind::NonConvergence => 3,
        }
    }
}

/// Maps module errors onto the three failure classes.
pub trait Classify {
    fn kind(&self) -> ErrorKind;
}

impl Classify for IngestError {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Data
    }
}

impl Classify for OnsetError {
    fn kind(&self) -> ErrorKind {
        match self {
            OnsetError::InvalidConfig(_) => ErrorKind::Validation,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for ClimError {
    fn kind(&self) -> ErrorKind {
        match self {
            ClimError::InvalidBandwidth(_) | ClimError::InvalidSupport(..) => ErrorKind::Validation,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for BlendError {
    fn kind(&self) -> ErrorKind {
        match self {
            BlendError::InvalidRidge(_) => ErrorKind::Validation,
            BlendError::NonConvergence { .. } => ErrorKind::NonConvergence,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for BaselineError {
    fn kind(&self) -> ErrorKind {
        match self {
            BaselineError::NonConvergence(_) => ErrorKind::NonConvergence,
            BaselineError::InvalidWeights(_) | BaselineError::TooFewComponents(_) => ErrorKind::Validation,
            _ => ErrorKind::Data,
        }
    }
}

impl Classify for EvalError {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Data
    }
}

impl Classify for DecisionError {
    fn kind(&self) -> ErrorKind {
        ErrorKind::Data
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: String, kind: ErrorKind, message: String },
}

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::Config(_) => ErrorKind::Validation,
            PipelineError::Stage { kind, .. } => *kind,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }
}

/// Wraps a module error with the stage that raised it.
pub fn at<E: Classify + Display>(stage: &str) -> impl Fn(E) -> PipelineError + '_ {
    move |e| PipelineError::Stage { stage: stage.to_string(), kind: e.kind(), message: e.to_string() }
}

fn at_ctx<E: Classify + Display>(stage: &str, ctx: String) -> impl FnOnce(E) -> PipelineError + '_ {
    move |e| PipelineError::Stage { stage: stage.to_string(), kind: e.kind(), message: format!("{ctx}: {e}") }
}

/// Writes `path` via a temporary file in the same directory and a rename.
pub fn write_atomic<F>(path: &Path, f: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), IngestError>,
{
    let io = |e: std::io::Error| PipelineError::Stage {
        stage: "write".into(),
        kind: ErrorKind::Data,
        message: format!("{}: {e}", path.display()),
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w).map_err(at_ctx("write", path.display().to_string()))?;
        w.flush().map_err(io)?;
    }
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Loaded or generated inputs.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub cells: Vec<GridCell>,
    pub truth: Vec<DailyRainSeries>,
    pub mok: BTreeMap<i32, NaiveDate>,
    pub forecasts: Vec<ForecastEnsemble>,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, PipelineError> {
    match &cfg.data {
        DataSource::Synthetic(s) => {
            let world = ingest::generate_synthetic_truth(s).map_err(at("synth"))?;
            let forecasts = ingest::generate_synthetic_forecasts(&world.truth, s).map_err(at("synth"))?;
            Ok(Inputs { cells: world.cells, truth: world.truth, mok: world.mok, forecasts })
        }
        DataSource::Files { rainfall, forecasts, grid, mok } => Ok(Inputs {
            cells: ingest::parse_grid_csv(grid).map_err(at("ingest"))?,
            truth: ingest::parse_rainfall_csv(rainfall).map_err(at("ingest"))?,
            mok: match mok {
                Some(p) => ingest::parse_mok_csv(p).map_err(at("ingest"))?,
                None => BTreeMap::new(),
            },
            forecasts: ingest::parse_forecast_csv(forecasts).map_err(at("ingest"))?,
        }),
    }
}

/// Observed onsets for every cell and season year.
pub fn detect_truth_onsets(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<OnsetRecord>, PipelineError> {
    let cells: BTreeMap<&str, &GridCell> = inputs.cells.iter().map(|c| (c.id.as_str(), c)).collect();
    let per_series = par::try_map(&inputs.truth, |s| {
        let cell = cells.get(s.grid_id.as_str()).ok_or_else(|| PipelineError::Stage {
            stage: "onset".into(),
            kind: ErrorKind::Data,
            message: format!("rainfall for {} has no grid entry", s.grid_id),
        })?;
        let oc = cfg.onset.config(cell.five_day_threshold_mm, cell.mok_policy);
        detect_onsets(s, &oc, &inputs.mok).map_err(at_ctx("onset", s.grid_id.clone()))
    })?;
    let mut out: Vec<OnsetRecord> = per_series
        .into_iter()
        .flatten()
        .filter(|r| cfg.years.as_ref().is_none_or(|ys| ys.contains(&r.year)))
        .collect();
    out.sort_by(|a, b| (&a.grid_id, a.year).cmp(&(&b.grid_id, b.year)));
    Ok(out)
}

/// A scorable forecast occasion: both models ran, onset had not happened.
#[derive(Debug, Clone)]
struct Item {
    grid_id: String,
    init: NaiveDate,
    outcome: Bin,
    /// Rainfall features; `pi` is filled per fold.
    base: FeatureRow,
    raw_a: BinProbs,
    raw_b: BinProbs,
}

impl Item {
    fn year(&self) -> i32 {
        self.init.year()
    }
}

fn build_items(cfg: &RunConfig, inputs: &Inputs, truth: &[OnsetRecord]) -> Result<Vec<Item>, PipelineError> {
    let cells: BTreeMap<&str, &GridCell> = inputs.cells.iter().map(|c| (c.id.as_str(), c)).collect();
    let onset_of: BTreeMap<(&str, i32), Option<NaiveDate>> =
        truth.iter().map(|r| ((r.grid_id.as_str(), r.year), r.onset_date)).collect();
    let mut by_key: BTreeMap<(&str, NaiveDate), [Option<&ForecastEnsemble>; 2]> = BTreeMap::new();
    for f in &inputs.forecasts {
        let slot = if f.model_id == cfg.model_a {
            0
        } else if f.model_id == cfg.model_b {
            1
        } else {
            continue;
        };
        by_key.entry((f.grid_id.as_str(), f.init_date)).or_default()[slot] = Some(f);
    }
    let mut todo = Vec::new();
    for ((grid, init), pair) in &by_key {
        let [Some(a), Some(b)] = pair else { continue };
        let Some(&onset) = onset_of.get(&(*grid, init.year())) else { continue };
        let Some(outcome) = Bin::for_onset(*init, onset) else { continue };
        let cell = cells.get(grid).ok_or_else(|| PipelineError::Stage {
            stage: "features".into(),
            kind: ErrorKind::Data,
            message: format!("forecasts for {grid} have no grid entry"),
        })?;
        todo.push((*a, *b, outcome, *cell));
    }
    let raw_policy = cfg.raw_mok_policy;
    par::try_map(&todo, |&(a, b, outcome, cell)| {
        let ctx = || format!("{} {}", a.grid_id, a.init_date);
        let mut base =
            build_features(&BinProbs::uniform(), a, b, cell.five_day_threshold_mm).map_err(at_ctx("features", ctx()))?;
        base.outcome = Some(outcome);
        let oc = cfg.onset.config(cell.five_day_threshold_mm, raw_policy);
        Ok(Item {
            grid_id: a.grid_id.clone(),
            init: a.init_date,
            outcome,
            base,
            raw_a: raw_model_bin_probs(a, &oc).map_err(at_ctx("raw", ctx()))?,
            raw_b: raw_model_bin_probs(b, &oc).map_err(at_ctx("raw", ctx()))?,
        })
    })
}

/// Everything fitted on one training set.
#[derive(Debug, Clone)]
struct FoldModel {
    clims: BTreeMap<String, ClimatologyKde>,
    blend: BlendModel,
    platt_a: PlattParams,
    platt_b: PlattParams,
}

/// Forecasts of every model for one item.
#[derive(Debug, Clone)]
struct ItemForecasts {
    key: (String, NaiveDate),
    static_: BinProbs,
    evolving: BinProbs,
    raw_a: BinProbs,
    raw_b: BinProbs,
    platt_a: BinProbs,
    platt_b: BinProbs,
    blend: BinProbs,
}

fn fit_clims(
    cfg: &RunConfig,
    truth: &[OnsetRecord],
    years: &dyn Fn(i32) -> bool,
) -> Result<BTreeMap<String, ClimatologyKde>, PipelineError> {
    let mut doys: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in truth.iter().filter(|r| years(r.year)) {
        let v = doys.entry(r.grid_id.as_str()).or_default();
        // Seasons without onset carry no date to smooth.
        if let Some(d) = r.onset_date {
            v.push(season_doy(d) as f64);
        }
    }
    let cells: Vec<(&str, Vec<f64>)> = doys.into_iter().collect();
    let fits = par::try_map(&cells, |(g, d)| {
        fit_climatology(*g, d, cfg.kde_support, cfg.bandwidth_floor_days).map_err(at_ctx("climatology", g.to_string()))
    })?;
    Ok(fits.into_iter().map(|k| (k.grid_id.clone(), k)).collect())
}

fn clim_for<'a>(clims: &'a BTreeMap<String, ClimatologyKde>, grid: &str) -> Result<&'a ClimatologyKde, PipelineError> {
    clims.get(grid).ok_or_else(|| PipelineError::Stage {
        stage: "climatology".into(),
        kind: ErrorKind::Data,
        message: format!("no training onsets for {grid}"),
    })
}

fn feature_row(item: &Item, clims: &BTreeMap<String, ClimatologyKde>) -> Result<(FeatureRow, BinProbs, BinProbs), PipelineError> {
    let kde = clim_for(clims, &item.grid_id)?;
    let ctx = || format!("{} {}", item.grid_id, item.init);
    let evolving = evolving_bin_probs(kde, item.init).map_err(at_ctx("climatology", ctx()))?;
    let stat = static_bin_probs(kde, item.init).map_err(at_ctx("climatology", ctx()))?;
    let mut row = item.base.clone();
    for j in 0..4 {
        row.pi[j] = winsorize_logit(evolving[j]);
    }
    Ok((row, evolving, stat))
}

fn fit_fold(cfg: &RunConfig, truth: &[OnsetRecord], train: &[&Item], years: &dyn Fn(i32) -> bool) -> Result<FoldModel, PipelineError> {
    let clims = fit_clims(cfg, truth, years)?;
    let rows = train
        .iter()
        .map(|it| feature_row(it, &clims).map(|r| r.0))
        .collect::<Result<Vec<_>, _>>()?;
    let blend = fit_blend(&rows, cfg.ridge).map_err(at("blend"))?;
    let outcomes: Vec<Bin> = train.iter().map(|it| it.outcome).collect();
    let raw_a: Vec<BinProbs> = train.iter().map(|it| it.raw_a).collect();
    let raw_b: Vec<BinProbs> = train.iter().map(|it| it.raw_b).collect();
    Ok(FoldModel {
        clims,
        blend,
        platt_a: platt_fit(&raw_a, &outcomes).map_err(at("calibrate"))?,
        platt_b: platt_fit(&raw_b, &outcomes).map_err(at("calibrate"))?,
    })
}

fn predict_fold(model: &FoldModel, held: &[&Item]) -> Result<Vec<ItemForecasts>, PipelineError> {
    held.iter()
        .map(|it| {
            let (row, evolving, stat) = feature_row(it, &model.clims)?;
            Ok(ItemForecasts {
                key: (it.grid_id.clone(), it.init),
                static_: stat,
                evolving,
                raw_a: it.raw_a,
                raw_b: it.raw_b,
                platt_a: platt_apply(&model.platt_a, &it.raw_a),
                platt_b: platt_apply(&model.platt_b, &it.raw_b),
                blend: predict_blend(&model.blend, &row),
            })
        })
        .collect()
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        at("cross-validation")(e)
    }
}

/// Result of a run. Artifacts are already on disk under `out_dir`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub reports: Vec<EvalReport>,
    pub mme_weights: EnsembleWeights,
    pub mme_components: Vec<String>,
    pub mme_converged: bool,
    pub n_items: usize,
    pub blend_iterations: Option<usize>,
    pub bandwidth_fallbacks: Vec<String>,
    pub platt_degenerate: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

impl RunSummary {
    pub fn report(&self, model: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.model == model)
    }

    /// One line per model: n, Brier, RPS, AUC, BSS, RPSS.
    pub fn table(&self) -> String {
        let mut s = format!("{:<16} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9}\n", "model", "n", "brier", "rps", "auc", "bss", "rpss");
        for r in &self.reports {
            s += &format!(
                "{:<16} {:>6} {:>9.6} {:>9.6} {:>9.6} {:>9.6} {:>9.6}\n",
                r.model, r.n, r.brier, r.rps, r.auc, r.bss, r.rpss
            );
        }
        s += &format!(
            "mme weights ({}): {}{}\n",
            self.mme_components.join(", "),
            self.mme_weights.w.iter().map(|w| format!("{w:.6}")).collect::<Vec<_>>().join(", "),
            if self.mme_converged { "" } else { " (grid point; BFGS did not converge)" }
        );
        s
    }
}

/// Runs every stage and writes artifacts to `cfg.out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    run_with_inputs(cfg, &inputs)
}

pub fn run_with_inputs(cfg: &RunConfig, inputs: &Inputs) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let truth = detect_truth_onsets(cfg, inputs)?;
    let mut items = build_items(cfg, inputs, &truth)?;
    items.retain(|it| cfg.years.as_ref().is_none_or(|ys| ys.contains(&it.year())));
    if items.is_empty() {
        return Err(PipelineError::Stage {
            stage: "features".into(),
            kind: ErrorKind::Data,
            message: "no forecast occasions with both models before onset".into(),
        });
    }
    let truth_years: BTreeSet<i32> = truth.iter().map(|r| r.year).collect();

    // Predictions per item plus the fit used for the saved model files.
    let (mut forecasts, final_model, train_items): (Vec<ItemForecasts>, FoldModel, Vec<&Item>) = match &cfg.cv {
        CvMode::Loocv => {
            let fc = loocv_run(
                &items,
                Item::year,
                |y, train| fit_fold(cfg, &truth, train, &|ty| ty != y),
                predict_fold,
            )?;
            let all: Vec<&Item> = items.iter().collect();
            let m = fit_fold(cfg, &truth, &all, &|_| true)?;
            (fc, m, all)
        }
        CvMode::Split { train, test } => {
            for y in train.iter().chain(test) {
                if !truth_years.contains(y) {
                    return Err(PipelineError::Config(format!("year {y} has no observed season in the data")));
                }
            }
            let tr: Vec<&Item> = items.iter().filter(|it| train.contains(&it.year())).collect();
            let te: Vec<&Item> = items.iter().filter(|it| test.contains(&it.year())).collect();
            let m = fit_fold(cfg, &truth, &tr, &|y| train.contains(&y))?;
            (predict_fold(&m, &te)?, m, tr)
        }
    };
    forecasts.sort_by(|a, b| a.key.cmp(&b.key));

    // Post-hoc fixed-weight ensemble on the scored set.
    let outcome_of: BTreeMap<(&str, NaiveDate), Bin> = items.iter().map(|it| ((it.grid_id.as_str(), it.init), it.outcome)).collect();
    let outcomes: Vec<Bin> = forecasts.iter().map(|f| outcome_of[&(f.key.0.as_str(), f.key.1)]).collect();
    let mme_components = vec![
        "evolving".to_string(),
        format!("{}_platt", cfg.model_a),
        format!("{}_platt", cfg.model_b),
    ];
    let comps: Vec<Vec<BinProbs>> = vec![
        forecasts.iter().map(|f| f.evolving).collect(),
        forecasts.iter().map(|f| f.platt_a).collect(),
        forecasts.iter().map(|f| f.platt_b).collect(),
    ];
    let mme = optimize_mme_weights(&comps, &outcomes).map_err(at("mme"))?;
    let mme_probs: Vec<BinProbs> = forecasts
        .iter()
        .map(|f| mme_predict(&mme.weights, &[f.evolving, f.platt_a, f.platt_b]))
        .collect::<Result<_, _>>()
        .map_err(at("mme"))?;

    let named: Vec<(String, Vec<BinProbs>)> = vec![
        ("static".into(), forecasts.iter().map(|f| f.static_).collect()),
        ("evolving".into(), forecasts.iter().map(|f| f.evolving).collect()),
        (format!("{}_raw", cfg.model_a), forecasts.iter().map(|f| f.raw_a).collect()),
        (format!("{}_raw", cfg.model_b), forecasts.iter().map(|f| f.raw_b).collect()),
        (format!("{}_platt", cfg.model_a), forecasts.iter().map(|f| f.platt_a).collect()),
        (format!("{}_platt", cfg.model_b), forecasts.iter().map(|f| f.platt_b).collect()),
        ("blend".into(), forecasts.iter().map(|f| f.blend).collect()),
        ("mme".into(), mme_probs),
    ];
    let to_preds = |probs: &[BinProbs]| -> Vec<Prediction> {
        forecasts
            .iter()
            .zip(probs)
            .map(|(f, p)| Prediction { grid_id: f.key.0.clone(), init_date: f.key.1, probs: *p })
            .collect()
    };
    let static_items = score_predictions(&to_preds(&named[0].1), &truth).map_err(at("eval"))?;
    let reports = par::try_map(&named, |(name, probs)| {
        let scored = score_predictions(&to_preds(probs), &truth).map_err(at("eval"))?;
        evaluate(name, &scored, &static_items, cfg.auc_ties).map_err(at_ctx("eval", name.clone()))
    })?;

    // Artifacts.
    let out = &cfg.out_dir;
    let mut artifacts = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&mut dyn Write) -> Result<(), IngestError>| -> Result<(), PipelineError> {
        let p = out.join(name);
        write_atomic(&p, |w| f(w))?;
        artifacts.push(p);
        Ok(())
    };
    emit("config.txt", &|w| Ok(w.write_all(cfg.to_text().as_bytes()).map_err(csv::Error::from)?))?;
    if cfg.write_inputs {
        emit("grid.csv", &|w| ingest::write_grid_csv(w, &inputs.cells))?;
        emit("rainfall.csv", &|w| ingest::write_rainfall_csv(w, &inputs.truth))?;
        emit("mok.csv", &|w| ingest::write_mok_csv(w, &inputs.mok))?;
        emit("forecasts.csv", &|w| ingest::write_forecast_csv(w, &inputs.forecasts))?;
    }
    emit("onsets.csv", &|w| onset::write_onset_csv(w, &truth))?;
    let kdes: Vec<ClimatologyKde> = final_model.clims.values().cloned().collect();
    emit("climatology.csv", &|w| climatology::write_climatology_csv(w, &kdes))?;
    let rows = train_items
        .iter()
        .map(|it| feature_row(it, &final_model.clims).map(|r| r.0))
        .collect::<Result<Vec<_>, _>>()?;
    emit("features.csv", &|w| blend::write_features_csv(w, &rows))?;
    emit("blend_model.csv", &|w| blend::write_blend_model_csv(w, &final_model.blend))?;
    emit(&format!("platt_{}.csv", cfg.model_a), &|w| baselines::write_platt_csv(w, &final_model.platt_a))?;
    emit(&format!("platt_{}.csv", cfg.model_b), &|w| baselines::write_platt_csv(w, &final_model.platt_b))?;
    emit("mme_weights.csv", &|w| baselines::write_weights_csv(w, &mme_components, &mme.weights))?;
    for (name, probs) in &named {
        let preds = to_preds(probs);
        emit(&format!("predictions_{name}.csv"), &|w| write_predictions_csv(w, &preds))?;
    }
    emit("eval_report.csv", &|w| eval::write_eval_report_csv(w, &reports))?;
    emit("reliability.csv", &|w| eval::write_reliability_csv(w, &reports))?;
    let demo = decision::demo_report(cfg.decision_seed);
    emit("decision.txt", &|w| Ok(w.write_all(demo.as_bytes()).map_err(csv::Error::from)?))?;

    let mut summary = RunSummary {
        reports,
        mme_weights: mme.weights,
        mme_components,
        mme_converged: mme.converged,
        n_items: forecasts.len(),
        blend_iterations: final_model.blend.diagnostics.as_ref().map(|d| d.iterations),
        bandwidth_fallbacks: kdes.iter().filter(|k| k.bandwidth_fallback).map(|k| k.grid_id.clone()).collect(),
        platt_degenerate: [(&cfg.model_a, &final_model.platt_a), (&cfg.model_b, &final_model.platt_b)]
            .iter()
            .flat_map(|(m, p)| (0..5).filter(|&j| p.degenerate[j]).map(move |j| format!("{m} bin {}", j + 1)))
            .collect(),
        artifacts: Vec::new(),
    };
    let table = summary.table();
    emit("summary.txt", &|w| Ok(w.write_all(table.as_bytes()).map_err(csv::Error::from)?))?;
    summary.artifacts = artifacts;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SyntheticConfig;

    fn small(out: &Path) -> RunConfig {
        RunConfig {
            out_dir: out.to_path_buf(),
            data: DataSource::Synthetic(SyntheticConfig {
                seed: 3,
                n_years: 8,
                n_cells: 3,
                ensemble_members: 4,
                ..SyntheticConfig::default()
            }),
            ..RunConfig::default()
        }
    }

    #[test]
    fn small_run_writes_round_trippable_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_pipeline(&small(dir.path())).unwrap();
        assert_eq!(s.report("static").unwrap().rpss, 0.0);
        let p = dir.path();
        assert_eq!(crate::predictions::parse_predictions_csv(p.join("predictions_blend.csv")).unwrap().len(), s.n_items);
        crate::blend::parse_blend_model_csv(p.join("blend_model.csv")).unwrap();
        crate::blend::parse_features_csv(p.join("features.csv")).unwrap();
        crate::climatology::parse_climatology_csv(p.join("climatology.csv")).unwrap();
        crate::onset::parse_onset_csv(p.join("onsets.csv")).unwrap();
        crate::baselines::parse_platt_csv(p.join("platt_model_a.csv")).unwrap();
        crate::baselines::parse_weights_csv(p.join("mme_weights.csv")).unwrap();
        let text = std::fs::read_to_string(p.join("config.txt")).unwrap();
        assert_eq!(RunConfig::from_text(&text).unwrap(), small(p));
    }

    #[test]
    fn split_rejects_unknown_years() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.cv = CvMode::Split { train: parse_years("1990-1995").unwrap(), test: parse_years("2050").unwrap() };
        assert_eq!(run_pipeline(&cfg).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, |w| Ok(w.write_all(b"a\n").map_err(csv::Error::from)?)).unwrap();
        let err = write_atomic(&p, |_| Err(IngestError::Invalid("boom".into())));
        assert!(err.is_err());
        assert_eq!(std::fs::read(&p).unwrap(), b"a\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
