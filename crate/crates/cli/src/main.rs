use clap::{Args, Parser, Subcommand};
use onsetblend::baselines::{self, raw_model_bin_probs};
use onsetblend::bins::{Bin, BinProbs};
use onsetblend::blend::{self, build_features, winsorize_logit};
use onsetblend::climatology::{self, evolving_bin_probs, fit_climatology, static_bin_probs, ClimatologyKde};
use onsetblend::dates::{parse_iso, season_doy};
use onsetblend::decision;
use onsetblend::eval::{self, evaluate, score_predictions, ScoredItem, TiePolicy};
use onsetblend::ingest::{self, ForecastEnsemble, GridCell};
use onsetblend::onset::{self, compute_five_day_threshold, detect_onsets, MokPolicy, OnsetRecord, SeasonWindow};
use onsetblend::pipeline::{self, at, write_atomic, DataSource, PipelineError, RunConfig};
use onsetblend::predictions::{self, Prediction};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "onsetblend", version, about = "Monsoon onset forecasts: climatology, blending and verification")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable), e.g. `--set ridge=1e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world (grid, rainfall, MOK dates, forecasts).
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Onset(OnsetCmd),
    #[command(subcommand)]
    Clim(ClimCmd),
    #[command(subcommand)]
    Blend(BlendCmd),
    #[command(subcommand)]
    Calibrate(CalibrateCmd),
    #[command(subcommand)]
    Mme(MmeCmd),
    /// Score prediction files against observed onsets.
    Eval {
        /// Prediction CSVs; the model name is the file stem.
        #[arg(long, num_args = 1.., required = true)]
        predictions: Vec<PathBuf>,
        /// Static-climatology predictions for the same occasions.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        onsets: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reliability: Option<PathBuf>,
    },
    #[command(subcommand)]
    Decision(DecisionCmd),
    /// Run the whole pipeline and write every artifact.
    Run {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OnsetCmd {
    /// Observed onsets from daily rainfall.
    Detect {
        #[arg(long)]
        rain: PathBuf,
        /// Grid file with per-cell thresholds and MOK policies.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        mok: Option<PathBuf>,
        /// `true-mok`, `clim-mok=MM-DD` or `none`; overrides the grid policy.
        #[arg(long)]
        variant: Option<String>,
        /// Five-day threshold for every cell; otherwise from the grid or
        /// estimated from the rainfall.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Raw-model bin probabilities (member fractions) from forecasts.
    Forecast {
        #[arg(long)]
        forecasts: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ClimCmd {
    /// Fit the per-cell KDE climatology.
    Fit {
        #[arg(long)]
        onsets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Static or evolving probabilities for each forecast occasion.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Any CSV with `grid_id,init_date` as its first columns.
        #[arg(long)]
        occasions: PathBuf,
        #[arg(long)]
        evolving: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum BlendCmd {
    /// Feature rows from forecasts, climatology and observed onsets.
    Features {
        #[arg(long)]
        forecasts: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        clim: PathBuf,
        #[arg(long)]
        onsets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Fit {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CalibrateCmd {
    Fit {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        onsets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Apply {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum MmeCmd {
    /// Optimize fixed weights over component prediction files.
    Fit {
        #[arg(long, num_args = 2.., required = true)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        onsets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Apply {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, num_args = 2.., required = true)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DecisionCmd {
    /// Insurance example and property sweeps.
    Demo {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Property sweeps with random forecast schemes on given problems.
    Check {
        #[arg(long)]
        problems: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        schemes: usize,
    },
}

type Res<T> = Result<T, PipelineError>;

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

fn load_config(g: &Global) -> Res<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &g.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| invalid(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| invalid(format!("--set: {e}")))?;
    }
    Ok(cfg)
}

fn emit_predictions(path: &Path, rows: &[Prediction]) -> Res<()> {
    write_atomic(path, |w| predictions::write_predictions_csv(w, rows))
}

fn read_preds(path: &Path) -> Res<Vec<Prediction>> {
    predictions::parse_predictions_csv(path).map_err(at("ingest"))
}

fn read_onsets(path: &Path) -> Res<Vec<OnsetRecord>> {
    onset::parse_onset_csv(path).map_err(at("ingest"))
}

fn read_grid(path: &Path) -> Res<BTreeMap<String, GridCell>> {
    Ok(ingest::parse_grid_csv(path).map_err(at("ingest"))?.into_iter().map(|c| (c.id.clone(), c)).collect())
}

fn cell<'a>(grid: &'a BTreeMap<String, GridCell>, id: &str) -> Res<&'a GridCell> {
    grid.get(id).ok_or_else(|| PipelineError::Stage {
        stage: "ingest".into(),
        kind: pipeline::ErrorKind::Data,
        message: format!("grid file has no cell {id}"),
    })
}

fn read_clims(path: &Path) -> Res<BTreeMap<String, ClimatologyKde>> {
    Ok(climatology::parse_climatology_csv(path)
        .map_err(at("ingest"))?
        .into_iter()
        .map(|k| (k.grid_id.clone(), k))
        .collect())
}

fn clim<'a>(m: &'a BTreeMap<String, ClimatologyKde>, id: &str) -> Res<&'a ClimatologyKde> {
    m.get(id).ok_or_else(|| PipelineError::Stage {
        stage: "climatology".into(),
        kind: pipeline::ErrorKind::Data,
        message: format!("climatology file has no cell {id}"),
    })
}

fn scored(path: &Path, truth: &[OnsetRecord]) -> Res<Vec<ScoredItem>> {
    score_predictions(&read_preds(path)?, truth).map_err(at("eval"))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

/// Components scored on the same occasions, in the first file's order.
fn aligned_components(paths: &[PathBuf], truth: &[OnsetRecord]) -> Res<(Vec<Vec<BinProbs>>, Vec<Bin>)> {
    let first = scored(&paths[0], truth)?;
    let mut comps = vec![first.iter().map(|s| s.probs).collect::<Vec<_>>()];
    for p in &paths[1..] {
        let m: BTreeMap<(String, chrono::NaiveDate), BinProbs> =
            scored(p, truth)?.into_iter().map(|s| ((s.grid_id, s.init_date), s.probs)).collect();
        let col = first
            .iter()
            .map(|s| {
                m.get(&(s.grid_id.clone(), s.init_date)).copied().ok_or_else(|| PipelineError::Stage {
                    stage: "mme".into(),
                    kind: pipeline::ErrorKind::Data,
                    message: format!("{} lacks {} {}", p.display(), s.grid_id, s.init_date),
                })
            })
            .collect::<Res<Vec<_>>>()?;
        comps.push(col);
    }
    let outcomes = first.iter().map(|s| s.outcome).collect();
    Ok((comps, outcomes))
}

fn run(cli: Cli) -> Res<()> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Synth { out } => {
            let DataSource::Synthetic(_) = cfg.data else {
                return Err(invalid("synth needs source = synthetic"));
            };
            cfg.validate()?;
            let inputs = pipeline::load_inputs(&cfg)?;
            write_atomic(&out.join("grid.csv"), |w| ingest::write_grid_csv(w, &inputs.cells))?;
            write_atomic(&out.join("rainfall.csv"), |w| ingest::write_rainfall_csv(w, &inputs.truth))?;
            write_atomic(&out.join("mok.csv"), |w| ingest::write_mok_csv(w, &inputs.mok))?;
            write_atomic(&out.join("forecasts.csv"), |w| ingest::write_forecast_csv(w, &inputs.forecasts))?;
        }
        Command::Onset(OnsetCmd::Detect { rain, grid, mok, variant, threshold, out }) => {
            let series = ingest::parse_rainfall_csv(&rain).map_err(at("ingest"))?;
            let grid = grid.as_deref().map(read_grid).transpose()?;
            let mok = match mok {
                Some(p) => ingest::parse_mok_csv(p).map_err(at("ingest"))?,
                None => BTreeMap::new(),
            };
            let variant: Option<MokPolicy> = variant.map(|v| v.parse()).transpose().map_err(at("onset"))?;
            let mut records = Vec::new();
            for s in &series {
                let c = grid.as_ref().map(|g| cell(g, &s.grid_id)).transpose()?;
                let t = match (threshold, c) {
                    (Some(t), _) => t,
                    (None, Some(c)) => c.five_day_threshold_mm,
                    (None, None) => compute_five_day_threshold(std::slice::from_ref(s), SeasonWindow::default(), None)
                        .map_err(at("onset"))?,
                };
                let policy = variant.or(c.map(|c| c.mok_policy)).unwrap_or(MokPolicy::TrueMok);
                let oc = cfg.onset.config(t, policy);
                records.extend(detect_onsets(s, &oc, &mok).map_err(at("onset"))?);
            }
            write_atomic(&out, |w| onset::write_onset_csv(w, &records))?;
        }
        Command::Onset(OnsetCmd::Forecast { forecasts, grid, model, out }) => {
            let grid = read_grid(&grid)?;
            let mut rows = Vec::new();
            for e in ingest::parse_forecast_csv(&forecasts).map_err(at("ingest"))?.iter().filter(|e| e.model_id == model) {
                let c = cell(&grid, &e.grid_id)?;
                let oc = cfg.onset.config(c.five_day_threshold_mm, cfg.raw_mok_policy);
                let probs = raw_model_bin_probs(e, &oc).map_err(at("onset"))?;
                rows.push(Prediction { grid_id: e.grid_id.clone(), init_date: e.init_date, probs });
            }
            emit_predictions(&out, &rows)?;
        }
        Command::Clim(ClimCmd::Fit { onsets, out }) => {
            let mut doys: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in read_onsets(&onsets)? {
                let v = doys.entry(r.grid_id).or_default();
                if let Some(d) = r.onset_date {
                    v.push(season_doy(d) as f64);
                }
            }
            let models = doys
                .iter()
                .map(|(g, d)| fit_climatology(g.clone(), d, cfg.kde_support, cfg.bandwidth_floor_days).map_err(at("climatology")))
                .collect::<Res<Vec<_>>>()?;
            for m in models.iter().filter(|m| m.bandwidth_fallback) {
                eprintln!("note: {} uses a fallback bandwidth ({:.6} days)", m.grid_id, m.bandwidth_days());
            }
            write_atomic(&out, |w| climatology::write_climatology_csv(w, &models))?;
        }
        Command::Clim(ClimCmd::Predict { model, occasions, evolving, out }) => {
            let clims = read_clims(&model)?;
            let text = std::fs::read_to_string(&occasions).map_err(|e| invalid(format!("{}: {e}", occasions.display())))?;
            let mut rows = Vec::new();
            for (n, line) in text.lines().enumerate().skip(1) {
                let mut f = line.split(',');
                let (Some(g), Some(d)) = (f.next(), f.next()) else { continue };
                let init = parse_iso(d.trim()).ok_or_else(|| PipelineError::Stage {
                    stage: "ingest".into(),
                    kind: pipeline::ErrorKind::Data,
                    message: format!("{} line {}: bad date `{d}`", occasions.display(), n + 1),
                })?;
                let k = clim(&clims, g.trim())?;
                let probs = if evolving { evolving_bin_probs(k, init) } else { static_bin_probs(k, init) }.map_err(at("climatology"))?;
                rows.push(Prediction { grid_id: g.trim().to_string(), init_date: init, probs });
            }
            emit_predictions(&out, &rows)?;
        }
        Command::Blend(BlendCmd::Features { forecasts, grid, clim: clim_path, onsets, out }) => {
            let grid = read_grid(&grid)?;
            let clims = read_clims(&clim_path)?;
            let truth: BTreeMap<(String, i32), Option<chrono::NaiveDate>> =
                read_onsets(&onsets)?.into_iter().map(|r| ((r.grid_id, r.year), r.onset_date)).collect();
            let mut pairs: BTreeMap<(String, chrono::NaiveDate), [Option<ForecastEnsemble>; 2]> = BTreeMap::new();
            for e in ingest::parse_forecast_csv(&forecasts).map_err(at("ingest"))? {
                let slot = if e.model_id == cfg.model_a { 0 } else if e.model_id == cfg.model_b { 1 } else { continue };
                let key = (e.grid_id.clone(), e.init_date);
                pairs.entry(key).or_default()[slot] = Some(e);
            }
            let mut rows = Vec::new();
            for ((g, init), [a, b]) in &pairs {
                let (Some(a), Some(b)) = (a, b) else { continue };
                let Some(&onset) = truth.get(&(g.clone(), chrono::Datelike::year(init))) else { continue };
                let Some(outcome) = Bin::for_onset(*init, onset) else { continue };
                let evolving = evolving_bin_probs(clim(&clims, g)?, *init).map_err(at("climatology"))?;
                let mut row = build_features(&evolving, a, b, cell(&grid, g)?.five_day_threshold_mm).map_err(at("features"))?;
                debug_assert!((0..4).all(|j| row.pi[j] == winsorize_logit(evolving[j])));
                row.outcome = Some(outcome);
                rows.push(row);
            }
            write_atomic(&out, |w| blend::write_features_csv(w, &rows))?;
        }
        Command::Blend(BlendCmd::Fit { features, out }) => {
            let rows = blend::parse_features_csv(&features).map_err(at("ingest"))?;
            let model = blend::fit_blend(&rows, cfg.ridge).map_err(at("blend"))?;
            if let Some(d) = &model.diagnostics {
                eprintln!("blend: converged in {} iterations (gradient max-norm {:.3e})", d.iterations, d.grad_norm);
            }
            write_atomic(&out, |w| blend::write_blend_model_csv(w, &model))?;
        }
        Command::Blend(BlendCmd::Predict { model, features, out }) => {
            let model = blend::parse_blend_model_csv(&model).map_err(at("ingest"))?;
            let rows: Vec<Prediction> = blend::parse_features_csv(&features)
                .map_err(at("ingest"))?
                .iter()
                .map(|r| Prediction { grid_id: r.grid_id.clone(), init_date: r.init_date, probs: blend::predict_blend(&model, r) })
                .collect();
            emit_predictions(&out, &rows)?;
        }
        Command::Calibrate(CalibrateCmd::Fit { predictions, onsets, out }) => {
            let items = scored(&predictions, &read_onsets(&onsets)?)?;
            let raw: Vec<BinProbs> = items.iter().map(|s| s.probs).collect();
            let outcomes: Vec<Bin> = items.iter().map(|s| s.outcome).collect();
            let params = baselines::platt_fit(&raw, &outcomes).map_err(at("calibrate"))?;
            for b in params.non_monotone_bins() {
                eprintln!("warning: bin {} calibration slope is not positive", b.number());
            }
            write_atomic(&out, |w| baselines::write_platt_csv(w, &params))?;
        }
        Command::Calibrate(CalibrateCmd::Apply { params, predictions, out }) => {
            let params = baselines::parse_platt_csv(&params).map_err(at("ingest"))?;
            let rows: Vec<Prediction> = read_preds(&predictions)?
                .into_iter()
                .map(|p| Prediction { probs: baselines::platt_apply(&params, &p.probs), ..p })
                .collect();
            emit_predictions(&out, &rows)?;
        }
        Command::Mme(MmeCmd::Fit { predictions, onsets, out }) => {
            let (comps, outcomes) = aligned_components(&predictions, &read_onsets(&onsets)?)?;
            let fit = baselines::optimize_mme_weights(&comps, &outcomes).map_err(at("mme"))?;
            if !fit.converged {
                eprintln!("warning: BFGS did not converge; using the best grid point");
            }
            let names: Vec<String> = predictions.iter().map(|p| stem(p)).collect();
            write_atomic(&out, |w| baselines::write_weights_csv(w, &names, &fit.weights))?;
            println!("rps {:.6}", fit.rps);
        }
        Command::Mme(MmeCmd::Apply { weights, predictions, out }) => {
            let (_, weights) = baselines::parse_weights_csv(&weights).map_err(at("ingest"))?;
            let files = predictions.iter().map(|p| read_preds(p)).collect::<Res<Vec<_>>>()?;
            let index: Vec<BTreeMap<(String, chrono::NaiveDate), BinProbs>> = files[1..]
                .iter()
                .map(|f| f.iter().map(|p| ((p.grid_id.clone(), p.init_date), p.probs)).collect())
                .collect();
            let mut rows = Vec::new();
            for p in &files[0] {
                let key = (p.grid_id.clone(), p.init_date);
                let mut probs = vec![p.probs];
                for m in &index {
                    probs.push(*m.get(&key).ok_or_else(|| PipelineError::Stage {
                        stage: "mme".into(),
                        kind: pipeline::ErrorKind::Data,
                        message: format!("component files disagree on {} {}", p.grid_id, p.init_date),
                    })?);
                }
                let q = baselines::mme_predict(&weights, &probs).map_err(at("mme"))?;
                rows.push(Prediction { grid_id: p.grid_id.clone(), init_date: p.init_date, probs: q });
            }
            emit_predictions(&out, &rows)?;
        }
        Command::Eval { predictions, reference, onsets, out, reliability } => {
            let truth = read_onsets(&onsets)?;
            let refs = scored(&reference, &truth)?;
            let ties: TiePolicy = cfg.auc_ties;
            let mut reports = Vec::new();
            for p in &predictions {
                let items = scored(p, &truth)?;
                reports.push(evaluate(&stem(p), &items, &refs, ties).map_err(at("eval"))?);
            }
            write_atomic(&out, |w| eval::write_eval_report_csv(w, &reports))?;
            if let Some(r) = reliability {
                write_atomic(&r, |w| eval::write_reliability_csv(w, &reports))?;
            }
            for r in &reports {
                println!("{:<16} n={:<6} brier={:.6} rps={:.6} auc={:.6} bss={:.6} rpss={:.6}", r.model, r.n, r.brier, r.rps, r.auc, r.bss, r.rpss);
            }
        }
        Command::Decision(DecisionCmd::Demo { seed }) => print!("{}", decision::demo_report(seed)),
        Command::Decision(DecisionCmd::Check { problems, seed, schemes }) => {
            let ps = decision::parse_problems_csv(&problems).map_err(at("ingest"))?;
            let names = ["probabilistic >= coarsened", "forecast value >= 0", "benefiting >= changed"];
            let sums = decision::check_problems(&ps, seed, schemes);
            let mut violated = false;
            for (n, s) in names.iter().zip(&sums) {
                println!("{n:<28} cases={:<5} violations={} strict={:<5} min_margin={:.6e}", s.cases, s.violations, s.strict, s.min_margin);
                violated |= s.violations > 0;
            }
            if violated {
                return Err(PipelineError::Stage {
                    stage: "decision".into(),
                    kind: pipeline::ErrorKind::Data,
                    message: "property violations found".into(),
                });
            }
        }
        Command::Run { out_dir } => {
            let mut cfg = cfg;
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            let summary = pipeline::run_pipeline(&cfg)?;
            print!("{}", summary.table());
            for f in &summary.bandwidth_fallbacks {
                eprintln!("note: {f} climatology uses a fallback bandwidth");
            }
            for d in &summary.platt_degenerate {
                eprintln!("note: {d} never varied in training; calibration passes it through");
            }
            std::io::stdout().flush().ok();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
