use super::PipelineError;
use crate::climatology::DEFAULT_SUPPORT;
use crate::dates::MonthDay;
use crate::eval::TiePolicy;
use crate::ingest::synthetic::{DETERMINISTIC_MODEL, ENSEMBLE_MODEL};
use crate::ingest::SyntheticConfig;
use crate::onset::{MokPolicy, OnsetConfig};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Files {
        rainfall: PathBuf,
        forecasts: PathBuf,
        grid: PathBuf,
        mok: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CvMode {
    /// Leave one year out over every year with forecasts.
    Loocv,
    /// Fit on `train`, score on `test`.
    Split { train: BTreeSet<i32>, test: BTreeSet<i32> },
}

/// Onset-definition settings shared by all cells. The five-day threshold and
/// the truth MOK policy come from each grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetSettings {
    pub wet_day_mm: f64,
    pub spell_len_days: usize,
    pub dry_len_days: usize,
    pub dry_total_mm: f64,
    pub followup_days: usize,
    /// `None` keeps the variant's default (Apr 1, or May 1 without a filter).
    pub season_start: Option<MonthDay>,
    pub season_end: MonthDay,
}

impl Default for OnsetSettings {
    fn default() -> Self {
        let d = OnsetConfig::new(1.0);
        Self {
            wet_day_mm: d.wet_day_mm,
            spell_len_days: d.spell_len_days,
            dry_len_days: d.dry_len_days,
            dry_total_mm: d.dry_total_mm,
            followup_days: d.followup_days,
            season_start: None,
            season_end: d.season_end,
        }
    }
}

impl OnsetSettings {
    pub fn config(&self, threshold_mm: f64, policy: MokPolicy) -> OnsetConfig {
        let mut c = OnsetConfig::for_variant(threshold_mm, policy);
        c.wet_day_mm = self.wet_day_mm;
        c.spell_len_days = self.spell_len_days;
        c.dry_len_days = self.dry_len_days;
        c.dry_total_mm = self.dry_total_mm;
        c.followup_days = self.followup_days;
        if let Some(s) = self.season_start {
            c.season_start = s;
        }
        c.season_end = self.season_end;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub data: DataSource,
    /// Single-member model feeding α/β.
    pub model_a: String,
    /// Ensemble model feeding ν/μ.
    pub model_b: String,
    pub onset: OnsetSettings,
    /// MOK policy for onsets read off raw forecasts.
    pub raw_mok_policy: MokPolicy,
    pub kde_support: (f64, f64),
    pub bandwidth_floor_days: f64,
    pub ridge: f64,
    pub auc_ties: TiePolicy,
    pub cv: CvMode,
    /// Restrict every stage to these years.
    pub years: Option<BTreeSet<i32>>,
    /// Also write the rainfall/forecast inputs (useful for synthetic runs).
    pub write_inputs: bool,
    pub decision_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            data: DataSource::Synthetic(SyntheticConfig { seed: 7, ..SyntheticConfig::default() }),
            model_a: DETERMINISTIC_MODEL.into(),
            model_b: ENSEMBLE_MODEL.into(),
            onset: OnsetSettings::default(),
            raw_mok_policy: MokPolicy::RAW_MODEL_DEFAULT,
            kde_support: DEFAULT_SUPPORT,
            bandwidth_floor_days: 1.0,
            ridge: crate::blend::DEFAULT_RIDGE,
            auc_ties: TiePolicy::Half,
            cv: CvMode::Loocv,
            years: None,
            write_inputs: false,
            decision_seed: 7,
        }
    }
}

/// `1990-1999,2005` style year lists.
pub fn parse_years(s: &str) -> Result<BTreeSet<i32>, String> {
    let mut out = BTreeSet::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (a, b) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let a: i32 = a.parse().map_err(|_| format!("bad year `{a}`"))?;
        let b: i32 = b.parse().map_err(|_| format!("bad year `{b}`"))?;
        if b < a {
            return Err(format!("empty year range `{part}`"));
        }
        out.extend(a..=b);
    }
    if out.is_empty() {
        return Err("empty year list".into());
    }
    Ok(out)
}

fn format_years(years: &BTreeSet<i32>) -> String {
    let mut runs: Vec<(i32, i32)> = Vec::new();
    for &y in years {
        match runs.last_mut() {
            Some(r) if r.1 + 1 == y => r.1 = y,
            _ => runs.push((y, y)),
        }
    }
    runs.iter()
        .map(|&(a, b)| if a == b { a.to_string() } else { format!("{a}-{b}") })
        .collect::<Vec<_>>()
        .join(",")
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("`{key}`: cannot parse `{v}`"))
}

fn pair(key: &str, v: &str) -> Result<(f64, f64), String> {
    let (a, b) = v.split_once(',').ok_or_else(|| format!("`{key}` expects two comma-separated numbers"))?;
    Ok((num(key, a.trim())?, num(key, b.trim())?))
}

impl RunConfig {
    /// Parses a flat `key = value` file; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(PipelineError::Config(format!("line {}: `{k}` set twice", n + 1)));
            }
            cfg.set(k, v.trim())
                .map_err(|e| PipelineError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    fn synthetic_mut(&mut self, key: &str) -> Result<&mut SyntheticConfig, String> {
        match &mut self.data {
            DataSource::Synthetic(s) => Ok(s),
            DataSource::Files { .. } => Err(format!("`{key}` only applies to source = synthetic")),
        }
    }

    fn files_mut(&mut self) -> (&mut PathBuf, &mut PathBuf, &mut PathBuf, &mut Option<PathBuf>) {
        if let DataSource::Synthetic(_) = self.data {
            self.data = DataSource::Files {
                rainfall: PathBuf::new(),
                forecasts: PathBuf::new(),
                grid: PathBuf::new(),
                mok: None,
            };
        }
        match &mut self.data {
            DataSource::Files { rainfall, forecasts, grid, mok } => (rainfall, forecasts, grid, mok),
            DataSource::Synthetic(_) => unreachable!(),
        }
    }

    /// Sets one key; used for both the file and command-line overrides.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "out_dir" => self.out_dir = v.into(),
            "source" => match v {
                "synthetic" => {
                    if !matches!(self.data, DataSource::Synthetic(_)) {
                        self.data = DataSource::Synthetic(SyntheticConfig { seed: 7, ..SyntheticConfig::default() });
                    }
                }
                "files" => {
                    self.files_mut();
                }
                other => return Err(format!("unknown source `{other}` (synthetic or files)")),
            },
            "rainfall" => *self.files_mut().0 = v.into(),
            "forecasts" => *self.files_mut().1 = v.into(),
            "grid" => *self.files_mut().2 = v.into(),
            "mok" => *self.files_mut().3 = Some(v.into()),
            "seed" => self.synthetic_mut(key)?.seed = num(key, v)?,
            "n_years" => self.synthetic_mut(key)?.n_years = num(key, v)?,
            "n_cells" => self.synthetic_mut(key)?.n_cells = num(key, v)?,
            "start_year" => self.synthetic_mut(key)?.start_year = num(key, v)?,
            "ensemble_members" => self.synthetic_mut(key)?.ensemble_members = num(key, v)?,
            "lead_days" => self.synthetic_mut(key)?.lead_days = num(key, v)?,
            "synthetic_threshold_mm" => self.synthetic_mut(key)?.five_day_threshold_mm = num(key, v)?,
            "false_onset_prob" => self.synthetic_mut(key)?.false_onset_prob = num(key, v)?,
            "onset_spread_days" => self.synthetic_mut(key)?.onset_spread_days = num(key, v)?,
            "forecast_skill" => {
                let parts: Vec<f64> = v.split(',').map(|p| num(key, p.trim())).collect::<Result<_, _>>()?;
                let skill: [f64; 4] = parts.try_into().map_err(|_| "`forecast_skill` needs 4 values".to_string())?;
                self.synthetic_mut(key)?.forecast_skill = skill;
            }
            "model_a" => self.model_a = v.into(),
            "model_b" => self.model_b = v.into(),
            "wet_day_mm" => self.onset.wet_day_mm = num(key, v)?,
            "spell_len_days" => self.onset.spell_len_days = num(key, v)?,
            "dry_len_days" => self.onset.dry_len_days = num(key, v)?,
            "dry_total_mm" => self.onset.dry_total_mm = num(key, v)?,
            "followup_days" => self.onset.followup_days = num(key, v)?,
            "season_start" => self.onset.season_start = Some(v.parse().map_err(|e| format!("`{key}`: {e}"))?),
            "season_end" => self.onset.season_end = v.parse().map_err(|e| format!("`{key}`: {e}"))?,
            "raw_onset_variant" => self.raw_mok_policy = v.parse().map_err(|e| format!("`{key}`: {e}"))?,
            "kde_support" => self.kde_support = pair(key, v)?,
            "bandwidth_floor_days" => self.bandwidth_floor_days = num(key, v)?,
            "ridge" => self.ridge = num(key, v)?,
            "auc_ties" => self.auc_ties = v.parse()?,
            "cv" => match v {
                "loocv" => self.cv = CvMode::Loocv,
                "split" => {
                    if !matches!(self.cv, CvMode::Split { .. }) {
                        self.cv = CvMode::Split { train: BTreeSet::new(), test: BTreeSet::new() };
                    }
                }
                other => return Err(format!("unknown cv mode `{other}` (loocv or split)")),
            },
            "train_years" | "test_years" => {
                let ys = parse_years(v)?;
                if let CvMode::Loocv = self.cv {
                    self.cv = CvMode::Split { train: BTreeSet::new(), test: BTreeSet::new() };
                }
                if let CvMode::Split { train, test } = &mut self.cv {
                    *(if key == "train_years" { train } else { test }) = ys;
                }
            }
            "years" => self.years = Some(parse_years(v)?),
            "write_inputs" => self.write_inputs = num(key, v)?,
            "decision_seed" => self.decision_seed = num(key, v)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        match &self.data {
            DataSource::Synthetic(s) => s.validate().map_err(|e| PipelineError::Config(e.to_string()))?,
            DataSource::Files { rainfall, forecasts, grid, mok } => {
                for (name, p) in [("rainfall", rainfall), ("forecasts", forecasts), ("grid", grid)] {
                    if p.as_os_str().is_empty() {
                        return bad(format!("source = files needs `{name}`"));
                    }
                    if !p.exists() {
                        return bad(format!("{name} file {} does not exist", p.display()));
                    }
                }
                if let Some(m) = mok {
                    if !m.exists() {
                        return bad(format!("mok file {} does not exist", m.display()));
                    }
                }
            }
        }
        if self.model_a == self.model_b {
            return bad("model_a and model_b must differ".into());
        }
        self.onset
            .config(1.0, self.raw_mok_policy)
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.raw_mok_policy == MokPolicy::TrueMok {
            return bad("raw_onset_variant cannot be true-mok (forecasts have no observed MOK)".into());
        }
        let (lo, hi) = self.kde_support;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return bad(format!("kde_support [{lo}, {hi}] is empty"));
        }
        if !(self.bandwidth_floor_days > 0.0 && self.bandwidth_floor_days.is_finite()) {
            return bad("bandwidth_floor_days must be positive".into());
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge must be finite and nonnegative, got {}", self.ridge));
        }
        if let CvMode::Split { train, test } = &self.cv {
            if train.is_empty() || test.is_empty() {
                return bad("split mode needs both train_years and test_years".into());
            }
            if let Some(y) = train.intersection(test).next() {
                return bad(format!("year {y} is in both train_years and test_years"));
            }
        }
        Ok(())
    }

    /// Canonical `key = value` rendering (written next to the artifacts).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("out_dir", self.out_dir.display().to_string());
        match &self.data {
            DataSource::Synthetic(c) => {
                kv("source", "synthetic".into());
                kv("seed", c.seed.to_string());
                kv("n_years", c.n_years.to_string());
                kv("n_cells", c.n_cells.to_string());
                kv("start_year", c.start_year.to_string());
                kv("ensemble_members", c.ensemble_members.to_string());
                kv("lead_days", c.lead_days.to_string());
                kv("synthetic_threshold_mm", c.five_day_threshold_mm.to_string());
                kv("false_onset_prob", c.false_onset_prob.to_string());
                kv("onset_spread_days", c.onset_spread_days.to_string());
                kv("forecast_skill", c.forecast_skill.map(|v| v.to_string()).join(","));
            }
            DataSource::Files { rainfall, forecasts, grid, mok } => {
                kv("source", "files".into());
                kv("rainfall", rainfall.display().to_string());
                kv("forecasts", forecasts.display().to_string());
                kv("grid", grid.display().to_string());
                if let Some(m) = mok {
                    kv("mok", m.display().to_string());
                }
            }
        }
        kv("model_a", self.model_a.clone());
        kv("model_b", self.model_b.clone());
        kv("wet_day_mm", self.onset.wet_day_mm.to_string());
        kv("spell_len_days", self.onset.spell_len_days.to_string());
        kv("dry_len_days", self.onset.dry_len_days.to_string());
        kv("dry_total_mm", self.onset.dry_total_mm.to_string());
        kv("followup_days", self.onset.followup_days.to_string());
        if let Some(md) = self.onset.season_start {
            kv("season_start", md.to_string());
        }
        kv("season_end", self.onset.season_end.to_string());
        kv("raw_onset_variant", self.raw_mok_policy.to_string());
        kv("kde_support", format!("{},{}", self.kde_support.0, self.kde_support.1));
        kv("bandwidth_floor_days", self.bandwidth_floor_days.to_string());
        kv("ridge", self.ridge.to_string());
        kv("auc_ties", self.auc_ties.to_string());
        match &self.cv {
            CvMode::Loocv => kv("cv", "loocv".into()),
            CvMode::Split { train, test } => {
                kv("cv", "split".into());
                kv("train_years", format_years(train));
                kv("test_years", format_years(test));
            }
        }
        if let Some(y) = &self.years {
            kv("years", format_years(y));
        }
        kv("write_inputs", self.write_inputs.to_string());
        kv("decision_seed", self.decision_seed.to_string());
        s
    }
}
