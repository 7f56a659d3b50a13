//! Onset-date climatology: a Gaussian KDE over past onset days, truncated to
//! the season, and the weekly bin probabilities derived from it.
//!
//! Days are continuous on the 365-day calendar; integer day `k` covers
//! `[k - 0.5, k + 0.5)`. For an init on day `i`, bin `j` (1..=4) covers
//! `[i + 0.5 + 7(j-1), i + 0.5 + 7j)`.

mod bandwidth;

pub use bandwidth::{sheather_jones_bandwidth, silverman_bandwidth, Bandwidth};

use crate::bins::{BinProbs, BinProbsError, BIN_DAYS, NUM_BINS};
use crate::dates::season_doy;
use crate::ingest::csvio::{checked_reader, field, line_of, num_field, open};
use crate::ingest::IngestError;
use chrono::NaiveDate;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{Read, Write};
use std::path::Path;

/// April 1 through October 31 as continuous day-of-year bounds.
pub const DEFAULT_SUPPORT: (f64, f64) = (90.5, 304.5);

#[derive(Debug, thiserror::Error)]
pub enum ClimError {
    #[error("need at least 2 onset dates, got {0}")]
    TooFewPoints(usize),
    #[error("all onset dates are identical; supply a floor bandwidth")]
    DegenerateSample,
    #[error("onset dates must be finite")]
    NonFinite,
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("invalid support [{0}, {1}]")]
    InvalidSupport(f64, f64),
    #[error("no climatological mass after {0}; stop issuing forecasts")]
    ZeroSurvival(NaiveDate),
    #[error(transparent)]
    BinProbs(#[from] BinProbsError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Anything that can report the probability of onset in a day interval.
pub trait OnsetDistribution {
    /// `P(a < onset <= b)` in continuous day-of-year units.
    fn prob_between(&self, a: f64, b: f64) -> f64;
}

fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

fn lower_tail(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Normal(0, 1) mass between standardized points `za <= zb`, computed from
/// whichever tail keeps full relative precision.
fn normal_mass(za: f64, zb: f64) -> f64 {
    if za >= 0.0 {
        upper_tail(za) - upper_tail(zb)
    } else if zb <= 0.0 {
        lower_tail(zb) - lower_tail(za)
    } else {
        1.0 - lower_tail(za) - upper_tail(zb)
    }
}

/// Gaussian KDE of onset days, truncated to `support` and renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ClimatologyKde {
    pub grid_id: String,
    onset_doys: Vec<f64>,
    bandwidth_days: f64,
    support: (f64, f64),
    /// Bandwidth came from the Silverman fallback or a caller floor.
    pub bandwidth_fallback: bool,
    /// Untruncated mixture mass inside the support.
    z: f64,
}

/// Builds the KDE. A single point is allowed here; bandwidth selection
/// needs two.
pub fn fit_kde(
    grid_id: impl Into<String>,
    onset_doys: &[f64],
    bandwidth_days: f64,
    support: (f64, f64),
) -> Result<ClimatologyKde, ClimError> {
    if onset_doys.is_empty() {
        return Err(ClimError::TooFewPoints(0));
    }
    if onset_doys.iter().any(|d| !d.is_finite()) {
        return Err(ClimError::NonFinite);
    }
    if !(bandwidth_days > 0.0 && bandwidth_days.is_finite()) {
        return Err(ClimError::InvalidBandwidth(bandwidth_days));
    }
    let (lo, hi) = support;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(ClimError::InvalidSupport(lo, hi));
    }
    let mut kde = ClimatologyKde {
        grid_id: grid_id.into(),
        onset_doys: onset_doys.to_vec(),
        bandwidth_days,
        support,
        bandwidth_fallback: false,
        z: 1.0,
    };
    kde.z = kde.raw_mass(lo, hi);
    if !(kde.z > 0.0) {
        return Err(ClimError::InvalidSupport(lo, hi));
    }
    Ok(kde)
}

/// Sheather-Jones bandwidth (or Silverman fallback), floored at
/// `floor_days`, then [`fit_kde`]. A degenerate sample uses the floor.
pub fn fit_climatology(
    grid_id: impl Into<String>,
    onset_doys: &[f64],
    support: (f64, f64),
    floor_days: f64,
) -> Result<ClimatologyKde, ClimError> {
    let (sigma, fallback) = match sheather_jones_bandwidth(onset_doys) {
        Ok(bw) if bw.sigma >= floor_days => (bw.sigma, bw.fallback),
        Ok(_) | Err(ClimError::DegenerateSample) => (floor_days, true),
        Err(e) => return Err(e),
    };
    let mut kde = fit_kde(grid_id, onset_doys, sigma, support)?;
    kde.bandwidth_fallback = fallback;
    Ok(kde)
}

impl ClimatologyKde {
    pub fn onset_doys(&self) -> &[f64] {
        &self.onset_doys
    }

    pub fn bandwidth_days(&self) -> f64 {
        self.bandwidth_days
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Mixture mass in `[a, b]`, clipped to the support, before
    /// renormalization.
    fn raw_mass(&self, a: f64, b: f64) -> f64 {
        let a = a.max(self.support.0);
        let b = b.min(self.support.1);
        if a >= b {
            return 0.0;
        }
        let s = self.bandwidth_days;
        let total: f64 = self
            .onset_doys
            .iter()
            .map(|&d| normal_mass((a - d) / s, (b - d) / s))
            .sum();
        total / self.onset_doys.len() as f64
    }

    /// Log density; `-inf` outside the support. Uses log-sum-exp so far
    /// tails stay positive.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < self.support.0 || x > self.support.1 {
            return f64::NEG_INFINITY;
        }
        let s = self.bandwidth_days;
        let terms: Vec<f64> = self.onset_doys.iter().map(|&d| -0.5 * ((x - d) / s).powi(2)).collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
        lse - (self.onset_doys.len() as f64).ln() - (s * (2.0 * PI).sqrt()).ln() - self.z.ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.raw_mass(self.support.0, x) / self.z
    }
}

impl OnsetDistribution for ClimatologyKde {
    fn prob_between(&self, a: f64, b: f64) -> f64 {
        self.raw_mass(a, b) / self.z
    }
}

/// Bin edges for an init on continuous day `init_doy`.
fn bin_edges(init_doy: f64) -> [f64; 5] {
    std::array::from_fn(|j| init_doy + 0.5 + (j as i64 * BIN_DAYS) as f64)
}

/// Masses of bins 1-4, the mass after bin 4, and the mass on or before the
/// init day.
fn bin_masses<D: OnsetDistribution + ?Sized>(dist: &D, init_doy: f64) -> ([f64; 4], f64, f64) {
    let e = bin_edges(init_doy);
    let weeks = std::array::from_fn(|j| dist.prob_between(e[j], e[j + 1]));
    let later = dist.prob_between(e[4], f64::INFINITY);
    let before = dist.prob_between(f64::NEG_INFINITY, e[0]);
    (weeks, later, before)
}

/// Unconditional weekly probabilities. Mass on or before the init day goes
/// to the "later" bin together with mass after week 4.
pub fn static_bin_probs<D: OnsetDistribution + ?Sized>(
    dist: &D,
    init_date: NaiveDate,
) -> Result<BinProbs, ClimError> {
    static_bin_probs_doy(dist, season_doy(init_date) as f64)
}

pub fn static_bin_probs_doy<D: OnsetDistribution + ?Sized>(
    dist: &D,
    init_doy: f64,
) -> Result<BinProbs, ClimError> {
    let (weeks, later, before) = bin_masses(dist, init_doy);
    let mut p = [0.0; NUM_BINS];
    p[..4].copy_from_slice(&weeks);
    p[4] = later + before;
    Ok(BinProbs::new(p.map(|v| v.clamp(0.0, 1.0)))?)
}

/// Evolving-expectations probabilities: the climatology conditioned on no
/// onset through the init day.
pub fn evolving_bin_probs<D: OnsetDistribution + ?Sized>(
    dist: &D,
    init_date: NaiveDate,
) -> Result<BinProbs, ClimError> {
    evolving_bin_probs_doy(dist, season_doy(init_date) as f64).map_err(|e| match e {
        ClimError::ZeroSurvival(_) => ClimError::ZeroSurvival(init_date),
        other => other,
    })
}

pub fn evolving_bin_probs_doy<D: OnsetDistribution + ?Sized>(
    dist: &D,
    init_doy: f64,
) -> Result<BinProbs, ClimError> {
    let (weeks, later, _) = bin_masses(dist, init_doy);
    let survival = weeks.iter().sum::<f64>() + later;
    if !(survival > 0.0) {
        return Err(ClimError::ZeroSurvival(NaiveDate::MIN));
    }
    let mut p = [0.0; NUM_BINS];
    for (pj, w) in p.iter_mut().zip(weeks) {
        *pj = w / survival;
    }
    p[4] = later / survival;
    Ok(BinProbs::new(p.map(|v| v.clamp(0.0, 1.0)))?)
}

/// `P(onset after the init day)`.
pub fn survival<D: OnsetDistribution + ?Sized>(dist: &D, init_doy: f64) -> f64 {
    let (weeks, later, _) = bin_masses(dist, init_doy);
    weeks.iter().sum::<f64>() + later
}

const MODEL_HEADER: [&str; 6] = ["grid_id", "bandwidth_days", "support_lo", "support_hi", "fallback", "onset_doys"];

/// One row per grid cell; onset days are space-separated.
pub fn write_climatology_csv<W: Write>(out: W, models: &[ClimatologyKde]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MODEL_HEADER)?;
    for m in models {
        let doys: Vec<String> = m.onset_doys.iter().map(|d| d.to_string()).collect();
        w.write_record([
            m.grid_id.clone(),
            m.bandwidth_days.to_string(),
            m.support.0.to_string(),
            m.support.1.to_string(),
            m.bandwidth_fallback.to_string(),
            doys.join(" "),
        ])?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

pub fn parse_climatology_csv(path: impl AsRef<Path>) -> Result<Vec<ClimatologyKde>, ClimError> {
    read_climatology_csv(open(path.as_ref())?)
}

pub fn read_climatology_csv<R: Read>(input: R) -> Result<Vec<ClimatologyKde>, ClimError> {
    let mut rdr = checked_reader(input, &MODEL_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(IngestError::from)?;
        let malformed = |reason: String| IngestError::MalformedRow { line: line_of(&rec), reason };
        let doys = field(&rec, 5, "onset_doys")?
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| malformed(format!("bad onset day `{s}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let fallback: bool = num_field(&rec, 4, "fallback")?;
        let mut kde = fit_kde(
            field(&rec, 0, "grid_id")?,
            &doys,
            num_field(&rec, 1, "bandwidth_days")?,
            (num_field(&rec, 2, "support_lo")?, num_field(&rec, 3, "support_hi")?),
        )?;
        kde.bandwidth_fallback = fallback;
        out.push(kde);
    }
    Ok(out)
}
