use super::{BlendError, FeatureRow};
use crate::bins::{BinProbs, BIN_DAYS};
use crate::ingest::ForecastEnsemble;

/// Probabilities are clamped into this range before the logit.
pub const LOGIT_CLAMP: (f64, f64) = (1e-4, 0.99);

const SPELL_DAYS: usize = 5;
const DRY_DAYS: usize = 10;

/// `ln(q / (1 - q))` with `q = clamp(p, 0.0001, 0.99)`.
pub fn winsorize_logit(p: f64) -> f64 {
    let q = p.clamp(LOGIT_CLAMP.0, LOGIT_CLAMP.1);
    (q / (1.0 - q)).ln()
}

/// Extreme `width`-day total over windows starting on a lead day in bin
/// `bin` (1-based) and ending within the horizon.
fn window_extreme(
    daily: &[f64],
    bin: usize,
    width: usize,
    pick: fn(f64, f64) -> f64,
) -> Result<f64, BlendError> {
    let first = (bin - 1) * BIN_DAYS as usize; // 0-based index of the bin's first day
    let last = bin * BIN_DAYS as usize - 1;
    let mut best: Option<f64> = None;
    for s in first..=last {
        if s + width > daily.len() {
            break;
        }
        let total: f64 = daily[s..s + width].iter().sum();
        best = Some(best.map_or(total, |b| pick(b, total)));
    }
    best.ok_or(BlendError::LeadWindowExceedsHorizon {
        bin,
        window_days: width,
        lead_days: daily.len(),
    })
}

/// Feature row for one forecast. `ens_a`, `ens_b` are collapsed to their
/// member means; 5-day maxima are reported relative to `threshold_mm`,
/// 10-day minima as plain totals.
pub fn build_features(
    evolving: &BinProbs,
    ens_a: &ForecastEnsemble,
    ens_b: &ForecastEnsemble,
    threshold_mm: f64,
) -> Result<FeatureRow, BlendError> {
    build_features_with_offset(evolving, ens_a, ens_b, threshold_mm, 0.0)
}

/// [`build_features`] with `dry_offset_mm` subtracted from the 10-day minima.
pub fn build_features_with_offset(
    evolving: &BinProbs,
    ens_a: &ForecastEnsemble,
    ens_b: &ForecastEnsemble,
    threshold_mm: f64,
    dry_offset_mm: f64,
) -> Result<FeatureRow, BlendError> {
    if ens_a.init_date != ens_b.init_date || ens_a.grid_id != ens_b.grid_id {
        return Err(BlendError::MismatchedForecasts(format!(
            "{} {} vs {} {}",
            ens_a.grid_id, ens_a.init_date, ens_b.grid_id, ens_b.init_date
        )));
    }
    let mean_a = ens_a.mean_by_lead();
    let mean_b = ens_b.mean_by_lead();
    let mut row = FeatureRow {
        grid_id: ens_a.grid_id.clone(),
        init_date: ens_a.init_date,
        pi: [0.0; 4],
        alpha: [0.0; 4],
        nu: [0.0; 4],
        beta: [0.0; 4],
        mu: [0.0; 4],
        outcome: None,
    };
    for j in 0..4 {
        row.pi[j] = winsorize_logit(evolving[j]);
        row.alpha[j] = window_extreme(&mean_a, j + 1, SPELL_DAYS, f64::max)? - threshold_mm;
        row.nu[j] = window_extreme(&mean_b, j + 1, SPELL_DAYS, f64::max)? - threshold_mm;
        row.beta[j] = window_extreme(&mean_a, j + 1, DRY_DAYS, f64::min)? - dry_offset_mm;
        row.mu[j] = window_extreme(&mean_b, j + 1, DRY_DAYS, f64::min)? - dry_offset_mm;
    }
    Ok(row)
}
