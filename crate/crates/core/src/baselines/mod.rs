//! Comparison models: raw ensemble onset fractions, per-bin Platt
//! calibration and fixed-weight multimodel ensembles.

mod mme;
mod platt;

pub use mme::{
    mean_rps, mme_predict, optimize_mme_weights, parse_weights_csv, read_weights_csv, write_weights_csv,
    EnsembleWeights, MmeFit,
};
pub use platt::{parse_platt_csv, platt_apply, platt_fit, read_platt_csv, write_platt_csv, PlattParams};

use crate::bins::{BinProbs, BinProbsError, NUM_BINS};
use crate::ingest::ForecastEnsemble;
use crate::onset::{detect_forecast_onset, OnsetConfig, OnsetError};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("{0} predictions vs {1} outcomes")]
    Misaligned(usize, usize),
    #[error("nothing to fit")]
    Empty,
    #[error("a multimodel ensemble needs at least 2 components, got {0}")]
    TooFewComponents(usize),
    #[error("weights {0:?} are not on the simplex")]
    InvalidWeights(Vec<f64>),
    #[error("{0}")]
    NonConvergence(String),
    #[error(transparent)]
    BinProbs(#[from] BinProbsError),
    #[error(transparent)]
    Onset(#[from] OnsetError),
}

/// Fraction of members whose forecast onset falls in each bin.
pub fn raw_model_bin_probs(ensemble: &ForecastEnsemble, config: &OnsetConfig) -> Result<BinProbs, OnsetError> {
    let mut counts = [0.0; NUM_BINS];
    for member in ensemble.members() {
        let bin = detect_forecast_onset(ensemble.init_date, member, config).map_err(|e| match e {
            OnsetError::SeriesTooShort { from, .. } => OnsetError::SeriesTooShort {
                grid_id: ensemble.grid_id.clone(),
                from,
            },
            other => other,
        })?;
        counts[bin.index()] += 1.0;
    }
    let m = ensemble.n_members() as f64;
    Ok(BinProbs::new(counts.map(|c| c / m)).expect("member fractions form a distribution"))
}
