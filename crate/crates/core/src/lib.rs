//! Rainy-season onset forecasting.
//!
//! The crate covers the whole chain from daily rainfall to verified weekly
//! onset probabilities:
//!
//! 1. [`ingest`]: CSV readers/writers and a seeded synthetic world.
//! 2. [`onset`]: modified Moron-Robertson onset detection on observed and
//!    forecast rainfall.
//! 3. [`climatology`]: Gaussian KDE of past onset dates (Sheather-Jones
//!    bandwidth), static and evolving-expectations weekly bin probabilities.
//! 4. [`blend`]: the feature set and multinomial-logit blended model.
//! 5. [`baselines`]: raw ensemble probabilities, Platt calibration and the
//!    fixed-weight multimodel ensemble.
//! 6. [`eval`]: Brier, RPS, AUC, skill scores, reliability and
//!    leave-one-year-out cross-validation.
//! 7. [`decision`]: finite decision problems and value-of-information checks.
//! 8. [`pipeline`]: config-driven end-to-end runs used by the CLI.
//!
//! Data-parallel loops (cross-validation folds, grid searches, likelihood
//! sums, Monte Carlo sweeps) go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Every
//! reduction is performed in a fixed order, so results do not depend on the
//! thread count.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod bins;
pub mod blend;
pub mod climatology;
pub mod dates;
pub mod decision;
pub mod eval;
pub mod ingest;
pub mod onset;
pub mod optim;
pub mod par;
pub mod pipeline;
pub mod predictions;

pub use bins::{Bin, BinProbs, NUM_BINS};
