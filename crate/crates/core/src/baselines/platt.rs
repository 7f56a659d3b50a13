use super::BaselineError;
use crate::bins::{Bin, BinProbs, NUM_BINS};
use crate::blend::winsorize_logit;
use crate::ingest::csvio::{checked_reader, num_field, open};
use crate::ingest::IngestError;
use crate::optim::{self, Derivatives, Options};
use nalgebra::DMatrix;
use std::io::{Read, Write};
use std::path::Path;

/// Ridge on `(a, b)`, relative to the summed log-likelihood. Keeps fits
/// finite on separable bins (0/1 deterministic inputs) without visible bias.
const PLATT_RIDGE: f64 = 1e-3;

/// Per-bin calibration `sigmoid(a_j * s + b_j)` with `s` the winsorized
/// logit of the raw probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PlattParams {
    pub a: [f64; NUM_BINS],
    pub b: [f64; NUM_BINS],
    /// Bins that never or always occurred in training; these pass through
    /// as `(1, 0)`.
    pub degenerate: [bool; NUM_BINS],
}

impl PlattParams {
    pub fn identity() -> Self {
        Self {
            a: [1.0; NUM_BINS],
            b: [0.0; NUM_BINS],
            degenerate: [false; NUM_BINS],
        }
    }

    /// Bins whose slope is not positive (calibration reverses the ranking).
    pub fn non_monotone_bins(&self) -> Vec<Bin> {
        (0..NUM_BINS).filter(|&j| self.a[j] <= 0.0).map(Bin::from_index).collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Penalized logistic fit of `y` on `s`; returns `(a, b)`.
fn logistic_fit(s: &[f64], y: &[f64]) -> Result<(f64, f64), BaselineError> {
    let n = s.len() as f64;
    let value = |th: &[f64]| {
        let nll: f64 = s
            .iter()
            .zip(y)
            .map(|(&si, &yi)| {
                let z = th[0] * si + th[1];
                // log(1 + e^z) - y z, stable on both tails
                z.max(0.0) + (-z.abs()).exp().ln_1p() - yi * z
            })
            .sum();
        (nll + PLATT_RIDGE * (th[0] * th[0] + th[1] * th[1])) / n
    };
    let derivs = |th: &[f64]| {
        let (mut g, mut h) = ([0.0; 2], [0.0; 3]);
        for (&si, &yi) in s.iter().zip(y) {
            let p = sigmoid(th[0] * si + th[1]);
            let w = p * (1.0 - p);
            g[0] += (p - yi) * si;
            g[1] += p - yi;
            h[0] += w * si * si;
            h[1] += w * si;
            h[2] += w;
        }
        let r = 2.0 * PLATT_RIDGE;
        Derivatives {
            value: value(th),
            gradient: vec![(g[0] + r * th[0]) / n, (g[1] + r * th[1]) / n],
            hessian: DMatrix::from_row_slice(2, 2, &[h[0] + r, h[1], h[1], h[2] + r]) / n,
        }
    };
    let m = optim::newton(derivs, value, &[1.0, 0.0], Options::default());
    if !m.converged {
        return Err(BaselineError::NonConvergence(format!(
            "Platt fit stopped at gradient max-norm {:.3e}",
            m.grad_norm
        )));
    }
    Ok((m.x[0], m.x[1]))
}

pub fn platt_fit(raw: &[BinProbs], outcomes: &[Bin]) -> Result<PlattParams, BaselineError> {
    if raw.len() != outcomes.len() {
        return Err(BaselineError::Misaligned(raw.len(), outcomes.len()));
    }
    if raw.is_empty() {
        return Err(BaselineError::Empty);
    }
    let mut params = PlattParams::identity();
    for j in 0..NUM_BINS {
        let y: Vec<f64> = outcomes.iter().map(|o| if o.index() == j { 1.0 } else { 0.0 }).collect();
        let pos = y.iter().filter(|&&v| v == 1.0).count();
        if pos == 0 || pos == y.len() {
            params.degenerate[j] = true;
            continue;
        }
        let s: Vec<f64> = raw.iter().map(|p| winsorize_logit(p[j])).collect();
        let (a, b) = logistic_fit(&s, &y)?;
        params.a[j] = a;
        params.b[j] = b;
    }
    Ok(params)
}

/// Calibrates each bin, then renormalizes the vector.
pub fn platt_apply(params: &PlattParams, raw: &BinProbs) -> BinProbs {
    let q: [f64; NUM_BINS] = std::array::from_fn(|j| {
        let s = winsorize_logit(raw[j]);
        sigmoid(params.a[j] * s + params.b[j]).max(f64::MIN_POSITIVE)
    });
    BinProbs::normalized(q).expect("sigmoid outputs are positive")
}

const HEADER: [&str; 4] = ["bin", "a", "b", "degenerate"];

pub fn write_platt_csv<W: Write>(out: W, params: &PlattParams) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for j in 0..NUM_BINS {
        w.write_record([
            (j + 1).to_string(),
            format!("{:.11e}", params.a[j]),
            format!("{:.11e}", params.b[j]),
            params.degenerate[j].to_string(),
        ])?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

pub fn parse_platt_csv(path: impl AsRef<Path>) -> Result<PlattParams, IngestError> {
    read_platt_csv(open(path.as_ref())?)
}

pub fn read_platt_csv<R: Read>(input: R) -> Result<PlattParams, IngestError> {
    let mut rdr = checked_reader(input, &HEADER)?;
    let mut params = PlattParams::identity();
    let mut seen = [false; NUM_BINS];
    for rec in rdr.records() {
        let rec = rec?;
        let bin: u8 = num_field(&rec, 0, "bin")?;
        let j = Bin::new(bin)
            .ok_or_else(|| IngestError::Invalid(format!("Platt bin {bin} out of range")))?
            .index();
        params.a[j] = num_field(&rec, 1, "a")?;
        params.b[j] = num_field(&rec, 2, "b")?;
        params.degenerate[j] = num_field(&rec, 3, "degenerate")?;
        seen[j] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(IngestError::Invalid("Platt file must list all five bins".into()));
    }
    Ok(params)
}
