use super::BaselineError;
use crate::bins::{Bin, BinProbs, NUM_BINS};
use crate::eval::rps_single;
use crate::ingest::csvio::{checked_reader, field, num_field, open};
use crate::ingest::IngestError;
use crate::optim::{self, Options};
use crate::par;
use std::io::{Read, Write};
use std::path::Path;

const GRID_STEPS: usize = 10;
/// Offset so zero grid weights start BFGS at a finite logit.
const LOGIT_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights {
    pub w: Vec<f64>,
}

impl EnsembleWeights {
    pub fn new(w: Vec<f64>) -> Result<Self, BaselineError> {
        let s: f64 = w.iter().sum();
        if w.is_empty() || w.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(BaselineError::InvalidWeights(w));
        }
        Ok(Self { w })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmeFit {
    pub weights: EnsembleWeights,
    /// Mean RPS of the weighted forecasts on the fitting set.
    pub rps: f64,
    /// Best grid point and its RPS.
    pub grid_weights: EnsembleWeights,
    pub grid_rps: f64,
    /// False when BFGS did not converge and the grid point was returned.
    pub converged: bool,
}

/// Convex combination of component forecasts.
pub fn mme_predict(weights: &EnsembleWeights, probs: &[BinProbs]) -> Result<BinProbs, BaselineError> {
    if probs.len() != weights.w.len() {
        return Err(BaselineError::Misaligned(weights.w.len(), probs.len()));
    }
    let mut p = [0.0; NUM_BINS];
    for (w, q) in weights.w.iter().zip(probs) {
        for (pj, qj) in p.iter_mut().zip(q.as_array()) {
            *pj += w * qj;
        }
    }
    Ok(BinProbs::new(p.map(|v| v.clamp(0.0, 1.0)))?)
}

/// All compositions of `total` into `k` nonnegative parts, lexicographic.
fn compositions(k: usize, total: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(k - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

struct Problem<'a> {
    components: &'a [Vec<BinProbs>],
    outcomes: &'a [Bin],
}

impl Problem<'_> {
    fn mix(&self, w: &[f64], i: usize) -> [f64; NUM_BINS] {
        let mut p = [0.0; NUM_BINS];
        for (wk, comp) in w.iter().zip(self.components) {
            for (pj, qj) in p.iter_mut().zip(comp[i].as_array()) {
                *pj += wk * qj;
            }
        }
        p
    }

    fn rps(&self, w: &[f64]) -> f64 {
        let n = self.outcomes.len();
        let total: f64 = (0..n)
            .map(|i| {
                let p = self.mix(w, i);
                let cum = cumulate(&p);
                (0..NUM_BINS).map(|k| (cum[k] - observed(self.outcomes[i], k)).powi(2)).sum::<f64>()
            })
            .sum();
        total / n as f64
    }

    /// RPS and its gradient with respect to the weights.
    fn rps_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let n = self.outcomes.len();
        let mut g = vec![0.0; w.len()];
        let mut total = 0.0;
        for i in 0..n {
            let cum = cumulate(&self.mix(w, i));
            let resid: [f64; NUM_BINS] = std::array::from_fn(|k| cum[k] - observed(self.outcomes[i], k));
            total += resid.iter().map(|r| r * r).sum::<f64>();
            for (gm, comp) in g.iter_mut().zip(self.components) {
                let cm = comp[i].cumulative();
                *gm += 2.0 * resid.iter().zip(&cm).map(|(r, c)| r * c).sum::<f64>();
            }
        }
        let nf = n as f64;
        (total / nf, g.into_iter().map(|v| v / nf).collect())
    }
}

fn cumulate(p: &[f64; NUM_BINS]) -> [f64; NUM_BINS] {
    let mut c = [0.0; NUM_BINS];
    let mut acc = 0.0;
    for (ck, pk) in c.iter_mut().zip(p) {
        acc += pk;
        *ck = acc;
    }
    c
}

fn observed(outcome: Bin, k: usize) -> f64 {
    if outcome.index() <= k {
        1.0
    } else {
        0.0
    }
}

fn softmax(theta: &[f64]) -> Vec<f64> {
    let m = theta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = theta.iter().map(|t| (t - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Post-hoc weights minimizing mean RPS (equivalently maximizing RPSS
/// against any fixed reference): a 10%-step grid over the simplex, then
/// BFGS on softmax logits from the best grid point. The BFGS result is kept
/// only if it strictly improves on the grid.
pub fn optimize_mme_weights(components: &[Vec<BinProbs>], outcomes: &[Bin]) -> Result<MmeFit, BaselineError> {
    let k = components.len();
    if k < 2 {
        return Err(BaselineError::TooFewComponents(k));
    }
    if outcomes.is_empty() {
        return Err(BaselineError::Empty);
    }
    for c in components {
        if c.len() != outcomes.len() {
            return Err(BaselineError::Misaligned(c.len(), outcomes.len()));
        }
    }
    let problem = Problem { components, outcomes };

    let grid = compositions(k, GRID_STEPS);
    let scores = par::map(&grid, |c| {
        let w: Vec<f64> = c.iter().map(|&v| v as f64 / GRID_STEPS as f64).collect();
        problem.rps(&w)
    });
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    let grid_w: Vec<f64> = grid[best].iter().map(|&v| v as f64 / GRID_STEPS as f64).collect();
    let grid_rps = scores[best];

    let theta0: Vec<f64> = grid_w.iter().map(|w| (w + LOGIT_EPS).ln()).collect();
    let m = optim::bfgs(
        |theta, grad| {
            let w = softmax(theta);
            let (f, gw) = problem.rps_grad(&w);
            let mean: f64 = w.iter().zip(&gw).map(|(a, b)| a * b).sum();
            for l in 0..theta.len() {
                grad[l] = w[l] * (gw[l] - mean);
            }
            f
        },
        &theta0,
        Options::default(),
    );
    let grid_weights = EnsembleWeights::new(grid_w.clone())?;
    if !m.converged {
        return Ok(MmeFit {
            weights: grid_weights.clone(),
            rps: grid_rps,
            grid_weights,
            grid_rps,
            converged: false,
        });
    }
    let w_bfgs = softmax(&m.x);
    let rps_bfgs = problem.rps(&w_bfgs);
    let (weights, rps) = if rps_bfgs < grid_rps {
        (EnsembleWeights::new(w_bfgs)?, rps_bfgs)
    } else {
        (grid_weights.clone(), grid_rps)
    };
    Ok(MmeFit { weights, rps, grid_weights, grid_rps, converged: true })
}

/// Mean RPS of a single component (helper for comparisons).
pub fn mean_rps(probs: &[BinProbs], outcomes: &[Bin]) -> f64 {
    probs.iter().zip(outcomes).map(|(p, &o)| rps_single(p, o)).sum::<f64>() / probs.len() as f64
}

const HEADER: [&str; 2] = ["component", "weight"];

pub fn write_weights_csv<W: Write>(out: W, names: &[String], weights: &EnsembleWeights) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for (name, v) in names.iter().zip(&weights.w) {
        w.write_record([name.clone(), format!("{v:.11e}")])?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

pub fn parse_weights_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, EnsembleWeights), IngestError> {
    read_weights_csv(open(path.as_ref())?)
}

/// Weights are renormalized after parsing to absorb print rounding.
pub fn read_weights_csv<R: Read>(input: R) -> Result<(Vec<String>, EnsembleWeights), IngestError> {
    let mut rdr = checked_reader(input, &HEADER)?;
    let (mut names, mut w) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        names.push(field(&rec, 0, "component")?.to_string());
        w.push(num_field::<f64>(&rec, 1, "weight")?);
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(IngestError::Invalid(format!("weights sum to {s}, expected 1")));
    }
    let w = w.into_iter().map(|v| v / s).collect();
    let weights = EnsembleWeights::new(w).map_err(|e| IngestError::Invalid(e.to_string()))?;
    Ok((names, weights))
}
