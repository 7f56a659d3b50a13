//! Multinomial logit over the five bins with bin 5 as reference:
//!
//! ```text
//! log P(j') / P(5) = sum_j sum_l t[l][j][j'] * x[l][j]
//! ```
//!
//! with `x[0][j] = 1` and the nine features of [`TERMS`]. The per-`j`
//! intercepts are not separately identifiable, so the fit estimates one
//! intercept per outcome and reports it split evenly over the four `j`.
//!
//! Fitting happens on standardized base features (interactions are products
//! of standardized factors); the result is folded back exactly into raw `t`.

use super::{BlendError, FeatureRow};
use crate::bins::{Bin, BinProbs, NUM_BINS};
use crate::optim::{self, Derivatives, Options};
use crate::par;
use nalgebra::DMatrix;

/// Base features per lead bin: pi, alpha, nu, beta, mu.
pub const N_BASE: usize = 5;
pub const BASE_NAMES: [&str; N_BASE] = ["pi", "alpha", "nu", "beta", "mu"];

/// Model terms as bitmasks over [`BASE_NAMES`]; term 0 is the intercept.
pub const TERMS: [(&str, u8); 10] = [
    ("const", 0b00000),
    ("pi", 0b00001),
    ("alpha", 0b00010),
    ("nu", 0b00100),
    ("pi_alpha", 0b00011),
    ("pi_nu", 0b00101),
    ("alpha_nu", 0b00110),
    ("pi_alpha_nu", 0b00111),
    ("beta", 0b01000),
    ("mu", 0b10000),
];
pub const N_TERMS: usize = TERMS.len();
/// Non-reference outcome classes.
pub const N_CLASSES: usize = NUM_BINS - 1;
pub const N_LEADS: usize = 4;
/// Standardized design width: intercept plus nine terms per lead bin.
pub const DESIGN_DIM: usize = 1 + N_LEADS * (N_TERMS - 1);
pub const N_PARAMS: usize = N_CLASSES * DESIGN_DIM;

/// Raw coefficients, indexed `t[term][lead bin j - 1][outcome j' - 1]`.
pub type Coefficients = [[[f64; N_CLASSES]; N_LEADS]; N_TERMS];

fn term_of_mask(mask: u8) -> usize {
    TERMS.iter().position(|&(_, m)| m == mask).expect("subsets of model terms are model terms")
}

/// Per-lead-bin, per-base-feature centering and scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub mean: [[f64; N_BASE]; N_LEADS],
    pub scale: [[f64; N_BASE]; N_LEADS],
}

impl Standardization {
    /// Population mean and standard deviation; a constant feature gets
    /// scale 1.
    pub fn fit(rows: &[FeatureRow]) -> Self {
        let n = rows.len() as f64;
        let mut mean = [[0.0; N_BASE]; N_LEADS];
        let mut scale = [[1.0; N_BASE]; N_LEADS];
        for j in 0..N_LEADS {
            for k in 0..N_BASE {
                let m = rows.iter().map(|r| r.base(j)[k]).sum::<f64>() / n;
                let var = rows.iter().map(|r| (r.base(j)[k] - m).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                mean[j][k] = m;
                if sd > 1e-12 * (1.0 + m.abs()) {
                    scale[j][k] = sd;
                }
            }
        }
        Self { mean, scale }
    }

    pub fn identity() -> Self {
        Self {
            mean: [[0.0; N_BASE]; N_LEADS],
            scale: [[1.0; N_BASE]; N_LEADS],
        }
    }

    /// Standardized design vector of a row.
    pub fn design(&self, row: &FeatureRow) -> [f64; DESIGN_DIM] {
        let mut d = [0.0; DESIGN_DIM];
        d[0] = 1.0;
        for j in 0..N_LEADS {
            let x = row.base(j);
            let z: [f64; N_BASE] = std::array::from_fn(|k| (x[k] - self.mean[j][k]) / self.scale[j][k]);
            for (l, &(_, mask)) in TERMS.iter().enumerate().skip(1) {
                d[1 + j * (N_TERMS - 1) + l - 1] = product(&z, mask);
            }
        }
        d
    }
}

fn product(values: &[f64; N_BASE], mask: u8) -> f64 {
    (0..N_BASE).filter(|k| mask & (1 << k) != 0).map(|k| values[k]).product()
}

/// Re-expresses per-lead term coefficients after substituting each base
/// feature `x_k` by `a_k * y_k + b_k`. Returns the total constant and the
/// non-constant coefficients per lead bin.
fn reexpress(
    coef: &[[f64; N_TERMS]; N_LEADS],
    a: &[[f64; N_BASE]; N_LEADS],
    b: &[[f64; N_BASE]; N_LEADS],
) -> (f64, [[f64; N_TERMS]; N_LEADS]) {
    let mut out = [[0.0; N_TERMS]; N_LEADS];
    let mut constant = 0.0;
    for j in 0..N_LEADS {
        constant += coef[j][0];
        for (l, &(_, s)) in TERMS.iter().enumerate().skip(1) {
            let c = coef[j][l];
            // Every subset T of S picks a_k for k in T and b_k for k in S \ T.
            let mut t = s;
            loop {
                let f: f64 = (0..N_BASE)
                    .filter(|k| s & (1 << k) != 0)
                    .map(|k| if t & (1 << k) != 0 { a[j][k] } else { b[j][k] })
                    .product();
                if t == 0 {
                    constant += c * f;
                    break;
                }
                out[j][term_of_mask(t)] += c * f;
                t = (t - 1) & s;
            }
        }
    }
    (constant, out)
}

/// Standardized parameter vector (class-major) to raw coefficients.
fn destandardize(c: &[f64], std: &Standardization) -> Coefficients {
    let a = std.scale.map(|r| r.map(|s| 1.0 / s));
    let b: [[f64; N_BASE]; N_LEADS] =
        std::array::from_fn(|j| std::array::from_fn(|k| -std.mean[j][k] / std.scale[j][k]));
    let mut t = [[[0.0; N_CLASSES]; N_LEADS]; N_TERMS];
    for k in 0..N_CLASSES {
        let ck = &c[k * DESIGN_DIM..(k + 1) * DESIGN_DIM];
        let mut by_term = [[0.0; N_TERMS]; N_LEADS];
        by_term[0][0] = ck[0];
        for (j, row) in by_term.iter_mut().enumerate() {
            row[1..].copy_from_slice(&ck[1 + j * (N_TERMS - 1)..1 + (j + 1) * (N_TERMS - 1)]);
        }
        let (constant, raw) = reexpress(&by_term, &a, &b);
        for j in 0..N_LEADS {
            t[0][j][k] = constant / N_LEADS as f64;
            for l in 1..N_TERMS {
                t[l][j][k] = raw[j][l];
            }
        }
    }
    t
}

/// Inverse of [`destandardize`].
fn restandardize(t: &Coefficients, std: &Standardization) -> Vec<f64> {
    let mut c = vec![0.0; N_PARAMS];
    for k in 0..N_CLASSES {
        let by_term: [[f64; N_TERMS]; N_LEADS] = std::array::from_fn(|j| std::array::from_fn(|l| t[l][j][k]));
        let (constant, z) = reexpress(&by_term, &std.scale, &std.mean);
        let ck = &mut c[k * DESIGN_DIM..(k + 1) * DESIGN_DIM];
        ck[0] = constant;
        for j in 0..N_LEADS {
            ck[1 + j * (N_TERMS - 1)..1 + (j + 1) * (N_TERMS - 1)].copy_from_slice(&z[j][1..]);
        }
    }
    c
}

/// Softmax over four scores and the zero reference score, floored so every
/// bin stays strictly positive.
fn softmax_with_reference(scores: &[f64; N_CLASSES]) -> [f64; NUM_BINS] {
    let m = scores.iter().fold(0.0f64, |m, &s| m.max(s));
    let mut p = [0.0; NUM_BINS];
    for k in 0..N_CLASSES {
        p[k] = (scores[k] - m).exp();
    }
    p[N_CLASSES] = (-m).exp();
    let s: f64 = p.iter().sum();
    p.map(|v| (v / s).max(1e-300))
}

fn to_probs(p: [f64; NUM_BINS]) -> BinProbs {
    BinProbs::normalized(p).expect("softmax output is a distribution")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    /// Penalized mean negative log-likelihood after each iteration.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendModel {
    pub t: Coefficients,
    pub standardization: Standardization,
    /// Present for freshly fitted models, absent for loaded ones.
    pub diagnostics: Option<FitDiagnostics>,
}

impl BlendModel {
    /// Standardized parameter vector equivalent to `t`.
    pub fn standardized_coefficients(&self) -> Vec<f64> {
        restandardize(&self.t, &self.standardization)
    }
}

/// Linear scores from raw coefficients and raw features.
pub fn predict_blend(model: &BlendModel, row: &FeatureRow) -> BinProbs {
    let mut scores = [0.0; N_CLASSES];
    for j in 0..N_LEADS {
        let x = row.base(j);
        for (l, &(_, mask)) in TERMS.iter().enumerate() {
            let xl = product(&x, mask);
            for (k, s) in scores.iter_mut().enumerate() {
                *s += model.t[l][j][k] * xl;
            }
        }
    }
    to_probs(softmax_with_reference(&scores))
}

/// Same prediction through the standardized route.
pub fn predict_blend_standardized(model: &BlendModel, row: &FeatureRow) -> BinProbs {
    let c = model.standardized_coefficients();
    let z = model.standardization.design(row);
    let scores: [f64; N_CLASSES] =
        std::array::from_fn(|k| c[k * DESIGN_DIM..(k + 1) * DESIGN_DIM].iter().zip(&z).map(|(a, b)| a * b).sum());
    to_probs(softmax_with_reference(&scores))
}

/// Penalized mean negative log-likelihood on standardized features:
/// `(sum_i NLL_i + ridge * |c|^2) / n`.
pub struct BlendObjective {
    standardization: Standardization,
    design: Vec<[f64; DESIGN_DIM]>,
    class: Vec<usize>,
    ridge: f64,
}

impl BlendObjective {
    pub fn new(rows: &[FeatureRow], ridge: f64) -> Result<Self, BlendError> {
        if rows.is_empty() {
            return Err(BlendError::EmptyTraining);
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(BlendError::InvalidRidge(ridge));
        }
        let mut class = Vec::with_capacity(rows.len());
        for r in rows {
            let bin = r.outcome.ok_or_else(|| BlendError::MissingOutcome(r.grid_id.clone(), r.init_date))?;
            if !r.is_finite() {
                return Err(BlendError::NonFinite(r.grid_id.clone(), r.init_date));
            }
            class.push(bin.index());
        }
        let standardization = Standardization::fit(rows);
        let design = rows.iter().map(|r| standardization.design(r)).collect();
        Ok(Self { standardization, design, class, ridge })
    }

    pub fn dim(&self) -> usize {
        N_PARAMS
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    fn scores(&self, c: &[f64], i: usize) -> [f64; N_CLASSES] {
        let z = &self.design[i];
        std::array::from_fn(|k| c[k * DESIGN_DIM..(k + 1) * DESIGN_DIM].iter().zip(z).map(|(a, b)| a * b).sum())
    }

    fn nll_row(&self, c: &[f64], i: usize) -> (f64, [f64; NUM_BINS]) {
        let s = self.scores(c, i);
        let m = s.iter().fold(0.0f64, |m, &v| m.max(v));
        let mut e = [0.0; NUM_BINS];
        for k in 0..N_CLASSES {
            e[k] = (s[k] - m).exp();
        }
        e[N_CLASSES] = (-m).exp();
        let total: f64 = e.iter().sum();
        let lse = m + total.ln();
        let y = self.class[i];
        let sy = if y < N_CLASSES { s[y] } else { 0.0 };
        (lse - sy, e.map(|v| v / total))
    }

    fn penalty(&self, c: &[f64]) -> f64 {
        self.ridge * c.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn value(&self, c: &[f64]) -> f64 {
        let n = self.design.len();
        let nll = par::chunked_sum(n, 1, |i, acc| acc[0] += self.nll_row(c, i).0)[0];
        (nll + self.penalty(c)) / n as f64
    }

    pub fn value_and_gradient(&self, c: &[f64]) -> (f64, Vec<f64>) {
        let n = self.design.len();
        let acc = par::chunked_sum(n, 1 + N_PARAMS, |i, acc| {
            let (nll, p) = self.nll_row(c, i);
            acc[0] += nll;
            let z = &self.design[i];
            for k in 0..N_CLASSES {
                let r = p[k] - if self.class[i] == k { 1.0 } else { 0.0 };
                let g = &mut acc[1 + k * DESIGN_DIM..1 + (k + 1) * DESIGN_DIM];
                for (gd, zd) in g.iter_mut().zip(z) {
                    *gd += r * zd;
                }
            }
        });
        let nf = n as f64;
        let grad = acc[1..].iter().zip(c).map(|(g, ci)| (g + 2.0 * self.ridge * ci) / nf).collect();
        ((acc[0] + self.penalty(c)) / nf, grad)
    }

    pub fn derivatives(&self, c: &[f64]) -> Derivatives {
        let n = self.design.len();
        let p2 = N_PARAMS * N_PARAMS;
        let acc = par::chunked_reduce(n, 1 + N_PARAMS + p2, |range, acc| {
            let m = range.len();
            let zc = DMatrix::from_fn(m, DESIGN_DIM, |r, d| self.design[range.start + r][d]);
            let mut probs = Vec::with_capacity(m);
            for i in range.clone() {
                let (nll, p) = self.nll_row(c, i);
                acc[0] += nll;
                let z = &self.design[i];
                for k in 0..N_CLASSES {
                    let r = p[k] - if self.class[i] == k { 1.0 } else { 0.0 };
                    let g = &mut acc[1 + k * DESIGN_DIM..1 + (k + 1) * DESIGN_DIM];
                    for (gd, zd) in g.iter_mut().zip(z) {
                        *gd += r * zd;
                    }
                }
                probs.push(p);
            }
            let h = &mut acc[1 + N_PARAMS..];
            for k in 0..N_CLASSES {
                for l in k..N_CLASSES {
                    let mut weighted = zc.clone();
                    for (r, p) in probs.iter().enumerate() {
                        let w = p[k] * (if k == l { 1.0 } else { 0.0 } - p[l]);
                        weighted.row_mut(r).scale_mut(w);
                    }
                    let block = zc.transpose() * weighted;
                    for a in 0..DESIGN_DIM {
                        let row = (k * DESIGN_DIM + a) * N_PARAMS + l * DESIGN_DIM;
                        for b in 0..DESIGN_DIM {
                            h[row + b] += block[(a, b)];
                        }
                    }
                }
            }
        });
        let nf = n as f64;
        let gradient = acc[1..1 + N_PARAMS].iter().zip(c).map(|(g, ci)| (g + 2.0 * self.ridge * ci) / nf).collect();
        let mut hessian = DMatrix::from_row_slice(N_PARAMS, N_PARAMS, &acc[1 + N_PARAMS..]);
        for k in 0..N_CLASSES {
            for l in k + 1..N_CLASSES {
                for a in 0..DESIGN_DIM {
                    for b in 0..DESIGN_DIM {
                        hessian[(l * DESIGN_DIM + b, k * DESIGN_DIM + a)] = hessian[(k * DESIGN_DIM + a, l * DESIGN_DIM + b)];
                    }
                }
            }
        }
        hessian /= nf;
        for i in 0..N_PARAMS {
            hessian[(i, i)] += 2.0 * self.ridge / nf;
        }
        Derivatives {
            value: (acc[0] + self.penalty(c)) / nf,
            gradient,
            hessian,
        }
    }
}

pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Fits by damped Newton to gradient max-norm 1e-8 (at most 500 steps).
pub fn fit_blend(rows: &[FeatureRow], ridge: f64) -> Result<BlendModel, BlendError> {
    let obj = BlendObjective::new(rows, ridge)?;
    let mut seen = [false; NUM_BINS];
    for &k in &obj.class {
        seen[k] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(BlendError::SingleClass(Bin::from_index(obj.class[0])));
    }
    let m = optim::newton(|c| obj.derivatives(c), |c| obj.value(c), &vec![0.0; N_PARAMS], Options::default());
    if !m.converged {
        return Err(BlendError::NonConvergence {
            grad_norm: m.grad_norm,
            iterations: m.iterations,
        });
    }
    Ok(BlendModel {
        t: destandardize(&m.x, &obj.standardization),
        standardization: obj.standardization,
        diagnostics: Some(FitDiagnostics {
            iterations: m.iterations,
            grad_norm: m.grad_norm,
            objective_trace: m.trace,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_row(rng: &mut ChaCha8Rng) -> FeatureRow {
        let mut v = || -> [f64; 4] { std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal)) };
        FeatureRow {
            grid_id: "g".into(),
            init_date: NaiveDate::from_ymd_opt(2000, 6, 1).unwrap(),
            pi: v(),
            alpha: v(),
            nu: v(),
            beta: v(),
            mu: v(),
            outcome: None,
        }
    }

    fn random_std(rng: &mut ChaCha8Rng) -> Standardization {
        Standardization {
            mean: std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-5.0..5.0))),
            scale: std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(0.2..20.0))),
        }
    }

    #[test]
    fn zero_coefficients_are_uniform() {
        let model = BlendModel {
            t: [[[0.0; 4]; 4]; 10],
            standardization: Standardization::identity(),
            diagnostics: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = predict_blend(&model, &random_row(&mut rng));
        for j in 0..NUM_BINS {
            assert!((p[j] - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn intercepts_give_frequencies() {
        let freq: [f64; 5] = [0.1, 0.2, 0.3, 0.2, 0.2];
        let mut t = [[[0.0; 4]; 4]; 10];
        for j in 0..4 {
            for k in 0..4 {
                t[0][j][k] = (freq[k] / freq[4]).ln() / 4.0;
            }
        }
        let model = BlendModel { t, standardization: Standardization::identity(), diagnostics: None };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = predict_blend(&model, &random_row(&mut rng));
        for j in 0..NUM_BINS {
            assert!((p[j] - freq[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_intercept_shift_moves_log_odds_by_four_c() {
        let base = BlendModel { t: [[[0.0; 4]; 4]; 10], standardization: Standardization::identity(), diagnostics: None };
        let mut shifted = base.clone();
        for j in 0..4 {
            for k in 0..4 {
                shifted.t[0][j][k] = 0.1;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let row = random_row(&mut rng);
        let p = predict_blend(&shifted, &row);
        assert!(((p[0] / p[4]).ln() - 0.4).abs() < 1e-12);
        let e = 0.4f64.exp();
        assert!((p[0] - e / (4.0 * e + 1.0)).abs() < 1e-12);
        assert!(p[4] < predict_blend(&base, &row)[4]);
    }

    #[test]
    fn standardization_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let std = random_std(&mut rng);
            let c: Vec<f64> = (0..N_PARAMS).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let model = BlendModel { t: destandardize(&c, &std), standardization: std, diagnostics: None };
            let back = model.standardized_coefficients();
            for (a, b) in c.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
            }
            for _ in 0..10 {
                let mut row = random_row(&mut rng);
                for j in 0..4 {
                    row.alpha[j] = std.mean[j][1] + std.scale[j][1] * row.alpha[j];
                    row.beta[j] = std.mean[j][3] + std.scale[j][3] * row.beta[j];
                }
                let raw = predict_blend(&model, &row);
                let st = predict_blend_standardized(&model, &row);
                for j in 0..NUM_BINS {
                    assert!((raw[j] - st[j]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn extreme_scores_stay_positive() {
        let mut t = [[[0.0; 4]; 4]; 10];
        t[2][0][0] = 1e3;
        let model = BlendModel { t, standardization: Standardization::identity(), diagnostics: None };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut row = random_row(&mut rng);
        row.alpha[0] = 50.0;
        let p = predict_blend(&model, &row);
        assert!(p.as_array().iter().all(|&v| v > 0.0));
        assert!((p.as_array().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
