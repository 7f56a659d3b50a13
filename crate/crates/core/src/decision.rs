//! Finite decision problems and the value of calibrated forecasts.
//!
//! A farmer picks an action before the weather state is known. A forecast
//! scheme is a distribution over signals, each carrying a posterior over
//! states; consistency (the signal-weighted posteriors average back to the
//! prior) is what "well calibrated" means here.

use crate::ingest::csvio::{checked_reader, field, num_field, open};
use crate::ingest::IngestError;
use crate::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

const SIMPLEX_TOL: f64 = 1e-9;
/// Slack for the sign-type properties (value ≥ 0, prob ≥ det, ...).
pub const PROPERTY_TOL: f64 = 1e-12;
/// Minimum gap between best and second-best expected payoff for an optimum
/// to count as unique.
const UNIQUE_GAP: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DecisionError {
    #[error("invalid decision problem: {0}")]
    InvalidProblem(String),
    #[error("belief is not a distribution over the {0} states")]
    InvalidBelief(usize),
    #[error("scheme is inconsistent with the prior: state {state} off by {gap:.3e}")]
    InconsistentScheme { state: usize, gap: f64 },
    #[error("invalid forecast scheme: {0}")]
    InvalidScheme(String),
    #[error("problem has no income matrix")]
    MissingIncome,
    #[error("coarsening must map each of the {0} signals to a message")]
    InvalidCoarsening(usize),
    #[error("problem {problem}: optimal action is not unique{}", signal.map(|s| format!(" under signal {s}")).unwrap_or_default())]
    NonUniqueOptimum { problem: usize, signal: Option<usize> },
}

/// Monotone map from income to utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Utility {
    Linear,
    Sqrt,
    Log,
}

impl Utility {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Utility::Linear => x,
            Utility::Sqrt => x.sqrt(),
            Utility::Log => x.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionProblem {
    pub actions: Vec<String>,
    pub states: Vec<String>,
    /// `payoff[a][w]`: utility of action `a` in state `w`.
    pub payoff: Vec<Vec<f64>>,
    /// `income[a][w]`, when payoffs come from a utility of income.
    pub income: Option<Vec<Vec<f64>>>,
    pub utility: Option<Utility>,
    pub prior: Vec<f64>,
}

fn check_simplex(p: &[f64], n: usize) -> bool {
    p.len() == n && p.iter().all(|&v| v >= 0.0 && v.is_finite()) && (p.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

impl DecisionProblem {
    pub fn new(
        actions: Vec<String>,
        states: Vec<String>,
        payoff: Vec<Vec<f64>>,
        prior: Vec<f64>,
    ) -> Result<Self, DecisionError> {
        let p = Self { actions, states, payoff, income: None, utility: None, prior };
        p.validate()?;
        Ok(p)
    }

    /// Payoffs `g = u(h)` from an income matrix.
    pub fn from_income(
        actions: Vec<String>,
        states: Vec<String>,
        income: Vec<Vec<f64>>,
        utility: Utility,
        prior: Vec<f64>,
    ) -> Result<Self, DecisionError> {
        let payoff = income.iter().map(|row| row.iter().map(|&h| utility.apply(h)).collect()).collect();
        let p = Self { actions, states, payoff, income: Some(income), utility: Some(utility), prior };
        p.validate()?;
        Ok(p)
    }

    /// Unlabeled problem with generated action/state names.
    pub fn from_matrix(payoff: Vec<Vec<f64>>, prior: Vec<f64>) -> Result<Self, DecisionError> {
        let (na, ns) = (payoff.len(), prior.len());
        Self::new(labels("a", na), labels("w", ns), payoff, prior)
    }

    fn validate(&self) -> Result<(), DecisionError> {
        let (na, ns) = (self.actions.len(), self.states.len());
        let bad = |m: String| Err(DecisionError::InvalidProblem(m));
        if na == 0 || ns == 0 {
            return bad("needs at least one action and one state".into());
        }
        if self.payoff.len() != na || self.payoff.iter().any(|r| r.len() != ns) {
            return bad(format!("payoff matrix must be {na}x{ns}"));
        }
        if self.payoff.iter().flatten().any(|v| !v.is_finite()) {
            return bad("payoffs must be finite".into());
        }
        if !check_simplex(&self.prior, ns) {
            return bad(format!("prior {:?} is not a distribution", self.prior));
        }
        if let (Some(h), Some(u)) = (&self.income, self.utility) {
            if h.len() != na || h.iter().any(|r| r.len() != ns) {
                return bad(format!("income matrix must be {na}x{ns}"));
            }
            for (hr, gr) in h.iter().zip(&self.payoff) {
                for (&hv, &gv) in hr.iter().zip(gr) {
                    if (u.apply(hv) - gv).abs() > 1e-12 {
                        return bad(format!("payoff {gv} differs from u({hv})"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn expected_payoff(&self, action: usize, belief: &[f64]) -> f64 {
        self.payoff[action].iter().zip(belief).map(|(g, p)| g * p).sum()
    }

    pub fn expected_income(&self, action: usize, belief: &[f64]) -> Option<f64> {
        self.income.as_ref().map(|h| h[action].iter().zip(belief).map(|(x, p)| x * p).sum())
    }

    fn ranked(&self, belief: &[f64]) -> (usize, f64) {
        let mut best = 0;
        let mut best_v = self.expected_payoff(0, belief);
        let mut second = f64::NEG_INFINITY;
        for a in 1..self.n_actions() {
            let v = self.expected_payoff(a, belief);
            if v > best_v {
                second = best_v;
                best = a;
                best_v = v;
            } else if v > second {
                second = v;
            }
        }
        (best, best_v - second)
    }
}

/// Expected-payoff maximizer; ties go to the lowest action index.
pub fn optimal_action(problem: &DecisionProblem, belief: &[f64]) -> usize {
    problem.ranked(belief).0
}

/// Like [`optimal_action`] but rejects beliefs that are not distributions.
pub fn checked_optimal_action(problem: &DecisionProblem, belief: &[f64]) -> Result<usize, DecisionError> {
    if !check_simplex(belief, problem.n_states()) {
        return Err(DecisionError::InvalidBelief(problem.n_states()));
    }
    Ok(optimal_action(problem, belief))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastScheme {
    pub signals: Vec<String>,
    pub signal_prob: Vec<f64>,
    /// `posterior[s][w]`.
    pub posterior: Vec<Vec<f64>>,
}

impl ForecastScheme {
    pub fn new(signals: Vec<String>, signal_prob: Vec<f64>, posterior: Vec<Vec<f64>>) -> Result<Self, DecisionError> {
        let k = signals.len();
        if k == 0 || signal_prob.len() != k || posterior.len() != k {
            return Err(DecisionError::InvalidScheme("signals, probabilities and posteriors must align".into()));
        }
        if !check_simplex(&signal_prob, k) {
            return Err(DecisionError::InvalidScheme(format!("signal probabilities {signal_prob:?} are not a distribution")));
        }
        let ns = posterior[0].len();
        if posterior.iter().any(|q| !check_simplex(q, ns)) {
            return Err(DecisionError::InvalidScheme("every posterior must be a distribution over the same states".into()));
        }
        Ok(Self { signals, signal_prob, posterior })
    }

    /// One signal whose posterior is the prior.
    pub fn uninformative(prior: &[f64]) -> Self {
        Self { signals: vec!["none".into()], signal_prob: vec![1.0], posterior: vec![prior.to_vec()] }
    }

    /// One signal per state with positive prior, revealing the state.
    pub fn full_information(prior: &[f64]) -> Self {
        let ns = prior.len();
        let live: Vec<usize> = (0..ns).filter(|&w| prior[w] > 0.0).collect();
        Self {
            signals: live.iter().map(|w| format!("state{w}")).collect(),
            signal_prob: live.iter().map(|&w| prior[w]).collect(),
            posterior: live.iter().map(|&w| (0..ns).map(|v| if v == w { 1.0 } else { 0.0 }).collect()).collect(),
        }
    }

    /// Scheme induced by a likelihood `P(signal | state)`; signals with zero
    /// marginal probability are dropped.
    pub fn from_likelihood(prior: &[f64], likelihood: &[Vec<f64>]) -> Result<Self, DecisionError> {
        if likelihood.len() != prior.len() {
            return Err(DecisionError::InvalidScheme("likelihood needs one row per state".into()));
        }
        let k = likelihood[0].len();
        let (mut signals, mut sp, mut post) = (Vec::new(), Vec::new(), Vec::new());
        for s in 0..k {
            let joint: Vec<f64> = prior.iter().zip(likelihood).map(|(p, l)| p * l[s]).collect();
            let m: f64 = joint.iter().sum();
            if m > 0.0 {
                signals.push(format!("s{s}"));
                sp.push(m);
                post.push(joint.iter().map(|j| j / m).collect());
            }
        }
        Self::new(signals, sp, post)
    }

    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    /// Signal-weighted posteriors must reproduce the prior.
    pub fn check_consistent(&self, prior: &[f64]) -> Result<(), DecisionError> {
        if self.posterior[0].len() != prior.len() {
            return Err(DecisionError::InvalidScheme(format!(
                "posteriors cover {} states, prior {}",
                self.posterior[0].len(),
                prior.len()
            )));
        }
        for (w, &pw) in prior.iter().enumerate() {
            let avg: f64 = self.signal_prob.iter().zip(&self.posterior).map(|(s, q)| s * q[w]).sum();
            let gap = (avg - pw).abs();
            if gap > SIMPLEX_TOL {
                return Err(DecisionError::InconsistentScheme { state: w, gap });
            }
        }
        Ok(())
    }
}

/// Expected payoff gain from acting on each signal's posterior instead of
/// the prior.
pub fn scheme_value(problem: &DecisionProblem, scheme: &ForecastScheme) -> Result<f64, DecisionError> {
    scheme.check_consistent(&problem.prior)?;
    let a0 = optimal_action(problem, &problem.prior);
    Ok(value_with_actions(problem, scheme, a0, |s| optimal_action(problem, &scheme.posterior[s])))
}

fn value_with_actions(problem: &DecisionProblem, scheme: &ForecastScheme, a0: usize, act: impl Fn(usize) -> usize) -> f64 {
    (0..scheme.n_signals())
        .map(|s| {
            let q = &scheme.posterior[s];
            let a = act(s);
            scheme.signal_prob[s] * (problem.expected_payoff(a, q) - problem.expected_payoff(a0, q))
        })
        .sum()
}

/// Prior-only and forecast-informed expectations of payoff and income.
#[derive(Debug, Clone, PartialEq)]
pub struct InformedOutcome {
    pub prior_action: usize,
    pub utility_prior: f64,
    pub utility_informed: f64,
    pub income_prior: f64,
    pub income_informed: f64,
}

impl InformedOutcome {
    pub fn utility_gain(&self) -> f64 {
        self.utility_informed - self.utility_prior
    }

    pub fn income_change(&self) -> f64 {
        self.income_informed - self.income_prior
    }
}

pub fn informed_outcome(problem: &DecisionProblem, scheme: &ForecastScheme) -> Result<InformedOutcome, DecisionError> {
    let h = problem.income.as_ref().ok_or(DecisionError::MissingIncome)?;
    scheme.check_consistent(&problem.prior)?;
    let row = |a: usize, q: &[f64]| -> f64 { h[a].iter().zip(q).map(|(x, p)| x * p).sum() };
    let a0 = optimal_action(problem, &problem.prior);
    let (mut u, mut inc) = (0.0, 0.0);
    for (s, q) in scheme.posterior.iter().enumerate() {
        let a = optimal_action(problem, q);
        u += scheme.signal_prob[s] * problem.expected_payoff(a, q);
        inc += scheme.signal_prob[s] * row(a, q);
    }
    Ok(InformedOutcome {
        prior_action: a0,
        utility_prior: problem.expected_payoff(a0, &problem.prior),
        utility_informed: u,
        income_prior: row(a0, &problem.prior),
        income_informed: inc,
    })
}

/// `(utility gain, expected income change)` from adopting the scheme.
pub fn expected_income_effect(problem: &DecisionProblem, scheme: &ForecastScheme) -> Result<(f64, f64), DecisionError> {
    let o = informed_outcome(problem, scheme)?;
    Ok((o.utility_gain(), o.income_change()))
}

/// Value of the probabilistic scheme versus a deterministic one that only
/// passes on `coarsening[signal]`. The deterministic receiver best-responds
/// to the posterior induced by the message it sees.
pub fn compare_probabilistic_vs_deterministic(
    problem: &DecisionProblem,
    scheme: &ForecastScheme,
    coarsening: &[usize],
) -> Result<(f64, f64), DecisionError> {
    if coarsening.len() != scheme.n_signals() {
        return Err(DecisionError::InvalidCoarsening(scheme.n_signals()));
    }
    let value_prob = scheme_value(problem, scheme)?;
    let n_msg = coarsening.iter().max().map_or(0, |m| m + 1);
    let ns = problem.n_states();
    let mut mass = vec![0.0; n_msg];
    let mut joint = vec![vec![0.0; ns]; n_msg];
    for (s, &m) in coarsening.iter().enumerate() {
        mass[m] += scheme.signal_prob[s];
        for w in 0..ns {
            joint[m][w] += scheme.signal_prob[s] * scheme.posterior[s][w];
        }
    }
    let msg_action: Vec<usize> = (0..n_msg)
        .map(|m| {
            if mass[m] > 0.0 {
                let q: Vec<f64> = joint[m].iter().map(|j| j / mass[m]).collect();
                optimal_action(problem, &q)
            } else {
                0
            }
        })
        .collect();
    let a0 = optimal_action(problem, &problem.prior);
    let value_det = value_with_actions(problem, scheme, a0, |s| msg_action[coarsening[s]]);
    Ok((value_prob, value_det))
}

/// For a population of farmers: the expected number who change their
/// decision, and the number who strictly benefit. Requires unique optima
/// under every prior and positive-probability posterior.
pub fn decision_change_bound(population: &[(DecisionProblem, ForecastScheme)]) -> Result<(f64, usize), DecisionError> {
    let mut expected = 0.0;
    let mut benefiting = 0;
    for (i, (problem, scheme)) in population.iter().enumerate() {
        let (a0, gap0) = problem.ranked(&problem.prior);
        if gap0 <= UNIQUE_GAP {
            return Err(DecisionError::NonUniqueOptimum { problem: i, signal: None });
        }
        for (s, q) in scheme.posterior.iter().enumerate() {
            if scheme.signal_prob[s] == 0.0 {
                continue;
            }
            let (a, gap) = problem.ranked(q);
            if gap <= UNIQUE_GAP {
                return Err(DecisionError::NonUniqueOptimum { problem: i, signal: Some(s) });
            }
            if a != a0 {
                expected += scheme.signal_prob[s];
            }
        }
        if scheme_value(problem, scheme)? > PROPERTY_TOL {
            benefiting += 1;
        }
    }
    Ok((expected, benefiting))
}

/// The insurance example: no insurance pays 100 in a normal year and 0 in a
/// drought; insurance pays 81 and 16. Square-root utility, 10% drought risk.
pub fn insurance_problem() -> DecisionProblem {
    DecisionProblem::from_income(
        vec!["no-insurance".into(), "insurance".into()],
        vec!["normal".into(), "drought".into()],
        vec![vec![100.0, 0.0], vec![81.0, 16.0]],
        Utility::Sqrt,
        vec![0.9, 0.1],
    )
    .expect("static example is valid")
}

/// 80% of years the forecast rules out drought; otherwise it raises drought
/// odds to even.
pub fn insurance_scheme() -> ForecastScheme {
    ForecastScheme::new(
        vec!["no-drought".into(), "elevated".into()],
        vec![0.8, 0.2],
        vec![vec![1.0, 0.0], vec![0.5, 0.5]],
    )
    .expect("static example is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct InsuranceTable {
    pub eu_no_insurance: f64,
    pub eu_insurance: f64,
    pub eu_informed: f64,
    pub income_no_insurance: f64,
    pub income_insurance: f64,
    pub income_informed: f64,
}

/// Forecasts can raise expected utility while lowering expected income.
pub fn insurance_table() -> InsuranceTable {
    let p = insurance_problem();
    let o = informed_outcome(&p, &insurance_scheme()).expect("example has income");
    InsuranceTable {
        eu_no_insurance: p.expected_payoff(0, &p.prior),
        eu_insurance: p.expected_payoff(1, &p.prior),
        eu_informed: o.utility_informed,
        income_no_insurance: p.expected_income(0, &p.prior).unwrap(),
        income_insurance: p.expected_income(1, &p.prior).unwrap(),
        income_informed: o.income_informed,
    }
}

/// Outcome of a randomized property sweep. `min_margin` is the smallest
/// slack observed (negative beyond tolerance means a violation).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub cases: usize,
    pub violations: usize,
    pub min_margin: f64,
    /// Cases where the inequality was strict (margin > 1e-9).
    pub strict: usize,
}

impl SweepSummary {
    fn from_margins(margins: &[f64], tol: f64) -> Self {
        Self {
            cases: margins.len(),
            violations: margins.iter().filter(|&&m| m < -tol).count(),
            min_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
            strict: margins.iter().filter(|&&m| m > 1e-9).count(),
        }
    }
}

/// Independent stream per case so sweeps do not depend on thread count.
fn case_rng(seed: u64, case: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case as u64);
    rng
}

fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    // Exponential spacings give a uniform draw on the simplex.
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Random problem with up to four actions and states.
pub fn random_problem(rng: &mut impl Rng) -> DecisionProblem {
    let na = rng.gen_range(2..=4);
    let ns = rng.gen_range(2..=4);
    let payoff = (0..na).map(|_| (0..ns).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
    DecisionProblem::from_matrix(payoff, random_simplex(rng, ns)).expect("random problem is valid")
}

/// Random consistent scheme with up to `max_signals` signals.
pub fn random_scheme(rng: &mut impl Rng, prior: &[f64], max_signals: usize) -> ForecastScheme {
    let k = rng.gen_range(2..=max_signals.max(2));
    let likelihood: Vec<Vec<f64>> = prior.iter().map(|_| random_simplex(rng, k)).collect();
    ForecastScheme::from_likelihood(prior, &likelihood).expect("likelihood rows are distributions")
}

fn random_coarsening(rng: &mut impl Rng, k: usize) -> Vec<usize> {
    (0..k).map(|_| rng.gen_range(0..2)).collect()
}

/// Probabilistic forecasts are worth at least their coarsened versions.
pub fn coarsening_sweep(seed: u64, cases: usize) -> SweepSummary {
    let margins = par::map_range(cases, |i| {
        let mut rng = case_rng(seed, i);
        let p = random_problem(&mut rng);
        let s = random_scheme(&mut rng, &p.prior, 4);
        let c = random_coarsening(&mut rng, s.n_signals());
        let (vp, vd) = compare_probabilistic_vs_deterministic(&p, &s, &c).expect("random scheme is consistent");
        vp - vd
    });
    SweepSummary::from_margins(&margins, PROPERTY_TOL)
}

/// Calibrated forecasts never hurt in expectation.
pub fn value_sweep(seed: u64, cases: usize) -> SweepSummary {
    let margins = par::map_range(cases, |i| {
        let mut rng = case_rng(seed, i);
        let p = random_problem(&mut rng);
        let s = random_scheme(&mut rng, &p.prior, 4);
        scheme_value(&p, &s).expect("random scheme is consistent")
    });
    SweepSummary::from_margins(&margins, PROPERTY_TOL)
}

fn random_population(rng: &mut impl Rng) -> Vec<(DecisionProblem, ForecastScheme)> {
    let n = rng.gen_range(1..=20);
    let mut pop = Vec::with_capacity(n);
    while pop.len() < n {
        let p = random_problem(rng);
        let s = random_scheme(rng, &p.prior, 4);
        // Ties are measure-zero for continuous payoffs; redraw if one occurs.
        if decision_change_bound(std::slice::from_ref(&(p.clone(), s.clone()))).is_ok() {
            pop.push((p, s));
        }
    }
    pop
}

/// Farmers who strictly benefit outnumber the expected decision changes.
pub fn decision_change_sweep(seed: u64, cases: usize) -> SweepSummary {
    let margins = par::map_range(cases, |i| {
        let mut rng = case_rng(seed, i);
        let pop = random_population(&mut rng);
        let (expected, count) = decision_change_bound(&pop).expect("population has unique optima");
        count as f64 - expected
    });
    SweepSummary::from_margins(&margins, PROPERTY_TOL)
}

/// Runs the three sweeps with random schemes on user-supplied problems.
/// Problems with non-unique optima are skipped for the change bound.
pub fn check_problems(problems: &[DecisionProblem], seed: u64, schemes_per_problem: usize) -> [SweepSummary; 3] {
    let n = problems.len() * schemes_per_problem;
    let draws = par::map_range(n, |i| {
        let p = &problems[i / schemes_per_problem];
        let mut rng = case_rng(seed, i);
        let s = random_scheme(&mut rng, &p.prior, 4);
        let c = random_coarsening(&mut rng, s.n_signals());
        let (vp, vd) = compare_probabilistic_vs_deterministic(p, &s, &c).expect("random scheme is consistent");
        let bound = decision_change_bound(&[(p.clone(), s)]).ok().map(|(e, k)| k as f64 - e);
        (vp - vd, vp, bound)
    });
    let p1: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let p2: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let p5: Vec<f64> = draws.iter().filter_map(|d| d.2).collect();
    [
        SweepSummary::from_margins(&p1, PROPERTY_TOL),
        SweepSummary::from_margins(&p2, PROPERTY_TOL),
        SweepSummary::from_margins(&p5, PROPERTY_TOL),
    ]
}

/// Sweep sizes used by the demo report.
pub const DEMO_SWEEPS: [usize; 3] = [100, 200, 200];

/// Insurance table plus the three property sweeps, as plain text.
pub fn demo_report(seed: u64) -> String {
    let t = insurance_table();
    let mut s = String::new();
    s += "insurance example (u = sqrt, drought risk 0.1)\n";
    s += &format!("{:<22} {:>12} {:>16}\n", "strategy", "exp_utility", "exp_income");
    for (name, u, h) in [
        ("no insurance", t.eu_no_insurance, t.income_no_insurance),
        ("insurance", t.eu_insurance, t.income_insurance),
        ("forecast-informed", t.eu_informed, t.income_informed),
    ] {
        s += &format!("{name:<22} {u:>12.6} {h:>16.6}\n");
    }
    let sweeps = [
        ("probabilistic >= coarsened", coarsening_sweep(seed, DEMO_SWEEPS[0])),
        ("forecast value >= 0", value_sweep(seed.wrapping_add(1), DEMO_SWEEPS[1])),
        ("benefiting >= changed", decision_change_sweep(seed.wrapping_add(2), DEMO_SWEEPS[2])),
    ];
    s += "\nproperty sweeps\n";
    for (name, r) in sweeps {
        s += &format!(
            "{name:<28} cases={:<4} violations={} strict={:<4} min_margin={:.6e}\n",
            r.cases, r.violations, r.strict, r.min_margin
        );
    }
    s
}

const PROBLEM_HEADER: [&str; 5] = ["problem", "action", "state", "payoff", "prior"];

pub fn parse_problems_csv(path: impl AsRef<Path>) -> Result<Vec<DecisionProblem>, IngestError> {
    read_problems_csv(open(path.as_ref())?)
}

/// Long format, one row per (problem, action, state). The prior column must
/// agree across actions for a state.
pub fn read_problems_csv<R: Read>(input: R) -> Result<Vec<DecisionProblem>, IngestError> {
    #[derive(Default)]
    struct Acc {
        actions: Vec<String>,
        states: Vec<String>,
        cells: BTreeMap<(usize, usize), f64>,
        prior: BTreeMap<usize, f64>,
    }
    let mut rdr = checked_reader(input, &PROBLEM_HEADER)?;
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = field(&rec, 0, "problem")?.to_string();
        if !acc.contains_key(&id) {
            order.push(id.clone());
        }
        let a = acc.entry(id.clone()).or_default();
        let action = field(&rec, 1, "action")?;
        let state = field(&rec, 2, "state")?;
        let ai = a.actions.iter().position(|x| x == action).unwrap_or_else(|| {
            a.actions.push(action.to_string());
            a.actions.len() - 1
        });
        let si = a.states.iter().position(|x| x == state).unwrap_or_else(|| {
            a.states.push(state.to_string());
            a.states.len() - 1
        });
        let g: f64 = num_field(&rec, 3, "payoff")?;
        let p: f64 = num_field(&rec, 4, "prior")?;
        if a.cells.insert((ai, si), g).is_some() {
            return Err(IngestError::Invalid(format!("row {}: duplicate cell {id}/{action}/{state}", line + 2)));
        }
        if let Some(&prev) = a.prior.get(&si) {
            if prev != p {
                return Err(IngestError::Invalid(format!("row {}: prior for {id}/{state} disagrees", line + 2)));
            }
        }
        a.prior.insert(si, p);
    }
    order
        .into_iter()
        .map(|id| {
            let a = acc.remove(&id).unwrap();
            let (na, ns) = (a.actions.len(), a.states.len());
            if a.cells.len() != na * ns {
                return Err(IngestError::Invalid(format!("problem {id}: payoff matrix is incomplete")));
            }
            let payoff = (0..na).map(|i| (0..ns).map(|j| a.cells[&(i, j)]).collect()).collect();
            let prior = (0..ns).map(|j| a.prior[&j]).collect();
            DecisionProblem::new(a.actions, a.states, payoff, prior)
                .map_err(|e| IngestError::Invalid(format!("problem {id}: {e}")))
        })
        .collect()
}
