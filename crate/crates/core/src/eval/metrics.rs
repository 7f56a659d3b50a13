use super::{EvalError, ScoredItem};
use crate::bins::{Bin, BinProbs, NUM_BINS};

/// How equal probabilities on a positive/negative pair are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    /// Literal indicator `1[p > p']`: ties count 0.
    Strict,
    /// Ties count one half.
    #[default]
    Half,
}

impl std::str::FromStr for TiePolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "strict" => Ok(Self::Strict),
            "half" => Ok(Self::Half),
            other => Err(format!("unknown AUC tie policy `{other}` (expected strict or half)")),
        }
    }
}

impl std::fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Strict => "strict",
            Self::Half => "half",
        })
    }
}

pub fn brier_single(p: &BinProbs, outcome: Bin) -> f64 {
    (0..NUM_BINS)
        .map(|j| {
            let y = if j == outcome.index() { 1.0 } else { 0.0 };
            (y - p[j]).powi(2)
        })
        .sum()
}

pub fn rps_single(p: &BinProbs, outcome: Bin) -> f64 {
    let cum = p.cumulative();
    (0..NUM_BINS)
        .map(|k| {
            let obs = if outcome.index() <= k { 1.0 } else { 0.0 };
            (obs - cum[k]).powi(2)
        })
        .sum()
}

fn mean_of(items: &[ScoredItem], f: impl Fn(&ScoredItem) -> f64) -> Result<f64, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptySet);
    }
    Ok(items.iter().map(f).sum::<f64>() / items.len() as f64)
}

pub fn brier(items: &[ScoredItem]) -> Result<f64, EvalError> {
    mean_of(items, |it| brier_single(&it.probs, it.outcome))
}

pub fn rps(items: &[ScoredItem]) -> Result<f64, EvalError> {
    mean_of(items, |it| rps_single(&it.probs, it.outcome))
}

/// Binary Brier score of bin `bin`'s probabilities.
pub fn brier_for_bin(items: &[ScoredItem], bin: Bin) -> Result<f64, EvalError> {
    mean_of(items, |it| {
        let y = if it.outcome == bin { 1.0 } else { 0.0 };
        (y - it.probs.get(bin)).powi(2)
    })
}

/// AUC over `(probability, occurred)` pairs, by sorting: each positive is
/// credited with the negatives strictly below it, plus half the tied ones
/// under [`TiePolicy::Half`]. Counts are exact integers.
pub fn auc_pairs(pairs: &[(f64, bool)], policy: TiePolicy) -> Result<f64, EvalError> {
    let n_pos = pairs.iter().filter(|p| p.1).count() as u128;
    let n_neg = pairs.len() as u128 - n_pos;
    if n_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    if n_neg == 0 {
        return Err(EvalError::NoNegatives);
    }
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut below, mut equal) = (0u128, 0u128);
    let mut neg_seen = 0u128;
    let mut i = 0;
    while i < sorted.len() {
        let mut k = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while k < sorted.len() && sorted[k].0 == sorted[i].0 {
            if sorted[k].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            k += 1;
        }
        below += pos * neg_seen;
        equal += pos * neg;
        neg_seen += neg;
        i = k;
    }
    let credit = match policy {
        TiePolicy::Strict => 2 * below,
        TiePolicy::Half => 2 * below + equal,
    };
    Ok(credit as f64 / (2 * n_pos * n_neg) as f64)
}

/// AUC pooled over every forecast-bin pair.
pub fn auc(items: &[ScoredItem], policy: TiePolicy) -> Result<f64, EvalError> {
    let pairs: Vec<(f64, bool)> = items
        .iter()
        .flat_map(|it| (0..NUM_BINS).map(move |j| (it.probs[j], it.outcome.index() == j)))
        .collect();
    auc_pairs(&pairs, policy)
}

/// AUC of bin `bin`'s probabilities alone.
pub fn auc_for_bin(items: &[ScoredItem], bin: Bin, policy: TiePolicy) -> Result<f64, EvalError> {
    let pairs: Vec<(f64, bool)> = items.iter().map(|it| (it.probs.get(bin), it.outcome == bin)).collect();
    auc_pairs(&pairs, policy)
}

/// `1 - metric / climatology`.
pub fn skill(metric: f64, climatology: f64) -> Result<f64, EvalError> {
    if !(climatology > 0.0) {
        return Err(EvalError::ZeroClimatologyScore);
    }
    Ok(1.0 - metric / climatology)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn item(p: [f64; 5], outcome: u8) -> ScoredItem {
        ScoredItem {
            grid_id: "g".into(),
            init_date: NaiveDate::from_ymd_opt(2000, 6, 1).unwrap(),
            probs: BinProbs::new(p).unwrap(),
            outcome: Bin::new(outcome).unwrap(),
        }
    }

    fn auc_oracle(pairs: &[(f64, bool)], policy: TiePolicy) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for a in pairs.iter().filter(|p| p.1) {
            for b in pairs.iter().filter(|p| !p.1) {
                den += 1.0;
                if a.0 > b.0 {
                    num += 1.0;
                } else if a.0 == b.0 && policy == TiePolicy::Half {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    #[test]
    fn hand_cases() {
        let perfect = [item([1.0, 0.0, 0.0, 0.0, 0.0], 1), item([0.0, 0.0, 0.0, 0.0, 1.0], 5)];
        assert_eq!(brier(&perfect).unwrap(), 0.0);
        assert_eq!(rps(&perfect).unwrap(), 0.0);
        let a = [item([0.6, 0.4, 0.0, 0.0, 0.0], 1)];
        assert!((brier(&a).unwrap() - 0.32).abs() < 1e-15);
        assert!((rps(&a).unwrap() - 0.16).abs() < 1e-15);
        let u = [item([0.2; 5], 1)];
        assert!((brier(&u).unwrap() - 0.80).abs() < 1e-15);
        assert!((rps(&u).unwrap() - 1.20).abs() < 1e-15);
        assert!(matches!(brier(&[]), Err(EvalError::EmptySet)));
    }

    #[test]
    fn auc_hand_cases() {
        for pol in [TiePolicy::Strict, TiePolicy::Half] {
            assert_eq!(auc_pairs(&[(0.7, true), (0.3, false)], pol).unwrap(), 1.0);
        }
        assert_eq!(auc_pairs(&[(0.5, true), (0.5, false)], TiePolicy::Strict).unwrap(), 0.0);
        assert_eq!(auc_pairs(&[(0.5, true), (0.5, false)], TiePolicy::Half).unwrap(), 0.5);
        let p = [(0.9, true), (0.6, true), (0.4, false), (0.7, false)];
        assert_eq!(auc_pairs(&p, TiePolicy::Half).unwrap(), 0.75);
        assert!(matches!(auc_pairs(&[(0.1, false)], TiePolicy::Half), Err(EvalError::NoPositives)));
        assert!(matches!(auc_pairs(&[(0.1, true)], TiePolicy::Half), Err(EvalError::NoNegatives)));
    }

    #[test]
    fn fast_auc_equals_pair_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(2..60);
            let coarse = rng.gen_bool(0.5);
            let mut pairs: Vec<(f64, bool)> = (0..n)
                .map(|_| {
                    let p: f64 = rng.gen();
                    (if coarse { (p * 4.0).round() / 4.0 } else { p }, rng.gen_bool(0.3))
                })
                .collect();
            pairs[0].1 = true;
            pairs[1].1 = false;
            for pol in [TiePolicy::Strict, TiePolicy::Half] {
                assert_eq!(auc_pairs(&pairs, pol).unwrap(), auc_oracle(&pairs, pol));
            }
        }
    }

    #[test]
    fn skill_cases() {
        assert!((skill(0.8, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(skill(1.0, 1.0).unwrap(), 0.0);
        assert!((skill(1.2, 1.0).unwrap() + 0.2).abs() < 1e-15);
        assert!(matches!(skill(0.1, 0.0), Err(EvalError::ZeroClimatologyScore)));
    }
}
