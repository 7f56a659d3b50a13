use super::{EvalError, ScoredItem};
use crate::bins::NUM_BINS;

pub const N_DECILES: usize = 10;
pub const N_HIST: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decile {
    pub mean_p: f64,
    pub observed_freq: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reliability {
    /// Populated deciles only, lowest probabilities first.
    pub deciles: Vec<Decile>,
    /// Heights over `[0, 0.1), ..., [0.9, 1.0]`, scaled so the first bin is
    /// 1; if the first bin is empty they are fractions of the total.
    pub histogram: [f64; N_HIST],
}

/// Decile table over all forecast-bin pairs. Pairs are stably sorted by
/// probability (ties keep input order) and cut into ten equal-count groups;
/// group `d` holds sorted positions `[d n / 10, (d + 1) n / 10)`.
pub fn reliability(items: &[ScoredItem]) -> Result<Reliability, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let mut pairs: Vec<(f64, f64)> = items
        .iter()
        .flat_map(|it| (0..NUM_BINS).map(move |j| (it.probs[j], if it.outcome.index() == j { 1.0 } else { 0.0 })))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let mut deciles = Vec::with_capacity(N_DECILES);
    for d in 0..N_DECILES {
        let group = &pairs[d * n / N_DECILES..(d + 1) * n / N_DECILES];
        if group.is_empty() {
            continue;
        }
        let c = group.len() as f64;
        deciles.push(Decile {
            mean_p: group.iter().map(|g| g.0).sum::<f64>() / c,
            observed_freq: group.iter().map(|g| g.1).sum::<f64>() / c,
            count: group.len(),
        });
    }
    let mut counts = [0usize; N_HIST];
    for &(p, _) in &pairs {
        counts[((p * N_HIST as f64) as usize).min(N_HIST - 1)] += 1;
    }
    let denom = if counts[0] > 0 { counts[0] } else { n } as f64;
    Ok(Reliability {
        deciles,
        histogram: counts.map(|c| c as f64 / denom),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bins::{Bin, BinProbs};
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, WeightedIndex};

    fn item(p: [f64; 5], outcome: usize) -> ScoredItem {
        ScoredItem {
            grid_id: "g".into(),
            init_date: NaiveDate::from_ymd_opt(2000, 6, 1).unwrap(),
            probs: BinProbs::new(p).unwrap(),
            outcome: Bin::from_index(outcome),
        }
    }

    #[test]
    fn calibrated_generator_is_reliable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let items: Vec<ScoredItem> = (0..10_000)
            .map(|_| {
                let w: [f64; 5] = std::array::from_fn(|_| rng.gen::<f64>().powi(3));
                let p = BinProbs::normalized(w).unwrap();
                let y = WeightedIndex::new(p.as_array()).unwrap().sample(&mut rng);
                item(*p.as_array(), y)
            })
            .collect();
        let r = reliability(&items).unwrap();
        assert_eq!(r.deciles.len(), 10);
        assert_eq!(r.deciles.iter().map(|d| d.count).sum::<usize>(), 50_000);
        for d in &r.deciles {
            assert!((d.mean_p - d.observed_freq).abs() < 0.02, "{d:?}");
        }
    }

    #[test]
    fn histogram_normalization() {
        let items = vec![item([0.05, 0.05, 0.05, 0.05, 0.8], 4); 3];
        let r = reliability(&items).unwrap();
        assert_eq!(r.histogram[0], 1.0);
        assert_eq!(r.histogram[8], 0.25);
        let only_low: Vec<ScoredItem> = (0..4).map(|_| item([0.0, 0.0, 0.0, 0.0, 1.0], 4)).collect();
        let h = reliability(&only_low).unwrap().histogram;
        assert_eq!(h[0], 1.0);
        assert_eq!(h[9], 0.25);
    }

    #[test]
    fn constant_probabilities_collapse_to_one_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Binary-style: bins 1 and 5 at 0.5, others zero.
        let items: Vec<ScoredItem> =
            (0..2000).map(|_| item([0.5, 0.0, 0.0, 0.0, 0.5], if rng.gen_bool(0.5) { 0 } else { 4 })).collect();
        let r = reliability(&items).unwrap();
        let upper: Vec<&Decile> = r.deciles.iter().filter(|d| d.mean_p == 0.5).collect();
        assert!(!upper.is_empty());
        let total: usize = upper.iter().map(|d| d.count).sum();
        let freq = upper.iter().map(|d| d.observed_freq * d.count as f64).sum::<f64>() / total as f64;
        assert!((freq - 0.5).abs() < 0.03);
    }
}
