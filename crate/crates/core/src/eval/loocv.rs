use super::EvalError;
use crate::par;
use std::collections::BTreeSet;

/// Leave-one-year-out cross-validation.
///
/// For each distinct year `y` (ascending), `fit(y, training)` sees only the
/// items of other years and `predict(model, held_out)` sees only year `y`.
/// Folds run in parallel; outputs are concatenated in year order, and each
/// fold's held-out items keep their input order.
pub fn loocv_run<T, M, R, E, Y, F, P>(items: &[T], year_of: Y, fit: F, predict: P) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send + From<EvalError>,
    Y: Fn(&T) -> i32 + Sync + Send,
    F: Fn(i32, &[&T]) -> Result<M, E> + Sync + Send,
    P: Fn(&M, &[&T]) -> Result<Vec<R>, E> + Sync + Send,
{
    let years: Vec<i32> = items.iter().map(&year_of).collect::<BTreeSet<_>>().into_iter().collect();
    if years.len() < 2 {
        return Err(EvalError::TooFewYears(years.len()).into());
    }
    let folds = par::try_map(&years, |&y| {
        let (held, train): (Vec<&T>, Vec<&T>) = items.iter().partition(|it| year_of(it) == y);
        let model = fit(y, &train)?;
        predict(&model, &held)
    })?;
    Ok(folds.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[derive(Debug)]
    struct Obs {
        year: i32,
        outcome: u8,
    }

    #[test]
    fn held_out_year_is_never_seen() {
        let items: Vec<Obs> = (2000..2010).flat_map(|y| (0..5).map(move |k| Obs { year: y, outcome: k })).collect();
        // Memorize everything the trainer is shown, keyed by year.
        let out = loocv_run(
            &items,
            |o| o.year,
            |_, train: &[&Obs]| -> Result<BTreeMap<i32, Vec<u8>>, EvalError> {
                let mut m: BTreeMap<i32, Vec<u8>> = BTreeMap::new();
                for o in train {
                    m.entry(o.year).or_default().push(o.outcome);
                }
                Ok(m)
            },
            |m, held| Ok(held.iter().map(|o| (o.year, m.contains_key(&o.year))).collect()),
        )
        .unwrap();
        assert_eq!(out.len(), 50);
        assert!(out.iter().all(|&(_, leaked)| !leaked));
        assert!(out.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn needs_two_years() {
        let items = vec![Obs { year: 2000, outcome: 1 }];
        let r = loocv_run(&items, |o| o.year, |_, _| Ok::<(), EvalError>(()), |_, h| Ok(h.iter().map(|o| o.outcome).collect()));
        assert!(matches!(r, Err(EvalError::TooFewYears(1))));
    }
}
