//! Order-preserving data-parallel helpers.
//!
//! With the `parallel` feature these dispatch to rayon; without it they run
//! sequentially. Outputs are always collected in input order, and sums are
//! reduced over fixed-size chunks in index order, so a result never depends
//! on how many threads executed it.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Rows per chunk for [`chunked_sum`]. Fixed so the reduction tree is too.
pub const CHUNK: usize = 256;

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fallible [`map`]; the first error in input order wins.
pub fn try_map<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(items, f).into_iter().collect()
}

/// Sums per-row vectors of length `dim` produced by `row(i, out)` for
/// `i in 0..n`. Rows are accumulated sequentially inside each chunk of
/// [`CHUNK`] rows, then chunk partials are added in chunk order.
pub fn chunked_sum<F>(n: usize, dim: usize, row: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    chunked_reduce(n, dim, |range, acc| {
        for i in range {
            row(i, acc);
        }
    })
}

/// Like [`chunked_sum`], but `chunk(range, out)` handles a whole chunk of
/// rows at once.
pub fn chunked_reduce<F>(n: usize, dim: usize, chunk: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync + Send,
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials = map_range(n_chunks, |c| {
        let mut acc = vec![0.0; dim];
        chunk(c * CHUNK..((c + 1) * CHUNK).min(n), &mut acc);
        acc
    });
    let mut total = vec![0.0; dim];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v: Vec<usize> = (0..1000).collect();
        let out = map(&v, |x| x * 2);
        assert_eq!(out, (0..1000).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn chunked_sum_matches_fixed_tree() {
        let n = 1000;
        let got = chunked_sum(n, 2, |i, acc| {
            acc[0] += 1.0 / (i as f64 + 1.0);
            acc[1] += i as f64;
        });
        let mut expect = [0.0f64; 2];
        for c in 0..n.div_ceil(CHUNK) {
            let mut part = [0.0f64; 2];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                part[0] += 1.0 / (i as f64 + 1.0);
                part[1] += i as f64;
            }
            expect[0] += part[0];
            expect[1] += part[1];
        }
        assert_eq!(got[0].to_bits(), expect[0].to_bits());
        assert_eq!(got[1], expect[1]);
    }

    #[test]
    fn try_map_reports_first_error() {
        let v: Vec<i32> = (0..100).collect();
        let r: Result<Vec<i32>, i32> = try_map(&v, |&x| if x % 30 == 29 { Err(x) } else { Ok(x) });
        assert_eq!(r, Err(29));
    }
}
