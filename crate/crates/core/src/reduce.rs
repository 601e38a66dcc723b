//! Fixed-shape pairwise reductions.
//!
//! The tree is split at the midpoint of the index range down to blocks of
//! `BLOCK` elements, which are summed left to right. The shape depends only on
//! the length, so the result is bitwise reproducible; large ranges fork the two
//! halves onto the rayon pool without changing the shape.

const BLOCK: usize = 128;
const PAR_MIN: usize = 1 << 15;

/// Pairwise sum of `term(i)` for `i` in `0..n`.
pub fn tree_sum<F>(n: usize, term: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    sum_range(0, n, term)
}

fn sum_range<F>(lo: usize, hi: usize, term: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let len = hi - lo;
    if len <= BLOCK {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += term(i);
        }
        return acc;
    }
    let mid = lo + len / 2;
    if len >= PAR_MIN {
        let (a, b) = rayon::join(|| sum_range(lo, mid, term), || sum_range(mid, hi, term));
        a + b
    } else {
        sum_range(lo, mid, term) + sum_range(mid, hi, term)
    }
}

/// Pairwise mean of `term(i)`.
pub fn tree_mean<F>(n: usize, term: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    tree_sum(n, term) / n as f64
}

/// Vector-valued pairwise sum: `accumulate(i, acc)` adds the contribution of
/// element `i` into an accumulator of length `width`.
pub fn tree_sum_vec<F>(n: usize, width: usize, accumulate: &F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut out = vec![0.0; width];
    if n > 0 {
        sum_vec_range(0, n, width, accumulate, &mut out);
    }
    out
}

fn sum_vec_range<F>(lo: usize, hi: usize, width: usize, accumulate: &F, out: &mut [f64])
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let len = hi - lo;
    if len <= BLOCK {
        for i in lo..hi {
            accumulate(i, out);
        }
        return;
    }
    let mid = lo + len / 2;
    let mut right = vec![0.0; width];
    if len >= PAR_MIN {
        rayon::join(
            || sum_vec_range(lo, mid, width, accumulate, out),
            || sum_vec_range(mid, hi, width, accumulate, &mut right),
        );
    } else {
        sum_vec_range(lo, mid, width, accumulate, out);
        sum_vec_range(mid, hi, width, accumulate, &mut right);
    }
    for (o, r) in out.iter_mut().zip(&right) {
        *o += r;
    }
}
