//! Deterministic parallel reduction.
//!
//! Work is split into blocks whose boundaries depend only on the item count.
//! Blocks are evaluated in parallel and combined in a fixed pairwise tree, so
//! results are bit-identical for any number of worker threads.

use std::ops::Range;

use rayon::prelude::*;

const MIN_BLOCK: usize = 64;
const MAX_BLOCKS: usize = 64;

/// Block boundaries for `n` items.
#[allow(clippy::single_range_in_vec_init)]
pub fn blocks(n: usize) -> Vec<Range<usize>> {
    if n == 0 {
        return vec![0..0];
    }
    let count = n.div_ceil(MIN_BLOCK).clamp(1, MAX_BLOCKS);
    let size = n.div_ceil(count);
    (0..count).map(|b| (b * size).min(n)..((b + 1) * size).min(n)).filter(|r| !r.is_empty()).collect()
}

/// Reduces `leaf(block)` over the blocks of `0..n` with a fixed pairwise tree.
pub fn tree_reduce<T, L, C>(n: usize, leaf: L, combine: C) -> T
where
    T: Send,
    L: Fn(Range<usize>) -> T + Sync + Send,
    C: Fn(T, T) -> T,
{
    let mut level: Vec<T> = blocks(n).into_par_iter().map(leaf).collect();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.pop().expect("at least one block")
}

/// Pairwise sum of a slice, independent of thread count.
pub fn sum(values: &[f64]) -> f64 {
    tree_reduce(values.len(), |r| values[r].iter().sum::<f64>(), |a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_cover_range() {
        for n in [1, 63, 64, 65, 1000, 100_000] {
            let b = blocks(n);
            assert_eq!(b[0].start, 0);
            assert_eq!(b.last().unwrap().end, n);
            assert!(b.windows(2).all(|w| w[0].end == w[1].start));
            assert!(b.len() <= MAX_BLOCKS);
        }
    }

    #[test]
    fn same_result_for_any_pool() {
        let v: Vec<f64> = (0..10_000).map(|i| ((i as f64) * 0.37).sin() * 1e-3f64.powi(i % 5)).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| sum(&v));
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| sum(&v));
        assert_eq!(one.to_bits(), four.to_bits());
    }
}
