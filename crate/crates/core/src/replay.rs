//! FIFO replay buffer with uniform without-replacement batch sampling.
//!
//! The buffer holds the last `capacity` items pushed into it, addressed by
//! *positions* counted from 1 at the newest item. A batch is a uniformly
//! random K-subset of the occupied positions, drawn by partial Fisher–Yates;
//! batch averages of a function of the stored items are what downstream
//! estimators consume.

use std::fmt;
use std::io::{self, Write};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::exact::{inverse_binomial, Rational};
use crate::seed;

/// Fixed-capacity FIFO buffer addressed newest-first.
///
/// Position 1 is the most recent push, position `fill()` the oldest retained
/// item. Pushing beyond capacity evicts the oldest.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    /// Physical ring storage; grows up to `capacity` during warm-up.
    items: Vec<T>,
    /// Physical index of the newest item (meaningless while empty).
    head: usize,
    total_pushed: u64,
}

impl<T> ReplayBuffer<T> {
    /// Create an empty buffer holding at most `capacity` items.
    pub fn new(capacity: usize) -> Result<ReplayBuffer<T>> {
        if capacity == 0 {
            return Err(Error::Config("replay buffer capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity),
            head: 0,
            total_pushed: 0,
        })
    }

    /// Maximum number of retained items.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of items currently stored: `min(total_pushed, capacity)`.
    pub fn fill(&self) -> usize {
        self.items.len()
    }

    /// Total number of pushes ever performed.
    pub fn total_pushed(&self) -> u64 {
        self.total_pushed
    }

    /// Whether the buffer has reached capacity.
    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    /// Insert `item` at position 1, shifting all retained items one position
    /// older and evicting the oldest if the buffer was full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
            self.head = self.items.len() - 1;
        } else {
            self.head = (self.head + 1) % self.capacity;
            self.items[self.head] = item;
        }
        self.total_pushed += 1;
    }

    /// Item at 1-based position (`1` = newest), if occupied.
    pub fn get(&self, position: usize) -> Option<&T> {
        if position == 0 || position > self.items.len() {
            return None;
        }
        Some(&self.items[self.physical(position)])
    }

    /// Iterate items from newest (position 1) to oldest.
    pub fn iter_newest_first(&self) -> impl Iterator<Item = &T> {
        (1..=self.items.len()).map(|p| &self.items[self.physical(p)])
    }

    fn physical(&self, position: usize) -> usize {
        let len = self.items.len();
        (self.head + len - (position - 1)) % len
    }

    /// Draw a uniformly random `k`-subset of the occupied positions by
    /// partial Fisher–Yates.
    ///
    /// Every k-subset of `{1, …, fill}` has probability `1 / C(fill, k)`.
    /// Requesting more positions than are occupied is an error: warm-up
    /// policy (shrinking the batch while the buffer fills) belongs to the
    /// caller, not the sampler.
    pub fn sample_batch(&self, k: usize, rng: &mut seed::Rng) -> Result<BatchIndices> {
        let fill = self.fill();
        if fill == 0 {
            return Err(Error::Input("cannot sample from an empty buffer".into()));
        }
        if k == 0 || k > fill {
            return Err(Error::Input(format!(
                "batch size {k} is outside [1, fill = {fill}]"
            )));
        }
        let mut pool = Vec::new();
        sample_positions_into(fill, k, rng, &mut pool);
        Ok(BatchIndices { positions: pool })
    }
}

/// Partial Fisher–Yates over positions `1..=fill`, writing the first `k`
/// entries of the shuffle into `pool` (reused between calls by hot loops).
pub(crate) fn sample_positions_into(
    fill: usize,
    k: usize,
    rng: &mut seed::Rng,
    pool: &mut Vec<usize>,
) {
    debug_assert!(k >= 1 && k <= fill);
    pool.clear();
    pool.extend(1..=fill);
    for i in 0..k {
        let j = rng.gen_range(i..fill);
        pool.swap(i, j);
    }
    pool.truncate(k);
}

/// A sampled batch: distinct buffer positions, each in `[1, fill]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchIndices {
    positions: Vec<usize>,
}

impl BatchIndices {
    /// Assemble batch indices by hand (for tests and deterministic replays);
    /// positions must be distinct, nonempty, and at most `fill`.
    pub fn new(positions: Vec<usize>, fill: usize) -> Result<BatchIndices> {
        if positions.is_empty() {
            return Err(Error::Input("batch must contain at least one position".into()));
        }
        let mut seen = vec![false; fill + 1];
        for &p in &positions {
            if p == 0 || p > fill {
                return Err(Error::Input(format!(
                    "position {p} is outside [1, fill = {fill}]"
                )));
            }
            if seen[p] {
                return Err(Error::Input(format!("position {p} appears twice in batch")));
            }
            seen[p] = true;
        }
        Ok(BatchIndices { positions })
    }

    /// The sampled positions, in draw order.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Batch size K.
    pub fn k(&self) -> usize {
        self.positions.len()
    }
}

/// A batch average of a vector-valued function of the stored items.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchAverage {
    /// `(1/K) Σ_{position ∈ batch} f(item at position)`, one entry per
    /// output dimension of `f`.
    pub value: Vec<f64>,
}

/// Average a vector-valued function over the batch:
/// `(1/K) Σ_{p ∈ indices} f(item at p)`.
///
/// # Panics
/// Panics if `indices` refers to unoccupied positions (they come from
/// [`ReplayBuffer::sample_batch`] or a validated constructor) or if `f`
/// returns vectors of inconsistent lengths.
pub fn batch_average<T>(
    buffer: &ReplayBuffer<T>,
    indices: &BatchIndices,
    mut f: impl FnMut(&T) -> Vec<f64>,
) -> BatchAverage {
    let k = indices.k() as f64;
    let mut acc: Option<Vec<f64>> = None;
    for &p in indices.positions() {
        let item = buffer.get(p).expect("batch position must be occupied");
        let fx = f(item);
        match &mut acc {
            None => acc = Some(fx),
            Some(a) => {
                assert_eq!(a.len(), fx.len(), "f must have a fixed output dimension");
                for (ai, xi) in a.iter_mut().zip(&fx) {
                    *ai += xi;
                }
            }
        }
    }
    let mut value = acc.expect("batch is nonempty by construction");
    for v in &mut value {
        *v /= k;
    }
    BatchAverage { value }
}

/// Average a scalar function over the batch with a single final division,
/// `(Σ f) / K` — the scalar fast path of [`batch_average`].
pub fn batch_mean<T>(
    buffer: &ReplayBuffer<T>,
    indices: &BatchIndices,
    mut f: impl FnMut(&T) -> f64,
) -> f64 {
    let mut sum = 0.0;
    for &p in indices.positions() {
        sum += f(buffer.get(p).expect("batch position must be occupied"));
    }
    sum / indices.k() as f64
}

/// Exact probability `1 / C(n, k)` of any particular k-subset under uniform
/// without-replacement sampling from n items.
pub fn batch_probability(n: u64, k: u64) -> Result<Rational> {
    inverse_binomial(n, k)
}

/// Dump buffer contents as CSV (`position,item`) for debugging.
pub fn dump_csv<T: fmt::Display>(buffer: &ReplayBuffer<T>, out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "position,item")?;
    for (i, item) in buffer.iter_newest_first().enumerate() {
        writeln!(out, "{},{}", i + 1, item)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::Rational;
    use crate::seed::rng_from;
    use std::collections::HashMap;

    fn contents<T: Clone>(buffer: &ReplayBuffer<T>) -> Vec<T> {
        buffer.iter_newest_first().cloned().collect()
    }

    #[test]
    fn push_is_fifo_newest_first() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for item in ["a", "b", "c", "d"] {
            buf.push(item);
        }
        assert_eq!(contents(&buf), vec!["d", "c", "b"]);
        assert_eq!(buf.get(1), Some(&"d"));
        assert_eq!(buf.get(3), Some(&"b"));
        assert_eq!(buf.get(4), None);
        assert_eq!(buf.get(0), None);
    }

    #[test]
    fn capacity_one_keeps_latest() {
        let mut buf = ReplayBuffer::new(1).unwrap();
        buf.push('a');
        buf.push('b');
        assert_eq!(contents(&buf), vec!['b']);
    }

    #[test]
    fn long_run_counters() {
        let mut buf = ReplayBuffer::new(100).unwrap();
        for i in 0..1_000_000u64 {
            buf.push(i);
            assert_eq!(buf.fill() as u64, buf.total_pushed().min(100));
        }
        assert_eq!(buf.fill(), 100);
        assert_eq!(buf.total_pushed(), 1_000_000);
        assert_eq!(buf.get(1), Some(&999_999));
        assert_eq!(buf.get(100), Some(&999_900));
    }

    #[test]
    fn push_shifts_every_retained_item() {
        // The support relation: after a push, positions 2..=fill hold exactly
        // what positions 1..=fill−1 held before.
        let mut buf = ReplayBuffer::new(7).unwrap();
        let mut rng = rng_from(3);
        for step in 0..200u32 {
            let before = contents(&buf);
            let item = rng.gen_range(0..1000);
            buf.push(item);
            let after = contents(&buf);
            assert_eq!(after[0], item, "step {step}");
            let kept = before.len().min(buf.capacity() - 1);
            assert_eq!(&after[1..], &before[..kept], "step {step}");
        }
    }

    #[test]
    fn zero_capacity_rejected() {
        assert!(ReplayBuffer::<u8>::new(0).is_err());
    }

    #[test]
    fn sampling_preconditions() {
        let mut buf = ReplayBuffer::new(5).unwrap();
        let mut rng = rng_from(0);
        assert!(buf.sample_batch(1, &mut rng).is_err(), "empty buffer");
        buf.push(1.0);
        buf.push(2.0);
        assert!(buf.sample_batch(3, &mut rng).is_err(), "k beyond fill");
        assert!(buf.sample_batch(0, &mut rng).is_err(), "k = 0");
        assert!(buf.sample_batch(2, &mut rng).is_ok());
    }

    #[test]
    fn full_batch_is_whole_buffer() {
        let mut buf = ReplayBuffer::new(4).unwrap();
        for i in 0..4 {
            buf.push(i);
        }
        let mut rng = rng_from(1);
        for _ in 0..20 {
            let batch = buf.sample_batch(4, &mut rng).unwrap();
            let mut positions = batch.positions().to_vec();
            positions.sort_unstable();
            assert_eq!(positions, vec![1, 2, 3, 4]);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for i in 0..10 {
            buf.push(i);
        }
        let draw = |seed: u64| {
            let mut rng = rng_from(seed);
            (0..50)
                .map(|_| buf.sample_batch(3, &mut rng).unwrap().positions().to_vec())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn subset_frequencies_match_uniform_law() {
        // fill = 5, k = 2: each of the C(5,2) = 10 subsets has probability
        // 0.1; with 10⁶ draws the empirical frequencies land within ±0.002.
        let mut buf = ReplayBuffer::new(5).unwrap();
        for i in 0..5 {
            buf.push(i);
        }
        let mut rng = rng_from(7);
        let draws = 1_000_000;
        let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
        for _ in 0..draws {
            let mut positions = buf.sample_batch(2, &mut rng).unwrap().positions().to_vec();
            positions.sort_unstable();
            *counts.entry(positions).or_default() += 1;
        }
        assert_eq!(counts.len(), 10);
        for (subset, count) in counts {
            let freq = count as f64 / draws as f64;
            assert!(
                (freq - 0.1).abs() < 0.002,
                "subset {subset:?} frequency {freq}"
            );
        }
    }

    #[test]
    fn subset_chi_square_goodness_of_fit() {
        // Chi-square test over all C(N,K) subsets at significance 0.001.
        // Critical values via the Wilson–Hilferty cube approximation with
        // z_{0.999} = 3.0902 (sub-percent accurate at these df).
        fn chi2_crit(df: f64) -> f64 {
            let z = 3.090_232_306_167_813;
            df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3)
        }
        for (n, k, seed) in [(5usize, 2usize, 11u64), (6, 3, 12), (8, 4, 13)] {
            let mut buf = ReplayBuffer::new(n).unwrap();
            for i in 0..n {
                buf.push(i);
            }
            let cells = crate::exact::binomial(n as u64, k as u64).unwrap() as usize;
            let draws = 1_000_000u64;
            let mut rng = rng_from(seed);
            let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
            for _ in 0..draws {
                let mut positions =
                    buf.sample_batch(k, &mut rng).unwrap().positions().to_vec();
                positions.sort_unstable();
                *counts.entry(positions).or_default() += 1;
            }
            assert_eq!(counts.len(), cells, "every subset must be reachable");
            let expected = draws as f64 / cells as f64;
            let statistic: f64 = counts
                .values()
                .map(|&c| {
                    let d = c as f64 - expected;
                    d * d / expected
                })
                .sum();
            let crit = chi2_crit((cells - 1) as f64);
            assert!(
                statistic < crit,
                "chi-square {statistic:.2} exceeds critical {crit:.2} for N={n}, K={k}"
            );
        }
    }

    #[test]
    fn batch_positions_always_distinct() {
        // Property check across random capacities, fills, and batch sizes.
        let mut rng = rng_from(99);
        for _ in 0..2000 {
            let capacity = rng.gen_range(1..=32);
            let mut buf = ReplayBuffer::new(capacity).unwrap();
            let pushes = rng.gen_range(1..=2 * capacity);
            for i in 0..pushes {
                buf.push(i);
            }
            let k = rng.gen_range(1..=buf.fill());
            let batch = buf.sample_batch(k, &mut rng).unwrap();
            assert_eq!(batch.k(), k);
            let mut seen = vec![false; buf.fill() + 1];
            for &p in batch.positions() {
                assert!(p >= 1 && p <= buf.fill());
                assert!(!seen[p], "duplicate position {p}");
                seen[p] = true;
            }
        }
    }

    #[test]
    fn batch_indices_constructor_validates() {
        assert!(BatchIndices::new(vec![], 5).is_err());
        assert!(BatchIndices::new(vec![0], 5).is_err());
        assert!(BatchIndices::new(vec![6], 5).is_err());
        assert!(BatchIndices::new(vec![2, 2], 5).is_err());
        assert!(BatchIndices::new(vec![1, 3, 5], 5).is_ok());
    }

    #[test]
    fn batch_average_examples() {
        // Items (3, 1, 2) newest-first; positions {1, 3} average to 2.5.
        let mut buf = ReplayBuffer::new(3).unwrap();
        buf.push(2.0);
        buf.push(1.0);
        buf.push(3.0);
        let batch = BatchIndices::new(vec![1, 3], buf.fill()).unwrap();
        assert_eq!(batch_mean(&buf, &batch, |&x| x), 2.5);
        assert_eq!(
            batch_average(&buf, &batch, |&x| vec![x]).value,
            vec![2.5]
        );

        // Whole-buffer batch is the arithmetic mean.
        let all = BatchIndices::new(vec![1, 2, 3], buf.fill()).unwrap();
        assert_eq!(batch_mean(&buf, &all, |&x| x), 2.0);

        // A constant function is invariant to the batch.
        let mut rng = rng_from(5);
        for _ in 0..10 {
            let b = buf.sample_batch(2, &mut rng).unwrap();
            assert_eq!(batch_mean(&buf, &b, |_| 7.25), 7.25);
        }
    }

    #[test]
    fn batch_average_vector_valued() {
        let mut buf = ReplayBuffer::new(2).unwrap();
        buf.push([1.0, 10.0]);
        buf.push([3.0, 30.0]);
        let batch = BatchIndices::new(vec![1, 2], 2).unwrap();
        let avg = batch_average(&buf, &batch, |x| x.to_vec());
        assert_eq!(avg.value, vec![2.0, 20.0]);
    }

    #[test]
    fn batch_probability_examples() {
        assert_eq!(batch_probability(5, 2).unwrap(), Rational::new(1, 10));
        assert_eq!(batch_probability(7, 7).unwrap(), Rational::new(1, 1));
        assert_eq!(
            batch_probability(30, 5).unwrap(),
            Rational::new(1, 142_506)
        );
        assert!(batch_probability(3, 4).is_err());
    }

    #[test]
    fn csv_dump_lists_positions_newest_first() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        buf.push(10);
        buf.push(20);
        let mut out = Vec::new();
        dump_csv(&buf, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "position,item\n1,20\n2,10\n"
        );
    }
}
