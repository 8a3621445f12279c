//! Second-moment transfer through the replay buffer.
//!
//! When a stationary process is pushed through a FIFO buffer of capacity `n`
//! and read back as uniform-batch averages, the time difference between one
//! random element of the batch at time `t` and one at time `t + τ` is
//! `τ` plus a symmetric triangular offset on `{−n+1, …, n−1}` with weights
//! `(n − |d|)/n²` — independently of the batch size. Autocorrelations and
//! autocovariances of the batch-average process are therefore triangular
//! smoothings of the input's; at lag 0 the variance drops by a factor of `n`
//! for uncorrelated inputs.
//!
//! This module provides the kernel ([`TriangularKernel`]), an exact
//! enumeration oracle over all batch pairs ([`tau_prime_bruteforce`]), the
//! transfer prediction ([`predict_second_moment`]), an analytic
//! autocovariance for finite chains ([`analytic_autocov_markov`]), and
//! empirical estimators for both the raw process ([`empirical_autocov_z`])
//! and the batch-average process ([`empirical_autocov_y`]).

use std::collections::BTreeMap;

use itertools::Itertools as _;

use crate::error::{Error, Result};
use crate::exact::{binomial, Rational};
use crate::linalg::dot;
use crate::markov::{stationary_distribution, MarkovChain, PathSampler};
use crate::replay::ReplayBuffer;
use crate::seed::{self, derive_seed, rng_from};

/// Number of batches used for batch-means standard errors.
const BATCH_MEANS_BATCHES: usize = 30;

/// Enumeration bound for the brute-force oracle.
const BRUTEFORCE_MAX_N: usize = 10;

// ---------------------------------------------------------------------------
// Triangular kernel
// ---------------------------------------------------------------------------

/// The triangular time-difference kernel of buffer batch sampling:
/// weight `(n − |d|)/n²` at offset `d ∈ {−n+1, …, n−1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriangularKernel {
    n: usize,
}

impl TriangularKernel {
    /// Kernel for a buffer of capacity `n ≥ 1`.
    pub fn new(n: usize) -> Result<TriangularKernel> {
        if n == 0 {
            return Err(Error::Config("kernel capacity must be positive".into()));
        }
        Ok(TriangularKernel { n })
    }

    /// The buffer capacity the kernel describes.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Inclusive support `−(n−1) ..= n−1`.
    pub fn support(&self) -> std::ops::RangeInclusive<i64> {
        let n = self.n as i64;
        -(n - 1)..=(n - 1)
    }

    /// Exact weight at offset `d`; zero outside the support.
    pub fn weight_exact(&self, d: i64) -> Rational {
        let n = self.n as i128;
        let mag = d.unsigned_abs() as i128;
        if mag >= n {
            Rational::new(0, 1)
        } else {
            Rational::new(n - mag, n * n)
        }
    }

    /// Floating-point weight at offset `d`.
    pub fn weight(&self, d: i64) -> f64 {
        let n = self.n as f64;
        let mag = d.unsigned_abs() as f64;
        if mag >= n {
            0.0
        } else {
            (n - mag) / (n * n)
        }
    }

    /// All `(offset, exact weight)` pairs over the support, in offset order.
    pub fn weights_exact(&self) -> Vec<(i64, Rational)> {
        self.support().map(|d| (d, self.weight_exact(d))).collect()
    }
}

/// Construct the triangular kernel for buffer capacity `n`.
pub fn triangular_kernel(n: usize) -> Result<TriangularKernel> {
    TriangularKernel::new(n)
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

/// Exact distribution of the time difference `τ′` between one uniformly
/// chosen element of a batch at base lag 0 and one of an independently drawn
/// batch at base lag `τ`, obtained by full enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TauPrimeDistribution {
    /// The lag between the two batch draws.
    pub base_lag: i64,
    /// Probability of each realizable time difference, exact.
    pub probs: BTreeMap<i64, Rational>,
    /// Total number of enumerated (subset pair, element pair) tuples:
    /// `K² · C(n,K)²`.
    pub enumeration_count: u128,
}

/// Enumerate all ordered pairs of K-subsets of `{1, …, n}` and all element
/// pairs within them, tallying the time difference `τ + a − b` for `a` in the
/// first subset and `b` in the second.
///
/// This is the independent oracle for [`TriangularKernel`]: the resulting
/// distribution equals the kernel shifted by `τ`, for every `k` — exactly.
pub fn tau_prime_bruteforce(n: usize, k: usize, tau: i64) -> Result<TauPrimeDistribution> {
    if n == 0 {
        return Err(Error::Input("population size must be positive".into()));
    }
    if n > BRUTEFORCE_MAX_N {
        return Err(Error::TooLarge(format!(
            "enumeration oracle is bounded at n = {BRUTEFORCE_MAX_N}, got n = {n}"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::Input(format!(
            "subset size k = {k} is outside [1, n = {n}]"
        )));
    }
    let subsets: Vec<Vec<i64>> = (1..=n as i64).combinations(k).collect();
    let mut counts: BTreeMap<i64, u128> = BTreeMap::new();
    for first in &subsets {
        for second in &subsets {
            for &a in first {
                for &b in second {
                    *counts.entry(tau + a - b).or_default() += 1;
                }
            }
        }
    }
    let subset_count = binomial(n as u64, k as u64)? as u128;
    let total = (k as u128 * subset_count).pow(2);
    debug_assert_eq!(counts.values().sum::<u128>(), total);
    let probs = counts
        .into_iter()
        .map(|(d, c)| (d, Rational::new(c as i128, total as i128)))
        .collect();
    Ok(TauPrimeDistribution {
        base_lag: tau,
        probs,
        enumeration_count: total,
    })
}

// ---------------------------------------------------------------------------
// Lag series
// ---------------------------------------------------------------------------

/// Whether a [`LagSeries`] holds autocorrelations (raw second moments) or
/// autocovariances (mean-centered).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// Raw second moment `E[Z_t Z_{t+τ}]`.
    Autocorrelation,
    /// Centered second moment `Cov(Z_t, Z_{t+τ})`.
    Autocovariance,
}

impl SeriesKind {
    /// Lower-case label used in CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            SeriesKind::Autocorrelation => "autocorrelation",
            SeriesKind::Autocovariance => "autocovariance",
        }
    }
}

/// Second-moment values on a set of lags, optionally with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSeries {
    lags: Vec<i64>,
    values: Vec<f64>,
    kind: SeriesKind,
    standard_errors: Option<Vec<f64>>,
}

impl LagSeries {
    /// Validating constructor: lags strictly increasing, values finite and
    /// aligned, standard errors (if present) aligned and nonnegative.
    pub fn new(
        lags: Vec<i64>,
        values: Vec<f64>,
        kind: SeriesKind,
        standard_errors: Option<Vec<f64>>,
    ) -> Result<LagSeries> {
        if lags.is_empty() {
            return Err(Error::Input("lag series needs at least one lag".into()));
        }
        if lags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("lags must be strictly increasing".into()));
        }
        if values.len() != lags.len() {
            return Err(Error::Input(format!(
                "value count {} does not match lag count {}",
                values.len(),
                lags.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("lag series values must be finite".into()));
        }
        if let Some(se) = &standard_errors {
            if se.len() != lags.len() {
                return Err(Error::Input(format!(
                    "standard error count {} does not match lag count {}",
                    se.len(),
                    lags.len()
                )));
            }
            if se.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(Error::Input(
                    "standard errors must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(LagSeries { lags, values, kind, standard_errors })
    }

    /// The lags, strictly increasing.
    pub fn lags(&self) -> &[i64] {
        &self.lags
    }

    /// The values, aligned with [`LagSeries::lags`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Which second moment this series holds.
    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    /// Standard errors, if the series came from an empirical estimator.
    pub fn standard_errors(&self) -> Option<&[f64]> {
        self.standard_errors.as_deref()
    }

    /// Value at exactly this lag, if present.
    pub fn value_at(&self, lag: i64) -> Option<f64> {
        self.lags
            .binary_search(&lag)
            .ok()
            .map(|idx| self.values[idx])
    }

    /// Value at `lag` using stationarity symmetry: a missing negative lag is
    /// served by its mirror image.
    pub fn symmetric_value_at(&self, lag: i64) -> Option<f64> {
        self.value_at(lag).or_else(|| self.value_at(-lag))
    }
}

// ---------------------------------------------------------------------------
// Transfer prediction
// ---------------------------------------------------------------------------

/// Predict the batch-average process's second moment at lag `tau` from the
/// input process's series: `Σ_d weight(d) · z(d + tau)`, with missing
/// negative lags of `z` filled by stationarity symmetry.
///
/// Applies identically to autocorrelation and autocovariance series. Errors
/// with the full list of missing lags when `z_series` does not cover
/// `tau − n + 1 ..= tau + n − 1` (after symmetry folding).
pub fn predict_second_moment(
    kernel: &TriangularKernel,
    z_series: &LagSeries,
    tau: i64,
) -> Result<f64> {
    let missing: Vec<i64> = kernel
        .support()
        .map(|d| d + tau)
        .filter(|&lag| z_series.symmetric_value_at(lag).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingLags { missing });
    }
    Ok(kernel
        .support()
        .map(|d| {
            let z = z_series
                .symmetric_value_at(d + tau)
                .expect("coverage verified above");
            kernel.weight(d) * z
        })
        .sum())
}

// ---------------------------------------------------------------------------
// Analytic autocovariance for chains
// ---------------------------------------------------------------------------

/// Stationary autocovariance of `f` along the chain at lag `tau`:
/// `Σ_s μ(s) f(s) Σ_{s'} Pᵗ(s, s') f(s') − (Σ_s μ(s) f(s))²`,
/// with the matrix power computed by repeated squaring.
pub fn analytic_autocov_markov(
    chain: &MarkovChain,
    f: &dyn Fn(usize) -> f64,
    tau: u64,
) -> Result<f64> {
    let mu = stationary_distribution(chain, 1e-10)?.probs;
    let n = chain.num_states();
    let fv: Vec<f64> = (0..n).map(f).collect();
    let mean = dot(&mu, &fv);
    let ptau = chain.transition().pow(tau);
    let second: f64 = (0..n)
        .map(|s| mu[s] * fv[s] * dot(ptau.row(s), &fv))
        .sum();
    Ok(second - mean * mean)
}

/// Analytic autocovariance of `f` along the chain at every requested lag,
/// sharing the stationary solve and stepping the matrix power incrementally.
pub fn analytic_autocov_series(
    chain: &MarkovChain,
    f: &dyn Fn(usize) -> f64,
    lags: &[i64],
) -> Result<LagSeries> {
    if lags.iter().any(|&l| l < 0) {
        return Err(Error::Input("analytic lags must be nonnegative".into()));
    }
    let mu = stationary_distribution(chain, 1e-10)?.probs;
    let n = chain.num_states();
    let fv: Vec<f64> = (0..n).map(f).collect();
    let mean = dot(&mu, &fv);
    let mut values = Vec::with_capacity(lags.len());
    let mut power = crate::linalg::Mat::identity(n);
    let mut current_lag = 0i64;
    for &lag in lags {
        while current_lag < lag {
            power = power.matmul(chain.transition());
            current_lag += 1;
        }
        let second: f64 = (0..n)
            .map(|s| mu[s] * fv[s] * dot(power.row(s), &fv))
            .sum();
        values.push(second - mean * mean);
    }
    LagSeries::new(lags.to_vec(), values, SeriesKind::Autocovariance, None)
}

// ---------------------------------------------------------------------------
// Empirical estimators
// ---------------------------------------------------------------------------

/// Mean and batch-means standard error of a sequence of products.
fn mean_and_batch_se(products: &[f64]) -> (f64, f64) {
    let len = products.len();
    let mean = products.iter().sum::<f64>() / len as f64;
    let batch_len = len / BATCH_MEANS_BATCHES;
    debug_assert!(batch_len >= 1, "callers validate sample counts");
    let means: Vec<f64> = (0..BATCH_MEANS_BATCHES)
        .map(|b| {
            let chunk = &products[b * batch_len..(b + 1) * batch_len];
            chunk.iter().sum::<f64>() / batch_len as f64
        })
        .collect();
    let grand = means.iter().sum::<f64>() / BATCH_MEANS_BATCHES as f64;
    let var = means
        .iter()
        .map(|m| (m - grand) * (m - grand))
        .sum::<f64>()
        / (BATCH_MEANS_BATCHES - 1) as f64;
    (mean, (var / BATCH_MEANS_BATCHES as f64).sqrt())
}

fn validate_empirical_lags(lags: &[i64]) -> Result<i64> {
    if lags.is_empty() {
        return Err(Error::Input("need at least one lag".into()));
    }
    if lags.iter().any(|&l| l < 0) {
        return Err(Error::Input(
            "empirical estimators take nonnegative lags".into(),
        ));
    }
    if lags.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("lags must be strictly increasing".into()));
    }
    Ok(*lags.last().expect("nonempty"))
}

/// Empirical autocovariance of a scalar sequence at the requested lags.
///
/// Uses the biased `1/T` normalization over the post-burn-in segment and
/// batch-means standard errors with 30 batches.
pub fn empirical_autocov_z(path: &[f64], lags: &[i64], burn_in: usize) -> Result<LagSeries> {
    let max_lag = validate_empirical_lags(lags)?;
    let segment = path
        .get(burn_in..)
        .ok_or_else(|| Error::Input("burn-in exceeds path length".into()))?;
    let t = segment.len();
    let needed = max_lag as usize + BATCH_MEANS_BATCHES;
    if t < needed {
        return Err(Error::Input(format!(
            "post-burn-in length {t} is too short for max lag {max_lag} \
             (need at least {needed})"
        )));
    }
    let mean = segment.iter().sum::<f64>() / t as f64;
    let mut values = Vec::with_capacity(lags.len());
    let mut errors = Vec::with_capacity(lags.len());
    for &lag in lags {
        let lag = lag as usize;
        let products: Vec<f64> = (0..t - lag)
            .map(|i| (segment[i] - mean) * (segment[i + lag] - mean))
            .collect();
        let (_, se) = mean_and_batch_se(&products);
        // Biased normalization: divide the full product sum by T, not T − τ.
        let value = products.iter().sum::<f64>() / t as f64;
        values.push(value);
        errors.push(se);
    }
    LagSeries::new(lags.to_vec(), values, SeriesKind::Autocovariance, Some(errors))
}

/// Empirical autocovariance of the batch-average process.
///
/// Drives `chain` through a replay buffer of capacity `n`, recording from
/// the first step at which the buffer is full. At every recorded step two
/// independent batches of size `k` are drawn: the lag-0 covariance pairs the
/// two draws of the same step (matching the definition of the time-difference
/// distribution, where even equal times use two independent batches), and
/// positive lags pair first draws `lag` steps apart. Values use the biased
/// `1/T` normalization; standard errors are batch-means with 30 batches.
pub fn empirical_autocov_y(
    chain: &MarkovChain,
    f: &dyn Fn(usize) -> f64,
    n: usize,
    k: usize,
    horizon: usize,
    lags: &[i64],
    seed: u64,
) -> Result<LagSeries> {
    let max_lag = validate_empirical_lags(lags)?;
    if n == 0 {
        return Err(Error::Input("buffer capacity must be positive".into()));
    }
    if k == 0 || k > n {
        return Err(Error::Input(format!(
            "batch size k = {k} is outside [1, n = {n}]"
        )));
    }
    let records = horizon.saturating_sub(n - 1);
    let needed = max_lag as usize + BATCH_MEANS_BATCHES;
    if records < needed {
        return Err(Error::Input(format!(
            "horizon {horizon} leaves {records} recorded steps at capacity {n}, \
             need at least {needed} for max lag {max_lag}"
        )));
    }

    let mut path = PathSampler::new(chain, derive_seed(seed, &[seed::role::PATH]));
    let mut batch_rng = rng_from(derive_seed(seed, &[seed::role::BATCH]));
    let mut buffer: ReplayBuffer<f64> = ReplayBuffer::new(n).expect("validated above");
    let mut pool = Vec::with_capacity(n);

    let mut first_draw = Vec::with_capacity(records);
    let mut second_draw = Vec::with_capacity(records);
    let draw_mean = |buffer: &ReplayBuffer<f64>,
                         rng: &mut seed::Rng,
                         pool: &mut Vec<usize>| {
        crate::replay::sample_positions_into(n, k, rng, pool);
        let sum: f64 = pool
            .iter()
            .map(|&p| *buffer.get(p).expect("position within fill"))
            .sum();
        sum / k as f64
    };
    for _ in 0..horizon {
        buffer.push(f(path.next_state()));
        if buffer.is_full() {
            first_draw.push(draw_mean(&buffer, &mut batch_rng, &mut pool));
            second_draw.push(draw_mean(&buffer, &mut batch_rng, &mut pool));
        }
    }
    debug_assert_eq!(first_draw.len(), records);

    let t = records;
    let mean_first = first_draw.iter().sum::<f64>() / t as f64;
    let mean_second = second_draw.iter().sum::<f64>() / t as f64;
    let mut values = Vec::with_capacity(lags.len());
    let mut errors = Vec::with_capacity(lags.len());
    for &lag in lags {
        let lag = lag as usize;
        let products: Vec<f64> = if lag == 0 {
            (0..t)
                .map(|i| (first_draw[i] - mean_first) * (second_draw[i] - mean_second))
                .collect()
        } else {
            (0..t - lag)
                .map(|i| (first_draw[i] - mean_first) * (first_draw[i + lag] - mean_first))
                .collect()
        };
        let (_, se) = mean_and_batch_se(&products);
        values.push(products.iter().sum::<f64>() / t as f64);
        errors.push(se);
    }
    LagSeries::new(lags.to_vec(), values, SeriesKind::Autocovariance, Some(errors))
}
