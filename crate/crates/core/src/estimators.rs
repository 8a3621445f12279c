//! Online and replay-buffer running-mean estimators.
//!
//! Both estimators track the long-run average reward of a chain with the
//! same `1/t` running-mean update; they differ only in the target fed to the
//! update at step `t`:
//!
//! * **online** — the newest reward itself;
//! * **replay** — the mean of a uniformly sampled batch of `k` rewards from
//!   a FIFO buffer holding the last `n` rewards (during warm-up, while the
//!   buffer holds fewer than `k` items, the whole buffer is averaged).
//!
//! With `n = k = 1` the replay estimator degenerates to the online one —
//! bit-for-bit, which is covered by tests. Across-seed variance curves and
//! the mean-squared successive difference smoothness metric quantify how the
//! two estimators differ.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::markov::{MarkovChain, PathSampler};
use crate::replay::{sample_positions_into, ReplayBuffer};
use crate::seed::{self, derive_seed, rng_from};

/// How seeds are split into per-trace streams; chunk size for parallel
/// across-seed aggregation (fixed, so results never depend on thread count).
const SEED_CHUNK: usize = 32;

/// Which estimator produced a trace or curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMethod {
    /// Plain running mean over the reward stream.
    Online,
    /// Running mean over uniform batch means from a FIFO buffer.
    Replay {
        /// Buffer capacity.
        n: usize,
        /// Batch size.
        k: usize,
    },
}

impl EstimatorMethod {
    /// Short label used in CSV output ("online" / "rb").
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorMethod::Online => "online",
            EstimatorMethod::Replay { .. } => "rb",
        }
    }

    /// Buffer and batch parameters, if any.
    pub fn params(&self) -> Option<(usize, usize)> {
        match *self {
            EstimatorMethod::Online => None,
            EstimatorMethod::Replay { n, k } => Some((n, k)),
        }
    }

    fn validate(&self) -> Result<()> {
        if let EstimatorMethod::Replay { n, k } = *self {
            if n == 0 {
                return Err(Error::Input("buffer capacity must be positive".into()));
            }
            if k == 0 || k > n {
                return Err(Error::Input(format!(
                    "batch size k = {k} is outside [1, n = {n}]"
                )));
            }
        }
        Ok(())
    }
}

/// One estimator run: the estimate after each of the first `horizon` steps.
#[derive(Debug, Clone)]
pub struct EstimatorTrace {
    /// `eta[i]` is the estimate after step `t = i + 1`.
    pub eta: Vec<f64>,
    /// Which estimator produced the trace.
    pub method: EstimatorMethod,
    /// The run's top-level seed.
    pub seed: u64,
    /// Descriptor of the chain that generated the rewards.
    pub chain_descriptor: String,
}

impl EstimatorTrace {
    /// Number of recorded steps.
    pub fn horizon(&self) -> usize {
        self.eta.len()
    }

    /// The 1-based times aligned with [`EstimatorTrace::eta`].
    pub fn times(&self) -> impl Iterator<Item = u64> {
        1..=self.eta.len() as u64
    }

    /// The final estimate.
    pub fn final_eta(&self) -> f64 {
        *self.eta.last().expect("traces are never empty")
    }
}

/// The shared `1/t` running-mean update. Both estimators must round
/// identically, so they funnel through this single expression.
#[inline]
fn running_mean_update(eta: f64, target: f64, t: u64) -> f64 {
    eta + (target - eta) / t as f64
}

/// Online running mean over an explicit reward sequence:
/// `η_t = η_{t−1} + (r_t − η_{t−1}) / t` with `t` counted from 1.
///
/// The first step fully overwrites `eta0`, so the initial value never
/// influences the trace; it is a parameter for symmetry with callers that
/// track a prior estimate.
pub fn online_trace_from_rewards(rewards: &[f64], eta0: f64) -> Vec<f64> {
    let mut eta = eta0;
    rewards
        .iter()
        .zip(1u64..)
        .map(|(&r, t)| {
            eta = running_mean_update(eta, r, t);
            eta
        })
        .collect()
}

/// Replay-buffer running mean over an explicit reward sequence.
///
/// Each step pushes the newest reward, draws a uniform batch of
/// `min(k, fill)` buffer positions (the whole buffer while warming up or
/// when `k = fill`), and feeds the batch mean to the same `1/t` update as
/// the online estimator.
pub fn rb_trace_from_rewards(
    rewards: &[f64],
    n: usize,
    k: usize,
    eta0: f64,
    batch_seed: u64,
) -> Result<Vec<f64>> {
    EstimatorMethod::Replay { n, k }.validate()?;
    let mut buffer: ReplayBuffer<f64> = ReplayBuffer::new(n)?;
    let mut rng = rng_from(batch_seed);
    let mut pool = Vec::with_capacity(n);
    let mut eta = eta0;
    let trace = rewards
        .iter()
        .zip(1u64..)
        .map(|(&r, t)| {
            buffer.push(r);
            let fill = buffer.fill();
            let k_eff = k.min(fill);
            let target = if k_eff == fill {
                // Full-buffer batch: the subset is forced, no draw needed.
                let sum: f64 = buffer.iter_newest_first().sum();
                sum / k_eff as f64
            } else {
                sample_positions_into(fill, k_eff, &mut rng, &mut pool);
                let sum: f64 = pool
                    .iter()
                    .map(|&p| *buffer.get(p).expect("sampled position occupied"))
                    .sum();
                sum / k_eff as f64
            };
            eta = running_mean_update(eta, target, t);
            eta
        })
        .collect();
    Ok(trace)
}

fn collect_rewards(chain: &MarkovChain, horizon: usize, seed: u64) -> Vec<f64> {
    let mut path = PathSampler::new(chain, derive_seed(seed, &[seed::role::PATH]));
    (0..horizon).map(|_| path.next_reward()).collect()
}

/// Run the online estimator over a fresh sample path of the chain.
///
/// The path stream is derived from `seed` exactly as in [`run_rb`], so both
/// estimators see the same rewards when given the same seed.
pub fn run_online(chain: &MarkovChain, horizon: usize, seed: u64) -> Result<EstimatorTrace> {
    if horizon == 0 {
        return Err(Error::Input("horizon must be positive".into()));
    }
    let rewards = collect_rewards(chain, horizon, seed);
    Ok(EstimatorTrace {
        eta: online_trace_from_rewards(&rewards, 0.0),
        method: EstimatorMethod::Online,
        seed,
        chain_descriptor: chain.descriptor().to_string(),
    })
}

/// Run the replay-buffer estimator over a fresh sample path of the chain.
pub fn run_rb(
    chain: &MarkovChain,
    n: usize,
    k: usize,
    horizon: usize,
    seed: u64,
) -> Result<EstimatorTrace> {
    if horizon == 0 {
        return Err(Error::Input("horizon must be positive".into()));
    }
    let rewards = collect_rewards(chain, horizon, seed);
    let eta = rb_trace_from_rewards(&rewards, n, k, 0.0, derive_seed(seed, &[seed::role::BATCH]))?;
    Ok(EstimatorTrace {
        eta,
        method: EstimatorMethod::Replay { n, k },
        seed,
        chain_descriptor: chain.descriptor().to_string(),
    })
}

/// Run `method` for one indexed seed of a multi-seed experiment.
pub fn run_method(
    chain: &MarkovChain,
    method: EstimatorMethod,
    horizon: usize,
    seed: u64,
) -> Result<EstimatorTrace> {
    match method {
        EstimatorMethod::Online => run_online(chain, horizon, seed),
        EstimatorMethod::Replay { n, k } => run_rb(chain, n, k, horizon, seed),
    }
}

/// Across-seed variance of an estimator at every time step.
#[derive(Debug, Clone)]
pub struct VarianceCurve {
    /// `variance[i]` is the unbiased across-seed variance of the estimate at
    /// step `t = i + 1`.
    pub variance: Vec<f64>,
    /// Number of independent seeds aggregated.
    pub num_seeds: usize,
    /// Which estimator the curve describes.
    pub method: EstimatorMethod,
    /// Descriptor of the chain driving the runs.
    pub chain_descriptor: String,
}

impl VarianceCurve {
    /// The 1-based times aligned with [`VarianceCurve::variance`].
    pub fn times(&self) -> impl Iterator<Item = u64> {
        1..=self.variance.len() as u64
    }

    /// Variance at 1-based time `t`.
    pub fn at(&self, t: u64) -> Option<f64> {
        if t == 0 {
            return None;
        }
        self.variance.get(t as usize - 1).copied()
    }

    /// Mean variance over the inclusive time window `[t0, t1]`.
    pub fn window_mean(&self, t0: u64, t1: u64) -> Result<f64> {
        check_window(t0, t1, self.variance.len())?;
        let slice = &self.variance[(t0 - 1) as usize..t1 as usize];
        Ok(slice.iter().sum::<f64>() / slice.len() as f64)
    }
}

fn check_window(t0: u64, t1: u64, horizon: usize) -> Result<()> {
    if t0 == 0 || t1 <= t0 || t1 as usize > horizon {
        return Err(Error::Input(format!(
            "window [{t0}, {t1}] is not inside [1, {horizon}] or is empty"
        )));
    }
    Ok(())
}

/// Simulate `num_seeds` independent runs of `method` and return the unbiased
/// across-seed variance of the estimate at every step.
///
/// Per-seed streams are derived as `derive_seed(base_seed, [seed_index])`.
/// Seeds are simulated in parallel but aggregated in seed order over fixed
/// chunks, so the result is identical for every thread count.
pub fn variance_across_seeds(
    chain: &MarkovChain,
    method: EstimatorMethod,
    horizon: usize,
    num_seeds: usize,
    base_seed: u64,
) -> Result<VarianceCurve> {
    method.validate()?;
    if horizon == 0 {
        return Err(Error::Input("horizon must be positive".into()));
    }
    if num_seeds < 2 {
        return Err(Error::Input(
            "across-seed variance needs at least 2 seeds".into(),
        ));
    }
    // Welford accumulators per time step, folded in seed order.
    let mut count = 0u64;
    let mut mean = vec![0.0f64; horizon];
    let mut m2 = vec![0.0f64; horizon];
    for chunk_start in (0..num_seeds).step_by(SEED_CHUNK) {
        let chunk_end = (chunk_start + SEED_CHUNK).min(num_seeds);
        let traces: Vec<Vec<f64>> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|i| {
                run_method(chain, method, horizon, derive_seed(base_seed, &[i as u64]))
                    .map(|trace| trace.eta)
            })
            .collect::<Result<_>>()?;
        for eta in traces {
            count += 1;
            let inv = 1.0 / count as f64;
            for t in 0..horizon {
                let delta = eta[t] - mean[t];
                mean[t] += delta * inv;
                m2[t] += delta * (eta[t] - mean[t]);
            }
        }
    }
    let denom = (num_seeds - 1) as f64;
    let variance = m2.into_iter().map(|v| v / denom).collect();
    Ok(VarianceCurve {
        variance,
        num_seeds,
        method,
        chain_descriptor: chain.descriptor().to_string(),
    })
}

/// Mean-squared successive difference of a trace over the inclusive time
/// window `[t0, t1]`: `(1/(t1−t0)) Σ_{t=t0}^{t1−1} (η_{t+1} − η_t)²`.
///
/// Small values mean a smooth trace; a constant trace scores 0 and an exact
/// linear ramp of slope `s` scores `s²`.
pub fn smoothness_metric(trace: &EstimatorTrace, t0: u64, t1: u64) -> Result<f64> {
    check_window(t0, t1, trace.eta.len())?;
    let slice = &trace.eta[(t0 - 1) as usize..t1 as usize];
    let sum: f64 = slice.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
    Ok(sum / (t1 - t0) as f64)
}

/// Seed-averaged smoothness of `method` over the window `[t0, t1]`.
///
/// Runs `num_seeds` independent traces (same seed derivation as
/// [`variance_across_seeds`]) and averages their smoothness metrics in seed
/// order; deterministic for every thread count.
pub fn average_smoothness(
    chain: &MarkovChain,
    method: EstimatorMethod,
    horizon: usize,
    t0: u64,
    t1: u64,
    num_seeds: usize,
    base_seed: u64,
) -> Result<f64> {
    method.validate()?;
    if num_seeds == 0 {
        return Err(Error::Input("need at least one seed".into()));
    }
    check_window(t0, t1, horizon)?;
    let mut total = 0.0;
    for chunk_start in (0..num_seeds).step_by(SEED_CHUNK) {
        let chunk_end = (chunk_start + SEED_CHUNK).min(num_seeds);
        let values: Vec<f64> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|i| {
                let trace =
                    run_method(chain, method, horizon, derive_seed(base_seed, &[i as u64]))?;
                smoothness_metric(&trace, t0, t1)
            })
            .collect::<Result<_>>()?;
        total += values.iter().sum::<f64>();
    }
    Ok(total / num_seeds as f64)
}
