//! Finite Markov chains and decision processes.
//!
//! This module supplies the source processes that feed the replay buffer: a
//! general finite [`MarkovChain`] with per-state rewards, the block-structured
//! reward chain used by the experiment suite ([`build_block_mrp`]), and a
//! finite [`Mdp`] for the actor-critic. Stationary distributions, average
//! rewards, spectral gaps, and seeded sample paths are computed here.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{dot, l2_norm, Mat};
use crate::seed::{self, derive_seed, rng_from};

/// Maximum state count for which the stationary distribution is computed by
/// direct linear solve; larger chains use power iteration.
const DIRECT_SOLVE_LIMIT: usize = 200;

/// Tolerance for row-stochasticity validation.
const ROW_SUM_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Markov chain
// ---------------------------------------------------------------------------

/// A finite Markov chain with a deterministic reward attached to each state.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    transition: Mat,
    state_reward: Vec<f64>,
    descriptor: String,
}

impl MarkovChain {
    /// Validating constructor: `transition` must be square and row-stochastic
    /// (each row sums to 1 within `1e-12`, all entries in `[0, 1]`), and the
    /// rewards must be finite with one entry per state.
    pub fn new(transition: Mat, state_reward: Vec<f64>) -> Result<MarkovChain> {
        let n = transition.rows();
        if n == 0 {
            return Err(Error::Config("chain needs at least one state".into()));
        }
        if transition.cols() != n {
            return Err(Error::Config(format!(
                "transition matrix must be square, got {}x{}",
                transition.rows(),
                transition.cols()
            )));
        }
        if state_reward.len() != n {
            return Err(Error::Config(format!(
                "reward vector has length {}, expected {n}",
                state_reward.len()
            )));
        }
        if state_reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::Config("state rewards must be finite".into()));
        }
        for s in 0..n {
            let row = transition.row(s);
            if row.iter().any(|&p| !(0.0..=1.0 + ROW_SUM_TOL).contains(&p)) {
                return Err(Error::Config(format!(
                    "transition row {s} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Config(format!(
                    "transition row {s} sums to {sum}, expected 1 within {ROW_SUM_TOL}"
                )));
            }
        }
        Ok(MarkovChain {
            transition,
            state_reward,
            descriptor: format!("chain states={n}"),
        })
    }

    /// Two-state chain `[[1-p, p], [q, 1-q]]` with the given state rewards.
    pub fn two_state(p: f64, q: f64, rewards: [f64; 2]) -> Result<MarkovChain> {
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return Err(Error::Config(format!(
                "two-state switch probabilities must lie in [0, 1], got p={p}, q={q}"
            )));
        }
        let transition = Mat::from_rows(&[vec![1.0 - p, p], vec![q, 1.0 - q]])?;
        Ok(MarkovChain::new(transition, rewards.to_vec())?
            .with_descriptor(format!("two-state p={p} q={q}")))
    }

    /// Replace the human-readable descriptor carried into run metadata.
    pub fn with_descriptor(mut self, descriptor: impl Into<String>) -> MarkovChain {
        self.descriptor = descriptor.into();
        self
    }

    /// Number of states.
    pub fn num_states(&self) -> usize {
        self.state_reward.len()
    }

    /// The transition matrix.
    pub fn transition(&self) -> &Mat {
        &self.transition
    }

    /// Per-state rewards.
    pub fn state_reward(&self) -> &[f64] {
        &self.state_reward
    }

    /// Reward of one state.
    pub fn reward(&self, state: usize) -> f64 {
        self.state_reward[state]
    }

    /// Human-readable description of how this chain was built.
    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// Plain-text serialization: the state count, the transition rows, then
    /// the reward vector, each on its own line with space-separated values.
    pub fn to_text(&self) -> String {
        let n = self.num_states();
        let mut out = String::new();
        out.push_str(&n.to_string());
        out.push('\n');
        for s in 0..n {
            push_number_line(&mut out, self.transition.row(s));
        }
        push_number_line(&mut out, &self.state_reward);
        out
    }

    /// Parse the format produced by [`MarkovChain::to_text`].
    pub fn from_text(text: &str) -> Result<MarkovChain> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("empty chain text".into()))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad state count: {e}")))?;
        let mut rows = Vec::with_capacity(n);
        for s in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing transition row {s}")))?;
            rows.push(parse_number_line(line, n, &format!("transition row {s}"))?);
        }
        let reward_line = lines
            .next()
            .ok_or_else(|| Error::Parse("missing reward line".into()))?;
        let rewards = parse_number_line(reward_line, n, "reward line")?;
        if lines.next().is_some() {
            return Err(Error::Parse("trailing content after reward line".into()));
        }
        MarkovChain::new(Mat::from_rows(&rows)?, rewards)
    }
}

fn push_number_line(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&v.to_string());
    }
    out.push('\n');
}

fn parse_number_line(line: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| Error::Parse(format!("{what}: bad number {tok:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::Parse(format!(
            "{what}: expected {expected} values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// Block-structured reward chain
// ---------------------------------------------------------------------------

/// Configuration of the block-structured reward chain: `num_blocks` blocks of
/// `states_per_block` states each, with total escape probability `p_out`
/// spread uniformly over all foreign states and the remaining mass spread
/// uniformly over the home block (self-transitions included).
#[derive(Debug, Clone)]
pub struct BlockMrpConfig {
    /// Number of blocks (at least 2).
    pub num_blocks: usize,
    /// States in each block (at least 1).
    pub states_per_block: usize,
    /// Probability of leaving the current block, strictly inside (0, 1).
    pub p_out: f64,
    /// Reward attached to every state of each block; one entry per block.
    pub block_rewards: Vec<f64>,
}

impl BlockMrpConfig {
    fn validate(&self) -> Result<()> {
        if self.num_blocks < 2 {
            return Err(Error::Config(format!(
                "block chain needs at least 2 blocks, got {}",
                self.num_blocks
            )));
        }
        if self.states_per_block == 0 {
            return Err(Error::Config("states_per_block must be positive".into()));
        }
        if !(self.p_out > 0.0 && self.p_out < 1.0) {
            return Err(Error::Config(format!(
                "p_out must lie strictly inside (0, 1), got {}",
                self.p_out
            )));
        }
        if self.block_rewards.len() != self.num_blocks {
            return Err(Error::Config(format!(
                "expected {} block rewards, got {}",
                self.num_blocks,
                self.block_rewards.len()
            )));
        }
        if self.block_rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::Config("block rewards must be finite".into()));
        }
        Ok(())
    }
}

/// Build the block-structured reward chain described by `config`.
///
/// From any state, mass `1 - p_out` is spread uniformly over its own block
/// (including the state itself) and mass `p_out` uniformly over all states of
/// the other blocks; the reward of a state is its block's reward.
pub fn build_block_mrp(config: &BlockMrpConfig) -> Result<MarkovChain> {
    config.validate()?;
    let m = config.states_per_block;
    let n = config.num_blocks * m;
    let within = (1.0 - config.p_out) / m as f64;
    let cross = config.p_out / ((config.num_blocks - 1) * m) as f64;
    let transition = Mat::from_fn(n, n, |s, t| if s / m == t / m { within } else { cross });
    let rewards: Vec<f64> = (0..n).map(|s| config.block_rewards[s / m]).collect();
    Ok(MarkovChain::new(transition, rewards)?.with_descriptor(format!(
        "block-mrp blocks={} states_per_block={} p_out={} rewards={:?}",
        config.num_blocks, config.states_per_block, config.p_out, config.block_rewards
    )))
}

// ---------------------------------------------------------------------------
// Stationary analysis
// ---------------------------------------------------------------------------

/// A stationary distribution together with its achieved fixed-point residual.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    /// Probability of each state; nonnegative, sums to 1.
    pub probs: Vec<f64>,
    /// `‖μᵀP − μᵀ‖∞` of the returned vector.
    pub residual: f64,
}

/// Compute the stationary distribution of `chain`.
///
/// Uses a direct linear solve for chains of at most 200 states and L1-
/// normalized power iteration above that. The caller is responsible for
/// supplying an irreducible, aperiodic chain; violations surface as a
/// convergence failure.
pub fn stationary_distribution(chain: &MarkovChain, tol: f64) -> Result<StationaryDistribution> {
    let n = chain.num_states();
    let mut probs = if n <= DIRECT_SOLVE_LIMIT {
        stationary_direct(chain)?
    } else {
        stationary_power(chain, tol)?
    };
    // Direct solves can leave harmless sub-epsilon negatives; anything larger
    // means the fixed point is not a probability vector.
    for p in &mut probs {
        if *p < 0.0 {
            if *p < -1e-9 {
                return Err(Error::NoConvergence(format!(
                    "stationary solve produced negative mass {p}; chain may not be ergodic"
                )));
            }
            *p = 0.0;
        }
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    let residual = stationary_residual(chain, &probs);
    if residual > tol {
        return Err(Error::NoConvergence(format!(
            "stationary residual {residual:.3e} exceeds tolerance {tol:.3e}"
        )));
    }
    Ok(StationaryDistribution { probs, residual })
}

fn stationary_residual(chain: &MarkovChain, probs: &[f64]) -> f64 {
    let image = chain.transition.vecmat(probs);
    image
        .iter()
        .zip(probs)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Direct solve of `μᵀP = μᵀ, Σμ = 1`: the transposed balance equations with
/// the last one replaced by the normalization constraint.
fn stationary_direct(chain: &MarkovChain) -> Result<Vec<f64>> {
    let n = chain.num_states();
    let system = Mat::from_fn(n, n, |i, j| {
        if i == n - 1 {
            1.0
        } else {
            let p_ji = chain.transition[(j, i)];
            if i == j {
                p_ji - 1.0
            } else {
                p_ji
            }
        }
    });
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    system.solve(&rhs).map_err(|e| {
        Error::NoConvergence(format!(
            "stationary balance equations are singular ({e}); chain may not be ergodic"
        ))
    })
}

fn stationary_power(chain: &MarkovChain, tol: f64) -> Result<Vec<f64>> {
    let n = chain.num_states();
    let mut mu = vec![1.0 / n as f64; n];
    const MAX_ITERS: usize = 200_000;
    for _ in 0..MAX_ITERS {
        let mut next = chain.transition.vecmat(&mu);
        let total: f64 = next.iter().sum();
        for p in &mut next {
            *p /= total;
        }
        let diff = next
            .iter()
            .zip(&mu)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        mu = next;
        if diff <= tol * 0.5 && stationary_residual(chain, &mu) <= tol {
            return Ok(mu);
        }
    }
    Err(Error::NoConvergence(format!(
        "power iteration did not reach residual {tol:.3e} within {MAX_ITERS} iterations"
    )))
}

/// Long-run average reward `Σ_s μ(s) r(s)` of the chain.
pub fn average_reward(chain: &MarkovChain) -> Result<f64> {
    let mu = stationary_distribution(chain, 1e-10)?;
    Ok(dot(&mu.probs, &chain.state_reward))
}

// ---------------------------------------------------------------------------
// Spectral gap
// ---------------------------------------------------------------------------

/// Spectral gap `1 − |λ₂|` of a transition matrix, with the residual of the
/// eigen-pair estimate that produced it.
#[derive(Debug, Clone, Copy)]
pub struct SpectralGap {
    /// `1 − |λ₂|`, clamped to `[0, 1]`.
    pub gap: f64,
    /// `‖Bv − λv‖∞` for the deflated matrix `B = P − 𝟙μᵀ` at the returned
    /// eigen-pair estimate. Small values certify the estimate; a large value
    /// flags non-convergence (e.g. a complex subdominant pair), in which case
    /// `gap` comes from the geometric growth rate of the iteration instead.
    pub residual: f64,
}

/// Estimate the spectral gap `1 − |λ₂|` of `chain` by power iteration on the
/// deflated matrix `B = P − 𝟙μᵀ`, whose dominant eigenvalue is the
/// subdominant eigenvalue of `P`.
pub fn spectral_gap(chain: &MarkovChain) -> Result<SpectralGap> {
    let n = chain.num_states();
    let mu = stationary_distribution(chain, 1e-10)?.probs;
    if n == 1 {
        return Ok(SpectralGap { gap: 1.0, residual: 0.0 });
    }

    // B v = P v − 𝟙 (μ·v), applied without forming B.
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = chain.transition.matvec(v);
        let shift = dot(&mu, v);
        for o in &mut out {
            *o -= shift;
        }
        out
    };

    let mut rng = rng_from(derive_seed(0xB1A5, &[seed::role::INIT, n as u64]));
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = l2_norm(&v);
    for x in &mut v {
        *x /= norm;
    }

    const MAX_ITERS: usize = 20_000;
    const GROWTH_WINDOW: usize = 1_024;
    let mut log_growth = [0.0f64; GROWTH_WINDOW];
    let mut growth_cursor = 0usize;
    let mut growth_seen = 0usize;
    let mut last_residual = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let image = apply(&v);
        let growth = l2_norm(&image);
        if growth < 1e-13 {
            // B annihilates the iterate: no subdominant mass, λ₂ = 0.
            return Ok(SpectralGap { gap: 1.0, residual: growth });
        }
        // Rayleigh quotient and eigen-residual at the current unit iterate.
        let lambda = dot(&v, &image);
        let mut residual = 0.0f64;
        for i in 0..n {
            residual = residual.max((image[i] - lambda * v[i]).abs());
        }
        last_residual = residual;
        log_growth[growth_cursor] = growth.ln();
        growth_cursor = (growth_cursor + 1) % GROWTH_WINDOW;
        growth_seen += 1;
        for (x, y) in v.iter_mut().zip(&image) {
            *x = y / growth;
        }
        if residual <= 1e-10 {
            return Ok(SpectralGap {
                gap: (1.0 - lambda.abs()).clamp(0.0, 1.0),
                residual,
            });
        }
    }
    // No real dominant eigen-pair emerged (complex pair or very tight
    // clustering): fall back to the average geometric growth rate of the
    // final window, which still converges to |λ₂|, and leave the large
    // residual in place as the non-convergence flag.
    let window = growth_seen.min(GROWTH_WINDOW);
    let mean_log: f64 = log_growth[..window].iter().sum::<f64>() / window as f64;
    Ok(SpectralGap {
        gap: (1.0 - mean_log.exp()).clamp(0.0, 1.0),
        residual: last_residual,
    })
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Draw an index from a finite distribution by inverse-CDF scan.
///
/// `probs` must be a (numerically) normalized probability vector; the draw is
/// robust to sub-epsilon deviation from exact normalization.
pub fn sample_categorical(rng: &mut seed::Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    // Total mass fell a rounding error short of u: return the last state that
    // carries probability.
    last_positive
}

/// Streaming sampler of a chain trajectory.
///
/// The first state is drawn uniformly over all states; each subsequent state
/// follows the transition row of its predecessor. The iterator is infinite.
pub struct PathSampler<'a> {
    chain: &'a MarkovChain,
    rng: seed::Rng,
    current: Option<usize>,
}

impl<'a> PathSampler<'a> {
    /// Start a new trajectory with its own generator seeded by `seed`.
    pub fn new(chain: &'a MarkovChain, seed: u64) -> PathSampler<'a> {
        PathSampler { chain, rng: rng_from(seed), current: None }
    }

    /// Advance and return the next state of the trajectory.
    pub fn next_state(&mut self) -> usize {
        let next = match self.current {
            None => self.rng.gen_range(0..self.chain.num_states()),
            Some(s) => sample_categorical(&mut self.rng, self.chain.transition.row(s)),
        };
        self.current = Some(next);
        next
    }

    /// Advance and return the next state's reward.
    pub fn next_reward(&mut self) -> f64 {
        let s = self.next_state();
        self.chain.reward(s)
    }
}

/// Sample a trajectory of `horizon` `(state, reward)` pairs.
///
/// Deterministic given `seed`; the initial state is uniform over states.
pub fn sample_path(chain: &MarkovChain, horizon: usize, seed: u64) -> Vec<(usize, f64)> {
    let mut sampler = PathSampler::new(chain, seed);
    (0..horizon)
        .map(|_| {
            let s = sampler.next_state();
            (s, chain.reward(s))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Markov decision process
// ---------------------------------------------------------------------------

/// A finite MDP with per-(state, action) rewards bounded by 1 in magnitude.
#[derive(Debug, Clone)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    /// Transition probabilities indexed `[(s * num_actions + a) * num_states + s']`.
    transition: Vec<f64>,
    /// Rewards indexed `[s * num_actions + a]`.
    reward: Vec<f64>,
    descriptor: String,
}

impl Mdp {
    /// Validating constructor. `transition` holds one row-stochastic row of
    /// length `num_states` per (state, action) pair in state-major order;
    /// `reward` holds one entry per pair with `|r| ≤ 1`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Mdp> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Config("MDP needs at least one state and one action".into()));
        }
        let pairs = num_states * num_actions;
        if transition.len() != pairs * num_states {
            return Err(Error::Config(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                pairs * num_states
            )));
        }
        if reward.len() != pairs {
            return Err(Error::Config(format!(
                "reward table has {} entries, expected {pairs}",
                reward.len()
            )));
        }
        if reward.iter().any(|r| !r.is_finite() || r.abs() > 1.0) {
            return Err(Error::Config(
                "MDP rewards must be finite with |r| ≤ 1".into(),
            ));
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let row = &transition[(s * num_actions + a) * num_states..][..num_states];
                if row.iter().any(|&p| !(0.0..=1.0 + ROW_SUM_TOL).contains(&p)) {
                    return Err(Error::Config(format!(
                        "transition row for state {s}, action {a} has entries outside [0, 1]"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Config(format!(
                        "transition row for state {s}, action {a} sums to {sum}"
                    )));
                }
            }
        }
        Ok(Mdp {
            num_states,
            num_actions,
            transition,
            reward,
            descriptor: format!("mdp states={num_states} actions={num_actions}"),
        })
    }

    /// Random strongly mixing MDP for verification suites and demos.
    ///
    /// Each transition row is `floor + U(0,1)` renormalized (the floor keeps
    /// every entry strictly positive, so the MDP is ergodic under every
    /// policy), and each reward is uniform on `[−reward_scale, reward_scale]`.
    pub fn random_well_mixed(
        num_states: usize,
        num_actions: usize,
        reward_scale: f64,
        seed: u64,
    ) -> Result<Mdp> {
        if !(reward_scale > 0.0 && reward_scale <= 1.0) {
            return Err(Error::Config(format!(
                "reward_scale must lie in (0, 1], got {reward_scale}"
            )));
        }
        let mut rng = rng_from(seed);
        let pairs = num_states * num_actions;
        let mut transition = Vec::with_capacity(pairs * num_states);
        for _ in 0..pairs {
            let raw: Vec<f64> = (0..num_states)
                .map(|_| 0.3 + rng.gen_range(0.0..1.0))
                .collect();
            let total: f64 = raw.iter().sum();
            transition.extend(raw.into_iter().map(|x| x / total));
        }
        let reward: Vec<f64> = (0..pairs)
            .map(|_| rng.gen_range(-reward_scale..reward_scale))
            .collect();
        Ok(Mdp::new(num_states, num_actions, transition, reward)?.with_descriptor(format!(
            "random-mdp states={num_states} actions={num_actions} scale={reward_scale} seed={seed}"
        )))
    }

    /// Replace the descriptor carried into run metadata.
    pub fn with_descriptor(mut self, descriptor: impl Into<String>) -> Mdp {
        self.descriptor = descriptor.into();
        self
    }

    /// Number of states.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Number of actions.
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Transition row `P(· | s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.num_actions + a) * self.num_states..][..self.num_states]
    }

    /// Reward `r(s, a)`.
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    /// Human-readable description of how this MDP was built.
    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// Close the MDP under a fixed randomized policy.
    ///
    /// `action_probs` holds one probability row per state (shape
    /// `num_states × num_actions`). The induced chain has transition rows
    /// `Σ_a π(a|s) P(·|s,a)` and state rewards `Σ_a π(a|s) r(s,a)`.
    pub fn induced_chain(&self, action_probs: &Mat) -> Result<MarkovChain> {
        if action_probs.rows() != self.num_states || action_probs.cols() != self.num_actions {
            return Err(Error::Input(format!(
                "policy matrix must be {}x{}, got {}x{}",
                self.num_states,
                self.num_actions,
                action_probs.rows(),
                action_probs.cols()
            )));
        }
        for s in 0..self.num_states {
            let sum: f64 = action_probs.row(s).iter().sum();
            if (sum - 1.0).abs() > 1e-9 || action_probs.row(s).iter().any(|&p| p < 0.0) {
                return Err(Error::Input(format!(
                    "policy row {s} is not a probability vector (sum {sum})"
                )));
            }
        }
        let mut rows = Vec::with_capacity(self.num_states);
        for s in 0..self.num_states {
            let mut row = vec![0.0; self.num_states];
            for a in 0..self.num_actions {
                let weight = action_probs[(s, a)];
                if weight == 0.0 {
                    continue;
                }
                for (t, &p) in self.transition_row(s, a).iter().enumerate() {
                    row[t] += weight * p;
                }
            }
            // Renormalize away accumulated rounding so the chain
            // constructor's strict row-sum check cannot trip on
            // policy-mixing arithmetic.
            let total: f64 = row.iter().sum();
            for x in &mut row {
                *x /= total;
            }
            rows.push(row);
        }
        let transition = Mat::from_rows(&rows)?;
        let rewards: Vec<f64> = (0..self.num_states)
            .map(|s| {
                (0..self.num_actions)
                    .map(|a| action_probs[(s, a)] * self.reward(s, a))
                    .sum()
            })
            .collect();
        Ok(MarkovChain::new(transition, rewards)?
            .with_descriptor(format!("{} under fixed policy", self.descriptor)))
    }

    /// Plain-text serialization: a `num_states num_actions` header, one
    /// transition row per (state, action) pair in state-major order, then one
    /// reward row per state with one entry per action.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.num_states, self.num_actions));
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                push_number_line(&mut out, self.transition_row(s, a));
            }
        }
        for s in 0..self.num_states {
            let row: Vec<f64> = (0..self.num_actions).map(|a| self.reward(s, a)).collect();
            push_number_line(&mut out, &row);
        }
        out
    }

    /// Parse the format produced by [`Mdp::to_text`].
    pub fn from_text(text: &str) -> Result<Mdp> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty MDP text".into()))?;
        let mut parts = header.split_whitespace();
        let num_states: usize = parts
            .next()
            .ok_or_else(|| Error::Parse("missing state count".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad state count: {e}")))?;
        let num_actions: usize = parts
            .next()
            .ok_or_else(|| Error::Parse("missing action count".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad action count: {e}")))?;
        if parts.next().is_some() {
            return Err(Error::Parse("trailing tokens in MDP header".into()));
        }
        let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
        for s in 0..num_states {
            for a in 0..num_actions {
                let line = lines.next().ok_or_else(|| {
                    Error::Parse(format!("missing transition row for state {s}, action {a}"))
                })?;
                transition.extend(parse_number_line(
                    line,
                    num_states,
                    &format!("transition row for state {s}, action {a}"),
                )?);
            }
        }
        let mut reward = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing reward row for state {s}")))?;
            reward.extend(parse_number_line(
                line,
                num_actions,
                &format!("reward row for state {s}"),
            )?);
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing content after reward rows".into()));
        }
        Mdp::new(num_states, num_actions, transition, reward)
    }
}
