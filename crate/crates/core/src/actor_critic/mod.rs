//! Replay-batch linear actor–critic for average-reward MDPs.
//!
//! The learner observes one transition per step, stores it in a FIFO replay
//! buffer, and updates three quantities from a uniformly sampled batch of
//! stored transitions:
//!
//! * a running average-reward estimate `η` (from the batch reward mean),
//! * linear critic weights `w` over user-supplied state features (from
//!   batch-averaged temporal-difference errors), and
//! * softmax policy logits `θ` (from batch-averaged score-function terms),
//!   kept inside a box of radius `theta_radius` by coordinate-wise clamping.
//!
//! All three updates at a step are computed from the *pre-update* parameter
//! values, then applied together. Step sizes follow polynomially decaying
//! schedules; the actor schedule must decay strictly faster than the critic
//! schedule so the critic tracks the slowly moving policy.
//!
//! [`analysis`] provides the matching closed-form quantities (expected
//! updates under the stationary law, critic fixed points, policy-gradient
//! comparisons) used to validate the sampled process.

pub mod analysis;

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{dot, inf_norm, Mat};
use crate::markov::{sample_categorical, Mdp};
use crate::replay::{sample_positions_into, ReplayBuffer};
use crate::seed::{self, derive_seed, rng_from};

/// Default clamp radius for the policy logits.
pub const DEFAULT_THETA_RADIUS: f64 = 10.0;
/// Iterates with any coordinate beyond this magnitude abort the run.
const DIVERGENCE_LIMIT: f64 = 1e8;

/// One observed MDP transition, as stored in the replay buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// State the action was taken in.
    pub state: usize,
    /// Action taken.
    pub action: usize,
    /// Reward received.
    pub reward: f64,
    /// Successor state.
    pub next_state: usize,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(s={}, a={}, r={}, s'={})",
            self.state, self.action, self.reward, self.next_state
        )
    }
}

/// State features for the linear critic: a `num_states × dim` matrix whose
/// row `s` is `φ(s)`.
///
/// Construction rejects feature matrices that are rank deficient or whose
/// column span contains the all-ones vector — either makes the
/// average-reward critic fixed point ill-posed.
#[derive(Debug, Clone)]
pub struct CriticFeatures {
    phi: Mat,
}

/// Residual below which the all-ones vector counts as lying in the span.
const ONES_SPAN_TOL: f64 = 1e-8;

impl CriticFeatures {
    /// Validate and wrap a feature matrix (rows = states, columns = features).
    pub fn new(phi: Mat) -> Result<Self> {
        if phi.rows() == 0 {
            return Err(Error::Input("feature matrix has no rows".into()));
        }
        if !phi.is_finite() {
            return Err(Error::Input("feature matrix has non-finite entries".into()));
        }
        if phi.cols() >= phi.rows() {
            // With dim ≥ num_states the ones vector is representable whenever
            // the rank is full, and the rank-deficient case is caught below;
            // the Gram solve handles both, so no special casing is needed.
        }
        if phi.cols() > 0 {
            let phi_t = phi.transpose();
            let gram = phi_t.matmul(&phi);
            let ones = vec![1.0; phi.rows()];
            let rhs = phi_t.matvec(&ones);
            let coeffs = gram.solve(&rhs).map_err(|_| {
                Error::Degenerate("feature matrix is rank deficient".into())
            })?;
            let fitted = phi.matvec(&coeffs);
            let residual = fitted
                .iter()
                .zip(&ones)
                .map(|(f, o)| (f - o).abs())
                .fold(0.0f64, f64::max);
            if residual <= ONES_SPAN_TOL {
                return Err(Error::Degenerate(
                    "the all-ones vector lies in the feature span, so the \
                     average-reward critic fixed point is not identifiable"
                        .into(),
                ));
            }
        }
        Ok(CriticFeatures { phi })
    }

    /// Tabular features with one anchor state pinned to zero: state `s` maps
    /// to the `s`-th standard basis vector of length `num_states − 1`, and
    /// the last state maps to the zero vector.
    pub fn tabular_minus_anchor(num_states: usize) -> Result<Self> {
        if num_states == 0 {
            return Err(Error::Input("need at least one state".into()));
        }
        let phi = Mat::from_fn(num_states, num_states - 1, |s, j| {
            if s == j {
                1.0
            } else {
                0.0
            }
        });
        CriticFeatures::new(phi)
    }

    /// Number of states (rows).
    pub fn num_states(&self) -> usize {
        self.phi.rows()
    }

    /// Feature dimension (columns).
    pub fn dim(&self) -> usize {
        self.phi.cols()
    }

    /// The feature vector of state `s`.
    pub fn row(&self, s: usize) -> &[f64] {
        self.phi.row(s)
    }

    /// The underlying matrix.
    pub fn matrix(&self) -> &Mat {
        &self.phi
    }

    /// The linear value estimate `φ(s)ᵀ w`.
    pub fn value(&self, s: usize, w: &[f64]) -> f64 {
        dot(self.row(s), w)
    }
}

/// Softmax policy over per-(state, action) logits.
///
/// Logits are stored flat as `theta[s * num_actions + a]`; action
/// probabilities in state `s` depend only on that state's logit block.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    num_states: usize,
    num_actions: usize,
    theta: Vec<f64>,
}

impl SoftmaxPolicy {
    /// Wrap explicit logits (`theta.len()` must equal `S · A`).
    pub fn new(num_states: usize, num_actions: usize, theta: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Input("policy needs ≥ 1 state and action".into()));
        }
        if theta.len() != num_states * num_actions {
            return Err(Error::Input(format!(
                "got {} logits for {} states × {} actions",
                theta.len(),
                num_states,
                num_actions
            )));
        }
        if !theta.iter().all(|x| x.is_finite()) {
            return Err(Error::Input("logits must be finite".into()));
        }
        Ok(SoftmaxPolicy {
            num_states,
            num_actions,
            theta,
        })
    }

    /// The uniform policy (all logits zero).
    pub fn zeros(num_states: usize, num_actions: usize) -> Result<Self> {
        SoftmaxPolicy::new(num_states, num_actions, vec![0.0; num_states * num_actions])
    }

    /// Number of states.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Number of actions.
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Total number of logits, `S · A`.
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// The flat logit vector.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Mutable access to the flat logit vector.
    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn block(&self, state: usize) -> &[f64] {
        let start = state * self.num_actions;
        &self.theta[start..start + self.num_actions]
    }

    fn probs_into(&self, state: usize, out: &mut Vec<f64>) {
        let block = self.block(state);
        let max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.clear();
        out.extend(block.iter().map(|&x| (x - max).exp()));
        let total: f64 = out.iter().sum();
        for p in out.iter_mut() {
            *p /= total;
        }
    }

    /// Action probabilities in `state` (numerically stable softmax).
    pub fn probs(&self, state: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_actions);
        self.probs_into(state, &mut out);
        out
    }

    /// All action probabilities as a `S × A` matrix.
    pub fn action_prob_matrix(&self) -> Mat {
        let rows: Vec<Vec<f64>> = (0..self.num_states).map(|s| self.probs(s)).collect();
        Mat::from_rows(&rows).expect("softmax rows are rectangular and finite")
    }

    /// Draw an action in `state` by inverse CDF over the softmax weights.
    pub fn sample_action(&self, state: usize, rng: &mut seed::Rng) -> usize {
        sample_categorical(rng, &self.probs(state))
    }

    /// The state-`s` block of `∇_θ log π(a|s)`: entry `b` is
    /// `1[b = a] − π(b|s)`. All other blocks of the full gradient are zero.
    pub fn log_prob_grad_block(&self, state: usize, action: usize) -> Vec<f64> {
        let probs = self.probs(state);
        (0..self.num_actions)
            .map(|b| if b == action { 1.0 - probs[b] } else { -probs[b] })
            .collect()
    }
}

/// Polynomially decaying step size `scale / (t + offset)^exponent`, where
/// `t` is the 0-based update index.
///
/// `scale = 0` freezes the associated parameter; `offset ≥ 1` keeps the
/// first step size at most `scale`; the exponent must lie in `(0.5, 1]` so
/// the steps are square-summable but not summable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    /// Numerator `scale ≥ 0`.
    pub scale: f64,
    /// Shift `offset ≥ 1`.
    pub offset: f64,
    /// Decay exponent in `(0.5, 1]`.
    pub exponent: f64,
}

impl StepSchedule {
    /// Validate and build a schedule.
    pub fn new(scale: f64, offset: f64, exponent: f64) -> Result<Self> {
        let schedule = StepSchedule {
            scale,
            offset,
            exponent,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// A schedule that always returns zero (parameter frozen).
    pub fn frozen() -> Self {
        StepSchedule {
            scale: 0.0,
            offset: 1.0,
            exponent: 0.6,
        }
    }

    /// Check the field constraints.
    pub fn validate(&self) -> Result<()> {
        if !self.scale.is_finite() || self.scale < 0.0 {
            return Err(Error::Config(format!(
                "step-size scale must be a finite value ≥ 0, got {}",
                self.scale
            )));
        }
        if !self.offset.is_finite() || self.offset < 1.0 {
            return Err(Error::Config(format!(
                "step-size offset must be ≥ 1, got {}",
                self.offset
            )));
        }
        if !self.exponent.is_finite() || self.exponent <= 0.5 || self.exponent > 1.0 {
            return Err(Error::Config(format!(
                "step-size exponent must lie in (0.5, 1], got {}",
                self.exponent
            )));
        }
        Ok(())
    }

    /// Step size at 0-based update index `t`.
    pub fn at(&self, t: u64) -> f64 {
        self.scale / (t as f64 + self.offset).powf(self.exponent)
    }
}

/// The three step-size schedules of the learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedules {
    /// Average-reward tracker step size.
    pub eta: StepSchedule,
    /// Critic step size.
    pub critic: StepSchedule,
    /// Actor step size.
    pub actor: StepSchedule,
}

impl Schedules {
    /// Validate all three schedules plus the time-scale separation: when the
    /// actor is live (`actor.scale > 0`) it must decay strictly faster than
    /// the critic.
    pub fn validate(&self) -> Result<()> {
        self.eta.validate()?;
        self.critic.validate()?;
        self.actor.validate()?;
        if self.actor.scale > 0.0 && self.actor.exponent <= self.critic.exponent {
            return Err(Error::Config(format!(
                "actor exponent {} must exceed critic exponent {} (two-time-scale)",
                self.actor.exponent, self.critic.exponent
            )));
        }
        Ok(())
    }

    /// Freeze the actor, keeping the η/critic schedules.
    pub fn with_frozen_actor(mut self) -> Self {
        self.actor = StepSchedule::frozen();
        self
    }
}

impl Default for Schedules {
    /// `1/(t+1)^0.6` for η and the critic, `1/(t+1)^0.9` for the actor.
    fn default() -> Self {
        Schedules {
            eta: StepSchedule {
                scale: 1.0,
                offset: 1.0,
                exponent: 0.6,
            },
            critic: StepSchedule {
                scale: 1.0,
                offset: 1.0,
                exponent: 0.6,
            },
            actor: StepSchedule {
                scale: 1.0,
                offset: 1.0,
                exponent: 0.9,
            },
        }
    }
}

/// Clamp every coordinate of `theta` to `[−radius, radius]`; returns whether
/// any coordinate actually moved.
pub fn project_theta(theta: &mut [f64], radius: f64) -> bool {
    let mut clamped = false;
    for x in theta.iter_mut() {
        if *x > radius {
            *x = radius;
            clamped = true;
        } else if *x < -radius {
            *x = -radius;
            clamped = true;
        }
    }
    clamped
}

/// Temporal-difference error of one transition at parameters `(w, eta)`:
/// `r − η + φ(s′)ᵀw − φ(s)ᵀw`.
pub fn td_error(transition: &Transition, features: &CriticFeatures, w: &[f64], eta: f64) -> f64 {
    transition.reward - eta + features.value(transition.next_state, w)
        - features.value(transition.state, w)
}

/// Learner parameters: policy logits, critic weights, average-reward
/// estimate, and the number of updates applied so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticState {
    /// Softmax policy (owns the logits `θ`).
    pub policy: SoftmaxPolicy,
    /// Critic weights.
    pub w: Vec<f64>,
    /// Average-reward estimate.
    pub eta: f64,
    /// Number of updates applied (0-based index of the *next* update).
    pub t: u64,
}

/// Configuration of one actor–critic run.
#[derive(Debug, Clone)]
pub struct AcRunConfig {
    /// Number of environment steps.
    pub horizon: usize,
    /// Replay-buffer capacity `n`.
    pub buffer_capacity: usize,
    /// Batch size `k` (must satisfy `1 ≤ k ≤ n`).
    pub batch_size: usize,
    /// Step-size schedules.
    pub schedules: Schedules,
    /// Clamp radius for the policy logits.
    pub theta_radius: f64,
    /// `true` for gradient ascent on the average reward (the default);
    /// `false` descends instead.
    pub ascent: bool,
    /// Record a snapshot every this many steps (`0` = initial and final
    /// snapshots only).
    pub snapshot_every: usize,
    /// Initial policy logits (`None` starts from the uniform policy).
    pub initial_theta: Option<Vec<f64>>,
    /// Top-level seed; path and batch streams are derived from it.
    pub seed: u64,
}

impl AcRunConfig {
    /// A config with default schedules, radius, ascent and snapshot cadence.
    pub fn new(horizon: usize, buffer_capacity: usize, batch_size: usize, seed: u64) -> Self {
        AcRunConfig {
            horizon,
            buffer_capacity,
            batch_size,
            schedules: Schedules::default(),
            theta_radius: DEFAULT_THETA_RADIUS,
            ascent: true,
            snapshot_every: 0,
            initial_theta: None,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::Config("buffer capacity must be positive".into()));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(Error::Config(format!(
                "batch size k = {} is outside [1, n = {}]",
                self.batch_size, self.buffer_capacity
            )));
        }
        if !self.theta_radius.is_finite() || self.theta_radius <= 0.0 {
            return Err(Error::Config(format!(
                "theta radius must be positive, got {}",
                self.theta_radius
            )));
        }
        self.schedules.validate()
    }
}

/// A recorded point of a run.
#[derive(Debug, Clone)]
pub struct AcSnapshot {
    /// Number of steps completed when the snapshot was taken.
    pub t: u64,
    /// Average-reward estimate.
    pub eta: f64,
    /// Critic weights.
    pub w: Vec<f64>,
    /// `‖θ‖∞` of the policy logits.
    pub theta_inf_norm: f64,
    /// Whether the clamp moved any logit at the snapshot's step.
    pub projection_active: bool,
}

/// Result of [`run_actor_critic`].
#[derive(Debug, Clone)]
pub struct AcRunResult {
    /// Learner parameters after the last step.
    pub final_state: ActorCriticState,
    /// Recorded snapshots (always includes `t = 0` and the final step).
    pub snapshots: Vec<AcSnapshot>,
    /// Replay-buffer fill after the last step.
    pub buffer_fill: usize,
}

/// A stepwise actor–critic simulation over one MDP.
///
/// [`AcSimulation::step`] performs exactly one environment interaction: draw
/// an action, observe the transition, push it, sample a batch of stored
/// transitions, and apply the η/critic/actor updates computed from the
/// pre-update parameters. [`run_actor_critic`] drives a full run.
pub struct AcSimulation<'a> {
    mdp: &'a Mdp,
    features: &'a CriticFeatures,
    config: AcRunConfig,
    state: ActorCriticState,
    buffer: ReplayBuffer<Transition>,
    current_state: usize,
    path_rng: seed::Rng,
    batch_rng: seed::Rng,
    pool: Vec<usize>,
    probs_scratch: Vec<f64>,
    critic_dir: Vec<f64>,
    actor_dir: Vec<f64>,
    projection_active: bool,
}

impl<'a> AcSimulation<'a> {
    /// Initialize a simulation: zero parameters, empty buffer, uniform
    /// initial state.
    pub fn new(mdp: &'a Mdp, features: &'a CriticFeatures, config: AcRunConfig) -> Result<Self> {
        config.validate()?;
        if features.num_states() != mdp.num_states() {
            return Err(Error::Input(format!(
                "features describe {} states but the MDP has {}",
                features.num_states(),
                mdp.num_states()
            )));
        }
        let policy = match &config.initial_theta {
            Some(theta) => {
                let policy =
                    SoftmaxPolicy::new(mdp.num_states(), mdp.num_actions(), theta.clone())?;
                if inf_norm(policy.theta()) > config.theta_radius {
                    return Err(Error::Config(format!(
                        "initial logits exceed the clamp radius {}",
                        config.theta_radius
                    )));
                }
                policy
            }
            None => SoftmaxPolicy::zeros(mdp.num_states(), mdp.num_actions())?,
        };
        let buffer = ReplayBuffer::new(config.buffer_capacity)?;
        let mut path_rng = rng_from(derive_seed(config.seed, &[seed::role::PATH]));
        let batch_rng = rng_from(derive_seed(config.seed, &[seed::role::BATCH]));
        let current_state = {
            use rand::Rng as _;
            path_rng.gen_range(0..mdp.num_states())
        };
        let dim = features.dim();
        let policy_dim = policy.dim();
        Ok(AcSimulation {
            mdp,
            features,
            config,
            state: ActorCriticState {
                policy,
                w: vec![0.0; dim],
                eta: 0.0,
                t: 0,
            },
            buffer,
            current_state,
            path_rng,
            batch_rng,
            pool: Vec::new(),
            probs_scratch: Vec::new(),
            critic_dir: vec![0.0; dim],
            actor_dir: vec![0.0; policy_dim],
            projection_active: false,
        })
    }

    /// Current learner parameters.
    pub fn state(&self) -> &ActorCriticState {
        &self.state
    }

    /// Current environment state.
    pub fn current_state(&self) -> usize {
        self.current_state
    }

    /// Replay-buffer fill.
    pub fn buffer_fill(&self) -> usize {
        self.buffer.fill()
    }

    /// Whether the logit clamp was active at the most recent step.
    pub fn projection_active(&self) -> bool {
        self.projection_active
    }

    /// Snapshot the current parameters.
    pub fn snapshot(&self) -> AcSnapshot {
        AcSnapshot {
            t: self.state.t,
            eta: self.state.eta,
            w: self.state.w.clone(),
            theta_inf_norm: inf_norm(self.state.policy.theta()),
            projection_active: self.projection_active,
        }
    }

    /// Perform one environment step and one parameter update.
    pub fn step(&mut self) -> Result<()> {
        // Interact: draw an action from the current policy, step the MDP,
        // store the transition.
        let s = self.current_state;
        self.state.policy.probs_into(s, &mut self.probs_scratch);
        let a = sample_categorical(&mut self.path_rng, &self.probs_scratch);
        let reward = self.mdp.reward(s, a);
        let s_next = sample_categorical(&mut self.path_rng, self.mdp.transition_row(s, a));
        self.buffer.push(Transition {
            state: s,
            action: a,
            reward,
            next_state: s_next,
        });
        self.current_state = s_next;

        // Sample a batch of stored transitions (whole buffer while warming
        // up or when k equals the fill; the subset is forced then).
        let fill = self.buffer.fill();
        let k_eff = self.config.batch_size.min(fill);
        self.pool.clear();
        if k_eff == fill {
            self.pool.extend(1..=fill);
        } else {
            sample_positions_into(fill, k_eff, &mut self.batch_rng, &mut self.pool);
        }

        // Batch statistics at the pre-update parameters.
        let inv_k = 1.0 / k_eff as f64;
        let mut reward_sum = 0.0;
        self.critic_dir.iter_mut().for_each(|x| *x = 0.0);
        self.actor_dir.iter_mut().for_each(|x| *x = 0.0);
        let num_actions = self.state.policy.num_actions();
        for i in 0..k_eff {
            let tr = *self
                .buffer
                .get(self.pool[i])
                .expect("batch positions are occupied");
            reward_sum += tr.reward;
            let delta = td_error(&tr, self.features, &self.state.w, self.state.eta);
            for (g, phi) in self.critic_dir.iter_mut().zip(self.features.row(tr.state)) {
                *g += delta * phi;
            }
            self.state
                .policy
                .probs_into(tr.state, &mut self.probs_scratch);
            let block = tr.state * num_actions;
            for b in 0..num_actions {
                let indicator = if b == tr.action { 1.0 } else { 0.0 };
                self.actor_dir[block + b] += delta * (indicator - self.probs_scratch[b]);
            }
        }

        // Apply the three updates with the step sizes of update index t.
        let t = self.state.t;
        let alpha_eta = self.config.schedules.eta.at(t);
        let alpha_w = self.config.schedules.critic.at(t);
        let alpha_theta = self.config.schedules.actor.at(t);
        let sign = if self.config.ascent { 1.0 } else { -1.0 };

        self.state.eta += alpha_eta * (reward_sum * inv_k - self.state.eta);
        for (w, g) in self.state.w.iter_mut().zip(&self.critic_dir) {
            *w += alpha_w * g * inv_k;
        }
        let theta = self.state.policy.theta_mut();
        for (x, g) in theta.iter_mut().zip(&self.actor_dir) {
            *x += sign * alpha_theta * g * inv_k;
        }
        self.projection_active = project_theta(theta, self.config.theta_radius);
        self.state.t = t + 1;

        // Divergence guard.
        if !self.state.eta.is_finite() || self.state.eta.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                step: self.state.t,
                quantity: "average-reward estimate".into(),
            });
        }
        if self
            .state
            .w
            .iter()
            .any(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT)
        {
            return Err(Error::Diverged {
                step: self.state.t,
                quantity: "critic weights".into(),
            });
        }
        if self.state.policy.theta().iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged {
                step: self.state.t,
                quantity: "policy logits".into(),
            });
        }
        Ok(())
    }
}

/// Run the actor–critic for `config.horizon` steps and collect snapshots.
pub fn run_actor_critic(
    mdp: &Mdp,
    features: &CriticFeatures,
    config: &AcRunConfig,
) -> Result<AcRunResult> {
    let mut sim = AcSimulation::new(mdp, features, config.clone())?;
    let mut snapshots = vec![sim.snapshot()];
    for step in 1..=config.horizon {
        sim.step()?;
        if config.snapshot_every > 0 && step % config.snapshot_every == 0 {
            snapshots.push(sim.snapshot());
        }
    }
    if snapshots.last().map(|s| s.t) != Some(config.horizon as u64) {
        snapshots.push(sim.snapshot());
    }
    Ok(AcRunResult {
        buffer_fill: sim.buffer.fill(),
        final_state: sim.state,
        snapshots,
    })
}
