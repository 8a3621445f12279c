//! Closed-form counterparts of the sampled actor–critic updates.
//!
//! Under the stationary law of the chain induced by a fixed policy, the
//! expected batch updates of the learner have exact linear-algebra forms:
//!
//! * the expected critic update is affine, `E[update] = A w + b`, with
//!   `A = Φᵀ D (P − I) Φ` and `b = Φᵀ D (r − η 1)` where `D = diag(μ)`;
//! * the critic fixed point solves `A w = −b`;
//! * the expected actor update aggregates expected temporal-difference
//!   errors against the softmax score function;
//! * the expected actor update taken at the critic fixed point equals the
//!   true average-reward gradient minus an explicit function-approximation
//!   mismatch term, which [`actor_update_identity_fd`] verifies by central
//!   finite differences.
//!
//! [`mc_critic_update_check`] validates the affine form against the sampled
//! replay-batch process itself: a buffer warm-filled from a stationary start
//! makes the sampled update exactly unbiased, so the Monte-Carlo mean must
//! match `A w + b` to statistical accuracy.

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::markov::{sample_categorical, stationary_distribution, MarkovChain, Mdp};
use crate::replay::{sample_positions_into, ReplayBuffer};
use crate::seed::{self, derive_seed, rng_from};

use super::{td_error, CriticFeatures, SoftmaxPolicy, Transition};

/// Tolerance for the stationary distributions used by the closed forms.
const STATIONARY_TOL: f64 = 1e-10;
/// Residual bound for accepting a critic fixed point.
const FIXED_POINT_TOL: f64 = 1e-10;
/// Number of batches used for batch-means standard errors.
const MC_BATCHES: usize = 30;

/// The affine description of the expected critic update at a fixed policy.
#[derive(Debug, Clone)]
pub struct ExpectedUpdateMatrices {
    /// Update matrix `A = Φᵀ D (P − I) Φ`.
    pub a: Mat,
    /// Update offset `b = Φᵀ D (r − η 1)`.
    pub b: Vec<f64>,
    /// Average reward `η` of the chain.
    pub eta: f64,
    /// Stationary distribution `μ` of the chain.
    pub stationary: Vec<f64>,
    /// The chain the quantities describe (the policy-induced chain when
    /// built from an MDP).
    pub induced: MarkovChain,
}

impl ExpectedUpdateMatrices {
    /// The expected critic update `A w + b` at weights `w`.
    pub fn expected_critic_update(&self, w: &[f64]) -> Vec<f64> {
        let mut out = self.a.matvec(w);
        for (o, b) in out.iter_mut().zip(&self.b) {
            *o += b;
        }
        out
    }

    /// Solve `A w = −b` for the critic fixed point.
    ///
    /// Fails with [`Error::Degenerate`] when `A` is singular and with
    /// [`Error::NoConvergence`] when the solution's residual exceeds the
    /// fixed-point tolerance.
    pub fn critic_fixed_point(&self) -> Result<Vec<f64>> {
        let neg_b: Vec<f64> = self.b.iter().map(|x| -x).collect();
        let w = self.a.solve(&neg_b).map_err(|_| {
            Error::Degenerate("the expected critic update matrix is singular".into())
        })?;
        let residual = self
            .expected_critic_update(&w)
            .iter()
            .fold(0.0f64, |acc, x| acc.max(x.abs()));
        if residual > FIXED_POINT_TOL {
            return Err(Error::NoConvergence(format!(
                "critic fixed-point residual {residual:e} exceeds {FIXED_POINT_TOL:e}"
            )));
        }
        Ok(w)
    }
}

/// Build the expected-update description directly from a reward chain.
pub fn expected_update_matrices_chain(
    chain: &MarkovChain,
    features: &CriticFeatures,
) -> Result<ExpectedUpdateMatrices> {
    if features.num_states() != chain.num_states() {
        return Err(Error::Input(format!(
            "features describe {} states but the chain has {}",
            features.num_states(),
            chain.num_states()
        )));
    }
    let n = chain.num_states();
    let mu = stationary_distribution(chain, STATIONARY_TOL)?.probs;
    let eta = dot(&mu, chain.state_reward());
    let p = chain.transition();
    let c = Mat::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        mu[i] * (p[(i, j)] - delta)
    });
    let phi = features.matrix();
    let a = phi.transpose().matmul(&c).matmul(phi);
    let mut b = vec![0.0; features.dim()];
    for (s, &mu_s) in mu.iter().enumerate().take(n) {
        let weight = mu_s * (chain.reward(s) - eta);
        for (acc, phi_val) in b.iter_mut().zip(features.row(s)) {
            *acc += weight * phi_val;
        }
    }
    Ok(ExpectedUpdateMatrices {
        a,
        b,
        eta,
        stationary: mu,
        induced: chain.clone(),
    })
}

/// Build the expected-update description for an MDP under a fixed policy,
/// via the policy-induced chain.
pub fn expected_update_matrices(
    mdp: &Mdp,
    policy: &SoftmaxPolicy,
    features: &CriticFeatures,
) -> Result<ExpectedUpdateMatrices> {
    check_policy_dims(mdp, policy)?;
    let induced = mdp.induced_chain(&policy.action_prob_matrix())?;
    expected_update_matrices_chain(&induced, features)
}

fn check_policy_dims(mdp: &Mdp, policy: &SoftmaxPolicy) -> Result<()> {
    if policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions() {
        return Err(Error::Input(format!(
            "policy is {}×{} but the MDP is {}×{}",
            policy.num_states(),
            policy.num_actions(),
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    Ok(())
}

/// The expected actor update at parameters `(w, eta)` under the stationary
/// law of the policy-induced chain.
///
/// Entry `s·A + b` is `Σ_a μ(s) π(a|s) δ̄(s,a) (1[b=a] − π(b|s))`, where
/// `δ̄(s,a) = r(s,a) − η + Σ_{s′} P(s′|s,a) φ(s′)ᵀw − φ(s)ᵀw` is the
/// expected temporal-difference error of the pair `(s, a)`.
pub fn expected_actor_update(
    mdp: &Mdp,
    policy: &SoftmaxPolicy,
    features: &CriticFeatures,
    w: &[f64],
    eta: f64,
) -> Result<Vec<f64>> {
    check_policy_dims(mdp, policy)?;
    if features.num_states() != mdp.num_states() {
        return Err(Error::Input(
            "features and MDP disagree on the number of states".into(),
        ));
    }
    let num_states = mdp.num_states();
    let num_actions = mdp.num_actions();
    let induced = mdp.induced_chain(&policy.action_prob_matrix())?;
    let mu = stationary_distribution(&induced, STATIONARY_TOL)?.probs;
    let values: Vec<f64> = (0..num_states).map(|s| features.value(s, w)).collect();
    let mut grad = vec![0.0; num_states * num_actions];
    for s in 0..num_states {
        let probs = policy.probs(s);
        let block = s * num_actions;
        for a in 0..num_actions {
            let row = mdp.transition_row(s, a);
            let lookahead: f64 = row.iter().zip(&values).map(|(p, v)| p * v).sum();
            let delta_bar = mdp.reward(s, a) - eta + lookahead - values[s];
            let weight = mu[s] * probs[a] * delta_bar;
            for b in 0..num_actions {
                let indicator = if b == a { 1.0 } else { 0.0 };
                grad[block + b] += weight * (indicator - probs[b]);
            }
        }
    }
    Ok(grad)
}

/// Result of [`mc_critic_update_check`].
#[derive(Debug, Clone)]
pub struct McCheck {
    /// Monte-Carlo mean of the sampled critic update, per coordinate.
    pub estimate: Vec<f64>,
    /// Batch-means standard errors of the estimate, per coordinate.
    pub standard_errors: Vec<f64>,
    /// The closed form `A w + b` the estimate is compared against.
    pub closed_form: Vec<f64>,
    /// `max_i |estimate_i − closed_form_i| / se_i`.
    pub max_se_units: f64,
    /// Number of Monte-Carlo draws actually used (a multiple of 30).
    pub draws_used: usize,
}

/// Shared Monte-Carlo engine for the critic and actor update checks.
///
/// Starts the policy-induced chain from its stationary distribution,
/// warm-fills a buffer of capacity `n` with `n` transitions (which makes the
/// buffer window exactly stationary), then per draw advances the chain by
/// one transition, pushes it, samples a batch of `k` stored transitions
/// uniformly without replacement, and feeds each batch member's
/// `δ/k` (the temporal-difference error at the fixed parameters `(w, η)`,
/// with `η` the true average reward) to `accumulate`, which adds that
/// member's direction contribution. The mean over draws is compared with
/// `closed_form` coordinate-wise in batch-means standard-error units
/// (30 batches; `draws` is rounded down to a multiple of 30).
#[allow(clippy::too_many_arguments)]
fn mc_update_check(
    mdp: &Mdp,
    policy: &SoftmaxPolicy,
    features: &CriticFeatures,
    w: &[f64],
    n: usize,
    k: usize,
    draws: usize,
    seed: u64,
    closed_form: Vec<f64>,
    mut accumulate: impl FnMut(&Transition, f64, &mut [f64]),
) -> Result<McCheck> {
    check_policy_dims(mdp, policy)?;
    if n == 0 || k == 0 || k > n {
        return Err(Error::Input(format!(
            "batch size k = {k} must lie in [1, n = {n}] with n ≥ 1"
        )));
    }
    if draws < MC_BATCHES {
        return Err(Error::Input(format!(
            "need at least {MC_BATCHES} draws, got {draws}"
        )));
    }
    if w.len() != features.dim() {
        return Err(Error::Input(format!(
            "weight vector has length {} but the features have dimension {}",
            w.len(),
            features.dim()
        )));
    }
    let matrices = expected_update_matrices(mdp, policy, features)?;
    let eta = matrices.eta;

    let mut path_rng = rng_from(derive_seed(seed, &[seed::role::PATH]));
    let mut batch_rng = rng_from(derive_seed(seed, &[seed::role::BATCH]));
    let mut state = sample_categorical(&mut path_rng, &matrices.stationary);
    let mut buffer: ReplayBuffer<Transition> = ReplayBuffer::new(n)?;
    let advance = |state: &mut usize, rng: &mut seed::Rng, buffer: &mut ReplayBuffer<Transition>| {
        let s = *state;
        let a = policy.sample_action(s, rng);
        let s_next = sample_categorical(rng, mdp.transition_row(s, a));
        buffer.push(Transition {
            state: s,
            action: a,
            reward: mdp.reward(s, a),
            next_state: s_next,
        });
        *state = s_next;
    };
    for _ in 0..n {
        advance(&mut state, &mut path_rng, &mut buffer);
    }

    let dim = closed_form.len();
    let batch_len = draws / MC_BATCHES;
    let draws_used = batch_len * MC_BATCHES;
    let inv_k = 1.0 / k as f64;
    let mut pool = Vec::with_capacity(n);
    let mut batch_means: Vec<Vec<f64>> = Vec::with_capacity(MC_BATCHES);
    let mut batch_sum = vec![0.0f64; dim];
    for _ in 0..MC_BATCHES {
        batch_sum.iter_mut().for_each(|x| *x = 0.0);
        for _ in 0..batch_len {
            advance(&mut state, &mut path_rng, &mut buffer);
            pool.clear();
            if k == n {
                pool.extend(1..=n);
            } else {
                sample_positions_into(n, k, &mut batch_rng, &mut pool);
            }
            for &position in pool.iter().take(k) {
                let tr = *buffer.get(position).expect("buffer is warm-filled");
                let delta = td_error(&tr, features, w, eta) * inv_k;
                accumulate(&tr, delta, &mut batch_sum);
            }
        }
        batch_means.push(batch_sum.iter().map(|x| x / batch_len as f64).collect());
    }

    let mut estimate = vec![0.0; dim];
    let mut standard_errors = vec![0.0; dim];
    let mut max_se_units = 0.0f64;
    for c in 0..dim {
        let mean = batch_means.iter().map(|bm| bm[c]).sum::<f64>() / MC_BATCHES as f64;
        let var = batch_means
            .iter()
            .map(|bm| (bm[c] - mean) * (bm[c] - mean))
            .sum::<f64>()
            / (MC_BATCHES - 1) as f64;
        let se = (var / MC_BATCHES as f64).sqrt();
        estimate[c] = mean;
        standard_errors[c] = se;
        let diff = (mean - closed_form[c]).abs();
        let units = if se > 0.0 {
            diff / se
        } else if diff < 1e-14 {
            0.0
        } else {
            f64::INFINITY
        };
        max_se_units = max_se_units.max(units);
    }
    Ok(McCheck {
        estimate,
        standard_errors,
        closed_form,
        max_se_units,
        draws_used,
    })
}

/// Monte-Carlo check that the sampled replay-batch critic update is unbiased
/// for the closed form `A w + b` (see [`mc_update_check`]'s protocol notes
/// in the source).
#[allow(clippy::too_many_arguments)]
pub fn mc_critic_update_check(
    mdp: &Mdp,
    policy: &SoftmaxPolicy,
    features: &CriticFeatures,
    w: &[f64],
    n: usize,
    k: usize,
    draws: usize,
    seed: u64,
) -> Result<McCheck> {
    check_policy_dims(mdp, policy)?;
    if w.len() != features.dim() {
        return Err(Error::Input(format!(
            "weight vector has length {} but the features have dimension {}",
            w.len(),
            features.dim()
        )));
    }
    let closed_form = expected_update_matrices(mdp, policy, features)?.expected_critic_update(w);
    mc_update_check(
        mdp,
        policy,
        features,
        w,
        n,
        k,
        draws,
        seed,
        closed_form,
        |tr, delta, out| {
            for (acc, phi_val) in out.iter_mut().zip(features.row(tr.state)) {
                *acc += delta * phi_val;
            }
        },
    )
}

/// Monte-Carlo check that the sampled replay-batch actor update is unbiased
/// for [`expected_actor_update`] at the fixed parameters `(w, η)` with `η`
/// the true average reward of the policy-induced chain.
#[allow(clippy::too_many_arguments)]
pub fn mc_actor_update_check(
    mdp: &Mdp,
    policy: &SoftmaxPolicy,
    features: &CriticFeatures,
    w: &[f64],
    n: usize,
    k: usize,
    draws: usize,
    seed: u64,
) -> Result<McCheck> {
    check_policy_dims(mdp, policy)?;
    if w.len() != features.dim() {
        return Err(Error::Input(format!(
            "weight vector has length {} but the features have dimension {}",
            w.len(),
            features.dim()
        )));
    }
    let eta = expected_update_matrices(mdp, policy, features)?.eta;
    let closed_form = expected_actor_update(mdp, policy, features, w, eta)?;
    let num_actions = policy.num_actions();
    mc_update_check(
        mdp,
        policy,
        features,
        w,
        n,
        k,
        draws,
        seed,
        closed_form,
        |tr, delta, out| {
            let probs = policy.probs(tr.state);
            let block = tr.state * num_actions;
            for b in 0..num_actions {
                let indicator = if b == tr.action { 1.0 } else { 0.0 };
                out[block + b] += delta * (indicator - probs[b]);
            }
        },
    )
}

/// Result of [`actor_update_identity_fd`].
#[derive(Debug, Clone)]
pub struct ActorIdentityReport {
    /// Expected actor update at the critic fixed point.
    pub expected_update: Vec<f64>,
    /// Central finite-difference gradient of the average reward.
    pub grad_eta: Vec<f64>,
    /// The function-approximation mismatch term `ξ`.
    pub mismatch_term: Vec<f64>,
    /// `‖expected_update − grad_eta + ξ‖∞`.
    pub residual_inf: f64,
}

/// Per-policy quantities needed by the finite-difference identity.
struct PolicyAnalysis {
    eta: f64,
    w: Vec<f64>,
    /// `V̄(s) = Σ_a π(a|s) (r(s,a) − η + Σ_{s′} P(s′|s,a) φ(s′)ᵀ w)`.
    vbar: Vec<f64>,
}

fn analyze_policy(
    mdp: &Mdp,
    policy: &SoftmaxPolicy,
    features: &CriticFeatures,
) -> Result<PolicyAnalysis> {
    let matrices = expected_update_matrices(mdp, policy, features)?;
    let w = matrices.critic_fixed_point()?;
    let eta = matrices.eta;
    let values: Vec<f64> = (0..mdp.num_states())
        .map(|s| features.value(s, &w))
        .collect();
    let vbar = (0..mdp.num_states())
        .map(|s| {
            let probs = policy.probs(s);
            (0..mdp.num_actions())
                .map(|a| {
                    let lookahead: f64 = mdp
                        .transition_row(s, a)
                        .iter()
                        .zip(&values)
                        .map(|(p, v)| p * v)
                        .sum();
                    probs[a] * (mdp.reward(s, a) - eta + lookahead)
                })
                .sum()
        })
        .collect();
    Ok(PolicyAnalysis { eta, w, vbar })
}

/// Verify, by central finite differences, that the expected actor update at
/// the critic fixed point equals the average-reward gradient minus an
/// explicit mismatch term.
///
/// With `w^π` the critic fixed point at the base policy and `μ` the base
/// stationary distribution, the identity is
///
/// `E[update] = ∇_θ η_θ − ξ`, where
/// `ξ_i = Σ_s μ(s) (φ(s)ᵀ ∂_i w^π − ∂_i V̄(s))`
///
/// and both derivatives are approximated by central differences with step
/// `h` (the base `μ` itself is *not* differentiated). The report carries all
/// three vectors plus the ∞-norm residual of the identity.
pub fn actor_update_identity_fd(
    mdp: &Mdp,
    policy: &SoftmaxPolicy,
    features: &CriticFeatures,
    h: f64,
) -> Result<ActorIdentityReport> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Input(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    check_policy_dims(mdp, policy)?;
    let base = expected_update_matrices(mdp, policy, features)?;
    let w_star = base.critic_fixed_point()?;
    let expected_update = expected_actor_update(mdp, policy, features, &w_star, base.eta)?;
    let mu = &base.stationary;

    let dim = policy.dim();
    let mut grad_eta = vec![0.0; dim];
    let mut mismatch_term = vec![0.0; dim];
    for i in 0..dim {
        let perturb = |sign: f64| -> Result<PolicyAnalysis> {
            let mut theta = policy.theta().to_vec();
            theta[i] += sign * h;
            let shifted = SoftmaxPolicy::new(policy.num_states(), policy.num_actions(), theta)?;
            analyze_policy(mdp, &shifted, features)
        };
        let plus = perturb(1.0)?;
        let minus = perturb(-1.0)?;
        let inv_2h = 1.0 / (2.0 * h);
        grad_eta[i] = (plus.eta - minus.eta) * inv_2h;
        let dw: Vec<f64> = plus
            .w
            .iter()
            .zip(&minus.w)
            .map(|(p, m)| (p - m) * inv_2h)
            .collect();
        mismatch_term[i] = (0..mdp.num_states())
            .map(|s| {
                let dvbar = (plus.vbar[s] - minus.vbar[s]) * inv_2h;
                mu[s] * (dot(features.row(s), &dw) - dvbar)
            })
            .sum();
    }

    let residual_inf = expected_update
        .iter()
        .zip(&grad_eta)
        .zip(&mismatch_term)
        .map(|((g, de), xi)| (g - de + xi).abs())
        .fold(0.0f64, f64::max);
    Ok(ActorIdentityReport {
        expected_update,
        grad_eta,
        mismatch_term,
        residual_inf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actor_critic::{run_actor_critic, AcRunConfig, Schedules};
    use crate::markov::{average_reward, MarkovChain};
    use crate::seed::rng_from;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng as _;

    fn drifting_mdp() -> Mdp {
        let state_rewards = [-0.8, 0.0, 0.8];
        let mut transition = Vec::new();
        let mut reward = Vec::new();
        for &state_reward in &state_rewards {
            for a in 0..2 {
                if a == 0 {
                    transition.extend([0.7, 0.2, 0.1]);
                } else {
                    transition.extend([0.1, 0.2, 0.7]);
                }
                reward.push(state_reward);
            }
        }
        Mdp::new(3, 2, transition, reward).unwrap()
    }

    fn random_policy(num_states: usize, num_actions: usize, seed: u64) -> SoftmaxPolicy {
        let mut rng = rng_from(seed);
        let theta = (0..num_states * num_actions)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        SoftmaxPolicy::new(num_states, num_actions, theta).unwrap()
    }

    #[test]
    fn two_state_matrices_by_hand() {
        // Symmetric two-state chain with rewards (0, 1): μ = (1/2, 1/2),
        // η = 1/2, and with the anchored tabular feature φ = (1, 0)ᵀ the
        // matrices reduce to A = μ₀(P₀₀ − 1) = −0.15 and b = μ₀(r₀ − η).
        let chain = MarkovChain::two_state(0.3, 0.3, [0.0, 1.0]).unwrap();
        let features = CriticFeatures::tabular_minus_anchor(2).unwrap();
        let m = expected_update_matrices_chain(&chain, &features).unwrap();
        assert_abs_diff_eq!(m.eta, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.a[(0, 0)], -0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(m.b[0], -0.25, epsilon = 1e-12);
        let w = m.critic_fixed_point().unwrap();
        assert_abs_diff_eq!(w[0], -5.0 / 3.0, epsilon = 1e-10);
        let update = m.expected_critic_update(&w);
        assert!(update[0].abs() <= 1e-10);
    }

    #[test]
    fn asymmetric_two_state_fixed_point_by_hand() {
        // P = [[0.9, 0.1], [0.2, 0.8]], rewards (0, 3): μ = (2/3, 1/3),
        // η = 1, A = μ₀(P₀₀ − 1) = −1/15, b = μ₀(r₀ − η) = −2/3, so the
        // scalar fixed point is w = −10.
        let chain = MarkovChain::new(
            Mat::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap(),
            vec![0.0, 3.0],
        )
        .unwrap();
        let features = CriticFeatures::tabular_minus_anchor(2).unwrap();
        let m = expected_update_matrices_chain(&chain, &features).unwrap();
        assert_abs_diff_eq!(m.stationary[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.eta, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.a[(0, 0)], -1.0 / 15.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.b[0], -2.0 / 3.0, epsilon = 1e-12);
        let w = m.critic_fixed_point().unwrap();
        assert_abs_diff_eq!(w[0], -10.0, epsilon = 1e-9);
    }

    #[test]
    fn matrices_match_independent_dense_construction() {
        // Rebuild A, b, η, μ and the fixed point with nalgebra from scratch
        // and compare against the production code path.
        let mdp = Mdp::random_well_mixed(4, 3, 0.8, 7).unwrap();
        let policy = random_policy(4, 3, 21);
        let features = CriticFeatures::tabular_minus_anchor(4).unwrap();
        let m = expected_update_matrices(&mdp, &policy, &features).unwrap();

        let s = 4;
        let pi = policy.action_prob_matrix();
        let p_bar = DMatrix::from_fn(s, s, |i, j| {
            (0..3).map(|a| pi[(i, a)] * mdp.transition_row(i, a)[j]).sum()
        });
        let r_bar = DVector::from_fn(s, |i, _| {
            (0..3).map(|a| pi[(i, a)] * mdp.reward(i, a)).sum()
        });
        let mut aug = p_bar.transpose() - DMatrix::<f64>::identity(s, s);
        for j in 0..s {
            aug[(s - 1, j)] = 1.0;
        }
        let rhs = DVector::from_fn(s, |i, _| if i == s - 1 { 1.0 } else { 0.0 });
        let mu = aug.lu().solve(&rhs).unwrap();
        let eta = mu.dot(&r_bar);
        let phi = DMatrix::from_fn(s, 3, |i, j| features.row(i)[j]);
        let d = DMatrix::from_diagonal(&mu);
        let a_oracle = phi.transpose() * &d * (&p_bar - DMatrix::<f64>::identity(s, s)) * &phi;
        let b_oracle =
            phi.transpose() * &d * (r_bar - DVector::from_element(s, eta));

        assert_abs_diff_eq!(m.eta, eta, epsilon = 1e-12);
        for i in 0..s {
            assert_abs_diff_eq!(m.stationary[i], mu[i], epsilon = 1e-12);
        }
        for i in 0..3 {
            assert_abs_diff_eq!(m.b[i], b_oracle[i], epsilon = 1e-12);
            for j in 0..3 {
                assert_abs_diff_eq!(m.a[(i, j)], a_oracle[(i, j)], epsilon = 1e-12);
            }
        }
        let w = m.critic_fixed_point().unwrap();
        let w_oracle = a_oracle.lu().solve(&(-b_oracle)).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(w[i], w_oracle[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn uniform_policy_eta_matches_row_averaged_chain() {
        let mdp = Mdp::random_well_mixed(5, 2, 0.9, 11).unwrap();
        let policy = SoftmaxPolicy::zeros(5, 2).unwrap();
        let features = CriticFeatures::tabular_minus_anchor(5).unwrap();
        let m = expected_update_matrices(&mdp, &policy, &features).unwrap();

        // Independently average the action rows by hand.
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|s| {
                (0..5)
                    .map(|j| {
                        (mdp.transition_row(s, 0)[j] + mdp.transition_row(s, 1)[j]) / 2.0
                    })
                    .collect()
            })
            .collect();
        let rewards: Vec<f64> = (0..5)
            .map(|s| (mdp.reward(s, 0) + mdp.reward(s, 1)) / 2.0)
            .collect();
        let chain = MarkovChain::new(Mat::from_rows(&rows).unwrap(), rewards).unwrap();
        assert_abs_diff_eq!(m.eta, average_reward(&chain).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn zero_weights_reduce_update_to_offset() {
        let chain = MarkovChain::two_state(0.2, 0.4, [1.0, -1.0]).unwrap();
        let features = CriticFeatures::tabular_minus_anchor(2).unwrap();
        let m = expected_update_matrices_chain(&chain, &features).unwrap();
        let update = m.expected_critic_update(&vec![0.0; features.dim()]);
        for (u, b) in update.iter().zip(&m.b) {
            assert_abs_diff_eq!(u, b, epsilon = 0.0);
        }
    }

    #[test]
    fn critic_update_is_affine_in_the_weights() {
        let mdp = Mdp::random_well_mixed(4, 3, 0.8, 7).unwrap();
        let mut policy = SoftmaxPolicy::zeros(4, 3).unwrap();
        let mut rng = crate::seed::rng_from(21);
        for t in policy.theta_mut() {
            *t = rng.gen_range(-1.0..1.0);
        }
        let features = CriticFeatures::tabular_minus_anchor(4).unwrap();
        let m = expected_update_matrices(&mdp, &policy, &features).unwrap();

        let w1 = vec![0.4, -1.1, 0.7];
        let w2 = vec![-0.3, 0.9, 2.2];
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let u1 = m.expected_critic_update(&w1);
        let u2 = m.expected_critic_update(&w2);
        let u_sum = m.expected_critic_update(&sum);
        // The map w -> Aw + b is affine, so the cross-difference returns the offset.
        for i in 0..features.dim() {
            assert_abs_diff_eq!(u_sum[i] - u1[i] - u2[i] + m.b[i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_action_mdp_has_zero_actor_update() {
        let mdp = Mdp::random_well_mixed(4, 1, 0.5, 3).unwrap();
        let policy = SoftmaxPolicy::zeros(4, 1).unwrap();
        let features = CriticFeatures::tabular_minus_anchor(4).unwrap();
        let grad =
            expected_actor_update(&mdp, &policy, &features, &[0.3, -0.2, 0.9], 0.1).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn actor_update_blocks_sum_to_zero() {
        let mdp = Mdp::random_well_mixed(4, 3, 0.7, 19).unwrap();
        let policy = random_policy(4, 3, 23);
        let features = CriticFeatures::tabular_minus_anchor(4).unwrap();
        let mut rng = rng_from(29);
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grad = expected_actor_update(&mdp, &policy, &features, &w, 0.05).unwrap();
        for s in 0..4 {
            let block_sum: f64 = grad[s * 3..(s + 1) * 3].iter().sum();
            assert_abs_diff_eq!(block_sum, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mc_check_agrees_across_buffer_and_batch_sizes() {
        let mdp = Mdp::random_well_mixed(5, 2, 0.5, 42).unwrap();
        let policy = random_policy(5, 2, 6);
        let features = CriticFeatures::tabular_minus_anchor(5).unwrap();
        let w_values = [vec![0.0; 4], vec![0.4, -0.3, 0.2, 0.6]];
        for &(n, k) in &[(1, 1), (5, 1), (5, 3), (5, 5), (20, 1), (20, 3), (20, 5)] {
            for (wi, w) in w_values.iter().enumerate() {
                let check =
                    mc_critic_update_check(&mdp, &policy, &features, w, n, k, 6000, 500 + wi as u64)
                        .unwrap();
                assert!(
                    check.max_se_units <= 4.0,
                    "(n={n}, k={k}, w{wi}): {} se units, estimate {:?} vs closed {:?}",
                    check.max_se_units,
                    check.estimate,
                    check.closed_form
                );
            }
        }
    }

    #[test]
    fn mc_actor_update_matches_closed_form() {
        // Frozen-policy Monte-Carlo actor updates, 10⁵ draws, against the
        // closed form, coordinate-wise within 3 batch-means standard errors.
        let mdp = Mdp::random_well_mixed(5, 2, 0.5, 42).unwrap();
        let policy = random_policy(5, 2, 31);
        let features = CriticFeatures::tabular_minus_anchor(5).unwrap();
        let w = vec![0.3, -0.1, 0.25, -0.4];
        let check =
            mc_critic_update_check(&mdp, &policy, &features, &w, 20, 5, 100_000, 808).unwrap();
        assert!(check.max_se_units <= 3.0, "critic: {}", check.max_se_units);
        let check =
            mc_actor_update_check(&mdp, &policy, &features, &w, 20, 5, 100_000, 808).unwrap();
        assert!(
            check.max_se_units <= 3.0,
            "actor: {} se units, estimate {:?} vs closed {:?}",
            check.max_se_units,
            check.estimate,
            check.closed_form
        );
    }

    #[test]
    fn mc_check_is_deterministic_and_validates_input() {
        let mdp = Mdp::random_well_mixed(4, 2, 0.5, 1).unwrap();
        let policy = SoftmaxPolicy::zeros(4, 2).unwrap();
        let features = CriticFeatures::tabular_minus_anchor(4).unwrap();
        let w = vec![0.1, 0.2, 0.3];
        let a = mc_critic_update_check(&mdp, &policy, &features, &w, 8, 3, 900, 77).unwrap();
        let b = mc_critic_update_check(&mdp, &policy, &features, &w, 8, 3, 900, 77).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.draws_used, 900);

        assert!(mc_critic_update_check(&mdp, &policy, &features, &w, 2, 3, 900, 0).is_err());
        assert!(mc_critic_update_check(&mdp, &policy, &features, &w, 8, 0, 900, 0).is_err());
        assert!(mc_critic_update_check(&mdp, &policy, &features, &w, 8, 3, 10, 0).is_err());
        assert!(
            mc_critic_update_check(&mdp, &policy, &features, &[0.0; 2], 8, 3, 900, 0).is_err()
        );
    }

    #[test]
    fn fd_identity_holds_with_tabular_features() {
        // Anchored tabular features represent every differential value
        // exactly, so the mismatch term vanishes and the expected update is
        // the gradient itself.
        let mdp = drifting_mdp();
        let features = CriticFeatures::tabular_minus_anchor(3).unwrap();
        for policy in [SoftmaxPolicy::zeros(3, 2).unwrap(), random_policy(3, 2, 15)] {
            let report = actor_update_identity_fd(&mdp, &policy, &features, 1e-4).unwrap();
            assert!(
                report.residual_inf < 1e-5,
                "residual {} with mismatch {:?}",
                report.residual_inf,
                report.mismatch_term
            );
        }
    }

    #[test]
    fn fd_identity_holds_with_restricted_features() {
        // A one-dimensional feature on a generic MDP cannot represent the
        // differential value, so the mismatch term is genuinely nonzero and
        // the identity needs it to close.
        let mdp = Mdp::random_well_mixed(3, 2, 0.8, 5).unwrap();
        let phi = Mat::from_rows(&[vec![1.0], vec![-0.3], vec![0.0]]).unwrap();
        let features = CriticFeatures::new(phi).unwrap();
        for policy in [SoftmaxPolicy::zeros(3, 2).unwrap(), random_policy(3, 2, 16)] {
            let report = actor_update_identity_fd(&mdp, &policy, &features, 1e-4).unwrap();
            assert!(
                report.residual_inf < 1e-3,
                "residual {}",
                report.residual_inf
            );
            let xi_norm = report
                .mismatch_term
                .iter()
                .fold(0.0f64, |acc, x| acc.max(x.abs()));
            assert!(
                xi_norm > 1e-4,
                "mismatch term unexpectedly small: {xi_norm}"
            );
        }
    }

    #[test]
    fn frozen_actor_critic_converges_to_fixed_point() {
        let mdp = Mdp::random_well_mixed(5, 2, 0.5, 42).unwrap();
        let features = CriticFeatures::tabular_minus_anchor(5).unwrap();
        let policy = SoftmaxPolicy::zeros(5, 2).unwrap();
        let m = expected_update_matrices(&mdp, &policy, &features).unwrap();
        let w_star = m.critic_fixed_point().unwrap();

        let mut config = AcRunConfig::new(100_000, 100, 5, 7);
        config.schedules = Schedules::default().with_frozen_actor();
        let result = run_actor_critic(&mdp, &features, &config).unwrap();
        let w_err = result
            .final_state
            .w
            .iter()
            .zip(&w_star)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(w_err < 0.1, "critic error {w_err}, w* = {w_star:?}");
        let eta_err = (result.final_state.eta - m.eta).abs();
        assert!(eta_err < 0.05, "eta error {eta_err}");
        // The frozen actor never moves.
        assert!(result.final_state.policy.theta().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn learning_reaches_near_optimal_average_reward() {
        // Oracle: on this MDP the softmax policy's average reward depends
        // only on the per-state logit gaps, so a dense grid over the gap box
        // [−2R, 2R]³ brackets the achievable range.
        let mdp = drifting_mdp();
        let features = CriticFeatures::tabular_minus_anchor(3).unwrap();
        let gap_values: Vec<f64> = (0..41).map(|i| -20.0 + i as f64).collect();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &g0 in &gap_values {
            for &g1 in &gap_values {
                for &g2 in &gap_values {
                    let theta = vec![g0 / 2.0, -g0 / 2.0, g1 / 2.0, -g1 / 2.0, g2 / 2.0, -g2 / 2.0];
                    let policy = SoftmaxPolicy::new(3, 2, theta).unwrap();
                    let induced = mdp.induced_chain(&policy.action_prob_matrix()).unwrap();
                    let eta = average_reward(&induced).unwrap();
                    lo = lo.min(eta);
                    hi = hi.max(eta);
                }
            }
        }
        assert!(hi > lo + 0.5, "grid range [{lo}, {hi}] is too narrow");

        // A larger actor scale (still a valid schedule) reaches the softmax
        // saturation regime within the horizon.
        let mut config = AcRunConfig::new(200_000, 100, 5, 12);
        config.schedules.actor.scale = 5.0;
        let result = run_actor_critic(&mdp, &features, &config).unwrap();
        let learned = mdp
            .induced_chain(&result.final_state.policy.action_prob_matrix())
            .unwrap();
        let achieved = average_reward(&learned).unwrap();
        let threshold = lo + 0.95 * (hi - lo);
        assert!(
            achieved >= threshold,
            "learned policy scores {achieved}, below the top-5% threshold {threshold} \
             of the range [{lo}, {hi}]"
        );
        // The estimate tracks the value of the policy it converged to.
        assert!(
            (result.final_state.eta - achieved).abs() < 0.05,
            "estimate {} vs true value {achieved}",
            result.final_state.eta
        );
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let mdp = drifting_mdp();
        let features = CriticFeatures::tabular_minus_anchor(4).unwrap();
        let policy = SoftmaxPolicy::zeros(3, 2).unwrap();
        assert!(expected_update_matrices(&mdp, &policy, &features).is_err());
        let wrong_policy = SoftmaxPolicy::zeros(4, 2).unwrap();
        let good_features = CriticFeatures::tabular_minus_anchor(3).unwrap();
        assert!(expected_update_matrices(&mdp, &wrong_policy, &good_features).is_err());
    }
}
