//! Strict JSON configuration shared by every subcommand.
//!
//! One key set serves all experiments. Parsing is strict twice over: unknown
//! keys are rejected by serde, and keys a given experiment does not consume
//! are rejected here rather than silently ignored, because a typo that lands
//! on a valid-but-unused key would otherwise corrupt a sweep as quietly as a
//! misspelled one. Absent keys fall back to the per-experiment defaults
//! documented in the README table.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{HarnessError, Result};

/// Base seed used when neither the config file nor `--base-seed` names one.
pub const DEFAULT_BASE_SEED: u64 = 0xC0FFEE;

/// Time window (inclusive bounds) over which the smoothness metric — the
/// mean squared successive difference of the estimate — is computed.
pub const SMOOTHNESS_WINDOW: (u64, u64) = (100, 5000);

/// Time window (inclusive bounds) of the early phase of a run, used when
/// summarising across-seed variance curves by a single number.
pub const EARLY_WINDOW: (u64, u64) = (100, 1000);

/// The eight experiment kinds, one per subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    /// Exact equivalence of the enumerated time-difference distribution and
    /// the triangular kernel.
    KernelCheck,
    /// Empirical vs. predicted batch-signal autocovariance on a two-state
    /// chain, plus the lag-0 attenuation check on an i.i.d. source.
    Autocov,
    /// Fixed buffer capacity, varying batch size.
    DiffN,
    /// Fixed batch size, varying buffer capacity.
    DiffK,
    /// Online vs. replay smoothness across mixing speeds.
    DiffP,
    /// Across-seed variance curves for the online and replay estimators.
    Variance,
    /// Actor-critic training run with snapshot export.
    AcTrain,
    /// Actor-critic closed-form, Monte-Carlo, identity, and convergence
    /// checks.
    AcVerify,
}

impl ExperimentKind {
    /// Subcommand-facing name.
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::KernelCheck => "kernel-check",
            ExperimentKind::Autocov => "autocov",
            ExperimentKind::DiffN => "diff-n",
            ExperimentKind::DiffK => "diff-k",
            ExperimentKind::DiffP => "diff-p",
            ExperimentKind::Variance => "variance",
            ExperimentKind::AcTrain => "ac-train",
            ExperimentKind::AcVerify => "ac-verify",
        }
    }

    /// Stable tag mixed into every seed stream derived for this experiment,
    /// so no stream is shared across subcommands.
    pub fn tag(self) -> u64 {
        match self {
            ExperimentKind::KernelCheck => 1,
            ExperimentKind::Autocov => 2,
            ExperimentKind::DiffN => 3,
            ExperimentKind::DiffK => 4,
            ExperimentKind::DiffP => 5,
            ExperimentKind::Variance => 6,
            ExperimentKind::AcTrain => 7,
            ExperimentKind::AcVerify => 8,
        }
    }

    /// Whether the subcommand is a verification suite (exit code 3 when one
    /// of its checks fails) rather than a figure or training run.
    pub fn is_verify(self) -> bool {
        matches!(
            self,
            ExperimentKind::KernelCheck | ExperimentKind::Autocov | ExperimentKind::AcVerify
        )
    }
}

/// The raw JSON document: every key optional, unknown keys rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: Option<String>,
    pub blocks: Option<usize>,
    pub states_per_block: Option<usize>,
    pub p_out: Option<f64>,
    pub p_out_grid: Option<Vec<f64>>,
    pub block_rewards: Option<Vec<f64>>,
    pub n_grid: Option<Vec<usize>>,
    pub k_grid: Option<Vec<usize>>,
    pub horizon: Option<usize>,
    pub num_seeds: Option<usize>,
    pub base_seed: Option<u64>,
}

/// Parse the JSON config document at `path`.
pub fn load_config(path: &std::path::Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        // serde_json's Display already carries "at line L column C".
        HarnessError::Config(format!("invalid config {}: {e}", path.display()))
    })
}

/// A fully validated configuration with every default filled in.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    #[serde(skip)]
    pub kind: ExperimentKind,
    pub blocks: usize,
    pub states_per_block: usize,
    /// Out-of-block probabilities; a single entry except for `diff-p`.
    pub p_grid: Vec<f64>,
    pub block_rewards: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    /// The validated `(capacity, batch)` pairs the experiment will run.
    pub pairs: Vec<(usize, usize)>,
    pub horizon: usize,
    pub num_seeds: usize,
    pub base_seed: u64,
}

impl ResolvedConfig {
    /// The single out-of-block probability of a non-`diff-p` experiment.
    pub fn p_out(&self) -> f64 {
        self.p_grid[0]
    }

    /// Config echo for the manifest, restricted to the keys the experiment
    /// actually consumes (echoing unused defaults would misleadingly suggest
    /// they influenced the run).
    pub fn echo(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("experiment".into(), json!(self.kind.name()));
        map.insert("base_seed".into(), json!(self.base_seed));
        let keys = used_keys(self.kind);
        if keys.contains(&"blocks") {
            map.insert("blocks".into(), json!(self.blocks));
            map.insert("states_per_block".into(), json!(self.states_per_block));
            map.insert("block_rewards".into(), json!(self.block_rewards));
            if self.kind == ExperimentKind::DiffP {
                map.insert("p_out_grid".into(), json!(self.p_grid));
            } else {
                map.insert("p_out".into(), json!(self.p_out()));
            }
        }
        if keys.contains(&"n_grid") {
            map.insert("n_grid".into(), json!(self.n_grid));
            map.insert("k_grid".into(), json!(self.k_grid));
            map.insert(
                "pairs".into(),
                json!(self
                    .pairs
                    .iter()
                    .map(|&(n, k)| json!({ "n": n, "k": k }))
                    .collect::<Vec<_>>()),
            );
        }
        if keys.contains(&"horizon") {
            map.insert("horizon".into(), json!(self.horizon));
        }
        if keys.contains(&"num_seeds") {
            map.insert("num_seeds".into(), json!(self.num_seeds));
        }
        serde_json::Value::Object(map)
    }
}

/// The keys a given experiment consumes, beyond the universal
/// `experiment` and `base_seed`.
fn used_keys(kind: ExperimentKind) -> &'static [&'static str] {
    const CHAIN_KEYS: &[&str] = &[
        "blocks",
        "states_per_block",
        "p_out",
        "block_rewards",
        "n_grid",
        "k_grid",
        "horizon",
        "num_seeds",
    ];
    const CHAIN_KEYS_P_GRID: &[&str] = &[
        "blocks",
        "states_per_block",
        "p_out_grid",
        "block_rewards",
        "n_grid",
        "k_grid",
        "horizon",
        "num_seeds",
    ];
    match kind {
        ExperimentKind::KernelCheck => &[],
        ExperimentKind::Autocov => &["horizon"],
        ExperimentKind::DiffN | ExperimentKind::DiffK | ExperimentKind::Variance => CHAIN_KEYS,
        ExperimentKind::DiffP => CHAIN_KEYS_P_GRID,
        ExperimentKind::AcTrain | ExperimentKind::AcVerify => {
            &["n_grid", "k_grid", "horizon", "num_seeds"]
        }
    }
}

fn err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Validate `raw` for `kind`, fill defaults, and apply the command-line
/// `--base-seed` override (which wins over the file, which wins over the
/// built-in default).
pub fn resolve(
    kind: ExperimentKind,
    raw: &RawConfig,
    cli_base_seed: Option<u64>,
) -> Result<ResolvedConfig> {
    if let Some(name) = &raw.experiment {
        if name != kind.name() {
            return Err(err(format!(
                "config file names experiment \"{name}\" but the \"{}\" subcommand was invoked",
                kind.name()
            )));
        }
    }
    reject_unused_keys(kind, raw)?;

    let blocks = raw.blocks.unwrap_or(3);
    let states_per_block = raw.states_per_block.unwrap_or(10);
    let block_rewards = raw
        .block_rewards
        .clone()
        .unwrap_or_else(|| (0..blocks).map(|b| b as f64).collect());
    let p_grid = match kind {
        ExperimentKind::DiffP => raw
            .p_out_grid
            .clone()
            .unwrap_or_else(|| vec![0.1, 0.01, 0.001]),
        _ => vec![raw.p_out.unwrap_or(0.01)],
    };
    let n_grid = raw.n_grid.clone().unwrap_or_else(|| default_n_grid(kind));
    let k_grid = raw.k_grid.clone().unwrap_or_else(|| default_k_grid(kind));
    let horizon = raw.horizon.unwrap_or_else(|| default_horizon(kind));
    let num_seeds = raw.num_seeds.unwrap_or_else(|| default_num_seeds(kind));
    let base_seed = cli_base_seed
        .or(raw.base_seed)
        .unwrap_or(DEFAULT_BASE_SEED);

    let uses_chain = used_keys(kind).contains(&"blocks");
    if uses_chain {
        if blocks < 2 {
            return Err(err(format!("blocks must be at least 2, got {blocks}")));
        }
        if states_per_block == 0 {
            return Err(err("states_per_block must be positive"));
        }
        if block_rewards.len() != blocks {
            return Err(err(format!(
                "block_rewards must have one entry per block: got {} entries for {blocks} blocks",
                block_rewards.len()
            )));
        }
        if block_rewards.iter().any(|r| !r.is_finite()) {
            return Err(err("block_rewards must all be finite"));
        }
        if p_grid.is_empty() {
            return Err(err("p_out_grid must not be empty"));
        }
        for &p in &p_grid {
            if !(p > 0.0 && p < 1.0) {
                return Err(err(format!(
                    "out-of-block probability must lie strictly inside (0, 1), got {p}"
                )));
            }
        }
    }

    let uses_grids = used_keys(kind).contains(&"n_grid");
    let pairs = if uses_grids {
        if n_grid.is_empty() {
            return Err(err("n_grid must not be empty"));
        }
        if k_grid.is_empty() {
            return Err(err("k_grid must not be empty"));
        }
        if n_grid.contains(&0) {
            return Err(err("every buffer capacity N must be positive"));
        }
        if k_grid.contains(&0) {
            return Err(err("every batch size K must be positive"));
        }
        build_pairs(kind, &n_grid, &k_grid)?
    } else {
        Vec::new()
    };

    let min_horizon = match kind {
        // The smoothness window must fit inside the recorded trace.
        ExperimentKind::DiffN | ExperimentKind::DiffK | ExperimentKind::DiffP => {
            SMOOTHNESS_WINDOW.1 as usize
        }
        // Long enough for 30 batch means over the recorded lags.
        ExperimentKind::Autocov => 1_000,
        ExperimentKind::AcVerify => 1_000,
        _ => 1,
    };
    if horizon < min_horizon {
        return Err(err(format!(
            "horizon for {} must be at least {min_horizon}, got {horizon}",
            kind.name()
        )));
    }
    let min_seeds = match kind {
        // Unbiased across-seed variance needs two observations.
        ExperimentKind::Variance => 2,
        _ => 1,
    };
    if num_seeds < min_seeds {
        return Err(err(format!(
            "num_seeds for {} must be at least {min_seeds}, got {num_seeds}",
            kind.name()
        )));
    }

    Ok(ResolvedConfig {
        kind,
        blocks,
        states_per_block,
        p_grid,
        block_rewards,
        n_grid,
        k_grid,
        pairs,
        horizon,
        num_seeds,
        base_seed,
    })
}

fn reject_unused_keys(kind: ExperimentKind, raw: &RawConfig) -> Result<()> {
    let mut provided: Vec<&str> = Vec::new();
    if raw.blocks.is_some() {
        provided.push("blocks");
    }
    if raw.states_per_block.is_some() {
        provided.push("states_per_block");
    }
    if raw.p_out.is_some() {
        provided.push("p_out");
    }
    if raw.p_out_grid.is_some() {
        provided.push("p_out_grid");
    }
    if raw.block_rewards.is_some() {
        provided.push("block_rewards");
    }
    if raw.n_grid.is_some() {
        provided.push("n_grid");
    }
    if raw.k_grid.is_some() {
        provided.push("k_grid");
    }
    if raw.horizon.is_some() {
        provided.push("horizon");
    }
    if raw.num_seeds.is_some() {
        provided.push("num_seeds");
    }
    let allowed = used_keys(kind);
    let offenders: Vec<&str> = provided
        .into_iter()
        .filter(|key| !allowed.contains(key))
        .collect();
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(err(format!(
            "config key{} {} not used by experiment \"{}\"",
            if offenders.len() == 1 { "" } else { "s" },
            offenders
                .iter()
                .map(|k| format!("\"{k}\""))
                .collect::<Vec<_>>()
                .join(", "),
            kind.name()
        )))
    }
}

fn default_n_grid(kind: ExperimentKind) -> Vec<usize> {
    match kind {
        ExperimentKind::DiffN | ExperimentKind::DiffP => vec![500],
        ExperimentKind::DiffK => vec![10, 100, 500],
        ExperimentKind::Variance => vec![10, 50, 100, 500],
        ExperimentKind::AcTrain | ExperimentKind::AcVerify => vec![100],
        _ => Vec::new(),
    }
}

fn default_k_grid(kind: ExperimentKind) -> Vec<usize> {
    match kind {
        ExperimentKind::DiffN => vec![1, 5, 50],
        ExperimentKind::DiffK | ExperimentKind::DiffP => vec![5],
        ExperimentKind::Variance => vec![1, 5, 20, 50],
        ExperimentKind::AcTrain | ExperimentKind::AcVerify => vec![5],
        _ => Vec::new(),
    }
}

fn default_horizon(kind: ExperimentKind) -> usize {
    match kind {
        ExperimentKind::Autocov | ExperimentKind::AcTrain | ExperimentKind::AcVerify => 200_000,
        _ => 10_000,
    }
}

fn default_num_seeds(kind: ExperimentKind) -> usize {
    match kind {
        ExperimentKind::AcTrain => 1,
        ExperimentKind::AcVerify => 20,
        _ => 100,
    }
}

/// Form the experiment's `(capacity, batch)` pairs, enforcing `K ≤ N`.
///
/// The `variance` sweep crosses its two grids and keeps the feasible pairs,
/// complaining only when nothing survives: its default grids intentionally
/// span ranges (such as N = 10 against K = 50) whose infeasible corners are
/// skipped. Every other experiment runs exactly the pairs the user named, so
/// an infeasible pair there is an error rather than a silent omission.
fn build_pairs(
    kind: ExperimentKind,
    n_grid: &[usize],
    k_grid: &[usize],
) -> Result<Vec<(usize, usize)>> {
    let fmt_pair = |(n, k): &(usize, usize)| format!("(N={n}, K={k})");
    match kind {
        ExperimentKind::Variance => {
            let (valid, invalid): (Vec<_>, Vec<_>) = n_grid
                .iter()
                .flat_map(|&n| k_grid.iter().map(move |&k| (n, k)))
                .partition(|&(n, k)| k <= n);
            if valid.is_empty() {
                return Err(err(format!(
                    "every candidate pair violates K ≤ N: {}",
                    invalid.iter().map(fmt_pair).collect::<Vec<_>>().join(", ")
                )));
            }
            Ok(valid)
        }
        _ => {
            if matches!(kind, ExperimentKind::DiffN) && n_grid.len() != 1 {
                return Err(err(format!(
                    "diff-n fixes the buffer capacity: n_grid must hold exactly one value, got {}",
                    n_grid.len()
                )));
            }
            if matches!(kind, ExperimentKind::DiffK) && k_grid.len() != 1 {
                return Err(err(format!(
                    "diff-k fixes the batch size: k_grid must hold exactly one value, got {}",
                    k_grid.len()
                )));
            }
            if matches!(
                kind,
                ExperimentKind::DiffP | ExperimentKind::AcTrain | ExperimentKind::AcVerify
            ) && (n_grid.len() != 1 || k_grid.len() != 1)
            {
                return Err(err(format!(
                    "{} runs a single (N, K) pair: n_grid and k_grid must each hold one value",
                    kind.name()
                )));
            }
            let pairs: Vec<(usize, usize)> = n_grid
                .iter()
                .flat_map(|&n| k_grid.iter().map(move |&k| (n, k)))
                .collect();
            let invalid: Vec<_> = pairs.iter().filter(|&&(n, k)| k > n).cloned().collect();
            if !invalid.is_empty() {
                return Err(err(format!(
                    "batch size exceeds buffer capacity at {}",
                    invalid.iter().map(fmt_pair).collect::<Vec<_>>().join(", ")
                )));
            }
            Ok(pairs)
        }
    }
}
