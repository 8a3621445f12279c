//! Figure experiment drivers: variance curves and smoothness sweeps on the
//! block reward chain.
//!
//! Each driver renders its outputs in memory and returns them together with
//! the seed bookkeeping, so the command layer owns all filesystem writes.
//! Grid points run in parallel; a numerical failure at one grid point is
//! recorded and the remaining points still run, with the aggregated files
//! flagged as partial.

use rayon::prelude::*;
use replaylab_core::estimators::{
    average_smoothness, run_method, variance_across_seeds, EstimatorMethod, EstimatorTrace,
    VarianceCurve,
};
use replaylab_core::markov::{build_block_mrp, BlockMrpConfig, MarkovChain};
use replaylab_core::seed::derive_seed;

use crate::config::{ResolvedConfig, EARLY_WINDOW, SMOOTHNESS_WINDOW};
use crate::csvio::{self, SmoothnessRow};
use crate::manifest::{CheckRecord, NamedFile, RunRecord};
use crate::svg::{self, Series};
use crate::Result;

/// Everything a driver hands back to the command layer.
#[derive(Debug, Default)]
pub struct DriverOutput {
    /// Files to write, in order; the flag marks a file that is missing rows
    /// because of a numerical failure elsewhere in the run.
    pub files: Vec<(NamedFile, bool)>,
    pub runs: Vec<RunRecord>,
    pub checks: Vec<CheckRecord>,
    pub failures: Vec<String>,
}

/// Variance driver result: the emitted artifacts plus the curves themselves
/// for in-process consumers.
pub struct VarianceResult {
    pub output: DriverOutput,
    pub curves: Vec<(EstimatorMethod, VarianceCurve)>,
}

/// Smoothness driver result: the emitted artifacts plus one metric row per
/// grid point.
pub struct SmoothnessResult {
    pub output: DriverOutput,
    pub rows: Vec<SmoothnessRow>,
}

/// Short slug naming a grid point in file names and run labels.
pub fn method_slug(method: EstimatorMethod) -> String {
    match method.params() {
        Some((n, k)) => format!("rb_n{n}_k{k}"),
        None => "online".to_string(),
    }
}

/// The block chain described by the config at out-of-block probability `p`.
pub fn block_chain(cfg: &ResolvedConfig, p: f64) -> Result<MarkovChain> {
    let chain = build_block_mrp(&BlockMrpConfig {
        num_blocks: cfg.blocks,
        states_per_block: cfg.states_per_block,
        p_out: p,
        block_rewards: cfg.block_rewards.clone(),
    })?;
    Ok(chain.with_descriptor(format!(
        "block-mrp b{} s{} p{}",
        cfg.blocks, cfg.states_per_block, p
    )))
}

/// Root seed of grid point `grid_index`: every per-seed stream of that point
/// is derived from it by the seed index.
pub fn grid_root(cfg: &ResolvedConfig, grid_index: usize) -> u64 {
    derive_seed(cfg.base_seed, &[cfg.kind.tag(), grid_index as u64])
}

/// Record the seed streams of `num_seeds` runs at one grid point, mirroring
/// the derivation the core aggregators apply internally.
fn record_runs(
    runs: &mut Vec<RunRecord>,
    grid_index: usize,
    label: &str,
    root: u64,
    num_seeds: usize,
) {
    for seed_index in 0..num_seeds {
        runs.push(RunRecord {
            grid_index,
            grid_label: label.to_string(),
            seed_index,
            stream_id: derive_seed(root, &[seed_index as u64]),
        });
    }
}

fn trace_series(trace: &EstimatorTrace, label: &str) -> Series {
    Series {
        label: label.to_string(),
        points: trace
            .times()
            .zip(&trace.eta)
            .map(|(t, &eta)| (t as f64, eta))
            .collect(),
    }
}

/// Across-seed variance curves for the online estimator and every feasible
/// replay pair of the config, plus one seed-0 trace per grid point.
pub fn run_variance(cfg: &ResolvedConfig, svg: bool) -> Result<VarianceResult> {
    let chain = block_chain(cfg, cfg.p_out())?;
    let methods: Vec<EstimatorMethod> = std::iter::once(EstimatorMethod::Online)
        .chain(
            cfg.pairs
                .iter()
                .map(|&(n, k)| EstimatorMethod::Replay { n, k }),
        )
        .collect();

    let mut output = DriverOutput::default();
    for (g, &method) in methods.iter().enumerate() {
        record_runs(
            &mut output.runs,
            g,
            &method_slug(method),
            grid_root(cfg, g),
            cfg.num_seeds,
        );
    }

    let points: Vec<(usize, std::result::Result<_, replaylab_core::Error>)> = methods
        .par_iter()
        .enumerate()
        .map(|(g, &method)| {
            let root = grid_root(cfg, g);
            let result = variance_across_seeds(&chain, method, cfg.horizon, cfg.num_seeds, root)
                .and_then(|curve| {
                    let trace = run_method(&chain, method, cfg.horizon, derive_seed(root, &[0]))?;
                    Ok((method, curve, trace))
                });
            (g, result)
        })
        .collect();

    let mut curves: Vec<(EstimatorMethod, VarianceCurve)> = Vec::new();
    let mut traces: Vec<(EstimatorMethod, EstimatorTrace)> = Vec::new();
    for (g, result) in points {
        match result {
            Ok((method, curve, trace)) => {
                curves.push((method, curve));
                traces.push((method, trace));
            }
            Err(e) => output
                .failures
                .push(format!("grid point {}: {e}", method_slug(methods[g]))),
        }
    }
    let partial = !output.failures.is_empty();

    output.files.push((
        NamedFile::new("variance.csv", csvio::variance_csv(&curves)),
        partial,
    ));
    for (method, trace) in &traces {
        output.files.push((
            NamedFile::new(
                format!("trace_{}.csv", method_slug(*method)),
                csvio::trace_csv(trace),
            ),
            false,
        ));
    }
    if svg {
        let series: Vec<Series> = curves
            .iter()
            .map(|(method, curve)| Series {
                label: method_slug(*method),
                points: curve
                    .times()
                    .zip(&curve.variance)
                    .map(|(t, &v)| (t as f64, v))
                    .collect(),
            })
            .collect();
        output.files.push((
            NamedFile::new(
                "variance.svg",
                svg::line_chart(
                    "Across-seed variance of the estimate",
                    "t",
                    "variance",
                    &series,
                    true,
                ),
            ),
            partial,
        ));
    }
    Ok(VarianceResult { output, curves })
}

/// Shared smoothness sweep over the config's `(N, K)` pairs at the single
/// out-of-block probability. Serves both `diff-n` (capacity fixed, batch
/// varying) and `diff-k` (batch fixed, capacity varying); the config layer
/// already shaped the pair grid accordingly.
pub fn run_diff_grid(cfg: &ResolvedConfig, svg: bool) -> Result<SmoothnessResult> {
    let chain = block_chain(cfg, cfg.p_out())?;
    let methods: Vec<EstimatorMethod> = cfg
        .pairs
        .iter()
        .map(|&(n, k)| EstimatorMethod::Replay { n, k })
        .collect();

    let mut output = DriverOutput::default();
    for (g, &method) in methods.iter().enumerate() {
        record_runs(
            &mut output.runs,
            g,
            &method_slug(method),
            grid_root(cfg, g),
            cfg.num_seeds,
        );
    }

    let points: Vec<(usize, std::result::Result<_, replaylab_core::Error>)> = methods
        .par_iter()
        .enumerate()
        .map(|(g, &method)| {
            let root = grid_root(cfg, g);
            let result = average_smoothness(
                &chain,
                method,
                cfg.horizon,
                SMOOTHNESS_WINDOW.0,
                SMOOTHNESS_WINDOW.1,
                cfg.num_seeds,
                root,
            )
            .and_then(|value| {
                let trace = run_method(&chain, method, cfg.horizon, derive_seed(root, &[0]))?;
                Ok((method, value, trace))
            });
            (g, result)
        })
        .collect();

    let mut rows: Vec<SmoothnessRow> = Vec::new();
    let mut traces: Vec<(EstimatorMethod, EstimatorTrace)> = Vec::new();
    for (g, result) in points {
        match result {
            Ok((method, value, trace)) => {
                rows.push(SmoothnessRow {
                    method,
                    p_out: cfg.p_out(),
                    value,
                });
                traces.push((method, trace));
            }
            Err(e) => output
                .failures
                .push(format!("grid point {}: {e}", method_slug(methods[g]))),
        }
    }
    let partial = !output.failures.is_empty();

    output.files.push((
        NamedFile::new("smoothness.csv", csvio::smoothness_csv(&rows)),
        partial,
    ));
    for (method, trace) in &traces {
        output.files.push((
            NamedFile::new(
                format!("trace_{}.csv", method_slug(*method)),
                csvio::trace_csv(trace),
            ),
            false,
        ));
    }
    if svg {
        let series: Vec<Series> = traces
            .iter()
            .map(|(method, trace)| trace_series(trace, &method_slug(*method)))
            .collect();
        output.files.push((
            NamedFile::new(
                "traces.svg",
                svg::line_chart("Estimate trajectories (seed 0)", "t", "eta", &series, false),
            ),
            partial,
        ));
    }
    Ok(SmoothnessResult { output, rows })
}

/// Online-vs-replay smoothness contrast across the out-of-block probability
/// grid. Grid points are laid out as `p_index * 2 + {0: online, 1: replay}`.
pub fn run_diff_p(cfg: &ResolvedConfig, svg: bool) -> Result<SmoothnessResult> {
    let (n, k) = cfg.pairs[0];
    let grid: Vec<(f64, EstimatorMethod)> = cfg
        .p_grid
        .iter()
        .flat_map(|&p| {
            [
                (p, EstimatorMethod::Online),
                (p, EstimatorMethod::Replay { n, k }),
            ]
        })
        .collect();

    let mut output = DriverOutput::default();
    let labels: Vec<String> = grid
        .iter()
        .map(|&(p, method)| format!("p{p}_{}", method_slug(method)))
        .collect();
    for (g, label) in labels.iter().enumerate() {
        record_runs(&mut output.runs, g, label, grid_root(cfg, g), cfg.num_seeds);
    }

    let points: Vec<(usize, std::result::Result<_, replaylab_core::Error>)> = grid
        .par_iter()
        .enumerate()
        .map(|(g, &(p, method))| {
            let root = grid_root(cfg, g);
            let result = block_chain(cfg, p)
                .map_err(|e| replaylab_core::Error::Config(e.to_string()))
                .and_then(|chain| {
                    let value = average_smoothness(
                        &chain,
                        method,
                        cfg.horizon,
                        SMOOTHNESS_WINDOW.0,
                        SMOOTHNESS_WINDOW.1,
                        cfg.num_seeds,
                        root,
                    )?;
                    let trace =
                        run_method(&chain, method, cfg.horizon, derive_seed(root, &[0]))?;
                    Ok((p, method, value, trace))
                });
            (g, result)
        })
        .collect();

    let mut rows: Vec<SmoothnessRow> = Vec::new();
    let mut traces: Vec<(String, EstimatorTrace)> = Vec::new();
    for (g, result) in points {
        match result {
            Ok((p, method, value, trace)) => {
                rows.push(SmoothnessRow {
                    method,
                    p_out: p,
                    value,
                });
                traces.push((labels[g].clone(), trace));
            }
            Err(e) => output.failures.push(format!("grid point {}: {e}", labels[g])),
        }
    }
    let partial = !output.failures.is_empty();

    output.files.push((
        NamedFile::new("smoothness.csv", csvio::smoothness_csv(&rows)),
        partial,
    ));
    for (label, trace) in &traces {
        output.files.push((
            NamedFile::new(format!("trace_{label}.csv"), csvio::trace_csv(trace)),
            false,
        ));
    }
    if svg {
        for (pi, &p) in cfg.p_grid.iter().enumerate() {
            let series: Vec<Series> = traces
                .iter()
                .skip(pi * 2)
                .take(2)
                .map(|(label, trace)| trace_series(trace, label))
                .collect();
            output.files.push((
                NamedFile::new(
                    format!("traces_p{p}.svg"),
                    svg::line_chart(
                        &format!("Estimate trajectories at p_out = {p} (seed 0)"),
                        "t",
                        "eta",
                        &series,
                        false,
                    ),
                ),
                partial,
            ));
        }
    }
    Ok(SmoothnessResult { output, rows })
}

/// Mean across-seed variance of `curve` over the early window, for quick
/// summaries of the variance experiment.
pub fn early_window_mean(curve: &VarianceCurve) -> Result<f64> {
    Ok(curve.window_mean(EARLY_WINDOW.0, EARLY_WINDOW.1)?)
}
