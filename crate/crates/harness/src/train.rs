//! The `ac-train` subcommand: full actor-critic training runs on the
//! built-in 5-state fixture, with per-step snapshots written to CSV.

use rayon::prelude::*;
use replaylab_core::actor_critic::{run_actor_critic, AcRunConfig, CriticFeatures};
use replaylab_core::seed::derive_seed;

use crate::config::ResolvedConfig;
use crate::csvio;
use crate::experiments::{grid_root, DriverOutput};
use crate::manifest::{NamedFile, RunRecord};
use crate::verify::mc_fixture_mdp;
use crate::Result;

/// Number of snapshot rows targeted per trace file.
const TARGET_SNAPSHOTS: usize = 1_000;

/// Train the actor-critic on the built-in fixture for every seed and emit
/// one snapshot CSV per seed (`ac.csv` for seed 0, `ac_seed{i}.csv` after).
pub fn run_ac_train(cfg: &ResolvedConfig, svg: bool) -> Result<DriverOutput> {
    let mdp = mc_fixture_mdp();
    let features = CriticFeatures::tabular_minus_anchor(mdp.num_states())?;
    let dim = mdp.num_states() - 1;
    let (n, k) = cfg.pairs[0];
    let root = grid_root(cfg, 0);

    let mut output = DriverOutput::default();
    for seed_index in 0..cfg.num_seeds {
        output.runs.push(RunRecord {
            grid_index: 0,
            grid_label: format!("n{n}_k{k}"),
            seed_index,
            stream_id: derive_seed(root, &[seed_index as u64]),
        });
    }

    let results: Vec<(usize, std::result::Result<_, replaylab_core::Error>)> = (0..cfg.num_seeds)
        .into_par_iter()
        .map(|i| {
            let mut run_cfg =
                AcRunConfig::new(cfg.horizon, n, k, derive_seed(root, &[i as u64]));
            run_cfg.snapshot_every = (cfg.horizon / TARGET_SNAPSHOTS).max(1);
            (i, run_actor_critic(&mdp, &features, &run_cfg))
        })
        .collect();

    let mut eta_curve: Vec<(f64, f64)> = Vec::new();
    for (i, result) in results {
        match result {
            Ok(run) => {
                let name = if i == 0 {
                    "ac.csv".to_string()
                } else {
                    format!("ac_seed{i}.csv")
                };
                if i == 0 {
                    eta_curve = run
                        .snapshots
                        .iter()
                        .map(|s| (s.t as f64, s.eta))
                        .collect();
                }
                output
                    .files
                    .push((NamedFile::new(name, csvio::ac_csv(&run.snapshots, dim)), false));
            }
            Err(e) => output.failures.push(format!("seed {i}: {e}")),
        }
    }
    let partial = !output.failures.is_empty();
    for (_, flag) in &mut output.files {
        *flag = partial;
    }

    if svg && !eta_curve.is_empty() {
        output.files.push((
            NamedFile::new(
                "ac.svg",
                crate::svg::line_chart(
                    "Actor-critic gain estimate (seed 0)",
                    "t",
                    "eta",
                    &[crate::svg::Series { label: "eta".into(), points: eta_curve }],
                    false,
                ),
            ),
            partial,
        ));
    }
    Ok(output)
}
