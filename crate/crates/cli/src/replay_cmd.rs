//! `banditlab replay`: n independent replications of
//! augment -> build contexts -> replay every policy, written to disk.

use serde_json::json;

use banditlab_core::experiment::{infer_arms, run_experiment, PreparedData};
use banditlab_core::io::{read_features_csv, read_sessions_jsonl};

use crate::config::{resolve, ResolvedConfig};
use crate::outputs::{
    write_manifest, write_pvalues, write_summary, write_trajectories, MANIFEST_FILE,
};
use crate::{CliError, ReplayArgs};

pub fn run(args: &ReplayArgs) -> Result<(), CliError> {
    let config = resolve(args)?;
    if let Some(threads) = config.threads {
        // Ignore failures from double initialization (tests within one
        // process); the pool size only affects wall time, never results.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = execute(&config)?;
    println!(
        "replayed {} policies x {} runs; results in {}",
        config.policies.len(),
        config.runs,
        config.out.display()
    );
    let _ = result;
    Ok(())
}

/// Loads the dataset, runs the experiment, and writes all result files.
pub fn execute(config: &ResolvedConfig) -> Result<banditlab_core::experiment::ExperimentResult, CliError> {
    let sessions = read_sessions_jsonl(&config.sessions)?;
    let features = read_features_csv(&config.features)?;
    let arms = infer_arms(&sessions);
    let data = PreparedData::prepare(sessions, &features, arms, config.pca_components)?;
    let plan = config.plan()?;
    let result = run_experiment(&data, &plan)?;

    std::fs::create_dir_all(&config.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", config.out.display())))?;
    write_summary(&config.out, &result)?;
    write_pvalues(&config.out, &result)?;
    write_trajectories(&config.out, &result)?;

    let manifest = json!({
        "format_version": 1,
        "tool": "banditlab",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": "replay",
        "master_seed": config.seed,
        "arms": arms,
        "arm_names": (0..arms).map(|a| format!("arm_{a}")).collect::<Vec<_>>(),
        "majority_label": data.majority_label(),
        "config": config,
    });
    write_manifest(&config.out.join(MANIFEST_FILE), &manifest)?;
    Ok(result)
}
