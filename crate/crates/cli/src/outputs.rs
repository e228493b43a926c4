//! Result files: run manifest, summary.csv, pvalues.csv, per-run trajectory
//! CSVs, and the report artifacts (curve files and the accuracy table).
//!
//! All numeric fields use the shortest round-trip float formatting, so a
//! rerun with the same seed reproduces every file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use banditlab_core::experiment::ExperimentResult;
use banditlab_core::policies::PolicyKind;
use banditlab_core::replay::RunSummary;

use crate::CliError;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const PVALUES_FILE: &str = "pvalues.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNS_DIR: &str = "runs";
pub const TABLE_FILE: &str = "table.txt";

pub fn write_manifest(path: &Path, manifest: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::Runtime(format!("manifest serialization failed: {e}")))?;
    fs::write(path, text + "\n")
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>, CliError> {
    let file = fs::File::create(path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(file))
}

/// `summary.csv`: one row per (context, policy, cutoff) with the mean and
/// standard deviation of accuracy across runs, the strongest competing
/// policy at that cell, and the paired p-value against it.
pub fn write_summary(dir: &Path, result: &ExperimentResult) -> Result<(), CliError> {
    let path = dir.join(SUMMARY_FILE);
    let mut out = create(&path)?;
    let write = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(
            out,
            "context,policy,cutoff,mean_acc,std_acc,n,best_other,p_vs_best_other"
        )?;
        for (ctx, outcome) in &result.per_context {
            let summary = &outcome.summary;
            for &policy in &summary.policies {
                for &cutoff in &summary.cutoffs {
                    let cell = summary.cell(policy, cutoff).expect("cell exists");
                    let best_other = best_other(summary, policy, cutoff);
                    let (other_name, p_text) = match best_other {
                        Some(other) => {
                            let p = summary
                                .pairwise_test(cutoff, policy, other)
                                .and_then(|c| c.test.as_ref())
                                .map(|t| format!("{}", t.p_two_sided))
                                .unwrap_or_default();
                            (other.name().to_string(), p)
                        }
                        None => (String::new(), String::new()),
                    };
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        ctx.name(),
                        policy.name(),
                        cutoff,
                        cell.mean_acc,
                        cell.std_acc,
                        cell.runs,
                        other_name,
                        p_text
                    )?;
                }
            }
        }
        Ok(())
    };
    write(&mut out).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    out.flush()
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// The competing policy with the highest mean accuracy at this cell.
fn best_other(summary: &RunSummary, policy: PolicyKind, cutoff: usize) -> Option<PolicyKind> {
    summary
        .policies
        .iter()
        .copied()
        .filter(|&p| p != policy)
        .max_by(|&a, &b| {
            let ma = summary.cell(a, cutoff).map(|c| c.mean_acc).unwrap_or(0.0);
            let mb = summary.cell(b, cutoff).map(|c| c.mean_acc).unwrap_or(0.0);
            // Ties resolve toward the earlier policy in canonical order.
            ma.partial_cmp(&mb).unwrap().then(b.cmp(&a))
        })
}

/// `pvalues.csv`: the full pairwise test matrix per context and cutoff.
pub fn write_pvalues(dir: &Path, result: &ExperimentResult) -> Result<(), CliError> {
    let path = dir.join(PVALUES_FILE);
    let mut out = create(&path)?;
    let write = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "context,cutoff,policy_a,policy_b,t_stat,dof,p_two_sided")?;
        for (ctx, outcome) in &result.per_context {
            for &cutoff in &outcome.summary.cutoffs {
                for cmp in outcome.summary.pairwise(cutoff) {
                    match &cmp.test {
                        Some(t) => writeln!(
                            out,
                            "{},{},{},{},{},{},{}",
                            ctx.name(),
                            cutoff,
                            cmp.policy_a.name(),
                            cmp.policy_b.name(),
                            t.t_stat,
                            t.dof,
                            t.p_two_sided
                        )?,
                        None => writeln!(
                            out,
                            "{},{},{},{},,,",
                            ctx.name(),
                            cutoff,
                            cmp.policy_a.name(),
                            cmp.policy_b.name()
                        )?,
                    }
                }
            }
        }
        Ok(())
    };
    write(&mut out).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    out.flush()
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Per-run trajectory files: `runs/run_<idx>/<context>_<policy>.csv`.
pub fn write_trajectories(dir: &Path, result: &ExperimentResult) -> Result<(), CliError> {
    let runs_dir = dir.join(RUNS_DIR);
    for (ctx, outcome) in &result.per_context {
        for (policy, trajectories) in &outcome.by_policy {
            for (run_idx, trajectory) in trajectories.iter().enumerate() {
                let run_dir = runs_dir.join(format!("run_{run_idx:04}"));
                fs::create_dir_all(&run_dir).map_err(|e| {
                    CliError::Runtime(format!("cannot create {}: {e}", run_dir.display()))
                })?;
                let path = run_dir.join(format!("{}_{}.csv", ctx.name(), policy.name()));
                let mut out = create(&path)?;
                let write = |out: &mut dyn Write| -> std::io::Result<()> {
                    writeln!(out, "t,arm,reward,cum_reward")?;
                    for (record, cum) in trajectory.rounds.iter().zip(&trajectory.cumulative) {
                        writeln!(out, "{},{},{},{}", record.round, record.arm, record.reward, cum)?;
                    }
                    Ok(())
                };
                write(&mut out).map_err(|e| {
                    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
                })?;
                out.flush().map_err(|e| {
                    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
                })?;
            }
        }
    }
    Ok(())
}

// ---- readers used by the report command ------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub context: String,
    pub policy: String,
    pub cutoff: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub n: usize,
    pub best_other: String,
    pub p_vs_best_other: Option<f64>,
}

pub fn read_summary(dir: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(CliError::Data(format!(
                "{}:{}: expected 8 fields, got {}",
                path.display(),
                idx + 1,
                fields.len()
            )));
        }
        let parse_f = |s: &str, name: &str| -> Result<f64, CliError> {
            s.parse().map_err(|_| {
                CliError::Data(format!("{}:{}: bad {name}: {s:?}", path.display(), idx + 1))
            })
        };
        rows.push(SummaryRow {
            context: fields[0].to_string(),
            policy: fields[1].to_string(),
            cutoff: fields[2].parse().map_err(|_| {
                CliError::Data(format!("{}:{}: bad cutoff", path.display(), idx + 1))
            })?,
            mean_acc: parse_f(fields[3], "mean_acc")?,
            std_acc: parse_f(fields[4], "std_acc")?,
            n: fields[5].parse().map_err(|_| {
                CliError::Data(format!("{}:{}: bad n", path.display(), idx + 1))
            })?,
            best_other: fields[6].to_string(),
            p_vs_best_other: if fields[7].is_empty() {
                None
            } else {
                Some(parse_f(fields[7], "p_vs_best_other")?)
            },
        });
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvalueRow {
    pub context: String,
    pub cutoff: usize,
    pub policy_a: String,
    pub policy_b: String,
    pub p_two_sided: Option<f64>,
}

pub fn read_pvalues(dir: &Path) -> Result<Vec<PvalueRow>, CliError> {
    let path = dir.join(PVALUES_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CliError::Data(format!(
                "{}:{}: expected 7 fields, got {}",
                path.display(),
                idx + 1,
                fields.len()
            )));
        }
        rows.push(PvalueRow {
            context: fields[0].to_string(),
            cutoff: fields[1].parse().map_err(|_| {
                CliError::Data(format!("{}:{}: bad cutoff", path.display(), idx + 1))
            })?,
            policy_a: fields[2].to_string(),
            policy_b: fields[3].to_string(),
            p_two_sided: if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse().map_err(|_| {
                    CliError::Data(format!("{}:{}: bad p value", path.display(), idx + 1))
                })?)
            },
        });
    }
    Ok(rows)
}

/// Cumulative-reward columns of one trajectory file.
pub fn read_trajectory_cumulative(path: &Path) -> Result<Vec<u32>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut cum = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            continue;
        }
        let last = line.rsplit(',').next().unwrap_or_default();
        cum.push(last.parse().map_err(|_| {
            CliError::Data(format!("{}:{}: bad cum_reward", path.display(), idx + 1))
        })?);
    }
    if cum.is_empty() {
        return Err(CliError::Data(format!("{}: no rounds", path.display())));
    }
    Ok(cum)
}

/// Lists run directories in index order.
pub fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let runs = dir.join(RUNS_DIR);
    let mut out = Vec::new();
    let entries = fs::read_dir(&runs)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", runs.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Data(e.to_string()))?;
        if entry.path().is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no run directories",
            runs.display()
        )));
    }
    Ok(out)
}

/// Keeps only the policies/contexts that actually appear in the summary.
pub fn summary_axes(rows: &[SummaryRow]) -> (Vec<String>, Vec<String>, Vec<usize>) {
    let mut contexts = Vec::new();
    let mut policies = Vec::new();
    let mut cutoffs = Vec::new();
    for row in rows {
        if !contexts.contains(&row.context) {
            contexts.push(row.context.clone());
        }
        if !policies.contains(&row.policy) {
            policies.push(row.policy.clone());
        }
        if !cutoffs.contains(&row.cutoff) {
            cutoffs.push(row.cutoff);
        }
    }
    cutoffs.sort_unstable();
    (contexts, policies, cutoffs)
}

/// Convenience map from (context, policy, cutoff) to the summary row.
pub fn summary_index(
    rows: &[SummaryRow],
) -> BTreeMap<(String, String, usize), &SummaryRow> {
    rows.iter()
        .map(|r| ((r.context.clone(), r.policy.clone(), r.cutoff), r))
        .collect()
}

/// Mean cumulative-reward curves per policy for one context, averaged over
/// runs, read back from the per-run trajectory files.
pub fn mean_curves_from_files(
    dir: &Path,
    context: &str,
    policies: &[String],
) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let runs = run_dirs(dir)?;
    let mut curves = BTreeMap::new();
    for policy in policies {
        let mut acc: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for run in &runs {
            let path = run.join(format!("{context}_{policy}.csv"));
            if !path.exists() {
                continue;
            }
            let cum = read_trajectory_cumulative(&path)?;
            if acc.is_empty() {
                acc = vec![0.0; cum.len()];
            }
            if cum.len() != acc.len() {
                return Err(CliError::Data(format!(
                    "{}: trajectory length {} differs from {}",
                    path.display(),
                    cum.len(),
                    acc.len()
                )));
            }
            for (a, c) in acc.iter_mut().zip(&cum) {
                *a += f64::from(*c);
            }
            count += 1;
        }
        if count == 0 {
            return Err(CliError::Data(format!(
                "no trajectories found for {context}/{policy}"
            )));
        }
        for a in acc.iter_mut() {
            *a /= count as f64;
        }
        curves.insert(policy.clone(), acc);
    }
    Ok(curves)
}

pub fn curves_file_name(context: &str) -> String {
    format!("curves_{context}.csv")
}
