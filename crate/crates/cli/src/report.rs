//! `banditlab report`: plot-ready mean cumulative-reward curves and a
//! formatted accuracy table with significance stars.
//!
//! A policy earns a star at a cell when it improves on at least one other
//! policy there and every one of those improvements is significant at
//! p < 0.01 (paired t-test).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::outputs::{
    curves_file_name, mean_curves_from_files, read_pvalues, read_summary, summary_axes,
    summary_index, PvalueRow, SummaryRow, TABLE_FILE,
};
use crate::{CliError, ReportArgs};

pub const STAR_THRESHOLD: f64 = 0.01;

pub fn run(args: &ReportArgs) -> Result<(), CliError> {
    let results = &args.results;
    let out = args.out.clone().unwrap_or_else(|| results.clone());
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;

    let rows = read_summary(results)?;
    let pvalues = read_pvalues(results)?;
    let (contexts, policies, cutoffs) = summary_axes(&rows);

    for context in &contexts {
        let curves = mean_curves_from_files(results, context, &policies)?;
        write_curves(&out.join(curves_file_name(context)), &policies, &curves)?;
    }

    let table = render_table(&rows, &pvalues, &contexts, &policies, &cutoffs);
    std::fs::write(out.join(TABLE_FILE), &table)
        .map_err(|e| CliError::Runtime(format!("cannot write table: {e}")))?;
    print!("{table}");
    Ok(())
}

fn write_curves(
    path: &Path,
    policies: &[String],
    curves: &BTreeMap<String, Vec<f64>>,
) -> Result<(), CliError> {
    let mut text = String::new();
    text.push('t');
    for policy in policies {
        text.push(',');
        text.push_str(policy);
    }
    text.push('\n');
    let len = curves.values().map(Vec::len).min().unwrap_or(0);
    for t in 0..len {
        let _ = write!(text, "{}", t + 1);
        for policy in policies {
            let _ = write!(text, ",{}", curves[policy][t]);
        }
        text.push('\n');
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// p-value lookup that ignores pair order.
fn pairwise_p<'a>(
    pvalues: &'a [PvalueRow],
    context: &str,
    cutoff: usize,
    a: &str,
    b: &str,
) -> Option<&'a PvalueRow> {
    pvalues.iter().find(|r| {
        r.context == context
            && r.cutoff == cutoff
            && ((r.policy_a == a && r.policy_b == b) || (r.policy_a == b && r.policy_b == a))
    })
}

/// A policy stars iff it improves on someone and every improvement is
/// significant.
fn earns_star(
    index: &BTreeMap<(String, String, usize), &SummaryRow>,
    pvalues: &[PvalueRow],
    context: &str,
    cutoff: usize,
    policy: &str,
    policies: &[String],
) -> bool {
    let own = match index.get(&(context.to_string(), policy.to_string(), cutoff)) {
        Some(row) => row.mean_acc,
        None => return false,
    };
    let mut improved_on_any = false;
    for other in policies {
        if other == policy {
            continue;
        }
        let other_mean = match index.get(&(context.to_string(), other.clone(), cutoff)) {
            Some(row) => row.mean_acc,
            None => continue,
        };
        if other_mean < own {
            improved_on_any = true;
            let significant = pairwise_p(pvalues, context, cutoff, policy, other)
                .and_then(|r| r.p_two_sided)
                .map(|p| p < STAR_THRESHOLD)
                .unwrap_or(false);
            if !significant {
                return false;
            }
        }
    }
    improved_on_any
}

fn render_table(
    rows: &[SummaryRow],
    pvalues: &[PvalueRow],
    contexts: &[String],
    policies: &[String],
    cutoffs: &[usize],
) -> String {
    let index = summary_index(rows);
    let mut out = String::new();
    for context in contexts {
        let _ = writeln!(out, "== {context} ==");
        let _ = write!(out, "{:<10}", "policy");
        for cutoff in cutoffs {
            let _ = write!(out, "{:>12}", format!("t={cutoff}"));
        }
        out.push('\n');
        for policy in policies {
            let _ = write!(out, "{policy:<10}");
            for &cutoff in cutoffs {
                let cell = match index.get(&(context.clone(), policy.clone(), cutoff)) {
                    Some(row) => {
                        let star = if earns_star(&index, pvalues, context, cutoff, policy, policies)
                        {
                            "*"
                        } else {
                            ""
                        };
                        format!("{:.3}{}", row.mean_acc, star)
                    }
                    None => String::from("-"),
                };
                let _ = write!(out, "{cell:>12}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "* improvement over every weaker policy in the column is significant at p < {STAR_THRESHOLD} (paired t-test)"
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(context: &str, policy: &str, cutoff: usize, mean: f64) -> SummaryRow {
        SummaryRow {
            context: context.into(),
            policy: policy.into(),
            cutoff,
            mean_acc: mean,
            std_acc: 0.0,
            n: 10,
            best_other: String::new(),
            p_vs_best_other: None,
        }
    }

    fn pval(context: &str, cutoff: usize, a: &str, b: &str, p: f64) -> PvalueRow {
        PvalueRow {
            context: context.into(),
            cutoff,
            policy_a: a.into(),
            policy_b: b.into(),
            p_two_sided: Some(p),
        }
    }

    #[test]
    fn star_requires_all_improvements_significant() {
        let rows = vec![
            row("simctx", "cfts", 100, 0.40),
            row("simctx", "ts", 100, 0.30),
            row("simctx", "zeror", 100, 0.20),
        ];
        let policies: Vec<String> = vec!["cfts".into(), "ts".into(), "zeror".into()];
        let index = summary_index(&rows);

        // Both improvements significant: star.
        let pvalues = vec![
            pval("simctx", 100, "cfts", "ts", 0.001),
            pval("simctx", 100, "cfts", "zeror", 0.0001),
            pval("simctx", 100, "ts", "zeror", 0.5),
        ];
        assert!(earns_star(&index, &pvalues, "simctx", 100, "cfts", &policies));
        // ts improves only on zeror, not significantly: no star.
        assert!(!earns_star(&index, &pvalues, "simctx", 100, "ts", &policies));
        // zeror improves on nobody: no star.
        assert!(!earns_star(&index, &pvalues, "simctx", 100, "zeror", &policies));

        // One insignificant improvement kills the star.
        let pvalues = vec![
            pval("simctx", 100, "cfts", "ts", 0.02),
            pval("simctx", 100, "cfts", "zeror", 0.0001),
        ];
        assert!(!earns_star(&index, &pvalues, "simctx", 100, "cfts", &policies));
    }

    #[test]
    fn table_renders_stars_and_all_cells() {
        let rows = vec![
            row("simctx", "cfts", 100, 0.403),
            row("simctx", "ts", 100, 0.340),
        ];
        let pvalues = vec![pval("simctx", 100, "cfts", "ts", 0.002)];
        let table = render_table(
            &rows,
            &pvalues,
            &["simctx".into()],
            &["cfts".into(), "ts".into()],
            &[100],
        );
        assert!(table.contains("0.403*"));
        assert!(table.contains("0.340"));
        assert!(!table.contains("0.340*"));
    }
}
