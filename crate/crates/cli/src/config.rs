//! Replay configuration resolution.
//!
//! Precedence per field: command-line flag, then the `BANDITLAB_OUT`
//! environment variable (output directory only), then the config file, then
//! the built-in default.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use banditlab_core::experiment::{ContextKind, ExperimentPlan, DEFAULT_PCA_COMPONENTS};
use banditlab_core::policies::PolicyKind;

use crate::{CliError, ReplayArgs};

/// Environment variable overriding the output directory.
pub const OUT_ENV_VAR: &str = "BANDITLAB_OUT";

/// Values accepted by a config file; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub sessions: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub context: Option<String>,
    pub policies: Option<Vec<String>>,
    pub replicas: Option<usize>,
    pub p_drop: Option<f64>,
    pub runs: Option<usize>,
    pub cutoffs: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub variance_scale: Option<f64>,
    pub pca_components: Option<usize>,
    pub threads: Option<usize>,
}

/// The fully-resolved replay configuration, echoed into the run manifest.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ResolvedConfig {
    pub sessions: PathBuf,
    pub features: PathBuf,
    pub out: PathBuf,
    pub contexts: Vec<String>,
    pub policies: Vec<String>,
    pub replicas: usize,
    pub p_drop: f64,
    pub runs: usize,
    pub cutoffs: Vec<usize>,
    pub seed: u64,
    pub variance_scale: f64,
    pub pca_components: usize,
    pub threads: Option<usize>,
}

impl ResolvedConfig {
    pub fn context_kinds(&self) -> Result<Vec<ContextKind>, CliError> {
        self.contexts
            .iter()
            .map(|s| ContextKind::from_str(s).map_err(CliError::Config))
            .collect()
    }

    pub fn policy_kinds(&self) -> Result<Vec<PolicyKind>, CliError> {
        self.policies
            .iter()
            .map(|s| PolicyKind::from_str(s).map_err(CliError::Config))
            .collect()
    }

    pub fn plan(&self) -> Result<ExperimentPlan, CliError> {
        Ok(ExperimentPlan {
            contexts: self.context_kinds()?,
            policies: self.policy_kinds()?,
            replicas: self.replicas,
            dropout: self.p_drop,
            runs: self.runs,
            cutoffs: self.cutoffs.clone(),
            master_seed: self.seed,
            variance_scale: self.variance_scale,
        })
    }
}

fn parse_contexts(raw: &str) -> Result<Vec<String>, CliError> {
    match raw.to_ascii_lowercase().as_str() {
        "both" => Ok(vec!["imgctx".into(), "simctx".into()]),
        other => {
            ContextKind::from_str(other).map_err(CliError::Config)?;
            Ok(vec![other.to_string()])
        }
    }
}

pub fn resolve(args: &ReplayArgs) -> Result<ResolvedConfig, CliError> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            toml::from_str(&text).map_err(|e| {
                CliError::Config(format!("invalid config {}: {e}", path.display()))
            })?
        }
        None => FileConfig::default(),
    };

    let sessions = args
        .sessions
        .clone()
        .or(file.sessions)
        .ok_or_else(|| CliError::Config("missing --sessions (or `sessions` in config)".into()))?;
    let features = args
        .features
        .clone()
        .or(file.features)
        .ok_or_else(|| CliError::Config("missing --features (or `features` in config)".into()))?;
    let seed = args
        .seed
        .or(file.seed)
        .ok_or_else(|| CliError::Config("missing --seed (or `seed` in config)".into()))?;

    let out = args
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV_VAR).map(PathBuf::from))
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("results"));

    let contexts = match (&args.context, &file.context) {
        (Some(raw), _) | (None, Some(raw)) => parse_contexts(raw)?,
        (None, None) => vec!["simctx".to_string()],
    };

    let policies = args
        .policies
        .clone()
        .or(file.policies)
        .unwrap_or_else(|| PolicyKind::ALL.iter().map(|p| p.name().to_string()).collect());

    let mut cutoffs = args
        .cutoffs
        .clone()
        .or(file.cutoffs)
        .unwrap_or_else(|| vec![1000, 2000, 3000]);
    cutoffs.sort_unstable();
    cutoffs.dedup();

    let p_drop = args.p_drop.or(file.p_drop).unwrap_or(0.2);
    let config = ResolvedConfig {
        sessions,
        features,
        out,
        contexts,
        policies,
        replicas: args.replicas.or(file.replicas).unwrap_or(6),
        p_drop,
        runs: args.runs.or(file.runs).unwrap_or(100),
        cutoffs,
        seed,
        variance_scale: args.variance_scale.or(file.variance_scale).unwrap_or(1.0),
        pca_components: args
            .pca_components
            .or(file.pca_components)
            .unwrap_or(DEFAULT_PCA_COMPONENTS),
        threads: args.threads.or(file.threads),
    };

    if !(0.0..1.0).contains(&config.p_drop) {
        return Err(CliError::Config(format!(
            "p_drop must lie in [0, 1), got {}",
            config.p_drop
        )));
    }
    config.context_kinds()?;
    config.policy_kinds()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn base_args() -> ReplayArgs {
        ReplayArgs {
            sessions: Some(PathBuf::from("s.jsonl")),
            features: Some(PathBuf::from("f.csv")),
            seed: Some(1),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_fill_every_unset_field() {
        let cfg = resolve(&base_args()).unwrap();
        assert_eq!(cfg.replicas, 6);
        assert_eq!(cfg.p_drop, 0.2);
        assert_eq!(cfg.runs, 100);
        assert_eq!(cfg.cutoffs, vec![1000, 2000, 3000]);
        assert_eq!(cfg.contexts, vec!["simctx"]);
        assert_eq!(cfg.policies.len(), 5);
        assert_eq!(cfg.variance_scale, 1.0);
        assert_eq!(cfg.pca_components, 64);
    }

    #[test]
    fn flags_override_config_file_per_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(
            f,
            "replicas = 2\nruns = 7\np_drop = 0.1\nseed = 9\ncontext = \"imgctx\"\npolicies = [\"obs\"]\ncutoffs = [10, 20]"
        )
        .unwrap();

        // File values apply when no flag is set.
        let mut args = base_args();
        args.seed = None;
        args.config = Some(path.clone());
        let cfg = resolve(&args).unwrap();
        assert_eq!(cfg.replicas, 2);
        assert_eq!(cfg.runs, 7);
        assert_eq!(cfg.p_drop, 0.1);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.contexts, vec!["imgctx"]);
        assert_eq!(cfg.policies, vec!["obs"]);
        assert_eq!(cfg.cutoffs, vec![10, 20]);

        // Each flag individually beats the file.
        let mut args = base_args();
        args.config = Some(path.clone());
        args.replicas = Some(4);
        args.runs = Some(3);
        args.p_drop = Some(0.3);
        args.seed = Some(77);
        args.context = Some("both".into());
        args.policies = Some(vec!["ts".into(), "cfts".into()]);
        args.cutoffs = Some(vec![50, 30]);
        let cfg = resolve(&args).unwrap();
        assert_eq!(cfg.replicas, 4);
        assert_eq!(cfg.runs, 3);
        assert_eq!(cfg.p_drop, 0.3);
        assert_eq!(cfg.seed, 77);
        assert_eq!(cfg.contexts, vec!["imgctx", "simctx"]);
        assert_eq!(cfg.policies, vec!["ts", "cfts"]);
        assert_eq!(cfg.cutoffs, vec![30, 50]);
    }

    #[test]
    fn seed_is_mandatory_without_config() {
        let mut args = base_args();
        args.seed = None;
        let err = resolve(&args).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn unknown_policy_or_context_is_a_config_error() {
        let mut args = base_args();
        args.policies = Some(vec!["nope".into()]);
        assert!(matches!(resolve(&args), Err(CliError::Config(_))));

        let mut args = base_args();
        args.context = Some("weird".into());
        assert!(matches!(resolve(&args), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "sedd = 1\n").unwrap();
        let mut args = base_args();
        args.config = Some(path);
        assert!(matches!(resolve(&args), Err(CliError::Config(_))));
    }
}
