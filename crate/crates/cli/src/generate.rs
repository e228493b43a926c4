//! `banditlab generate`: write a synthetic corpus to disk.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use banditlab_core::io::{write_features_csv, write_sessions_jsonl};
use banditlab_core::seed;
use banditlab_core::synthenv::{generate_corpus, GeneratorParams};

use crate::outputs::{write_manifest, MANIFEST_FILE};
use crate::{CliError, GenerateArgs};

pub fn params_from_args(args: &GenerateArgs) -> GeneratorParams {
    let defaults = GeneratorParams::default();
    GeneratorParams {
        arms: args.arms,
        class_priors: args.priors.clone().unwrap_or_else(|| {
            if args.arms == defaults.arms {
                defaults.class_priors.clone()
            } else {
                // Uniform prior when the arm count changes and none is given.
                vec![1.0 / args.arms as f64; args.arms]
            }
        }),
        feature_dim: args.feature_dim,
        prototype_scale: args.prototype_scale,
        feature_noise: args.feature_noise,
        confounder_prior: args.confounder_prior,
        intuition_acc_confounded: args.p1,
        intuition_acc_unconfounded: args.p0,
        images_per_disease: args.images_per_disease,
        clicks_min: args.clicks_min,
        clicks_max: args.clicks_max,
        click_base: args.click_base,
        click_boost: args.click_boost,
        belief_pull: args.belief_pull,
        confusion_group: args.confusion_group,
        popularity_skew: args.popularity_skew,
    }
}

pub fn run(args: &GenerateArgs) -> Result<(), CliError> {
    if args.sessions == 0 {
        return Err(CliError::Config("session count must be at least 1".into()));
    }
    let params = params_from_args(args);
    params.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed::stream_seed(args.seed, "generate"));
    let corpus = generate_corpus(&params, args.sessions, &mut rng)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out.display())))?;
    write_sessions_jsonl(&args.out.join("sessions.jsonl"), &corpus.sessions)?;
    write_features_csv(&args.out.join("features.csv"), &corpus.features)?;

    let manifest = json!({
        "format_version": 1,
        "tool": "banditlab",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": "generate",
        "seed": args.seed,
        "sessions": args.sessions,
        "arm_names": (0..params.arms).map(|a| format!("arm_{a}")).collect::<Vec<_>>(),
        "params": {
            "arms": params.arms,
            "class_priors": params.class_priors,
            "feature_dim": params.feature_dim,
            "prototype_scale": params.prototype_scale,
            "feature_noise": params.feature_noise,
            "confounder_prior": params.confounder_prior,
            "intuition_acc_confounded": params.intuition_acc_confounded,
            "intuition_acc_unconfounded": params.intuition_acc_unconfounded,
            "images_per_disease": params.images_per_disease,
            "clicks_min": params.clicks_min,
            "clicks_max": params.clicks_max,
            "click_base": params.click_base,
            "click_boost": params.click_boost,
            "belief_pull": params.belief_pull,
            "confusion_group": params.confusion_group,
            "popularity_skew": params.popularity_skew,
        },
        "expected_obs_accuracy": params.expected_obs_accuracy(),
        "expected_zeror_accuracy": params.expected_zeror_accuracy(),
    });
    write_manifest(&args.out.join(MANIFEST_FILE), &manifest)?;

    println!(
        "wrote {} sessions and {} image rows to {}",
        corpus.sessions.len(),
        corpus.features.len(),
        args.out.display()
    );
    Ok(())
}
