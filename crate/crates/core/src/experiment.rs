//! End-to-end experiment orchestration: fit the representation once on the
//! original sessions, then run `n` independent replications of
//! augment -> build contexts -> replay every policy, and aggregate.
//!
//! Replications are embarrassingly parallel: each run derives its own seeds
//! from `(master_seed, run_index)` and runs sequentially inside; aggregation
//! happens afterwards in run-index order, so results do not depend on the
//! worker pool.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::contexts::{
    co_click_matrix, similarity_vectors, ContextError, ImageFeatureTable, SessionRecord,
    SimilarityTable,
};
use crate::numerics::{pca_fit, pca_project, NumericsError, PcaModel};
use crate::policies::{PolicyError, PolicyInstance, PolicyKind};
use crate::replay::{
    aggregate_runs, augment_dataset, replay_run, ReplayError, ReplayEvent, RunSummary, Trajectory,
};
use crate::seed;

/// Default cap on the PCA dimension of both context types.
pub const DEFAULT_PCA_COMPONENTS: usize = 64;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid plan: {0}")]
    BadPlan(String),

    #[error("need at least two images to fit the context models, got {0}")]
    TooFewImages(usize),

    #[error("no sessions provided")]
    NoSessions,

    #[error(transparent)]
    Context(#[from] ContextError),

    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error(transparent)]
    Replay(#[from] ReplayError),
}

/// Which per-session context representation to feed the policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContextKind {
    /// Summed PCA projections of the clicked images' feature vectors.
    Img,
    /// Summed PCA projections of the clicked images' co-click similarity rows.
    Sim,
}

impl ContextKind {
    pub const ALL: [ContextKind; 2] = [ContextKind::Img, ContextKind::Sim];

    pub fn name(self) -> &'static str {
        match self {
            ContextKind::Img => "imgctx",
            ContextKind::Sim => "simctx",
        }
    }
}

impl fmt::Display for ContextKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContextKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "imgctx" | "img" => Ok(ContextKind::Img),
            "simctx" | "sim" => Ok(ContextKind::Sim),
            other => Err(format!("unknown context type: {other}")),
        }
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub contexts: Vec<ContextKind>,
    pub policies: Vec<PolicyKind>,
    /// Replicas per session in the augmentation step (`r`).
    pub replicas: usize,
    /// Per-image dropout probability (`d`).
    pub dropout: f64,
    /// Number of independent replications (`n`).
    pub runs: usize,
    /// Accuracy cutoffs; the replay horizon is the largest one.
    pub cutoffs: Vec<usize>,
    pub master_seed: u64,
    /// Sampling covariance multiplier for the Thompson policies.
    pub variance_scale: f64,
}

impl ExperimentPlan {
    /// The defaults of the study protocol: all policies on SimCtx, r = 6,
    /// d = 0.2, n = 100, cutoffs 1000/2000/3000.
    pub fn new(master_seed: u64) -> Self {
        ExperimentPlan {
            contexts: vec![ContextKind::Sim],
            policies: PolicyKind::ALL.to_vec(),
            replicas: 6,
            dropout: 0.2,
            runs: 100,
            cutoffs: vec![1000, 2000, 3000],
            master_seed,
            variance_scale: 1.0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.cutoffs.iter().copied().max().unwrap_or(0)
    }

    fn validate(&self, session_count: usize) -> Result<(), ExperimentError> {
        if self.contexts.is_empty() {
            return Err(ExperimentError::BadPlan("no context types selected".into()));
        }
        if self.policies.is_empty() {
            return Err(ExperimentError::BadPlan("no policies selected".into()));
        }
        if self.replicas < 1 {
            return Err(ExperimentError::BadPlan("replicas must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ExperimentError::BadPlan(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.runs < 1 {
            return Err(ExperimentError::BadPlan("runs must be at least 1".into()));
        }
        if self.cutoffs.is_empty() || self.cutoffs.iter().any(|&c| c == 0) {
            return Err(ExperimentError::BadPlan(
                "cutoffs must be nonempty and positive".into(),
            ));
        }
        let available = self.replicas * session_count;
        if self.horizon() > available {
            return Err(ExperimentError::BadPlan(format!(
                "largest cutoff {} exceeds {} available events ({} sessions x {} replicas)",
                self.horizon(),
                available,
                session_count,
                self.replicas
            )));
        }
        if !(self.variance_scale > 0.0 && self.variance_scale.is_finite()) {
            return Err(ExperimentError::BadPlan(
                "variance scale must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// Representation models fitted once on the original (pre-augmentation)
/// sessions and image table: the co-click statistics, both PCA bases, and a
/// per-image projection cache.
pub struct PreparedData {
    sessions: Vec<SessionRecord>,
    arms: usize,
    majority_label: usize,
    img_pca: PcaModel,
    sim_pca: PcaModel,
    similarity: SimilarityTable,
    img_projections: HashMap<String, Vec<f64>>,
    sim_projections: HashMap<String, Vec<f64>>,
}

impl PreparedData {
    /// Fits co-click statistics and both PCA models. `pca_components` is a
    /// cap: each context uses `min(pca_components, input_dim)` dimensions.
    pub fn prepare(
        sessions: Vec<SessionRecord>,
        features: &ImageFeatureTable,
        arms: usize,
        pca_components: usize,
    ) -> Result<Self, ExperimentError> {
        if sessions.is_empty() {
            return Err(ExperimentError::NoSessions);
        }
        if features.len() < 2 {
            return Err(ExperimentError::TooFewImages(features.len()));
        }
        if pca_components == 0 {
            return Err(ExperimentError::BadPlan("PCA cap must be positive".into()));
        }
        for session in &sessions {
            session.validate(arms)?;
            for img in &session.clicked_images {
                if features.get(img).is_none() {
                    return Err(ContextError::UnknownImage(img.clone()).into());
                }
            }
        }

        let majority_label = majority_label(&sessions, arms);

        let img_rows = features.feature_rows();
        let img_k = pca_components.min(features.feature_dim());
        let img_pca = pca_fit(&img_rows, img_k)?;

        let co_clicks = co_click_matrix(&sessions);
        let similarity = similarity_vectors(&co_clicks);
        let sim_k = pca_components.min(similarity.input_dim());
        let sim_pca = pca_fit(similarity.rows(), sim_k)?;

        // Project every image once; contexts are sums of these vectors, so
        // the cache changes nothing numerically and removes the dominant
        // per-event cost.
        let mut img_projections = HashMap::new();
        for (id, row) in features.iter() {
            img_projections.insert(id.to_string(), pca_project(&img_pca, row)?);
        }
        let mut sim_projections = HashMap::new();
        for (id, row) in similarity.ids().iter().zip(similarity.rows()) {
            sim_projections.insert(id.clone(), pca_project(&sim_pca, row)?);
        }

        Ok(PreparedData {
            sessions,
            arms,
            majority_label,
            img_pca,
            sim_pca,
            similarity,
            img_projections,
            sim_projections,
        })
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    /// Most frequent true label over the dataset (smallest index on ties).
    /// Replication copies every label `r` times, so the majority of the
    /// augmented dataset equals the majority of the sessions.
    pub fn majority_label(&self) -> usize {
        self.majority_label
    }

    pub fn similarity(&self) -> &SimilarityTable {
        &self.similarity
    }

    pub fn img_pca(&self) -> &PcaModel {
        &self.img_pca
    }

    pub fn sim_pca(&self) -> &PcaModel {
        &self.sim_pca
    }

    pub fn context_dim(&self, kind: ContextKind) -> usize {
        match kind {
            ContextKind::Img => self.img_pca.k(),
            ContextKind::Sim => self.sim_pca.k(),
        }
    }

    /// Context of an image set: the sum of the cached projections, visited
    /// in sorted id order (the builder contract).
    fn context_for(&self, kind: ContextKind, images: &[String]) -> Result<Vec<f64>, ContextError> {
        let cache = match kind {
            ContextKind::Img => &self.img_projections,
            ContextKind::Sim => &self.sim_projections,
        };
        let mut order: Vec<&String> = images.iter().collect();
        order.sort();
        let mut acc = vec![0.0; self.context_dim(kind)];
        for id in order {
            let projected = cache
                .get(id.as_str())
                .ok_or_else(|| ContextError::UnknownImage(id.clone()))?;
            for (a, p) in acc.iter_mut().zip(projected) {
                *a += p;
            }
        }
        Ok(acc)
    }
}

/// Returns the most frequent true label, breaking ties toward the smaller
/// arm index.
pub fn majority_label(sessions: &[SessionRecord], arms: usize) -> usize {
    let mut counts = vec![0usize; arms];
    for s in sessions {
        counts[s.true_label] += 1;
    }
    counts
        .iter()
        .enumerate()
        .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Smallest arm count consistent with the labels in the data (at least 2).
pub fn infer_arms(sessions: &[SessionRecord]) -> usize {
    sessions
        .iter()
        .map(|s| s.intuition.max(s.true_label) + 1)
        .max()
        .unwrap_or(0)
        .max(2)
}

/// All trajectories of one context type plus their aggregation.
pub struct ContextOutcome {
    /// Trajectories per policy, aligned by run index.
    pub by_policy: BTreeMap<PolicyKind, Vec<Trajectory>>,
    pub summary: RunSummary,
}

pub struct ExperimentResult {
    pub per_context: BTreeMap<ContextKind, ContextOutcome>,
    pub plan: ExperimentPlan,
}

/// Runs the full experiment. Within a run every policy replays the identical
/// event sequence; only the policy-internal RNG streams differ. Runs execute
/// in parallel and are aggregated in run-index order.
pub fn run_experiment(
    data: &PreparedData,
    plan: &ExperimentPlan,
) -> Result<ExperimentResult, ExperimentError> {
    plan.validate(data.sessions.len())?;

    let mut contexts: Vec<ContextKind> = plan.contexts.clone();
    contexts.sort();
    contexts.dedup();
    let mut policies: Vec<PolicyKind> = plan.policies.clone();
    policies.sort();
    policies.dedup();
    let horizon = plan.horizon();

    type RunOutput = BTreeMap<ContextKind, Vec<(PolicyKind, Trajectory)>>;
    let run_results: Vec<Result<RunOutput, ExperimentError>> = (0..plan.runs)
        .into_par_iter()
        .map(|run_index| {
            let run_seed = seed::run_seed(plan.master_seed, run_index);
            let mut aug_rng =
                ChaCha8Rng::seed_from_u64(seed::stream_seed(run_seed, "augment"));
            let skeletons =
                augment_dataset(&data.sessions, plan.replicas, plan.dropout, &mut aug_rng)?;

            let mut out: RunOutput = BTreeMap::new();
            for &ctx in &contexts {
                let events: Vec<ReplayEvent> = skeletons
                    .iter()
                    .map(|e| {
                        Ok(ReplayEvent {
                            source_session_id: e.source_session_id.clone(),
                            surviving_images: e.surviving_images.clone(),
                            context: data.context_for(ctx, &e.surviving_images)?,
                            intuition: e.intuition,
                            true_label: e.true_label,
                        })
                    })
                    .collect::<Result<_, ContextError>>()?;

                let mut per_policy = Vec::with_capacity(policies.len());
                for &policy in &policies {
                    let policy_seed = seed::stream_seed(run_seed, policy.name());
                    let majority = (policy == PolicyKind::ZeroR).then_some(data.majority_label);
                    let mut instance = PolicyInstance::new(
                        policy,
                        data.arms,
                        data.context_dim(ctx),
                        majority,
                        policy_seed,
                    )?
                    .with_variance_scale(plan.variance_scale);
                    per_policy.push((policy, replay_run(&events, &mut instance, horizon)?));
                }
                out.insert(ctx, per_policy);
            }
            Ok(out)
        })
        .collect();

    let mut collected: BTreeMap<ContextKind, BTreeMap<PolicyKind, Vec<Trajectory>>> = contexts
        .iter()
        .map(|&ctx| {
            let by_policy = policies
                .iter()
                .map(|&p| (p, Vec::with_capacity(plan.runs)))
                .collect();
            (ctx, by_policy)
        })
        .collect();

    // Fold trajectories back in run-index order.
    for result in run_results {
        let run_output = result?;
        for (ctx, per_policy) in run_output {
            let by_policy = collected.get_mut(&ctx).expect("context preallocated");
            for (policy, trajectory) in per_policy {
                by_policy
                    .get_mut(&policy)
                    .expect("policy preallocated")
                    .push(trajectory);
            }
        }
    }

    let mut per_context = BTreeMap::new();
    for (ctx, by_policy) in collected {
        let summary = aggregate_runs(&by_policy, &plan.cutoffs)?;
        per_context.insert(ctx, ContextOutcome { by_policy, summary });
    }

    Ok(ExperimentResult {
        per_context,
        plan: plan.clone(),
    })
}
