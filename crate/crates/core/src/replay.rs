//! Offline evaluation: dataset augmentation by replication-with-dropout, the
//! bandit replay loop, and accuracy aggregation across runs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::contexts::{ContextError, SessionRecord};
use crate::numerics::{paired_t_test, NumericsError, TTestResult};
use crate::policies::{PolicyError, PolicyInstance, PolicyKind};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replica count must be at least 1")]
    BadReplicaCount,

    #[error("dropout probability must lie in [0, 1), got {0}")]
    BadDropout(f64),

    #[error("not enough events: have {have}, need {need}")]
    InsufficientEvents { have: usize, need: usize },

    #[error("cutoff {cutoff} out of range for trajectory of length {len}")]
    CutoffOutOfRange { cutoff: usize, len: usize },

    #[error("policies have unequal run counts: {0:?}")]
    UnequalRunCounts(Vec<(PolicyKind, usize)>),

    #[error("no trajectories to aggregate")]
    NoRuns,

    #[error(transparent)]
    Context(#[from] ContextError),

    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// An augmented event before its context vector is computed: the surviving
/// clicks of one session replica.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedEvent {
    pub source_session_id: String,
    pub surviving_images: Vec<String>,
    pub intuition: usize,
    pub true_label: usize,
}

/// A fully materialized replay event.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayEvent {
    pub source_session_id: String,
    pub surviving_images: Vec<String>,
    pub context: Vec<f64>,
    pub intuition: usize,
    pub true_label: usize,
}

/// Emits `replicas` dropout replicas per session, in session order, without
/// shuffling.
///
/// Every clicked image is independently discarded with probability `p_drop`;
/// if a replica loses all its images, one image is retained uniformly at
/// random so every event stays usable.
pub fn replicate_with_dropout(
    sessions: &[SessionRecord],
    replicas: usize,
    p_drop: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AugmentedEvent>, ReplayError> {
    if replicas < 1 {
        return Err(ReplayError::BadReplicaCount);
    }
    if !(0.0..1.0).contains(&p_drop) {
        return Err(ReplayError::BadDropout(p_drop));
    }
    let mut events = Vec::with_capacity(sessions.len() * replicas);
    for session in sessions {
        for _ in 0..replicas {
            let mut surviving: Vec<String> = session
                .clicked_images
                .iter()
                .filter(|_| rng.random::<f64>() >= p_drop)
                .cloned()
                .collect();
            if surviving.is_empty() {
                let keep = rng.random_range(0..session.clicked_images.len());
                surviving.push(session.clicked_images[keep].clone());
            }
            events.push(AugmentedEvent {
                source_session_id: session.session_id.clone(),
                surviving_images: surviving,
                intuition: session.intuition,
                true_label: session.true_label,
            });
        }
    }
    Ok(events)
}

/// Replication-with-dropout followed by a Fisher-Yates shuffle of the whole
/// event list. Output length is exactly `replicas * sessions.len()`.
pub fn augment_dataset(
    sessions: &[SessionRecord],
    replicas: usize,
    p_drop: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AugmentedEvent>, ReplayError> {
    let mut events = replicate_with_dropout(sessions, replicas, p_drop, rng)?;
    events.shuffle(rng);
    Ok(events)
}

/// Attaches context vectors to augmented events via the supplied builder.
pub fn attach_contexts<F>(
    events: Vec<AugmentedEvent>,
    mut build: F,
) -> Result<Vec<ReplayEvent>, ReplayError>
where
    F: FnMut(&AugmentedEvent) -> Result<Vec<f64>, ContextError>,
{
    events
        .into_iter()
        .map(|e| {
            let context = build(&e)?;
            Ok(ReplayEvent {
                source_session_id: e.source_session_id,
                surviving_images: e.surviving_images,
                context,
                intuition: e.intuition,
                true_label: e.true_label,
            })
        })
        .collect()
}

/// One replay round: 1-based round index, the played arm, and the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: usize,
    pub arm: usize,
    pub reward: u8,
}

/// Per-policy outcome of one replay pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub policy: PolicyKind,
    pub rounds: Vec<RoundRecord>,
    /// Prefix sums of the rewards; nondecreasing by construction.
    pub cumulative: Vec<u32>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn final_reward(&self) -> u32 {
        self.cumulative.last().copied().unwrap_or(0)
    }
}

/// Replays `horizon` events through a policy: select, score against the true
/// label (reward 1 on a match), update, record.
pub fn replay_run(
    events: &[ReplayEvent],
    policy: &mut PolicyInstance,
    horizon: usize,
) -> Result<Trajectory, ReplayError> {
    if events.len() < horizon {
        return Err(ReplayError::InsufficientEvents {
            have: events.len(),
            need: horizon,
        });
    }
    let mut rounds = Vec::with_capacity(horizon);
    let mut cumulative = Vec::with_capacity(horizon);
    let mut total = 0u32;
    for (idx, event) in events.iter().take(horizon).enumerate() {
        let decision = policy.select_arm(&event.context, event.intuition)?;
        let reward = u8::from(decision.arm == event.true_label);
        policy.update(&event.context, event.intuition, decision.arm, reward)?;
        total += u32::from(reward);
        rounds.push(RoundRecord {
            round: idx + 1,
            arm: decision.arm,
            reward,
        });
        cumulative.push(total);
    }
    Ok(Trajectory {
        policy: policy.kind(),
        rounds,
        cumulative,
    })
}

/// Mean reward over the first `t` rounds: cumulative reward at `t` over `t`.
pub fn accuracy_at(trajectory: &Trajectory, t: usize) -> Result<f64, ReplayError> {
    if t == 0 || t > trajectory.cumulative.len() {
        return Err(ReplayError::CutoffOutOfRange {
            cutoff: t,
            len: trajectory.cumulative.len(),
        });
    }
    Ok(f64::from(trajectory.cumulative[t - 1]) / t as f64)
}

/// Mean cumulative-reward curve over a set of aligned trajectories.
pub fn mean_cumulative(trajectories: &[Trajectory]) -> Vec<f64> {
    if trajectories.is_empty() {
        return Vec::new();
    }
    let len = trajectories.iter().map(|t| t.len()).min().unwrap_or(0);
    let n = trajectories.len() as f64;
    (0..len)
        .map(|i| {
            trajectories
                .iter()
                .map(|t| f64::from(t.cumulative[i]))
                .sum::<f64>()
                / n
        })
        .collect()
}

/// Accuracy statistics for one (policy, cutoff) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub mean_acc: f64,
    /// Sample standard deviation across runs (0.0 when only one run exists).
    pub std_acc: f64,
    pub runs: usize,
}

/// A pairwise paired t-test between two policies' per-run accuracies; `None`
/// when too few runs exist to test.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseComparison {
    pub policy_a: PolicyKind,
    pub policy_b: PolicyKind,
    pub test: Option<TTestResult>,
}

/// Cross-run aggregation: per-policy accuracy statistics at each cutoff plus
/// all pairwise significance tests.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub policies: Vec<PolicyKind>,
    pub cutoffs: Vec<usize>,
    cells: BTreeMap<(PolicyKind, usize), CellStats>,
    per_run: BTreeMap<(PolicyKind, usize), Vec<f64>>,
    pairwise: BTreeMap<usize, Vec<PairwiseComparison>>,
}

impl RunSummary {
    pub fn cell(&self, policy: PolicyKind, cutoff: usize) -> Option<&CellStats> {
        self.cells.get(&(policy, cutoff))
    }

    /// Per-run accuracies backing a cell, aligned by run index.
    pub fn per_run_accuracy(&self, policy: PolicyKind, cutoff: usize) -> Option<&[f64]> {
        self.per_run.get(&(policy, cutoff)).map(Vec::as_slice)
    }

    pub fn pairwise(&self, cutoff: usize) -> &[PairwiseComparison] {
        self.pairwise.get(&cutoff).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn pairwise_test(
        &self,
        cutoff: usize,
        a: PolicyKind,
        b: PolicyKind,
    ) -> Option<&PairwiseComparison> {
        self.pairwise(cutoff)
            .iter()
            .find(|c| (c.policy_a, c.policy_b) == (a, b) || (c.policy_a, c.policy_b) == (b, a))
    }
}

/// Aggregates aligned runs (run index `i` of every policy shares the same
/// augmented dataset) into per-cutoff statistics and pairwise tests.
pub fn aggregate_runs(
    runs: &BTreeMap<PolicyKind, Vec<Trajectory>>,
    cutoffs: &[usize],
) -> Result<RunSummary, ReplayError> {
    if runs.is_empty() || runs.values().next().map(Vec::len) == Some(0) {
        return Err(ReplayError::NoRuns);
    }
    let n = runs.values().next().map(Vec::len).unwrap_or(0);
    if runs.values().any(|v| v.len() != n) {
        return Err(ReplayError::UnequalRunCounts(
            runs.iter().map(|(k, v)| (*k, v.len())).collect(),
        ));
    }

    let policies: Vec<PolicyKind> = runs.keys().copied().collect();
    let mut cells = BTreeMap::new();
    let mut per_run = BTreeMap::new();
    for (&policy, trajectories) in runs {
        for &cutoff in cutoffs {
            let accs: Vec<f64> = trajectories
                .iter()
                .map(|t| accuracy_at(t, cutoff))
                .collect::<Result<_, _>>()?;
            let mean = accs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n as f64 - 1.0))
                    .sqrt()
            } else {
                0.0
            };
            cells.insert(
                (policy, cutoff),
                CellStats {
                    mean_acc: mean,
                    std_acc: std,
                    runs: n,
                },
            );
            per_run.insert((policy, cutoff), accs);
        }
    }

    let mut pairwise = BTreeMap::new();
    for &cutoff in cutoffs {
        let mut comparisons = Vec::new();
        for (i, &a) in policies.iter().enumerate() {
            for &b in &policies[i + 1..] {
                let accs_a = &per_run[&(a, cutoff)];
                let accs_b = &per_run[&(b, cutoff)];
                let test = match paired_t_test(accs_a, accs_b) {
                    Ok(t) => Some(t),
                    Err(NumericsError::TooFewSamples(_)) => None,
                    Err(e) => return Err(e.into()),
                };
                comparisons.push(PairwiseComparison {
                    policy_a: a,
                    policy_b: b,
                    test,
                });
            }
        }
        pairwise.insert(cutoff, comparisons);
    }

    Ok(RunSummary {
        policies,
        cutoffs: cutoffs.to_vec(),
        cells,
        per_run,
        pairwise,
    })
}
