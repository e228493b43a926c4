//! Synthetic confounded session generator.
//!
//! Realizes the causal structure behind the session logs: a latent class
//! (the true disease) and a binary confounder jointly drive both the quality
//! of the clicked evidence and the reliability of the user's own guess. The
//! confounder is retained only in a hidden trace for diagnostics; policies
//! see nothing but clicks and the intuition.
//!
//! Default rates are calibrated so the observational baseline lands at
//! `q * p1 + (1 - q) * p0 = 0.371` and the majority-class baseline at
//! `max(priors) = 0.221` in expectation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::contexts::{ImageFeatureTable, SessionRecord};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeneratorError {
    #[error("need at least two arms, got {0}")]
    BadArms(usize),

    #[error("class priors must have one entry per arm and sum to 1 (got sum {0})")]
    BadPriors(f64),

    #[error("{name} must lie in [0, 1], got {value}")]
    BadProbability { name: &'static str, value: f64 },

    #[error("feature dimension {dim} is smaller than the arm count {arms}")]
    FeatureDimTooSmall { dim: usize, arms: usize },

    #[error("clicks-per-session range {min}..={max} is invalid")]
    BadClickRange { min: usize, max: usize },

    #[error("images per disease must be at least 1")]
    NoImages,

    #[error("click mixture exceeds 1: base {base} + boost {boost} + belief pull")]
    ClickProbabilityOverflow { base: f64, boost: f64 },

    #[error("session count must be at least 1")]
    NoSessions,

    #[error("confusion group size {size} out of range 1..={arms}")]
    BadConfusionGroup { size: usize, arms: usize },

    #[error("{name} must be positive and finite, got {value}")]
    BadScale { name: &'static str, value: f64 },
}

/// Knobs of the synthetic environment. Everything is config-exposed; the
/// probability defaults anchor the two closed-form baselines, the rest are
/// calibration values.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    /// Number of candidate diseases (arms).
    pub arms: usize,
    /// Class prior over the true disease; must sum to 1.
    pub class_priors: Vec<f64>,
    /// Dimension of the per-image feature vectors.
    pub feature_dim: usize,
    /// Scale of the per-disease prototype vectors.
    pub prototype_scale: f64,
    /// Per-coordinate standard deviation of image feature noise (sigma_x).
    pub feature_noise: f64,
    /// P(U = 1): share of sessions with the confounder active.
    pub confounder_prior: f64,
    /// P(intuition = true label | U = 1).
    pub intuition_acc_confounded: f64,
    /// P(intuition = true label | U = 0).
    pub intuition_acc_unconfounded: f64,
    /// Pool size per disease.
    pub images_per_disease: usize,
    /// Clicks per session are uniform on `clicks_min..=clicks_max`.
    pub clicks_min: usize,
    pub clicks_max: usize,
    /// P(a click is directed at the true disease's pool) = base + boost * u:
    /// the pull of the actual symptoms, stronger for confounded sessions.
    pub click_base: f64,
    pub click_boost: f64,
    /// P(a click is directed at the pool of the user's latent belief): the
    /// user's working hypothesis contaminates the evidence they select. The
    /// belief is also what they report as their intuition.
    pub belief_pull: f64,
    /// Diseases are partitioned into visually confusable groups of this
    /// size (the last group takes the remainder); undirected clicks fall
    /// uniformly on the group. Size 1 disables the structure: undirected
    /// clicks then spread uniformly over all other pools.
    pub confusion_group: usize,
    /// Zipf exponent of within-pool image popularity: the j-th image of a
    /// pool is clicked with weight (j + 1)^-skew. Popularity is independent
    /// of the class, so it concentrates co-click statistics without adding
    /// class signal. 0 restores uniform in-pool clicks.
    pub popularity_skew: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            arms: 5,
            class_priors: vec![0.221, 0.200, 0.200, 0.190, 0.189],
            feature_dim: 64,
            prototype_scale: 1.0,
            feature_noise: 1.2,
            confounder_prior: 0.57,
            intuition_acc_confounded: 0.50,
            intuition_acc_unconfounded: 0.20,
            images_per_disease: 30,
            clicks_min: 3,
            clicks_max: 8,
            click_base: 0.05,
            click_boost: 0.20,
            belief_pull: 0.35,
            confusion_group: 3,
            popularity_skew: 1.0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.arms < 2 {
            return Err(GeneratorError::BadArms(self.arms));
        }
        let sum: f64 = self.class_priors.iter().sum();
        if self.class_priors.len() != self.arms
            || (sum - 1.0).abs() > 1e-12
            || self.class_priors.iter().any(|p| *p < 0.0)
        {
            return Err(GeneratorError::BadPriors(sum));
        }
        if self.confusion_group < 1 || self.confusion_group > self.arms {
            return Err(GeneratorError::BadConfusionGroup {
                size: self.confusion_group,
                arms: self.arms,
            });
        }
        for (name, value) in [
            ("confounder_prior", self.confounder_prior),
            ("intuition_acc_confounded", self.intuition_acc_confounded),
            ("intuition_acc_unconfounded", self.intuition_acc_unconfounded),
            ("click_base", self.click_base),
            ("click_boost", self.click_boost),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(GeneratorError::BadProbability { name, value });
            }
        }
        if !(0.0..=1.0).contains(&self.belief_pull) {
            return Err(GeneratorError::BadProbability {
                name: "belief_pull",
                value: self.belief_pull,
            });
        }
        if self.click_base + self.click_boost + self.belief_pull > 1.0 {
            return Err(GeneratorError::ClickProbabilityOverflow {
                base: self.click_base,
                boost: self.click_boost,
            });
        }
        if self.feature_dim < self.arms {
            return Err(GeneratorError::FeatureDimTooSmall {
                dim: self.feature_dim,
                arms: self.arms,
            });
        }
        if self.clicks_min < 1 || self.clicks_min > self.clicks_max {
            return Err(GeneratorError::BadClickRange {
                min: self.clicks_min,
                max: self.clicks_max,
            });
        }
        if self.images_per_disease < 1 {
            return Err(GeneratorError::NoImages);
        }
        for (name, value) in [
            ("prototype_scale", self.prototype_scale),
            ("feature_noise", self.feature_noise),
            ("popularity_skew", self.popularity_skew),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(GeneratorError::BadScale { name, value });
            }
        }
        Ok(())
    }

    /// Closed-form observational accuracy: `q * p1 + (1 - q) * p0`.
    pub fn expected_obs_accuracy(&self) -> f64 {
        self.confounder_prior * self.intuition_acc_confounded
            + (1.0 - self.confounder_prior) * self.intuition_acc_unconfounded
    }

    /// Closed-form majority-class accuracy: `max(priors)`.
    pub fn expected_zeror_accuracy(&self) -> f64 {
        self.class_priors.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_images(&self) -> usize {
        self.arms * self.images_per_disease
    }
}

/// Per-session hidden state, for diagnostics only; never exposed to policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HiddenState {
    pub confounded: bool,
    pub true_label: usize,
}

/// A generated corpus: sessions, image features, and the hidden trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub sessions: Vec<SessionRecord>,
    pub features: ImageFeatureTable,
    pub hidden: Vec<HiddenState>,
}

/// Generates `session_count` sessions.
///
/// Image pool: for each disease `a`, `images_per_disease` images with
/// features `prototype_scale * e_a + N(0, feature_noise^2)` per coordinate;
/// the prototypes are mutually orthogonal unit vectors. Per session: the true
/// label follows the class prior, the confounder is Bernoulli, and the
/// user's latent belief equals the true label with the confounder-dependent
/// accuracy (otherwise a confusable wrong arm). Each click is pulled by the
/// actual symptoms (probability `click_base + click_boost * u`, toward the
/// true pool), by the belief (probability `belief_pull`, toward its pool),
/// and otherwise falls uniformly on the confusable group; duplicates are
/// rejected. The reported intuition is the belief itself, so the evidence
/// the policies see is contaminated by exactly the channel the intuition
/// exposes.
///
/// The draw order (features, then per session: label, confounder, belief,
/// click count, clicks) is a stability contract: the same seed must
/// reproduce the same corpus in every release.
pub fn generate_corpus(
    params: &GeneratorParams,
    session_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticCorpus, GeneratorError> {
    params.validate()?;
    if session_count == 0 {
        return Err(GeneratorError::NoSessions);
    }

    let per = params.images_per_disease;
    let total_images = params.total_images();
    let id_width = digits(total_images.saturating_sub(1)).max(3);
    let session_width = digits(session_count.saturating_sub(1)).max(4);

    let mut features = ImageFeatureTable::new(params.feature_dim);
    for pool in 0..params.arms {
        for slot in 0..per {
            let mut row = vec![0.0; params.feature_dim];
            row[pool] = params.prototype_scale;
            for value in row.iter_mut() {
                let noise: f64 = rng.sample(StandardNormal);
                *value += params.feature_noise * noise;
            }
            let idx = pool * per + slot;
            features
                .insert(format!("img_{idx:0id_width$}"), row)
                .expect("generated rows match the declared dimension");
        }
    }

    // Cumulative within-pool popularity weights, shared by every pool.
    let mut popularity = Vec::with_capacity(per);
    let mut acc = 0.0;
    for j in 0..per {
        acc += ((j + 1) as f64).powf(-params.popularity_skew);
        popularity.push(acc);
    }

    let mut sessions = Vec::with_capacity(session_count);
    let mut hidden = Vec::with_capacity(session_count);
    for s in 0..session_count {
        let true_label = sample_class(&params.class_priors, rng);
        let confounded = rng.random::<f64>() < params.confounder_prior;

        // The user's working hypothesis: correct with the confounder-
        // dependent accuracy, otherwise a confusable (in-group) wrong arm.
        // It becomes the reported intuition and also pulls the clicks.
        let p_correct = if confounded {
            params.intuition_acc_confounded
        } else {
            params.intuition_acc_unconfounded
        };
        let belief = if rng.random::<f64>() < p_correct {
            true_label
        } else {
            wrong_belief(params, true_label, rng)
        };

        let p_true = params.click_base + params.click_boost * f64::from(u8::from(confounded));
        let p_belief = params.belief_pull;
        let want = rng
            .random_range(params.clicks_min..=params.clicks_max)
            .min(total_images);

        let mut picked: Vec<usize> = Vec::with_capacity(want);
        let mut attempts = 0usize;
        while picked.len() < want {
            attempts += 1;
            if attempts > 100_000 {
                // Degenerate parameterizations (tiny pools) can starve
                // rejection sampling; fill with the lowest unused indices.
                for idx in 0..total_images {
                    if picked.len() >= want {
                        break;
                    }
                    if !picked.contains(&idx) {
                        picked.push(idx);
                    }
                }
                break;
            }
            let direction: f64 = rng.random();
            let pool = if direction < p_true {
                true_label
            } else if direction < p_true + p_belief {
                belief
            } else {
                undirected_click_pool(params, true_label, rng)
            };
            let idx = pool * per + sample_slot(&popularity, rng);
            if !picked.contains(&idx) {
                picked.push(idx);
            }
        }
        let clicked_images: Vec<String> = picked
            .iter()
            .map(|idx| format!("img_{idx:0id_width$}"))
            .collect();

        sessions.push(SessionRecord {
            session_id: format!("s{s:0session_width$}"),
            clicked_images,
            intuition: belief,
            true_label,
        });
        hidden.push(HiddenState {
            confounded,
            true_label,
        });
    }

    Ok(SyntheticCorpus {
        sessions,
        features,
        hidden,
    })
}

/// The confusable group of a disease: a contiguous block of
/// `confusion_group` arms (the last block takes the remainder).
fn confusion_group_of(params: &GeneratorParams, arm: usize) -> std::ops::Range<usize> {
    let gs = params.confusion_group;
    let start = (arm / gs) * gs;
    start..(start + gs).min(params.arms)
}

/// Picks the pool of an undirected click: uniform over the true disease's
/// confusable group (own pool included), or over all other pools when the
/// group has no other member.
fn undirected_click_pool(params: &GeneratorParams, true_label: usize, rng: &mut ChaCha8Rng) -> usize {
    let group = confusion_group_of(params, true_label);
    if group.len() > 1 {
        group.start + rng.random_range(0..group.len())
    } else {
        let j = rng.random_range(0..params.arms - 1);
        if j >= true_label {
            j + 1
        } else {
            j
        }
    }
}

/// A mistaken belief lands on a confusable wrong arm: uniform over the other
/// members of the true disease's group, or over all wrong arms when the
/// group has no other member. The correct branch fires with probability
/// exactly `p_u`, so the observational anchor stays closed-form.
fn wrong_belief(params: &GeneratorParams, true_label: usize, rng: &mut ChaCha8Rng) -> usize {
    let group = confusion_group_of(params, true_label);
    if group.len() > 1 {
        let j = rng.random_range(0..group.len() - 1);
        let candidate = group.start + j;
        if candidate >= true_label {
            candidate + 1
        } else {
            candidate
        }
    } else {
        let j = rng.random_range(0..params.arms - 1);
        if j >= true_label {
            j + 1
        } else {
            j
        }
    }
}

/// Samples an in-pool slot from the cumulative popularity weights.
fn sample_slot(cumulative: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cumulative.last().expect("pools are nonempty");
    let u: f64 = rng.random::<f64>() * total;
    cumulative
        .partition_point(|&c| c <= u)
        .min(cumulative.len() - 1)
}

fn sample_class(priors: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in priors.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    priors.len() - 1
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

/// Generator-validation statistics computed against the hidden trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDiagnostics {
    /// Fraction of sessions whose intuition matches the true label.
    pub observational_accuracy: f64,
    /// Empirical class frequencies, one per arm.
    pub class_frequencies: Vec<f64>,
    pub mean_clicks_per_session: f64,
    /// Intuition accuracy among unconfounded sessions (u = 0), if any.
    pub accuracy_unconfounded: Option<f64>,
    /// Intuition accuracy among confounded sessions (u = 1), if any.
    pub accuracy_confounded: Option<f64>,
}

pub fn corpus_diagnostics(corpus: &SyntheticCorpus, arms: usize) -> CorpusDiagnostics {
    let n = corpus.sessions.len();
    let mut matches = 0usize;
    let mut clicks = 0usize;
    let mut class_counts = vec![0usize; arms];
    let mut by_u = [(0usize, 0usize); 2]; // (sessions, matches) per u
    for (session, hidden) in corpus.sessions.iter().zip(&corpus.hidden) {
        let hit = session.intuition == session.true_label;
        matches += usize::from(hit);
        clicks += session.clicked_images.len();
        class_counts[session.true_label] += 1;
        let slot = &mut by_u[usize::from(hidden.confounded)];
        slot.0 += 1;
        slot.1 += usize::from(hit);
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    CorpusDiagnostics {
        observational_accuracy: matches as f64 / n as f64,
        class_frequencies: class_counts
            .iter()
            .map(|&c| c as f64 / n as f64)
            .collect(),
        mean_clicks_per_session: clicks as f64 / n as f64,
        accuracy_unconfounded: ratio(by_u[0].1, by_u[0].0),
        accuracy_confounded: ratio(by_u[1].1, by_u[1].0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn default_parameters_validate_and_anchor_the_baselines() {
        let p = GeneratorParams::default();
        p.validate().unwrap();
        assert!((p.expected_obs_accuracy() - 0.371).abs() < 1e-12);
        assert!((p.expected_zeror_accuracy() - 0.221).abs() < 1e-12);
    }

    #[test]
    fn corpus_shape_matches_parameters() {
        let params = GeneratorParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let corpus = generate_corpus(&params, 100, &mut rng).unwrap();
        assert_eq!(corpus.sessions.len(), 100);
        assert_eq!(corpus.hidden.len(), 100);
        assert_eq!(corpus.features.len(), 150);
        assert_eq!(corpus.features.feature_dim(), 64);
        for s in &corpus.sessions {
            s.validate(params.arms).unwrap();
            assert!((3..=8).contains(&s.clicked_images.len()));
            for img in &s.clicked_images {
                assert!(corpus.features.get(img).is_some(), "unknown image {img}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic_under_a_fixed_seed() {
        let params = GeneratorParams::default();
        let mut rng_a = ChaCha8Rng::seed_from_u64(5);
        let mut rng_b = ChaCha8Rng::seed_from_u64(5);
        let a = generate_corpus(&params, 50, &mut rng_a).unwrap();
        let b = generate_corpus(&params, 50, &mut rng_b).unwrap();
        assert_eq!(a, b);
        let mut rng_c = ChaCha8Rng::seed_from_u64(6);
        let c = generate_corpus(&params, 50, &mut rng_c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_sessions_is_an_error() {
        let params = GeneratorParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            generate_corpus(&params, 0, &mut rng),
            Err(GeneratorError::NoSessions)
        ));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut p = GeneratorParams::default();
        p.class_priors = vec![0.5, 0.5];
        assert!(matches!(p.validate(), Err(GeneratorError::BadPriors(_))));

        let mut p = GeneratorParams::default();
        p.confounder_prior = 1.5;
        assert!(matches!(
            p.validate(),
            Err(GeneratorError::BadProbability { .. })
        ));

        let mut p = GeneratorParams::default();
        p.feature_dim = 3;
        assert!(matches!(
            p.validate(),
            Err(GeneratorError::FeatureDimTooSmall { .. })
        ));

        let mut p = GeneratorParams::default();
        p.click_base = 0.9;
        p.click_boost = 0.2;
        assert!(matches!(
            p.validate(),
            Err(GeneratorError::ClickProbabilityOverflow { .. })
        ));
    }

    #[test]
    fn session_records_carry_no_hidden_fields() {
        // Type-level separation: the serialized record exposes exactly the
        // four public fields and nothing about the confounder.
        let params = GeneratorParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let corpus = generate_corpus(&params, 1, &mut rng).unwrap();
        let json = serde_json::to_value(&corpus.sessions[0]).unwrap();
        let mut keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec!["clicked_images", "intuition", "session_id", "true_label"]
        );
    }

    #[test]
    fn diagnostics_track_the_analytic_anchors_on_a_large_corpus() {
        let params = GeneratorParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let corpus = generate_corpus(&params, 100_000, &mut rng).unwrap();
        let diag = corpus_diagnostics(&corpus, params.arms);
        assert!(
            (diag.observational_accuracy - 0.371).abs() < 0.01,
            "obs accuracy {}",
            diag.observational_accuracy
        );
        for (freq, prior) in diag.class_frequencies.iter().zip(&params.class_priors) {
            assert!((freq - prior).abs() < 0.01, "freq {freq} vs prior {prior}");
        }
        assert!(
            (diag.accuracy_unconfounded.unwrap() - 0.20).abs() < 0.01,
            "p0 {:?}",
            diag.accuracy_unconfounded
        );
        assert!(
            (diag.accuracy_confounded.unwrap() - 0.50).abs() < 0.01,
            "p1 {:?}",
            diag.accuracy_confounded
        );
        let expected_clicks = (3.0 + 8.0) / 2.0;
        assert!((diag.mean_clicks_per_session - expected_clicks).abs() < 0.05);
    }
}
