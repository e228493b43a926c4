//! Context pipelines: session records, image feature tables, co-click
//! statistics, similarity rows, and the two per-session context builders
//! (summed image-feature projections and summed similarity projections).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{pca_project, NumericsError, PcaModel};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ContextError {
    #[error("session {0} has no clicked images")]
    EmptyClicks(String),

    #[error("session {session} lists image {image} more than once")]
    DuplicateImage { session: String, image: String },

    #[error("session {session}: label {label} out of range for {arms} arms")]
    LabelOutOfRange {
        session: String,
        label: usize,
        arms: usize,
    },

    #[error("unknown image id: {0}")]
    UnknownImage(String),

    #[error("feature row for {image} has {got} entries, expected {expected}")]
    RowLenMismatch {
        image: String,
        expected: usize,
        got: usize,
    },

    #[error("feature row for {0} contains a non-finite value")]
    NonFiniteFeature(String),

    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// One diagnosis session: the images the user clicked, the user's own final
/// choice (the intuition), and the ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub clicked_images: Vec<String>,
    pub intuition: usize,
    pub true_label: usize,
}

impl SessionRecord {
    /// Checks the record invariants: nonempty, duplicate-free clicks and
    /// in-range labels.
    pub fn validate(&self, arms: usize) -> Result<(), ContextError> {
        if self.clicked_images.is_empty() {
            return Err(ContextError::EmptyClicks(self.session_id.clone()));
        }
        let mut seen = std::collections::HashSet::new();
        for img in &self.clicked_images {
            if !seen.insert(img) {
                return Err(ContextError::DuplicateImage {
                    session: self.session_id.clone(),
                    image: img.clone(),
                });
            }
        }
        for label in [self.intuition, self.true_label] {
            if label >= arms {
                return Err(ContextError::LabelOutOfRange {
                    session: self.session_id.clone(),
                    label,
                    arms,
                });
            }
        }
        Ok(())
    }
}

/// Pre-extracted per-image feature vectors, keyed by image id. Iteration is
/// always in id order, so every consumer sees a stable row order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatureTable {
    feature_dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl ImageFeatureTable {
    pub fn new(feature_dim: usize) -> Self {
        ImageFeatureTable {
            feature_dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, id: String, features: Vec<f64>) -> Result<(), ContextError> {
        if features.len() != self.feature_dim {
            return Err(ContextError::RowLenMismatch {
                image: id,
                expected: self.feature_dim,
                got: features.len(),
            });
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(ContextError::NonFiniteFeature(id));
        }
        self.rows.insert(id, features);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.rows.get(id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(id, row)| (id.as_str(), row.as_slice()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    /// Copies of all rows in id order, one per image; the PCA training set.
    pub fn feature_rows(&self) -> Vec<Vec<f64>> {
        self.rows.values().cloned().collect()
    }
}

/// Symmetric co-click counts over the images appearing in a session log,
/// with a zero diagonal. Image ids are kept in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoClickMatrix {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<Vec<u32>>,
}

impl CoClickMatrix {
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }

    pub fn count_between(&self, a: &str, b: &str) -> Option<u32> {
        let i = *self.index.get(a)?;
        let j = *self.index.get(b)?;
        Some(self.counts[i][j])
    }
}

/// Counts, for every image pair, the number of sessions whose clicks contain
/// both images.
pub fn co_click_matrix(sessions: &[SessionRecord]) -> CoClickMatrix {
    let mut ids: Vec<String> = sessions
        .iter()
        .flat_map(|s| s.clicked_images.iter().cloned())
        .collect();
    ids.sort();
    ids.dedup();
    let index: HashMap<String, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    let n = ids.len();
    let mut counts = vec![vec![0u32; n]; n];
    for session in sessions {
        let members: Vec<usize> = session
            .clicked_images
            .iter()
            .map(|img| index[img])
            .collect();
        for (pos, &i) in members.iter().enumerate() {
            for &j in &members[pos + 1..] {
                counts[i][j] += 1;
                counts[j][i] += 1;
            }
        }
    }
    CoClickMatrix { ids, index, counts }
}

/// Row-normalized co-click frequencies: each image's row is its co-click
/// counts divided by their total, or all-zero for images never co-clicked.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTable {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    rows: Vec<Vec<f64>>,
}

impl SimilarityTable {
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Dimension of every similarity row (the number of images).
    pub fn input_dim(&self) -> usize {
        self.ids.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.rows[i].as_slice())
    }
}

pub fn similarity_vectors(co_clicks: &CoClickMatrix) -> SimilarityTable {
    let rows = co_clicks
        .counts
        .iter()
        .map(|row| {
            let total: u32 = row.iter().sum();
            if total == 0 {
                vec![0.0; row.len()]
            } else {
                row.iter().map(|&c| f64::from(c) / f64::from(total)).collect()
            }
        })
        .collect();
    SimilarityTable {
        ids: co_clicks.ids.clone(),
        index: co_clicks.index.clone(),
        rows,
    }
}

/// Sums the PCA projections of the feature rows of every clicked image.
///
/// Images are visited in sorted id order, so the result does not depend on
/// click order.
pub fn build_img_context(
    session: &SessionRecord,
    features: &ImageFeatureTable,
    pca: &PcaModel,
) -> Result<Vec<f64>, ContextError> {
    sum_projections(&session.clicked_images, pca, |id| {
        features
            .get(id)
            .ok_or_else(|| ContextError::UnknownImage(id.to_string()))
    })
}

/// Sums the PCA projections of the similarity rows of every clicked image.
pub fn build_sim_context(
    session: &SessionRecord,
    similarity: &SimilarityTable,
    pca: &PcaModel,
) -> Result<Vec<f64>, ContextError> {
    sum_projections(&session.clicked_images, pca, |id| {
        similarity
            .row(id)
            .ok_or_else(|| ContextError::UnknownImage(id.to_string()))
    })
}

fn sum_projections<'a, F>(
    clicked: &[String],
    pca: &PcaModel,
    mut lookup: F,
) -> Result<Vec<f64>, ContextError>
where
    F: FnMut(&str) -> Result<&'a [f64], ContextError>,
{
    let mut order: Vec<&String> = clicked.iter().collect();
    order.sort();
    let mut acc = vec![0.0; pca.k()];
    for id in order {
        let row = lookup(id)?;
        let projected = pca_project(pca, row)?;
        for (a, p) in acc.iter_mut().zip(&projected) {
            *a += p;
        }
    }
    Ok(acc)
}
