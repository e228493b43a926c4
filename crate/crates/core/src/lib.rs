//! banditlab: an offline laboratory for contextual bandits with human
//! intuitions.
//!
//! The crate replays logged (or synthetically generated) diagnosis sessions
//! through five selection models — counterfactual Thompson sampling keyed by
//! the user's own choice, disjoint linear Thompson sampling, Thompson
//! sampling on an intuition-extended context, the observational baseline,
//! and a majority-class baseline — and aggregates accuracy with paired
//! significance tests.
//!
//! Modules:
//! - [`numerics`]: Cholesky factors with rank-one maintenance, precision
//!   Gaussian sampling, PCA, paired t-test.
//! - [`policies`]: the selection models and their posterior state.
//! - [`contexts`]: session records, co-click statistics, the two context
//!   builders.
//! - [`replay`]: augmentation by replication-with-dropout, the replay loop,
//!   metrics, aggregation.
//! - [`synthenv`]: the synthetic confounded session generator.
//! - [`experiment`]: n-run orchestration with per-run seed derivation.
//! - [`io`]: the `sessions.jsonl` / `features.csv` file formats.
//! - [`seed`]: stable seed derivation for isolated RNG streams.

pub mod contexts;
pub mod experiment;
pub mod io;
pub mod numerics;
pub mod policies;
pub mod replay;
pub mod seed;
pub mod synthenv;
