//! Efficient sequence-based place recognition.
//!
//! Incoming query descriptors are compared against a small, dynamically
//! selected subset of the database: the best candidates of the previous
//! timestep, their sequence successors, and database images that the
//! intra-database similarities mark as the same place (loops and stops).
//! Periodic or event-based relocalization recovers from sequence loss.
//!
//! Modules:
//! - [`dataset`]: descriptor/ground-truth/similarity files and a synthetic
//!   trajectory generator.
//! - [`similarity`]: cosine kernels, standardization, intra-database matrix,
//!   K-argmax selection.
//! - [`autotune`]: robust normal fit and quantile thresholds.
//! - [`engine`]: the online matcher.
//! - [`eval`]: precision-recall evaluation (single and multi matching).

pub mod autotune;
pub mod dataset;
pub mod engine;
mod error;
pub mod eval;
pub mod similarity;

pub use autotune::{autotune, normal_quantile, robust_fit, ThresholdModel, P_DB, P_RELOC};
pub use dataset::{
    generate_synthetic, load_descriptors, load_ground_truth, load_similarity_csv, save_descriptors,
    save_ground_truth, save_similarity_csv, DescriptorSet, GroundTruth, Role, RouteEntry,
    SyntheticSpec,
};
pub use engine::{
    relocalize_decision, run, Engine, EprConfig, RunReport, SparseColumn, SparseSimilarityMatrix,
    Strategy,
};
pub use error::{EprError, Result};
pub use eval::{
    compare_runs, density_report, evaluate, multi_matching_curve, single_matching_curve,
    DensityReport, EvalReport, MatchingMode, PrCurve, TradeoffRow,
};
pub use similarity::{
    cosine_similarity, intra_db_matrix, intra_db_neighbors, k_argmax, standardize, CandidateSet,
    IntraDbSimilarities,
};
