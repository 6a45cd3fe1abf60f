//! Unsupervised linear alignment of two embedding spaces.
//!
//! Given two pools of vectors with no known correspondences, [`fit`] estimates
//! an orthogonal map from the source space into the target space. Anchors are
//! found by matching k-means centroids across spaces, pseudo-pairs come from
//! nearest neighbors in the anchor-relative space, and a Procrustes fit is
//! refined by neighbor matching and by seeded clustering.
//!
//! ```no_run
//! use embalign_core::{fit, evaluate, synth_generate, PipelineConfig, SynthSpec};
//!
//! let data = synth_generate(&SynthSpec::default()).unwrap();
//! let model = fit(&data.xa, &data.xb, &PipelineConfig::small()).unwrap();
//! let report = evaluate(&model, &data.eval_a, &data.eval_b).unwrap();
//! println!("top1 {:.3}", report.top1);
//! ```

pub mod clustering;
pub mod config;
pub mod correspondence;
pub mod embedding;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mapping;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod refine;
pub mod rng;
pub mod synth;

pub use clustering::{kmeans_fit, Clustering, InitSpec};
pub use config::{ConfigOverrides, PipelineConfig};
pub use correspondence::{
    anchor_alignment, build_pseudo_pairs, centroid_similarity, qap_2opt, qap_objective, CentroidPermutation,
    PseudoPairSet, SimilarityMatrix,
};
pub use embedding::EmbeddingMatrix;
pub use error::{AlignError, FitError, FormatError, Stage};
pub use io::{load_model, read_embeddings, save_model, write_embeddings};
pub use mapping::{procrustes, smooth_update, ProcrustesSolution};
pub use model::{AlignmentModel, StageDiagnostics};
pub use pipeline::{evaluate, fit, fit_stages, EvalReport, StagedFit};
pub use preprocess::{center_and_normalize, drop_degenerate_rows, NormalizationStats};
pub use rng::derive_seed;
pub use synth::{synth_generate, GroundTruth, SynthData, SynthSpec};
