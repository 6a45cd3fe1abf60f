//! End-to-end fitting and retrieval evaluation.

use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::correspondence::{anchor_alignment, build_pseudo_pairs};
use crate::embedding::EmbeddingMatrix;
use crate::error::{AlignError, AtStage, FitError, Stage};
use crate::linalg::{knn_cosine, neighbor_means, normalized_rows, rowwise_cosine};
use crate::mapping::procrustes;
use crate::model::{AlignmentModel, StageDiagnostics};
use crate::preprocess::{center_and_normalize, NormalizationStats};
use crate::refine::{refine1, refine2, Refine1Params, Refine2Params, RefineTrace};
use crate::rng::{derive_seed, rng_from_seed};

const SEED_ANCHORS: u64 = 1;
const SEED_REFINE1: u64 = 2;
const SEED_REFINE2: u64 = 3;
const SEED_PROBE: u64 = 4;

/// The transformation after each stage, for inspection and ablations.
#[derive(Debug, Clone)]
pub struct StagedFit {
    pub stats_a: NormalizationStats,
    pub stats_b: NormalizationStats,
    pub initial: Array2<f64>,
    pub refine1: Array2<f64>,
    pub refine2: Array2<f64>,
    pub diagnostics: StageDiagnostics,
    pub config: PipelineConfig,
}

impl StagedFit {
    /// Packages the map of a given stage as a model.
    pub fn model_at(&self, stage: Stage) -> Result<AlignmentModel, AlignError> {
        let w = match stage {
            Stage::InitialMapping => &self.initial,
            Stage::Refine1 => &self.refine1,
            Stage::Refine2 => &self.refine2,
            other => {
                return Err(AlignError::ShapeMismatch(format!("no transformation is recorded for stage {other}")));
            }
        };
        AlignmentModel::new(
            w.clone(),
            self.stats_a.clone(),
            self.stats_b.clone(),
            self.diagnostics.clone(),
            self.config.clone(),
        )
    }

    pub fn into_model(self) -> Result<AlignmentModel, AlignError> {
        AlignmentModel::new(self.refine2, self.stats_a, self.stats_b, self.diagnostics, self.config)
    }
}

/// Learns a map from pool A to pool B without any paired rows.
pub fn fit(xa_raw: &EmbeddingMatrix, xb_raw: &EmbeddingMatrix, config: &PipelineConfig) -> Result<AlignmentModel, FitError> {
    fit_stages(xa_raw, xb_raw, config)?.into_model().at(Stage::Refine2)
}

/// Same as [`fit`], keeping the transformation of every stage.
pub fn fit_stages(
    xa_raw: &EmbeddingMatrix,
    xb_raw: &EmbeddingMatrix,
    config: &PipelineConfig,
) -> Result<StagedFit, FitError> {
    config.validate().at(Stage::Preprocess)?;
    if xa_raw.d() != xb_raw.d() {
        return Err(AlignError::DimensionMismatch { expected: xa_raw.d(), found: xb_raw.d() }).at(Stage::Preprocess);
    }
    let (xa, stats_a) = center_and_normalize(xa_raw).at(Stage::Preprocess)?;
    let (xb, stats_b) = center_and_normalize(xb_raw).at(Stage::Preprocess)?;
    let (xa, xb) = (xa.view(), xb.view());
    log::info!("fitting {} -> {} rows in dimension {}", xa.nrows(), xb.nrows(), xa.ncols());

    let anchor_seed = derive_seed(config.seed, SEED_ANCHORS);
    let (ra, rb) = anchor_alignment(xa, xb, config.c, config.s, config.kmeans_inits, config.qap_restarts, anchor_seed)
        .at(Stage::AnchorAlignment)?;
    let pairs = build_pseudo_pairs(xa, ra.view(), xb, rb.view(), config.k).at(Stage::PseudoPairs)?;
    drop((ra, rb));
    let initial = procrustes(&pairs).at(Stage::InitialMapping)?.w;

    let probe = Probe::new(xa, xb, config);
    let mut diagnostics = StageDiagnostics { initial: Some(probe.mean_cosine(initial.view())), ..Default::default() };
    log::info!("initial mapping: mean cosine {:.4}", diagnostics.initial.unwrap_or(f64::NAN));

    let mut trace = RefineTrace::default();
    let p1 = Refine1Params {
        iterations: config.t,
        alpha: config.alpha,
        k_prime: config.k_prime,
        n_sample: config.n_sample,
        seed: derive_seed(config.seed, SEED_REFINE1),
    };
    let after1 = refine1(xa, xb, initial.view(), &p1, &mut trace).at(Stage::Refine1)?;
    diagnostics.refine1 = Some(probe.mean_cosine(after1.view()));
    diagnostics.refine1_trace = trace.mean_cosine;
    log::info!("refine-1: mean cosine {:.4}", diagnostics.refine1.unwrap_or(f64::NAN));

    let p2 = Refine2Params {
        alpha: config.alpha,
        c_prime: config.c_prime,
        iterations: config.refine2_iterations,
        seed: derive_seed(config.seed, SEED_REFINE2),
    };
    let after2 = refine2(xa, xb, after1.view(), &p2, &mut RefineTrace::default()).at(Stage::Refine2)?;
    diagnostics.refine2 = Some(probe.mean_cosine(after2.view()));
    log::info!("refine-2: mean cosine {:.4}", diagnostics.refine2.unwrap_or(f64::NAN));

    Ok(StagedFit {
        stats_a,
        stats_b,
        initial,
        refine1: after1,
        refine2: after2,
        diagnostics,
        config: config.clone(),
    })
}

/// Fixed source subsample used to score every stage the same way: mean cosine
/// between each mapped row and the average of its `k'` nearest target rows.
struct Probe<'a> {
    samples: Array2<f64>,
    xb: ArrayView2<'a, f64>,
    k: usize,
}

impl<'a> Probe<'a> {
    fn new(xa: ArrayView2<'_, f64>, xb: ArrayView2<'a, f64>, config: &PipelineConfig) -> Self {
        let n = config.n_sample.min(xa.nrows());
        let mut rng = rng_from_seed(derive_seed(config.seed, SEED_PROBE));
        let rows = sample(&mut rng, xa.nrows(), n).into_vec();
        Self { samples: xa.select(Axis(0), &rows), xb, k: config.k_prime.min(xb.nrows()) }
    }

    fn mean_cosine(&self, w: ArrayView2<'_, f64>) -> f64 {
        let mapped = self.samples.dot(&w);
        let neighbors = knn_cosine(mapped.view(), self.xb, self.k);
        let matched = neighbor_means(&neighbors, self.xb);
        let cos = rowwise_cosine(mapped.view(), matched.view());
        cos.sum() / cos.len() as f64
    }
}

/// Retrieval quality of a model on row-aligned evaluation pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Fraction of queries whose nearest target is the true match.
    pub top1: f64,
    /// Mean 1-based rank of the true match.
    #[serde(rename = "avgRank")]
    pub avg_rank: f64,
    /// Mean cosine between translated queries and their true targets, in the
    /// centered and normalized target space.
    #[serde(rename = "meanCosine")]
    pub mean_cosine: f64,
    pub n: usize,
    #[serde(rename = "perStage", skip_serializing_if = "Option::is_none", default)]
    pub per_stage: Option<BTreeMap<String, f64>>,
}

impl EvalReport {
    /// Builds a report from per-query ranks and true-match cosines.
    pub fn from_ranks(ranks: &[usize], cosines: &[f64]) -> Result<Self, AlignError> {
        if ranks.len() != cosines.len() {
            return Err(AlignError::LengthMismatch { left: ranks.len(), right: cosines.len() });
        }
        if ranks.is_empty() {
            return Err(AlignError::EmptyInput("no evaluation pairs"));
        }
        let n = ranks.len();
        let hits = ranks.iter().filter(|&&r| r == 1).count();
        let report = Self {
            top1: hits as f64 / n as f64,
            avg_rank: ranks.iter().sum::<usize>() as f64 / n as f64,
            mean_cosine: cosines.iter().sum::<f64>() / n as f64,
            n,
            per_stage: None,
        };
        debug_assert!(report.avg_rank >= 1.0 && report.avg_rank <= n as f64);
        Ok(report)
    }
}

/// Rank of the diagonal entry within each row of a square similarity matrix.
/// Ties count against the true match: rank is one plus the number of other
/// candidates scoring at least as high.
pub fn pessimistic_ranks(sims: ArrayView2<'_, f64>) -> Vec<usize> {
    sims.rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| rank_in_row(&row.to_vec(), i))
        .collect()
}

fn rank_in_row(row: &[f64], truth: usize) -> usize {
    let target = row[truth];
    1 + row.iter().enumerate().filter(|&(j, &s)| j != truth && s >= target).count()
}

const EVAL_BLOCK: usize = 512;

/// Translates `eval_a` with the model and ranks each query's true partner
/// among all rows of `eval_b` by cosine similarity.
pub fn evaluate(model: &AlignmentModel, eval_a: &EmbeddingMatrix, eval_b: &EmbeddingMatrix) -> Result<EvalReport, AlignError> {
    if eval_a.n() != eval_b.n() {
        return Err(AlignError::LengthMismatch { left: eval_a.n(), right: eval_b.n() });
    }
    for found in [eval_a.d(), eval_b.d()] {
        if found != model.d() {
            return Err(AlignError::DimensionMismatch { expected: model.d(), found });
        }
    }
    let queries = normalized_rows(model.translate(eval_a)?.view());
    let targets_t = normalized_rows(model.normalize_target(eval_b)?.view()).reversed_axes();
    let n = queries.nrows();

    let starts: Vec<usize> = (0..n).step_by(EVAL_BLOCK).collect();
    let scored: Vec<(usize, f64)> = starts
        .into_par_iter()
        .map(|start| {
            let end = (start + EVAL_BLOCK).min(n);
            let sims = queries.slice(s![start..end, ..]).dot(&targets_t);
            sims.rows()
                .into_iter()
                .enumerate()
                .map(|(off, row)| {
                    let row = row.to_vec();
                    let truth = start + off;
                    (rank_in_row(&row, truth), row[truth])
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    let (ranks, cosines): (Vec<usize>, Vec<f64>) = scored.into_iter().unzip();
    let mut report = EvalReport::from_ranks(&ranks, &cosines)?;

    let d = &model.diagnostics;
    let stages: BTreeMap<String, f64> = [("initial", d.initial), ("refine1", d.refine1), ("refine2", d.refine2)]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect();
    if !stages.is_empty() {
        report.per_stage = Some(stages);
    }
    Ok(report)
}
