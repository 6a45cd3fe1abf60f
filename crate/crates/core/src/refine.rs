//! Iterative refinement of an initial transformation.
//!
//! Refine-1 alternates nearest-neighbor matching in the target space with
//! Procrustes refits on random subsamples. Refine-2 clusters the source,
//! seeds a target clustering with the mapped source centroids, and refits on
//! the resulting centroid pairs. Both blend each refit into the running map
//! with exponential smoothing.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;

use crate::clustering::{kmeans_fit, InitSpec, DEFAULT_MAX_ITER};
use crate::error::AlignError;
use crate::linalg::{knn_cosine, neighbor_means, orthogonality_defect, rowwise_cosine};
use crate::mapping::{procrustes_views, smooth_update};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct Refine1Params {
    pub iterations: usize,
    pub alpha: f64,
    pub k_prime: usize,
    pub n_sample: usize,
    pub seed: u64,
}

/// Per-iteration record of a refinement loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefineTrace {
    /// Mean cosine between mapped samples and their matched targets, measured
    /// with the map used for matching.
    pub mean_cosine: Vec<f64>,
    /// `|W_new^T W_new - I|_max` of every Procrustes refit.
    pub refit_defect: Vec<f64>,
    pub rank_deficient: bool,
}

pub fn refine1(
    xa: ArrayView2<'_, f64>,
    xb: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    params: &Refine1Params,
    trace: &mut RefineTrace,
) -> Result<Array2<f64>, AlignError> {
    let d = w.nrows();
    check_inputs(xa, xb, w)?;
    if params.k_prime == 0 || params.k_prime > xb.nrows() {
        return Err(AlignError::KTooLarge { k: params.k_prime, available: xb.nrows() });
    }
    let n_sample = if params.n_sample > xa.nrows() {
        log::warn!("n-sample {} exceeds the {} source rows; using all rows", params.n_sample, xa.nrows());
        xa.nrows()
    } else {
        params.n_sample
    };

    let mut w = w.to_owned();
    for t in 0..params.iterations {
        let mut rng = rng_from_seed(derive_seed(params.seed, t as u64));
        let rows = sample(&mut rng, xa.nrows(), n_sample).into_vec();
        let samples = xa.select(Axis(0), &rows);
        let mapped = samples.dot(&w);
        let neighbors = knn_cosine(mapped.view(), xb, params.k_prime);
        let matched = neighbor_means(&neighbors, xb);
        trace.mean_cosine.push(mean(rowwise_cosine(mapped.view(), matched.view()).iter().copied()));

        let fit = procrustes_views(samples.view(), matched.view())?;
        trace.refit_defect.push(orthogonality_defect(fit.w.view()));
        trace.rank_deficient |= fit.rank_deficient;
        w = smooth_update(w.view(), fit.w.view(), params.alpha)?;
        log::trace!("refine-1 iteration {t}: mean cosine {:.6}", trace.mean_cosine[t]);
    }
    debug_assert_eq!(w.dim(), (d, d));
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refine2Params {
    pub alpha: f64,
    pub c_prime: usize,
    pub iterations: usize,
    pub seed: u64,
}

pub fn refine2(
    xa: ArrayView2<'_, f64>,
    xb: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    params: &Refine2Params,
    trace: &mut RefineTrace,
) -> Result<Array2<f64>, AlignError> {
    check_inputs(xa, xb, w)?;
    let smallest = xa.nrows().min(xb.nrows());
    if params.c_prime == 0 || params.c_prime > smallest {
        return Err(AlignError::TooFewPoints { clusters: params.c_prime, points: smallest });
    }
    if params.iterations > 1 {
        log::warn!(
            "running {} Refine-2 iterations; more than one tends to degrade the alignment slightly",
            params.iterations
        );
    }

    let mut w = w.to_owned();
    for it in 0..params.iterations {
        let it = it as u64;
        let source = kmeans_fit(xa, params.c_prime, &InitSpec::PlusPlus, derive_seed(params.seed, 2 * it), DEFAULT_MAX_ITER)?;
        let mapped = source.centroids.dot(&w);
        let target = kmeans_fit(
            xb,
            params.c_prime,
            &InitSpec::ExplicitCentroids(mapped.clone()),
            derive_seed(params.seed, 2 * it + 1),
            DEFAULT_MAX_ITER,
        )?;
        // Centroid j of the seeded clustering is the counterpart of source centroid j.
        trace.mean_cosine.push(mean(rowwise_cosine(mapped.view(), target.centroids.view()).iter().copied()));
        let fit = procrustes_views(source.centroids.view(), target.centroids.view())?;
        trace.refit_defect.push(orthogonality_defect(fit.w.view()));
        trace.rank_deficient |= fit.rank_deficient;
        w = smooth_update(w.view(), fit.w.view(), params.alpha)?;
    }
    Ok(w)
}

fn check_inputs(xa: ArrayView2<'_, f64>, xb: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Result<(), AlignError> {
    let d = w.nrows();
    if w.ncols() != d {
        return Err(AlignError::ShapeMismatch(format!("W is {:?}, expected square", w.dim())));
    }
    for found in [xa.ncols(), xb.ncols()] {
        if found != d {
            return Err(AlignError::DimensionMismatch { expected: d, found });
        }
    }
    if xa.nrows() == 0 || xb.nrows() == 0 {
        return Err(AlignError::EmptyInput("refinement pools"));
    }
    Ok(())
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    values.sum::<f64>() / n as f64
}
