//! Anchor discovery without paired data.
//!
//! Each run clusters both spaces independently, matches the two centroid sets
//! by solving a quadratic assignment problem over their cosine-similarity
//! matrices (2-OPT local search with random restarts), and describes every
//! embedding by its cosine similarities to the matched centroids. Because the
//! centroids are matched, those relative coordinates are comparable across
//! spaces. Concatenating several runs gives a sturdier signature, and nearest
//! neighbors in that shared relative space yield the pseudo-pairs used to fit
//! the first transformation.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::clustering::{kmeans_fit, Clustering, InitSpec, DEFAULT_MAX_ITER};
use crate::error::AlignError;
use crate::linalg::{cosine_matrix, knn_cosine, neighbor_means, row_norms};
use crate::rng::{derive_seed, rng_from_seed};

const ZERO_NORM: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// Square symmetric matrix of pairwise similarities between centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(Array2<f64>);

impl SimilarityMatrix {
    pub fn new(s: Array2<f64>) -> Result<Self, AlignError> {
        let (r, c) = s.dim();
        if r != c {
            return Err(AlignError::ShapeMismatch(format!("similarity matrix is {r}x{c}")));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                if (s[[i, j]] - s[[j, i]]).abs() > SYMMETRY_TOL {
                    return Err(AlignError::ShapeMismatch(format!("similarity matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self(s))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    /// Relabels rows and columns: entry `(i, j)` of the result is entry
    /// `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let c = self.size();
        Self(Array2::from_shape_fn((c, c), |(i, j)| self.0[[perm[i], perm[j]]]))
    }
}

/// Assignment of A-centroid `i` to B-centroid `perm[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidPermutation {
    pub perm: Vec<usize>,
    pub score: f64,
}

pub fn centroid_similarity(centroids: ArrayView2<'_, f64>) -> Result<SimilarityMatrix, AlignError> {
    if let Some(j) = row_norms(centroids).iter().position(|&n| n <= ZERO_NORM) {
        return Err(AlignError::ZeroCentroid(j));
    }
    let mut s = cosine_matrix(centroids, centroids);
    // Exact symmetry and unit diagonal; the GEMM can differ in the last bit.
    let c = s.nrows();
    for i in 0..c {
        s[[i, i]] = 1.0;
        for j in (i + 1)..c {
            let v = 0.5 * (s[[i, j]] + s[[j, i]]);
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    Ok(SimilarityMatrix(s))
}

fn check_pair(sa: &SimilarityMatrix, sb: &SimilarityMatrix) -> Result<usize, AlignError> {
    if sa.size() != sb.size() {
        return Err(AlignError::ShapeMismatch(format!(
            "similarity matrices are {0}x{0} and {1}x{1}",
            sa.size(),
            sb.size()
        )));
    }
    Ok(sa.size())
}

fn check_perm(perm: &[usize], c: usize) -> Result<(), AlignError> {
    if perm.len() != c {
        return Err(AlignError::ShapeMismatch(format!("permutation has length {}, expected {c}", perm.len())));
    }
    let mut seen = vec![false; c];
    for &p in perm {
        if p >= c || seen[p] {
            return Err(AlignError::ShapeMismatch(format!("{perm:?} is not a permutation of 0..{c}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// `sum_ij SA[i][j] * SB[perm[i]][perm[j]]`, i.e. `Tr(SA^T P SB P^T)` without
/// building `P`.
pub fn qap_objective(sa: &SimilarityMatrix, sb: &SimilarityMatrix, perm: &[usize]) -> Result<f64, AlignError> {
    let c = check_pair(sa, sb)?;
    check_perm(perm, c)?;
    Ok(objective(sa.matrix(), sb.matrix(), perm))
}

fn objective(a: &Array2<f64>, b: &Array2<f64>, perm: &[usize]) -> f64 {
    let c = perm.len();
    let mut total = 0.0;
    for i in 0..c {
        let pi = perm[i];
        for j in 0..c {
            total += a[[i, j]] * b[[pi, perm[j]]];
        }
    }
    total
}

/// Change in the objective from exchanging `perm[r]` and `perm[s]`, in O(c).
pub fn swap_delta(sa: &SimilarityMatrix, sb: &SimilarityMatrix, perm: &[usize], r: usize, s: usize) -> f64 {
    delta(sa.matrix(), sb.matrix(), perm, r, s)
}

fn delta(a: &Array2<f64>, b: &Array2<f64>, perm: &[usize], r: usize, s: usize) -> f64 {
    if r == s {
        return 0.0;
    }
    let (pr, ps) = (perm[r], perm[s]);
    let mut d = a[[r, r]] * (b[[ps, ps]] - b[[pr, pr]])
        + a[[s, s]] * (b[[pr, pr]] - b[[ps, ps]])
        + a[[r, s]] * (b[[ps, pr]] - b[[pr, ps]])
        + a[[s, r]] * (b[[pr, ps]] - b[[ps, pr]]);
    for (k, &pk) in perm.iter().enumerate() {
        if k == r || k == s {
            continue;
        }
        d += (a[[r, k]] - a[[s, k]]) * (b[[ps, pk]] - b[[pr, pk]])
            + (a[[k, r]] - a[[k, s]]) * (b[[pk, ps]] - b[[pk, pr]]);
    }
    d
}

/// One 2-OPT descent.
#[derive(Debug, Clone)]
pub struct LocalSearch {
    pub perm: Vec<usize>,
    pub score: f64,
    /// Objective after each accepted swap, starting with the initial score.
    pub trace: Vec<f64>,
}

/// Steepest-ascent 2-OPT from `start`: repeatedly applies the pairwise swap
/// with the largest gain until no swap gains more than rounding noise.
pub fn local_search(sa: &SimilarityMatrix, sb: &SimilarityMatrix, start: Vec<usize>) -> Result<LocalSearch, AlignError> {
    let c = check_pair(sa, sb)?;
    check_perm(&start, c)?;
    let (a, b) = (sa.matrix(), sb.matrix());
    let mut perm = start;
    let mut score = objective(a, b, &perm);
    let mut trace = vec![score];
    loop {
        let tol = 1e-12 * score.abs().max(1.0);
        let mut best: Option<(f64, usize, usize)> = None;
        for r in 0..c {
            for s in (r + 1)..c {
                let gain = delta(a, b, &perm, r, s);
                if gain > tol && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, r, s));
                }
            }
        }
        let Some((_, r, s)) = best else { break };
        perm.swap(r, s);
        score = objective(a, b, &perm);
        trace.push(score);
    }
    Ok(LocalSearch { perm, score, trace })
}

/// Best local optimum over `restarts` 2-OPT descents from uniformly random
/// permutations. Restart `i` draws its start from `derive_seed(seed, i)`, so a
/// run with more restarts extends a run with fewer.
pub fn qap_2opt(
    sa: &SimilarityMatrix,
    sb: &SimilarityMatrix,
    restarts: usize,
    seed: u64,
) -> Result<CentroidPermutation, AlignError> {
    let c = check_pair(sa, sb)?;
    if c < 2 {
        return Err(AlignError::ShapeMismatch("2-OPT needs at least two centroids".into()));
    }
    let mut best: Option<CentroidPermutation> = None;
    for restart in 0..restarts.max(1) {
        let mut start: Vec<usize> = (0..c).collect();
        start.shuffle(&mut rng_from_seed(derive_seed(seed, restart as u64)));
        let found = local_search(sa, sb, start)?;
        if best.as_ref().is_none_or(|b| found.score > b.score) {
            best = Some(CentroidPermutation { perm: found.perm, score: found.score });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Cosine similarity of every row of `xhat` to every anchor (`n x c`).
pub fn relative_representation(xhat: ArrayView2<'_, f64>, anchors: ArrayView2<'_, f64>) -> Result<Array2<f64>, AlignError> {
    if xhat.ncols() != anchors.ncols() {
        return Err(AlignError::DimensionMismatch { expected: anchors.ncols(), found: xhat.ncols() });
    }
    if let Some(j) = row_norms(anchors).iter().position(|&n| n <= ZERO_NORM) {
        return Err(AlignError::ZeroAnchor(j));
    }
    Ok(cosine_matrix(xhat, anchors))
}

/// Output of a single anchor-discovery run.
#[derive(Debug, Clone)]
pub struct AnchorRun {
    /// Relative representation of A against its own centroids.
    pub ra: Array2<f64>,
    /// Relative representation of B against its centroids, reordered to match A's.
    pub rb: Array2<f64>,
    pub matching: CentroidPermutation,
}

/// Lowest-inertia k-means++ clustering over `inits` attempts, attempt `i`
/// seeded with `derive_seed(seed, i)`. Earlier attempts win ties.
pub fn best_of_inits(x: ArrayView2<'_, f64>, c: usize, inits: usize, seed: u64) -> Result<Clustering, AlignError> {
    let mut best: Option<Clustering> = None;
    for i in 0..inits.max(1) {
        let run = kmeans_fit(x, c, &InitSpec::PlusPlus, derive_seed(seed, i as u64), DEFAULT_MAX_ITER)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one attempt"))
}

pub fn anchor_run(
    xa: ArrayView2<'_, f64>,
    xb: ArrayView2<'_, f64>,
    c: usize,
    kmeans_inits: usize,
    qap_restarts: usize,
    seed: u64,
) -> Result<AnchorRun, AlignError> {
    let ka = best_of_inits(xa, c, kmeans_inits, derive_seed(seed, 0))?;
    let kb = best_of_inits(xb, c, kmeans_inits, derive_seed(seed, 1))?;
    let sa = centroid_similarity(ka.centroids.view())?;
    let sb = centroid_similarity(kb.centroids.view())?;
    let matching = if c >= 2 {
        qap_2opt(&sa, &sb, qap_restarts, derive_seed(seed, 2))?
    } else {
        CentroidPermutation { perm: vec![0], score: 1.0 }
    };
    let anchors_b = kb.centroids.select(Axis(0), &matching.perm);
    Ok(AnchorRun {
        ra: relative_representation(xa, ka.centroids.view())?,
        rb: relative_representation(xb, anchors_b.view())?,
        matching,
    })
}

/// Runs `s` independent anchor-discovery rounds and concatenates their
/// relative representations column-wise, run `i` occupying columns
/// `[i*c, (i+1)*c)` and seeded with `derive_seed(seed, i)`.
pub fn anchor_alignment(
    xa: ArrayView2<'_, f64>,
    xb: ArrayView2<'_, f64>,
    c: usize,
    s: usize,
    kmeans_inits: usize,
    qap_restarts: usize,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>), AlignError> {
    if xa.ncols() != xb.ncols() {
        return Err(AlignError::DimensionMismatch { expected: xa.ncols(), found: xb.ncols() });
    }
    let smallest = xa.nrows().min(xb.nrows());
    if c > smallest {
        return Err(AlignError::TooFewPoints { clusters: c, points: smallest });
    }
    if s == 0 {
        return Err(AlignError::InvalidConfig { field: "s", reason: "must be at least 1".into() });
    }
    let runs = (0..s)
        .into_par_iter()
        .map(|i| anchor_run(xa, xb, c, kmeans_inits, qap_restarts, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, run) in runs.iter().enumerate() {
        log::debug!("anchor run {i}: QAP score {:.6}", run.matching.score);
    }
    let ra: Vec<_> = runs.iter().map(|r| r.ra.view()).collect();
    let rb: Vec<_> = runs.iter().map(|r| r.rb.view()).collect();
    let ra = concatenate(Axis(1), &ra).expect("equal row counts");
    let rb = concatenate(Axis(1), &rb).expect("equal row counts");
    Ok((ra, rb))
}

/// Source rows paired with target vectors that stand in for their unknown
/// counterparts.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPairSet {
    pub source: Array2<f64>,
    pub target: Array2<f64>,
}

impl PseudoPairSet {
    pub fn new(source: Array2<f64>, target: Array2<f64>) -> Result<Self, AlignError> {
        if source.nrows() != target.nrows() {
            return Err(AlignError::LengthMismatch { left: source.nrows(), right: target.nrows() });
        }
        if source.ncols() != target.ncols() {
            return Err(AlignError::DimensionMismatch { expected: source.ncols(), found: target.ncols() });
        }
        if source.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(AlignError::NonFiniteInput("pseudo-pairs"));
        }
        Ok(Self { source, target })
    }

    pub fn len(&self) -> usize {
        self.source.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.source.nrows() == 0
    }
}

/// Pairs every source row with the mean of the `k` target rows whose relative
/// representations are most cosine-similar to its own. Neighbors are found in
/// relative space; the averaging happens in the absolute target space.
pub fn build_pseudo_pairs(
    xa_rows: ArrayView2<'_, f64>,
    ra: ArrayView2<'_, f64>,
    xb: ArrayView2<'_, f64>,
    rb: ArrayView2<'_, f64>,
    k: usize,
) -> Result<PseudoPairSet, AlignError> {
    if xa_rows.nrows() != ra.nrows() {
        return Err(AlignError::LengthMismatch { left: xa_rows.nrows(), right: ra.nrows() });
    }
    if xb.nrows() != rb.nrows() {
        return Err(AlignError::LengthMismatch { left: xb.nrows(), right: rb.nrows() });
    }
    if ra.ncols() != rb.ncols() {
        return Err(AlignError::ShapeMismatch(format!(
            "relative representations have widths {} and {}",
            ra.ncols(),
            rb.ncols()
        )));
    }
    if k == 0 || k > xb.nrows() {
        return Err(AlignError::KTooLarge { k, available: xb.nrows() });
    }
    let neighbors = knn_cosine(ra, rb, k);
    let target = neighbor_means(&neighbors, xb);
    PseudoPairSet::new(xa_rows.to_owned(), target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn random_symmetric(c: usize, seed: u64) -> SimilarityMatrix {
        let mut rng = rng_from_seed(seed);
        let mut m = Array2::zeros((c, c));
        for i in 0..c {
            for j in i..c {
                let v: f64 = rng.random_range(-1.0..1.0);
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        SimilarityMatrix::new(m).unwrap()
    }

    fn all_perms(c: usize) -> Vec<Vec<usize>> {
        fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
            if prefix.len() == used.len() {
                out.push(prefix.clone());
                return;
            }
            for i in 0..used.len() {
                if !used[i] {
                    used[i] = true;
                    prefix.push(i);
                    rec(prefix, used, out);
                    prefix.pop();
                    used[i] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; c], &mut out);
        out
    }

    #[test]
    fn orthonormal_centroids_give_identity() {
        let c = Array2::<f64>::eye(3);
        let s = centroid_similarity(c.view()).unwrap();
        assert_eq!(s.matrix(), &Array2::<f64>::eye(3));
    }

    #[test]
    fn two_centroid_similarity() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = array![[1.0, 0.0], [h, h]];
        let s = centroid_similarity(c.view()).unwrap();
        assert_abs_diff_eq!(s.matrix()[[0, 1]], h, epsilon = 1e-15);
        assert_abs_diff_eq!(s.matrix()[[1, 0]], h, epsilon = 1e-15);
        assert_eq!(s.matrix()[[0, 0]], 1.0);
    }

    #[test]
    fn zero_centroid_rejected() {
        let c = array![[1.0, 0.0], [0.0, 0.0]];
        assert_eq!(centroid_similarity(c.view()), Err(AlignError::ZeroCentroid(1)));
    }

    #[test]
    fn identity_objective_is_sum_of_squares() {
        let sa = random_symmetric(5, 1);
        let expected: f64 = sa.matrix().iter().map(|v| v * v).sum();
        let got = qap_objective(&sa, &sa, &[0, 1, 2, 3, 4]).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn objective_rejects_bad_inputs() {
        let sa = random_symmetric(3, 1);
        let sb = random_symmetric(4, 2);
        assert!(matches!(qap_objective(&sa, &sb, &[0, 1, 2]), Err(AlignError::ShapeMismatch(_))));
        assert!(matches!(qap_objective(&sa, &sa, &[0, 0, 2]), Err(AlignError::ShapeMismatch(_))));
    }

    #[test]
    fn planted_permutation_is_the_exhaustive_optimum() {
        for seed in 0..20 {
            let sa = random_symmetric(3, seed);
            let pi = [2, 0, 1];
            // sb[pi[i]][pi[j]] = sa[i][j]
            let mut inv = [0; 3];
            for (i, &p) in pi.iter().enumerate() {
                inv[p] = i;
            }
            let sb = sa.permuted(&inv);
            let planted = qap_objective(&sa, &sb, &pi).unwrap();
            for sigma in all_perms(3) {
                assert!(planted >= qap_objective(&sa, &sb, &sigma).unwrap() - 1e-12);
            }
        }
    }

    #[test]
    fn swap_delta_matches_recomputation() {
        let mut rng = rng_from_seed(5);
        for trial in 0..50 {
            let c = 2 + trial % 7;
            let sa = random_symmetric(c, 100 + trial as u64);
            let sb = random_symmetric(c, 200 + trial as u64);
            let mut perm: Vec<usize> = (0..c).collect();
            perm.shuffle(&mut rng);
            let base = qap_objective(&sa, &sb, &perm).unwrap();
            for r in 0..c {
                for s in 0..c {
                    let mut swapped = perm.clone();
                    swapped.swap(r, s);
                    let full = qap_objective(&sa, &sb, &swapped).unwrap() - base;
                    assert_abs_diff_eq!(swap_delta(&sa, &sb, &perm, r, s), full, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn swap_delta_handles_asymmetric_matrices() {
        let a = array![[0.1, 0.7, -0.2], [0.4, 0.0, 0.9], [-0.5, 0.3, 0.2]];
        let b = array![[0.6, -0.1, 0.8], [0.2, 0.5, -0.3], [0.9, 0.4, 0.0]];
        let perm = vec![1, 2, 0];
        let base = objective(&a, &b, &perm);
        let mut swapped = perm.clone();
        swapped.swap(0, 2);
        assert_abs_diff_eq!(delta(&a, &b, &perm, 0, 2), objective(&a, &b, &swapped) - base, epsilon = 1e-12);
    }

    #[test]
    fn self_match_reaches_sum_of_squares() {
        let sa = random_symmetric(5, 9);
        let best = qap_2opt(&sa, &sa, 30, 4).unwrap();
        let max: f64 = sa.matrix().iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(best.score, max, epsilon = 1e-9);
    }

    #[test]
    fn local_search_strictly_improves() {
        let sa = random_symmetric(8, 3);
        let sb = random_symmetric(8, 4);
        let mut start: Vec<usize> = (0..8).collect();
        start.shuffle(&mut rng_from_seed(1));
        let run = local_search(&sa, &sb, start).unwrap();
        for w in run.trace.windows(2) {
            assert!(w[1] > w[0]);
        }
        // No single swap improves the final permutation.
        for r in 0..8 {
            for s in (r + 1)..8 {
                assert!(swap_delta(&sa, &sb, &run.perm, r, s) <= 1e-12 * run.score.abs().max(1.0));
            }
        }
    }

    #[test]
    fn more_restarts_never_hurt() {
        let sa = random_symmetric(9, 21);
        let sb = random_symmetric(9, 22);
        let mut prev = f64::NEG_INFINITY;
        for r in [1, 2, 5, 10, 30] {
            let score = qap_2opt(&sa, &sb, r, 8).unwrap().score;
            assert!(score >= prev);
            prev = score;
        }
    }

    #[test]
    fn qap_needs_two_centroids() {
        let sa = SimilarityMatrix::new(array![[1.0]]).unwrap();
        assert!(qap_2opt(&sa, &sa, 3, 0).is_err());
    }

    #[test]
    fn relative_representation_examples() {
        let anchors = array![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]];
        let x = array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let r = relative_representation(x.view(), anchors.view()).unwrap();
        assert_abs_diff_eq!(r[[0, 0]], 1.0, epsilon = 1e-15);
        assert_eq!(r.row(1).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn relative_representation_matches_pairwise_cosine() {
        let mut rng = rng_from_seed(12);
        let x = Array2::from_shape_simple_fn((4, 5), || rng.random_range(-1.0..1.0));
        let anchors = Array2::from_shape_simple_fn((3, 5), || rng.random_range(-1.0..1.0));
        let r = relative_representation(x.view(), anchors.view()).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let (a, b) = (x.row(i), anchors.row(j));
                let cos = a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt());
                assert_abs_diff_eq!(r[[i, j]], cos, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_anchor_rejected() {
        let anchors = array![[1.0, 0.0], [0.0, 0.0]];
        let x = array![[1.0, 0.0]];
        assert_eq!(relative_representation(x.view(), anchors.view()), Err(AlignError::ZeroAnchor(1)));
    }

    fn unit_cloud(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
        crate::linalg::normalized_rows(x.view())
    }

    /// Tight, well separated clusters so k-means lands on the same partition
    /// regardless of row order.
    fn clustered_cloud(seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        let centers = unit_cloud(5, 6, seed + 1);
        let mut x = Array2::zeros((60, 6));
        for i in 0..60 {
            for j in 0..6 {
                x[[i, j]] = centers[[i % 5, j]] + rng.random_range(-0.01..0.01);
            }
        }
        crate::linalg::normalized_rows(x.view())
    }

    #[test]
    fn permuted_copy_gives_matching_relative_rows() {
        let xa = clustered_cloud(3);
        let mut order: Vec<usize> = (0..60).collect();
        order.shuffle(&mut rng_from_seed(4));
        let xb = xa.select(Axis(0), &order);
        let (ra, rb) = anchor_alignment(xa.view(), xb.view(), 5, 1, 1, 30, 17).unwrap();
        // B row i is A row order[i].
        for (i, &j) in order.iter().enumerate() {
            for col in 0..5 {
                assert_abs_diff_eq!(ra[[j, col]], rb[[i, col]], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn runs_concatenate_in_order() {
        let xa = unit_cloud(80, 6, 1);
        let xb = unit_cloud(70, 6, 2);
        let (ra2, rb2) = anchor_alignment(xa.view(), xb.view(), 4, 2, 3, 5, 33).unwrap();
        let (ra1, rb1) = anchor_alignment(xa.view(), xb.view(), 4, 1, 3, 5, 33).unwrap();
        assert_eq!(ra2.dim(), (80, 8));
        assert_eq!(rb2.dim(), (70, 8));
        assert_eq!(ra2.slice(ndarray::s![.., 0..4]), ra1);
        assert_eq!(rb2.slice(ndarray::s![.., 0..4]), rb1);
        for v in ra2.iter().chain(rb2.iter()) {
            assert!(v.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn anchor_alignment_checks_cluster_count() {
        let xa = unit_cloud(5, 3, 1);
        let xb = unit_cloud(50, 3, 2);
        assert!(matches!(
            anchor_alignment(xa.view(), xb.view(), 6, 1, 1, 5, 0),
            Err(AlignError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn pseudo_pairs_exact_duplicate_with_k1() {
        let xa = array![[1.0, 0.0], [0.0, 1.0]];
        let ra = array![[0.9, 0.1, 0.3], [0.2, 0.8, -0.5]];
        let xb = array![[5.0, 5.0], [7.0, -1.0], [3.0, 2.0]];
        let rb = array![[0.1, 0.1, 0.9], [0.2, 0.8, -0.5], [0.9, 0.1, 0.3]];
        let pairs = build_pseudo_pairs(xa.view(), ra.view(), xb.view(), rb.view(), 1).unwrap();
        assert_eq!(pairs.target, array![[3.0, 2.0], [7.0, -1.0]]);
        assert_eq!(pairs.source, xa);
    }

    #[test]
    fn pseudo_pairs_full_average() {
        let xa = unit_cloud(4, 3, 5);
        let ra = unit_cloud(4, 6, 6);
        let xb = unit_cloud(7, 3, 7);
        let rb = unit_cloud(7, 6, 8);
        let pairs = build_pseudo_pairs(xa.view(), ra.view(), xb.view(), rb.view(), 7).unwrap();
        let mean = crate::linalg::column_mean(xb.view());
        for row in pairs.target.rows() {
            for (a, b) in row.iter().zip(mean.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pseudo_pairs_k_too_large() {
        let x = unit_cloud(3, 2, 1);
        let r = unit_cloud(3, 4, 2);
        assert_eq!(
            build_pseudo_pairs(x.view(), r.view(), x.view(), r.view(), 4),
            Err(AlignError::KTooLarge { k: 4, available: 3 })
        );
    }
}
