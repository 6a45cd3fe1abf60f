//! Dense kernels shared by the pipeline stages: cosine similarity, exact
//! blocked kNN, and a deterministic SVD for small square matrices.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

/// Rows per block in the kNN scan. Bounds the similarity scratch buffer to
/// `KNN_BLOCK * n_base` entries.
const KNN_BLOCK: usize = 256;

pub fn row_norms(x: ArrayView2<'_, f64>) -> Array1<f64> {
    x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
}

/// Scales every row to unit L2 norm. Rows with zero norm stay zero.
pub fn normalized_rows(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

/// Pairwise cosine similarities between the rows of `a` and the rows of `b`.
/// Pairs involving a zero row get similarity 0.
pub fn cosine_matrix(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let an = normalized_rows(a);
    let bn = normalized_rows(b);
    an.dot(&bn.t())
}

/// Cosine similarity between matching rows of `a` and `b`.
pub fn rowwise_cosine(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array1<f64> {
    debug_assert_eq!(a.dim(), b.dim());
    a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| {
            let denom = (x.dot(&x) * y.dot(&y)).sqrt();
            if denom > 0.0 {
                x.dot(&y) / denom
            } else {
                0.0
            }
        })
        .collect()
}

/// Descending similarity, ascending index on ties.
#[inline]
fn rank_order(sims: &[f64], a: usize, b: usize) -> Ordering {
    sims[b].total_cmp(&sims[a]).then(a.cmp(&b))
}

/// Indices of the `k` largest entries of `sims`, best first.
pub fn top_k(sims: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sims.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k, |&a, &b| rank_order(sims, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&a, &b| rank_order(sims, a, b));
    idx
}

/// Exact `k` nearest rows of `base` for every row of `queries`, by cosine
/// similarity. Ties go to the lower base index. Output row `i` lists the
/// neighbors of query `i` best first.
pub fn knn_cosine(queries: ArrayView2<'_, f64>, base: ArrayView2<'_, f64>, k: usize) -> Vec<Vec<usize>> {
    assert!(k <= base.nrows(), "k larger than base");
    let qn = normalized_rows(queries);
    let bn_t = normalized_rows(base).reversed_axes();
    let n = qn.nrows();
    let blocks: Vec<usize> = (0..n).step_by(KNN_BLOCK).collect();
    blocks
        .into_par_iter()
        .map(|start| {
            let end = (start + KNN_BLOCK).min(n);
            let sims = qn.slice(s![start..end, ..]).dot(&bn_t);
            sims.rows()
                .into_iter()
                .map(|row| {
                    let row = row.to_vec();
                    top_k(&row, k)
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

/// Mean of the listed `base` rows for each neighbor list, summed in list order.
pub fn neighbor_means(neighbors: &[Vec<usize>], base: ArrayView2<'_, f64>) -> Array2<f64> {
    let d = base.ncols();
    let mut out = Array2::<f64>::zeros((neighbors.len(), d));
    for (mut row, list) in out.rows_mut().into_iter().zip(neighbors) {
        for &j in list {
            row += &base.row(j);
        }
        let inv = 1.0 / list.len() as f64;
        row.mapv_inplace(|v| v * inv);
    }
    out
}

pub fn column_mean(x: ArrayView2<'_, f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).expect("non-empty matrix")
}

pub(crate) fn to_nalgebra(m: ArrayView2<'_, f64>) -> DMatrix<f64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Thin SVD `m = U diag(sigma) V^T` of a square matrix.
///
/// Singular values are sorted descending, and each left singular vector is
/// flipped so that its largest-magnitude entry is positive (the matching right
/// vector flips with it). This pins the otherwise arbitrary signs.
pub struct Svd {
    pub u: Array2<f64>,
    pub sigma: Array1<f64>,
    pub v: Array2<f64>,
}

pub fn svd(m: ArrayView2<'_, f64>) -> Svd {
    let nm = to_nalgebra(m);
    let decomp = nm.svd(true, true);
    let u = decomp.u.expect("requested U");
    let v_t = decomp.v_t.expect("requested V^T");
    let sigma = decomp.singular_values;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let rows_u = u.nrows();
    let rows_v = v_t.ncols();
    let mut u_out = Array2::<f64>::zeros((rows_u, order.len()));
    let mut v_out = Array2::<f64>::zeros((rows_v, order.len()));
    let mut s_out = Array1::<f64>::zeros(order.len());
    for (col, &src) in order.iter().enumerate() {
        let mut pivot = 0;
        for i in 0..rows_u {
            if u[(i, src)].abs() > u[(pivot, src)].abs() {
                pivot = i;
            }
        }
        let sign = if u[(pivot, src)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..rows_u {
            u_out[[i, col]] = sign * u[(i, src)];
        }
        for i in 0..rows_v {
            v_out[[i, col]] = sign * v_t[(src, i)];
        }
        s_out[col] = sigma[src];
    }
    Svd { u: u_out, sigma: s_out, v: v_out }
}

/// Largest absolute entry of `W^T W - I`.
pub fn orthogonality_defect(w: ArrayView2<'_, f64>) -> f64 {
    let gram = w.t().dot(&w);
    gram.indexed_iter()
        .map(|((i, j), &v)| if i == j { (v - 1.0).abs() } else { v.abs() })
        .fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(w: ArrayView2<'_, f64>) -> f64 {
    to_nalgebra(w)
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn frobenius_distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    (&a - &b).iter().map(|v| v * v).sum::<f64>().sqrt()
}
