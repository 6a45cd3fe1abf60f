//! Fixtures shared by the benchmarks, built from the core generator so the
//! kernels see clustered, embedding-like data.

use embalign_core::preprocess::center_and_normalize;
use embalign_core::synth::{synth_generate, SynthSpec};
use embalign_core::{centroid_similarity, kmeans_fit, InitSpec, SimilarityMatrix};
use ndarray::Array2;

/// Centered, normalized source and target pools of `n` rows each.
pub fn pools(n: usize, d: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let spec = SynthSpec { n, d, components: 20.min(n), eval_pairs: 1, seed, ..SynthSpec::default() };
    let data = synth_generate(&spec).expect("valid synth spec");
    let (xa, _) = center_and_normalize(&data.xa).expect("non-degenerate pool");
    let (xb, _) = center_and_normalize(&data.xb).expect("non-degenerate pool");
    (xa.into_data(), xb.into_data())
}

/// Centroid similarity matrices of both pools at `c` clusters.
pub fn similarity_pair(c: usize, seed: u64) -> (SimilarityMatrix, SimilarityMatrix) {
    let (xa, xb) = pools(1000, 32, seed);
    let sim = |x: &Array2<f64>, s| {
        let k = kmeans_fit(x.view(), c, &InitSpec::PlusPlus, s, 300).expect("clusterable pool");
        centroid_similarity(k.centroids.view()).expect("non-zero centroids")
    };
    (sim(&xa, seed), sim(&xb, seed + 1))
}
