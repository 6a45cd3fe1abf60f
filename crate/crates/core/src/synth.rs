//! Synthetic embedding pools with a known ground-truth relation.
//!
//! Points are drawn from a Gaussian mixture whose components have randomly
//! oriented anisotropic covariances. The "A view" of a
//! point is the point itself; the "B view" is `scale * ((x + noise) Q) + t`
//! for a random orthogonal `Q`, translation `t` and global scale. Training
//! pools for A and B come from disjoint sets of points, while the evaluation
//! points appear in both views, row-aligned.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::AlignError;
use crate::linalg::from_nalgebra;
use crate::rng::{derive_seed, rng_from_seed};

/// Typical norm of a point's offset from its component center.
const COMPONENT_SPREAD: f64 = 0.35;

/// Power-law decay of the per-coordinate variance of component centers.
const CENTER_DECAY: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Rows per training pool.
    pub n: usize,
    pub d: usize,
    pub components: usize,
    /// Per-coordinate standard deviation of the noise added to the B view.
    pub noise_sigma: f64,
    /// Log-scale spread of each component's principal standard deviations; 0
    /// gives isotropic components.
    pub anisotropy: f64,
    pub seed: u64,
    /// Held-out points present in both views.
    pub eval_pairs: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { n: 4000, d: 64, components: 20, noise_sigma: 0.01, anisotropy: 1.0, seed: 0, eval_pairs: 500 }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), AlignError> {
        let fail = |msg: String| Err(AlignError::SpecInvalid(msg));
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        if self.d < 2 {
            return fail(format!("d = {} must be at least 2", self.d));
        }
        if self.components == 0 || self.components > self.n {
            return fail(format!("components = {} must be in 1..={}", self.components, self.n));
        }
        if self.eval_pairs == 0 {
            return fail("eval-pairs must be at least 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise = {} must be finite and non-negative", self.noise_sigma));
        }
        if !(self.anisotropy >= 0.0 && self.anisotropy.is_finite()) {
            return fail(format!("anisotropy = {} must be finite and non-negative", self.anisotropy));
        }
        Ok(())
    }
}

/// The map taking an A-view point to its noiseless B view: `scale * (x Q) + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rotation: Array2<f64>,
    pub translation: Array1<f64>,
    pub scale: f64,
}

impl GroundTruth {
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.rotation) * self.scale + &self.translation
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub xa: EmbeddingMatrix,
    pub xb: EmbeddingMatrix,
    pub eval_a: EmbeddingMatrix,
    pub eval_b: EmbeddingMatrix,
    pub truth: GroundTruth,
    /// Generator-internal identity of the underlying point behind each row.
    pub ids_a: Vec<usize>,
    pub ids_b: Vec<usize>,
    pub ids_eval: Vec<usize>,
    /// Mixture component of each row.
    pub labels_a: Vec<usize>,
    pub labels_b: Vec<usize>,
    pub labels_eval: Vec<usize>,
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
/// of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(d: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    from_nalgebra(&q)
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData, AlignError> {
    spec.validate()?;
    let SynthSpec { n, d, components, noise_sigma, anisotropy, seed, eval_pairs } = *spec;

    // Component centers on the unit sphere. Coordinate j of the raw draw has
    // variance (j + 1)^-CENTER_DECAY, so the centers share a few dominant
    // directions the way real embeddings do, while every direction keeps
    // some signal.
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let mut centers = Array2::<f64>::zeros((components, d));
    for mut row in centers.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *v = z * ((j + 1) as f64).powf(-0.5 * CENTER_DECAY);
        }
        let norm = row.dot(&row).sqrt();
        row.mapv_inplace(|v| v / norm);
    }
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let raw_weights: Vec<f64> = (0..components).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw_weights.iter().sum();
    let cumulative: Vec<f64> = raw_weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();

    // Each component has log-normal principal spreads along its own random
    // orthonormal axes, so no subspace is rotation-invariant.
    let base = COMPONENT_SPREAD / (d as f64).sqrt();
    let stds = Array2::from_shape_simple_fn((components, d), || {
        let z: f64 = rng.sample(StandardNormal);
        base * (anisotropy * z).exp()
    });
    let axes_seed = derive_seed(seed, 7);
    let axes: Vec<Array2<f64>> =
        (0..components).map(|k| random_orthogonal(d, derive_seed(axes_seed, k as u64))).collect();

    // Ground truth.
    let rotation = random_orthogonal(d, derive_seed(seed, 2));
    let mut rng = rng_from_seed(derive_seed(seed, 3));
    let translation: Array1<f64> = (0..d).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt()).collect();
    let scale = rng.random_range(0.5..2.0);
    let truth = GroundTruth { rotation, translation, scale };

    // Underlying points.
    let total_points = 2 * n + eval_pairs;
    let mut rng = rng_from_seed(derive_seed(seed, 4));
    let mut labels = Vec::with_capacity(total_points);
    let mut points = Array2::<f64>::zeros((total_points, d));
    for mut row in points.rows_mut() {
        let u: f64 = rng.random();
        let comp = cumulative.iter().position(|&c| u < c).unwrap_or(components - 1);
        labels.push(comp);
        let z: Array1<f64> = (0..d).map(|j| stds[[comp, j]] * rng.sample::<f64, _>(StandardNormal)).collect();
        row.assign(&(&centers.row(comp) + &z.dot(&axes[comp])));
    }

    // Eval points are the last `eval_pairs` ids; the rest are split A/B,
    // stratified by component so both pools see the same mixture.
    let ids_eval: Vec<usize> = (2 * n..total_points).collect();
    let mut rng = rng_from_seed(derive_seed(seed, 6));
    let mut train: Vec<usize> = (0..2 * n).collect();
    train.shuffle(&mut rng);
    train.sort_by_key(|&i| labels[i]);
    let (mut ids_a, mut ids_b): (Vec<usize>, Vec<usize>) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (pos, &id) in train.iter().enumerate() {
        if pos % 2 == 0 {
            ids_a.push(id);
        } else {
            ids_b.push(id);
        }
    }
    ids_a.sort_unstable();
    ids_b.sort_unstable();

    // B view: noise in the underlying units, then the ground-truth map.
    let mut rng = rng_from_seed(derive_seed(seed, 5));
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| AlignError::SpecInvalid(e.to_string()))?;
    let mut noisy = points.clone();
    if noise_sigma > 0.0 {
        noisy.mapv_inplace(|v| v + noise.sample(&mut rng));
    }
    let b_view = truth.apply(noisy.view());

    let pick = |src: &Array2<f64>, ids: &[usize], label: &str| EmbeddingMatrix::new(src.select(Axis(0), ids), label);
    Ok(SynthData {
        xa: pick(&points, &ids_a, "synth-A")?,
        xb: pick(&b_view, &ids_b, "synth-B")?,
        eval_a: pick(&points, &ids_eval, "synth-evalA")?,
        eval_b: pick(&b_view, &ids_eval, "synth-evalB")?,
        labels_a: ids_a.iter().map(|&i| labels[i]).collect(),
        labels_b: ids_b.iter().map(|&i| labels[i]).collect(),
        labels_eval: ids_eval.iter().map(|&i| labels[i]).collect(),
        truth,
        ids_a,
        ids_b,
        ids_eval,
    })
}
