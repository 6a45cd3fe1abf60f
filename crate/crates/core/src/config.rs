//! Hyperparameters for the alignment pipeline.

use serde::{Deserialize, Serialize};

use crate::error::AlignError;

/// Every knob of the pipeline. Serialized field names match the CLI flags with
/// the dashes removed, so a JSON config file and the command line share keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Clusters per anchor-discovery run.
    pub c: usize,
    /// Relative-space neighbors averaged into each pseudo-pair target.
    pub k: usize,
    /// Number of anchor-discovery runs whose relative representations are concatenated.
    pub s: usize,
    /// Refine-1 iterations.
    pub t: usize,
    /// Exponential smoothing weight for transformation updates.
    pub alpha: f64,
    /// Ambient-space neighbors averaged in Refine-1.
    #[serde(rename = "kprime")]
    pub k_prime: usize,
    /// Clusters used by Refine-2.
    #[serde(rename = "cprime")]
    pub c_prime: usize,
    /// Rows sampled from the source pool on each Refine-1 iteration.
    #[serde(rename = "nsample")]
    pub n_sample: usize,
    #[serde(rename = "qaprestarts")]
    pub qap_restarts: usize,
    #[serde(rename = "refine2iters")]
    pub refine2_iterations: usize,
    /// k-means++ initializations per anchor-discovery clustering; the one with
    /// the lowest inertia is kept.
    #[serde(rename = "kmeansinits")]
    pub kmeans_inits: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            c: 20,
            k: 50,
            s: 30,
            t: 100,
            alpha: 0.5,
            k_prime: 50,
            c_prime: 500,
            n_sample: 10_000,
            qap_restarts: 30,
            refine2_iterations: 1,
            kmeans_inits: 10,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Scaled-down settings that finish in seconds on pools of a few thousand rows.
    pub fn small() -> Self {
        Self {
            c: 10,
            k: 20,
            s: 10,
            t: 50,
            k_prime: 20,
            c_prime: 100,
            n_sample: 2000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        let counts = [
            ("c", self.c),
            ("k", self.k),
            ("s", self.s),
            ("t", self.t),
            ("k-prime", self.k_prime),
            ("c-prime", self.c_prime),
            ("n-sample", self.n_sample),
            ("qap-restarts", self.qap_restarts),
            ("refine2-iters", self.refine2_iterations),
            ("kmeans-inits", self.kmeans_inits),
        ];
        for (field, value) in counts {
            if value == 0 {
                return Err(AlignError::InvalidConfig {
                    field,
                    reason: "must be at least 1".into(),
                });
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(AlignError::InvalidConfig {
                field: "alpha",
                reason: format!("{} is outside (0, 1]", self.alpha),
            });
        }
        Ok(())
    }
}

/// A partial config, as read from a JSON file or collected from flags.
/// Unset fields fall through to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub c: Option<usize>,
    pub k: Option<usize>,
    pub s: Option<usize>,
    pub t: Option<usize>,
    pub alpha: Option<f64>,
    pub kprime: Option<usize>,
    pub cprime: Option<usize>,
    pub nsample: Option<usize>,
    pub qaprestarts: Option<usize>,
    pub refine2iters: Option<usize>,
    pub kmeansinits: Option<usize>,
    pub seed: Option<u64>,
}

impl ConfigOverrides {
    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        PipelineConfig {
            c: self.c.unwrap_or(base.c),
            k: self.k.unwrap_or(base.k),
            s: self.s.unwrap_or(base.s),
            t: self.t.unwrap_or(base.t),
            alpha: self.alpha.unwrap_or(base.alpha),
            k_prime: self.kprime.unwrap_or(base.k_prime),
            c_prime: self.cprime.unwrap_or(base.c_prime),
            n_sample: self.nsample.unwrap_or(base.n_sample),
            qap_restarts: self.qaprestarts.unwrap_or(base.qap_restarts),
            refine2_iterations: self.refine2iters.unwrap_or(base.refine2_iterations),
            kmeans_inits: self.kmeansinits.unwrap_or(base.kmeans_inits),
            seed: self.seed.unwrap_or(base.seed),
        }
    }
}
