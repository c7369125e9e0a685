//! Measurement noise models.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Standard deviation on the [0, 1] intensity scale.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn gaussian(sigma: f64, seed: u64) -> Result<Self> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(Error::config(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(NoiseModel {
            kind: NoiseKind::Gaussian,
            sigma,
            seed,
        })
    }
}

/// Additive noise, deterministic given the model seed. No clipping: the
/// task pipelines clip to [0, 1] where their contracts require it.
pub fn add_noise(image: &Tensor, model: &NoiseModel) -> Result<Tensor> {
    if model.sigma == 0.0 {
        return Ok(image.clone());
    }
    let mut rng = rng_from_seed(model.seed);
    let normal = Normal::new(0.0, model.sigma)
        .map_err(|e| Error::config(format!("bad noise sigma: {e}")))?;
    let data = image
        .data()
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    Tensor::new(image.shape().to_vec(), data)
}
