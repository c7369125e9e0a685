//! Monte-Carlo dropout: pixel-wise sample variance over stochastic
//! forward passes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{forward, DropoutMasks, NetworkParams, NetworkSpec};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

/// Pass count and mask seed. Per-layer dropout rates are part of the
/// network spec itself.
#[derive(Debug, Clone, Copy)]
pub struct McDropConfig {
    /// Number of stochastic forward passes (>= 2).
    pub passes: usize,
    pub seed: u64,
}

/// Mean prediction and variance heatmap over `passes` stochastic passes:
///
/// ```text
/// u = (1 / (T-1)) * ( sum_t out_t^2 - (1/T) (sum_t out_t)^2 )
/// ```
///
/// clamped to be non-negative (the subtraction can leave -1e-12-scale
/// dust). Pass t draws its masks from a stream derived from
/// `(seed, t)`, so the result is independent of evaluation order.
pub fn mcdrop_uncertainty(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &Tensor,
    cfg: &McDropConfig,
) -> Result<(Tensor, Tensor)> {
    let order: Vec<usize> = (0..cfg.passes).collect();
    mcdrop_with_order(spec, params, input, cfg, &order)
}

/// Internal variant taking an explicit pass evaluation order; accumulation
/// is always by pass index, which makes the heatmap order-invariant.
pub(crate) fn mcdrop_with_order(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &Tensor,
    cfg: &McDropConfig,
    order: &[usize],
) -> Result<(Tensor, Tensor)> {
    if cfg.passes < 2 {
        return Err(Error::config(format!(
            "MCDrop needs at least 2 passes for a sample variance, got {}",
            cfg.passes
        )));
    }
    if order.len() != cfg.passes {
        return Err(Error::config("pass order must cover every pass"));
    }

    let mut outputs: Vec<Option<Tensor>> = vec![None; cfg.passes];
    let computed: Vec<(usize, Result<Tensor>)> = order
        .par_iter()
        .map(|&t| {
            let run = || {
                let masks = DropoutMasks::sample(spec, derive_seed(cfg.seed, t as u64))?;
                forward(spec, params, input, Some(&masks))
            };
            (t, run())
        })
        .collect();
    for (t, r) in computed {
        outputs[t] = Some(r?);
    }

    let shape = outputs[0].as_ref().unwrap().shape().to_vec();
    let n = outputs[0].as_ref().unwrap().len();
    let mut sum = vec![0.0f64; n];
    let mut sum_sq = vec![0.0f64; n];
    for out in outputs.iter().flatten() {
        for (i, &v) in out.data().iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }

    let t = cfg.passes as f64;
    let mut heat = vec![0.0f64; n];
    for i in 0..n {
        let raw = (sum_sq[i] - sum[i] * sum[i] / t) / (t - 1.0);
        heat[i] = raw.max(0.0);
    }
    let mean = Tensor::new(shape.clone(), sum.into_iter().map(|v| v / t).collect())?;
    Ok((mean, Tensor::new(shape, heat)?))
}
