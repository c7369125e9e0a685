//! Interval-arithmetic networks: per-parameter [lower, central, upper]
//! triples propagated to per-pixel output bounds, the associated training
//! loss, and the bound-width uncertainty heatmap.
//!
//! Propagation assumes each affine layer receives a non-negative input
//! interval, which holds by construction here: interval mode starts at the
//! network input (scaled to [0, 1]) or immediately after a ReLU, and every
//! non-affine layer in between (pooling, upsampling, skip additions of
//! post-ReLU activations) preserves non-negativity.

mod forward;
mod kernels;
mod train;

pub use forward::{inn_forward, inn_forward_traced, IntervalTrace};
pub use kernels::interval_layer_forward;
pub use train::{inn_loss, inn_loss_grads, inn_param_grads, InnTrainer};

use crate::error::{Error, Result};
use crate::nn::{NetworkParams, NetworkSpec};
use crate::tensor::Tensor;

/// Lower/central/upper parameter triple plus the number of trailing
/// parametric layers propagated with interval arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalParams {
    lower: NetworkParams,
    central: NetworkParams,
    upper: NetworkParams,
    interval_layers: usize,
}

impl IntervalParams {
    /// Zero-width intervals around a trained central network.
    pub fn degenerate(central: NetworkParams, interval_layers: usize) -> Self {
        IntervalParams {
            lower: central.clone(),
            upper: central.clone(),
            central,
            interval_layers,
        }
    }

    pub fn from_parts(
        lower: NetworkParams,
        central: NetworkParams,
        upper: NetworkParams,
        interval_layers: usize,
        spec: &NetworkSpec,
    ) -> Result<Self> {
        lower.validate_against(spec)?;
        central.validate_against(spec)?;
        upper.validate_against(spec)?;
        let ip = IntervalParams {
            lower,
            central,
            upper,
            interval_layers,
        };
        ip.check_ordering()?;
        Ok(ip)
    }

    pub fn lower(&self) -> &NetworkParams {
        &self.lower
    }

    pub fn central(&self) -> &NetworkParams {
        &self.central
    }

    pub fn upper(&self) -> &NetworkParams {
        &self.upper
    }

    pub fn interval_layers(&self) -> usize {
        self.interval_layers
    }

    /// Layer index at which interval propagation starts.
    pub fn entry_layer(&self, spec: &NetworkSpec) -> usize {
        let parametric = spec.parametric_layers();
        if self.interval_layers >= parametric.len() {
            0
        } else {
            parametric[parametric.len() - self.interval_layers]
        }
    }

    /// Verify lower <= central <= upper elementwise.
    pub fn check_ordering(&self) -> Result<()> {
        for ((lo, c), hi) in self
            .lower
            .tensors()
            .iter()
            .zip(self.central.tensors())
            .zip(self.upper.tensors())
        {
            for ((l, c), h) in lo.data().iter().zip(c.data()).zip(hi.data()) {
                if !(l <= c && c <= h) {
                    return Err(Error::contract(format!(
                        "interval parameter ordering violated: lower={l}, central={c}, upper={h}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Clip lower/upper so the ordering invariant holds after an
    /// unconstrained optimizer step.
    pub fn project(&mut self) {
        let centrals: Vec<Tensor> = self.central.tensors().into_iter().cloned().collect();
        for (lo, c) in self.lower.tensors_mut().into_iter().zip(&centrals) {
            for (l, &cv) in lo.data_mut().iter_mut().zip(c.data()) {
                if *l > cv {
                    *l = cv;
                }
            }
        }
        for (hi, c) in self.upper.tensors_mut().into_iter().zip(&centrals) {
            for (h, &cv) in hi.data_mut().iter_mut().zip(c.data()) {
                if *h < cv {
                    *h = cv;
                }
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn lower_mut(&mut self) -> &mut NetworkParams {
        &mut self.lower
    }

    #[cfg(test)]
    pub(crate) fn upper_mut(&mut self) -> &mut NetworkParams {
        &mut self.upper
    }

    /// Direct mutable access to the bound parameter sets. Callers that
    /// break the ordering invariant must restore it (see [`Self::project`])
    /// before propagating intervals.
    pub fn bounds_mut(&mut self) -> (&mut NetworkParams, &mut NetworkParams) {
        (&mut self.lower, &mut self.upper)
    }

    /// Grow every interval symmetrically by `margin >= 0` on the interval
    /// layers (useful for tests and width warm starts).
    pub fn widen(&mut self, spec: &NetworkSpec, margin: f64) {
        let parametric = spec.parametric_layers();
        let start = parametric.len().saturating_sub(self.interval_layers);
        for &i in &parametric[start..] {
            if let Some(lp) = self.lower.layer_mut(i) {
                for v in lp.weight.data_mut().iter_mut().chain(lp.bias.data_mut()) {
                    *v -= margin;
                }
            }
            if let Some(lp) = self.upper.layer_mut(i) {
                for v in lp.weight.data_mut().iter_mut().chain(lp.bias.data_mut()) {
                    *v += margin;
                }
            }
        }
    }
}

/// Central prediction plus elementwise output bounds.
#[derive(Debug, Clone)]
pub struct IntervalPrediction {
    pub central: Tensor,
    pub lower: Tensor,
    pub upper: Tensor,
}

impl IntervalPrediction {
    pub fn new(central: Tensor, lower: Tensor, upper: Tensor) -> Result<Self> {
        if !central.same_shape(&lower) || !central.same_shape(&upper) {
            return Err(Error::shape(
                "interval prediction",
                central.shape(),
                (lower.shape(), upper.shape()),
            ));
        }
        for ((l, c), h) in lower.data().iter().zip(central.data()).zip(upper.data()) {
            if !(l <= c && c <= h) {
                return Err(Error::contract(format!(
                    "interval prediction ordering violated: lower={l}, central={c}, upper={h}"
                )));
            }
        }
        Ok(IntervalPrediction {
            central,
            lower,
            upper,
        })
    }
}

/// Bound-width heatmap: upper - lower, elementwise non-negative.
pub fn inn_uncertainty(pred: &IntervalPrediction) -> Tensor {
    pred.upper
        .zip_map(&pred.lower, |u, l| (u - l).max(0.0))
        .expect("IntervalPrediction invariant guarantees matching shapes")
}
