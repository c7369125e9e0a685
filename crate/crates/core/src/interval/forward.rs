//! Whole-network interval propagation.
//!
//! Layers before the entry point run the plain central forward; the entry
//! activation then seeds a degenerate interval which the trailing layers
//! propagate with interval arithmetic. Skip connections whose source lies
//! in the plain prefix contribute degenerate intervals.

use crate::error::{Error, Result};
use crate::nn::backward_kernels::{avg_pool_forward, upsample_forward};
use crate::nn::{forward_traced, ForwardTrace, Layer, NetworkSpec};
use crate::tensor::Tensor;

use super::kernels::{interval_conv_forward, interval_dense_forward};
use super::{IntervalParams, IntervalPrediction};

/// Everything needed to differentiate the bounds: the central trace plus
/// the interval activation pairs from the entry point onward.
#[derive(Debug)]
pub struct IntervalTrace {
    pub(crate) entry: usize,
    pub(crate) central: ForwardTrace,
    /// acts[j] = interval activation with index entry + j; acts[0] is the
    /// (degenerate) entry activation.
    pub(crate) acts: Vec<(Tensor, Tensor)>,
}

impl IntervalTrace {
    /// Interval activation by absolute activation index (degenerate for
    /// prefix activations).
    pub(crate) fn interval_activation(&self, index: usize) -> (Tensor, Tensor) {
        if index < self.entry {
            let a = self.central.activation(index).clone();
            (a.clone(), a)
        } else {
            self.acts[index - self.entry].clone()
        }
    }

    /// Output bounds exactly as propagated, before the float-dust
    /// reconciliation with the central output.
    pub fn raw_bounds(&self) -> (&Tensor, &Tensor) {
        let (lo, hi) = self.acts.last().unwrap();
        (lo, hi)
    }
}

const INPUT_RANGE_TOL: f64 = 1e-9;

/// Propagate interval bounds for a [0, 1]-scaled input.
pub fn inn_forward(
    spec: &NetworkSpec,
    iparams: &IntervalParams,
    input: &Tensor,
) -> Result<IntervalPrediction> {
    Ok(inn_forward_traced(spec, iparams, input)?.0)
}

/// As [`inn_forward`], additionally returning the trace used for training.
pub fn inn_forward_traced(
    spec: &NetworkSpec,
    iparams: &IntervalParams,
    input: &Tensor,
) -> Result<(IntervalPrediction, IntervalTrace)> {
    for &v in input.data() {
        if !(-INPUT_RANGE_TOL..=1.0 + INPUT_RANGE_TOL).contains(&v) {
            return Err(Error::contract(format!(
                "interval network input must lie in [0, 1] (tolerance {INPUT_RANGE_TOL}), got {v}"
            )));
        }
    }

    let central = forward_traced(spec, iparams.central(), input, None)?;
    let entry = iparams.entry_layer(spec);

    let seed = central.activation(entry).clone();
    if seed.data().iter().any(|&v| v < 0.0) {
        return Err(Error::contract(
            "interval entry activation must be non-negative; place the entry after a ReLU",
        ));
    }
    let mut acts: Vec<(Tensor, Tensor)> = vec![(seed.clone(), seed)];

    for (i, layer) in spec.layers.iter().enumerate().skip(entry) {
        let (x_lo, x_hi) = {
            let (lo, hi) = &acts[i - entry];
            (lo.clone(), hi.clone())
        };
        let next = match layer {
            Layer::Dense { .. } => {
                check_nonnegative_input(&x_lo, i)?;
                let lo_p = iparams.lower().layer(i).unwrap();
                let hi_p = iparams.upper().layer(i).unwrap();
                interval_dense_forward(&x_lo, &x_hi, &lo_p.weight, &hi_p.weight, &lo_p.bias, &hi_p.bias)
            }
            Layer::Conv { padding, .. } => {
                check_nonnegative_input(&x_lo, i)?;
                let lo_p = iparams.lower().layer(i).unwrap();
                let hi_p = iparams.upper().layer(i).unwrap();
                interval_conv_forward(
                    &x_lo,
                    &x_hi,
                    &lo_p.weight,
                    &hi_p.weight,
                    &lo_p.bias,
                    &hi_p.bias,
                    *padding,
                )
            }
            Layer::Relu => (x_lo.map(|v| v.max(0.0)), x_hi.map(|v| v.max(0.0))),
            // no stochastic dropout on the interval branch
            Layer::Dropout { .. } => (x_lo, x_hi),
            Layer::AvgPool { factor } => (
                avg_pool_forward(&x_lo, *factor),
                avg_pool_forward(&x_hi, *factor),
            ),
            Layer::Upsample { factor } => (
                upsample_forward(&x_lo, *factor),
                upsample_forward(&x_hi, *factor),
            ),
            Layer::SkipAdd { from } => {
                if *from < entry {
                    let src = central.activation(*from);
                    (x_lo.add(src)?, x_hi.add(src)?)
                } else {
                    let (src_lo, src_hi) = &acts[*from - entry];
                    (x_lo.add(src_lo)?, x_hi.add(src_hi)?)
                }
            }
        };
        acts.push(next);
    }

    let trace = IntervalTrace {
        entry,
        central,
        acts,
    };
    let (raw_lo, raw_hi) = trace.raw_bounds();
    let central_out = trace.central.output();
    // reconcile float dust: the central network lies inside the parameter
    // box, so ordering holds mathematically; rounding may break it by ulps
    let lower = raw_lo.zip_map(central_out, |l, c| l.min(c))?;
    let upper = raw_hi.zip_map(central_out, |h, c| h.max(c))?;
    let pred = IntervalPrediction::new(central_out.clone(), lower, upper)?;
    Ok((pred, trace))
}

fn check_nonnegative_input(x_lo: &Tensor, layer: usize) -> Result<()> {
    if x_lo.data().iter().any(|&v| v < 0.0) {
        return Err(Error::contract(format!(
            "interval affine layer {layer} received a signed input interval"
        )));
    }
    Ok(())
}
