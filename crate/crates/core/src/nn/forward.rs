//! Forward evaluation of layer sequences, with an optional recorded trace.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{DropoutMasks, Layer, NetworkParams, NetworkSpec};

/// All activations of one forward pass plus the dropout masks it used.
///
/// Activation 0 is the network input; activation i+1 is the output of
/// layer i. [`backward`](super::backward) consumes this record.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub(crate) activations: Vec<Tensor>,
    pub(crate) masks: Option<DropoutMasks>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().unwrap()
    }

    pub fn activation(&self, index: usize) -> &Tensor {
        &self.activations[index]
    }
}

/// Run the network. Dropout layers act as identity when `masks` is `None`
/// (inference mode); otherwise the provided binary masks are applied with
/// inverted scaling.
pub fn forward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &Tensor,
    masks: Option<&DropoutMasks>,
) -> Result<Tensor> {
    let trace = forward_traced(spec, params, input, masks)?;
    Ok(trace.activations.into_iter().last().unwrap())
}

/// Run the network and keep the full activation trace.
pub fn forward_traced(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &Tensor,
    masks: Option<&DropoutMasks>,
) -> Result<ForwardTrace> {
    if input.shape() != spec.input_shape.as_slice() {
        return Err(Error::shape(
            "network input",
            &spec.input_shape,
            input.shape(),
        ));
    }
    params.validate_against(spec)?;

    let mut activations = Vec::with_capacity(spec.layers.len() + 1);
    activations.push(input.clone());
    for (i, layer) in spec.layers.iter().enumerate() {
        let x = activations.last().unwrap();
        let out = match layer {
            Layer::Dense { .. } => {
                let lp = params.layer(i).unwrap();
                dense_forward(x, &lp.weight, &lp.bias)
            }
            Layer::Conv { padding, .. } => {
                let lp = params.layer(i).unwrap();
                conv2d_forward(x, &lp.weight, &lp.bias, *padding)
            }
            Layer::Relu => x.map(|v| v.max(0.0)),
            Layer::Dropout { rate } => match masks.and_then(|m| m.mask_for(i)) {
                Some(mask) => apply_dropout(x, mask, 1.0 - rate)?,
                None => x.clone(),
            },
            Layer::AvgPool { factor } => avg_pool_forward(x, *factor),
            Layer::Upsample { factor } => upsample_forward(x, *factor),
            Layer::SkipAdd { from } => x.add(&activations[*from])?,
        };
        activations.push(out);
    }

    Ok(ForwardTrace {
        activations,
        masks: masks.cloned(),
    })
}

fn apply_dropout(x: &Tensor, mask: &Tensor, keep: f64) -> Result<Tensor> {
    x.zip_map(mask, |v, m| (v * m) / keep)
}

pub(crate) fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let out_dim = weight.shape()[0];
    let in_dim = weight.shape()[1];
    let xd = x.data();
    let wd = weight.data();
    let mut out = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let row = &wd[o * in_dim..(o + 1) * in_dim];
        let mut acc = bias[o];
        for (wv, xv) in row.iter().zip(xd) {
            acc += wv * xv;
        }
        out.push(acc);
    }
    Tensor::new(vec![out_dim], out).unwrap()
}

/// Channel work is farmed out to rayon only above this size; results are
/// identical either way because output channels are disjoint.
pub(crate) const PAR_MAC_THRESHOLD: usize = 1 << 21;

/// 2-D convolution with zero padding, stride 1.
///
/// Shift-and-accumulate over kernel taps: the inner loop is a contiguous
/// fused multiply-add which the compiler vectorizes. Large layers run
/// output channels in parallel.
pub(crate) fn conv2d_forward(x: &Tensor, weight: &Tensor, bias: &Tensor, padding: usize) -> Tensor {
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, k) = (weight.shape()[0], weight.shape()[2]);
    let oh = h + 2 * padding - k + 1;
    let ow = w + 2 * padding - k + 1;

    let xd = x.data();
    let wd = weight.data();
    let mut out = vec![0.0f64; cout * oh * ow];

    let per_channel = |oc: usize, out_plane: &mut [f64]| {
        out_plane.fill(bias[oc]);
        for ic in 0..cin {
            let in_plane = &xd[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wd[((oc * cin + ic) * k + ky) * k + kx];
                    let dy = ky as isize - padding as isize;
                    let dx = kx as isize - padding as isize;
                    let oy0 = (-dy).max(0) as usize;
                    let oy1 = (h as isize - dy).min(oh as isize).max(0) as usize;
                    let ox0 = (-dx).max(0) as usize;
                    let ox1 = (w as isize - dx).min(ow as isize).max(0) as usize;
                    if oy0 >= oy1 || ox0 >= ox1 {
                        continue;
                    }
                    for oy in oy0..oy1 {
                        let iy = (oy as isize + dy) as usize;
                        let ix0 = (ox0 as isize + dx) as usize;
                        let orow = &mut out_plane[oy * ow + ox0..oy * ow + ox1];
                        let irow = &in_plane[iy * w + ix0..iy * w + ix0 + (ox1 - ox0)];
                        for (o, i) in orow.iter_mut().zip(irow) {
                            *o += wv * *i;
                        }
                    }
                }
            }
        }
    };

    // inner parallelism only outside an existing rayon scope (training
    // already fans out over batch samples; nesting just adds overhead)
    if cout * cin * k * k * oh * ow >= PAR_MAC_THRESHOLD
        && cout > 1
        && rayon::current_thread_index().is_none()
    {
        use rayon::prelude::*;
        out.par_chunks_mut(oh * ow)
            .enumerate()
            .for_each(|(oc, plane)| per_channel(oc, plane));
    } else {
        for (oc, plane) in out.chunks_mut(oh * ow).enumerate() {
            per_channel(oc, plane);
        }
    }

    Tensor::new(vec![cout, oh, ow], out).unwrap()
}

pub(crate) fn avg_pool_forward(x: &Tensor, f: usize) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / f, w / f);
    let inv = 1.0 / (f * f) as f64;
    let xd = x.data();
    let mut out = vec![0.0f64; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..f {
                    let row = (ch * h + oy * f + dy) * w + ox * f;
                    for dx in 0..f {
                        acc += xd[row + dx];
                    }
                }
                out[(ch * oh + oy) * ow + ox] = acc * inv;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out).unwrap()
}

pub(crate) fn upsample_forward(x: &Tensor, f: usize) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h * f, w * f);
    let xd = x.data();
    let mut out = vec![0.0f64; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            let src_row = (ch * h + oy / f) * w;
            let dst_row = (ch * oh + oy) * ow;
            for ox in 0..ow {
                out[dst_row + ox] = xd[src_row + ox / f];
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out).unwrap()
}
