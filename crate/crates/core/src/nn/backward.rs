//! Reverse-mode gradients through a recorded forward trace.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{ForwardTrace, Layer, LayerParams, NetworkParams, NetworkSpec};

/// Gradients share the parameter layout.
pub type ParamGrads = NetworkParams;

/// Backpropagate `loss_grad` (gradient of a scalar loss w.r.t. the network
/// output) through the trace. Returns parameter gradients in the
/// [`NetworkParams`] layout and the gradient w.r.t. the network input.
///
/// The ReLU subgradient at exactly zero is taken to be zero.
pub fn backward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    trace: &ForwardTrace,
    loss_grad: &Tensor,
) -> Result<(ParamGrads, Tensor)> {
    if trace.activations.len() != spec.layers.len() + 1
        || trace.activations[0].shape() != spec.input_shape.as_slice()
    {
        return Err(Error::contract(
            "forward trace does not match the network spec; run forward_traced first",
        ));
    }
    let out_shape = trace.activations.last().unwrap().shape();
    if loss_grad.shape() != out_shape {
        return Err(Error::shape("loss gradient", out_shape, loss_grad.shape()));
    }

    let n = spec.layers.len();
    // gradient w.r.t. each activation; skip connections accumulate here
    let mut act_grads: Vec<Option<Tensor>> = vec![None; n + 1];
    act_grads[n] = Some(loss_grad.clone());

    let mut grad_layers: Vec<Option<LayerParams>> = vec![None; n];

    for i in (0..n).rev() {
        let g_out = match act_grads[i + 1].take() {
            Some(g) => g,
            // this activation feeds nothing (can happen only for the output,
            // which is seeded above), so nothing flows here
            None => continue,
        };
        let x = &trace.activations[i];
        match &spec.layers[i] {
            Layer::Dense { .. } => {
                let lp = params.layer(i).unwrap();
                let (gw, gb, gx) = dense_backward(x, &lp.weight, &g_out);
                grad_layers[i] = Some(LayerParams {
                    weight: gw,
                    bias: gb,
                });
                accumulate(&mut act_grads[i], gx)?;
            }
            Layer::Conv { padding, .. } => {
                let lp = params.layer(i).unwrap();
                let (gw, gb, gx) = conv2d_backward(x, &lp.weight, &g_out, *padding);
                grad_layers[i] = Some(LayerParams {
                    weight: gw,
                    bias: gb,
                });
                accumulate(&mut act_grads[i], gx)?;
            }
            Layer::Relu => {
                let gx = g_out.zip_map(x, |g, v| if v > 0.0 { g } else { 0.0 })?;
                accumulate(&mut act_grads[i], gx)?;
            }
            Layer::Dropout { rate } => {
                let gx = match trace.masks.as_ref().and_then(|m| m.mask_for(i)) {
                    Some(mask) => g_out.zip_map(mask, |g, m| (g * m) / (1.0 - rate))?,
                    None => g_out,
                };
                accumulate(&mut act_grads[i], gx)?;
            }
            Layer::AvgPool { factor } => {
                let gx = avg_pool_backward(&g_out, x.shape(), *factor);
                accumulate(&mut act_grads[i], gx)?;
            }
            Layer::Upsample { factor } => {
                let gx = upsample_backward(&g_out, x.shape(), *factor);
                accumulate(&mut act_grads[i], gx)?;
            }
            Layer::SkipAdd { from } => {
                accumulate(&mut act_grads[*from], g_out.clone())?;
                accumulate(&mut act_grads[i], g_out)?;
            }
        }
    }

    let grad_input = act_grads[0]
        .take()
        .unwrap_or_else(|| Tensor::zeros(&spec.input_shape));
    Ok((NetworkParams::from_layers(grad_layers), grad_input))
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    match slot {
        Some(acc) => acc.axpy(1.0, &g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

pub(crate) fn dense_backward(x: &Tensor, weight: &Tensor, g_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let out_dim = weight.shape()[0];
    let in_dim = weight.shape()[1];
    let xd = x.data();
    let wd = weight.data();
    let gd = g_out.data();

    let mut gw = vec![0.0f64; out_dim * in_dim];
    let mut gx = vec![0.0f64; in_dim];
    for o in 0..out_dim {
        let g = gd[o];
        let wrow = &wd[o * in_dim..(o + 1) * in_dim];
        let gwrow = &mut gw[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            gwrow[i] = g * xd[i];
            gx[i] += g * wrow[i];
        }
    }
    (
        Tensor::new(vec![out_dim, in_dim], gw).unwrap(),
        g_out.clone().reshape(&[out_dim]).unwrap(),
        Tensor::new(vec![in_dim], gx).unwrap(),
    )
}

pub(crate) fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    g_out: &Tensor,
    padding: usize,
) -> (Tensor, Tensor, Tensor) {
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, k) = (weight.shape()[0], weight.shape()[2]);
    let (oh, ow) = (g_out.shape()[1], g_out.shape()[2]);

    let xd = x.data();
    let wd = weight.data();
    let gd = g_out.data();

    let ranges = |ky: usize, kx: usize| {
        let dy = ky as isize - padding as isize;
        let dx = kx as isize - padding as isize;
        let oy0 = (-dy).max(0) as usize;
        let oy1 = (h as isize - dy).min(oh as isize).max(0) as usize;
        let ox0 = (-dx).max(0) as usize;
        let ox1 = (w as isize - dx).min(ow as isize).max(0) as usize;
        (dy, dx, oy0, oy1, ox0, ox1)
    };

    // weight and bias gradients: disjoint per output channel
    let mut gw = vec![0.0f64; cout * cin * k * k];
    let mut gb = vec![0.0f64; cout];
    let wgrad_channel = |oc: usize, gw_oc: &mut [f64], gb_oc: &mut f64| {
        let g_plane = &gd[oc * oh * ow..(oc + 1) * oh * ow];
        *gb_oc = g_plane.iter().sum();
        for ic in 0..cin {
            let in_plane = &xd[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let (dy, dx, oy0, oy1, ox0, ox1) = ranges(ky, kx);
                    if oy0 >= oy1 || ox0 >= ox1 {
                        continue;
                    }
                    let mut wacc = 0.0f64;
                    for oy in oy0..oy1 {
                        let iy = (oy as isize + dy) as usize;
                        let ix0 = (ox0 as isize + dx) as usize;
                        let grow = &g_plane[oy * ow + ox0..oy * ow + ox1];
                        let irow = &in_plane[iy * w + ix0..iy * w + ix0 + (ox1 - ox0)];
                        for (g, i) in grow.iter().zip(irow) {
                            wacc += g * i;
                        }
                    }
                    gw_oc[(ic * k + ky) * k + kx] = wacc;
                }
            }
        }
    };

    // input gradient: disjoint per input channel
    let mut gx = vec![0.0f64; cin * h * w];
    let xgrad_channel = |ic: usize, gx_plane: &mut [f64]| {
        for oc in 0..cout {
            let g_plane = &gd[oc * oh * ow..(oc + 1) * oh * ow];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wd[((oc * cin + ic) * k + ky) * k + kx];
                    let (dy, dx, oy0, oy1, ox0, ox1) = ranges(ky, kx);
                    if oy0 >= oy1 || ox0 >= ox1 {
                        continue;
                    }
                    for oy in oy0..oy1 {
                        let iy = (oy as isize + dy) as usize;
                        let ix0 = (ox0 as isize + dx) as usize;
                        let grow = &g_plane[oy * ow + ox0..oy * ow + ox1];
                        let gxrow = &mut gx_plane[iy * w + ix0..iy * w + ix0 + (ox1 - ox0)];
                        for (g, gx_v) in grow.iter().zip(gxrow) {
                            *gx_v += wv * g;
                        }
                    }
                }
            }
        }
    };

    let macs = cout * cin * k * k * oh * ow;
    if macs >= super::forward::PAR_MAC_THRESHOLD
        && cout > 1
        && cin > 1
        && rayon::current_thread_index().is_none()
    {
        use rayon::prelude::*;
        gw.par_chunks_mut(cin * k * k)
            .zip(gb.par_iter_mut())
            .enumerate()
            .for_each(|(oc, (gw_oc, gb_oc))| wgrad_channel(oc, gw_oc, gb_oc));
        gx.par_chunks_mut(h * w)
            .enumerate()
            .for_each(|(ic, plane)| xgrad_channel(ic, plane));
    } else {
        for oc in 0..cout {
            let (gw_oc, gb_oc) = (
                &mut gw[oc * cin * k * k..(oc + 1) * cin * k * k],
                &mut gb[oc],
            );
            wgrad_channel(oc, gw_oc, gb_oc);
        }
        for (ic, plane) in gx.chunks_mut(h * w).enumerate() {
            xgrad_channel(ic, plane);
        }
    }

    (
        Tensor::new(vec![cout, cin, k, k], gw).unwrap(),
        Tensor::new(vec![cout], gb).unwrap(),
        Tensor::new(vec![cin, h, w], gx).unwrap(),
    )
}

pub(crate) fn avg_pool_backward(g_out: &Tensor, in_shape: &[usize], f: usize) -> Tensor {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (h / f, w / f);
    let inv = 1.0 / (f * f) as f64;
    let gd = g_out.data();
    let mut gx = vec![0.0f64; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            let grow = (ch * oh + y / f) * ow;
            let xrow = (ch * h + y) * w;
            for x in 0..w {
                gx[xrow + x] = gd[grow + x / f] * inv;
            }
        }
    }
    Tensor::new(in_shape.to_vec(), gx).unwrap()
}

pub(crate) fn upsample_backward(g_out: &Tensor, in_shape: &[usize], f: usize) -> Tensor {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (h * f, w * f);
    let gd = g_out.data();
    let mut gx = vec![0.0f64; c * h * w];
    for ch in 0..c {
        for oy in 0..oh {
            let src = (ch * oh + oy) * ow;
            let dst = (ch * h + oy / f) * w;
            for ox in 0..ow {
                gx[dst + ox / f] += gd[src + ox];
            }
        }
    }
    Tensor::new(in_shape.to_vec(), gx).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{forward_traced, init_params};

    #[test]
    fn hand_computed_dense_gradients() {
        // out = relu(w * x), loss = out^2, w = 1, x = 2
        // dloss/dout = 2*out = 4; dloss/dw = 4*x = 8; dloss/dx = 4*w = 4
        let spec = NetworkSpec::new(
            vec![1],
            vec![
                Layer::Dense {
                    input_dim: 1,
                    output_dim: 1,
                },
                Layer::Relu,
            ],
        )
        .unwrap();
        let params = NetworkParams::from_layers(vec![
            Some(LayerParams {
                weight: Tensor::new(vec![1, 1], vec![1.0]).unwrap(),
                bias: Tensor::new(vec![1], vec![0.0]).unwrap(),
            }),
            None,
        ]);
        let input = Tensor::from_vec(vec![2.0]);
        let trace = forward_traced(&spec, &params, &input, None).unwrap();
        let out = trace.output()[0];
        let loss_grad = Tensor::from_vec(vec![2.0 * out]);
        let (grads, gin) = backward(&spec, &params, &trace, &loss_grad).unwrap();
        assert_eq!(grads.layer(0).unwrap().weight.data(), &[8.0]);
        assert_eq!(gin.data(), &[4.0]);
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradients() {
        let spec = NetworkSpec::new(
            vec![1, 6, 6],
            vec![
                Layer::Conv {
                    in_channels: 1,
                    out_channels: 3,
                    kernel: 3,
                    padding: 1,
                },
                Layer::Relu,
                Layer::Conv {
                    in_channels: 3,
                    out_channels: 1,
                    kernel: 3,
                    padding: 1,
                },
            ],
        )
        .unwrap();
        let params = init_params(&spec, 4);
        let input = Tensor::new(vec![1, 6, 6], (0..36).map(|i| (i as f64).cos()).collect()).unwrap();
        let trace = forward_traced(&spec, &params, &input, None).unwrap();
        let (grads, gin) = backward(&spec, &params, &trace, &Tensor::zeros(&[1, 6, 6])).unwrap();
        for t in grads.tensors() {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
        assert!(gin.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_trace() {
        let spec_a = NetworkSpec::new(
            vec![2],
            vec![Layer::Dense {
                input_dim: 2,
                output_dim: 2,
            }],
        )
        .unwrap();
        let spec_b = NetworkSpec::new(vec![2], vec![Layer::Relu, Layer::Relu]).unwrap();
        let params_a = init_params(&spec_a, 0);
        let trace = forward_traced(
            &spec_a,
            &params_a,
            &Tensor::from_vec(vec![1.0, -1.0]),
            None,
        )
        .unwrap();
        // a trace recorded for spec_a is unusable with a different spec
        let err = backward(
            &spec_b,
            &init_params(&spec_b, 0),
            &ForwardTrace {
                activations: trace.activations[..1].to_vec(),
                masks: None,
            },
            &Tensor::from_vec(vec![0.0, 0.0]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
