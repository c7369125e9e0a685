//! Fused interval kernels for affine layers with non-negative input
//! intervals:
//!
//! ```text
//! s_lo = max{W_lo, 0} x_lo + min{W_lo, 0} x_hi + b_lo
//! s_hi = min{W_hi, 0} x_lo + max{W_hi, 0} x_hi + b_hi
//! ```
//!
//! The kernels accumulate both weight parts tap-by-tap in the same order as
//! the plain forward kernels, so degenerate intervals (lower == upper)
//! reproduce the plain forward bit-for-bit.

use crate::error::{Error, Result};
use crate::nn::backward_kernels::{conv2d_backward, dense_backward};
use crate::tensor::Tensor;

/// Interval forward through one dense layer followed by ReLU (the
/// component-wise min/max propagation rule for non-negative inputs).
///
/// Shapes: `x_*` is `[n]`, `w_*` is `[m, n]`, `b_*` is `[m]`. Preconditions
/// `0 <= x_lo <= x_hi`, `w_lo <= w_hi`, `b_lo <= b_hi` are enforced.
pub fn interval_layer_forward(
    x_lo: &Tensor,
    x_hi: &Tensor,
    w_lo: &Tensor,
    w_hi: &Tensor,
    b_lo: &Tensor,
    b_hi: &Tensor,
) -> Result<(Tensor, Tensor)> {
    check_ordered_pair("input interval", x_lo, x_hi)?;
    if x_lo.data().iter().any(|&v| v < 0.0) {
        return Err(Error::contract(
            "interval layer input must be non-negative (post-ReLU or [0,1]-scaled)",
        ));
    }
    check_ordered_pair("weight interval", w_lo, w_hi)?;
    check_ordered_pair("bias interval", b_lo, b_hi)?;
    if w_lo.shape().len() != 2
        || w_lo.shape()[1] != x_lo.len()
        || b_lo.len() != w_lo.shape()[0]
    {
        return Err(Error::shape(
            "interval_layer_forward",
            (w_lo.shape(), x_lo.len()),
            b_lo.len(),
        ));
    }
    let (s_lo, s_hi) = interval_dense_forward(x_lo, x_hi, w_lo, w_hi, b_lo, b_hi);
    Ok((s_lo.map(|v| v.max(0.0)), s_hi.map(|v| v.max(0.0))))
}

fn check_ordered_pair(what: &str, lo: &Tensor, hi: &Tensor) -> Result<()> {
    if !lo.same_shape(hi) {
        return Err(Error::shape("interval pair", lo.shape(), hi.shape()));
    }
    for (l, h) in lo.data().iter().zip(hi.data()) {
        if l > h {
            return Err(Error::contract(format!(
                "{what} ordering violated: lower={l} > upper={h}"
            )));
        }
    }
    Ok(())
}

/// Affine part of the interval dense layer (no activation).
pub(crate) fn interval_dense_forward(
    x_lo: &Tensor,
    x_hi: &Tensor,
    w_lo: &Tensor,
    w_hi: &Tensor,
    b_lo: &Tensor,
    b_hi: &Tensor,
) -> (Tensor, Tensor) {
    let out_dim = w_lo.shape()[0];
    let in_dim = w_lo.shape()[1];
    let (xl, xh) = (x_lo.data(), x_hi.data());
    let (wl, wh) = (w_lo.data(), w_hi.data());

    let mut lo = Vec::with_capacity(out_dim);
    let mut hi = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let wl_row = &wl[o * in_dim..(o + 1) * in_dim];
        let wh_row = &wh[o * in_dim..(o + 1) * in_dim];
        let mut acc_lo = b_lo[o];
        let mut acc_hi = b_hi[o];
        for i in 0..in_dim {
            acc_lo += wl_row[i].max(0.0) * xl[i];
            acc_lo += wl_row[i].min(0.0) * xh[i];
            acc_hi += wh_row[i].min(0.0) * xl[i];
            acc_hi += wh_row[i].max(0.0) * xh[i];
        }
        lo.push(acc_lo);
        hi.push(acc_hi);
    }
    (
        Tensor::new(vec![out_dim], lo).unwrap(),
        Tensor::new(vec![out_dim], hi).unwrap(),
    )
}

/// Affine part of the interval convolution (no activation).
pub(crate) fn interval_conv_forward(
    x_lo: &Tensor,
    x_hi: &Tensor,
    w_lo: &Tensor,
    w_hi: &Tensor,
    b_lo: &Tensor,
    b_hi: &Tensor,
    padding: usize,
) -> (Tensor, Tensor) {
    let (cin, h, w) = (x_lo.shape()[0], x_lo.shape()[1], x_lo.shape()[2]);
    let (cout, k) = (w_lo.shape()[0], w_lo.shape()[2]);
    let oh = h + 2 * padding - k + 1;
    let ow = w + 2 * padding - k + 1;

    let (xl, xh) = (x_lo.data(), x_hi.data());
    let (wl, wh) = (w_lo.data(), w_hi.data());
    let mut lo = vec![0.0f64; cout * oh * ow];
    let mut hi = vec![0.0f64; cout * oh * ow];

    for oc in 0..cout {
        let lo_plane = &mut lo[oc * oh * ow..(oc + 1) * oh * ow];
        let hi_plane = &mut hi[oc * oh * ow..(oc + 1) * oh * ow];
        lo_plane.fill(b_lo[oc]);
        hi_plane.fill(b_hi[oc]);
    }

    for oc in 0..cout {
        for ic in 0..cin {
            let xl_plane = &xl[ic * h * w..(ic + 1) * h * w];
            let xh_plane = &xh[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((oc * cin + ic) * k + ky) * k + kx;
                    let (wlp, wln) = (wl[widx].max(0.0), wl[widx].min(0.0));
                    let (whp, whn) = (wh[widx].max(0.0), wh[widx].min(0.0));
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
                        let n = ox1 - ox0;
                        let base = oy * ow + ox0;
                        let xl_row = &xl_plane[iy * w + ix0..iy * w + ix0 + n];
                        let xh_row = &xh_plane[iy * w + ix0..iy * w + ix0 + n];
                        let lo_row = &mut lo[oc * oh * ow + base..oc * oh * ow + base + n];
                        for ((o, a), b) in lo_row.iter_mut().zip(xl_row).zip(xh_row) {
                            *o += wlp * *a;
                            *o += wln * *b;
                        }
                        let hi_row = &mut hi[oc * oh * ow + base..oc * oh * ow + base + n];
                        for ((o, a), b) in hi_row.iter_mut().zip(xl_row).zip(xh_row) {
                            *o += whn * *a;
                            *o += whp * *b;
                        }
                    }
                }
            }
        }
    }

    (
        Tensor::new(vec![cout, oh, ow], lo).unwrap(),
        Tensor::new(vec![cout, oh, ow], hi).unwrap(),
    )
}

/// Gradients of the interval affine outputs w.r.t. the interval weights,
/// biases, and input bounds. Masks route each weight gradient to the
/// positive or negative part it flowed through (subgradient 0 at w == 0).
pub(crate) struct IntervalAffineGrads {
    pub gw_lo: Tensor,
    pub gb_lo: Tensor,
    pub gw_hi: Tensor,
    pub gb_hi: Tensor,
    pub gx_lo: Tensor,
    pub gx_hi: Tensor,
}

pub(crate) fn interval_affine_backward(
    is_conv: bool,
    padding: usize,
    x_lo: &Tensor,
    x_hi: &Tensor,
    w_lo: &Tensor,
    w_hi: &Tensor,
    g_lo: &Tensor,
    g_hi: &Tensor,
) -> IntervalAffineGrads {
    let wlp = w_lo.map(|v| v.max(0.0));
    let wln = w_lo.map(|v| v.min(0.0));
    let whp = w_hi.map(|v| v.max(0.0));
    let whn = w_hi.map(|v| v.min(0.0));

    let back = |x: &Tensor, w: &Tensor, g: &Tensor| -> (Tensor, Tensor, Tensor) {
        if is_conv {
            conv2d_backward(x, w, g, padding)
        } else {
            dense_backward(x, w, g)
        }
    };

    // lo path: s_lo  = wlp * x_lo + wln * x_hi + b_lo
    let (gw_a, gb_lo, gx_lo_a) = back(x_lo, &wlp, g_lo);
    let (gw_b, _, gx_hi_b) = back(x_hi, &wln, g_lo);
    // hi path: s_hi = whn * x_lo + whp * x_hi + b_hi
    let (gw_c, gb_hi, gx_lo_c) = back(x_lo, &whn, g_hi);
    let (gw_d, _, gx_hi_d) = back(x_hi, &whp, g_hi);

    let gw_lo = masked_sum(&gw_a, &gw_b, w_lo);
    let gw_hi = masked_sum(&gw_d, &gw_c, w_hi);
    let gx_lo = gx_lo_a.add(&gx_lo_c).unwrap();
    let gx_hi = gx_hi_b.add(&gx_hi_d).unwrap();

    IntervalAffineGrads {
        gw_lo,
        gb_lo,
        gw_hi,
        gb_hi,
        gx_lo,
        gx_hi,
    }
}

/// Select `pos` where w > 0 and `neg` where w < 0 (zero where w == 0).
fn masked_sum(pos: &Tensor, neg: &Tensor, w: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(w.shape());
    let od = out.data_mut();
    for (i, &wv) in w.data().iter().enumerate() {
        if wv > 0.0 {
            od[i] = pos.data()[i];
        } else if wv < 0.0 {
            od[i] = neg.data()[i];
        }
    }
    out
}
