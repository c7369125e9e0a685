//! Two-headed mean/variance estimation: the output channel count of the
//! prediction network is doubled and trained with a scaled-residual plus
//! log-variance loss. The variance estimate is the uncertainty heatmap.

use crate::error::{Error, Result};
use crate::nn::{forward, init_params, Layer, NetworkParams, NetworkSpec};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

const LN2: f64 = std::f64::consts::LN_2;

/// Positivity decode for the raw variance channel: softplus normalized so
/// that decode(0) = 1. Strictly increasing and smooth.
pub fn decode_variance(raw: f64) -> f64 {
    softplus(raw) / LN2
}

fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

pub(crate) fn decode_variance_deriv(raw: f64) -> f64 {
    // d softplus / dv = sigmoid(v)
    (1.0 / (1.0 + (-raw).exp())) / LN2
}

/// Derive the two-headed spec from a baseline: the final parametric layer
/// doubles its outputs and any layers after it (e.g. a global residual
/// add) are dropped, so the head output is the network output.
pub fn probout_spec_from_baseline(baseline: &NetworkSpec) -> Result<NetworkSpec> {
    let last = *baseline
        .parametric_layers()
        .last()
        .ok_or_else(|| Error::config("baseline network has no parametric layer"))?;
    let mut layers: Vec<Layer> = baseline.layers[..=last].to_vec();
    match &mut layers[last] {
        Layer::Conv { out_channels, .. } => *out_channels *= 2,
        Layer::Dense { output_dim, .. } => *output_dim *= 2,
        _ => unreachable!(),
    }
    NetworkSpec::new(baseline.input_shape.clone(), layers)
}

/// Initialize two-headed parameters from the baseline: trunk copied, head
/// variance rows zeroed (so the decoded variance starts at 1 everywhere).
/// The mean rows copy the baseline head when the head output was the
/// baseline output, otherwise they are freshly initialized.
pub fn probout_init_params(
    baseline_spec: &NetworkSpec,
    baseline: &NetworkParams,
    probout_spec: &NetworkSpec,
    seed: u64,
) -> Result<NetworkParams> {
    baseline.validate_against(baseline_spec)?;
    let last = *probout_spec.parametric_layers().last().unwrap();
    let head_was_output = baseline_spec.layers.len() == last + 1;

    let mut params = init_params(probout_spec, derive_seed(seed, 0xBEEF));
    for i in probout_spec.parametric_layers() {
        if i != last {
            let src = baseline.layer(i).unwrap().clone();
            *params.layer_mut(i).unwrap() = src;
            continue;
        }
        let head = params.layer_mut(i).unwrap();
        let half_w = head.weight.len() / 2;
        let half_b = head.bias.len() / 2;
        if head_was_output {
            let src = baseline.layer(i).unwrap();
            head.weight.data_mut()[..half_w].copy_from_slice(src.weight.data());
            head.bias.data_mut()[..half_b].copy_from_slice(src.bias.data());
        } else {
            // fresh mean rows, scaled down so early training stays stable
            for v in head.weight.data_mut()[..half_w].iter_mut() {
                *v *= 0.1;
            }
            head.bias.data_mut()[..half_b].fill(0.0);
        }
        // variance rows start near zero: decoded variance ~ 1 everywhere,
        // but not exactly constant (a perfectly flat heatmap would make
        // every correlation degenerate if training never improves on the
        // initialization)
        for v in head.weight.data_mut()[half_w..].iter_mut() {
            *v *= 0.01;
        }
        head.bias.data_mut()[half_b..].fill(0.0);
    }
    Ok(params)
}

/// Split the doubled network output into (mean, decoded variance).
pub fn probout_forward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let out = forward(spec, params, input, None)?;
    split_output(&out)
}

pub fn split_output(out: &Tensor) -> Result<(Tensor, Tensor)> {
    let shape = out.shape();
    let (mean, raw, half_shape) = match shape.len() {
        3 => {
            if shape[0] % 2 != 0 {
                return Err(Error::shape("probout output channels", "even", shape));
            }
            let c = shape[0] / 2;
            let plane = shape[1] * shape[2];
            (
                out.data()[..c * plane].to_vec(),
                out.data()[c * plane..].to_vec(),
                vec![c, shape[1], shape[2]],
            )
        }
        1 => {
            if shape[0] % 2 != 0 {
                return Err(Error::shape("probout output dim", "even", shape));
            }
            let n = shape[0] / 2;
            (
                out.data()[..n].to_vec(),
                out.data()[n..].to_vec(),
                vec![n],
            )
        }
        _ => return Err(Error::shape("probout output", "[2c,h,w] or [2n]", shape)),
    };
    let mean = Tensor::new(half_shape.clone(), mean)?;
    let variance = Tensor::new(half_shape, raw.into_iter().map(decode_variance).collect())?;
    Ok((mean, variance))
}

/// Scaled residual plus L1 log-variance loss:
///
/// ```text
/// || (target - mean) / sqrt(var) ||_2^2 + || log var ||_1
/// ```
pub fn probout_loss(mean: &Tensor, variance: &Tensor, target: &Tensor) -> Result<f64> {
    if !mean.same_shape(target) || !variance.same_shape(target) {
        return Err(Error::shape(
            "probout_loss",
            target.shape(),
            (mean.shape(), variance.shape()),
        ));
    }
    let mut loss = 0.0;
    for ((&m, &v), &t) in mean.data().iter().zip(variance.data()).zip(target.data()) {
        if v <= 0.0 {
            return Err(Error::contract(format!(
                "probout variance must be positive, got {v}"
            )));
        }
        let r = t - m;
        loss += r * r / v + v.ln().abs();
    }
    Ok(loss)
}

/// Gradient of [`probout_loss`] w.r.t. the raw (pre-decode) network output,
/// assembled as a doubled tensor matching the network's output layout.
pub fn probout_output_grad(raw_output: &Tensor, target: &Tensor) -> Result<Tensor> {
    let (mean, variance) = split_output(raw_output)?;
    if !mean.same_shape(target) {
        return Err(Error::shape("probout target", mean.shape(), target.shape()));
    }
    let n = target.len();
    let half = raw_output.len() / 2;
    let mut grad = vec![0.0f64; raw_output.len()];
    for i in 0..n {
        let (m, v, t) = (mean[i], variance[i], target[i]);
        let r = t - m;
        // d/dmean
        grad[i] = -2.0 * r / v;
        // d/dvar, chained through the softplus decode
        let dvar = -r * r / (v * v) + sign(v.ln()) / v;
        grad[half + i] = dvar * decode_variance_deriv(raw_output[half + i]);
    }
    Tensor::new(raw_output.shape().to_vec(), grad)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_calibration_point_and_monotonicity() {
        assert!((decode_variance(0.0) - 1.0).abs() < 1e-15);
        let mut prev = decode_variance(-8.0);
        assert!(prev > 0.0);
        for i in -79..80 {
            let v = decode_variance(i as f64 / 10.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn loss_is_zero_at_perfect_fit_with_unit_variance() {
        let t = Tensor::from_vec(vec![0.3, 0.6, 0.9]);
        let v = Tensor::full(&[3], 1.0);
        assert_eq!(probout_loss(&t, &v, &t).unwrap(), 0.0);
    }

    #[test]
    fn log_variance_term_counts_pixels() {
        let n = 7;
        let t = Tensor::full(&[n], 0.5);
        let v = Tensor::full(&[n], std::f64::consts::E);
        let loss = probout_loss(&t, &v, &t).unwrap();
        assert!((loss - n as f64).abs() < 1e-12);
    }

    #[test]
    fn unit_scaled_residual_counts_pixels() {
        let n = 5;
        let t = Tensor::full(&[n], 0.75);
        let m = t.map(|v| v - 1.0); // mean - target = -sqrt(var) with var = 1
        let v = Tensor::full(&[n], 1.0);
        let loss = probout_loss(&m, &v, &t).unwrap();
        assert!((loss - n as f64).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_variance_is_a_contract_error() {
        let t = Tensor::from_vec(vec![0.1]);
        let v = Tensor::from_vec(vec![0.0]);
        assert!(matches!(
            probout_loss(&t, &v, &t),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn doubled_spec_drops_trailing_residual_and_doubles_head() {
        let baseline = NetworkSpec::new(
            vec![1, 6, 6],
            vec![
                Layer::Conv {
                    in_channels: 1,
                    out_channels: 4,
                    kernel: 3,
                    padding: 1,
                },
                Layer::Relu,
                Layer::Conv {
                    in_channels: 4,
                    out_channels: 1,
                    kernel: 3,
                    padding: 1,
                },
                Layer::SkipAdd { from: 0 },
            ],
        )
        .unwrap();
        let two_headed = probout_spec_from_baseline(&baseline).unwrap();
        assert_eq!(two_headed.layers.len(), 3);
        assert_eq!(two_headed.output_shape().unwrap(), vec![2, 6, 6]);
    }

    #[test]
    fn initial_variance_is_near_one_everywhere() {
        let baseline_spec = NetworkSpec::new(
            vec![1, 6, 6],
            vec![
                Layer::Conv {
                    in_channels: 1,
                    out_channels: 4,
                    kernel: 3,
                    padding: 1,
                },
                Layer::Relu,
                Layer::Conv {
                    in_channels: 4,
                    out_channels: 1,
                    kernel: 3,
                    padding: 1,
                },
            ],
        )
        .unwrap();
        let baseline = crate::nn::init_params(&baseline_spec, 5);
        let spec2 = probout_spec_from_baseline(&baseline_spec).unwrap();
        let params2 = probout_init_params(&baseline_spec, &baseline, &spec2, 9).unwrap();
        let input = Tensor::new(vec![1, 6, 6], (0..36).map(|i| i as f64 / 40.0).collect()).unwrap();
        let (mean, var) = probout_forward(&spec2, &params2, &input).unwrap();
        assert!(var.data().iter().all(|&v| (v - 1.0).abs() < 0.05));
        // head copied: mean equals baseline output (head was the output)
        let base_out = forward(&baseline_spec, &baseline, &input, None).unwrap();
        assert_eq!(mean, base_out);
        // heatmap is the decoded variance tensor itself
        assert_eq!(var.shape(), mean.shape());
    }
}
