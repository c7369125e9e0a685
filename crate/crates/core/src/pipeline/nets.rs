//! Desk-scale architectures for the two tasks.

use crate::config::{CtTaskConfig, DenoiseTaskConfig};
use crate::error::Result;
use crate::nn::{Layer, NetworkSpec};

/// Fully-convolutional residual denoiser: `conv_layers` convolutions with
/// ReLU in between, dropout after every other convolution, and a global
/// skip from the input to the output.
pub fn denoise_spec(cfg: &DenoiseTaskConfig) -> Result<NetworkSpec> {
    let c = cfg.channels;
    let n = cfg.conv_layers;
    let mut layers = Vec::new();
    for i in 0..n {
        let (cin, cout) = match i {
            0 => (1, c),
            i if i == n - 1 => (c, 1),
            _ => (c, c),
        };
        layers.push(Layer::Conv {
            in_channels: cin,
            out_channels: cout,
            kernel: 3,
            padding: 1,
        });
        if i < n - 1 {
            layers.push(Layer::Relu);
            // dropout after every other convolution
            if i % 2 == 1 && cfg.dropout_rate > 0.0 {
                layers.push(Layer::Dropout {
                    rate: cfg.dropout_rate,
                });
            }
        }
    }
    layers.push(Layer::SkipAdd { from: 0 });
    NetworkSpec::new(vec![1, cfg.image_size, cfg.image_size], layers)
}

/// Three-scale convolutional encoder-decoder with additive skip
/// connections and dropout after each down-/up-sampling step.
pub fn ct_spec(cfg: &CtTaskConfig) -> Result<NetworkSpec> {
    let c = cfg.base_channels;
    let r = cfg.dropout_rate;
    let conv = |cin: usize, cout: usize| Layer::Conv {
        in_channels: cin,
        out_channels: cout,
        kernel: 3,
        padding: 1,
    };
    let mut layers = Vec::new();
    // encoder
    layers.push(conv(1, c)); // L0
    layers.push(Layer::Relu); // act2 = c @ s
    layers.push(Layer::AvgPool { factor: 2 });
    layers.push(Layer::Dropout { rate: r });
    layers.push(conv(c, 2 * c)); // L4
    layers.push(Layer::Relu); // act6 = 2c @ s/2
    layers.push(Layer::AvgPool { factor: 2 });
    layers.push(Layer::Dropout { rate: r });
    // bottleneck
    layers.push(conv(2 * c, 2 * c)); // L8
    layers.push(Layer::Relu);
    // decoder
    layers.push(Layer::Upsample { factor: 2 });
    layers.push(Layer::Dropout { rate: r });
    layers.push(Layer::SkipAdd { from: 6 });
    layers.push(conv(2 * c, c)); // L13
    layers.push(Layer::Relu);
    layers.push(Layer::Upsample { factor: 2 });
    layers.push(Layer::Dropout { rate: r });
    layers.push(Layer::SkipAdd { from: 2 });
    layers.push(conv(c, 1)); // L18
    NetworkSpec::new(vec![1, cfg.image_size, cfg.image_size], layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    #[test]
    fn denoise_net_is_image_to_image() {
        let cfg = ExperimentConfig::desk_default();
        let spec = denoise_spec(&cfg.denoise).unwrap();
        assert_eq!(spec.output_shape().unwrap(), spec.input_shape);
        assert_eq!(spec.parametric_layers().len(), cfg.denoise.conv_layers);
        assert_eq!(spec.num_dropout_layers(), 2);
    }

    #[test]
    fn ct_net_is_image_to_image_with_three_scales() {
        let cfg = ExperimentConfig::desk_default();
        let spec = ct_spec(&cfg.ct).unwrap();
        assert_eq!(spec.output_shape().unwrap(), spec.input_shape);
        assert_eq!(spec.parametric_layers().len(), 5);
        assert_eq!(spec.num_dropout_layers(), 4);
        // shapes at the bottleneck are a quarter of the input side
        let shapes = spec.activation_shapes().unwrap();
        assert!(shapes.iter().any(|s| s == &vec![
            2 * cfg.ct.base_channels,
            cfg.ct.image_size / 4,
            cfg.ct.image_size / 4
        ]));
    }

    #[test]
    fn interval_entry_sits_after_a_relu_for_default_k() {
        // the interval suffix must start on a non-negative activation
        let cfg = ExperimentConfig::desk_default();
        for spec in [denoise_spec(&cfg.denoise).unwrap(), ct_spec(&cfg.ct).unwrap()] {
            let params = crate::nn::init_params(&spec, 0);
            let ip = crate::interval::IntervalParams::degenerate(params, 3);
            let entry = ip.entry_layer(&spec);
            assert!(entry > 0);
            // every conv input in the suffix is reachable only through
            // relu/pool/upsample/skip chains; spot-check via a forward run
            let input = crate::tensor::Tensor::full(&spec.input_shape, 0.5);
            crate::interval::inn_forward(&spec, &ip, &input).unwrap();
        }
    }
}
