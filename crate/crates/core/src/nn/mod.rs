//! Feed-forward layer sequences: specs, parameters, dropout masks, init.
//!
//! Networks are flat layer lists. Skip connections are expressed as
//! `SkipAdd { from }` layers that add a previously computed activation
//! (index 0 is the network input, index i+1 the output of layer i), which
//! is enough for residual denoisers and encoder-decoder reconstructors
//! without a general graph.

mod backward;
mod forward;
mod optim;

pub use backward::{backward, ParamGrads};
pub use forward::{forward, forward_traced, ForwardTrace};
pub use optim::{sgd_step, Adam, AdamConfig};

/// Raw layer kernels shared with the interval module.
pub(crate) mod backward_kernels {
    pub(crate) use super::backward::{
        avg_pool_backward as avg_pool_backward_k, conv2d_backward, dense_backward,
        upsample_backward as upsample_backward_k,
    };
    #[allow(unused_imports)]
    pub(crate) use super::forward::{avg_pool_forward, dense_forward, upsample_forward};
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// One layer of a feed-forward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense {
        input_dim: usize,
        output_dim: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    /// Average pooling by an integer factor.
    AvgPool {
        factor: usize,
    },
    /// Nearest-neighbour upsampling by an integer factor.
    Upsample {
        factor: usize,
    },
    /// Adds activation `from` (0 = network input) to the current activation.
    SkipAdd {
        from: usize,
    },
}

impl Layer {
    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv { .. })
    }

    pub fn is_dropout(&self) -> bool {
        matches!(self, Layer::Dropout { .. })
    }
}

/// An ordered layer sequence with a fixed input shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let spec = NetworkSpec {
            input_shape,
            layers,
        };
        spec.activation_shapes()?;
        Ok(spec)
    }

    /// Shapes of all activations (input first, final output last).
    ///
    /// Fails if adjacent layers do not compose.
    pub fn activation_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().unwrap().clone();
            let next = match layer {
                Layer::Dense {
                    input_dim,
                    output_dim,
                } => {
                    if cur != vec![*input_dim] {
                        return Err(Error::shape("dense layer input", vec![*input_dim], cur));
                    }
                    vec![*output_dim]
                }
                Layer::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                } => {
                    if cur.len() != 3 || cur[0] != *in_channels {
                        return Err(Error::shape(
                            "conv layer input",
                            format!("[{in_channels}, h, w]"),
                            cur,
                        ));
                    }
                    let (h, w) = (cur[1], cur[2]);
                    let span = h + 2 * padding;
                    if *kernel == 0 || span + 1 <= *kernel || w + 2 * padding + 1 <= *kernel {
                        return Err(Error::config(format!(
                            "conv kernel {kernel} too large for input {cur:?} with padding {padding}"
                        )));
                    }
                    vec![
                        *out_channels,
                        h + 2 * padding - kernel + 1,
                        w + 2 * padding - kernel + 1,
                    ]
                }
                Layer::Relu => cur,
                Layer::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::config(format!(
                            "dropout rate {rate} outside [0, 1)"
                        )));
                    }
                    cur
                }
                Layer::AvgPool { factor } => {
                    if cur.len() != 3 {
                        return Err(Error::shape("avg_pool input", "[c, h, w]", cur));
                    }
                    if *factor == 0 || cur[1] % factor != 0 || cur[2] % factor != 0 {
                        return Err(Error::config(format!(
                            "avg_pool factor {factor} does not divide {cur:?}"
                        )));
                    }
                    vec![cur[0], cur[1] / factor, cur[2] / factor]
                }
                Layer::Upsample { factor } => {
                    if cur.len() != 3 {
                        return Err(Error::shape("upsample input", "[c, h, w]", cur));
                    }
                    if *factor == 0 {
                        return Err(Error::config("upsample factor must be positive"));
                    }
                    vec![cur[0], cur[1] * factor, cur[2] * factor]
                }
                Layer::SkipAdd { from } => {
                    if *from > i {
                        return Err(Error::config(format!(
                            "skip_add at layer {i} references later activation {from}"
                        )));
                    }
                    if shapes[*from] != cur {
                        return Err(Error::shape("skip_add operands", &shapes[*from], cur));
                    }
                    cur
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.activation_shapes()?.pop().unwrap())
    }

    /// Indices of parametric (dense/conv) layers, in order.
    pub fn parametric_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.has_params())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn num_dropout_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.is_dropout()).count()
    }
}

/// Weight/bias pair of one parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// All parameters of a network, aligned with its layer list.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<Option<LayerParams>>,
}

impl NetworkParams {
    pub fn from_layers(layers: Vec<Option<LayerParams>>) -> Self {
        NetworkParams { layers }
    }

    pub fn layer(&self, i: usize) -> Option<&LayerParams> {
        self.layers.get(i).and_then(|l| l.as_ref())
    }

    pub fn layer_mut(&mut self, i: usize) -> Option<&mut LayerParams> {
        self.layers.get_mut(i).and_then(|l| l.as_mut())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Flat view over all parameter tensors, layer order, weight before bias.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|lp| [&lp.weight, &lp.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flatten()
            .flat_map(|lp| [&mut lp.weight, &mut lp.bias])
            .collect()
    }

    /// Mutable tensor views restricted to the listed layer indices.
    pub fn tensors_mut_for(&mut self, layers: &[usize]) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .enumerate()
            .filter(|(i, l)| l.is_some() && layers.contains(i))
            .flat_map(|(_, l)| {
                let lp = l.as_mut().unwrap();
                [&mut lp.weight, &mut lp.bias]
            })
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Check that parameter shapes match the spec.
    pub fn validate_against(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::shape(
                "params layer count",
                spec.layers.len(),
                self.layers.len(),
            ));
        }
        for (i, layer) in spec.layers.iter().enumerate() {
            match (layer, &self.layers[i]) {
                (
                    Layer::Dense {
                        input_dim,
                        output_dim,
                    },
                    Some(lp),
                ) => {
                    if lp.weight.shape() != [*output_dim, *input_dim]
                        || lp.bias.shape() != [*output_dim]
                    {
                        return Err(Error::shape(
                            "dense params",
                            (output_dim, input_dim),
                            (lp.weight.shape(), lp.bias.shape()),
                        ));
                    }
                }
                (
                    Layer::Conv {
                        in_channels,
                        out_channels,
                        kernel,
                        ..
                    },
                    Some(lp),
                ) => {
                    if lp.weight.shape() != [*out_channels, *in_channels, *kernel, *kernel]
                        || lp.bias.shape() != [*out_channels]
                    {
                        return Err(Error::shape(
                            "conv params",
                            (out_channels, in_channels, kernel),
                            (lp.weight.shape(), lp.bias.shape()),
                        ));
                    }
                }
                (l, Some(_)) if !l.has_params() => {
                    return Err(Error::config(format!(
                        "layer {i} ({l:?}) cannot carry parameters"
                    )));
                }
                (l, None) if l.has_params() => {
                    return Err(Error::config(format!("layer {i} ({l:?}) missing parameters")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// He-normal initialization, deterministic in the seed.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> NetworkParams {
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let lp = match layer {
            Layer::Dense {
                input_dim,
                output_dim,
            } => {
                let std = (2.0 / *input_dim as f64).sqrt();
                Some(LayerParams {
                    weight: gaussian_tensor(&[*output_dim, *input_dim], std, derive_seed(seed, i as u64)),
                    bias: Tensor::zeros(&[*output_dim]),
                })
            }
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let fan_in = in_channels * kernel * kernel;
                let std = (2.0 / fan_in as f64).sqrt();
                Some(LayerParams {
                    weight: gaussian_tensor(
                        &[*out_channels, *in_channels, *kernel, *kernel],
                        std,
                        derive_seed(seed, i as u64),
                    ),
                    bias: Tensor::zeros(&[*out_channels]),
                })
            }
            _ => None,
        };
        layers.push(lp);
    }
    NetworkParams { layers }
}

fn gaussian_tensor(shape: &[usize], std: f64, seed: u64) -> Tensor {
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, std).unwrap();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| normal.sample(&mut rng)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Per-layer binary dropout masks (entries in {0, 1}), aligned to the spec.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    masks: Vec<Option<Tensor>>,
}

impl DropoutMasks {
    /// Sample one mask per dropout layer, deterministic in the seed.
    pub fn sample(spec: &NetworkSpec, seed: u64) -> Result<DropoutMasks> {
        let shapes = spec.activation_shapes()?;
        let mut masks = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            if let Layer::Dropout { rate } = layer {
                let mut rng = rng_from_seed(derive_seed(seed, i as u64));
                let n: usize = shapes[i].iter().product();
                let data = (0..n)
                    .map(|_| if rng.gen::<f64>() < *rate { 0.0 } else { 1.0 })
                    .collect();
                masks.push(Some(Tensor::new(shapes[i].clone(), data).unwrap()));
            } else {
                masks.push(None);
            }
        }
        Ok(DropoutMasks { masks })
    }

    pub fn mask_for(&self, layer: usize) -> Option<&Tensor> {
        self.masks.get(layer).and_then(|m| m.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_spec() -> NetworkSpec {
        NetworkSpec::new(
            vec![1, 8, 8],
            vec![
                Layer::Conv {
                    in_channels: 1,
                    out_channels: 4,
                    kernel: 3,
                    padding: 1,
                },
                Layer::Relu,
                Layer::Dropout { rate: 0.5 },
                Layer::Conv {
                    in_channels: 4,
                    out_channels: 1,
                    kernel: 3,
                    padding: 1,
                },
                Layer::SkipAdd { from: 0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn shape_inference_composes() {
        let spec = conv_spec();
        let shapes = spec.activation_shapes().unwrap();
        assert_eq!(shapes[0], vec![1, 8, 8]);
        assert_eq!(shapes[1], vec![4, 8, 8]);
        assert_eq!(shapes.last().unwrap(), &vec![1, 8, 8]);
    }

    #[test]
    fn bad_compositions_are_rejected() {
        // dense after conv without matching shape
        assert!(NetworkSpec::new(
            vec![1, 8, 8],
            vec![Layer::Dense {
                input_dim: 10,
                output_dim: 2
            }]
        )
        .is_err());
        // dropout rate 1.0 is invalid
        assert!(NetworkSpec::new(vec![4], vec![Layer::Dropout { rate: 1.0 }]).is_err());
        // skip_add against a mismatched shape
        assert!(NetworkSpec::new(
            vec![1, 8, 8],
            vec![
                Layer::Conv {
                    in_channels: 1,
                    out_channels: 2,
                    kernel: 3,
                    padding: 1
                },
                Layer::SkipAdd { from: 0 },
            ]
        )
        .is_err());
        // pool factor must divide the extent
        assert!(NetworkSpec::new(vec![1, 9, 9], vec![Layer::AvgPool { factor: 2 }]).is_err());
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let spec = conv_spec();
        let a = init_params(&spec, 11);
        let b = init_params(&spec, 11);
        let c = init_params(&spec, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate_against(&spec).unwrap();
        assert_eq!(a.layer(0).unwrap().weight.shape(), &[4, 1, 3, 3]);
    }

    #[test]
    fn dropout_masks_are_binary_and_seeded() {
        let spec = conv_spec();
        let m1 = DropoutMasks::sample(&spec, 5).unwrap();
        let m2 = DropoutMasks::sample(&spec, 5).unwrap();
        let mask = m1.mask_for(2).unwrap();
        assert!(mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(mask.data(), m2.mask_for(2).unwrap().data());
        assert!(m1.mask_for(0).is_none());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = conv_spec();
        let s = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec, back);
    }
}
