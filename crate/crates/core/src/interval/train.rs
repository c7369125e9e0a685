//! Interval-network training: the two-sided hinge + width loss, its
//! gradients, and the projected fine-tuning step over the bound parameters
//! (the central network stays frozen).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Layer, LayerParams, NetworkSpec};
use crate::tensor::Tensor;

use super::kernels::interval_affine_backward;
use super::{inn_forward_traced, IntervalParams, IntervalPrediction, IntervalTrace};

/// Two-sided hinge loss on the bounds plus an L1 width penalty:
///
/// ```text
/// || max{target - upper, 0} ||_2^2 + || max{lower - target, 0} ||_2^2
///   + beta * || upper - lower ||_1
/// ```
pub fn inn_loss(pred: &IntervalPrediction, target: &Tensor, beta: f64) -> Result<f64> {
    if beta <= 0.0 {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    loss_on_bounds(&pred.lower, &pred.upper, target, beta)
}

fn loss_on_bounds(lower: &Tensor, upper: &Tensor, target: &Tensor, beta: f64) -> Result<f64> {
    if !lower.same_shape(target) || !upper.same_shape(target) {
        return Err(Error::shape(
            "inn_loss",
            target.shape(),
            (lower.shape(), upper.shape()),
        ));
    }
    let mut loss = 0.0;
    for ((&l, &u), &t) in lower.data().iter().zip(upper.data()).zip(target.data()) {
        let over = (t - u).max(0.0);
        let under = (l - t).max(0.0);
        loss += over * over + under * under + beta * (u - l).abs();
    }
    Ok(loss)
}

/// Gradients of [`inn_loss`] w.r.t. the lower and upper bound tensors.
pub fn inn_loss_grads(
    lower: &Tensor,
    upper: &Tensor,
    target: &Tensor,
    beta: f64,
) -> Result<(Tensor, Tensor)> {
    if !lower.same_shape(target) || !upper.same_shape(target) {
        return Err(Error::shape(
            "inn_loss_grads",
            target.shape(),
            (lower.shape(), upper.shape()),
        ));
    }
    let n = target.len();
    let mut g_lo = vec![0.0f64; n];
    let mut g_hi = vec![0.0f64; n];
    for i in 0..n {
        let (l, u, t) = (lower[i], upper[i], target[i]);
        // d/du of (t - u)_+^2 and of beta |u - l|
        g_hi[i] = -2.0 * (t - u).max(0.0) + beta * sign(u - l);
        g_lo[i] = 2.0 * (l - t).max(0.0) - beta * sign(u - l);
    }
    Ok((
        Tensor::new(target.shape().to_vec(), g_lo).unwrap(),
        Tensor::new(target.shape().to_vec(), g_hi).unwrap(),
    ))
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

/// Gradients of a bound loss w.r.t. the lower/upper parameters of the
/// interval suffix, in [`IntervalParams`] layout (prefix entries are None).
pub(crate) struct IntervalGrads {
    pub lower: Vec<Option<LayerParams>>,
    pub upper: Vec<Option<LayerParams>>,
}

pub(crate) fn inn_backward(
    spec: &NetworkSpec,
    iparams: &IntervalParams,
    trace: &IntervalTrace,
    g_lo_out: &Tensor,
    g_hi_out: &Tensor,
) -> Result<IntervalGrads> {
    let n = spec.layers.len();
    let entry = trace.entry;
    let mut grads_lo: Vec<Option<LayerParams>> = vec![None; n];
    let mut grads_hi: Vec<Option<LayerParams>> = vec![None; n];
    // gradient pairs per activation index (offset by entry)
    let mut act_grads: Vec<Option<(Tensor, Tensor)>> = vec![None; n + 1 - entry];
    *act_grads.last_mut().unwrap() = Some((g_lo_out.clone(), g_hi_out.clone()));

    for i in (entry..n).rev() {
        let (g_lo, g_hi) = match act_grads[i + 1 - entry].take() {
            Some(g) => g,
            None => continue,
        };
        let (x_lo, x_hi) = trace.interval_activation(i);
        match &spec.layers[i] {
            Layer::Dense { .. } | Layer::Conv { .. } => {
                let (is_conv, padding) = match &spec.layers[i] {
                    Layer::Conv { padding, .. } => (true, *padding),
                    _ => (false, 0),
                };
                let lo_p = iparams.lower().layer(i).unwrap();
                let hi_p = iparams.upper().layer(i).unwrap();
                let g = interval_affine_backward(
                    is_conv,
                    padding,
                    &x_lo,
                    &x_hi,
                    &lo_p.weight,
                    &hi_p.weight,
                    &g_lo,
                    &g_hi,
                );
                grads_lo[i] = Some(LayerParams {
                    weight: g.gw_lo,
                    bias: g.gb_lo,
                });
                grads_hi[i] = Some(LayerParams {
                    weight: g.gw_hi,
                    bias: g.gb_hi,
                });
                accumulate_pair(&mut act_grads[i - entry], (g.gx_lo, g.gx_hi))?;
            }
            Layer::Relu => {
                let gx_lo = g_lo.zip_map(&x_lo, |g, v| if v > 0.0 { g } else { 0.0 })?;
                let gx_hi = g_hi.zip_map(&x_hi, |g, v| if v > 0.0 { g } else { 0.0 })?;
                accumulate_pair(&mut act_grads[i - entry], (gx_lo, gx_hi))?;
            }
            Layer::Dropout { .. } => {
                accumulate_pair(&mut act_grads[i - entry], (g_lo, g_hi))?;
            }
            Layer::AvgPool { factor } => {
                let gx_lo = crate::nn::backward_kernels::avg_pool_backward_k(&g_lo, x_lo.shape(), *factor);
                let gx_hi = crate::nn::backward_kernels::avg_pool_backward_k(&g_hi, x_hi.shape(), *factor);
                accumulate_pair(&mut act_grads[i - entry], (gx_lo, gx_hi))?;
            }
            Layer::Upsample { factor } => {
                let gx_lo = crate::nn::backward_kernels::upsample_backward_k(&g_lo, x_lo.shape(), *factor);
                let gx_hi = crate::nn::backward_kernels::upsample_backward_k(&g_hi, x_hi.shape(), *factor);
                accumulate_pair(&mut act_grads[i - entry], (gx_lo, gx_hi))?;
            }
            Layer::SkipAdd { from } => {
                if *from >= entry {
                    accumulate_pair(&mut act_grads[from - entry], (g_lo.clone(), g_hi.clone()))?;
                }
                // prefix skip sources are constants w.r.t. bound parameters
                accumulate_pair(&mut act_grads[i - entry], (g_lo, g_hi))?;
            }
        }
    }

    Ok(IntervalGrads {
        lower: grads_lo,
        upper: grads_hi,
    })
}

fn accumulate_pair(slot: &mut Option<(Tensor, Tensor)>, g: (Tensor, Tensor)) -> Result<()> {
    match slot {
        Some((lo, hi)) => {
            lo.axpy(1.0, &g.0)?;
            hi.axpy(1.0, &g.1)
        }
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Fine-tunes the bound parameters of the interval suffix with Adam,
/// projecting `lower <= central <= upper` after every step. Optimizer state
/// is carried across steps.
pub struct InnTrainer {
    spec: NetworkSpec,
    beta: f64,
    optimizer: Adam,
    trainable: Vec<usize>,
}

impl InnTrainer {
    pub fn new(
        spec: NetworkSpec,
        iparams: &IntervalParams,
        beta: f64,
        adam: AdamConfig,
    ) -> Result<Self> {
        if beta <= 0.0 {
            return Err(Error::config(format!("beta must be positive, got {beta}")));
        }
        let parametric = spec.parametric_layers();
        let start = parametric.len().saturating_sub(iparams.interval_layers());
        Ok(InnTrainer {
            spec,
            beta,
            optimizer: Adam::new(adam),
            trainable: parametric[start..].to_vec(),
        })
    }

    /// One mean-gradient step over a batch of (input, target) pairs.
    /// Returns the mean loss at the pre-step parameters.
    pub fn train_step(
        &mut self,
        iparams: &mut IntervalParams,
        batch: &[(&Tensor, &Tensor)],
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::config("empty interval training batch"));
        }
        let beta = self.beta;
        let spec = &self.spec;
        let per_sample: Vec<Result<(f64, IntervalGrads)>> = batch
            .par_iter()
            .map(|(input, target)| {
                let (_, trace) = inn_forward_traced(spec, iparams, input)?;
                let (raw_lo, raw_hi) = trace.raw_bounds();
                let loss = loss_on_bounds(raw_lo, raw_hi, target, beta)?;
                let (g_lo, g_hi) = inn_loss_grads(raw_lo, raw_hi, target, beta)?;
                let grads = inn_backward(spec, iparams, &trace, &g_lo, &g_hi)?;
                Ok((loss, grads))
            })
            .collect();

        let scale = 1.0 / batch.len() as f64;
        let mut mean_loss = 0.0;
        let mut acc: Option<IntervalGrads> = None;
        for r in per_sample {
            let (loss, grads) = r?;
            mean_loss += loss * scale;
            match &mut acc {
                None => acc = Some(grads),
                Some(a) => {
                    for i in &self.trainable {
                        add_layer_grads(&mut a.lower[*i], &grads.lower[*i])?;
                        add_layer_grads(&mut a.upper[*i], &grads.upper[*i])?;
                    }
                }
            }
        }
        let acc = acc.unwrap();
        if !mean_loss.is_finite() {
            return Err(Error::numerical(format!(
                "interval training loss is not finite: {mean_loss}"
            )));
        }

        // flat order: lower (w, b) per trainable layer, then upper
        let mut grad_list: Vec<Tensor> = Vec::new();
        for i in &self.trainable {
            let g = acc.lower[*i].as_ref().unwrap();
            grad_list.push(g.weight.scale(scale));
            grad_list.push(g.bias.scale(scale));
        }
        for i in &self.trainable {
            let g = acc.upper[*i].as_ref().unwrap();
            grad_list.push(g.weight.scale(scale));
            grad_list.push(g.bias.scale(scale));
        }

        let (lower, upper) = iparams.bounds_mut();
        let mut param_refs = lower.tensors_mut_for(&self.trainable);
        param_refs.extend(upper.tensors_mut_for(&self.trainable));
        let grad_refs: Vec<&Tensor> = grad_list.iter().collect();
        self.optimizer.step(&mut param_refs, &grad_refs)?;

        iparams.project();
        Ok(mean_loss)
    }
}

/// Gradients of the interval loss w.r.t. every lower and upper parameter,
/// flattened in the `NetworkParams::tensors` layout (weight then bias per
/// parametric layer; zero for layers outside the interval suffix).
pub fn inn_param_grads(
    spec: &NetworkSpec,
    iparams: &IntervalParams,
    input: &Tensor,
    target: &Tensor,
    beta: f64,
) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    let (_, trace) = inn_forward_traced(spec, iparams, input)?;
    let (raw_lo, raw_hi) = trace.raw_bounds();
    let (g_lo, g_hi) = inn_loss_grads(raw_lo, raw_hi, target, beta)?;
    let grads = inn_backward(spec, iparams, &trace, &g_lo, &g_hi)?;

    let mut lower_out = Vec::new();
    let mut upper_out = Vec::new();
    for i in spec.parametric_layers() {
        for (section, out) in [(&grads.lower, &mut lower_out), (&grads.upper, &mut upper_out)] {
            match &section[i] {
                Some(lp) => {
                    out.push(lp.weight.clone());
                    out.push(lp.bias.clone());
                }
                None => {
                    let p = iparams.lower().layer(i).unwrap();
                    out.push(Tensor::zeros(p.weight.shape()));
                    out.push(Tensor::zeros(p.bias.shape()));
                }
            }
        }
    }
    Ok((lower_out, upper_out))
}

fn add_layer_grads(acc: &mut Option<LayerParams>, g: &Option<LayerParams>) -> Result<()> {
    match (acc, g) {
        (Some(a), Some(g)) => {
            a.weight.axpy(1.0, &g.weight)?;
            a.bias.axpy(1.0, &g.bias)
        }
        (None, None) => Ok(()),
        _ => Err(Error::contract("mismatched interval gradient layouts")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::inn_forward;
    use crate::nn::init_params;
    use crate::rng::{derive_seed, rng_from_seed};
    use rand::Rng;

    #[test]
    fn loss_is_width_only_when_target_is_inside() {
        let n = 12;
        let lower = Tensor::zeros(&[n]);
        let upper = Tensor::full(&[n], 0.5);
        let target = Tensor::full(&[n], 0.25);
        let pred = IntervalPrediction::new(target.clone(), lower, upper).unwrap();
        let beta = 1e-3;
        let loss = inn_loss(&pred, &target, beta).unwrap();
        assert!((loss - beta * n as f64 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn loss_is_zero_for_exact_degenerate_fit() {
        let target = Tensor::from_vec(vec![0.1, 0.9, 0.4]);
        let pred =
            IntervalPrediction::new(target.clone(), target.clone(), target.clone()).unwrap();
        assert_eq!(inn_loss(&pred, &target, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn only_upper_hinge_fires_on_overshoot() {
        // width 0 at value v, target exceeds by delta at k pixels
        let n = 10;
        let k = 4;
        let delta = 0.3;
        let v = Tensor::full(&[n], 0.5);
        let mut target = v.clone();
        for i in 0..k {
            target[i] += delta;
        }
        let pred = IntervalPrediction::new(v.clone(), v.clone(), v.clone()).unwrap();
        let beta = 1e-6;
        let loss = inn_loss(&pred, &target, beta).unwrap();
        assert!((loss - k as f64 * delta * delta).abs() < 1e-12);
    }

    fn small_net() -> (NetworkSpec, IntervalParams) {
        let spec = NetworkSpec::new(
            vec![1],
            vec![
                Layer::Dense {
                    input_dim: 1,
                    output_dim: 8,
                },
                Layer::Relu,
                Layer::Dense {
                    input_dim: 8,
                    output_dim: 1,
                },
            ],
        )
        .unwrap();
        let central = init_params(&spec, 5);
        let ip = IntervalParams::degenerate(central, 2);
        (spec, ip)
    }

    #[test]
    fn train_step_preserves_ordering_and_freezes_central() {
        let (spec, mut ip) = small_net();
        let central_before = ip.central().clone();
        let mut trainer =
            InnTrainer::new(spec.clone(), &ip, 1e-3, AdamConfig::with_lr(1e-2)).unwrap();
        let inputs: Vec<Tensor> = (0..8).map(|i| Tensor::from_vec(vec![i as f64 / 8.0])).collect();
        let targets: Vec<Tensor> =
            (0..8).map(|i| Tensor::from_vec(vec![0.2 + i as f64 / 16.0])).collect();
        for _ in 0..20 {
            let batch: Vec<(&Tensor, &Tensor)> =
                inputs.iter().zip(targets.iter()).collect();
            trainer.train_step(&mut ip, &batch).unwrap();
            ip.check_ordering().unwrap();
        }
        assert_eq!(ip.central(), &central_before);
    }

    #[test]
    fn zero_learning_rate_leaves_bounds_unchanged() {
        let (spec, mut ip) = small_net();
        let before = ip.clone();
        let mut trainer =
            InnTrainer::new(spec.clone(), &ip, 1e-3, AdamConfig::with_lr(0.0)).unwrap();
        let x = Tensor::from_vec(vec![0.5]);
        let t = Tensor::from_vec(vec![0.7]);
        trainer.train_step(&mut ip, &[(&x, &t)]).unwrap();
        assert_eq!(ip.lower(), before.lower());
        assert_eq!(ip.upper(), before.upper());
    }

    #[test]
    fn synthetic_regression_reaches_target_coverage() {
        // y = 2 x + noise on [0, 1]; the interval band must learn to cover
        // held-out targets
        let spec = NetworkSpec::new(
            vec![1],
            vec![
                Layer::Dense {
                    input_dim: 1,
                    output_dim: 16,
                },
                Layer::Relu,
                Layer::Dense {
                    input_dim: 16,
                    output_dim: 1,
                },
            ],
        )
        .unwrap();

        let noise_sigma = 0.05;
        let gen = |seed: u64, n: usize| -> (Vec<Tensor>, Vec<Tensor>) {
            let mut rng = rng_from_seed(seed);
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for _ in 0..n {
                let x: f64 = rng.gen();
                let eps: f64 = rng.gen::<f64>() * 2.0 - 1.0;
                xs.push(Tensor::from_vec(vec![x]));
                ys.push(Tensor::from_vec(vec![2.0 * x + noise_sigma * eps]));
            }
            (xs, ys)
        };

        // train the central net on the regression task first
        let mut params = init_params(&spec, 40);
        let mut adam = Adam::new(AdamConfig::with_lr(1e-2));
        let (train_x, train_y) = gen(derive_seed(1000, 0), 64);
        for _ in 0..300 {
            let mut wacc: Option<Vec<Tensor>> = None;
            for (x, y) in train_x.iter().zip(&train_y) {
                let trace = crate::nn::forward_traced(&spec, &params, x, None).unwrap();
                let g = trace.output().sub(y).unwrap().scale(2.0 / train_x.len() as f64);
                let (grads, _) = crate::nn::backward(&spec, &params, &trace, &g).unwrap();
                let list: Vec<Tensor> = grads.tensors().into_iter().cloned().collect();
                match &mut wacc {
                    None => wacc = Some(list),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&list) {
                            a.axpy(1.0, b).unwrap();
                        }
                    }
                }
            }
            let acc = wacc.unwrap();
            let grad_refs: Vec<&Tensor> = acc.iter().collect();
            let mut prefs = params.tensors_mut();
            adam.step(&mut prefs, &grad_refs).unwrap();
        }

        // beta sets the hinge/width equilibrium and with it the asymptotic
        // coverage; 1e-4 puts the equilibrium safely above the 0.9 target
        // for this noise scale
        let mut ip = IntervalParams::degenerate(params, 2);
        let mut trainer =
            InnTrainer::new(spec.clone(), &ip, 1e-4, AdamConfig::with_lr(2e-3)).unwrap();
        for _ in 0..500 {
            let batch: Vec<(&Tensor, &Tensor)> = train_x.iter().zip(train_y.iter()).collect();
            trainer.train_step(&mut ip, &batch).unwrap();
        }

        let (test_x, test_y) = gen(derive_seed(1000, 1), 100);
        let mut covered = 0usize;
        for (x, y) in test_x.iter().zip(&test_y) {
            let pred = inn_forward(&spec, &ip, x).unwrap();
            if pred.lower[0] <= y[0] && y[0] <= pred.upper[0] {
                covered += 1;
            }
        }
        let coverage = covered as f64 / test_x.len() as f64;
        assert!(coverage >= 0.9, "coverage {coverage} below 0.9");
    }
}
