//! Adversarial input construction: per-task target images and the
//! box-constrained optimization
//!
//! ```text
//! minimize_{x in [0,1]^n}  || Phi(x) - target ||_2^2 + lambda || x - x_tilde ||_2^2
//! ```
//!
//! solved by limited-memory quasi-Newton descent with a projected Armijo
//! line search (projected gradient descent is available as a fallback).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{backward, forward_traced, NetworkParams, NetworkSpec};
use crate::operators::{add_noise, NoiseModel};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackOptimizer {
    Lbfgs,
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Trade-off weight on the proximity term (>= 0).
    pub lambda: f64,
    /// Side length of the perturbed square in the target image.
    pub patch_size: usize,
    /// Accepted-step budget.
    pub max_iterations: usize,
    pub optimizer: AttackOptimizer,
    /// Noise level for the denoising target construction.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl AttackConfig {
    pub fn validate(&self, image_side: usize) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::config(format!(
                "attack lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.patch_size > image_side {
            return Err(Error::config(format!(
                "patch size {} exceeds image side {image_side}",
                self.patch_size
            )));
        }
        Ok(())
    }
}

/// The paper-scale patch side mapped onto a smaller image.
pub fn scaled_patch_size(image_side: usize, task_reference_side: usize) -> usize {
    ((50.0 / task_reference_side as f64) * image_side as f64).round() as usize
}

fn random_patch_origin(image_side: usize, patch: usize, seed: u64) -> (usize, usize) {
    let mut rng = rng_from_seed(seed);
    let max = image_side - patch;
    let y = (rng.gen::<f64>() * (max + 1) as f64) as usize;
    let x = (rng.gen::<f64>() * (max + 1) as f64) as usize;
    (y.min(max), x.min(max))
}

fn patch_mask(image_side: usize, patch: usize, origin: (usize, usize)) -> Tensor {
    let mut mask = Tensor::zeros(&[image_side, image_side]);
    for y in origin.0..origin.0 + patch {
        for x in origin.1..origin.1 + patch {
            mask.set2(y, x, 1.0);
        }
    }
    mask
}

/// Denoising target: Gaussian noise at the task level added inside one
/// uniformly placed square patch, clipped to [0, 1]; untouched elsewhere.
pub fn adv_target_denoise(x_rec: &Tensor, cfg: &AttackConfig) -> Result<(Tensor, Tensor)> {
    let side = square_side(x_rec)?;
    cfg.validate(side)?;
    for &v in x_rec.data() {
        if !(-1e-9..=1.0 + 1e-9).contains(&v) {
            return Err(Error::contract(format!(
                "denoising reconstruction must lie in [0, 1], got {v}"
            )));
        }
    }
    if cfg.patch_size == 0 {
        return Ok((x_rec.clone(), Tensor::zeros(&[side, side])));
    }
    let origin = random_patch_origin(side, cfg.patch_size, derive_seed(cfg.seed, 1));
    let mask = patch_mask(side, cfg.patch_size, origin);
    let noise_model = NoiseModel::gaussian(cfg.noise_sigma, derive_seed(cfg.seed, 2))?;
    let noisy = add_noise(x_rec, &noise_model)?;
    let mut target = x_rec.clone();
    for i in 0..target.len() {
        if mask[i] == 1.0 {
            target[i] = noisy[i].clamp(0.0, 1.0);
        }
    }
    Ok((target, mask))
}

/// Tomography target: inside one uniformly placed square, subtract 1.5
/// times the reconstruction's mean value. No clipping: the construction
/// may leave the [0, 1] range (only the attack variable is box
/// constrained).
pub fn adv_target_ct(x_rec: &Tensor, cfg: &AttackConfig) -> Result<(Tensor, Tensor)> {
    let side = square_side(x_rec)?;
    cfg.validate(side)?;
    if !x_rec.all_finite() {
        return Err(Error::numerical("reconstruction contains NaN/Inf"));
    }
    if cfg.patch_size == 0 {
        return Ok((x_rec.clone(), Tensor::zeros(&[side, side])));
    }
    let origin = random_patch_origin(side, cfg.patch_size, derive_seed(cfg.seed, 1));
    let mask = patch_mask(side, cfg.patch_size, origin);
    let delta = 1.5 * x_rec.mean();
    let mut target = x_rec.clone();
    for i in 0..target.len() {
        if mask[i] == 1.0 {
            target[i] -= delta;
        }
    }
    Ok((target, mask))
}

fn square_side(img: &Tensor) -> Result<usize> {
    match img.shape() {
        [h, w] if h == w => Ok(*h),
        other => Err(Error::shape("square image", "[s, s]", other)),
    }
}

/// Result of one attack optimization.
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub x_adv: Tensor,
    /// Objective values: the start point first, then each accepted iterate.
    pub trace: Vec<f64>,
}

impl AttackResult {
    pub fn initial_objective(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_objective(&self) -> f64 {
        *self.trace.last().unwrap()
    }
}

const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const REL_DECREASE_TOL: f64 = 1e-7;
const REL_DECREASE_WINDOW: usize = 10;

/// Minimize the attack objective from `x_tilde` under the [0, 1] box.
///
/// The objective trace is non-increasing by construction (only improving
/// steps are accepted) and every returned iterate is exactly feasible.
/// Runs the network in inference mode (no dropout).
pub fn find_adversarial_input(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x_tilde: &Tensor,
    target: &Tensor,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    if x_tilde.shape() != spec.input_shape.as_slice() {
        return Err(Error::shape(
            "attack start point",
            &spec.input_shape,
            x_tilde.shape(),
        ));
    }
    for &v in x_tilde.data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::contract(format!(
                "attack start point must lie in [0, 1], got {v}"
            )));
        }
    }
    if cfg.lambda < 0.0 {
        return Err(Error::config("attack lambda must be >= 0"));
    }

    // value pass: one forward, keeping the trace so the gradient can be
    // completed later without re-running the network
    let value_of = |x: &Tensor| -> Result<(f64, crate::nn::ForwardTrace, Tensor)> {
        let fwd = forward_traced(spec, params, x, None)?;
        let residual = fwd.output().sub(target)?;
        let mut obj = residual.sq_l2();
        if cfg.lambda > 0.0 {
            obj += cfg.lambda * x.sub(x_tilde)?.sq_l2();
        }
        if !obj.is_finite() {
            return Err(Error::numerical(format!(
                "attack objective is not finite (obj {obj}, |x|_inf {})",
                x.abs().max_value()
            )));
        }
        Ok((obj, fwd, residual))
    };
    let grad_of = |x: &Tensor, fwd: &crate::nn::ForwardTrace, residual: &Tensor| -> Result<Tensor> {
        let (_, mut grad) = backward(spec, params, fwd, &residual.scale(2.0))?;
        if cfg.lambda > 0.0 {
            grad.axpy(2.0 * cfg.lambda, &x.sub(x_tilde)?)?;
        }
        Ok(grad)
    };

    let mut x = x_tilde.clone();
    let (mut f, fwd0, res0) = value_of(&x)?;
    let mut g = grad_of(&x, &fwd0, &res0)?;
    drop((fwd0, res0));
    let mut trace = vec![f];

    // limited-memory curvature pairs
    let mut s_hist: Vec<Tensor> = Vec::new();
    let mut y_hist: Vec<Tensor> = Vec::new();

    'outer: for _ in 0..cfg.max_iterations {
        let pg = projected_gradient(&x, &g);
        if pg.abs().max_value() < 1e-12 {
            break;
        }

        let directions: &[bool] = match cfg.optimizer {
            AttackOptimizer::Lbfgs => &[true, false],
            AttackOptimizer::ProjectedGradient => &[false],
        };

        let mut accepted = false;
        for &use_lbfgs in directions {
            let d = if use_lbfgs && !s_hist.is_empty() {
                two_loop_direction(&pg, &s_hist, &y_hist)
            } else {
                // steepest descent scaled to a unit-infinity-norm first step
                pg.scale(-1.0 / pg.abs().max_value().max(1e-30))
            };

            let mut alpha = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let mut cand = x.clone();
                cand.axpy(alpha, &d)?;
                let cand = cand.clamp(0.0, 1.0);
                let step = cand.sub(&x)?;
                let slope = g.dot(&step)?;
                if slope >= 0.0 {
                    alpha *= 0.5;
                    continue;
                }
                let (f_new, fwd, residual) = value_of(&cand)?;
                if f_new <= f + ARMIJO_C1 * slope {
                    let g_new = grad_of(&cand, &fwd, &residual)?;
                    if cfg.optimizer == AttackOptimizer::Lbfgs {
                        let y = g_new.sub(&g)?;
                        if step.dot(&y)? > 1e-12 {
                            s_hist.push(step.clone());
                            y_hist.push(y);
                            if s_hist.len() > LBFGS_MEMORY {
                                s_hist.remove(0);
                                y_hist.remove(0);
                            }
                        }
                    }
                    x = cand;
                    f = f_new;
                    g = g_new;
                    trace.push(f);
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                break;
            }
            // quasi-Newton direction failed the line search; clear the
            // history and retry with steepest descent
            s_hist.clear();
            y_hist.clear();
        }
        if !accepted {
            break 'outer;
        }

        if trace.len() > REL_DECREASE_WINDOW {
            let prev = trace[trace.len() - 1 - REL_DECREASE_WINDOW];
            let rel = (prev - f) / trace[0].max(1e-30);
            if rel < REL_DECREASE_TOL {
                break;
            }
        }
    }

    Ok(AttackResult { x_adv: x, trace })
}

/// Gradient with components that would push outside the active box faces
/// zeroed out.
fn projected_gradient(x: &Tensor, g: &Tensor) -> Tensor {
    let mut pg = g.clone();
    for i in 0..x.len() {
        if (x[i] <= 0.0 && g[i] > 0.0) || (x[i] >= 1.0 && g[i] < 0.0) {
            pg[i] = 0.0;
        }
    }
    pg
}

/// Standard two-loop recursion; returns a descent direction -H g.
fn two_loop_direction(g: &Tensor, s_hist: &[Tensor], y_hist: &[Tensor]) -> Tensor {
    let m = s_hist.len();
    let mut q = g.clone();
    let mut alphas = vec![0.0f64; m];
    let mut rhos = vec![0.0f64; m];
    for i in (0..m).rev() {
        rhos[i] = 1.0 / y_hist[i].dot(&s_hist[i]).unwrap();
        alphas[i] = rhos[i] * s_hist[i].dot(&q).unwrap();
        q.axpy(-alphas[i], &y_hist[i]).unwrap();
    }
    let gamma = s_hist[m - 1].dot(&y_hist[m - 1]).unwrap() / y_hist[m - 1].sq_l2();
    let mut z = q.scale(gamma);
    for i in 0..m {
        let beta = rhos[i] * y_hist[i].dot(&z).unwrap();
        z.axpy(alphas[i] - beta, &s_hist[i]).unwrap();
    }
    z.scale(-1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Layer, LayerParams};

    fn identity_net(h: usize, w: usize) -> (NetworkSpec, NetworkParams) {
        let spec = NetworkSpec::new(
            vec![1, h, w],
            vec![Layer::Conv {
                in_channels: 1,
                out_channels: 1,
                kernel: 1,
                padding: 0,
            }],
        )
        .unwrap();
        let params = NetworkParams::from_layers(vec![Some(LayerParams {
            weight: Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap(),
            bias: Tensor::from_vec(vec![0.0]),
        })]);
        (spec, params)
    }

    fn cfg(lambda: f64, seed: u64) -> AttackConfig {
        AttackConfig {
            lambda,
            patch_size: 8,
            max_iterations: 500,
            optimizer: AttackOptimizer::Lbfgs,
            noise_sigma: 25.0 / 255.0,
            seed,
        }
    }

    #[test]
    fn identity_net_with_matching_target_stays_put() {
        let (spec, params) = identity_net(6, 6);
        let x = Tensor::new(vec![1, 6, 6], (0..36).map(|i| i as f64 / 40.0).collect()).unwrap();
        let r = find_adversarial_input(&spec, &params, &x, &x, &cfg(0.5, 1)).unwrap();
        assert_eq!(r.x_adv, x);
        assert_eq!(r.trace, vec![0.0]);
    }

    #[test]
    fn identity_net_converges_to_interior_target() {
        let (spec, params) = identity_net(5, 5);
        let x = Tensor::full(&[1, 5, 5], 0.5);
        let t = Tensor::new(vec![1, 5, 5], (0..25).map(|i| 0.2 + 0.02 * i as f64).collect())
            .unwrap();
        let r = find_adversarial_input(&spec, &params, &x, &t, &cfg(0.0, 2)).unwrap();
        assert!(r.x_adv.linf_dist(&t).unwrap() < 1e-6);
        assert!(r.final_objective() < 1e-10);
    }

    #[test]
    fn trace_is_monotone_and_feasible() {
        let spec = NetworkSpec::new(
            vec![1, 8, 8],
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
        let params = init_params(&spec, 10);
        let x = Tensor::full(&[1, 8, 8], 0.4);
        let t = Tensor::full(&[1, 8, 8], 0.9);
        let r = find_adversarial_input(&spec, &params, &x, &t, &cfg(0.5, 3)).unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0], "trace not monotone: {:?}", r.trace);
        }
        assert!(r.x_adv.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(r.final_objective() < r.initial_objective());
    }

    #[test]
    fn large_lambda_pins_the_iterate_to_the_start() {
        let spec = NetworkSpec::new(
            vec![1, 8, 8],
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
        let params = init_params(&spec, 11);
        let x = Tensor::full(&[1, 8, 8], 0.5);
        let t = Tensor::zeros(&[1, 8, 8]);
        let r = find_adversarial_input(&spec, &params, &x, &t, &cfg(1e6, 4)).unwrap();
        assert!(r.x_adv.linf_dist(&x).unwrap() < 1e-2);
    }

    #[test]
    fn attack_is_bit_deterministic() {
        let (spec, params) = identity_net(6, 6);
        let x = Tensor::full(&[1, 6, 6], 0.3);
        let t = Tensor::full(&[1, 6, 6], 0.8);
        let a = find_adversarial_input(&spec, &params, &x, &t, &cfg(0.1, 5)).unwrap();
        let b = find_adversarial_input(&spec, &params, &x, &t, &cfg(0.1, 5)).unwrap();
        assert_eq!(a.x_adv, b.x_adv);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn projected_gradient_fallback_also_descends() {
        let (spec, params) = identity_net(5, 5);
        let x = Tensor::full(&[1, 5, 5], 0.5);
        let t = Tensor::full(&[1, 5, 5], 0.1);
        let mut c = cfg(0.0, 6);
        c.optimizer = AttackOptimizer::ProjectedGradient;
        let r = find_adversarial_input(&spec, &params, &x, &t, &c).unwrap();
        assert!(r.final_objective() < 0.05 * r.initial_objective());
    }

    #[test]
    fn denoise_target_is_local_and_noise_scaled() {
        // mid-gray reconstruction: the +-4 sigma noise band stays inside
        // [0, 1], so no clipping distorts the statistics
        let side = 128;
        let x_rec = Tensor::full(&[side, side], 0.5);
        let mut c = cfg(0.5, 7);
        c.patch_size = 50;
        let (target, mask) = adv_target_denoise(&x_rec, &c).unwrap();
        let mut inside = Vec::new();
        for i in 0..target.len() {
            if mask[i] == 1.0 {
                inside.push(target[i] - x_rec[i]);
            } else {
                assert_eq!(target[i], x_rec[i]);
            }
        }
        assert_eq!(inside.len(), 50 * 50);
        let mean = inside.iter().sum::<f64>() / inside.len() as f64;
        let std = (inside.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / inside.len() as f64)
            .sqrt();
        let sigma = 25.0 / 255.0;
        assert!((std - sigma).abs() / sigma < 0.10, "std {std} vs {sigma}");
    }

    #[test]
    fn denoise_target_with_zero_patch_is_identity() {
        let x_rec = Tensor::full(&[32, 32], 0.5);
        let mut c = cfg(0.5, 8);
        c.patch_size = 0;
        let (target, mask) = adv_target_denoise(&x_rec, &c).unwrap();
        assert_eq!(target, x_rec);
        assert!(mask.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ct_target_subtracts_scaled_mean_without_clipping() {
        let side = 64;
        let x_rec = Tensor::full(&[side, side], 1.0);
        let mut c = cfg(0.0, 9);
        c.patch_size = 13;
        let (target, mask) = adv_target_ct(&x_rec, &c).unwrap();
        let area = mask.sum() as usize;
        assert_eq!(area, 13 * 13);
        for i in 0..target.len() {
            if mask[i] == 1.0 {
                assert!((target[i] - (-0.5)).abs() < 1e-12);
            } else {
                assert_eq!(target[i], 1.0);
            }
        }
        // zero image: mean 0, target unchanged
        let zero = Tensor::zeros(&[side, side]);
        let (t0, _) = adv_target_ct(&zero, &c).unwrap();
        assert_eq!(t0, zero);
    }

    #[test]
    fn oversized_patches_are_rejected() {
        let x_rec = Tensor::full(&[16, 16], 0.5);
        let mut c = cfg(0.5, 10);
        c.patch_size = 17;
        assert!(adv_target_denoise(&x_rec, &c).is_err());
        assert!(adv_target_ct(&x_rec, &c).is_err());
    }

    #[test]
    fn paper_scale_patch_mapping() {
        assert_eq!(scaled_patch_size(128, 512), 13);
        assert_eq!(scaled_patch_size(64, 181), 18);
        assert_eq!(scaled_patch_size(512, 512), 50);
    }
}
