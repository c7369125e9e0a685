//! Plain SGD and Adam over flat tensor lists.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One plain gradient-descent step: p -= lr * g.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[&Tensor], learning_rate: f64) -> Result<()> {
    if learning_rate <= 0.0 {
        return Err(Error::config(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    if params.len() != grads.len() {
        return Err(Error::shape("sgd_step tensor lists", params.len(), grads.len()));
    }
    for g in grads {
        if !g.all_finite() {
            return Err(Error::numerical("NaN/Inf gradient in sgd_step"));
        }
    }
    for (p, g) in params.iter_mut().zip(grads) {
        p.axpy(-learning_rate, g)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment state is carried between calls and is
/// keyed positionally, so callers must pass the same tensor list every step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step_count: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("adam tensor lists", params.len(), grads.len()));
        }
        for g in grads {
            if !g.all_finite() {
                return Err(Error::numerical("NaN/Inf gradient in Adam step"));
            }
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            self.v = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        } else if self.m.len() != grads.len() {
            return Err(Error::contract(
                "Adam state does not match the gradient list it was created for",
            ));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let gd = g.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gd[i];
                vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gd[i] * gd[i];
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::from_vec(vec![1.5, -2.0]);
        let g = Tensor::zeros(&[2]);
        sgd_step(&mut [&mut p], &[&g], 0.1).unwrap();
        assert_eq!(p.data(), &[1.5, -2.0]);
    }

    #[test]
    fn scalar_descent_step() {
        let mut p = Tensor::from_vec(vec![1.0]);
        let g = Tensor::from_vec(vec![2.0]);
        sgd_step(&mut [&mut p], &[&g], 0.1).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut p = Tensor::from_vec(vec![1.0]);
        let g = Tensor::from_vec(vec![f64::NAN]);
        assert!(matches!(
            sgd_step(&mut [&mut p], &[&g], 0.1),
            Err(Error::Numerical(_))
        ));
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        assert!(matches!(
            adam.step(&mut [&mut p], &[&g]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        // f(w) = (w - 3)^2, grad = 2 (w - 3)
        let mut w = Tensor::from_vec(vec![0.0]);
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        for _ in 0..200 {
            let g = Tensor::from_vec(vec![2.0 * (w[0] - 3.0)]);
            adam.step(&mut [&mut w], &[&g]).unwrap();
        }
        assert!(
            (w[0] - 3.0).abs() < 1e-2,
            "adam did not converge: w = {}",
            w[0]
        );
    }
}
