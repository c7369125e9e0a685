//! Training loops: baseline reconstruction networks (MSE), interval
//! fine-tuning, and the two-headed mean/variance network. All loops keep
//! the parameters with the best validation loss seen so far.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{inn_forward, inn_loss, IntervalParams};
use crate::nn::{
    backward, forward, forward_traced, Adam, AdamConfig, DropoutMasks, NetworkParams, NetworkSpec,
    ParamGrads,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;
use crate::uq::{probout_loss, probout_output_grad, probout_split_output as split_output};

use super::data::SamplePair;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub model: String,
    pub epochs: Vec<EpochLog>,
    pub best_val_loss: f64,
    pub best_epoch: usize,
}

pub struct TrainOutcome {
    pub params: NetworkParams,
    pub log: TrainLog,
}

#[derive(Debug, Clone, Copy)]
pub enum LossKind {
    /// Per-pixel mean squared error against the clean target.
    Mse,
    /// Two-headed scaled-residual + log-variance loss (per-pixel mean).
    Probout,
}

fn sample_loss_and_grad(
    kind: LossKind,
    output: &Tensor,
    target: &Tensor,
) -> Result<(f64, Tensor)> {
    match kind {
        LossKind::Mse => {
            let n = target.len() as f64;
            let resid = output.sub(target)?;
            Ok((resid.sq_l2() / n, resid.scale(2.0 / n)))
        }
        LossKind::Probout => {
            let n = target.len() as f64;
            let (mean, var) = split_output(output)?;
            let loss = probout_loss(&mean, &var, target)? / n;
            let grad = probout_output_grad(output, target)?.scale(1.0 / n);
            Ok((loss, grad))
        }
    }
}

fn eval_loss(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &NetworkParams,
    pairs: &[SamplePair],
) -> Result<f64> {
    let losses: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|p| {
            let out = forward(spec, params, &p.input, None)?;
            Ok(sample_loss_and_grad(kind, &out, &p.target)?.0)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / pairs.len() as f64)
}

/// Supervised training with dropout, Adam, shuffled mini-batches and
/// early-best checkpointing. `epoch_samples(e)` supplies the (possibly
/// re-noised) training pairs of epoch `e`. On divergence the best
/// parameters seen so far are written to `rescue_path` before the error
/// propagates.
#[allow(clippy::too_many_arguments)]
pub fn train_network(
    model_name: &str,
    spec: &NetworkSpec,
    init: NetworkParams,
    epoch_samples: &dyn Fn(usize) -> Result<Vec<SamplePair>>,
    val_pairs: &[SamplePair],
    kind: LossKind,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    seed: u64,
    rescue_path: Option<&std::path::Path>,
) -> Result<TrainOutcome> {
    let mut params = init;
    let mut adam = Adam::new(AdamConfig::with_lr(learning_rate));
    let mut best = params.clone();
    let mut best_val = eval_loss(kind, spec, &params, val_pairs)?;
    let mut best_epoch = 0usize;
    let mut log = Vec::new();

    for epoch in 0..epochs {
        let pairs = epoch_samples(epoch)?;
        if pairs.is_empty() {
            return Err(Error::config("empty training split"));
        }
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng_from_seed(derive_seed(seed, 0xE90C ^ epoch as u64)));

        let mut epoch_loss = 0.0;
        for (batch_no, chunk) in order.chunks(batch_size).enumerate() {
            let results: Vec<Result<(f64, ParamGrads)>> = chunk
                .par_iter()
                .map(|&idx| {
                    let p = &pairs[idx];
                    let mask_seed =
                        derive_seed(derive_seed(seed, epoch as u64), idx as u64 ^ 0xD120);
                    let masks = DropoutMasks::sample(spec, mask_seed)?;
                    let trace = forward_traced(spec, &params, &p.input, Some(&masks))?;
                    let (loss, out_grad) = sample_loss_and_grad(kind, trace.output(), &p.target)?;
                    let (grads, _) = backward(spec, &params, &trace, &out_grad)?;
                    Ok((loss, grads))
                })
                .collect();

            let scale = 1.0 / chunk.len() as f64;
            let mut acc: Option<ParamGrads> = None;
            for r in results {
                let (loss, grads) = r.map_err(|e| {
                    Error::numerical(format!(
                        "{model_name}: failure in epoch {epoch} batch {batch_no}: {e}"
                    ))
                })?;
                epoch_loss += loss;
                match &mut acc {
                    None => acc = Some(grads),
                    Some(a) => {
                        for (t, g) in a.tensors_mut().into_iter().zip(grads.tensors()) {
                            t.axpy(1.0, g)?;
                        }
                    }
                }
            }
            let mut acc = acc.unwrap();
            for t in acc.tensors_mut() {
                *t = t.scale(scale);
            }
            let grad_refs: Vec<&Tensor> = acc.tensors().into_iter().collect();
            let step_result = {
                let mut param_refs = params.tensors_mut();
                adam.step(&mut param_refs, &grad_refs)
            };
            if let Err(e) = step_result {
                if let Some(path) = rescue_path {
                    let _ = crate::checkpoint::save_params(path, spec, &best);
                }
                return Err(Error::numerical(format!(
                    "{model_name}: diverged in epoch {epoch} (best epoch so far {best_epoch}, \
                     last good checkpoint {}): {e}",
                    rescue_path.map(|p| p.display().to_string()).unwrap_or_default()
                )));
            }
        }

        let val_loss = eval_loss(kind, spec, &params, val_pairs)?;
        if val_loss < best_val {
            best_val = val_loss;
            best = params.clone();
            best_epoch = epoch + 1;
        }
        log.push(EpochLog {
            epoch: epoch + 1,
            train_loss: epoch_loss / pairs.len() as f64,
            val_loss,
        });
    }

    Ok(TrainOutcome {
        params: best,
        log: TrainLog {
            model: model_name.into(),
            epochs: log,
            best_val_loss: best_val,
            best_epoch,
        },
    })
}

/// Interval fine-tuning around a frozen central network, early-best on
/// the validation interval loss.
#[allow(clippy::too_many_arguments)]
pub fn train_inn(
    model_name: &str,
    spec: &NetworkSpec,
    central: NetworkParams,
    train_pairs: &[SamplePair],
    val_pairs: &[SamplePair],
    beta: f64,
    interval_layers: usize,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    seed: u64,
) -> Result<(IntervalParams, TrainLog)> {
    let mut iparams = IntervalParams::degenerate(central, interval_layers);
    let mut trainer = crate::interval::InnTrainer::new(
        spec.clone(),
        &iparams,
        beta,
        AdamConfig::with_lr(learning_rate),
    )?;

    let val_loss_of = |ip: &IntervalParams| -> Result<f64> {
        let losses: Vec<Result<f64>> = val_pairs
            .par_iter()
            .map(|p| {
                let pred = inn_forward(spec, ip, &p.input)?;
                Ok(inn_loss(&pred, &p.target, beta)? / p.target.len() as f64)
            })
            .collect();
        let mut total = 0.0;
        for l in losses {
            total += l?;
        }
        Ok(total / val_pairs.len() as f64)
    };

    let mut best = iparams.clone();
    let mut best_val = val_loss_of(&iparams)?;
    let mut best_epoch = 0usize;
    let mut log = Vec::new();

    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..train_pairs.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng_from_seed(derive_seed(seed, 0x11E0 ^ epoch as u64)));

        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&Tensor, &Tensor)> = chunk
                .iter()
                .map(|&i| (&train_pairs[i].input, &train_pairs[i].target))
                .collect();
            epoch_loss += trainer.train_step(&mut iparams, &batch)? * chunk.len() as f64;
        }

        let val_loss = val_loss_of(&iparams)?;
        if val_loss < best_val {
            best_val = val_loss;
            best = iparams.clone();
            best_epoch = epoch + 1;
        }
        log.push(EpochLog {
            epoch: epoch + 1,
            train_loss: epoch_loss / train_pairs.len() as f64,
            val_loss,
        });
    }

    Ok((
        best,
        TrainLog {
            model: model_name.into(),
            epochs: log,
            best_val_loss: best_val,
            best_epoch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Layer};

    fn tiny_spec() -> NetworkSpec {
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

    fn noisy_pairs(seed: u64, n: usize) -> Vec<SamplePair> {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let clean = Tensor::new(
                    vec![1, 8, 8],
                    (0..64).map(|_| rng.gen::<f64>() * 0.5 + 0.25).collect(),
                )
                .unwrap();
                let noise: Vec<f64> = (0..64).map(|_| 0.08 * (rng.gen::<f64>() - 0.5)).collect();
                let noisy = Tensor::new(
                    vec![1, 8, 8],
                    clean
                        .data()
                        .iter()
                        .zip(&noise)
                        .map(|(v, e)| (v + e).clamp(0.0, 1.0))
                        .collect(),
                )
                .unwrap();
                SamplePair {
                    input: noisy,
                    target: clean,
                }
            })
            .collect()
    }

    #[test]
    fn zero_epochs_returns_the_initialization() {
        let spec = tiny_spec();
        let init = init_params(&spec, 1);
        let pairs = noisy_pairs(2, 4);
        let out = train_network(
            "t",
            &spec,
            init.clone(),
            &|_| Ok(noisy_pairs(3, 4)),
            &pairs,
            LossKind::Mse,
            0,
            1e-3,
            2,
            7,
            None,
        )
        .unwrap();
        assert_eq!(out.params, init);
        assert!(out.log.epochs.is_empty());
    }

    #[test]
    fn training_reduces_validation_loss_and_tracks_best() {
        let spec = tiny_spec();
        let init = init_params(&spec, 1);
        let val = noisy_pairs(100, 6);
        let out = train_network(
            "t",
            &spec,
            init.clone(),
            &|e| Ok(noisy_pairs(200 + e as u64, 16)),
            &val,
            LossKind::Mse,
            6,
            1e-3,
            4,
            7,
            None,
        )
        .unwrap();
        let init_loss = eval_loss(LossKind::Mse, &spec, &init, &val).unwrap();
        assert!(out.log.best_val_loss < init_loss);
        // the recorded best is never worse than any logged epoch
        for e in &out.log.epochs {
            assert!(out.log.best_val_loss <= e.val_loss + 1e-15);
        }
    }

    #[test]
    fn more_epochs_never_worsen_the_recorded_best() {
        let spec = tiny_spec();
        let init = init_params(&spec, 5);
        let val = noisy_pairs(101, 6);
        let short = train_network(
            "t",
            &spec,
            init.clone(),
            &|e| Ok(noisy_pairs(300 + e as u64, 8)),
            &val,
            LossKind::Mse,
            2,
            1e-3,
            4,
            9,
            None,
        )
        .unwrap();
        let long = train_network(
            "t",
            &spec,
            init,
            &|e| Ok(noisy_pairs(300 + e as u64, 8)),
            &val,
            LossKind::Mse,
            4,
            1e-3,
            4,
            9,
            None,
        )
        .unwrap();
        assert!(long.log.best_val_loss <= short.log.best_val_loss + 1e-15);
    }
}
