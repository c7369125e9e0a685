//! Per-run experiment execution: training bundles, adversarial and
//! out-of-distribution detection, scoring, and artifact emission.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    adv_target_ct, adv_target_denoise, find_adversarial_input, scaled_patch_size, AttackConfig,
};
use crate::checkpoint::{save_interval_params, save_params, save_tensor};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::evaluation::{DetectionRecord, Experiment, Method, ScoreRow, Task};
use crate::interval::{inn_forward, inn_uncertainty, IntervalParams, IntervalPrediction};
use crate::nn::{forward, NetworkParams, NetworkSpec};
use crate::ood::{place_bird_silhouette, salt_pepper_half, Side};
use crate::operators::NoiseModel;
use crate::render::{full_range_window, render_heatmap};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;
use crate::uq::{mcdrop_uncertainty, probout_forward, McDropConfig};
use rand::Rng;

use super::data::{
    ct_input, ct_input_from_phantom, denoise_input, eval_noise_seed, train_noise_seed, Corpus,
    SamplePair, Split,
};
use super::nets::{ct_spec, denoise_spec};
use super::train::{train_inn, train_network, LossKind, TrainLog};

/// Panels rendered per experiment (the remaining samples only produce
/// score rows and tensors).
const PANEL_SAMPLES: usize = 4;

pub struct RunPaths {
    pub root: PathBuf,
    pub run: usize,
}

impl RunPaths {
    pub fn new(root: &Path, run: usize) -> Self {
        RunPaths {
            root: root.to_path_buf(),
            run,
        }
    }

    pub fn corpus_dir(&self, task: Task) -> PathBuf {
        self.root.join("corpus").join(task.to_string())
    }

    pub fn task_dir(&self, task: Task) -> PathBuf {
        self.root
            .join("runs")
            .join(format!("run_{}", self.run))
            .join(task.to_string())
    }

    pub fn checkpoint(&self, task: Task, model: &str) -> PathBuf {
        self.task_dir(task).join(format!("{model}.ckpt"))
    }

    pub fn experiment_dir(&self, task: Task, experiment: Experiment) -> PathBuf {
        self.task_dir(task).join(experiment.to_string())
    }
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Everything one run trains for one task.
pub struct TrainedModels {
    pub spec: NetworkSpec,
    pub baseline: NetworkParams,
    pub iparams: IntervalParams,
    pub probout_spec: NetworkSpec,
    pub probout: NetworkParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTrainReport {
    pub task: Task,
    pub run: usize,
    pub logs: Vec<TrainLog>,
    /// Fraction of held-out target pixels inside the interval band after
    /// fine-tuning.
    pub inn_coverage: f64,
    /// Validation MSE of the trained reconstruction vs. of the raw input
    /// (the model must beat the identity map).
    pub val_mse_model: f64,
    pub val_mse_identity: f64,
}

fn task_pairs(
    cfg: &ExperimentConfig,
    task: Task,
    corpus: &Corpus,
    split: Split,
    epoch: Option<usize>,
) -> Result<Vec<SamplePair>> {
    let idx = corpus.indices(split);
    idx.iter()
        .map(|&i| {
            let entry = corpus.entry(i);
            match task {
                Task::Denoise => {
                    let seed = match epoch {
                        Some(e) => train_noise_seed(entry.seed, e),
                        None => eval_noise_seed(entry.seed),
                    };
                    denoise_input(corpus.clean(i), cfg.denoise.noise_sigma, seed)
                }
                Task::Ct => {
                    let rec = corpus
                        .fbp_inversion(i)
                        .ok_or_else(|| Error::contract("ct corpus entry lacks an inversion"))?;
                    ct_input(&cfg.ct, corpus.clean(i), rec)
                }
            }
        })
        .collect()
}

fn task_spec(cfg: &ExperimentConfig, task: Task) -> Result<NetworkSpec> {
    match task {
        Task::Denoise => denoise_spec(&cfg.denoise),
        Task::Ct => ct_spec(&cfg.ct),
    }
}

/// Train the baseline reconstruction network and save its checkpoint.
pub fn train_baseline_cmd(
    cfg: &ExperimentConfig,
    task: Task,
    run: usize,
    out_root: &Path,
) -> Result<(NetworkSpec, NetworkParams, TrainLog)> {
    let paths = RunPaths::new(out_root, run);
    let corpus = Corpus::load(&paths.corpus_dir(task))?;
    ensure_dir(&paths.task_dir(task))?;
    let run_seed = cfg.run_seed(run);
    let spec = task_spec(cfg, task)?;
    let train_cfg = match task {
        Task::Denoise => &cfg.denoise.train,
        Task::Ct => &cfg.ct.train,
    };
    let val_pairs = task_pairs(cfg, task, &corpus, Split::Val, None)?;
    let ckpt = paths.checkpoint(task, "baseline");
    let outcome = train_network(
        &format!("{task}-baseline"),
        &spec,
        crate::nn::init_params(&spec, derive_seed(run_seed, 0x1417)),
        &|e| task_pairs(cfg, task, &corpus, Split::Train, Some(e)),
        &val_pairs,
        LossKind::Mse,
        train_cfg.epochs,
        train_cfg.learning_rate,
        train_cfg.batch_size,
        derive_seed(run_seed, 0xBA5E),
        Some(&ckpt),
    )?;
    save_params(&ckpt, &spec, &outcome.params)?;
    write_json(&paths.task_dir(task).join("baseline_log.json"), &outcome.log)?;
    Ok((spec, outcome.params, outcome.log))
}

fn load_baseline(paths: &RunPaths, task: Task) -> Result<(NetworkSpec, NetworkParams)> {
    let ckpt = paths.checkpoint(task, "baseline");
    crate::checkpoint::load_params(&ckpt).map_err(|e| {
        Error::config(format!(
            "missing or unreadable baseline checkpoint {} ({e}); run \
             `uqrecon train --task {task} --run {}` first",
            ckpt.display(),
            paths.run
        ))
    })
}

/// Fine-tune interval bounds around a stored baseline checkpoint.
pub fn train_inn_cmd(
    cfg: &ExperimentConfig,
    task: Task,
    run: usize,
    out_root: &Path,
) -> Result<(IntervalParams, TrainLog)> {
    let paths = RunPaths::new(out_root, run);
    let (spec, baseline) = load_baseline(&paths, task)?;
    let corpus = Corpus::load(&paths.corpus_dir(task))?;
    let run_seed = cfg.run_seed(run);
    let inn_cfg = match task {
        Task::Denoise => &cfg.denoise.inn,
        Task::Ct => &cfg.ct.inn,
    };
    let val_pairs = task_pairs(cfg, task, &corpus, Split::Val, None)?;
    let train_pairs = task_pairs(cfg, task, &corpus, Split::Train, Some(usize::MAX >> 1))?;
    let (iparams, log) = train_inn(
        &format!("{task}-inn"),
        &spec,
        baseline,
        &train_pairs,
        &val_pairs,
        inn_cfg.beta,
        inn_cfg.interval_layers,
        inn_cfg.epochs,
        inn_cfg.learning_rate,
        inn_cfg.batch_size,
        derive_seed(run_seed, 0x1221),
    )?;
    save_interval_params(&paths.checkpoint(task, "inn"), &spec, &iparams)?;
    write_json(&paths.task_dir(task).join("inn_log.json"), &log)?;
    Ok((iparams, log))
}

/// Train the two-headed network from a stored baseline checkpoint.
pub fn train_probout_cmd(
    cfg: &ExperimentConfig,
    task: Task,
    run: usize,
    out_root: &Path,
) -> Result<(NetworkSpec, NetworkParams, TrainLog)> {
    let paths = RunPaths::new(out_root, run);
    let (spec, baseline) = load_baseline(&paths, task)?;
    let corpus = Corpus::load(&paths.corpus_dir(task))?;
    let run_seed = cfg.run_seed(run);
    let probout_cfg = match task {
        Task::Denoise => &cfg.denoise.probout,
        Task::Ct => &cfg.ct.probout,
    };
    let val_pairs = task_pairs(cfg, task, &corpus, Split::Val, None)?;
    let probout_spec = crate::uq::probout_spec_from_baseline(&spec)?;
    let init = crate::uq::probout_init_params(
        &spec,
        &baseline,
        &probout_spec,
        derive_seed(run_seed, 0x9B0),
    )?;
    let ckpt = paths.checkpoint(task, "probout");
    let outcome = train_network(
        &format!("{task}-probout"),
        &probout_spec,
        init,
        &|e| task_pairs(cfg, task, &corpus, Split::Train, Some(e)),
        &val_pairs,
        LossKind::Probout,
        probout_cfg.epochs,
        probout_cfg.learning_rate,
        probout_cfg.batch_size,
        derive_seed(run_seed, 0x9B1),
        Some(&ckpt),
    )?;
    save_params(&ckpt, &probout_spec, &outcome.params)?;
    write_json(&paths.task_dir(task).join("probout_log.json"), &outcome.log)?;
    Ok((probout_spec, outcome.params, outcome.log))
}

/// Load the three checkpoints of one (task, run); errors name the
/// training command that creates the missing artifact.
pub fn load_models(
    _cfg: &ExperimentConfig,
    task: Task,
    run: usize,
    out_root: &Path,
) -> Result<TrainedModels> {
    let paths = RunPaths::new(out_root, run);
    let (spec, baseline) = load_baseline(&paths, task)?;
    let inn_ckpt = paths.checkpoint(task, "inn");
    let (_, iparams) = crate::checkpoint::load_interval_params(&inn_ckpt).map_err(|e| {
        Error::config(format!(
            "missing or unreadable interval checkpoint {} ({e}); run \
             `uqrecon train-inn --task {task} --run {run}` first",
            inn_ckpt.display()
        ))
    })?;
    let probout_ckpt = paths.checkpoint(task, "probout");
    let (probout_spec, probout) = crate::checkpoint::load_params(&probout_ckpt).map_err(|e| {
        Error::config(format!(
            "missing or unreadable two-headed checkpoint {} ({e}); run \
             `uqrecon train-probout --task {task} --run {run}` first",
            probout_ckpt.display()
        ))
    })?;
    Ok(TrainedModels {
        spec,
        baseline,
        iparams,
        probout_spec,
        probout,
    })
}

/// Train baseline, interval bounds and the two-headed network for one
/// task in one run; writes checkpoints, logs and the combined report.
pub fn run_train(
    cfg: &ExperimentConfig,
    task: Task,
    run: usize,
    out_root: &Path,
) -> Result<(TrainedModels, RunTrainReport)> {
    let paths = RunPaths::new(out_root, run);
    let (spec, baseline, base_log) = train_baseline_cmd(cfg, task, run, out_root)?;
    let (iparams, inn_log) = train_inn_cmd(cfg, task, run, out_root)?;
    let (probout_spec, probout, probout_log) = train_probout_cmd(cfg, task, run, out_root)?;
    let models = TrainedModels {
        spec,
        baseline,
        iparams,
        probout_spec,
        probout,
    };

    // held-out coverage and the identity-beating check
    let corpus = Corpus::load(&paths.corpus_dir(task))?;
    let val_pairs = task_pairs(cfg, task, &corpus, Split::Val, None)?;
    let mut covered = 0usize;
    let mut total = 0usize;
    let mut mse_model = 0.0;
    let mut mse_identity = 0.0;
    for p in &val_pairs {
        let pred = inn_forward(&models.spec, &models.iparams, &p.input)?;
        for ((&l, &u), &t) in pred
            .lower
            .data()
            .iter()
            .zip(pred.upper.data())
            .zip(p.target.data())
        {
            if l <= t && t <= u {
                covered += 1;
            }
            total += 1;
        }
        mse_model += pred.central.mse(&p.target)?;
        mse_identity += p.input.mse(&p.target)?;
    }
    let report = RunTrainReport {
        task,
        run,
        logs: vec![base_log, inn_log, probout_log],
        inn_coverage: covered as f64 / total as f64,
        val_mse_model: mse_model / val_pairs.len() as f64,
        val_mse_identity: mse_identity / val_pairs.len() as f64,
    };
    write_json(&paths.task_dir(task).join("train_log.json"), &report)?;

    Ok((models, report))
}

/// Uncertainty heatmap and reconstruction of one method on one input.
#[derive(Debug, Clone)]
pub struct MethodOutputs {
    pub u: Tensor,
    pub rec: Tensor,
}

pub fn evaluate_method(
    models: &TrainedModels,
    method: Method,
    input: &Tensor,
    mcdrop_cfg: &McDropConfig,
) -> Result<MethodOutputs> {
    match method {
        Method::Inn => {
            let pred: IntervalPrediction = inn_forward(&models.spec, &models.iparams, input)?;
            Ok(MethodOutputs {
                u: inn_uncertainty(&pred),
                rec: pred.central,
            })
        }
        Method::McDrop => {
            let (_, heat) = mcdrop_uncertainty(&models.spec, &models.baseline, input, mcdrop_cfg)?;
            let rec = forward(&models.spec, &models.baseline, input, None)?;
            Ok(MethodOutputs { u: heat, rec })
        }
        Method::ProbOut => {
            let (mean, var) = probout_forward(&models.probout_spec, &models.probout, input)?;
            Ok(MethodOutputs { u: var, rec: mean })
        }
    }
}

pub const METHODS: [Method; 3] = [Method::Inn, Method::McDrop, Method::ProbOut];

/// Per-sample attack health metrics (consumed by the acceptance suite).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackMetric {
    pub sample_id: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    /// PSNR between the adversarial and the clean network input.
    pub input_psnr_db: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentArtifacts {
    pub task: Task,
    pub experiment: Experiment,
    pub run: usize,
    pub rows: Vec<ScoreRow>,
    pub attack_metrics: Vec<AttackMetric>,
}

/// Cache of clean-input method evaluations shared between the two
/// experiments of one run.
pub type CleanCache = HashMap<(Method, usize), MethodOutputs>;

fn mcdrop_settings(cfg: &ExperimentConfig, task: Task) -> usize {
    match task {
        Task::Denoise => cfg.denoise.mcdrop.passes,
        Task::Ct => cfg.ct.mcdrop.passes,
    }
}

fn attack_config_for(cfg: &ExperimentConfig, task: Task, seed: u64) -> AttackConfig {
    let (settings, side, reference, sigma) = match task {
        Task::Denoise => (
            &cfg.denoise.attack,
            cfg.denoise.image_size,
            181,
            cfg.denoise.noise_sigma,
        ),
        Task::Ct => (&cfg.ct.attack, cfg.ct.image_size, 512, cfg.denoise.noise_sigma),
    };
    AttackConfig {
        lambda: settings.lambda,
        patch_size: settings
            .patch_size
            .unwrap_or_else(|| scaled_patch_size(side, reference)),
        max_iterations: settings.max_iterations,
        optimizer: settings.optimizer,
        noise_sigma: sigma,
        seed,
    }
}

fn squeeze(t: &Tensor) -> Result<Tensor> {
    match t.shape() {
        [1, h, w] => t.reshape(&[*h, *w]),
        [_, _] => Ok(t.clone()),
        other => Err(Error::shape("squeeze", "[1, h, w]", other)),
    }
}

/// Execute one experiment for one task in one run; emits score rows, the
/// per-sample tensors, objective traces and rendered panels.
#[allow(clippy::too_many_arguments)]
pub fn run_experiment(
    cfg: &ExperimentConfig,
    task: Task,
    experiment: Experiment,
    run: usize,
    models: &TrainedModels,
    corpus: &Corpus,
    out_root: &Path,
    clean_cache: &mut CleanCache,
) -> Result<ExperimentArtifacts> {
    let paths = RunPaths::new(out_root, run);
    let exp_dir = paths.experiment_dir(task, experiment);
    ensure_dir(&exp_dir)?;
    let run_seed = cfg.run_seed(run);

    let test_indices: Vec<usize> = corpus
        .indices(Split::Test)
        .into_iter()
        .take(cfg.test_samples)
        .collect();
    if test_indices.len() < cfg.test_samples {
        return Err(Error::config(format!(
            "{task}: test split has only {} samples, need {}",
            test_indices.len(),
            cfg.test_samples
        )));
    }

    let mcdrop_cfg_of = |sample: usize, tag: u64| McDropConfig {
        passes: mcdrop_settings(cfg, task),
        seed: derive_seed(derive_seed(run_seed, 0x3CD ^ tag), sample as u64),
    };

    // clean inputs for every test sample
    let clean_pairs: Vec<SamplePair> = test_indices
        .par_iter()
        .map(|&index| {
            let entry_seed = corpus.entry(index).seed;
            match task {
                Task::Denoise => denoise_input(
                    corpus.clean(index),
                    cfg.denoise.noise_sigma,
                    eval_noise_seed(entry_seed),
                ),
                Task::Ct => {
                    ct_input(&cfg.ct, corpus.clean(index), corpus.fbp_inversion(index).unwrap())
                }
            }
        })
        .collect::<Result<_>>()?;

    // fill the clean-evaluation cache (shared with the sibling experiment)
    let missing: Vec<(Method, usize)> = test_indices
        .iter()
        .enumerate()
        .flat_map(|(pos, &index)| METHODS.iter().map(move |&m| (m, pos, index)))
        .filter(|(m, _, index)| !clean_cache.contains_key(&(*m, *index)))
        .map(|(m, pos, _)| (m, pos))
        .collect();
    let computed: Vec<((Method, usize), MethodOutputs)> = missing
        .par_iter()
        .map(|&(method, pos)| {
            let index = test_indices[pos];
            let out = evaluate_method(
                models,
                method,
                &clean_pairs[pos].input,
                &mcdrop_cfg_of(index, 0),
            )?;
            Ok(((method, index), out))
        })
        .collect::<Result<_>>()?;
    for (key, value) in computed {
        clean_cache.insert(key, value);
    }

    // per-sample perturbed inputs, attacks, evaluations and scoring
    struct SampleOutcome {
        rows: Vec<ScoreRow>,
        attack: Option<AttackMetric>,
    }
    let outcomes: Vec<SampleOutcome> = test_indices
        .par_iter()
        .enumerate()
        .map(|(pos, &index)| -> Result<SampleOutcome> {
            let entry_seed = corpus.entry(index).seed;
            let clean_pair = &clean_pairs[pos];
            let mut attack_metric = None;

            let (perturbed_input, mask) = match experiment {
                Experiment::AdvDetect => {
                    let rec_full =
                        forward(&models.spec, &models.baseline, &clean_pair.input, None)?;
                    let rec2d = squeeze(&rec_full)?.clamp(0.0, 1.0);
                    let acfg = attack_config_for(
                        cfg,
                        task,
                        derive_seed(derive_seed(run_seed, 0xADD), index as u64),
                    );
                    let (target2d, mask2d) = match task {
                        Task::Denoise => adv_target_denoise(&rec2d, &acfg)?,
                        Task::Ct => adv_target_ct(&rec2d, &acfg)?,
                    };
                    let shape = models.spec.input_shape.clone();
                    let target = target2d.reshape(&shape)?;
                    let result = find_adversarial_input(
                        &models.spec,
                        &models.baseline,
                        &clean_pair.input,
                        &target,
                        &acfg,
                    )?;
                    attack_metric = Some(AttackMetric {
                        sample_id: index,
                        initial_objective: result.initial_objective(),
                        final_objective: result.final_objective(),
                        iterations: result.trace.len() - 1,
                        input_psnr_db: result.x_adv.psnr(&clean_pair.input)?,
                    });
                    save_tensor(&exp_dir.join(format!("s{index:04}_x_adv.ht")), &result.x_adv)?;
                    save_tensor(&exp_dir.join(format!("s{index:04}_target.ht")), &target2d)?;
                    save_tensor(&exp_dir.join(format!("s{index:04}_mask.ht")), &mask2d)?;
                    write_trace_csv(
                        &exp_dir.join(format!("s{index:04}_trace.csv")),
                        &result.trace,
                    )?;
                    (result.x_adv, Some(mask2d))
                }
                Experiment::ArtDetect => match task {
                    Task::Denoise => {
                        let noise_model = NoiseModel::gaussian(
                            cfg.denoise.noise_sigma,
                            eval_noise_seed(entry_seed),
                        )?;
                        let side_seed = derive_seed(derive_seed(run_seed, 0x51DE), index as u64);
                        let side = if rng_from_seed(side_seed).gen::<bool>() {
                            Side::Left
                        } else {
                            Side::Right
                        };
                        let ((ood, _clean), mask) = salt_pepper_half(
                            corpus.clean(index),
                            cfg.denoise.ood.salt_pepper_amount,
                            side,
                            &noise_model,
                            derive_seed(derive_seed(run_seed, 0x5A17), index as u64),
                        )?;
                        let shape = models.spec.input_shape.clone();
                        (ood.reshape(&shape)?, Some(mask))
                    }
                    Task::Ct => {
                        let (ood_phantom, mask) = place_bird_silhouette(
                            corpus.clean(index),
                            cfg.ct.ood.silhouette_intensity,
                            cfg.ct.ood.silhouette_area,
                            derive_seed(derive_seed(run_seed, 0xB12D), index as u64),
                        )?;
                        let pair = ct_input_from_phantom(&cfg.ct, &ood_phantom)?;
                        (pair.input, Some(mask))
                    }
                },
            };
            save_tensor(
                &exp_dir.join(format!("s{index:04}_perturbed_input.ht")),
                &perturbed_input,
            )?;

            let mut rows = Vec::with_capacity(METHODS.len());
            for method in METHODS {
                let clean = &clean_cache[&(method, index)];
                let perturbed = evaluate_method(
                    models,
                    method,
                    &perturbed_input,
                    &mcdrop_cfg_of(index, 1),
                )?;

                let mut record = DetectionRecord {
                    sample_id: index,
                    method,
                    task,
                    experiment,
                    run,
                    u_clean: squeeze(&clean.u)?,
                    u_perturbed: squeeze(&perturbed.u)?,
                    rec_clean: squeeze(&clean.rec)?,
                    rec_perturbed: squeeze(&perturbed.rec)?,
                    mask: mask.clone(),
                    pearson_r: None,
                };
                rows.push(record.score()?);

                if pos < PANEL_SAMPLES {
                    render_panels(
                        &exp_dir.join("panels"),
                        &record,
                        &clean_pair.input,
                        &perturbed_input,
                    )?;
                }
            }
            Ok(SampleOutcome {
                rows,
                attack: attack_metric,
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut attack_metrics = Vec::new();
    for o in outcomes {
        rows.extend(o.rows);
        if let Some(m) = o.attack {
            attack_metrics.push(m);
        }
    }
    rows.sort_by_key(|r| (r.run, r.sample_id, r.method));
    attack_metrics.sort_by_key(|m| m.sample_id);
    write_rows_csv(&exp_dir.join("records.csv"), &rows)?;
    let artifacts = ExperimentArtifacts {
        task,
        experiment,
        run,
        rows,
        attack_metrics,
    };
    write_json(&exp_dir.join("summary.json"), &artifacts)?;
    Ok(artifacts)
}

fn write_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut text = String::from("iteration,objective\n");
    for (i, v) in trace.iter().enumerate() {
        text.push_str(&format!("{i},{v}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_rows_csv(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut text = String::from(ScoreRow::csv_header());
    text.push('\n');
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// The figure-style panel set: input, perturbed input, perturbed
/// reconstruction, perturbed uncertainty, reconstruction difference.
fn render_panels(
    dir: &Path,
    record: &DetectionRecord,
    clean_input: &Tensor,
    perturbed_input: &Tensor,
) -> Result<()> {
    ensure_dir(dir)?;
    let tag = format!("s{:04}_{}", record.sample_id, record.method);
    let unit = (0.0, 1.0);
    render_heatmap(&squeeze(clean_input)?, unit, &dir.join(format!("{tag}_input.png")))?;
    render_heatmap(
        &squeeze(perturbed_input)?,
        unit,
        &dir.join(format!("{tag}_perturbed_input.png")),
    )?;
    render_heatmap(
        &record.rec_perturbed,
        unit,
        &dir.join(format!("{tag}_perturbed_rec.png")),
    )?;
    let u = &record.u_perturbed;
    render_heatmap(
        u,
        full_range_window(u),
        &dir.join(format!("{tag}_perturbed_uncert.png")),
    )?;
    let diff = record.rec_clean.sub(&record.rec_perturbed)?.abs();
    render_heatmap(
        &diff,
        full_range_window(&diff),
        &dir.join(format!("{tag}_rec_difference.png")),
    )?;
    Ok(())
}
