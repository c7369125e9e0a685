//! Experiment harness: data generation, training, attacks, OoD inputs,
//! scoring, rendering, and the full benchmark table.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use uqrecon::attacks::{adv_target_ct, adv_target_denoise, find_adversarial_input, AttackConfig};
use uqrecon::checkpoint::{load_params, load_tensor, save_tensor};
use uqrecon::config::ExperimentConfig;
use uqrecon::error::Error;
use uqrecon::evaluation::{Experiment, Task};
use uqrecon::nn::forward;
use uqrecon::operators::NoiseModel;
use uqrecon::pipeline::{
    self, data, ensure_corpora, load_models, run_experiment, train_baseline_cmd,
    train_inn_cmd, train_probout_cmd, Corpus, RunPaths,
};
use uqrecon::render::render_heatmap;
use uqrecon::rng::derive_seed;

#[derive(Parser)]
#[command(name = "uqrecon", version, about = "Uncertainty-based instability detection for learned image reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Denoise,
    Ct,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Denoise => Task::Denoise,
            TaskArg::Ct => Task::Ct,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Advdetect,
    Artdetect,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Experiment {
        match e {
            ExperimentArg::Advdetect => Experiment::AdvDetect,
            ExperimentArg::Artdetect => Experiment::ArtDetect,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OodMode {
    Saltpepper,
    Silhouette,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (JSON); defaults to the built-in
    /// desk-scale configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; overrides the config and the UQRECON_OUT variable.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), Error> {
        let cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::desk_default(),
        };
        cfg.validate()?;
        let out = cfg.resolve_out_root(self.out.as_deref());
        Ok((cfg, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpora for both tasks.
    GenData {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the baseline reconstruction network.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Fine-tune interval bounds around a trained baseline.
    TrainInn {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Train the two-headed mean/variance network from a trained baseline.
    TrainProbout {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Build adversarial inputs against a stored checkpoint.
    Attack {
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Baseline checkpoint to attack.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        lambda: f64,
        /// Patch side length in pixels.
        #[arg(long)]
        patch: usize,
        #[arg(long)]
        iters: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Corpus directory (defaults to <out root>/corpus/<task>).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of test samples to attack.
        #[arg(long, default_value_t = 5)]
        samples: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build out-of-distribution inputs with ground-truth masks.
    Ood {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, value_enum)]
        mode: OodMode,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        samples: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score one experiment using stored checkpoints.
    Score {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, value_enum)]
        experiment: ExperimentArg,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Render a stored tensor as an 8-bit grayscale PNG.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full benchmark: corpora, all runs and tasks, both
    /// experiments, and the aggregated summary table.
    ReproduceTable1 {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Contract(_) => ExitCode::from(2),
                Error::Numerical(_) | Error::DegenerateSample => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::GenData { common } => {
            let (cfg, out) = common.load()?;
            ensure_corpora(&cfg, &out)?;
            println!("corpora ready under {}", out.display());
            Ok(())
        }
        Command::Train { common, task, run } => {
            let (cfg, out) = common.load()?;
            let task = Task::from(task);
            ensure_corpora(&cfg, &out)?;
            let (_, _, log) = train_baseline_cmd(&cfg, task, run, &out)?;
            println!(
                "baseline trained: best val loss {:.6} (epoch {})",
                log.best_val_loss, log.best_epoch
            );
            Ok(())
        }
        Command::TrainInn { common, task, run } => {
            let (cfg, out) = common.load()?;
            let (_, log) = train_inn_cmd(&cfg, Task::from(task), run, &out)?;
            println!(
                "interval bounds trained: best val loss {:.6} (epoch {})",
                log.best_val_loss, log.best_epoch
            );
            Ok(())
        }
        Command::TrainProbout { common, task, run } => {
            let (cfg, out) = common.load()?;
            let (_, _, log) = train_probout_cmd(&cfg, Task::from(task), run, &out)?;
            println!(
                "two-headed network trained: best val loss {:.6} (epoch {})",
                log.best_val_loss, log.best_epoch
            );
            Ok(())
        }
        Command::Attack {
            task,
            checkpoint,
            lambda,
            patch,
            iters,
            seed,
            out,
            data,
            samples,
            config,
        } => attack_cmd(
            Task::from(task),
            &checkpoint,
            lambda,
            patch,
            iters,
            seed,
            &out,
            data.as_deref(),
            samples,
            config.as_deref(),
        ),
        Command::Ood {
            task,
            mode,
            seed,
            out,
            data,
            samples,
            config,
        } => ood_cmd(
            Task::from(task),
            mode,
            seed,
            &out,
            data.as_deref(),
            samples,
            config.as_deref(),
        ),
        Command::Score {
            common,
            task,
            experiment,
            run,
        } => {
            let (cfg, out) = common.load()?;
            let task = Task::from(task);
            let models = load_models(&cfg, task, run, &out)?;
            let corpus = Corpus::load(&RunPaths::new(&out, run).corpus_dir(task))?;
            let mut cache = Default::default();
            let artifacts = run_experiment(
                &cfg,
                task,
                Experiment::from(experiment),
                run,
                &models,
                &corpus,
                &out,
                &mut cache,
            )?;
            let scored: Vec<f64> = artifacts.rows.iter().filter_map(|r| r.r).collect();
            let mean = scored.iter().sum::<f64>() / scored.len().max(1) as f64;
            println!(
                "{} {} run {}: mean r over {} rows = {:.4}",
                artifacts.task,
                artifacts.experiment,
                run,
                scored.len(),
                mean
            );
            Ok(())
        }
        Command::Render { input, lo, hi, out } => {
            let t = load_tensor(&input)?;
            render_heatmap(&t, (lo, hi), &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::ReproduceTable1 { common } => {
            let (cfg, out) = common.load()?;
            let summary = pipeline::reproduce_table1(&cfg, &out)?;
            println!("{:<8} {:<10} {:<10} {:>8} {:>8}", "method", "task", "experiment", "mean", "std");
            for row in &summary.table {
                println!(
                    "{:<8} {:<10} {:<10} {:>8.3} {:>8.3}",
                    row.method.to_string(),
                    row.task.to_string(),
                    row.experiment.to_string(),
                    row.mean_r,
                    row.std_r
                );
            }
            println!("summary written to {}", out.join("summary").display());
            Ok(())
        }
    }
}

fn config_or_default(path: Option<&Path>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::desk_default()),
    }
}

fn corpus_dir_for(
    cfg: &ExperimentConfig,
    task: Task,
    data: Option<&Path>,
    out_flag: Option<&Path>,
) -> PathBuf {
    match data {
        Some(d) => d.to_path_buf(),
        None => RunPaths::new(&cfg.resolve_out_root(out_flag), 0).corpus_dir(task),
    }
}

#[allow(clippy::too_many_arguments)]
fn attack_cmd(
    task: Task,
    checkpoint: &Path,
    lambda: f64,
    patch: usize,
    iters: usize,
    seed: u64,
    out: &Path,
    data: Option<&Path>,
    samples: usize,
    config: Option<&Path>,
) -> Result<(), Error> {
    let cfg = config_or_default(config)?;
    let (spec, params) = load_params(checkpoint)?;
    let corpus_dir = corpus_dir_for(&cfg, task, data, None);
    let corpus = Corpus::load(&corpus_dir).map_err(|e| {
        Error::config(format!(
            "cannot load corpus from {} ({e}); run `uqrecon gen-data` first or pass --data",
            corpus_dir.display()
        ))
    })?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;

    let test = corpus.indices(data::Split::Test);
    let noise_sigma = cfg.denoise.noise_sigma;
    for (k, &index) in test.iter().take(samples).enumerate() {
        let entry_seed = corpus.entry(index).seed;
        let pair = match task {
            Task::Denoise => data::denoise_input(
                corpus.clean(index),
                noise_sigma,
                data::eval_noise_seed(entry_seed),
            )?,
            Task::Ct => data::ct_input(
                &cfg.ct,
                corpus.clean(index),
                corpus.fbp_inversion(index).ok_or_else(|| {
                    Error::config("corpus lacks cached inversions; regenerate with gen-data")
                })?,
            )?,
        };
        let acfg = AttackConfig {
            lambda,
            patch_size: patch,
            max_iterations: iters,
            optimizer: uqrecon::attacks::AttackOptimizer::Lbfgs,
            noise_sigma,
            seed: derive_seed(seed, index as u64),
        };
        let rec = forward(&spec, &params, &pair.input, None)?;
        let side = rec.shape()[1];
        let rec2d = rec.reshape(&[side, side])?.clamp(0.0, 1.0);
        let (target2d, mask) = match task {
            Task::Denoise => adv_target_denoise(&rec2d, &acfg)?,
            Task::Ct => adv_target_ct(&rec2d, &acfg)?,
        };
        let target = target2d.reshape(&spec.input_shape)?;
        let result = find_adversarial_input(&spec, &params, &pair.input, &target, &acfg)?;

        save_tensor(&out.join(format!("s{index:04}_x_adv.ht")), &result.x_adv)?;
        save_tensor(&out.join(format!("s{index:04}_target.ht")), &target2d)?;
        save_tensor(&out.join(format!("s{index:04}_mask.ht")), &mask)?;
        let mut csv = String::from("iteration,objective\n");
        for (i, v) in result.trace.iter().enumerate() {
            csv.push_str(&format!("{i},{v}\n"));
        }
        let trace_path = out.join(format!("s{index:04}_trace.csv"));
        std::fs::write(&trace_path, csv)
            .map_err(|e| Error::io(trace_path.display().to_string(), e))?;
        println!(
            "sample {index}: objective {:.4e} -> {:.4e} in {} accepted steps",
            result.initial_objective(),
            result.final_objective(),
            result.trace.len() - 1
        );
        let _ = k;
    }
    Ok(())
}

fn ood_cmd(
    task: Task,
    mode: OodMode,
    seed: u64,
    out: &Path,
    data: Option<&Path>,
    samples: usize,
    config: Option<&Path>,
) -> Result<(), Error> {
    let cfg = config_or_default(config)?;
    if matches!(mode, OodMode::Saltpepper) && task != Task::Denoise {
        return Err(Error::config(
            "salt & pepper replaces the denoising noise model and only applies to --task denoise",
        ));
    }
    let corpus_dir = corpus_dir_for(&cfg, task, data, None);
    let corpus = Corpus::load(&corpus_dir).map_err(|e| {
        Error::config(format!(
            "cannot load corpus from {} ({e}); run `uqrecon gen-data` first or pass --data",
            corpus_dir.display()
        ))
    })?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;

    let mut manifest = Vec::new();
    for &index in corpus.indices(data::Split::Test).iter().take(samples) {
        let clean = corpus.clean(index);
        let sample_seed = derive_seed(seed, index as u64);
        let (ood_input, mask) = match mode {
            OodMode::Saltpepper => {
                let noise = NoiseModel::gaussian(
                    cfg.denoise.noise_sigma,
                    data::eval_noise_seed(corpus.entry(index).seed),
                )?;
                let side = if sample_seed % 2 == 0 {
                    uqrecon::ood::Side::Left
                } else {
                    uqrecon::ood::Side::Right
                };
                let ((ood, _), mask) = uqrecon::ood::salt_pepper_half(
                    clean,
                    cfg.denoise.ood.salt_pepper_amount,
                    side,
                    &noise,
                    sample_seed,
                )?;
                (ood, mask)
            }
            OodMode::Silhouette => {
                let intensity = match task {
                    Task::Ct => cfg.ct.ood.silhouette_intensity,
                    Task::Denoise => 1.0,
                };
                let area = match task {
                    Task::Ct => cfg.ct.ood.silhouette_area,
                    Task::Denoise => 0.03,
                };
                let (ood_img, mask) =
                    uqrecon::ood::place_bird_silhouette(clean, intensity, area, sample_seed)?;
                match task {
                    // measurements and inversion re-simulated downstream
                    Task::Ct => {
                        let pair = data::ct_input_from_phantom(&cfg.ct, &ood_img)?;
                        let side = ood_img.shape()[0];
                        (pair.input.reshape(&[side, side])?, mask)
                    }
                    Task::Denoise => (ood_img, mask),
                }
            }
        };
        let input_file = format!("s{index:04}_ood_input.ht");
        let mask_file = format!("s{index:04}_mask.ht");
        save_tensor(&out.join(&input_file), &ood_input)?;
        save_tensor(&out.join(&mask_file), &mask)?;
        manifest.push(serde_json::json!({
            "sample_id": index,
            "input": input_file,
            "mask": mask_file,
            "seed": sample_seed,
        }));
    }
    let manifest_path = out.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "task": task.to_string(),
            "mode": match mode { OodMode::Saltpepper => "saltpepper", OodMode::Silhouette => "silhouette" },
            "seed": seed,
            "entries": manifest,
        }))?,
    )
    .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    println!("OoD inputs written to {}", out.display());
    Ok(())
}
