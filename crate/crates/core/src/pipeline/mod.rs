//! End-to-end orchestration: corpus generation, per-run training, the two
//! detection experiments, aggregation, and the reproducible benchmark
//! table.

pub mod data;
pub mod experiments;
pub mod nets;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, Experiment, ScoreRow, SummaryRow, Task};

pub use data::{gen_ct_corpus, gen_denoise_corpus, Corpus};
pub use experiments::{
    load_models, train_baseline_cmd, train_inn_cmd, train_probout_cmd,
    run_experiment, run_train, AttackMetric, CleanCache, ExperimentArtifacts, RunPaths,
    TrainedModels,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
}

impl OutputManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        OutputManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Generate (or reuse, when already present and size-consistent) the
/// corpora for both tasks.
pub fn ensure_corpora(cfg: &ExperimentConfig, out_root: &Path) -> Result<()> {
    let paths = RunPaths::new(out_root, 0);
    for task in [Task::Denoise, Task::Ct] {
        let dir = paths.corpus_dir(task);
        let expected = match task {
            Task::Denoise => cfg.denoise.corpus_size,
            Task::Ct => cfg.ct.corpus_size,
        };
        let reuse = data::load_manifest(&dir)
            .map(|m| m.entries.len() == expected)
            .unwrap_or(false);
        if !reuse {
            match task {
                Task::Denoise => {
                    gen_denoise_corpus(&cfg.denoise, &dir)?;
                }
                Task::Ct => {
                    gen_ct_corpus(&cfg.ct, &dir)?;
                }
            }
        }
    }
    Ok(())
}

/// Per-(task, run) health numbers surfaced in the benchmark summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunHealth {
    pub task: Task,
    pub run: usize,
    pub inn_coverage: f64,
    pub val_mse_model: f64,
    pub val_mse_identity: f64,
    pub attack: Vec<AttackMetric>,
}

/// The aggregated benchmark output: one row per (task, experiment,
/// method) plus per-run health data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub runs: usize,
    pub test_samples: usize,
    /// Population standard deviation across runs is reported.
    pub std_convention: String,
    pub table: Vec<SummaryRow>,
    pub health: Vec<RunHealth>,
}

/// Run the full pipeline: corpora, `runs` independent trainings per task,
/// both detection experiments, and the aggregated summary table. Returns
/// the summary; all artifacts land under `out_root`.
pub fn reproduce_table1(cfg: &ExperimentConfig, out_root: &Path) -> Result<BenchmarkSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_root)
        .map_err(|e| Error::io(out_root.display().to_string(), e))?;
    write_json(&out_root.join("manifest.json"), &OutputManifest::new(cfg))?;
    ensure_corpora(cfg, out_root)?;

    let mut all_rows: Vec<ScoreRow> = Vec::new();
    let mut health = Vec::new();

    for run in 0..cfg.runs {
        for task in [Task::Denoise, Task::Ct] {
            let paths = RunPaths::new(out_root, run);
            let corpus = Corpus::load(&paths.corpus_dir(task))?;
            let (models, report) = run_train(cfg, task, run, out_root)?;
            write_json(
                &paths.task_dir(task).join("manifest.json"),
                &OutputManifest::new(cfg),
            )?;

            let mut cache: CleanCache = Default::default();
            let adv = run_experiment(
                cfg,
                task,
                Experiment::AdvDetect,
                run,
                &models,
                &corpus,
                out_root,
                &mut cache,
            )?;
            let art = run_experiment(
                cfg,
                task,
                Experiment::ArtDetect,
                run,
                &models,
                &corpus,
                out_root,
                &mut cache,
            )?;

            health.push(RunHealth {
                task,
                run,
                inn_coverage: report.inn_coverage,
                val_mse_model: report.val_mse_model,
                val_mse_identity: report.val_mse_identity,
                attack: adv.attack_metrics.clone(),
            });

            all_rows.extend(adv.rows);
            all_rows.extend(art.rows);
        }
    }

    all_rows.sort_by_key(|r| (r.task, r.experiment, r.method, r.run, r.sample_id));
    let table = aggregate(&all_rows)?;

    let summary = BenchmarkSummary {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.master_seed,
        runs: cfg.runs,
        test_samples: cfg.test_samples,
        std_convention: "population".to_string(),
        table,
        health,
    };

    let summary_dir = out_root.join("summary");
    std::fs::create_dir_all(&summary_dir)
        .map_err(|e| Error::io(summary_dir.display().to_string(), e))?;
    experiments::write_rows_csv(&summary_dir.join("results.csv"), &all_rows)?;
    write_json(&summary_dir.join("table1.json"), &summary)?;
    Ok(summary)
}
