//! Experiment configuration: a single versioned JSON document that
//! round-trips losslessly. CLI flags override individual fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::AttackOptimizer;
use crate::error::{Error, Result};
use crate::evaluation::Task;

pub const CONFIG_VERSION: u32 = 1;
pub const OUT_ROOT_ENV: &str = "UQRECON_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnSettings {
    /// Width-penalty weight of the interval loss.
    pub beta: f64,
    /// Number of trailing parametric layers propagated with intervals.
    pub interval_layers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McDropSettings {
    pub passes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSettings {
    pub lambda: f64,
    pub max_iterations: usize,
    pub optimizer: AttackOptimizer,
    /// None: derive from the image side with the reference-scale ratio.
    pub patch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseOodSettings {
    /// Fraction of pixels replaced by salt & pepper in the affected half.
    pub salt_pepper_amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtOodSettings {
    /// Intensity of the inserted silhouette (image maximum by default).
    pub silhouette_intensity: f64,
    /// Silhouette area as a fraction of the image.
    pub silhouette_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseTaskConfig {
    pub image_size: usize,
    pub corpus_size: usize,
    pub corpus_seed: u64,
    pub noise_sigma: f64,
    pub channels: usize,
    pub conv_layers: usize,
    pub dropout_rate: f64,
    pub train: TrainSettings,
    pub inn: InnSettings,
    pub mcdrop: McDropSettings,
    pub probout: TrainSettings,
    pub attack: AttackSettings,
    pub ood: DenoiseOodSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtTaskConfig {
    pub image_size: usize,
    pub corpus_size: usize,
    pub corpus_seed: u64,
    pub num_angles: usize,
    pub missing_wedge: (f64, f64),
    /// Fixed affine intensity window mapping FBP output onto [0, 1]
    /// (values outside are clamped); recorded here so every experiment
    /// shares the same convention.
    pub fbp_window: (f64, f64),
    pub base_channels: usize,
    pub dropout_rate: f64,
    pub train: TrainSettings,
    pub inn: InnSettings,
    pub mcdrop: McDropSettings,
    pub probout: TrainSettings,
    pub attack: AttackSettings,
    pub ood: CtOodSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub master_seed: u64,
    /// Number of full retraining runs.
    pub runs: usize,
    /// Test samples evaluated per task and experiment.
    pub test_samples: usize,
    /// Output root; the CLI flag and then the environment variable
    /// override this.
    pub out_root: Option<PathBuf>,
    pub denoise: DenoiseTaskConfig,
    pub ct: CtTaskConfig,
}

impl ExperimentConfig {
    /// Desk-scale defaults sized so the full three-run pipeline completes
    /// on a small CPU box.
    pub fn desk_default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            master_seed: 20240521,
            runs: 3,
            test_samples: 30,
            out_root: None,
            denoise: DenoiseTaskConfig {
                image_size: 48,
                corpus_size: 400,
                corpus_seed: 1001,
                noise_sigma: 25.0 / 255.0,
                channels: 32,
                conv_layers: 6,
                dropout_rate: 0.05,
                train: TrainSettings {
                    epochs: 10,
                    learning_rate: 1e-4,
                    batch_size: 16,
                },
                inn: InnSettings {
                    beta: 1e-3,
                    interval_layers: 3,
                    epochs: 4,
                    learning_rate: 1e-4,
                    batch_size: 16,
                },
                mcdrop: McDropSettings { passes: 32 },
                probout: TrainSettings {
                    epochs: 6,
                    learning_rate: 1e-4,
                    batch_size: 16,
                },
                attack: AttackSettings {
                    lambda: 0.5,
                    max_iterations: 150,
                    optimizer: AttackOptimizer::Lbfgs,
                    patch_size: None,
                },
                ood: DenoiseOodSettings {
                    salt_pepper_amount: 0.1,
                },
            },
            ct: CtTaskConfig {
                image_size: 128,
                corpus_size: 400,
                corpus_seed: 2002,
                num_angles: 180,
                missing_wedge: (75.0, 105.0),
                fbp_window: (-0.25, 1.05),
                base_channels: 16,
                dropout_rate: 0.7,
                train: TrainSettings {
                    epochs: 16,
                    learning_rate: 7.5e-5,
                    batch_size: 4,
                },
                inn: InnSettings {
                    beta: 1e-4,
                    interval_layers: 3,
                    epochs: 6,
                    learning_rate: 1e-4,
                    batch_size: 4,
                },
                mcdrop: McDropSettings { passes: 16 },
                probout: TrainSettings {
                    epochs: 8,
                    learning_rate: 7.5e-5,
                    batch_size: 4,
                },
                attack: AttackSettings {
                    lambda: 0.0,
                    max_iterations: 100,
                    optimizer: AttackOptimizer::Lbfgs,
                    patch_size: None,
                },
                ood: CtOodSettings {
                    silhouette_intensity: 1.0,
                    silhouette_area: 0.03,
                },
            },
        }
    }

    /// A heavily reduced variant for smoke tests and the determinism
    /// check; same code paths, minutes instead of an hour.
    pub fn smoke(seed: u64) -> Self {
        let mut c = Self::desk_default();
        c.master_seed = seed;
        c.test_samples = 4;
        c.denoise.corpus_size = 40;
        c.denoise.image_size = 32;
        c.denoise.channels = 8;
        c.denoise.train.epochs = 2;
        c.denoise.train.learning_rate = 1e-3;
        c.denoise.inn.epochs = 2;
        c.denoise.inn.learning_rate = 1e-3;
        c.denoise.probout.epochs = 3;
        c.denoise.probout.learning_rate = 1e-3;
        c.denoise.mcdrop.passes = 8;
        c.denoise.attack.max_iterations = 15;
        c.ct.corpus_size = 40;
        c.ct.image_size = 32;
        c.ct.num_angles = 60;
        c.ct.base_channels = 4;
        c.ct.train.epochs = 2;
        c.ct.train.learning_rate = 1e-3;
        c.ct.inn.epochs = 2;
        c.ct.inn.learning_rate = 1e-3;
        c.ct.probout.epochs = 3;
        c.ct.probout.learning_rate = 1e-3;
        c.ct.mcdrop.passes = 4;
        c.ct.attack.max_iterations = 15;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.runs == 0 || self.test_samples == 0 {
            return Err(Error::config("runs and test_samples must be positive"));
        }
        for (name, corpus, test) in [
            ("denoise", self.denoise.corpus_size, self.test_samples),
            ("ct", self.ct.corpus_size, self.test_samples),
        ] {
            // 8/1/1 split must leave enough test images
            if corpus / 10 < test {
                return Err(Error::config(format!(
                    "{name}: corpus of {corpus} leaves fewer than {test} test images"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.denoise.dropout_rate)
            || !(0.0..1.0).contains(&self.ct.dropout_rate)
        {
            return Err(Error::config("dropout rates must lie in [0, 1)"));
        }
        if self.denoise.ood.salt_pepper_amount <= 0.0
            || self.denoise.ood.salt_pepper_amount > 1.0
        {
            return Err(Error::config("salt & pepper amount must lie in (0, 1]"));
        }
        if self.ct.fbp_window.0 >= self.ct.fbp_window.1 {
            return Err(Error::config("fbp window must have lo < hi"));
        }
        if self.denoise.conv_layers < 2 {
            return Err(Error::config("denoise net needs at least 2 conv layers"));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Resolve the output root: explicit flag, then config, then the
    /// environment variable, then ./uqrecon-out.
    pub fn resolve_out_root(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.out_root {
            return p.clone();
        }
        if let Ok(p) = std::env::var(OUT_ROOT_ENV) {
            if !p.is_empty() {
                return PathBuf::from(p);
            }
        }
        PathBuf::from("uqrecon-out")
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        crate::rng::derive_seed(self.master_seed, 0x52_55_4E ^ run as u64)
    }

    pub fn task_attack(&self, task: Task) -> &AttackSettings {
        match task {
            Task::Denoise => &self.denoise.attack,
            Task::Ct => &self.ct.attack,
        }
    }
}
