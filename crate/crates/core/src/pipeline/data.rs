//! Corpus generation, manifests, and the per-task input pipelines that
//! turn a clean image into the network input.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_tensor, save_tensor};
use crate::config::{CtTaskConfig, DenoiseTaskConfig};
use crate::error::{Error, Result};
use crate::evaluation::Task;
use crate::operators::{
    add_noise, fbp, make_phantom, radon, Filter, NoiseModel, PhantomKind, RadonGeometry,
};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub file: String,
    pub seed: u64,
    pub split: Split,
    pub kind: String,
    /// For tomography samples: the cached model-based inversion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fbp_file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub task: Task,
    pub image_size: usize,
    pub entries: Vec<CorpusEntry>,
}

/// Contiguous 8/1/1 split by index blocks.
fn split_of(index: usize, total: usize) -> Split {
    let train_end = total * 8 / 10;
    let val_end = total * 9 / 10;
    if index < train_end {
        Split::Train
    } else if index < val_end {
        Split::Val
    } else {
        Split::Test
    }
}

pub fn ct_geometry(cfg: &CtTaskConfig) -> Result<RadonGeometry> {
    RadonGeometry::with_missing_wedge(cfg.image_size, cfg.num_angles, cfg.missing_wedge)
}

/// Map an FBP output onto [0, 1] with the fixed window from the config.
pub fn rescale_fbp(img: &Tensor, window: (f64, f64)) -> Tensor {
    let (lo, hi) = window;
    img.map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
}

/// Generate the denoising corpus: procedural textures persisted as
/// tensor files plus a manifest.
pub fn gen_denoise_corpus(cfg: &DenoiseTaskConfig, dir: &Path) -> Result<CorpusManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let entries: Vec<CorpusEntry> = (0..cfg.corpus_size)
        .into_par_iter()
        .map(|i| -> Result<CorpusEntry> {
            let seed = derive_seed(cfg.corpus_seed, i as u64);
            let img = make_phantom(PhantomKind::Texture, cfg.image_size, seed)?;
            let file = format!("texture_{i:04}.ht");
            save_tensor(&dir.join(&file), &img)?;
            Ok(CorpusEntry {
                file,
                seed,
                split: split_of(i, cfg.corpus_size),
                kind: "texture".into(),
                fbp_file: None,
            })
        })
        .collect::<Result<_>>()?;
    let manifest = CorpusManifest {
        version: 1,
        task: Task::Denoise,
        image_size: cfg.image_size,
        entries,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Generate the tomography corpus: random-ellipse phantoms plus their
/// cached limited-angle FBP inversions.
pub fn gen_ct_corpus(cfg: &CtTaskConfig, dir: &Path) -> Result<CorpusManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let geom = ct_geometry(cfg)?;
    let entries: Vec<CorpusEntry> = (0..cfg.corpus_size)
        .into_par_iter()
        .map(|i| -> Result<CorpusEntry> {
            let seed = derive_seed(cfg.corpus_seed, i as u64);
            let img = make_phantom(PhantomKind::RandomEllipses, cfg.image_size, seed)?;
            let sino = radon(&img, &geom)?;
            let rec = fbp(&sino, &geom, Filter::Ramp)?;
            let file = format!("phantom_{i:04}.ht");
            let fbp_file = format!("fbp_{i:04}.ht");
            save_tensor(&dir.join(&file), &img)?;
            save_tensor(&dir.join(&fbp_file), &rec)?;
            Ok(CorpusEntry {
                file,
                seed,
                split: split_of(i, cfg.corpus_size),
                kind: "random_ellipses".into(),
                fbp_file: Some(fbp_file),
            })
        })
        .collect::<Result<_>>()?;
    let manifest = CorpusManifest {
        version: 1,
        task: Task::Ct,
        image_size: cfg.image_size,
        entries,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

fn write_manifest(dir: &Path, manifest: &CorpusManifest) -> Result<()> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_manifest(dir: &Path) -> Result<CorpusManifest> {
    let path = dir.join("manifest.json");
    let text =
        std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One training/evaluation sample: network input and clean target, both
/// shaped [1, s, s].
#[derive(Debug, Clone)]
pub struct SamplePair {
    pub input: Tensor,
    pub target: Tensor,
}

/// In-memory corpus with cached clean images (and FBP inversions for CT).
pub struct Corpus {
    pub manifest: CorpusManifest,
    images: Vec<Tensor>,
    fbps: Vec<Option<Tensor>>,
}

impl Corpus {
    pub fn load(dir: &Path) -> Result<Corpus> {
        let manifest = load_manifest(dir)?;
        let mut images = Vec::with_capacity(manifest.entries.len());
        let mut fbps = Vec::with_capacity(manifest.entries.len());
        for e in &manifest.entries {
            images.push(load_tensor(&dir.join(&e.file))?);
            fbps.push(match &e.fbp_file {
                Some(f) => Some(load_tensor(&dir.join(f))?),
                None => None,
            });
        }
        Ok(Corpus {
            manifest,
            images,
            fbps,
        })
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn clean(&self, index: usize) -> &Tensor {
        &self.images[index]
    }

    pub fn fbp_inversion(&self, index: usize) -> Option<&Tensor> {
        self.fbps[index].as_ref()
    }

    pub fn entry(&self, index: usize) -> &CorpusEntry {
        &self.manifest.entries[index]
    }
}

/// Build the denoising network input for a corpus sample with an explicit
/// noise stream: clip(clean + noise, [0, 1]), shaped [1, s, s].
pub fn denoise_input(
    clean: &Tensor,
    sigma: f64,
    noise_seed: u64,
) -> Result<SamplePair> {
    let s = clean.shape()[0];
    let noisy = add_noise(clean, &NoiseModel::gaussian(sigma, noise_seed)?)?
        .clamp(0.0, 1.0)
        .reshape(&[1, s, s])?;
    Ok(SamplePair {
        input: noisy,
        target: clean.reshape(&[1, s, s])?,
    })
}

/// Fixed per-sample noise stream used for validation/test inputs (stable
/// across epochs and runs).
pub fn eval_noise_seed(entry_seed: u64) -> u64 {
    derive_seed(entry_seed, 0xEAA1)
}

/// Epoch-varying noise stream for training inputs.
pub fn train_noise_seed(entry_seed: u64, epoch: usize) -> u64 {
    derive_seed(derive_seed(entry_seed, 0x7124), epoch as u64)
}

/// Build the tomography network input from a cached FBP inversion.
pub fn ct_input(cfg: &CtTaskConfig, clean: &Tensor, fbp_rec: &Tensor) -> Result<SamplePair> {
    let s = clean.shape()[0];
    Ok(SamplePair {
        input: rescale_fbp(fbp_rec, cfg.fbp_window).reshape(&[1, s, s])?,
        target: clean.reshape(&[1, s, s])?,
    })
}

/// Recompute a tomography input from a (possibly modified) phantom
/// through the full operator pipeline.
pub fn ct_input_from_phantom(cfg: &CtTaskConfig, phantom: &Tensor) -> Result<SamplePair> {
    let geom = ct_geometry(cfg)?;
    let sino = radon(phantom, &geom)?;
    let rec = fbp(&sino, &geom, Filter::Ramp)?;
    ct_input(cfg, phantom, &rec)
}
