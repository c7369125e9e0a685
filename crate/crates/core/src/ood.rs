//! Out-of-distribution test inputs with ground-truth region masks:
//! a local noise-distribution swap (salt & pepper in one image half) and
//! a bright foreign-object silhouette.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{add_noise, NoiseModel};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Replace the noise process in one image half by salt & pepper: a
/// fraction `amount` of that half's pixels is forced to exactly 0 or 1
/// (fair coin), the rest of the half stays clean, and the other half
/// carries the standard Gaussian noise. Returns the (input, clean target)
/// pair and the binary mask marking the replaced half.
pub fn salt_pepper_half(
    clean: &Tensor,
    amount: f64,
    side: Side,
    noise: &NoiseModel,
    seed: u64,
) -> Result<((Tensor, Tensor), Tensor)> {
    if !(amount > 0.0 && amount <= 1.0) {
        return Err(Error::config(format!(
            "salt & pepper amount must lie in (0, 1], got {amount}"
        )));
    }
    let (h, w) = image_dims(clean)?;
    let noisy = add_noise(clean, noise)?.clamp(0.0, 1.0);

    let mut mask = Tensor::zeros(&[h, w]);
    let in_half = |x: usize| match side {
        Side::Left => x < w / 2,
        Side::Right => x >= w / 2,
    };
    let mut half_pixels = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if in_half(x) {
                mask.set2(y, x, 1.0);
                half_pixels.push(y * w + x);
            }
        }
    }

    // exact corrupted count, uniform without replacement
    let mut rng = rng_from_seed(derive_seed(seed, 0x5A17));
    half_pixels.shuffle(&mut rng);
    let n_corrupt = ((half_pixels.len() as f64) * amount).round() as usize;

    let mut ood = clean.clone();
    for (i, &idx) in half_pixels.iter().enumerate() {
        if i < n_corrupt {
            ood[idx] = if rng.gen::<bool>() { 1.0 } else { 0.0 };
        }
        // remaining half pixels keep the clean value: the Gaussian noise is
        // replaced, not supplemented
    }
    for y in 0..h {
        for x in 0..w {
            if !in_half(x) {
                ood[y * w + x] = noisy[y * w + x];
            }
        }
    }
    Ok(((ood, clean.clone()), mask))
}

/// Paste a binary silhouette at `position` (top-left corner) with constant
/// `intensity`; the image is untouched elsewhere. Returns the modified
/// image and the placed mask.
pub fn insert_silhouette(
    clean: &Tensor,
    shape: &Tensor,
    intensity: f64,
    position: (usize, usize),
) -> Result<(Tensor, Tensor)> {
    if !(0.0..=1.0).contains(&intensity) {
        return Err(Error::config(format!(
            "silhouette intensity must lie in [0, 1], got {intensity}"
        )));
    }
    let (h, w) = image_dims(clean)?;
    let (sh, sw) = image_dims(shape)?;
    if shape.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::contract("silhouette shape mask must be binary"));
    }
    let (py, px) = position;
    if py + sh > h || px + sw > w {
        return Err(Error::config(format!(
            "silhouette {sh}x{sw} at ({py}, {px}) leaves the {h}x{w} image"
        )));
    }
    let mut ood = clean.clone();
    let mut mask = Tensor::zeros(&[h, w]);
    for y in 0..sh {
        for x in 0..sw {
            if shape.at2(y, x) == 1.0 {
                ood.set2(py + y, px + x, intensity);
                mask.set2(py + y, px + x, 1.0);
            }
        }
    }
    Ok((ood, mask))
}

/// A fixed bird-in-flight outline shipped with the crate: swept wing on
/// top, head and beak to the right, fanned tail to the left. `#` pixels
/// are part of the silhouette.
const BIRD_ART: [&str; 16] = [
    "..........###...........",
    ".........#####..........",
    "........######..........",
    ".......#######..........",
    "......########..........",
    "......#########.........",
    ".......#########........",
    "........#########.......",
    ".........#########..##..",
    "..........#########.####",
    "..##....################",
    ".#####..###############.",
    "#######################.",
    ".#####..#############...",
    "..##.....##########.....",
    "..........######........",
];

/// Rasterize the built-in bird silhouette, scaled by nearest-neighbour so
/// its area is roughly `area_fraction` of an `image_side`-squared image.
pub fn bird_silhouette(image_side: usize, area_fraction: f64) -> Result<Tensor> {
    if !(0.0..1.0).contains(&area_fraction) || area_fraction == 0.0 {
        return Err(Error::config(format!(
            "silhouette area fraction must lie in (0, 1), got {area_fraction}"
        )));
    }
    let rows = BIRD_ART.len();
    let cols = BIRD_ART[0].len();
    let art_area: usize = BIRD_ART
        .iter()
        .map(|r| r.chars().filter(|&c| c == '#').count())
        .sum();
    let scale =
        ((area_fraction * (image_side * image_side) as f64) / art_area as f64).sqrt();
    let (sh, sw) = (
        ((rows as f64) * scale).round().max(1.0) as usize,
        ((cols as f64) * scale).round().max(1.0) as usize,
    );
    if sh > image_side || sw > image_side {
        return Err(Error::config("silhouette does not fit the image"));
    }
    let mut mask = Tensor::zeros(&[sh, sw]);
    for y in 0..sh {
        let ay = (y * rows) / sh;
        let row: Vec<char> = BIRD_ART[ay].chars().collect();
        for x in 0..sw {
            let ax = (x * cols) / sw;
            if row[ax] == '#' {
                mask.set2(y, x, 1.0);
            }
        }
    }
    Ok(mask)
}

/// Place the built-in bird silhouette at a seeded uniform position.
pub fn place_bird_silhouette(
    clean: &Tensor,
    intensity: f64,
    area_fraction: f64,
    seed: u64,
) -> Result<(Tensor, Tensor)> {
    let (h, w) = image_dims(clean)?;
    let shape = bird_silhouette(h.min(w), area_fraction)?;
    let (sh, sw) = (shape.shape()[0], shape.shape()[1]);
    let mut rng = rng_from_seed(derive_seed(seed, 0xB12D));
    let py = (rng.gen::<f64>() * (h - sh + 1) as f64) as usize;
    let px = (rng.gen::<f64>() * (w - sw + 1) as f64) as usize;
    insert_silhouette(clean, &shape, intensity, (py.min(h - sh), px.min(w - sw)))
}

fn image_dims(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] => Ok((*h, *w)),
        other => Err(Error::shape("2-d image", "[h, w]", other)),
    }
}
