//! Synthetic images: the standard head phantom, random ellipse phantoms
//! for tomography, and procedural textures for denoising.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    SheppLogan,
    RandomEllipses,
    Texture,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shepp_logan" => Ok(PhantomKind::SheppLogan),
            "random_ellipses" => Ok(PhantomKind::RandomEllipses),
            "texture" => Ok(PhantomKind::Texture),
            other => Err(Error::config(format!("unknown phantom kind {other:?}"))),
        }
    }
}

/// Generate one image on the [0, 1] intensity scale, deterministic in the
/// seed for the random kinds.
pub fn make_phantom(kind: PhantomKind, size: usize, seed: u64) -> Result<Tensor> {
    if size < 32 {
        return Err(Error::config(format!(
            "phantom size must be >= 32, got {size}"
        )));
    }
    let img = match kind {
        PhantomKind::SheppLogan => shepp_logan(size),
        PhantomKind::RandomEllipses => random_ellipses(size, seed),
        PhantomKind::Texture => texture(size, seed),
    };
    Ok(img.clamp(0.0, 1.0))
}

struct Ellipse {
    value: f64,
    a: f64,
    b: f64,
    x0: f64,
    y0: f64,
    phi_deg: f64,
}

fn rasterize(size: usize, ellipses: &[Ellipse]) -> Tensor {
    let mut img = Tensor::zeros(&[size, size]);
    let half = (size as f64 - 1.0) / 2.0;
    for e in ellipses {
        let phi = e.phi_deg.to_radians();
        let (sin_p, cos_p) = phi.sin_cos();
        for y in 0..size {
            for x in 0..size {
                // normalized coordinates in [-1, 1]
                let xn = (x as f64 - half) / half;
                let yn = (y as f64 - half) / half;
                let xr = (xn - e.x0) * cos_p + (yn - e.y0) * sin_p;
                let yr = -(xn - e.x0) * sin_p + (yn - e.y0) * cos_p;
                if (xr / e.a).powi(2) + (yr / e.b).powi(2) <= 1.0 {
                    let v = img.at2(y, x) + e.value;
                    img.set2(y, x, v);
                }
            }
        }
    }
    img
}

/// The modified ten-ellipse head phantom (contrast-enhanced values).
fn shepp_logan(size: usize) -> Tensor {
    let table = [
        (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
        (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
        (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
        (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
        (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
        (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
        (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
        (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
        (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
        (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
    ];
    let ellipses: Vec<Ellipse> = table
        .iter()
        .map(|&(value, a, b, x0, y0, phi_deg)| Ellipse {
            value,
            a,
            b,
            x0,
            y0,
            phi_deg,
        })
        .collect();
    rasterize(size, &ellipses)
}

/// Tomography phantoms: an enclosing body ellipse with random internal
/// structures of varying contrast.
fn random_ellipses(size: usize, seed: u64) -> Tensor {
    let mut rng = rng_from_seed(derive_seed(seed, 0xE111));
    let mut ellipses = vec![Ellipse {
        value: 0.25,
        a: 0.75 + 0.15 * rng.gen::<f64>(),
        b: 0.75 + 0.15 * rng.gen::<f64>(),
        x0: 0.0,
        y0: 0.0,
        phi_deg: rng.gen::<f64>() * 180.0,
    }];
    let count = 5 + (rng.gen::<f64>() * 6.0) as usize;
    for _ in 0..count {
        ellipses.push(Ellipse {
            value: (rng.gen::<f64>() - 0.35) * 0.8,
            a: 0.05 + 0.3 * rng.gen::<f64>(),
            b: 0.05 + 0.3 * rng.gen::<f64>(),
            x0: (rng.gen::<f64>() - 0.5) * 1.0,
            y0: (rng.gen::<f64>() - 0.5) * 1.0,
            phi_deg: rng.gen::<f64>() * 180.0,
        });
    }
    rasterize(size, &ellipses)
}

/// Procedural textures: oriented gratings plus smoothed noise, min-max
/// normalized so the histogram spans the full [0, 1] range.
fn texture(size: usize, seed: u64) -> Tensor {
    let mut rng = rng_from_seed(derive_seed(seed, 0x7E47));
    let mut img = vec![0.0f64; size * size];

    for _ in 0..3 {
        let freq = 1.5 + rng.gen::<f64>() * 6.0;
        let theta = rng.gen::<f64>() * std::f64::consts::PI;
        let phase = rng.gen::<f64>() * std::f64::consts::TAU;
        let amp = 0.4 + rng.gen::<f64>() * 0.6;
        let (sin_t, cos_t) = theta.sin_cos();
        for y in 0..size {
            for x in 0..size {
                let u = (x as f64 * cos_t + y as f64 * sin_t) / size as f64;
                img[y * size + x] += amp * (std::f64::consts::TAU * freq * u + phase).sin();
            }
        }
    }

    // smoothed white noise for irregular structure
    let mut noise: Vec<f64> = (0..size * size).map(|_| rng.gen::<f64>() - 0.5).collect();
    for _ in 0..3 {
        noise = box_blur(&noise, size);
    }
    let namp = 6.0;
    for (v, n) in img.iter_mut().zip(&noise) {
        *v += namp * n;
    }

    let lo = img.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = if hi > lo { 1.0 / (hi - lo) } else { 1.0 };
    Tensor::new(
        vec![size, size],
        img.into_iter().map(|v| (v - lo) * scale).collect(),
    )
    .unwrap()
}

fn box_blur(data: &[f64], size: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; size * size];
    for y in 0..size {
        for x in 0..size {
            let mut acc = 0.0;
            let mut cnt = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let yy = y as i64 + dy;
                    let xx = x as i64 + dx;
                    if yy >= 0 && yy < size as i64 && xx >= 0 && xx < size as i64 {
                        acc += data[yy as usize * size + xx as usize];
                        cnt += 1.0;
                    }
                }
            }
            out[y * size + x] = acc / cnt;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_phantom_has_unit_skull_and_zero_background() {
        let img = make_phantom(PhantomKind::SheppLogan, 128, 0).unwrap();
        assert_eq!(img.max_value(), 1.0);
        assert_eq!(img.at2(0, 0), 0.0);
        assert_eq!(img.min_value(), 0.0);
    }

    #[test]
    fn random_kinds_are_seed_deterministic() {
        for kind in [PhantomKind::RandomEllipses, PhantomKind::Texture] {
            let a = make_phantom(kind, 64, 42).unwrap();
            let b = make_phantom(kind, 64, 42).unwrap();
            let c = make_phantom(kind, 64, 43).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn textures_span_most_of_the_intensity_range() {
        for seed in 0..20 {
            let img = make_phantom(PhantomKind::Texture, 64, seed).unwrap();
            let span = img.max_value() - img.min_value();
            assert!(span >= 0.5, "seed {seed}: span {span}");
        }
    }

    #[test]
    fn phantoms_stay_inside_unit_range() {
        for seed in 0..10 {
            let img = make_phantom(PhantomKind::RandomEllipses, 64, seed).unwrap();
            assert!(img.min_value() >= 0.0 && img.max_value() <= 1.0);
        }
    }

    #[test]
    fn undersized_phantoms_are_rejected() {
        assert!(make_phantom(PhantomKind::Texture, 16, 0).is_err());
    }
}
