//! Forward operators and synthetic data for the two reconstruction tasks:
//! identity-plus-noise (denoising) and a parallel-beam Radon transform with
//! filtered backprojection (limited-angle tomography).

mod fbp;
mod noise;
mod phantom;
mod radon;

pub use fbp::{fbp, ramp_filter_sinogram, Filter};
pub use noise::{add_noise, NoiseKind, NoiseModel};
pub use phantom::{make_phantom, PhantomKind};
pub use radon::{backproject, radon};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parallel-beam acquisition geometry. Angles live in [0, 180) degrees;
/// a missing wedge removes a contiguous range. Detector spacing is one
/// pixel; rays are sampled with linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadonGeometry {
    pub image_size: usize,
    pub num_detectors: usize,
    pub angles_deg: Vec<f64>,
    /// Present when the angle set was built with a missing wedge.
    pub missing_wedge_deg: Option<(f64, f64)>,
}

impl RadonGeometry {
    /// Full-coverage geometry: `num_angles` evenly spaced over [0, 180).
    pub fn full(image_size: usize, num_angles: usize) -> Result<Self> {
        Self::with_wedge(image_size, num_angles, None)
    }

    /// Geometry with angles in `[wedge.0, wedge.1)` removed.
    pub fn with_missing_wedge(
        image_size: usize,
        num_angles: usize,
        wedge: (f64, f64),
    ) -> Result<Self> {
        Self::with_wedge(image_size, num_angles, Some(wedge))
    }

    fn with_wedge(image_size: usize, num_angles: usize, wedge: Option<(f64, f64)>) -> Result<Self> {
        if image_size < 2 || num_angles == 0 {
            return Err(Error::config(format!(
                "degenerate geometry: size {image_size}, {num_angles} angles"
            )));
        }
        if let Some((a, b)) = wedge {
            if !(0.0..180.0).contains(&a) || b <= a || b > 180.0 {
                return Err(Error::config(format!(
                    "missing wedge [{a}, {b}) must be a non-empty subrange of [0, 180)"
                )));
            }
        }
        let step = 180.0 / num_angles as f64;
        let angles_deg: Vec<f64> = (0..num_angles)
            .map(|i| i as f64 * step)
            .filter(|&ang| match wedge {
                Some((a, b)) => !(ang >= a && ang < b),
                None => true,
            })
            .collect();
        if angles_deg.is_empty() {
            return Err(Error::config("missing wedge removed every angle"));
        }
        // detectors must span the image diagonal
        let diag = (image_size as f64) * std::f64::consts::SQRT_2;
        let mut num_detectors = diag.ceil() as usize + 3;
        if num_detectors % 2 == 0 {
            num_detectors += 1; // odd count centres a detector on the origin
        }
        Ok(RadonGeometry {
            image_size,
            num_detectors,
            angles_deg,
            missing_wedge_deg: wedge,
        })
    }

    pub fn num_angles(&self) -> usize {
        self.angles_deg.len()
    }

    /// Angular grid spacing in radians (from the underlying even grid,
    /// not the possibly gappy retained set).
    pub fn angle_spacing_rad(&self) -> f64 {
        let mut best = f64::INFINITY;
        for w in self.angles_deg.windows(2) {
            best = best.min(w[1] - w[0]);
        }
        if best.is_finite() {
            best.to_radians()
        } else {
            std::f64::consts::PI
        }
    }

    pub fn validate_image(&self, image: &crate::tensor::Tensor) -> Result<()> {
        if image.shape() != [self.image_size, self.image_size] {
            return Err(Error::shape(
                "radon image",
                [self.image_size, self.image_size],
                image.shape(),
            ));
        }
        if !image.all_finite() {
            return Err(Error::numerical("image contains NaN/Inf"));
        }
        Ok(())
    }

    pub fn validate_sinogram(&self, sino: &crate::tensor::Tensor) -> Result<()> {
        if sino.shape() != [self.num_angles(), self.num_detectors] {
            return Err(Error::shape(
                "sinogram",
                [self.num_angles(), self.num_detectors],
                sino.shape(),
            ));
        }
        Ok(())
    }
}
