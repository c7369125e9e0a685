//! Filtered backprojection with a frequency-domain ramp filter.
//!
//! Each projection row is zero-padded, filtered by the band-limited ramp
//! response (constructed from the standard discrete spatial kernel, which
//! avoids the naive |f| DC distortion), and backprojected. The scale
//! honours the angular quadrature so a full-coverage geometry approximates
//! the identity.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::Result;
use crate::tensor::Tensor;

use super::{backproject, RadonGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Filter {
    Ramp,
}

/// Ramp-filter every angle row of the sinogram.
pub fn ramp_filter_sinogram(sino: &Tensor, geom: &RadonGeometry, _filter: Filter) -> Result<Tensor> {
    geom.validate_sinogram(sino)?;
    let d = geom.num_detectors;
    let m = (2 * d).next_power_of_two();

    // discrete ramp kernel: h[0] = 1/4, h[n] = -1/(pi^2 n^2) for odd n
    let mut kernel = vec![Complex::new(0.0, 0.0); m];
    kernel[0] = Complex::new(0.25, 0.0);
    let mut n = 1usize;
    while n < m / 2 {
        if n % 2 == 1 {
            let v = -1.0 / (std::f64::consts::PI * std::f64::consts::PI * (n * n) as f64);
            kernel[n] = Complex::new(v, 0.0);
            kernel[m - n] = Complex::new(v, 0.0);
        }
        n += 1;
    }

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    let ifft = planner.plan_fft_inverse(m);

    fft.process(&mut kernel);
    // the kernel is real and even, so its spectrum is real: this is the
    // band-limited ramp response
    let response: Vec<f64> = kernel.iter().map(|c| c.re).collect();

    let mut out = Vec::with_capacity(sino.len());
    let mut row_buf = vec![Complex::new(0.0, 0.0); m];
    for a in 0..geom.num_angles() {
        row_buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for det in 0..d {
            row_buf[det] = Complex::new(sino.data()[a * d + det], 0.0);
        }
        fft.process(&mut row_buf);
        for (c, r) in row_buf.iter_mut().zip(&response) {
            *c *= r;
        }
        ifft.process(&mut row_buf);
        let scale = 1.0 / m as f64; // rustfft leaves the inverse unnormalized
        out.extend(row_buf[..d].iter().map(|c| c.re * scale));
    }
    Tensor::new(vec![geom.num_angles(), d], out)
}

/// Filtered backprojection: ramp filter then adjoint, scaled by the
/// angular spacing (Riemann quadrature over [0, pi)).
pub fn fbp(sino: &Tensor, geom: &RadonGeometry, filter: Filter) -> Result<Tensor> {
    let filtered = ramp_filter_sinogram(sino, geom, filter)?;
    let bp = backproject(&filtered, geom)?;
    Ok(bp.scale(geom.angle_spacing_rad()))
}
