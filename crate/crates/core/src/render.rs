//! 8-bit grayscale rendering of images and heatmaps with an explicit
//! intensity window.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Clip to `[window.0, window.1]`, map linearly onto 0..=255 and write a
/// grayscale PNG.
pub fn render_heatmap(t: &Tensor, window: (f64, f64), path: &Path) -> Result<()> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::config(format!(
            "render window must satisfy lo < hi, got ({lo}, {hi})"
        )));
    }
    let (h, w) = match t.shape() {
        [h, w] => (*h, *w),
        [1, h, w] => (*h, *w),
        other => return Err(Error::shape("render input", "[h, w]", other)),
    };
    let scale = 255.0 / (hi - lo);
    let pixels: Vec<u8> = t
        .data()
        .iter()
        .map(|&v| ((v.clamp(lo, hi) - lo) * scale).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, pixels)
        .expect("pixel buffer matches dimensions");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    img.save(path)
        .map_err(|e| Error::Config(format!("cannot write image {}: {e}", path.display())))
}

/// Window spanning the tensor's own range (falling back to a unit span
/// for constant tensors).
pub fn full_range_window(t: &Tensor) -> (f64, f64) {
    let lo = t.min_value();
    let hi = t.max_value();
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn read_gray(path: &Path) -> image::GrayImage {
        image::open(path).unwrap().to_luma8()
    }

    #[test]
    fn constant_at_window_edges_renders_black_and_white() {
        let dir = tempdir().unwrap();
        let t = Tensor::full(&[4, 4], 0.2);
        let black = dir.path().join("black.png");
        render_heatmap(&t, (0.2, 0.9), &black).unwrap();
        assert!(read_gray(&black).pixels().all(|p| p.0[0] == 0));

        let white = dir.path().join("white.png");
        render_heatmap(&t, (-0.5, 0.2), &white).unwrap();
        assert!(read_gray(&white).pixels().all(|p| p.0[0] == 255));
    }

    #[test]
    fn min_max_window_uses_full_dynamic_range() {
        let dir = tempdir().unwrap();
        let t = Tensor::new(vec![2, 2], vec![0.1, 0.4, 0.7, 1.0]).unwrap();
        let path = dir.path().join("range.png");
        render_heatmap(&t, full_range_window(&t), &path).unwrap();
        let img = read_gray(&path);
        let values: Vec<u8> = img.pixels().map(|p| p.0[0]).collect();
        assert_eq!(values.iter().min(), Some(&0));
        assert_eq!(values.iter().max(), Some(&255));
    }

    #[test]
    fn degenerate_window_is_rejected() {
        let t = Tensor::zeros(&[2, 2]);
        assert!(render_heatmap(&t, (0.5, 0.5), Path::new("/tmp/x.png")).is_err());
    }
}
