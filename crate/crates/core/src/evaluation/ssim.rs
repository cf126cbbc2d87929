use ndarray::{Array2, ArrayView3};

use crate::latent_codec::Video;
use crate::{Error, Result};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

/// Normalised 2-D Gaussian window of odd side `size`.
pub fn gaussian_window(size: usize, sigma: f64) -> Array2<f64> {
    let c = (size / 2) as f64;
    let g: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let mut w = Array2::from_shape_fn((size, size), |(y, x)| g[y] * g[x]);
    let total = w.sum();
    w /= total;
    w
}

/// Window side used for a frame: the standard 11, shrunk to the largest odd
/// side that fits when the frame is smaller.
pub fn window_side(height: usize, width: usize) -> usize {
    let m = WINDOW.min(height).min(width);
    if m % 2 == 0 {
        m - 1
    } else {
        m
    }
}

/// Mean SSIM over all fully-contained windows and channels of two
/// `[H, W, C]` frames with values in `[0, 1]`.
pub fn ssim(a: ArrayView3<'_, f64>, b: ArrayView3<'_, f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Alignment(format!("ssim frames {:?} vs {:?}", a.dim(), b.dim())));
    }
    let (h, w, ch) = a.dim();
    if h == 0 || w == 0 || ch == 0 {
        return Err(Error::Alignment("ssim needs non-empty frames".into()));
    }
    let side = window_side(h, w);
    let win = gaussian_window(side, SIGMA);
    let (c1, c2) = (K1 * K1, K2 * K2);
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ch {
        for y0 in 0..=(h - side) {
            for x0 in 0..=(w - side) {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..side {
                    for dx in 0..side {
                        let k = win[[dy, dx]];
                        let va = a[[y0 + dy, x0 + dx, c]];
                        let vb = b[[y0 + dy, x0 + dx, c]];
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                }
                let var_a = saa - ma * ma;
                let var_b = sbb - mb * mb;
                let cov = sab - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Frame-averaged SSIM of two clips in `[-1, 1]`.
pub fn video_ssim(a: &Video, b: &Video) -> Result<f64> {
    if a.data().dim() != b.data().dim() {
        return Err(Error::Alignment(format!("videos {:?} vs {:?}", a.data().dim(), b.data().dim())));
    }
    let mut sum = 0.0;
    for i in 0..a.frames() {
        let fa = a.frame(i).mapv(|v| (v + 1.0) / 2.0);
        let fb = b.frame(i).mapv(|v| (v + 1.0) / 2.0);
        sum += ssim(fa.view(), fb.view())?;
    }
    Ok(sum / a.frames() as f64)
}
