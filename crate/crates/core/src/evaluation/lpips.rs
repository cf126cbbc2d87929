use ndarray::{Array3, ArrayView3};

use crate::latent_codec::Video;
use crate::{Error, Result};

/// Learned-perceptual-distance backbone.
pub trait PerceptualDistance: Send + Sync {
    fn name(&self) -> &str;

    /// Distance between two `[H, W, 3]` frames in `[-1, 1]`.
    fn frame_distance(&self, a: ArrayView3<'_, f64>, b: ArrayView3<'_, f64>) -> Result<f64>;

    fn video_distance(&self, a: &Video, b: &Video) -> Result<f64> {
        if a.data().dim() != b.data().dim() {
            return Err(Error::Alignment(format!("videos {:?} vs {:?}", a.data().dim(), b.data().dim())));
        }
        let mut sum = 0.0;
        for i in 0..a.frames() {
            sum += self.frame_distance(a.frame(i), b.frame(i))?;
        }
        Ok(sum / a.frames() as f64)
    }
}

/// Hermetic stand-in: mean squared difference of gradient-magnitude maps at
/// scales 1, 2 and 4, averaged over scales. Not comparable to real LPIPS.
#[derive(Debug, Clone, Default)]
pub struct GradientPerceptual;

fn pool(frame: &Array3<f64>, k: usize) -> Array3<f64> {
    let (h, w, c) = frame.dim();
    let (ph, pw) = (h / k, w / k);
    Array3::from_shape_fn((ph, pw, c), |(y, x, ch)| {
        let mut s = 0.0;
        for dy in 0..k {
            for dx in 0..k {
                s += frame[[y * k + dy, x * k + dx, ch]];
            }
        }
        s / (k * k) as f64
    })
}

fn gradient_magnitude(f: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = f.dim();
    Array3::from_shape_fn((h, w, c), |(y, x, ch)| {
        let gx = if x + 1 < w { f[[y, x + 1, ch]] - f[[y, x, ch]] } else { 0.0 };
        let gy = if y + 1 < h { f[[y + 1, x, ch]] - f[[y, x, ch]] } else { 0.0 };
        (gx * gx + gy * gy).sqrt()
    })
}

impl PerceptualDistance for GradientPerceptual {
    fn name(&self) -> &str {
        "gradient_stub"
    }

    fn frame_distance(&self, a: ArrayView3<'_, f64>, b: ArrayView3<'_, f64>) -> Result<f64> {
        if a.dim() != b.dim() {
            return Err(Error::Alignment(format!("frames {:?} vs {:?}", a.dim(), b.dim())));
        }
        let (a, b) = (a.to_owned(), b.to_owned());
        let mut total = 0.0;
        let mut scales = 0;
        for k in [1usize, 2, 4] {
            if a.dim().0 / k < 2 || a.dim().1 / k < 2 {
                break;
            }
            let ga = gradient_magnitude(&pool(&a, k));
            let gb = gradient_magnitude(&pool(&b, k));
            total += (&ga - &gb).mapv(|v| v * v).mean().unwrap_or(0.0);
            scales += 1;
        }
        if scales == 0 {
            return Ok((&a - &b).mapv(|v| v * v).mean().unwrap_or(0.0));
        }
        Ok(total / scales as f64)
    }
}

pub fn perceptual_by_name(name: &str) -> Result<Box<dyn PerceptualDistance>> {
    match name {
        "gradient_stub" => Ok(Box::new(GradientPerceptual)),
        other => Err(Error::Config(format!("unknown perceptual backbone `{other}`"))),
    }
}
