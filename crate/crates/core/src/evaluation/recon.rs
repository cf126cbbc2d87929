use crate::diffusion::LossForm;
use crate::latent_codec::{MaskVideo, Video};
use crate::{Error, Result};

/// Pixel-space reconstruction loss of the masked area.
///
/// `MeanMasked` divides the masked squared error by the number of masked
/// pixel entries (mask positions × 3 channels), so a full mask gives plain
/// MSE. `NormInside` sums `‖(x₀ⁱ − x_pⁱ) ⊙ mⁱ / Nⁱ‖²` per frame, with `Nⁱ`
/// the masked positions of frame `i`; frames without mask contribute 0.
pub fn inpaint_reconstruction(x0: &Video, xp: &Video, mask: &MaskVideo, form: LossForm) -> Result<f64> {
    if x0.data().dim() != xp.data().dim() {
        return Err(Error::Alignment(format!("videos {:?} vs {:?}", x0.data().dim(), xp.data().dim())));
    }
    let (n, h, w, c) = x0.data().dim();
    if (mask.frames(), mask.height(), mask.width()) != (n, h, w) {
        return Err(Error::Alignment("mask does not match the video".into()));
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask("reconstruction loss needs a non-empty mask".into()));
    }
    let (a, b, m) = (x0.data(), xp.data(), mask.data());
    let mut frame_sums = vec![0.0; n];
    let mut frame_counts = vec![0usize; n];
    for t in 0..n {
        for y in 0..h {
            for x in 0..w {
                let mv = m[[t, y, x, 0]];
                if mv != 0.0 {
                    frame_counts[t] += 1;
                }
                for ch in 0..c {
                    frame_sums[t] += (mv * (a[[t, y, x, ch]] - b[[t, y, x, ch]])).powi(2);
                }
            }
        }
    }
    Ok(match form {
        LossForm::MeanMasked => {
            let count: usize = frame_counts.iter().sum();
            frame_sums.iter().sum::<f64>() / (count * c) as f64
        }
        LossForm::NormInside => frame_sums
            .iter()
            .zip(&frame_counts)
            .filter(|(_, &k)| k > 0)
            .map(|(s, &k)| s / (k * k) as f64)
            .sum(),
    })
}

/// Mean absolute difference of consecutive frames in `[0, 1]` units. A crude
/// flicker indicator, not a reimplementation of any benchmark metric.
pub fn flicker_proxy(video: &Video) -> f64 {
    let d = video.data();
    let n = video.frames();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for t in 0..n - 1 {
        let diff = &d.index_axis(ndarray::Axis(0), t + 1) - &d.index_axis(ndarray::Axis(0), t);
        sum += diff.mapv(f64::abs).sum();
    }
    let per_frame = d.len() / n;
    sum / 2.0 / ((n - 1) * per_frame) as f64
}
