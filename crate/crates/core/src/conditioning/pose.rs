use candle_core::Tensor;
use ndarray::Array4;

use crate::dit::{Mlp, ParamBuilder};
use crate::latent_codec::{temporal_group, LatentShape};
use crate::tensor::to_tensor;
use crate::{Error, Result};

/// Dense-pose channel map `[N, H, W, P]` aligned with its clip.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseVideo {
    data: Array4<f64>,
}

impl PoseVideo {
    pub fn new(data: Array4<f64>) -> Result<Self> {
        let (n, h, w, p) = data.dim();
        if n == 0 || h == 0 || w == 0 || p == 0 {
            return Err(Error::Alignment(format!("pose video has an empty axis: {:?}", data.dim())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("pose video contains non-finite values".into()));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn channels(&self) -> usize {
        self.data.dim().3
    }

    pub fn check_aligned(&self, frames: usize, height: usize, width: usize) -> Result<()> {
        let (n, h, w, _) = self.data.dim();
        if (n, h, w) != (frames, height, width) {
            return Err(Error::Alignment(format!(
                "pose video is {n}x{h}x{w}, clip is {frames}x{height}x{width}"
            )));
        }
        Ok(())
    }
}

/// Average-pools a pose map onto the latent grid: each latent cell averages
/// its causal temporal group and its `f_s × f_s` spatial block.
pub fn pool_pose(pose: &PoseVideo, target: &LatentShape) -> Result<Array4<f64>> {
    let (n, h, w, p) = pose.data.dim();
    let fs = target.spatial_factor;
    if n != target.source_frames || h != target.height * fs || w != target.width * fs {
        return Err(Error::Alignment(format!(
            "pose video {n}x{h}x{w} does not match latent target {:?} (f_s={fs}, source frames {})",
            (target.frames, target.height, target.width),
            target.source_frames
        )));
    }
    let mut out = Array4::zeros((target.frames, target.height, target.width, p));
    for t in 0..target.frames {
        let group = temporal_group(t, n, target.temporal_factor);
        let norm = (group.len() * fs * fs) as f64;
        for y in 0..target.height {
            for x in 0..target.width {
                for c in 0..p {
                    let mut sum = 0.0;
                    for f in group.clone() {
                        for dy in 0..fs {
                            for dx in 0..fs {
                                sum += pose.data[[f, y * fs + dy, x * fs + dx, c]];
                            }
                        }
                    }
                    out[[t, y, x, c]] = sum / norm;
                }
            }
        }
    }
    Ok(out)
}

/// Pooling followed by a per-position MLP to the latent channel count.
#[derive(Debug, Clone)]
pub struct PoseEncoder {
    mlp: Mlp,
    channels: usize,
}

impl PoseEncoder {
    pub fn new(pb: &ParamBuilder<'_>, pose_channels: usize, hidden: usize, latent_channels: usize) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::new(pb, pose_channels, hidden, latent_channels)?,
            channels: pose_channels,
        })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn pose_channels(&self) -> usize {
        self.channels
    }

    /// Pooled pose `[T, h, w, P]` → `[T, h, w, C]`.
    pub fn forward_pooled(&self, pooled: &Array4<f64>) -> Result<Tensor> {
        if pooled.dim().3 != self.channels {
            return Err(Error::Alignment(format!(
                "pose encoder expects {} channels, got {}",
                self.channels,
                pooled.dim().3
            )));
        }
        self.mlp.forward(&to_tensor(pooled)?)
    }

    pub fn forward(&self, pose: &PoseVideo, target: &LatentShape) -> Result<Tensor> {
        self.forward_pooled(&pool_pose(pose, target)?)
    }
}

/// Encodes a pose map into a tensor of exactly the latent-noise shape.
pub fn encode_pose(pose: &PoseVideo, target: &LatentShape, encoder: &PoseEncoder) -> Result<Tensor> {
    encoder.forward(pose, target)
}

/// Synthetic IUV-like map: smooth gradients over the frame shifted per frame,
/// gated by a body silhouette.
pub fn synthetic_pose(silhouette: &crate::latent_codec::MaskVideo) -> PoseVideo {
    let (n, h, w, _) = silhouette.data().dim();
    let data = Array4::from_shape_fn((n, h, w, 3), |(t, y, x, c)| {
        let on = silhouette.data()[[t, y, x, 0]];
        let v = match c {
            0 => 1.0,
            1 => y as f64 / h.max(1) as f64,
            _ => x as f64 / w.max(1) as f64,
        };
        on * (2.0 * v - 1.0)
    });
    PoseVideo { data }
}
