//! Training-mask generators: time-invariant and time-variant random boxes,
//! segmentation-derived instance and garment masks, and per-clip inversion.

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::latent_codec::MaskVideo;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    TimeInvariantBox,
    TimeVariantBox,
    Instance,
    Garment,
}

impl MaskStrategy {
    pub fn is_box(self) -> bool {
        matches!(self, MaskStrategy::TimeInvariantBox | MaskStrategy::TimeVariantBox)
    }
}

fn full_range() -> (f64, f64) {
    (0.2, 0.6)
}

/// Mask generation parameters. Box sizes are fractions of the frame height
/// and width, drawn uniformly and independently from the two ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub strategy: MaskStrategy,
    #[serde(default = "full_range")]
    pub height_range: (f64, f64),
    #[serde(default = "full_range")]
    pub width_range: (f64, f64),
    /// Probability of inverting the whole clip's mask.
    #[serde(default)]
    pub invert_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

impl MaskSpec {
    pub fn new(strategy: MaskStrategy) -> Self {
        Self {
            strategy,
            height_range: full_range(),
            width_range: full_range(),
            invert_prob: 0.0,
            seed: 0,
        }
    }

    pub fn with_size_range(mut self, min: f64, max: f64) -> Self {
        self.height_range = (min, max);
        self.width_range = (min, max);
        self
    }

    pub fn with_invert_prob(mut self, q: f64) -> Self {
        self.invert_prob = q;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("height", self.height_range), ("width", self.width_range)] {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(Error::Config(format!(
                    "{name} fraction range ({lo}, {hi}) must satisfy 0 < min <= max <= 1"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.invert_prob) {
            return Err(Error::Config(format!(
                "inversion probability {} must lie in [0, 1]",
                self.invert_prob
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box `[top, top + height) × [left, left + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxRegion {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl BoxRegion {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..self.top + self.height).contains(&y) && (self.left..self.left + self.width).contains(&x)
    }
}

fn box_extent(range: (f64, f64), len: usize, rng: &mut impl Rng) -> usize {
    let fraction = if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..=range.1)
    };
    ((fraction * len as f64).round() as usize).clamp(1, len)
}

/// One random box fully inside an `height × width` frame.
pub fn draw_box(spec: &MaskSpec, height: usize, width: usize, rng: &mut impl Rng) -> BoxRegion {
    let bh = box_extent(spec.height_range, height, rng);
    let bw = box_extent(spec.width_range, width, rng);
    let top = rng.random_range(0..=height - bh);
    let left = rng.random_range(0..=width - bw);
    BoxRegion {
        top,
        left,
        height: bh,
        width: bw,
    }
}

fn check_dims(frames: usize, height: usize, width: usize) -> Result<()> {
    if frames == 0 || height == 0 || width == 0 {
        return Err(Error::Contract(format!("cannot build a {frames}x{height}x{width} mask")));
    }
    Ok(())
}

/// A single random box shared by every frame.
pub fn gen_time_invariant_box(
    spec: &MaskSpec,
    frames: usize,
    height: usize,
    width: usize,
    rng: &mut impl Rng,
) -> Result<MaskVideo> {
    spec.validate()?;
    check_dims(frames, height, width)?;
    let region = draw_box(spec, height, width, rng);
    Ok(MaskVideo::from_fn(frames, height, width, |_, y, x| region.contains(y, x)))
}

/// An independent random box per frame.
pub fn gen_time_variant_box(
    spec: &MaskSpec,
    frames: usize,
    height: usize,
    width: usize,
    rng: &mut impl Rng,
) -> Result<MaskVideo> {
    spec.validate()?;
    check_dims(frames, height, width)?;
    let regions: Vec<BoxRegion> = (0..frames).map(|_| draw_box(spec, height, width, rng)).collect();
    Ok(MaskVideo::from_fn(frames, height, width, |t, y, x| regions[t].contains(y, x)))
}

/// Per-frame binary mask `seg == target_label`.
pub fn from_segmentation(seg: &Array3<u8>, target_label: u8) -> Result<MaskVideo> {
    from_segmentation_labels(seg, &[target_label])
}

/// Per-frame binary mask of positions whose label is any of `labels`.
pub fn from_segmentation_labels(seg: &Array3<u8>, labels: &[u8]) -> Result<MaskVideo> {
    let (n, h, w) = seg.dim();
    check_dims(n, h, w)?;
    let data = Array4::from_shape_fn((n, h, w, 1), |(t, y, x, _)| {
        if labels.contains(&seg[[t, y, x]]) {
            1.0
        } else {
            0.0
        }
    });
    let mask = MaskVideo::new(data)?;
    if mask.is_empty() {
        return Err(Error::EmptyMask(format!("labels {labels:?} do not occur in any frame")));
    }
    Ok(mask)
}

/// Inverts the whole clip's mask with probability `q`. Returns the mask and
/// whether it was inverted.
pub fn maybe_invert(mask: &MaskVideo, q: f64, rng: &mut impl Rng) -> Result<(MaskVideo, bool)> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("inversion probability {q} must lie in [0, 1]")));
    }
    if rng.random_bool(q) {
        Ok((mask.complement(), true))
    } else {
        Ok((mask.clone(), false))
    }
}

/// Box-strategy dispatch followed by optional inversion.
pub fn generate_box_mask(
    spec: &MaskSpec,
    frames: usize,
    height: usize,
    width: usize,
    rng: &mut impl Rng,
) -> Result<MaskVideo> {
    let mask = match spec.strategy {
        MaskStrategy::TimeInvariantBox => gen_time_invariant_box(spec, frames, height, width, rng)?,
        MaskStrategy::TimeVariantBox => gen_time_variant_box(spec, frames, height, width, rng)?,
        other => {
            return Err(Error::Config(format!(
                "{other:?} masks come from segmentation maps, not the box generator"
            )))
        }
    };
    Ok(maybe_invert(&mask, spec.invert_prob, rng)?.0)
}
