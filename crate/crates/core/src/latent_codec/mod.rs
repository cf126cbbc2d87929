//! Pixel/latent boundary: video containers, the codec interface, agnostic
//! video construction, the latent mask reshaper and input fusion.

mod codec;

pub use codec::{codec_by_name, CodecCapability, IdentityCodec, OrthogonalCodec, VideoCodec};

use std::ops::Range;

use ndarray::{Array4, ArrayView3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Frame rate as a rational number. Carried as metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Default for Fps {
    fn default() -> Self {
        Self { num: 8, den: 1 }
    }
}

/// Pixel-space clip, `[frames, height, width, 3]`, nominal range `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    data: Array4<f64>,
    pub fps: Fps,
}

impl Video {
    pub fn new(data: Array4<f64>) -> Result<Self> {
        let (n, h, w, c) = data.dim();
        if n == 0 || h == 0 || w == 0 {
            return Err(Error::Contract(format!(
                "video must be non-empty, got {n}x{h}x{w}"
            )));
        }
        if c != 3 {
            return Err(Error::Alignment(format!("video must have 3 channels, got {c}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("video contains non-finite values".into()));
        }
        Ok(Self {
            data,
            fps: Fps::default(),
        })
    }

    pub fn with_fps(mut self, fps: Fps) -> Self {
        self.fps = fps;
        self
    }

    pub fn constant(frames: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(Array4::from_elem((frames, height, width, 3), value))
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array4<f64> {
        self.data
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn frame(&self, index: usize) -> ArrayView3<'_, f64> {
        self.data.index_axis(Axis(0), index)
    }

    /// Clamps every entry to `[-1, 1]`.
    pub fn clamped(&self) -> Video {
        Video {
            data: self.data.mapv(|v| v.clamp(-1.0, 1.0)),
            fps: self.fps,
        }
    }
}

/// Binary inpainting mask, `[frames, height, width, 1]`; 1 marks pixels to
/// regenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVideo {
    data: Array4<f64>,
}

impl MaskVideo {
    pub fn new(data: Array4<f64>) -> Result<Self> {
        let (n, h, w, c) = data.dim();
        if n == 0 || h == 0 || w == 0 {
            return Err(Error::Contract("mask must be non-empty".into()));
        }
        if c != 1 {
            return Err(Error::Alignment(format!("mask must have 1 channel, got {c}")));
        }
        if data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Contract("mask entries must be 0 or 1".into()));
        }
        Ok(Self { data })
    }

    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        Self {
            data: Array4::zeros((frames, height, width, 1)),
        }
    }

    pub fn ones(frames: usize, height: usize, width: usize) -> Self {
        Self {
            data: Array4::ones((frames, height, width, 1)),
        }
    }

    pub fn from_fn(
        frames: usize,
        height: usize,
        width: usize,
        f: impl Fn(usize, usize, usize) -> bool,
    ) -> Self {
        Self {
            data: Array4::from_shape_fn((frames, height, width, 1), |(t, y, x, _)| {
                if f(t, y, x) {
                    1.0
                } else {
                    0.0
                }
            }),
        }
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Fraction of masked pixels over the whole clip.
    pub fn coverage(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    pub fn frame_coverage(&self, index: usize) -> f64 {
        let frame = self.data.index_axis(Axis(0), index);
        frame.iter().filter(|&&v| v != 0.0).count() as f64 / frame.len() as f64
    }

    /// `1 - mask`.
    pub fn complement(&self) -> MaskVideo {
        MaskVideo {
            data: self.data.mapv(|v| 1.0 - v),
        }
    }

    fn check_aligned(&self, frames: usize, height: usize, width: usize) -> Result<()> {
        if (self.frames(), self.height(), self.width()) != (frames, height, width) {
            return Err(Error::Alignment(format!(
                "mask is {}x{}x{}, video is {frames}x{height}x{width}",
                self.frames(),
                self.height(),
                self.width()
            )));
        }
        Ok(())
    }
}

/// Number of latent frames produced by a causal codec: the first frame is
/// kept on its own, later frames are grouped by `temporal_factor`.
pub fn latent_frame_count(pixel_frames: usize, temporal_factor: usize) -> usize {
    1 + (pixel_frames - 1).div_ceil(temporal_factor)
}

/// Pixel frames (0-based, half-open) that collapse into latent frame `index`.
/// Pixel frame `i` (1-based) lands in latent frame `1 + ceil((i - 1) / f_t)`.
pub fn temporal_group(index: usize, pixel_frames: usize, temporal_factor: usize) -> Range<usize> {
    if index == 0 {
        0..1
    } else {
        let start = 1 + (index - 1) * temporal_factor;
        start..(start + temporal_factor).min(pixel_frames)
    }
}

/// Geometry of a latent clip together with the codec factors that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub spatial_factor: usize,
    pub temporal_factor: usize,
    /// Pixel frame count the latent decodes back to.
    pub source_frames: usize,
}

impl LatentShape {
    pub fn for_pixels(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        spatial_factor: usize,
        temporal_factor: usize,
    ) -> Result<Self> {
        if spatial_factor == 0 || temporal_factor == 0 {
            return Err(Error::Config("codec factors must be positive".into()));
        }
        if frames == 0 {
            return Err(Error::Contract("video must have at least one frame".into()));
        }
        if height % spatial_factor != 0 || width % spatial_factor != 0 {
            return Err(Error::Config(format!(
                "{height}x{width} frames are not divisible by spatial factor {spatial_factor}"
            )));
        }
        Ok(Self {
            frames: latent_frame_count(frames, temporal_factor),
            height: height / spatial_factor,
            width: width / spatial_factor,
            channels,
            spatial_factor,
            temporal_factor,
            source_frames: frames,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.frames, self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.frames * self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Codec output, `[frames, height, width, channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo {
    data: Array4<f64>,
    pub spatial_factor: usize,
    pub temporal_factor: usize,
    pub source_frames: usize,
}

impl LatentVideo {
    pub fn new(data: Array4<f64>, spatial_factor: usize, temporal_factor: usize, source_frames: usize) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("latent contains non-finite values".into()));
        }
        if data.dim().0 != latent_frame_count(source_frames.max(1), temporal_factor.max(1)) {
            return Err(Error::Alignment(format!(
                "{} latent frames do not match {source_frames} source frames at temporal factor {temporal_factor}",
                data.dim().0
            )));
        }
        Ok(Self {
            data,
            spatial_factor,
            temporal_factor,
            source_frames,
        })
    }

    /// Latent with the given geometry and the shape's codec metadata.
    pub fn from_shape(shape: &LatentShape, data: Array4<f64>) -> Result<Self> {
        if data.dim() != shape.dims() {
            return Err(Error::Alignment(format!(
                "latent data is {:?}, expected {:?}",
                data.dim(),
                shape.dims()
            )));
        }
        Self::new(data, shape.spatial_factor, shape.temporal_factor, shape.source_frames)
    }

    pub fn zeros(shape: &LatentShape) -> Self {
        Self {
            data: Array4::zeros(shape.dims()),
            spatial_factor: shape.spatial_factor,
            temporal_factor: shape.temporal_factor,
            source_frames: shape.source_frames,
        }
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array4<f64> {
        self.data
    }

    pub fn shape(&self) -> LatentShape {
        let (frames, height, width, channels) = self.data.dim();
        LatentShape {
            frames,
            height,
            width,
            channels,
            spatial_factor: self.spatial_factor,
            temporal_factor: self.temporal_factor,
            source_frames: self.source_frames,
        }
    }

    /// Same metadata, new data of identical shape.
    pub fn with_data(&self, data: Array4<f64>) -> Result<Self> {
        Self::from_shape(&self.shape(), data)
    }
}

/// Latent-space mask `[frames, height, width, 1]` with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMask {
    data: Array4<f64>,
}

impl LatentMask {
    pub fn new(data: Array4<f64>) -> Result<Self> {
        if data.dim().3 != 1 {
            return Err(Error::Alignment("latent mask must have 1 channel".into()));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Contract("latent mask entries must lie in [0, 1]".into()));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    /// Number of positions with a non-zero mask value (the active set).
    pub fn active_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn mean(&self) -> f64 {
        self.data.mean().unwrap_or(0.0)
    }

    pub(crate) fn check_aligned(&self, latent: &LatentVideo) -> Result<()> {
        let (t, h, w, _) = latent.data.dim();
        let (mt, mh, mw, _) = self.data.dim();
        if (t, h, w) != (mt, mh, mw) {
            return Err(Error::Alignment(format!(
                "latent mask is {mt}x{mh}x{mw}, latent is {t}x{h}x{w}"
            )));
        }
        Ok(())
    }
}

fn check_same_dims(a: &Array4<f64>, b: &Array4<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Alignment(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Agnostic video `x ⊙ (1 - m)`: masked pixels become exactly 0.
pub fn make_agnostic(video: &Video, mask: &MaskVideo) -> Result<Video> {
    mask.check_aligned(video.frames(), video.height(), video.width())?;
    let mut data = video.data.clone();
    Zip::from(&mut data)
        .and_broadcast(&mask.data)
        .for_each(|v, &m| *v *= 1.0 - m);
    Ok(Video {
        data,
        fps: video.fps,
    })
}

/// Maps a pixel mask onto latent geometry.
///
/// Temporal groups are max-pooled first (any masked pixel frame activates its
/// latent frame), then each latent frame is bilinearly resampled with
/// half-pixel centres, and the result is clamped to `[0, 1]`.
pub fn reshape_mask(mask: &MaskVideo, target: &LatentShape) -> Result<LatentMask> {
    let (n, h, w) = (mask.frames(), mask.height(), mask.width());
    let expected = LatentShape::for_pixels(n, h, w, target.channels, target.spatial_factor, target.temporal_factor)
        .map_err(|e| Error::Config(format!("mask does not fit codec factors: {e}")))?;
    if (expected.frames, expected.height, expected.width) != (target.frames, target.height, target.width) {
        return Err(Error::Config(format!(
            "target latent {}x{}x{} inconsistent with {n}x{h}x{w} mask at factors s={} t={}",
            target.frames, target.height, target.width, target.spatial_factor, target.temporal_factor
        )));
    }

    let (lt, lh, lw) = (target.frames, target.height, target.width);
    let mut pooled = Array4::<f64>::zeros((lt, h, w, 1));
    for j in 0..lt {
        for i in temporal_group(j, n, target.temporal_factor) {
            Zip::from(pooled.index_axis_mut(Axis(0), j))
                .and(mask.data.index_axis(Axis(0), i))
                .for_each(|p, &m| *p = p.max(m));
        }
    }

    let rows: Vec<_> = (0..lh).map(|y| sample_coord(y, h, lh)).collect();
    let cols: Vec<_> = (0..lw).map(|x| sample_coord(x, w, lw)).collect();
    let data = Array4::from_shape_fn((lt, lh, lw, 1), |(t, y, x, _)| {
        let (y0, y1, fy) = rows[y];
        let (x0, x1, fx) = cols[x];
        let top = pooled[[t, y0, x0, 0]] * (1.0 - fx) + pooled[[t, y0, x1, 0]] * fx;
        let bottom = pooled[[t, y1, x0, 0]] * (1.0 - fx) + pooled[[t, y1, x1, 0]] * fx;
        (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0)
    });
    LatentMask::new(data)
}

// Bilinear source taps for output index `dst` when resizing `src_len` to
// `dst_len` (half-pixel centres, edge-clamped).
fn sample_coord(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(src_len - 1);
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, src - i0 as f64)
}

/// DiT input: `z_t + masked_latent + m_z`, with the single-channel latent
/// mask replicated across all latent channels.
pub fn fuse_inputs(z_t: &LatentVideo, m_z: &LatentMask, masked_latent: &LatentVideo) -> Result<LatentVideo> {
    check_same_dims(&z_t.data, &masked_latent.data, "noisy latent vs masked-video latent")?;
    m_z.check_aligned(z_t)?;
    let mut data = &z_t.data + &masked_latent.data;
    Zip::from(&mut data)
        .and_broadcast(&m_z.data)
        .for_each(|v, &m| *v += m);
    z_t.with_data(data)
}

/// Pastes the generated pixels into the original clip under the mask:
/// `generated ⊙ m + original ⊙ (1 - m)`.
pub fn composite_output(generated: &Video, original: &Video, mask: &MaskVideo) -> Result<Video> {
    check_same_dims(&generated.data, &original.data, "generated vs original video")?;
    mask.check_aligned(original.frames(), original.height(), original.width())?;
    let mut data = original.data.clone();
    Zip::from(&mut data)
        .and(&generated.data)
        .and_broadcast(&mask.data)
        .for_each(|o, &g, &m| {
            // Exact selection for binary masks, so a zero mask returns the
            // original bit for bit.
            if m == 1.0 {
                *o = g;
            } else if m != 0.0 {
                *o = g * m + *o * (1.0 - m);
            }
        });
    Ok(Video {
        data,
        fps: original.fps,
    })
}
