use nalgebra::DMatrix;
use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{latent_frame_count, temporal_group, LatentShape, LatentVideo, Video};
use crate::{Error, Result};

/// Video autoencoder boundary. Stubs in this crate are exactly invertible;
/// a learned causal video VAE would plug in behind the same interface.
pub trait VideoCodec: Send + Sync {
    fn name(&self) -> &str;

    fn spatial_factor(&self) -> usize;

    fn temporal_factor(&self) -> usize;

    fn latent_channels(&self) -> usize;

    fn encode(&self, video: &Video) -> Result<LatentVideo>;

    fn decode(&self, latent: &LatentVideo) -> Result<Video>;

    fn latent_shape(&self, frames: usize, height: usize, width: usize) -> Result<LatentShape> {
        LatentShape::for_pixels(
            frames,
            height,
            width,
            self.latent_channels(),
            self.spatial_factor(),
            self.temporal_factor(),
        )
    }

    fn capability(&self) -> CodecCapability {
        CodecCapability {
            name: self.name().to_string(),
            spatial_factor: self.spatial_factor(),
            temporal_factor: self.temporal_factor(),
            latent_channels: self.latent_channels(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecCapability {
    pub name: String,
    pub spatial_factor: usize,
    pub temporal_factor: usize,
    pub latent_channels: usize,
}

/// Registered codec names: `identity` and `orthogonal2x`.
pub fn codec_by_name(name: &str) -> Result<Box<dyn VideoCodec>> {
    match name {
        "identity" => Ok(Box::new(IdentityCodec)),
        "orthogonal2x" => Ok(Box::new(OrthogonalCodec::new(2, 2, OrthogonalCodec::DEFAULT_SEED))),
        other => Err(Error::Config(format!("unknown codec plugin `{other}`"))),
    }
}

/// `f_s = f_t = 1`, latent equals pixels.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCodec;

impl VideoCodec for IdentityCodec {
    fn name(&self) -> &str {
        "identity"
    }

    fn spatial_factor(&self) -> usize {
        1
    }

    fn temporal_factor(&self) -> usize {
        1
    }

    fn latent_channels(&self) -> usize {
        3
    }

    fn encode(&self, video: &Video) -> Result<LatentVideo> {
        LatentVideo::new(video.data().clone(), 1, 1, video.frames())
    }

    fn decode(&self, latent: &LatentVideo) -> Result<Video> {
        if latent.spatial_factor != 1 || latent.temporal_factor != 1 || latent.data().dim().3 != 3 {
            return Err(Error::Alignment("latent was not produced by the identity codec".into()));
        }
        Video::new(latent.data().clone())
    }
}

/// Causal block codec: every `f_t × f_s × f_s × 3` pixel block is mapped
/// through a fixed orthogonal matrix to `f_t·f_s²·3` latent channels.
///
/// The first frame forms its own temporal group; short groups are padded by
/// repeating their last frame, so decoding is exact up to rounding.
#[derive(Debug, Clone)]
pub struct OrthogonalCodec {
    spatial: usize,
    temporal: usize,
    basis: DMatrix<f64>,
}

impl OrthogonalCodec {
    pub const DEFAULT_SEED: u64 = 0x5eed_c0de;

    pub fn new(spatial: usize, temporal: usize, seed: u64) -> Self {
        let dim = spatial * spatial * temporal * 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gaussian = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
        let basis = gaussian.qr().q();
        Self {
            spatial,
            temporal,
            basis,
        }
    }

    fn block_len(&self) -> usize {
        self.spatial * self.spatial * self.temporal * 3
    }
}

impl VideoCodec for OrthogonalCodec {
    fn name(&self) -> &str {
        "orthogonal2x"
    }

    fn spatial_factor(&self) -> usize {
        self.spatial
    }

    fn temporal_factor(&self) -> usize {
        self.temporal
    }

    fn latent_channels(&self) -> usize {
        self.block_len()
    }

    fn encode(&self, video: &Video) -> Result<LatentVideo> {
        let shape = self.latent_shape(video.frames(), video.height(), video.width())?;
        let (fs, ft) = (self.spatial, self.temporal);
        let n = video.frames();
        let pixels = video.data();
        let mut out = Array4::zeros(shape.dims());
        let mut block = nalgebra::DVector::<f64>::zeros(self.block_len());
        for j in 0..shape.frames {
            let group = temporal_group(j, n, ft);
            for by in 0..shape.height {
                for bx in 0..shape.width {
                    let mut k = 0;
                    for dt in 0..ft {
                        let frame = (group.start + dt).min(group.end - 1);
                        for dy in 0..fs {
                            for dx in 0..fs {
                                for c in 0..3 {
                                    block[k] = pixels[[frame, by * fs + dy, bx * fs + dx, c]];
                                    k += 1;
                                }
                            }
                        }
                    }
                    let coded = &self.basis * &block;
                    for (c, v) in coded.iter().enumerate() {
                        out[[j, by, bx, c]] = *v;
                    }
                }
            }
        }
        LatentVideo::from_shape(&shape, out)
    }

    fn decode(&self, latent: &LatentVideo) -> Result<Video> {
        let (t, h, w, c) = latent.data().dim();
        if latent.spatial_factor != self.spatial || latent.temporal_factor != self.temporal || c != self.block_len() {
            return Err(Error::Alignment("latent was not produced by this codec".into()));
        }
        let n = latent.source_frames;
        if latent_frame_count(n, self.temporal) != t {
            return Err(Error::Alignment(format!("{t} latent frames cannot decode to {n} frames")));
        }
        let (fs, ft) = (self.spatial, self.temporal);
        let mut out = Array4::zeros((n, h * fs, w * fs, 3));
        let basis_t = self.basis.transpose();
        let mut coded = nalgebra::DVector::<f64>::zeros(c);
        for j in 0..t {
            let group = temporal_group(j, n, ft);
            for by in 0..h {
                for bx in 0..w {
                    for ch in 0..c {
                        coded[ch] = latent.data()[[j, by, bx, ch]];
                    }
                    let block = &basis_t * &coded;
                    let mut k = 0;
                    for dt in 0..ft {
                        let frame = group.start + dt;
                        for dy in 0..fs {
                            for dx in 0..fs {
                                for ch in 0..3 {
                                    if frame < group.end {
                                        out[[frame, by * fs + dy, bx * fs + dx, ch]] = block[k];
                                    }
                                    k += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        Video::new(out)
    }
}
