//! Garment encoder: two frozen feature branches, per-branch linear maps,
//! token-axis concatenation and a shared MLP.

use candle_core::Tensor;
use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dit::{Linear, Mlp, ParamBuilder};
use crate::tensor::to_tensor;
use crate::{Error, Result};

/// Reference garment image `[H, W, 3]` in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GarmentImage {
    data: Array3<f64>,
}

impl GarmentImage {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.dim().2 != 3 {
            return Err(Error::Alignment(format!("garment image must have 3 channels, got {}", data.dim().2)));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("garment image contains non-finite values".into()));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }
}

/// Output dimensions declared by a feature-extractor plugin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorCapability {
    pub name: String,
    pub tokens: usize,
    pub dim: usize,
}

/// Frozen visual backbone producing `[K, d]` tokens for a garment image.
pub trait VisualFeatureExtractor: Send + Sync {
    fn name(&self) -> &str;

    fn feature_dim(&self) -> usize;

    /// Token count for a configured input size; never depends on content.
    fn token_count(&self, height: usize, width: usize) -> Result<usize>;

    fn extract(&self, image: &GarmentImage) -> Result<Array2<f64>>;

    fn capability(&self, height: usize, width: usize) -> Result<ExtractorCapability> {
        Ok(ExtractorCapability {
            name: self.name().to_string(),
            tokens: self.token_count(height, width)?,
            dim: self.feature_dim(),
        })
    }
}

/// Stub backbone: average-pool the image by `pool`, cut `patch × patch`
/// patches, and project each flattened patch through a fixed seeded Gaussian
/// matrix (optionally followed by `tanh`).
#[derive(Debug, Clone)]
pub struct PatchProjectionExtractor {
    name: String,
    pool: usize,
    patch: usize,
    squash: bool,
    projection: Array2<f64>,
}

impl PatchProjectionExtractor {
    pub fn new(name: &str, pool: usize, patch: usize, dim: usize, squash: bool, seed: u64) -> Self {
        let inputs = patch * patch * 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (inputs as f64).sqrt();
        let projection = Array2::from_shape_fn((inputs, dim), |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * scale
        });
        Self {
            name: name.to_string(),
            pool,
            patch,
            squash,
            projection,
        }
    }

    /// Fine-grained branch standing in for an image-VAE encoder.
    pub fn vae_like(dim: usize) -> Self {
        Self::new("patch_vae", 1, 4, dim, false, 0x7661_6531)
    }

    /// Coarse, squashed branch standing in for a semantic vision encoder.
    pub fn semantic_like(dim: usize) -> Self {
        Self::new("patch_semantic", 2, 4, dim, true, 0x7365_6d31)
    }

    fn grid(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let step = self.pool * self.patch;
        if height == 0 || width == 0 || height % step != 0 || width % step != 0 {
            return Err(Error::Config(format!(
                "{} expects image sides divisible by {step}, got {height}x{width}",
                self.name
            )));
        }
        Ok((height / step, width / step))
    }
}

impl VisualFeatureExtractor for PatchProjectionExtractor {
    fn name(&self) -> &str {
        &self.name
    }

    fn feature_dim(&self) -> usize {
        self.projection.dim().1
    }

    fn token_count(&self, height: usize, width: usize) -> Result<usize> {
        let (r, c) = self.grid(height, width)?;
        Ok(r * c)
    }

    fn extract(&self, image: &GarmentImage) -> Result<Array2<f64>> {
        let (rows, cols) = self.grid(image.height(), image.width())?;
        let (pool, patch) = (self.pool, self.patch);
        let px = image.data();
        let norm = (pool * pool) as f64;
        let mut flat = Array2::zeros((rows * cols, patch * patch * 3));
        for r in 0..rows {
            for c in 0..cols {
                let token = r * cols + c;
                for dy in 0..patch {
                    for dx in 0..patch {
                        for ch in 0..3 {
                            let mut sum = 0.0;
                            for py in 0..pool {
                                for pxo in 0..pool {
                                    let y = (r * patch + dy) * pool + py;
                                    let x = (c * patch + dx) * pool + pxo;
                                    sum += px[[y, x, ch]];
                                }
                            }
                            flat[[token, (dy * patch + dx) * 3 + ch]] = sum / norm;
                        }
                    }
                }
            }
        }
        let mut out = flat.dot(&self.projection);
        if self.squash {
            out.mapv_inplace(f64::tanh);
        }
        Ok(out)
    }
}

/// Trainable part of the garment encoder.
#[derive(Debug, Clone)]
pub struct GarmentEncoder {
    linear_a: Linear,
    linear_b: Linear,
    mlp: Mlp,
}

impl GarmentEncoder {
    pub fn new(pb: &ParamBuilder<'_>, dim_a: usize, dim_b: usize, garment_dim: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            linear_a: Linear::new(&pb.pp("linear_a"), dim_a, garment_dim)?,
            linear_b: Linear::new(&pb.pp("linear_b"), dim_b, garment_dim)?,
            mlp: Mlp::new(&pb.pp("mlp"), garment_dim, hidden, garment_dim)?,
        })
    }

    pub fn layers(&self) -> (&Linear, &Linear, &Mlp) {
        (&self.linear_a, &self.linear_b, &self.mlp)
    }

    /// `[K_a, d_a]`, `[K_b, d_b]` branch features → `[K_a + K_b, garment_dim]`.
    pub fn forward(&self, features_a: &Tensor, features_b: &Tensor) -> Result<Tensor> {
        let a = self.linear_a.forward(features_a)?;
        let b = self.linear_b.forward(features_b)?;
        let tokens = Tensor::cat(&[&a, &b], 0)?;
        self.mlp.forward(&tokens)
    }
}

/// Runs both frozen branches; failures are tagged with the branch name.
pub fn extract_garment_features(
    image: &GarmentImage,
    branch_a: &dyn VisualFeatureExtractor,
    branch_b: &dyn VisualFeatureExtractor,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let tag = |name: &str| {
        let name = name.to_string();
        move |e: Error| Error::Extractor {
            branch: name,
            source: Box::new(e),
        }
    };
    let a = branch_a.extract(image).map_err(tag(branch_a.name()))?;
    let b = branch_b.extract(image).map_err(tag(branch_b.name()))?;
    Ok((a, b))
}

/// Full garment path: frozen branches, then the trainable encoder.
pub fn encode_garment(
    image: &GarmentImage,
    branch_a: &dyn VisualFeatureExtractor,
    branch_b: &dyn VisualFeatureExtractor,
    encoder: &GarmentEncoder,
) -> Result<Tensor> {
    let (a, b) = extract_garment_features(image, branch_a, branch_b)?;
    encoder.forward(&to_tensor(&a)?, &to_tensor(&b)?)
}
