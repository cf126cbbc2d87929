//! Conditional video inpainting for virtual try-on.
//!
//! The crate is organised around the data path of the inpainting model:
//!
//! - [`latent_codec`]: pixel/latent boundary, agnostic videos, mask reshaping
//!   and the three-way input fusion.
//! - [`masking`]: box, instance and garment mask generators.
//! - [`conditioning`]: text, garment and pose condition builders.
//! - [`dit`]: the full 3D-attention diffusion transformer.
//! - [`diffusion`]: noise schedule, losses and the ancestral sampler.
//! - [`model`]: the assembled model, checkpoints and inference.
//! - [`training`]: multi-stage training orchestration and checkpoints.
//! - [`evaluation`]: SSIM, perceptual distance, VFID and friends.

pub mod conditioning;
pub mod diffusion;
pub mod dit;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod latent_codec;
pub mod masking;
pub mod model;
pub mod seed;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
