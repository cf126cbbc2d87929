//! Full 3D spatio-temporal attention diffusion transformer.

mod attention;
mod embed;
mod layers;
mod model;
mod params;
mod patchify;

pub use attention::{dual_cross_attention, full3d_attention, Attention, DualCrossAttention};
pub use embed::{sinusoidal_timestep, PositionalEmbedding3d, TimestepEmbedder};
pub use layers::{LayerNorm, Linear, Mlp};
pub use model::{DiT, DiTBlock, DiTConfig};
pub use params::{Init, ParamBuilder, ParamStore};
pub use patchify::{patchify, unpatchify, TokenLayout, TokenSequence};
