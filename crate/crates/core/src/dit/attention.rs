//! Full 3D self-attention and the parallel text/garment cross-attention.

use candle_core::{Tensor, D};

use super::layers::Linear;
use super::params::ParamBuilder;
use super::patchify::TokenSequence;
use crate::{Error, Result};

/// Multi-head scaled dot-product attention with separate query, key, value
/// and output projections. Self-attention when `context` is the input itself.
#[derive(Debug, Clone)]
pub struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(pb: &ParamBuilder<'_>, model_dim: usize, context_dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || model_dim % heads != 0 {
            return Err(Error::Config(format!("model dim {model_dim} not divisible by {heads} heads")));
        }
        Ok(Self {
            q: Linear::new(&pb.pp("q"), model_dim, model_dim)?,
            k: Linear::new(&pb.pp("k"), context_dim, model_dim)?,
            v: Linear::new(&pb.pp("v"), context_dim, model_dim)?,
            out: Linear::new(&pb.pp("out"), model_dim, model_dim)?,
            heads,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// `(q, k, v, out)` projections.
    pub fn projections(&self) -> (&Linear, &Linear, &Linear, &Linear) {
        (&self.q, &self.k, &self.v, &self.out)
    }

    /// `x: [L, D]`, `context: [M, Dc]` → `[L, D]`.
    pub fn forward(&self, x: &Tensor, context: &Tensor) -> Result<Tensor> {
        let (len, dim) = x.dims2()?;
        let ctx_len = context.dims2()?.0;
        let head_dim = dim / self.heads;
        let split = |t: Tensor, n: usize| -> Result<Tensor> {
            Ok(t.reshape((n, self.heads, head_dim))?.transpose(0, 1)?.contiguous()?)
        };
        let q = split(self.q.forward(x)?, len)?;
        let k = split(self.k.forward(context)?, ctx_len)?;
        let v = split(self.v.forward(context)?, ctx_len)?;
        let scores = q
            .matmul(&k.t()?.contiguous()?)?
            .affine(1.0 / (head_dim as f64).sqrt(), 0.0)?;
        let weights = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let mixed = weights.matmul(&v)?.transpose(0, 1)?.contiguous()?.reshape((len, dim))?;
        self.out.forward(&mixed)
    }
}

/// Self-attention over every token of every latent frame jointly: no
/// spatial/temporal factorisation and no causal mask.
pub fn full3d_attention(attn: &Attention, x: &TokenSequence) -> Result<TokenSequence> {
    let out = attn.forward(x.data(), x.data())?;
    Ok(x.with_data(out))
}

/// Text cross-attention plus a parallel garment branch weighted by a scale:
/// `x + CrossAttn(x, text) + s · CrossAttn(x, garment)`.
///
/// An empty (or absent) context contributes exactly nothing, and with
/// `s = 0` the garment branch is not evaluated at all.
#[derive(Debug, Clone)]
pub struct DualCrossAttention {
    text: Attention,
    garment: Option<Attention>,
}

impl DualCrossAttention {
    pub fn new(
        pb: &ParamBuilder<'_>,
        model_dim: usize,
        text_dim: usize,
        garment_dim: Option<usize>,
        heads: usize,
    ) -> Result<Self> {
        let text = Attention::new(&pb.pp("text_attn"), model_dim, text_dim, heads)?;
        let garment = garment_dim
            .map(|g| Attention::new(&pb.pp("garment_attn"), model_dim, g, heads))
            .transpose()?;
        Ok(Self { text, garment })
    }

    pub fn text_branch(&self) -> &Attention {
        &self.text
    }

    pub fn garment_branch(&self) -> Option<&Attention> {
        self.garment.as_ref()
    }

    pub fn forward(
        &self,
        x: &Tensor,
        text_tokens: Option<&Tensor>,
        garment_tokens: Option<&Tensor>,
        scale: f64,
    ) -> Result<Tensor> {
        let mut out = x.clone();
        if let Some(text) = non_empty(text_tokens)? {
            out = (out + self.text.forward(x, text)?)?;
        }
        if scale != 0.0 {
            if let (Some(branch), Some(garment)) = (&self.garment, non_empty(garment_tokens)?) {
                out = (out + branch.forward(x, garment)?.affine(scale, 0.0)?)?;
            }
        }
        Ok(out)
    }
}

fn non_empty(tokens: Option<&Tensor>) -> Result<Option<&Tensor>> {
    match tokens {
        Some(t) if t.dims2()?.0 > 0 => Ok(Some(t)),
        _ => Ok(None),
    }
}

/// Convenience wrapper over [`DualCrossAttention::forward`] on token sequences.
pub fn dual_cross_attention(
    layer: &DualCrossAttention,
    x: &TokenSequence,
    text_tokens: Option<&Tensor>,
    garment_tokens: Option<&Tensor>,
    scale: f64,
) -> Result<TokenSequence> {
    let out = layer.forward(x.data(), text_tokens, garment_tokens, scale)?;
    Ok(x.with_data(out))
}
