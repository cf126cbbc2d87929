//! Latent ↔ token-sequence rearrangement.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Factorisation of a token sequence back into latent geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLayout {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    pub patch: usize,
    pub channels: usize,
}

impl TokenLayout {
    pub fn len(&self) -> usize {
        self.frames * self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch_features(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    /// Token index of patch `(frame, row, col)`.
    pub fn index(&self, frame: usize, row: usize, col: usize) -> usize {
        (frame * self.rows + row) * self.cols + col
    }
}

/// `[L, features]` tokens plus the layout they were cut from, when known.
#[derive(Debug, Clone)]
pub struct TokenSequence {
    data: Tensor,
    layout: Option<TokenLayout>,
}

impl TokenSequence {
    pub fn new(data: Tensor, layout: Option<TokenLayout>) -> Result<Self> {
        let (len, _) = data.dims2()?;
        if let Some(l) = layout {
            if l.len() != len {
                return Err(Error::Alignment(format!("{len} tokens do not match layout of {}", l.len())));
            }
        }
        Ok(Self { data, layout })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn layout(&self) -> Option<TokenLayout> {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same layout, new token features.
    pub fn with_data(&self, data: Tensor) -> TokenSequence {
        TokenSequence {
            data,
            layout: self.layout,
        }
    }
}

/// Cuts a `[T, h, w, C]` latent into non-overlapping `p × p` patches per
/// frame, scanned in `(frame, row, col)` order. Patch features are laid out as
/// `(dy, dx, channel)`. The learned projection to model width is applied by
/// the model's patch embedding, not here.
pub fn patchify(latent: &Tensor, patch: usize) -> Result<TokenSequence> {
    let (t, h, w, c) = latent.dims4()?;
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::Config(format!("latent {h}x{w} not divisible by patch size {patch}")));
    }
    let layout = TokenLayout {
        frames: t,
        rows: h / patch,
        cols: w / patch,
        patch,
        channels: c,
    };
    let tokens = latent
        .reshape(&[t, layout.rows, patch, layout.cols, patch, c][..])?
        .permute([0usize, 1, 3, 2, 4, 5])?
        .contiguous()?
        .reshape((layout.len(), layout.patch_features()))?;
    TokenSequence::new(tokens, Some(layout))
}

/// Exact inverse of [`patchify`]'s rearrangement.
pub fn unpatchify(tokens: &TokenSequence) -> Result<Tensor> {
    let layout = tokens
        .layout
        .ok_or_else(|| Error::Contract("token sequence has no layout metadata".into()))?;
    let (len, features) = tokens.data.dims2()?;
    if len != layout.len() || features != layout.patch_features() {
        return Err(Error::Alignment(format!(
            "tokens are {len}x{features}, layout expects {}x{}",
            layout.len(),
            layout.patch_features()
        )));
    }
    let p = layout.patch;
    Ok(tokens
        .data
        .reshape(&[layout.frames, layout.rows, layout.cols, p, p, layout.channels][..])?
        .permute([0usize, 1, 3, 2, 4, 5])?
        .contiguous()?
        .reshape((layout.frames, layout.rows * p, layout.cols * p, layout.channels))?)
}
