use candle_core::Tensor;

use super::layers::Linear;
use super::params::{Init, ParamBuilder};
use super::patchify::TokenLayout;
use crate::tensor::device;
use crate::{Error, Result};

/// Sinusoidal features `[cos(t·f_i), sin(t·f_i)]` with
/// `f_i = 10000^(-i/half)`, as a `[1, dim]` tensor.
pub fn sinusoidal_timestep(t: usize, dim: usize) -> Result<Tensor> {
    let half = dim / 2;
    let mut values = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        values[i] = arg.cos();
        values[half + i] = arg.sin();
    }
    Ok(Tensor::from_vec(values, (1, dim), &device())?)
}

/// Sinusoidal embedding followed by `Linear → SiLU → Linear` to model width.
#[derive(Debug, Clone)]
pub struct TimestepEmbedder {
    fc1: Linear,
    fc2: Linear,
    freq_dim: usize,
}

impl TimestepEmbedder {
    pub fn new(pb: &ParamBuilder<'_>, freq_dim: usize, model_dim: usize) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(&pb.pp("fc1"), freq_dim, model_dim)?,
            fc2: Linear::new(&pb.pp("fc2"), model_dim, model_dim)?,
            freq_dim,
        })
    }

    pub fn layers(&self) -> (&Linear, &Linear) {
        (&self.fc1, &self.fc2)
    }

    pub fn forward(&self, t: usize) -> Result<Tensor> {
        let freqs = sinusoidal_timestep(t, self.freq_dim)?;
        self.fc2.forward(&self.fc1.forward(&freqs)?.silu()?)
    }
}

/// Learned absolute position tables for frame, row and column, summed per
/// token. Added to tokens outside the attention op.
#[derive(Debug, Clone)]
pub struct PositionalEmbedding3d {
    frames: Tensor,
    rows: Tensor,
    cols: Tensor,
}

impl PositionalEmbedding3d {
    pub fn new(pb: &ParamBuilder<'_>, max_frames: usize, max_rows: usize, max_cols: usize, dim: usize) -> Result<Self> {
        Ok(Self {
            frames: pb.get(&[max_frames, dim], "frame", Init::Normal(0.02))?,
            rows: pb.get(&[max_rows, dim], "row", Init::Normal(0.02))?,
            cols: pb.get(&[max_cols, dim], "col", Init::Normal(0.02))?,
        })
    }

    pub fn tables(&self) -> (&Tensor, &Tensor, &Tensor) {
        (&self.frames, &self.rows, &self.cols)
    }

    /// `[L, D]` embedding for every token of `layout`.
    pub fn forward(&self, layout: &TokenLayout) -> Result<Tensor> {
        let (max_f, dim) = self.frames.dims2()?;
        let max_r = self.rows.dims()[0];
        let max_c = self.cols.dims()[0];
        if layout.frames > max_f || layout.rows > max_r || layout.cols > max_c {
            return Err(Error::Config(format!(
                "token grid {}x{}x{} exceeds positional tables {max_f}x{max_r}x{max_c}",
                layout.frames, layout.rows, layout.cols
            )));
        }
        let f = self.frames.narrow(0, 0, layout.frames)?.reshape((layout.frames, 1, 1, dim))?;
        let r = self.rows.narrow(0, 0, layout.rows)?.reshape((1, layout.rows, 1, dim))?;
        let c = self.cols.narrow(0, 0, layout.cols)?.reshape((1, 1, layout.cols, dim))?;
        Ok(f.broadcast_add(&r)?.broadcast_add(&c)?.reshape((layout.len(), dim))?)
    }
}
