use candle_core::{Tensor, D};

use super::params::{Init, ParamBuilder};
use crate::Result;

/// `y = x Wᵀ + b` over the last axis; any leading axes are flattened.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Linear {
    /// PyTorch-style uniform init with bound `1/√in`.
    pub fn new(pb: &ParamBuilder<'_>, in_dim: usize, out_dim: usize) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self::with_init(pb, in_dim, out_dim, Init::Uniform(bound), Init::Uniform(bound))
    }

    pub fn with_init(
        pb: &ParamBuilder<'_>,
        in_dim: usize,
        out_dim: usize,
        weight: Init,
        bias: Init,
    ) -> Result<Self> {
        Ok(Self {
            weight: pb.get(&[out_dim, in_dim], "weight", weight)?,
            bias: Some(pb.get(&[out_dim], "bias", bias)?),
        })
    }

    pub fn no_bias(pb: &ParamBuilder<'_>, in_dim: usize, out_dim: usize, weight: Init) -> Result<Self> {
        Ok(Self {
            weight: pb.get(&[out_dim, in_dim], "weight", weight)?,
            bias: None,
        })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> Option<&Tensor> {
        self.bias.as_ref()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let in_dim = *dims.last().expect("linear input must have rank >= 1");
        let rows = x.elem_count() / in_dim.max(1);
        let flat = x.reshape((rows, in_dim))?;
        let mut y = flat.matmul(&self.weight.t()?)?;
        if let Some(b) = &self.bias {
            y = y.broadcast_add(b)?;
        }
        let mut out_dims = dims;
        *out_dims.last_mut().expect("non-empty dims") = self.out_dim();
        Ok(y.reshape(out_dims)?)
    }
}

/// Layer normalisation over the last axis with learned gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    gain: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-6;

    pub fn new(pb: &ParamBuilder<'_>, dim: usize) -> Result<Self> {
        Ok(Self {
            gain: pb.get(&[dim], "weight", Init::Ones)?,
            bias: pb.get(&[dim], "bias", Init::Zeros)?,
            eps: Self::EPS,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gain)?.broadcast_add(&self.bias)?)
    }
}

/// Two-layer perceptron with a tanh-approximated GELU in between.
#[derive(Debug, Clone)]
pub struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    pub fn new(pb: &ParamBuilder<'_>, in_dim: usize, hidden: usize, out_dim: usize) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(&pb.pp("fc1"), in_dim, hidden)?,
            fc2: Linear::new(&pb.pp("fc2"), hidden, out_dim)?,
        })
    }

    pub fn from_layers(fc1: Linear, fc2: Linear) -> Self {
        Self { fc1, fc2 }
    }

    pub fn fc1(&self) -> &Linear {
        &self.fc1
    }

    pub fn fc2(&self) -> &Linear {
        &self.fc2
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu()?)
    }
}
