use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::latent_codec::LatentMask;
use crate::tensor::{scalar, to_tensor};
use crate::{Error, Result};

/// Weight of the temporal term in the total loss.
pub const TEMPORAL_WEIGHT: f64 = 0.1;

/// Normalisation of the masked noise loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// `Σ (m·(ε − ε̂))² / N`: mean over active entries.
    #[default]
    MeanMasked,
    /// `‖(ε − ε̂)·m / N‖² = Σ (m·(ε − ε̂))² / N²` with the normaliser inside
    /// the norm and `N = #{m ≠ 0}` counted over mask positions.
    NormInside,
}

impl std::str::FromStr for LossForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_masked" => Ok(Self::MeanMasked),
            "norm_inside" => Ok(Self::NormInside),
            other => Err(Error::Config(format!("unknown loss form `{other}`"))),
        }
    }
}

/// Scalar components of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_masked: f64,
    /// Absent when the temporal term is disabled.
    pub l_temporal: Option<f64>,
    pub l_total: f64,
    pub alpha: f64,
}

impl LossReport {
    pub fn new(l_masked: f64, l_temporal: Option<f64>, alpha: f64) -> Self {
        let l_total = match l_temporal {
            Some(t) => l_masked + alpha * t,
            None => l_masked,
        };
        Self {
            l_masked,
            l_temporal,
            l_total,
            alpha,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l_masked.is_finite() && self.l_total.is_finite() && self.l_temporal.is_none_or(f64::is_finite)
    }
}

/// Active entries counted per channel: `C · #{m ≠ 0}`.
pub fn active_entries(mask: &LatentMask, channels: usize) -> usize {
    mask.active_count() * channels
}

/// Masked noise-prediction loss over `[T, h, w, C]` tensors.
pub fn masked_diffusion_loss(noise: &Tensor, prediction: &Tensor, mask: &LatentMask, form: LossForm) -> Result<Tensor> {
    if noise.dims() != prediction.dims() {
        return Err(Error::Alignment(format!("noise {:?} vs prediction {:?}", noise.dims(), prediction.dims())));
    }
    let dims = noise.dims();
    let md = mask.data().dim();
    if dims.len() != 4 || (dims[0], dims[1], dims[2]) != (md.0, md.1, md.2) {
        return Err(Error::Alignment(format!("mask {md:?} does not cover latent {dims:?}")));
    }
    let n = active_entries(mask, dims[3]);
    if n == 0 {
        return Err(Error::EmptyMask("loss needs at least one active latent entry".into()));
    }
    let m = to_tensor(mask.data())?;
    let weighted = noise.sub(prediction)?.broadcast_mul(&m)?;
    let sum = weighted.sqr()?.sum_all()?;
    let norm = match form {
        LossForm::MeanMasked => n as f64,
        LossForm::NormInside => (mask.active_count() as f64).powi(2),
    };
    Ok((sum / norm)?)
}

/// `Σ_i ‖ε̂^i − ε̂^{i+1}‖²` over consecutive latent frames.
pub fn temporal_consistency_loss(prediction: &Tensor) -> Result<Tensor> {
    let frames = prediction.dims().first().copied().unwrap_or(0);
    if frames < 2 {
        return Ok(Tensor::zeros((), prediction.dtype(), prediction.device())?);
    }
    let a = prediction.narrow(0, 0, frames - 1)?;
    let b = prediction.narrow(0, 1, frames - 1)?;
    Ok(a.sub(&b)?.sqr()?.sum_all()?)
}

/// Masked loss plus, when `alpha` is given, `alpha` times the temporal loss.
/// Returns the differentiable total and its scalar report.
pub fn total_loss(
    noise: &Tensor,
    prediction: &Tensor,
    mask: &LatentMask,
    alpha: Option<f64>,
    form: LossForm,
) -> Result<(Tensor, LossReport)> {
    let masked = masked_diffusion_loss(noise, prediction, mask, form)?;
    let l_masked = scalar(&masked)?;
    match alpha {
        None => Ok((masked, LossReport::new(l_masked, None, 0.0))),
        Some(alpha) => {
            let temporal = temporal_consistency_loss(prediction)?;
            let l_temporal = scalar(&temporal)?;
            let total = masked.add(&(temporal * alpha)?)?;
            Ok((total, LossReport::new(l_masked, Some(l_temporal), alpha)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn t(a: &Array4<f64>) -> Tensor {
        to_tensor(a).unwrap()
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let e = Array4::from_shape_fn((2, 2, 2, 3), |(a, b, c, d)| (a + b * 2 + c * 3 + d) as f64);
        let m = LatentMask::new(Array4::ones((2, 2, 2, 1))).unwrap();
        let l = masked_diffusion_loss(&t(&e), &t(&e), &m, LossForm::MeanMasked).unwrap();
        assert_eq!(scalar(&l).unwrap(), 0.0);
    }

    #[test]
    fn full_mask_is_plain_mse() {
        let e = Array4::from_shape_fn((2, 2, 2, 3), |(a, b, c, d)| ((a * 7 + b * 5 + c * 3 + d) as f64).sin());
        let p = Array4::from_shape_fn((2, 2, 2, 3), |(a, b, c, d)| ((a + b + c * 2 + d * 3) as f64).cos());
        let m = LatentMask::new(Array4::ones((2, 2, 2, 1))).unwrap();
        let l = scalar(&masked_diffusion_loss(&t(&e), &t(&p), &m, LossForm::MeanMasked).unwrap()).unwrap();
        let mse = (&e - &p).mapv(|v| v * v).mean().unwrap();
        assert!((l - mse).abs() < 1e-12);
    }

    #[test]
    fn half_mask_matches_loop_oracle() {
        let e = Array4::from_shape_vec((2, 2, 2, 1), vec![0.1, -0.4, 0.9, 1.3, -0.2, 0.5, 0.0, 2.0]).unwrap();
        let p = Array4::from_shape_vec((2, 2, 2, 1), vec![0.3, 0.4, -0.1, 1.0, 0.2, 0.5, 1.0, -1.0]).unwrap();
        let md = Array4::from_shape_vec((2, 2, 2, 1), vec![1.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.25, 0.0]).unwrap();
        let m = LatentMask::new(md.clone()).unwrap();
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..8 {
            let (e, p, w) = (e.as_slice().unwrap()[i], p.as_slice().unwrap()[i], md.as_slice().unwrap()[i]);
            sum += (w * (e - p)).powi(2);
            if w != 0.0 {
                count += 1;
            }
        }
        let l = scalar(&masked_diffusion_loss(&t(&e), &t(&p), &m, LossForm::MeanMasked).unwrap()).unwrap();
        assert!((l - sum / count as f64).abs() < 1e-12);
        let lit = scalar(&masked_diffusion_loss(&t(&e), &t(&p), &m, LossForm::NormInside).unwrap()).unwrap();
        assert!((lit - sum / (count * count) as f64).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let z = Array4::zeros((1, 2, 2, 2));
        let m = LatentMask::new(Array4::zeros((1, 2, 2, 1))).unwrap();
        assert!(matches!(
            masked_diffusion_loss(&t(&z), &t(&z), &m, LossForm::MeanMasked),
            Err(Error::EmptyMask(_))
        ));
    }

    #[test]
    fn temporal_closed_forms() {
        let one = Array4::from_elem((1, 3, 3, 2), 4.0);
        assert_eq!(scalar(&temporal_consistency_loss(&t(&one)).unwrap()).unwrap(), 0.0);
        let d = 0.3;
        let two = Array4::from_shape_fn((2, 3, 2, 4), |(f, y, x, c)| (y + x + c) as f64 * 0.1 + f as f64 * d);
        let l = scalar(&temporal_consistency_loss(&t(&two)).unwrap()).unwrap();
        assert!((l - 3.0 * 2.0 * 4.0 * d * d).abs() < 1e-10);
    }

    #[test]
    fn temporal_random_matches_loop_oracle() {
        let a = Array4::from_shape_fn((4, 2, 3, 2), |(f, y, x, c)| ((f * 13 + y * 7 + x * 3 + c) as f64).sin());
        let mut expect = 0.0;
        for f in 0..3 {
            for y in 0..2 {
                for x in 0..3 {
                    for c in 0..2 {
                        expect += (a[[f, y, x, c]] - a[[f + 1, y, x, c]]).powi(2);
                    }
                }
            }
        }
        let l = scalar(&temporal_consistency_loss(&t(&a)).unwrap()).unwrap();
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn report_arithmetic() {
        let r = LossReport::new(0.4, Some(0.2), 0.1);
        assert!((r.l_total - 0.42).abs() < 1e-15);
        assert_eq!(LossReport::new(0.4, Some(0.2), 0.0).l_total, 0.4);
        assert_eq!(LossReport::new(0.4, None, 0.1).l_total, 0.4);
    }
}
