use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::latent_codec::Video;
use crate::{Error, Result};

/// Diagonal loading added to both covariances before the matrix square root.
pub const COVARIANCE_EPS: f64 = 1e-6;

/// Clip-level spatio-temporal feature backbone.
pub trait FeatureExtractor3D: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn extract(&self, video: &Video) -> Result<Vec<f64>>;
}

/// Handcrafted pooled statistics. Per channel: mean, standard deviation,
/// mean absolute temporal difference, mean absolute spatial gradient and the
/// four quadrant means.
#[derive(Debug, Clone, Default)]
pub struct PooledStats3D;

impl FeatureExtractor3D for PooledStats3D {
    fn name(&self) -> &str {
        "pooled_stats"
    }

    fn dim(&self) -> usize {
        24
    }

    fn extract(&self, video: &Video) -> Result<Vec<f64>> {
        let d = video.data();
        let (n, h, w, _) = d.dim();
        let mut out = Vec::with_capacity(24);
        for c in 0..3 {
            let ch = d.index_axis(ndarray::Axis(3), c);
            let mean = ch.mean().unwrap_or(0.0);
            let std = ch.mapv(|v| (v - mean).powi(2)).mean().unwrap_or(0.0).sqrt();
            let mut temporal = 0.0;
            if n > 1 {
                for t in 0..n - 1 {
                    for y in 0..h {
                        for x in 0..w {
                            temporal += (ch[[t + 1, y, x]] - ch[[t, y, x]]).abs();
                        }
                    }
                }
                temporal /= ((n - 1) * h * w) as f64;
            }
            let mut grad = 0.0;
            for t in 0..n {
                for y in 0..h {
                    for x in 0..w {
                        if x + 1 < w {
                            grad += (ch[[t, y, x + 1]] - ch[[t, y, x]]).abs();
                        }
                        if y + 1 < h {
                            grad += (ch[[t, y + 1, x]] - ch[[t, y, x]]).abs();
                        }
                    }
                }
            }
            grad /= (n * h * w) as f64;
            out.extend([mean, std, temporal, grad]);
            let (hh, hw) = (h.div_ceil(2), w.div_ceil(2));
            for (ys, xs) in [(0..hh, 0..hw), (0..hh, hw..w), (hh..h, 0..hw), (hh..h, hw..w)] {
                let mut s = 0.0;
                let mut k = 0usize;
                for t in 0..n {
                    for y in ys.clone() {
                        for x in xs.clone() {
                            s += ch[[t, y, x]];
                            k += 1;
                        }
                    }
                }
                out.push(if k == 0 { 0.0 } else { s / k as f64 });
            }
        }
        Ok(out)
    }
}

pub fn feature_extractor_by_name(name: &str) -> Result<Box<dyn FeatureExtractor3D>> {
    match name {
        "pooled_stats" => Ok(Box::new(PooledStats3D)),
        other => Err(Error::Config(format!("unknown 3D feature extractor `{other}`"))),
    }
}

/// Mean and (population) covariance of row features.
pub fn gaussian_fit(features: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Contract("cannot fit a Gaussian to an empty feature set".into()));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::Alignment("feature vectors have different lengths".into()));
    }
    let m = DMatrix::from_fn(n, d, |i, j| features[i][j]);
    let mu = DVector::from_fn(d, |j, _| m.column(j).mean());
    let centred = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mu[j]);
    let cov = centred.transpose() * &centred / n as f64;
    Ok((mu, cov))
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// `‖μ₁ − μ₂‖² + Tr(Σ₁ + Σ₂ − 2 (Σ₁Σ₂)^{1/2})` with `ε·I` loading.
///
/// The trace of the cross term is computed as `Σ √λ(S Σ₂ S)` with
/// `S = Σ₁^{1/2}`, which has the same spectrum as `Σ₁Σ₂` but is symmetric.
pub fn frechet_distance(mu1: &DVector<f64>, s1: &DMatrix<f64>, mu2: &DVector<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || s1.shape() != (d, d) || s2.shape() != (d, d) {
        return Err(Error::Alignment("Gaussian parameters have inconsistent dimensions".into()));
    }
    let eye = DMatrix::<f64>::identity(d, d) * COVARIANCE_EPS;
    let a = (s1 + &eye).symmetrize();
    let b = (s2 + &eye).symmetrize();
    let s = sym_sqrt(&a);
    let m = (&s * &b * &s).symmetrize();
    let eig = SymmetricEigen::new(m);
    let scale = a.trace().max(b.trace()).max(1.0);
    let mut cross = 0.0;
    for &v in eig.eigenvalues.iter() {
        if v < -1e-9 * scale {
            return Err(Error::Numeric(format!(
                "covariance product has negative eigenvalue {v:e} after regularisation (trace scale {scale:e})"
            )));
        }
        cross += v.max(0.0).sqrt();
    }
    let diff = mu1 - mu2;
    let value = diff.dot(&diff) + a.trace() + b.trace() - 2.0 * cross;
    // Rounding can push an exact zero slightly negative.
    Ok(value.max(0.0))
}

trait Symmetrize {
    fn symmetrize(self) -> Self;
}

impl Symmetrize for DMatrix<f64> {
    fn symmetrize(self) -> Self {
        (&self + self.transpose()) * 0.5
    }
}

/// Fréchet distance between feature Gaussians of two clip sets.
pub fn vfid(real: &[Video], generated: &[Video], fx: &dyn FeatureExtractor3D) -> Result<f64> {
    let fr: Vec<Vec<f64>> = real.iter().map(|v| fx.extract(v)).collect::<Result<_>>()?;
    let fg: Vec<Vec<f64>> = generated.iter().map(|v| fx.extract(v)).collect::<Result<_>>()?;
    let (mr, sr) = gaussian_fit(&fr)?;
    let (mg, sg) = gaussian_fit(&fg)?;
    frechet_distance(&mr, &sr, &mg, &sg)
}
