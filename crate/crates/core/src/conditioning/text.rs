use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::seed::fnv1a;
use crate::Result;

/// Prompt → `[M, text_dim]` token embeddings.
pub trait TextEmbedder: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn max_tokens(&self) -> usize;

    /// Deterministic for a fixed prompt. An empty prompt yields zero tokens.
    fn embed(&self, prompt: &str) -> Result<Array2<f64>>;
}

/// Hermetic stand-in for a pretrained text encoder: each lower-cased word is
/// hashed to a fixed Gaussian vector, and a small sinusoidal position code is
/// added so word order matters.
#[derive(Debug, Clone)]
pub struct HashTextEmbedder {
    dim: usize,
    max_tokens: usize,
}

impl HashTextEmbedder {
    pub fn new(dim: usize, max_tokens: usize) -> Self {
        Self { dim, max_tokens }
    }
}

impl TextEmbedder for HashTextEmbedder {
    fn name(&self) -> &str {
        "hash"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    fn embed(&self, prompt: &str) -> Result<Array2<f64>> {
        let words: Vec<String> = prompt
            .split_whitespace()
            .map(|w| w.to_lowercase())
            .take(self.max_tokens)
            .collect();
        let mut out = Array2::zeros((words.len(), self.dim));
        for (i, word) in words.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.as_bytes()));
            for j in 0..self.dim {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let pos = 0.1 * ((i as f64 + 1.0) * (j as f64 + 1.0) / self.dim as f64).sin();
                out[[i, j]] = noise + pos;
            }
        }
        Ok(out)
    }
}
