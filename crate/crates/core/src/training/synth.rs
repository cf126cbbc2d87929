//! Moving-shape clips with known segmentation, for desk-scale training.

use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{DatasetManifest, SampleRecord, SegmentationRef};
use crate::conditioning::{synthetic_pose, PoseVideo};
use crate::io::{save_image, save_labels, save_tensor4, save_video, RangeTag};
use crate::latent_codec::{MaskVideo, Video};
use crate::Result;

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_PERSON: u8 = 1;
pub const LABEL_GARMENT: u8 = 2;

const COLORS: [(&str, [f64; 3]); 6] = [
    ("red", [0.85, -0.6, -0.6]),
    ("blue", [-0.6, -0.3, 0.85]),
    ("green", [-0.5, 0.7, -0.4]),
    ("yellow", [0.9, 0.8, -0.7]),
    ("purple", [0.4, -0.7, 0.6]),
    ("white", [0.9, 0.9, 0.9]),
];

const PATTERNS: [&str; 3] = ["plain", "striped", "checked"];

const SKIN: [f64; 3] = [0.55, 0.1, -0.2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub clips: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub garment_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            clips: 16,
            frames: 8,
            height: 32,
            width: 24,
            garment_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthClip {
    pub video: Video,
    pub labels: Array3<u8>,
    /// Flat garment texture `[g, g, 3]`.
    pub garment: Array3<f64>,
    pub pose: PoseVideo,
    pub prompt: String,
}

fn texture(pattern: &str, color: [f64; 3], y: usize, x: usize, c: usize) -> f64 {
    let dark = match pattern {
        "striped" => (y / 2) % 2 == 1,
        "checked" => ((y / 3) + (x / 3)) % 2 == 1,
        _ => false,
    };
    if dark {
        color[c] * 0.3 - 0.4
    } else {
        color[c]
    }
}

/// Deterministic clip `index` of a synthetic dataset: a gradient background,
/// an elliptical person sweeping sideways, and a textured garment on its torso.
pub fn synth_clip(cfg: &SynthConfig, index: usize) -> Result<SynthClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let (n, h, w) = (cfg.frames, cfg.height, cfg.width);
    let (cname, color) = COLORS[rng.random_range(0..COLORS.len())];
    let pattern = PATTERNS[rng.random_range(0..PATTERNS.len())];
    let bg = [rng.random_range(-0.8..-0.2), rng.random_range(-0.8..0.0), rng.random_range(-0.5..0.3)];
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let speed: f64 = rng.random_range(0.25..0.5);
    let (hf, wf) = (h as f64, w as f64);
    let (ry, rx) = (0.4 * hf, 0.24 * wf);
    let cy = 0.5 * hf;
    let amp = 0.18 * wf;

    let mut labels = Array3::<u8>::zeros((n, h, w));
    let mut data = Array4::<f64>::zeros((n, h, w, 3));
    for t in 0..n {
        let cx = 0.5 * wf + amp * (phase + speed * t as f64).sin();
        let top = (cy - 0.12 * hf).round() as isize;
        let left = (cx - rx).round() as isize;
        for y in 0..h {
            for x in 0..w {
                let (yf, xf) = (y as f64 + 0.5, x as f64 + 0.5);
                let inside = ((yf - cy) / ry).powi(2) + ((xf - cx) / rx).powi(2) <= 1.0;
                let torso = yf >= cy - 0.12 * hf && yf <= cy + 0.25 * hf;
                let label = match (inside, torso) {
                    (true, true) => LABEL_GARMENT,
                    (true, false) => LABEL_PERSON,
                    _ => LABEL_BACKGROUND,
                };
                labels[[t, y, x]] = label;
                for c in 0..3 {
                    data[[t, y, x, c]] = match label {
                        LABEL_GARMENT => {
                            let gy = (y as isize - top).max(0) as usize;
                            let gx = (x as isize - left).max(0) as usize;
                            texture(pattern, color, gy, gx, c)
                        }
                        LABEL_PERSON => SKIN[c],
                        _ => bg[c] + 0.15 * ((y as f64) * 0.3 + c as f64).sin() * ((x as f64) * 0.2).cos(),
                    };
                }
            }
        }
    }
    let g = cfg.garment_size;
    let garment = Array3::from_shape_fn((g, g, 3), |(y, x, c)| texture(pattern, color, y, x, c));
    let silhouette = MaskVideo::from_fn(n, h, w, |t, y, x| labels[[t, y, x]] != LABEL_BACKGROUND);
    Ok(SynthClip {
        video: Video::new(data)?,
        pose: synthetic_pose(&silhouette),
        labels,
        garment,
        prompt: format!("a person wearing a {cname} {pattern} shirt"),
    })
}

/// Writes `clips` synthetic records plus `manifest.json` under `dir`.
pub fn write_dataset(dir: &Path, cfg: &SynthConfig) -> Result<DatasetManifest> {
    let mut records = Vec::with_capacity(cfg.clips);
    for i in 0..cfg.clips {
        let clip = synth_clip(cfg, i)?;
        let id = format!("clip_{i:04}");
        let rel = PathBuf::from(&id);
        let base = dir.join(&rel);
        save_video(&base.join("video"), &clip.video)?;
        save_labels(&base.join("labels.vtns"), &clip.labels)?;
        save_image(&base.join("garment.png"), &clip.garment)?;
        save_tensor4(&base.join("pose.vtns"), clip.pose.data(), RangeTag::SignedUnit)?;
        records.push(SampleRecord {
            id,
            video: rel.join("video"),
            prompt: clip.prompt,
            segmentation: Some(SegmentationRef {
                path: rel.join("labels.vtns"),
                instance_labels: vec![LABEL_PERSON, LABEL_GARMENT],
                garment_labels: vec![LABEL_GARMENT],
            }),
            garment: Some(rel.join("garment.png")),
            pose: Some(rel.join("pose.vtns")),
        });
    }
    let manifest = DatasetManifest {
        prompt_source: "templated synthetic garment descriptions".into(),
        records,
    };
    manifest.write(dir)?;
    Ok(manifest)
}
