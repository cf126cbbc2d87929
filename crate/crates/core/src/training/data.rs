use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::conditioning::{GarmentImage, PoseVideo};
use crate::io::{load_image, load_labels, load_tensor4, load_video};
use crate::latent_codec::Video;
use crate::{Error, Result};

pub const DATASET_MANIFEST: &str = "manifest.json";

fn person_labels() -> Vec<u8> {
    vec![1, 2]
}

fn garment_labels() -> Vec<u8> {
    vec![2]
}

/// Per-frame label map and which labels make up each mask type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationRef {
    pub path: PathBuf,
    #[serde(default = "person_labels")]
    pub instance_labels: Vec<u8>,
    #[serde(default = "garment_labels")]
    pub garment_labels: Vec<u8>,
}

/// One training clip. Paths are relative to the dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub video: PathBuf,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub segmentation: Option<SegmentationRef>,
    #[serde(default)]
    pub garment: Option<PathBuf>,
    #[serde(default)]
    pub pose: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Free-form description of where prompts come from.
    #[serde(default)]
    pub prompt_source: String,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    /// Accepts a dataset directory or a manifest file path. Returns the
    /// manifest and the directory record paths are relative to.
    pub fn read(path: &Path) -> Result<(Self, PathBuf)> {
        let (file, dir) = if path.is_dir() {
            (path.join(DATASET_MANIFEST), path.to_path_buf())
        } else {
            (path.to_path_buf(), path.parent().map(Path::to_path_buf).unwrap_or_default())
        };
        let text = fs::read_to_string(&file)
            .map_err(|e| Error::Config(format!("cannot read dataset manifest {}: {e}", file.display())))?;
        Ok((serde_json::from_str(&text)?, dir))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(DATASET_MANIFEST), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// A record with every reference resolved and loaded.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub video: Video,
    pub prompt: String,
    pub labels: Option<Array3<u8>>,
    pub instance_labels: Vec<u8>,
    pub garment_labels: Vec<u8>,
    pub garment: Option<GarmentImage>,
    pub pose: Option<PoseVideo>,
}

fn load_record(record: &SampleRecord, dir: &Path) -> Result<Sample> {
    let video = load_video(&dir.join(&record.video))?;
    let (n, h, w) = (video.frames(), video.height(), video.width());
    let (labels, instance_labels, garment_labels) = match &record.segmentation {
        Some(seg) => {
            let labels = load_labels(&dir.join(&seg.path))?;
            if labels.dim() != (n, h, w) {
                return Err(Error::Alignment(format!(
                    "segmentation {:?} does not match video {n}x{h}x{w}",
                    labels.dim()
                )));
            }
            (Some(labels), seg.instance_labels.clone(), seg.garment_labels.clone())
        }
        None => (None, person_labels(), garment_labels()),
    };
    let garment = record
        .garment
        .as_ref()
        .map(|p| load_image(&dir.join(p)).and_then(GarmentImage::new))
        .transpose()?;
    let pose = record
        .pose
        .as_ref()
        .map(|p| {
            let pose = PoseVideo::new(load_tensor4(&dir.join(p))?)?;
            pose.check_aligned(n, h, w)?;
            Ok::<_, Error>(pose)
        })
        .transpose()?;
    Ok(Sample {
        id: record.id.clone(),
        video,
        prompt: record.prompt.clone(),
        labels,
        instance_labels,
        garment_labels,
        garment,
        pose,
    })
}

/// Loads every record; failures carry the record id.
pub fn load_dataset(path: &Path) -> Result<Vec<Sample>> {
    let (manifest, dir) = DatasetManifest::read(path)?;
    if manifest.records.is_empty() {
        return Err(Error::Config(format!("dataset {} has no records", path.display())));
    }
    manifest
        .records
        .iter()
        .map(|r| load_record(r, &dir).map_err(|e| e.for_record(&r.id)))
        .collect()
}
