//! On-disk clip formats.
//!
//! A clip is either a directory of zero-padded PNG frames
//! (`frame_00000.png`, ...) or a single raw tensor file with the `.vtns`
//! extension:
//!
//! | bytes      | field                                                      |
//! |------------|------------------------------------------------------------|
//! | 4          | magic `VTNS`                                               |
//! | 1          | version (1)                                                |
//! | 1          | dtype: 1 = f32, 2 = f64, 3 = u8                            |
//! | 1          | range tag: 0 = [-1,1], 1 = [0,1], 2 = binary, 3 = labels, 4 = raw |
//! | 1          | rank                                                       |
//! | 4 × rank   | dims, u32 little endian                                    |
//! | rest       | row-major data, little endian                              |
//!
//! Masks on disk are single-channel images with values {0, 255}; label maps
//! are single-channel indexed images.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use ndarray::{Array3, Array4};

use crate::latent_codec::{MaskVideo, Video};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"VTNS";
const VERSION: u8 = 1;
pub const RAW_EXTENSION: &str = "vtns";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
    U8,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
            DType::U8 => 3,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            3 => Ok(DType::U8),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeTag {
    SignedUnit,
    Unit,
    Binary,
    Labels,
    Raw,
}

impl RangeTag {
    fn code(self) -> u8 {
        match self {
            RangeTag::SignedUnit => 0,
            RangeTag::Unit => 1,
            RangeTag::Binary => 2,
            RangeTag::Labels => 3,
            RangeTag::Raw => 4,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(RangeTag::SignedUnit),
            1 => Ok(RangeTag::Unit),
            2 => Ok(RangeTag::Binary),
            3 => Ok(RangeTag::Labels),
            4 => Ok(RangeTag::Raw),
            other => Err(Error::Format(format!("unknown range tag {other}"))),
        }
    }
}

/// Decoded contents of a `.vtns` file; values are widened to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub dtype: DType,
    pub range: RangeTag,
    pub data: Vec<f64>,
}

pub fn write_raw(path: &Path, dims: &[usize], data: &[f64], dtype: DType, range: RangeTag) -> Result<()> {
    if dims.iter().product::<usize>() != data.len() {
        return Err(Error::Alignment(format!("dims {dims:?} do not match {} values", data.len())));
    }
    let mut bytes = Vec::with_capacity(8 + 4 * dims.len() + data.len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&[VERSION, dtype.code(), range.code(), dims.len() as u8]);
    for &d in dims {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        match dtype {
            DType::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
            DType::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
            DType::U8 => bytes.push(v.round().clamp(0.0, 255.0) as u8),
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<RawTensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{} is not a raw tensor file", path.display())));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported raw tensor version {}", bytes[4])));
    }
    let dtype = DType::from_code(bytes[5])?;
    let range = RangeTag::from_code(bytes[6])?;
    let rank = bytes[7] as usize;
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Format("truncated raw tensor header".into()));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| {
            let o = 8 + 4 * i;
            u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    let count: usize = dims.iter().product();
    let width = match dtype {
        DType::F32 => 4,
        DType::F64 => 8,
        DType::U8 => 1,
    };
    let body = &bytes[header..];
    if body.len() != count * width {
        return Err(Error::Format(format!(
            "raw tensor body has {} bytes, expected {}",
            body.len(),
            count * width
        )));
    }
    let data = match dtype {
        DType::F32 => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        DType::F64 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
        DType::U8 => body.iter().map(|&b| b as f64).collect(),
    };
    Ok(RawTensor {
        dims,
        dtype,
        range,
        data,
    })
}

fn is_raw(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some(RAW_EXTENSION)
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:05}.png"))
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().and_then(|e| e.to_str()) == Some("png")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("frame_"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Format(format!("no frame_*.png files in {}", dir.display())));
    }
    Ok(files)
}

fn to_u8_signed(v: f64) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 0.5) * 255.0).round() as u8
}

fn from_u8_signed(b: u8) -> f64 {
    b as f64 / 255.0 * 2.0 - 1.0
}

fn array4(dims: &[usize], data: Vec<f64>, what: &str) -> Result<Array4<f64>> {
    if dims.len() != 4 {
        return Err(Error::Format(format!("{what} must be rank 4, got {dims:?}")));
    }
    Array4::from_shape_vec((dims[0], dims[1], dims[2], dims[3]), data).map_err(|e| Error::Format(e.to_string()))
}

/// Writes a video as raw tensor (`.vtns` path) or PNG frame directory.
pub fn save_video(path: &Path, video: &Video) -> Result<()> {
    if is_raw(path) {
        let dims = video.data().shape().to_vec();
        let data: Vec<f64> = video.data().iter().copied().collect();
        return write_raw(path, &dims, &data, DType::F64, RangeTag::SignedUnit);
    }
    fs::create_dir_all(path)?;
    for i in 0..video.frames() {
        let frame = video.frame(i);
        let img = RgbImage::from_fn(video.width() as u32, video.height() as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            Rgb([
                to_u8_signed(frame[[y, x, 0]]),
                to_u8_signed(frame[[y, x, 1]]),
                to_u8_signed(frame[[y, x, 2]]),
            ])
        });
        img.save(frame_path(path, i))?;
    }
    Ok(())
}

pub fn load_video(path: &Path) -> Result<Video> {
    if is_raw(path) {
        let raw = read_raw(path)?;
        return Video::new(array4(&raw.dims, raw.data, "video")?);
    }
    let files = frame_files(path)?;
    let first = image::open(&files[0])?.to_rgb8();
    let (w, h) = first.dimensions();
    let mut data = Array4::zeros((files.len(), h as usize, w as usize, 3));
    for (i, file) in files.iter().enumerate() {
        let img = if i == 0 { first.clone() } else { image::open(file)?.to_rgb8() };
        if img.dimensions() != (w, h) {
            return Err(Error::Alignment(format!("{} has a different size", file.display())));
        }
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                data[[i, y as usize, x as usize, c]] = from_u8_signed(px[c]);
            }
        }
    }
    Video::new(data)
}

pub fn save_mask(path: &Path, mask: &MaskVideo) -> Result<()> {
    if is_raw(path) {
        let dims = mask.data().shape().to_vec();
        let data: Vec<f64> = mask.data().iter().copied().collect();
        return write_raw(path, &dims, &data, DType::U8, RangeTag::Binary);
    }
    fs::create_dir_all(path)?;
    for i in 0..mask.frames() {
        let img = GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
            Luma([if mask.data()[[i, y as usize, x as usize, 0]] != 0.0 { 255 } else { 0 }])
        });
        img.save(frame_path(path, i))?;
    }
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<MaskVideo> {
    if is_raw(path) {
        let raw = read_raw(path)?;
        let data = raw.data.into_iter().map(|v| if v != 0.0 { 1.0 } else { 0.0 }).collect();
        return MaskVideo::new(array4(&raw.dims, data, "mask")?);
    }
    let frames = load_gray_frames(path)?;
    let (n, h, w) = frames.dim();
    let mut data = Array4::zeros((n, h, w, 1));
    for ((t, y, x), &v) in frames.indexed_iter() {
        data[[t, y, x, 0]] = match v {
            0 => 0.0,
            255 => 1.0,
            other => {
                return Err(Error::Format(format!(
                    "mask pixel value {other} in {}; expected 0 or 255",
                    path.display()
                )))
            }
        };
    }
    MaskVideo::new(data)
}

/// Per-frame label map, `[frames, height, width]`.
pub fn save_labels(path: &Path, labels: &Array3<u8>) -> Result<()> {
    if is_raw(path) {
        let dims = labels.shape().to_vec();
        let data: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
        return write_raw(path, &dims, &data, DType::U8, RangeTag::Labels);
    }
    fs::create_dir_all(path)?;
    let (n, h, w) = labels.dim();
    for i in 0..n {
        let img = GrayImage::from_fn(w as u32, h as u32, |x, y| Luma([labels[[i, y as usize, x as usize]]]));
        img.save(frame_path(path, i))?;
    }
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Array3<u8>> {
    if is_raw(path) {
        let raw = read_raw(path)?;
        if raw.dims.len() != 3 {
            return Err(Error::Format(format!("label map must be rank 3, got {:?}", raw.dims)));
        }
        let data = raw.data.into_iter().map(|v| v as u8).collect();
        return Array3::from_shape_vec((raw.dims[0], raw.dims[1], raw.dims[2]), data)
            .map_err(|e| Error::Format(e.to_string()));
    }
    load_gray_frames(path)
}

fn load_gray_frames(dir: &Path) -> Result<Array3<u8>> {
    let files = frame_files(dir)?;
    let mut frames = Vec::with_capacity(files.len());
    for file in &files {
        frames.push(image::open(file)?.to_luma8());
    }
    let (w, h) = frames[0].dimensions();
    let mut data = Array3::zeros((frames.len(), h as usize, w as usize));
    for (i, img) in frames.iter().enumerate() {
        if img.dimensions() != (w, h) {
            return Err(Error::Alignment(format!("{} has a different size", files[i].display())));
        }
        for (x, y, px) in img.enumerate_pixels() {
            data[[i, y as usize, x as usize]] = px[0];
        }
    }
    Ok(data)
}

/// Arbitrary rank-4 float tensor (pose maps, latents) as `.vtns`.
pub fn save_tensor4(path: &Path, data: &Array4<f64>, range: RangeTag) -> Result<()> {
    let dims = data.shape().to_vec();
    let values: Vec<f64> = data.iter().copied().collect();
    write_raw(path, &dims, &values, DType::F64, range)
}

pub fn load_tensor4(path: &Path) -> Result<Array4<f64>> {
    let raw = read_raw(path)?;
    array4(&raw.dims, raw.data, "tensor")
}

/// Single RGB image `[H, W, 3]` in `[-1, 1]`: PNG or `.vtns`.
pub fn save_image(path: &Path, image: &Array3<f64>) -> Result<()> {
    if is_raw(path) {
        let dims = image.shape().to_vec();
        let data: Vec<f64> = image.iter().copied().collect();
        return write_raw(path, &dims, &data, DType::F64, RangeTag::SignedUnit);
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let (h, w, _) = image.dim();
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([
            to_u8_signed(image[[y, x, 0]]),
            to_u8_signed(image[[y, x, 1]]),
            to_u8_signed(image[[y, x, 2]]),
        ])
    });
    img.save(path)?;
    Ok(())
}

pub fn load_image(path: &Path) -> Result<Array3<f64>> {
    if is_raw(path) {
        let raw = read_raw(path)?;
        if raw.dims.len() != 3 {
            return Err(Error::Format(format!("image must be rank 3, got {:?}", raw.dims)));
        }
        return Array3::from_shape_vec((raw.dims[0], raw.dims[1], raw.dims[2]), raw.data)
            .map_err(|e| Error::Format(e.to_string()));
    }
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
        from_u8_signed(img.get_pixel(x as u32, y as u32)[c])
    }))
}
