//! Image files, paired datasets, the synthetic dark/normal generator and the
//! checkpoint container.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! "RFLL" | u32 version | u32 header_len | header (JSON, header_len bytes) | f32 params...
//! ```
//!
//! Parameters follow the header's tensor list in declaration order.

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, ImageReader, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::nn::{Architecture, PolicyValueNet, TensorSpec};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RFLL";
pub const CHECKPOINT_VERSION: u32 = 1;

fn to_image_error(e: image::ImageError) -> Error {
    match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::CorruptImage(other.to_string()),
    }
}

fn from_dynamic(img: DynamicImage) -> ImageTensor {
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    ImageTensor::new(h as usize, w as usize, data).expect("8-bit values are in range")
}

/// Round-half-up 8-bit quantization of a clamped value.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn to_rgb8(image: &ImageTensor) -> RgbImage {
    let bytes = image.data().iter().map(|&v| quantize(v)).collect();
    RgbImage::from_raw(image.width() as u32, image.height() as u32, bytes).expect("buffer matches dimensions")
}

/// Reads an 8-bit PNG or binary PPM/PGM; grayscale is replicated to RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)?.with_guessed_format()?;
    if reader.format().is_none() {
        return Err(Error::UnsupportedFormat(path.display().to_string()));
    }
    reader.decode().map(from_dynamic).map_err(to_image_error)
}

/// Decodes an in-memory PNG or PPM/PGM file.
pub fn decode_image(bytes: &[u8]) -> Result<ImageTensor> {
    let reader = ImageReader::new(Cursor::new(bytes)).with_guessed_format()?;
    if reader.format().is_none() {
        return Err(Error::UnsupportedFormat("unrecognized image bytes".into()));
    }
    reader.decode().map(from_dynamic).map_err(to_image_error)
}

pub fn encode_png(image: &ImageTensor) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    to_rgb8(image).write_to(&mut out, ImageFormat::Png).map_err(to_image_error)?;
    Ok(out.into_inner())
}

/// PNG of the image shrunk (area-averaged) so its longer edge is at most
/// `max_edge`; smaller images are encoded as they are.
pub fn encode_png_thumbnail(image: &ImageTensor, max_edge: usize) -> Result<Vec<u8>> {
    let (h, w) = image.dims();
    let rgb = to_rgb8(image);
    let rgb = if h.max(w) > max_edge && max_edge > 0 {
        let scale = max_edge as f64 / h.max(w) as f64;
        let nw = ((w as f64 * scale).round() as u32).max(1);
        let nh = ((h as f64 * scale).round() as u32).max(1);
        image::imageops::thumbnail(&rgb, nw, nh)
    } else {
        rgb
    };
    let mut out = Cursor::new(Vec::new());
    rgb.write_to(&mut out, ImageFormat::Png).map_err(to_image_error)?;
    Ok(out.into_inner())
}

/// Writes an 8-bit image; the format follows the extension (`.png`, `.ppm`).
pub fn save_image(image: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => ImageFormat::Png,
        Some("ppm") | Some("pnm") => ImageFormat::Pnm,
        other => return Err(Error::UnsupportedFormat(format!("extension {other:?}"))),
    };
    to_rgb8(image).save_with_format(path, format).map_err(to_image_error)
}

/// `low/` and `high/` files paired by identical name.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub root: PathBuf,
    pub pairs: Vec<(PathBuf, PathBuf)>,
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> =
        fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file()).collect();
    files.sort();
    Ok(files)
}

impl PairedDataset {
    /// Opens a dataset root. Files present on only one side are returned
    /// separately so callers can warn about them.
    pub fn open(root: impl AsRef<Path>) -> Result<(Self, Vec<PathBuf>)> {
        let root = root.as_ref().to_path_buf();
        let low = sorted_files(&root.join("low"))?;
        let high_dir = root.join("high");
        let high = sorted_files(&high_dir)?;
        let mut pairs = Vec::new();
        let mut unpaired = Vec::new();
        for l in low {
            let h = high_dir.join(l.file_name().expect("file has a name"));
            if h.is_file() {
                pairs.push((l, h));
            } else {
                unpaired.push(l);
            }
        }
        for h in high {
            if !root.join("low").join(h.file_name().expect("file has a name")).is_file() {
                unpaired.push(h);
            }
        }
        if pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok((Self { root, pairs }, unpaired))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn load_low(&self) -> Result<Vec<ImageTensor>> {
        self.pairs.iter().map(|(l, _)| load_image(l)).collect()
    }
}

/// Low-light image with its normal-light counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub low: ImageTensor,
    pub high: ImageTensor,
}

fn normal_light_image(rng: &mut ChaCha8Rng, size: usize) -> ImageTensor {
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.25..0.75));
    let tilt: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.3..0.3));
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (dy, dx) = angle.sin_cos();
    struct Shape {
        cy: f64,
        cx: f64,
        r: f64,
        disc: bool,
        color: [f64; 3],
    }
    let n_shapes = rng.random_range(2..=5);
    let shapes: Vec<Shape> = (0..n_shapes)
        .map(|_| Shape {
            cy: rng.random_range(0.0..1.0),
            cx: rng.random_range(0.0..1.0),
            r: rng.random_range(0.08..0.3),
            disc: rng.random_bool(0.5),
            color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        })
        .collect();
    let s = size as f64;
    let mut img = ImageTensor::from_fn(size, size, |r, c| {
        let (y, x) = (r as f64 / s, c as f64 / s);
        let t = (y - 0.5) * dy + (x - 0.5) * dx;
        let mut px: [f64; 3] = std::array::from_fn(|k| base[k] + tilt[k] * t);
        for sh in &shapes {
            let inside = if sh.disc {
                (y - sh.cy).powi(2) + (x - sh.cx).powi(2) < sh.r * sh.r
            } else {
                (y - sh.cy).abs() < sh.r && (x - sh.cx).abs() < sh.r * 0.7
            };
            if inside {
                px = sh.color;
            }
        }
        px
    });
    let target = rng.random_range(0.4..0.6);
    for _ in 0..8 {
        let mean = img.mean_luminance();
        if (mean - target).abs() < 1e-3 {
            break;
        }
        img = if mean > 1e-6 { img.map(|v| v * target / mean) } else { ImageTensor::constant(size, size, target) };
    }
    if !(0.4..=0.6).contains(&img.mean_luminance()) {
        // Heavy clipping: pull towards flat gray until the mean is in range.
        let gray = ImageTensor::constant(size, size, target);
        let mut mix = 0.0;
        while !(0.4..=0.6).contains(&img.mean_luminance()) && mix < 1.0 {
            mix += 0.1;
            img = ImageTensor::from_clamped(
                size,
                size,
                img.data().iter().zip(gray.data()).map(|(a, b)| a * (1.0 - mix) + b * mix).collect(),
            );
        }
    }
    img
}

/// Deterministic synthetic pairs: smooth gradients with flat shapes at
/// mean luminance in `[0.4, 0.6]`, and dark copies scaled by a factor drawn
/// from `[0.2, 0.4]` with Gaussian noise (σ = 0.01).
pub fn synth_dataset(seed: u64, count: usize, size: usize) -> Result<Vec<ImagePair>> {
    if count == 0 {
        return Err(Error::Config("synthetic dataset needs count >= 1".into()));
    }
    if size < 16 {
        return Err(Error::Config("synthetic dataset needs size >= 16".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.01).expect("valid sigma");
    Ok((0..count)
        .map(|_| {
            let high = normal_light_image(&mut rng, size);
            let scale = rng.random_range(0.2..0.4);
            let data = high.data().iter().map(|&v| v * scale + noise.sample(&mut rng)).collect();
            ImagePair { low: ImageTensor::from_clamped(size, size, data), high }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub round: usize,
    pub seed: u64,
    /// Echo of the configuration that produced the parameters.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    architecture: Architecture,
    tensors: Vec<TensorSpec>,
    metadata: CheckpointMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub metadata: CheckpointMeta,
    /// Flat parameters in tensor declaration order, stored at 32-bit precision.
    pub params: Vec<f32>,
}

impl Checkpoint {
    pub fn from_net(net: &PolicyValueNet, metadata: CheckpointMeta) -> Self {
        Self {
            architecture: net.architecture().clone(),
            metadata,
            params: net.params().iter().map(|&p| p as f32).collect(),
        }
    }

    pub fn to_net(&self) -> Result<PolicyValueNet> {
        PolicyValueNet::from_params(self.architecture.clone(), self.params.iter().map(|&p| p as f64).collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = CheckpointHeader {
            architecture: self.architecture.clone(),
            tensors: self.architecture.tensors(),
            metadata: self.metadata.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.params.len());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Truncated(format!("{} bytes is shorter than the fixed prefix", bytes.len())));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let header_end = 12 + header_len;
        if bytes.len() < header_end {
            return Err(Error::Truncated("header".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[12..header_end])?;
        header.architecture.validate()?;
        if header.tensors != header.architecture.tensors() {
            return Err(Error::ShapeMismatch("tensor list does not match the architecture".into()));
        }
        let count: usize = header.tensors.iter().map(TensorSpec::len).sum();
        let body = &bytes[header_end..];
        if body.len() < 4 * count {
            return Err(Error::Truncated(format!("expected {count} parameters, found {}", body.len() / 4)));
        }
        if body.len() > 4 * count {
            return Err(Error::ShapeMismatch(format!("{} trailing bytes after parameters", body.len() - 4 * count)));
        }
        let params = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        Ok(Self { architecture: header.architecture, metadata: header.metadata, params })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Checkpoint::from_bytes(&fs::read(path)?)
}
