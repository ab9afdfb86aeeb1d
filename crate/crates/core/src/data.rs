//! IDX ingestion, cropping, binarization and dataset statistics.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format::hash_bytes;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Side of the square center crop.
pub const CROP: usize = 20;
/// Pixels strictly above this value become 1.
pub const BINARY_THRESHOLD: u8 = 127;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";

/// Grayscale images as stored in IDX files.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitTag {
    Full,
    Train,
    Test,
}

/// Binarized, flattened images with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<Vec<bool>>,
    pub labels: Vec<usize>,
    pub split: SplitTag,
}

impl Dataset {
    pub fn new(images: Vec<Vec<bool>>, labels: Vec<usize>, split: SplitTag) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        Ok(Dataset {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.first().map_or(0, Vec::len)
    }

    /// Samples with the given label.
    pub fn class_subset(&self, class: usize) -> Vec<&[bool]> {
        self.images
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == class)
            .map(|(img, _)| img.as_slice())
            .collect()
    }

    /// First `n` samples.
    pub fn truncate(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.len() * (self.dim() + 1));
        for (img, &label) in self.images.iter().zip(&self.labels) {
            bytes.push(label as u8);
            bytes.extend(img.iter().map(|&b| u8::from(b)));
        }
        hash_bytes(&bytes)
    }

    /// One row per sample, pixels then label.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let header: Vec<String> = (0..self.dim())
            .map(|i| format!("p{i}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        let write = |out: &mut std::io::BufWriter<std::fs::File>, line: String| {
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))
        };
        write(&mut out, header.join(","))?;
        for (img, label) in self.images.iter().zip(&self.labels) {
            let mut row: Vec<String> = img.iter().map(|&b| u8::from(b).to_string()).collect();
            row.push(label.to_string());
            write(&mut out, row.join(","))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

fn idx_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Idx {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    if bytes.len() < 16 {
        return Err(idx_err(path, "truncated header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(idx_err(path, format!("bad image magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() < count * size {
        return Err(idx_err(
            path,
            format!("truncated: {} bytes for {count} images of {size}", body.len()),
        ));
    }
    let images = body[..count * size]
        .chunks_exact(size.max(1))
        .take(count)
        .map(<[u8]>::to_vec)
        .collect();
    Ok((rows, cols, images))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    if bytes.len() < 8 {
        return Err(idx_err(path, "truncated header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(idx_err(path, format!("bad label magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4) as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(idx_err(path, "truncated label data"));
    }
    Ok(body[..count].to_vec())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset> {
    let image_bytes = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let label_bytes = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (rows, cols, images) = parse_idx_images(&image_bytes, images_path)?;
    let labels = parse_idx_labels(&label_bytes, labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(RawDataset {
        rows,
        cols,
        images,
        labels,
    })
}

/// Center-crops to 20x20, thresholds at `> 127` and flattens row-major.
pub fn preprocess(raw: &RawDataset) -> Result<Dataset> {
    if raw.rows < CROP || raw.cols < CROP {
        return Err(Error::Config(format!(
            "images are {}x{}, need at least {CROP}x{CROP}",
            raw.rows, raw.cols
        )));
    }
    let top = (raw.rows - CROP) / 2;
    let left = (raw.cols - CROP) / 2;
    let images = raw
        .images
        .iter()
        .map(|img| {
            let mut out = Vec::with_capacity(CROP * CROP);
            for r in top..top + CROP {
                let row = &img[r * raw.cols + left..r * raw.cols + left + CROP];
                out.extend(row.iter().map(|&v| v > BINARY_THRESHOLD));
            }
            out
        })
        .collect();
    let labels = raw.labels.iter().map(|&l| l as usize).collect();
    Dataset::new(images, labels, SplitTag::Full)
}

pub fn mnist_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS))
}

/// Loads and preprocesses the MNIST training files from a directory.
pub fn load_mnist_dir(dir: &Path) -> Result<Dataset> {
    let (images, labels) = mnist_paths(dir);
    preprocess(&load_idx(&images, &labels)?)
}

/// Deterministic shuffled split; the first part has `floor(ratio * n)` samples.
pub fn split(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    if dataset.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (ratio * dataset.len() as f64).floor() as usize;
    let take = |ids: &[usize], split| Dataset {
        images: ids.iter().map(|&i| dataset.images[i].clone()).collect(),
        labels: ids.iter().map(|&i| dataset.labels[i]).collect(),
        split,
    };
    Ok((
        take(&order[..cut], SplitTag::Train),
        take(&order[cut..], SplitTag::Test),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatsScope {
    All,
    Class(usize),
    Uniform,
}

/// Per-pixel probability of a 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelStats {
    pub mean: Vec<f64>,
    pub scope: StatsScope,
}

pub fn pixel_stats(dataset: &Dataset, scope: StatsScope, dim: usize) -> Result<PixelStats> {
    let samples: Vec<&[bool]> = match scope {
        StatsScope::Uniform => {
            return Ok(PixelStats {
                mean: vec![0.5; dim],
                scope,
            })
        }
        StatsScope::All => dataset.images.iter().map(Vec::as_slice).collect(),
        StatsScope::Class(c) => dataset.class_subset(c),
    };
    if samples.is_empty() {
        return Err(Error::Empty(format!("no samples for {scope:?}")));
    }
    Ok(PixelStats {
        mean: bit_means(&samples, dim)?,
        scope,
    })
}

pub(crate) fn bit_means(samples: &[&[bool]], dim: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; dim];
    for s in samples {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: s.len(),
            });
        }
        for (c, &b) in counts.iter_mut().zip(s.iter()) {
            *c += usize::from(b);
        }
    }
    let n = samples.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}
