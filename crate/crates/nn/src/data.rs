//! IDX image/label loading and deterministic train/validation batching.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activations::Activations;
use crate::error::{NnError, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Validation share of the training file: 10,000 of 60,000.
pub const DEFAULT_VAL_FRACTION: f64 = 1.0 / 6.0;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| NnError::io(path, e))?;
    let mut bytes = Vec::new();
    let gz = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    let res = if gz {
        GzDecoder::new(BufReader::new(file)).read_to_end(&mut bytes)
    } else {
        BufReader::new(file).read_to_end(&mut bytes)
    };
    res.map_err(|e| NnError::io(path, e))?;
    Ok(bytes)
}

/// Validates the magic number and returns the dimension sizes and payload.
fn parse_idx<'a>(bytes: &'a [u8], magic: u32, path: &Path) -> Result<(Vec<usize>, &'a [u8])> {
    if bytes.len() < 4 {
        return Err(NnError::format(path, "file too short for an IDX header"));
    }
    let found = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if found != magic {
        return Err(NnError::format(
            path,
            format!("bad magic 0x{found:08x}, expected 0x{magic:08x}"),
        ));
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(NnError::format(path, "truncated IDX header"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(NnError::format(
            path,
            format!("truncated payload: {} bytes for dims {dims:?}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(NnError::format(
            path,
            format!("{} trailing bytes after dims {dims:?}", payload.len() - expected),
        ));
    }
    Ok((dims, payload))
}

/// Decodes an IDX image file into `n` samples of `rows × cols × 1` with
/// pixels scaled by `1/255`. Files ending in `.gz` are decompressed.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Activations> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    decode_idx_images(&bytes, path)
}

pub fn decode_idx_images(bytes: &[u8], path: &Path) -> Result<Activations> {
    let (dims, payload) = parse_idx(bytes, IDX_IMAGES_MAGIC, path)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let mut out = Activations::zeros(n, [rows, cols, 1]);
    let len = rows * cols;
    for i in 0..n {
        let src = &payload[i * len..(i + 1) * len];
        let dst = out.sample_mut(i);
        // IDX is row-major; samples here are column-major
        for r in 0..rows {
            for c in 0..cols {
                dst[r + rows * c] = f64::from(src[r * cols + c]) / 255.0;
            }
        }
    }
    Ok(out)
}

/// Decodes an IDX label file.
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    decode_idx_labels(&bytes, path)
}

pub fn decode_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let (_, payload) = parse_idx(bytes, IDX_LABELS_MAGIC, path)?;
    Ok(payload.iter().map(|&b| usize::from(b)).collect())
}

/// Images with their labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Activations,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Activations, labels: Vec<usize>) -> Result<Self> {
        if images.n() != labels.len() {
            return Err(NnError::Shape(format!(
                "{} images but {} labels",
                images.n(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Loads an image file and a label file and checks that their counts agree.
pub fn load_dataset(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let imgs = load_idx_images(images.as_ref())?;
    let lbls = load_idx_labels(labels.as_ref())?;
    Dataset::new(imgs, lbls).map_err(|e| NnError::format(labels.as_ref(), e.to_string()))
}

/// A fixed train/validation partition of `0..n` with seeded per-epoch
/// batching of the training part.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitBatcher {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub batch_size: usize,
    pub seed: u64,
}

/// Shuffles `0..n` with `seed` and holds out `round(n · val_fraction)`
/// indices (at least one, at most `n − 1`) for validation.
pub fn split_and_batch(n: usize, val_fraction: f64, batch_size: usize, seed: u64) -> Result<SplitBatcher> {
    if n == 0 {
        return Err(NnError::EmptyDataset);
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(NnError::Config(format!("val_fraction must be in (0, 1), got {val_fraction}")));
    }
    if batch_size == 0 {
        return Err(NnError::Config("batch size must be positive".into()));
    }
    if n < 2 {
        return Err(NnError::Config("need at least two samples to split".into()));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = idx.split_off(n - n_val);
    Ok(SplitBatcher {
        train: idx,
        val,
        batch_size,
        seed,
    })
}

impl SplitBatcher {
    /// Keeps only the first `train` / `val` indices of each part.
    pub fn limit(mut self, train: Option<usize>, val: Option<usize>) -> Self {
        if let Some(t) = train {
            self.train.truncate(t);
        }
        if let Some(v) = val {
            self.val.truncate(v);
        }
        self
    }

    /// Mini-batches of training indices for `epoch`: a fresh seeded shuffle
    /// per epoch, the last short batch kept.
    pub fn epoch(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut order = self.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1 + epoch as u64);
        order.shuffle(&mut rng);
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.train.len().div_ceil(self.batch_size)
    }
}
