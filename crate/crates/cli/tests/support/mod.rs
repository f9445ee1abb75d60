#![allow(dead_code)]

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

fn idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

/// Writes uncompressed 28×28 IDX files: each class lights a different
/// horizontal band, plus noise.
pub fn write_synthetic(dir: &Path, n_train: usize, n_test: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = |n: usize| {
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..10)).collect();
        let mut pixels = Vec::with_capacity(n * 784);
        for &l in &labels {
            for r in 0..28 {
                for _c in 0..28 {
                    let band = r / 3 == usize::from(l) % 9 || (l == 9 && r >= 27);
                    let base: u8 = if band { 200 } else { 20 };
                    pixels.push(base.saturating_add(rng.gen_range(0..40)));
                }
            }
        }
        (labels, pixels)
    };
    let (l, p) = gen(n_train);
    fs::write(dir.join(TRAIN_IMAGES), idx(0x803, &[n_train as u32, 28, 28], &p)).unwrap();
    fs::write(dir.join(TRAIN_LABELS), idx(0x801, &[n_train as u32], &l)).unwrap();
    let (l, p) = gen(n_test);
    fs::write(dir.join(TEST_IMAGES), idx(0x803, &[n_test as u32, 28, 28], &p)).unwrap();
    fs::write(dir.join(TEST_LABELS), idx(0x801, &[n_test as u32], &l)).unwrap();
}

/// Config text pointing at the synthetic files in `data` and writing to `out`.
pub fn synthetic_config(data: &Path, out: &Path) -> String {
    format!(
        "data_dir = {}\ntrain_images = {TRAIN_IMAGES}\ntrain_labels = {TRAIN_LABELS}\n\
         test_images = {TEST_IMAGES}\ntest_labels = {TEST_LABELS}\nout_dir = {}\n",
        data.display(),
        out.display()
    )
}
