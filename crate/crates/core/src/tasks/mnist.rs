//! IDX reader/writer and one-vs-all MNIST batches.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledBatch;
use crate::error::{Error, Result};
use crate::substrate::InputPattern;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Grayscale images with integer labels, as stored in an IDX pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MnistDataset {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl MnistDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn from_idx_bytes(images: &[u8], labels: &[u8]) -> Result<Self> {
        let (img_dims, pixels) = parse_idx(images, IDX_IMAGES_MAGIC, 3)?;
        let (lbl_dims, labels) = parse_idx(labels, IDX_LABELS_MAGIC, 1)?;
        if img_dims[0] != lbl_dims[0] {
            return Err(Error::Format(format!(
                "image file holds {} items but label file holds {}",
                img_dims[0], lbl_dims[0]
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::Format(format!("label {bad} outside 0..=9")));
        }
        Ok(Self {
            rows: img_dims[1],
            cols: img_dims[2],
            pixels: pixels.to_vec(),
            labels: labels.to_vec(),
        })
    }

    pub fn images_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        for d in [self.len(), self.rows, self.cols] {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn labels_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn write_idx(&self, images_path: &Path, labels_path: &Path) -> Result<()> {
        fs::write(images_path, self.images_idx_bytes())?;
        fs::write(labels_path, self.labels_idx_bytes())?;
        Ok(())
    }

    /// Splits off the last `count` items.
    pub fn split_tail(mut self, count: usize) -> Result<(Self, Self)> {
        if count >= self.len() {
            return Err(Error::Data(format!(
                "cannot hold out {count} of {} items",
                self.len()
            )));
        }
        let keep = self.len() - count;
        let n = self.rows * self.cols;
        let tail = Self {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels.split_off(keep * n),
            labels: self.labels.split_off(keep),
        };
        Ok((self, tail))
    }
}

fn parse_idx(bytes: &[u8], magic: u32, ndims: usize) -> Result<(Vec<usize>, &[u8])> {
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::Format("truncated IDX header".into()));
    }
    let found = u32::from_be_bytes(bytes[0..4].try_into().expect("4 bytes"));
    if found != magic {
        return Err(Error::Format(format!(
            "bad IDX magic {found:#010x}, expected {magic:#010x}"
        )));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| {
            let at = 4 + 4 * i;
            u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
        })
        .collect();
    let payload: usize = dims.iter().product();
    let body = &bytes[header..];
    if body.len() != payload {
        return Err(Error::Format(format!(
            "IDX payload holds {} bytes, header promises {payload}",
            body.len()
        )));
    }
    Ok((dims, body))
}

pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<MnistDataset> {
    let read = |p: &Path| {
        fs::read(p).map_err(|e| {
            Error::Data(format!(
                "cannot read MNIST file {}: {e}; download the four IDX files \
                 (train/t10k images and labels, uncompressed) and pass their paths",
                p.display()
            ))
        })
    };
    MnistDataset::from_idx_bytes(&read(images_path)?, &read(labels_path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Disjoint train and test partitions.
#[derive(Debug, Clone)]
pub struct MnistSplits {
    pub train: MnistDataset,
    pub test: MnistDataset,
}

impl MnistSplits {
    pub fn new(train: MnistDataset, test: MnistDataset) -> Self {
        Self { train, test }
    }

    /// Uses the last `test_count` items of a single file pair as the test set.
    pub fn hold_out(dataset: MnistDataset, test_count: usize) -> Result<Self> {
        let (train, test) = dataset.split_tail(test_count)?;
        Ok(Self { train, test })
    }

    pub fn get(&self, split: Split) -> &MnistDataset {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

/// Pixel on iff `intensity > threshold_fraction * 255`. The image is
/// centre-cropped or zero-padded to `side`.
pub fn binarize(
    image: &[u8],
    rows: usize,
    cols: usize,
    threshold_fraction: f64,
    side: usize,
) -> Result<InputPattern> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::Config(format!(
            "threshold fraction must be in (0, 1), got {threshold_fraction}"
        )));
    }
    crate::error::check_len("binarize", rows * cols, image.len())?;
    let cut = threshold_fraction * 255.0;
    let row_off = rows as isize - side as isize;
    let col_off = cols as isize - side as isize;
    let mut pixels = Vec::with_capacity(side * side);
    for r in 0..side as isize {
        for c in 0..side as isize {
            let sr = r + row_off.div_euclid(2);
            let sc = c + col_off.div_euclid(2);
            let on = sr >= 0
                && sc >= 0
                && (sr as usize) < rows
                && (sc as usize) < cols
                && f64::from(image[sr as usize * cols + sc as usize]) > cut;
            pixels.push(on);
        }
    }
    InputPattern::new(side, pixels)
}

/// Options shared by every MNIST batch of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MnistBatchOptions {
    pub levels: (f64, f64),
    pub threshold_fraction: f64,
    pub side: usize,
}

impl Default for MnistBatchOptions {
    fn default() -> Self {
        Self {
            levels: (0.0, 1.0),
            threshold_fraction: 0.5,
            side: 28,
        }
    }
}

/// `n / 2` images of `digit` and `n / 2` images of other digits, sampled
/// without replacement from the chosen partition and shuffled.
pub fn make_onevsall_batch(
    splits: &MnistSplits,
    digit: u8,
    n: usize,
    seed: u64,
    split: Split,
    opts: &MnistBatchOptions,
) -> Result<LabeledBatch> {
    if digit > 9 {
        return Err(Error::Config(format!("digit must be 0..=9, got {digit}")));
    }
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Usage(format!(
            "batch size must be even and positive, got {n}"
        )));
    }
    let data = splits.get(split);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| data.labels[i] == digit);
    if pos.len() < n / 2 || neg.len() < n / 2 {
        return Err(Error::Data(format!(
            "{split:?} partition has {} images of digit {digit} and {} others; {} of each needed",
            pos.len(),
            neg.len(),
            n / 2
        )));
    }
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut chosen: Vec<usize> = pos[..n / 2].iter().chain(&neg[..n / 2]).copied().collect();
    chosen.shuffle(&mut rng);

    let patterns = chosen
        .iter()
        .map(|&i| {
            binarize(
                data.image(i),
                data.rows,
                data.cols,
                opts.threshold_fraction,
                opts.side,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<i64> = chosen.iter().map(|&i| i64::from(data.labels[i])).collect();
    let targets = labels
        .iter()
        .map(|&l| {
            if l == i64::from(digit) {
                opts.levels.1
            } else {
                opts.levels.0
            }
        })
        .collect();
    LabeledBatch::new(patterns, targets, labels)
}
