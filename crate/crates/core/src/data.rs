//! Dataset loading (IDX and CIFAR-10 binary batches) and Gaussian pixel noise.
//!
//! Loaders read local files only. Pixels are scaled from `u8` to `[0, 1]`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    MnistDigit,
    MnistFashion,
    Cifar10,
}

impl DatasetId {
    pub const ALL: [DatasetId; 3] = [Self::MnistDigit, Self::MnistFashion, Self::Cifar10];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MnistDigit => "mnist_digit",
            Self::MnistFashion => "mnist_fashion",
            Self::Cifar10 => "cifar10",
        }
    }

    pub fn image_shape(self) -> [usize; 3] {
        match self {
            Self::MnistDigit | Self::MnistFashion => [1, 28, 28],
            Self::Cifar10 => [3, 32, 32],
        }
    }

    pub fn class_count(self) -> usize {
        10
    }

    /// Loads the `train` or `test` split from `root/<dataset id>/`.
    ///
    /// MNIST-family datasets expect the canonical uncompressed file names
    /// (`train-images-idx3-ubyte`, `t10k-labels-idx1-ubyte`, ...). CIFAR-10
    /// expects `data_batch_1.bin` .. `data_batch_5.bin` and `test_batch.bin`;
    /// missing training batches are skipped as long as one is present.
    pub fn load_split(self, root: &Path, split: Split) -> Result<LabeledDataset> {
        let dir = root.join(self.as_str());
        let mut ds = match self {
            Self::MnistDigit | Self::MnistFashion => {
                let prefix = match split {
                    Split::Train => "train",
                    Split::Test => "t10k",
                };
                load_idx(
                    dir.join(format!("{prefix}-images-idx3-ubyte")),
                    dir.join(format!("{prefix}-labels-idx1-ubyte")),
                )?
            }
            Self::Cifar10 => {
                let paths: Vec<PathBuf> = match split {
                    Split::Train => (1..=5)
                        .map(|i| dir.join(format!("data_batch_{i}.bin")))
                        .filter(|p| p.exists())
                        .collect(),
                    Split::Test => vec![dir.join("test_batch.bin")],
                };
                if paths.is_empty() {
                    return Err(Error::io(
                        dir.join("data_batch_1.bin"),
                        std::io::Error::from(std::io::ErrorKind::NotFound),
                    ));
                }
                load_cifar_binary(&paths)?
            }
        };
        ds.meta = DatasetMeta {
            dataset: Some(self),
            split: Some(split),
        };
        Ok(ds)
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown dataset '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetMeta {
    pub dataset: Option<DatasetId>,
    pub split: Option<Split>,
}

/// Images `N x C x H x W` in `[0, 1]` with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn new(images: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::Shape(format!(
                "images must be N x C x H x W, got {:?}",
                images.shape()
            )));
        }
        if images.batch_len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.batch_len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("pixels must lie in [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            meta: DatasetMeta::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Keeps the first `n` samples (or all of them when `n` is larger).
    pub fn truncate(mut self, n: usize) -> Self {
        if n < self.len() {
            let idx: Vec<usize> = (0..n).collect();
            self.images = self.images.select_rows(&idx);
            self.labels.truncate(n);
        }
        self
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            meta: self.meta.clone(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(path, "truncated header"))
}

/// Reads an IDX image file and its matching label file.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let img = read_file(ip)?;
    let lab = read_file(lp)?;

    let magic = be_u32(&img, 0, ip)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(ip, format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(&img, 4, ip)? as usize;
    let rows = be_u32(&img, 8, ip)? as usize;
    let cols = be_u32(&img, 12, ip)? as usize;
    let pixels = &img[16..];
    if pixels.len() != n * rows * cols {
        return Err(Error::format(
            ip,
            format!("expected {} pixel bytes, found {}", n * rows * cols, pixels.len()),
        ));
    }

    let magic = be_u32(&lab, 0, lp)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(lp, format!("bad label magic {magic:#010x}")));
    }
    let nl = be_u32(&lab, 4, lp)? as usize;
    let labels = &lab[8..];
    if labels.len() != nl {
        return Err(Error::format(lp, format!("expected {nl} labels, found {}", labels.len())));
    }
    if nl != n {
        return Err(Error::format(lp, format!("{n} images but {nl} labels")));
    }

    let data = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let images = Tensor::from_parts(vec![n, 1, rows, cols], data);
    LabeledDataset::new(images, labels.iter().map(|&b| b as usize).collect(), 10)
}

/// Reads one or more CIFAR-10 binary batches (3073-byte records, label first,
/// then the 32x32 red, green and blue planes).
pub fn load_cifar_binary<P: AsRef<Path>>(batch_paths: &[P]) -> Result<LabeledDataset> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for p in batch_paths {
        let path = p.as_ref();
        let bytes = read_file(path)?;
        if bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::format(
                path,
                format!("length {} is not a multiple of {CIFAR_RECORD}", bytes.len()),
            ));
        }
        for record in bytes.chunks_exact(CIFAR_RECORD) {
            let label = record[0] as usize;
            if label >= 10 {
                return Err(Error::LabelOutOfRange { label, classes: 10 });
            }
            labels.push(label);
            data.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    let images = Tensor::from_parts(vec![labels.len(), 3, 32, 32], data);
    LabeledDataset::new(images, labels, 10)
}

/// Adds i.i.d. `Normal(0, sigma = scale)` noise to every pixel and clips to `[0, 1]`.
pub fn gaussian_noisify<R: Rng + ?Sized>(x: &Tensor, scale: f64, rng: &mut R) -> Result<Tensor> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("noise scale {scale} must be >= 0")));
    }
    if scale == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, scale).expect("valid sigma");
    let data = x
        .data()
        .iter()
        .map(|&v| (v + normal.sample(rng)).clamp(0.0, 1.0))
        .collect();
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}
