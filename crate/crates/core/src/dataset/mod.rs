//! Image datasets, their on-disk formats, preprocessing, and the
//! structural modification operators.

mod container;
mod idx;
mod image_dir;
mod ops;
mod preprocess;
mod synth;

pub use container::{parse_container, read_container, write_container};
pub use idx::{load_idx, load_idx_files, read_idx_images, read_idx_labels, IdxImages};
pub use image_dir::load_image_dir;
pub use ops::{
    imbalance_linear, imbalance_normal, linear_imbalance_sizes, normal_imbalance_factors,
    reduce_class_count, reduce_class_size, to_grayscale, ImbalanceMode, NORMAL_FACTOR_BOUNDS,
};
pub use preprocess::{preprocess, resize_image, PreprocessOptions, MODEL_INPUT};
pub use synth::{synth_generate, SynthSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed {kind} data at byte {offset}: {message}")]
    Format {
        kind: &'static str,
        offset: usize,
        message: String,
    },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("class '{class}' has {available} training samples, fewer than {requested}")]
    ClassTooSmall {
        class: String,
        available: usize,
        requested: usize,
    },
    #[error("image decoding failed for {path}: {message}")]
    Decode { path: String, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Test,
}

/// Images of one split stored back to back, each `H·W·C` bytes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub images: Vec<u8>,
    pub labels: Vec<u32>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn select(&self, indices: &[usize], image_len: usize) -> Split {
        let mut images = Vec::with_capacity(indices.len() * image_len);
        for &i in indices {
            images.extend_from_slice(&self.images[i * image_len..(i + 1) * image_len]);
        }
        Split {
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Per-class sample counts of one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub counts: Vec<usize>,
}

impl ClassHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Labeled 8-bit image collection with a train and a test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageDataset {
    height: usize,
    width: usize,
    channels: usize,
    train: Split,
    test: Split,
    class_names: Vec<String>,
}

impl ImageDataset {
    pub fn new(
        [height, width, channels]: [usize; 3],
        train: Split,
        test: Split,
        class_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(DatasetError::Input(format!(
                "image dimensions must be non-zero, got {height}x{width}x{channels}"
            )));
        }
        if class_names.is_empty() {
            return Err(DatasetError::Input("dataset has no classes".into()));
        }
        let image_len = height * width * channels;
        for (name, split) in [("train", &train), ("test", &test)] {
            if split.images.len() != split.labels.len() * image_len {
                return Err(DatasetError::Input(format!(
                    "{name} split holds {} bytes for {} images of {image_len} bytes",
                    split.images.len(),
                    split.labels.len()
                )));
            }
            if let Some(&bad) = split.labels.iter().find(|&&l| l as usize >= class_names.len()) {
                return Err(DatasetError::Input(format!(
                    "{name} label {bad} out of range for {} classes",
                    class_names.len()
                )));
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            train,
            test,
            class_names,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn train(&self) -> &Split {
        &self.train
    }

    pub fn test(&self) -> &Split {
        &self.test
    }

    pub fn split(&self, kind: SplitKind) -> &Split {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Test => &self.test,
        }
    }

    pub fn image(&self, kind: SplitKind, index: usize) -> &[u8] {
        let len = self.image_len();
        &self.split(kind).images[index * len..(index + 1) * len]
    }

    pub fn histogram(&self, kind: SplitKind) -> ClassHistogram {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.split(kind).labels {
            counts[l as usize] += 1;
        }
        ClassHistogram { counts }
    }

    /// Sample indices of every class, in dataset order.
    pub fn indices_by_class(&self, kind: SplitKind) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (i, &l) in self.split(kind).labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    /// Copy of the dataset whose train split holds only `indices`.
    pub(crate) fn with_train_subset(&self, indices: &[usize]) -> ImageDataset {
        ImageDataset {
            train: self.train.select(indices, self.image_len()),
            ..self.clone()
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Balanced dataset with `per_class` train and 2 test images per class;
    /// each image is filled with its class id.
    pub fn balanced(classes: usize, per_class: usize, dims: [usize; 3]) -> ImageDataset {
        let len: usize = dims.iter().product();
        let mut train = Split::default();
        let mut test = Split::default();
        for c in 0..classes {
            for _ in 0..per_class {
                train.images.extend(std::iter::repeat_n(c as u8, len));
                train.labels.push(c as u32);
            }
            for _ in 0..2 {
                test.images.extend(std::iter::repeat_n(c as u8, len));
                test.labels.push(c as u32);
            }
        }
        let names = (0..classes).map(|c| c.to_string()).collect();
        ImageDataset::new(dims, train, test, names).unwrap()
    }
}
