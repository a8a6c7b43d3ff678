//! Datasets: IDX image/label files, synthetic Gaussian blobs and stratified splits.

mod blobs;
mod idx;
mod split;

pub use blobs::{make_blobs, BlobSpec};
pub use idx::{
    encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, IDX1_MAGIC,
    IDX3_MAGIC,
};
pub use split::{split_dataset, SplitFractions};

use crate::matrix::Matrix;
use crate::MIN_CLASSES;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DataError {
    #[error("wrong IDX magic: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic { expected: u32, found: u32 },
    #[error(
        "truncated or oversized IDX payload: header implies {expected} bytes, file has {actual}"
    )]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("label {label} at index {index} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("at least {MIN_CLASSES} classes are required, got {0}")]
    TooFewClasses(usize),
    #[error("invalid blob spec: {0}")]
    InvalidSpec(String),
    #[error("split fractions must be positive and sum to 1, got ({train}, {val}, {test})")]
    BadFractions { train: f64, val: f64, test: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("image/label count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("pixel {index} = {value} cannot be stored as an 8-bit intensity")]
    NotAnIntensity { index: usize, value: f64 },
    #[error("IDX dimension {0} does not fit in 32 bits")]
    DimensionOverflow(usize),
}

/// A stack of equally sized images (or feature vectors, with `height == 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// `count * height * width` values, image-major then row-major.
    pub pixels: Vec<f64>,
}

impl ImageSet {
    /// Wraps feature vectors as a `count x 1 x dim` set. Values are not clamped.
    pub fn from_features(count: usize, dim: usize, features: Vec<f64>) -> Self {
        debug_assert_eq!(features.len(), count * dim);
        Self {
            count,
            height: 1,
            width: dim,
            pixels: features,
        }
    }

    pub fn sample_len(&self) -> usize {
        self.height * self.width
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.sample_len();
        &self.pixels[i * d..(i + 1) * d]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub num_classes: usize,
    pub labels: Vec<usize>,
}

impl LabelSet {
    pub fn new(num_classes: usize, labels: Vec<usize>) -> Result<Self, DataError> {
        if num_classes < MIN_CLASSES {
            return Err(DataError::TooFewClasses(num_classes));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(DataError::LabelOutOfRange {
                index,
                label,
                num_classes,
            });
        }
        Ok(Self {
            num_classes,
            labels,
        })
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: ImageSet,
    pub labels: LabelSet,
    pub class_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(images: ImageSet, labels: LabelSet) -> Result<Self, DataError> {
        if images.count != labels.count() {
            return Err(DataError::CountMismatch {
                images: images.count,
                labels: labels.count(),
            });
        }
        Ok(Self {
            images,
            labels,
            class_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.images.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.images.sample_len()
    }

    pub fn features(&self, i: usize) -> &[f64] {
        self.images.sample(i)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels.labels[i]
    }

    /// All samples as a `len x feature_dim` matrix.
    pub fn feature_matrix(&self) -> Matrix {
        Matrix::from_vec(self.len(), self.feature_dim(), self.images.pixels.clone())
            .expect("ImageSet invariant: pixels.len() == count * height * width")
    }

    /// New dataset holding the given samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.feature_dim();
        let mut pixels = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(self.features(i));
            labels.push(self.label(i));
        }
        Dataset {
            images: ImageSet {
                count: indices.len(),
                height: self.images.height,
                width: self.images.width,
                pixels,
            },
            labels: LabelSet {
                num_classes: self.num_classes(),
                labels,
            },
            class_names: self.class_names.clone(),
        }
    }

    /// Per-class sample indices in ascending order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes()];
        for (i, &l) in self.labels.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }
}
