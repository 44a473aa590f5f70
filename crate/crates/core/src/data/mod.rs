//! Datasets, splits and deterministic batch iteration.

mod cifar;
mod idx;
mod synth;

pub use cifar::{load_cifar_bin, CifarVariant};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IdxImages, IdxLabels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synth::{synth_teacher_dataset, TeacherSpec};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Shape;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("{path}: bad magic number 0x{found:08x} at offset 0 (expected 0x{expected:08x})")]
    BadMagic { path: String, expected: u32, found: u32 },
    #[error("{path}: truncated at offset {offset}: needed {needed} more bytes, {available} available")]
    Truncated {
        path: String,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{path}: {trailing} trailing bytes after offset {offset}")]
    TrailingBytes { path: String, offset: usize, trailing: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at index {index} is outside [0, {classes})")]
    LabelOutOfRange { index: usize, label: usize, classes: usize },
    #[error("unknown split `{0}`")]
    UnknownSplit(String),
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Labeled images as loaded from disk, before split assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub shape: Shape,
    /// `count * shape.size()` reals in `[0, 1]`.
    pub pixels: Vec<f64>,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Keeps the first `n` items.
    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            self.labels.truncate(n);
            self.pixels.truncate(n * self.shape.size());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Eval,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Eval => "eval",
            Split::Validation => "validation",
        })
    }
}

impl FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "train" => Ok(Split::Train),
            "eval" | "test" => Ok(Split::Eval),
            "validation" | "val" => Ok(Split::Validation),
            other => Err(DataError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
    pub validation: Option<Vec<usize>>,
}

/// Immutable image dataset with disjoint named splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: Shape,
    images: Vec<f64>,
    labels: Vec<usize>,
    classes: usize,
    splits: Splits,
}

impl Dataset {
    pub fn new(shape: Shape, images: Vec<f64>, labels: Vec<usize>, classes: usize, splits: Splits) -> Result<Self, DataError> {
        if classes < 2 {
            return Err(DataError::Config(format!("need at least 2 classes, got {classes}")));
        }
        if shape.size() == 0 {
            return Err(DataError::Config("image shape has zero size".into()));
        }
        if images.len() != labels.len() * shape.size() {
            return Err(DataError::CountMismatch {
                images: images.len() / shape.size(),
                labels: labels.len(),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(DataError::LabelOutOfRange { index, label, classes });
        }
        let mut seen = vec![false; labels.len()];
        let all = splits
            .train
            .iter()
            .chain(&splits.eval)
            .chain(splits.validation.iter().flatten());
        for &i in all {
            if i >= labels.len() {
                return Err(DataError::Config(format!("split index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(DataError::Config(format!("index {i} appears in more than one split")));
            }
        }
        Ok(Dataset {
            shape,
            images,
            labels,
            classes,
            splits,
        })
    }

    /// Combines a training set and an evaluation set into one dataset.
    pub fn from_parts(train: ImageSet, eval: ImageSet, classes: usize) -> Result<Self, DataError> {
        if train.shape != eval.shape {
            return Err(DataError::Config(format!(
                "train shape {} differs from eval shape {}",
                train.shape, eval.shape
            )));
        }
        let n_train = train.len();
        let n_eval = eval.len();
        let mut images = train.pixels;
        images.extend(eval.pixels);
        let mut labels = train.labels;
        labels.extend(eval.labels);
        let splits = Splits {
            train: (0..n_train).collect(),
            eval: (n_train..n_train + n_eval).collect(),
            validation: None,
        };
        Dataset::new(train.shape, images, labels, classes, splits)
    }

    /// Loads MNIST from the four official IDX files in `dir`, keeping at most
    /// `train_limit` training and `eval_limit` test images.
    pub fn mnist(dir: &Path, train_limit: Option<usize>, eval_limit: Option<usize>) -> Result<Self, DataError> {
        let mut train = load_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?;
        let mut eval = load_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?;
        if let Some(n) = train_limit {
            train.truncate(n);
        }
        if let Some(n) = eval_limit {
            eval.truncate(n);
        }
        Dataset::from_parts(train, eval, 10)
    }

    /// Moves the last `count` training items into a validation split.
    pub fn with_validation(mut self, count: usize) -> Result<Self, DataError> {
        if count == 0 || count >= self.splits.train.len() {
            return Err(DataError::Config(format!(
                "validation size {count} must be in 1..{}",
                self.splits.train.len()
            )));
        }
        let keep = self.splits.train.len() - count;
        let validation = self.splits.train.split_off(keep);
        self.splits.validation = Some(validation);
        Ok(self)
    }

    /// Standardizes all pixels with the mean and standard deviation of the training split.
    pub fn standardized(mut self) -> Self {
        let size = self.shape.size();
        let n = (self.splits.train.len() * size) as f64;
        if n == 0.0 {
            return self;
        }
        let pixels = |i: usize| &self.images[i * size..(i + 1) * size];
        let mean = self.splits.train.iter().flat_map(|&i| pixels(i)).sum::<f64>() / n;
        let var = self
            .splits
            .train
            .iter()
            .flat_map(|&i| pixels(i))
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / n;
        let std = var.sqrt().max(1e-12);
        for x in &mut self.images {
            *x = (*x - mean) / std;
        }
        self
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, index: usize) -> &[f64] {
        let size = self.shape.size();
        &self.images[index * size..(index + 1) * size]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn split(&self, split: Split) -> Result<&[usize], DataError> {
        match split {
            Split::Train => Ok(&self.splits.train),
            Split::Eval => Ok(&self.splits.eval),
            Split::Validation => self
                .splits
                .validation
                .as_deref()
                .ok_or_else(|| DataError::UnknownSplit("validation".into())),
        }
    }

    /// Copies the images of `indices` into a contiguous batch buffer.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let size = self.shape.size();
        let mut xs = Vec::with_capacity(indices.len() * size);
        let mut ys = Vec::with_capacity(indices.len());
        for &i in indices {
            xs.extend_from_slice(self.image(i));
            ys.push(self.labels[i]);
        }
        (xs, ys)
    }
}

/// Shuffles `split` with a stream keyed by `epoch_seed` and cuts it into
/// batches of `batch_size`; the final partial batch is kept.
pub fn batches(dataset: &Dataset, split: Split, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>, DataError> {
    if batch_size == 0 {
        return Err(DataError::Config("batch size must be >= 1".into()));
    }
    let mut order = dataset.split(split)?.to_vec();
    order.shuffle(&mut rng::stream(epoch_seed, &[rng::tag::SHUFFLE]));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let shape = Shape::flat(2);
        let images = (0..n * 2).map(|i| (i % 7) as f64 / 7.0).collect();
        let labels = (0..n).map(|i| i % 3).collect();
        let splits = Splits {
            train: (0..n - 2).collect(),
            eval: (n - 2..n).collect(),
            validation: None,
        };
        Dataset::new(shape, images, labels, 3, splits).unwrap()
    }

    #[test]
    fn batch_sizes_include_partial_tail() {
        let d = toy(12);
        let b = batches(&d, Split::Train, 3, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        assert!(batches(&d, Split::Train, 0, 0).is_err());
    }

    #[test]
    fn batches_are_deterministic_permutations() {
        let d = toy(50);
        let a = batches(&d, Split::Train, 7, 11).unwrap();
        assert_eq!(a, batches(&d, Split::Train, 7, 11).unwrap());
        assert_ne!(a, batches(&d, Split::Train, 7, 12).unwrap());
        let mut flat: Vec<usize> = a.into_iter().flatten().collect();
        flat.sort_unstable();
        assert_eq!(flat, d.split(Split::Train).unwrap());
    }

    #[test]
    fn unknown_split() {
        let d = toy(10);
        assert!(matches!(d.split(Split::Validation), Err(DataError::UnknownSplit(_))));
        assert!(matches!("holdout".parse::<Split>(), Err(DataError::UnknownSplit(_))));
        assert_eq!("test".parse::<Split>().unwrap(), Split::Eval);
    }

    #[test]
    fn validation_split_is_disjoint() {
        let d = toy(20).with_validation(4).unwrap();
        let s = d.splits();
        assert_eq!(s.train.len(), 14);
        assert_eq!(s.validation.as_ref().unwrap().len(), 4);
        assert!(s.validation.as_ref().unwrap().iter().all(|i| !s.train.contains(i) && !s.eval.contains(i)));
        assert!(toy(20).with_validation(0).is_err());
    }

    #[test]
    fn rejects_overlapping_splits_and_bad_labels() {
        let shape = Shape::flat(1);
        let overlapping = Splits {
            train: vec![0, 1],
            eval: vec![1],
            validation: None,
        };
        assert!(Dataset::new(shape, vec![0.0; 2], vec![0, 1], 2, overlapping).is_err());
        let bad_label = Dataset::new(shape, vec![0.0; 2], vec![0, 5], 2, Splits::default());
        assert!(matches!(bad_label, Err(DataError::LabelOutOfRange { index: 1, .. })));
        assert!(Dataset::new(shape, vec![0.0; 2], vec![0, 0], 1, Splits::default()).is_err());
    }

    #[test]
    fn standardization_uses_train_statistics() {
        let d = toy(30).standardized();
        let size = d.shape().size();
        let train: Vec<f64> = d.splits().train.iter().flat_map(|&i| d.image(i).to_vec()).collect();
        let n = train.len() as f64;
        let mean = train.iter().sum::<f64>() / n;
        let var = train.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        assert_eq!(size, 2);
    }
}
