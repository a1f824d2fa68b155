//! Image datasets: IDX and CIFAR-10 binary ingestion, seeded subsets, and
//! crop/flip augmentation.

mod augment;
mod cifar;
mod idx;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub use augment::{augment, resize_bilinear, AugmentSpec};
pub use cifar::{cifar10_bytes, load_cifar10, parse_cifar10, write_cifar10, CIFAR_RECORD_BYTES};
pub use idx::{
    idx_image_bytes, idx_label_bytes, load_idx, parse_idx_images, parse_idx_labels, read_maybe_gz, write_idx,
    IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC,
};

/// Number of classes every supported dataset uses.
pub const CLASSES: usize = 10;

/// Immutable labelled image set; images are `count × C × H × W` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Tensor<f32>,
    labels: Vec<usize>,
    name: String,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if images.shape().len() != 4 {
            return Err(Error::Shape(format!("{name}: images must be count x C x H x W, got {:?}", images.shape())));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Length { expected: images.shape()[0], found: labels.len() });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= CLASSES) {
            return Err(Error::Label { label, classes: CLASSES, index });
        }
        if let Some(i) = images.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!("{name}: pixel {i} = {} outside [0, 1]", images.data()[i])));
        }
        Ok(Self { images, labels, name })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `[C, H, W]` of one image.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn image_len(&self) -> usize {
        self.image_shape().iter().product()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.images.data()[i * n..(i + 1) * n]
    }

    pub fn class_counts(&self) -> [usize; CLASSES] {
        let mut c = [0; CLASSES];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Rows `indices` as a batch of shape `[indices.len(), sample_shape...]`.
    /// The sample shape must hold exactly one image's worth of values.
    pub fn batch<T: Scalar>(&self, indices: &[usize], sample_shape: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let n = self.image_len();
        if sample_shape.iter().product::<usize>() != n {
            return Err(Error::Shape(format!(
                "{}: images of shape {:?} cannot feed inputs of shape {sample_shape:?}",
                self.name,
                self.image_shape()
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| T::from_f64_lossy(v as f64)));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(sample_shape);
        Ok((Tensor::new(shape, data)?, labels))
    }

    /// Copy with every image bilinearly resized to `h × w`.
    pub fn resized(&self, h: usize, w: usize) -> Result<Self> {
        let [c, ih, iw] = self.image_shape();
        if (ih, iw) == (h, w) {
            return Ok(self.clone());
        }
        let mut data = Vec::with_capacity(self.len() * c * h * w);
        for i in 0..self.len() {
            data.extend(resize_bilinear(self.image(i), c, ih, iw, h, w));
        }
        Self::new(Tensor::new(vec![self.len(), c, h, w], data)?, self.labels.clone(), self.name.clone())
    }

    /// Items at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let [c, h, w] = self.image_shape();
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Domain(format!("{}: index {i} out of {}", self.name, self.len())));
            }
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Self::new(Tensor::new(vec![indices.len(), c, h, w], data)?, labels, self.name.clone())
    }
}

/// Seeded sample of `n` items without replacement, plus its class counts.
/// With `n == len` this is a permutation of the whole set.
pub fn subset(dataset: &Dataset, n: usize, seed: u64) -> Result<(Dataset, [usize; CLASSES])> {
    if n > dataset.len() {
        return Err(Error::Domain(format!("subset of {n} requested from {} items", dataset.len())));
    }
    if n == 0 {
        return Err(Error::Domain("subset size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, dataset.len(), n).into_vec();
    let sub = dataset.select(&picks)?;
    let counts = sub.class_counts();
    Ok((sub, counts))
}

/// Gaussian class clusters around random prototypes, clipped to `[0, 1]`.
/// Labels cycle through the classes so every class is represented.
pub fn synthetic(count: usize, shape: [usize; 3], classes: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if classes == 0 || classes > CLASSES {
        return Err(Error::Domain(format!("classes must be in 1..={CLASSES}, got {classes}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = shape.iter().product();
    let protos: Vec<Vec<f64>> = (0..classes).map(|_| (0..len).map(|_| rng.random::<f64>()).collect()).collect();
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::Domain(e.to_string()))?;
    let mut data = Vec::with_capacity(count * len);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % classes;
        labels.push(label);
        data.extend(protos[label].iter().map(|&p| (p + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32));
    }
    Dataset::new(Tensor::new(vec![count, shape[0], shape[1], shape[2]], data)?, labels, "synthetic")
}
