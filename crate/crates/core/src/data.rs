//! Datasets: IDX image/label files, synthetic Gaussian blobs, and
//! deterministic shuffled mini-batching.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, gaussian_vector};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_MEAN: f64 = 0.1307;
pub const MNIST_STD: f64 = 0.3081;

/// Default cap on the fixed curvature probe set.
pub const DEFAULT_PROBE_SET_SIZE: usize = 2048;

/// A labelled design matrix (`N x features`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
    classes: usize,
}

/// Inputs and labels of a mini-batch or probe set.
pub type Batch = Dataset;

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::shape(format!(
                "inputs must be N x features, got {:?}",
                inputs.shape()
            )));
        }
        if inputs.shape()[0] != labels.len() {
            return Err(Error::shape(format!(
                "{} input rows but {} labels",
                inputs.shape()[0],
                labels.len()
            )));
        }
        if classes < 2 {
            return Err(Error::config(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::config(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Dataset {
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let f = self.features();
        &self.inputs.data()[i * f..(i + 1) * f]
    }

    /// Per-class sample counts `n_c`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let f = self.features();
        let mut data = Vec::with_capacity(indices.len() * f);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Dataset {
            inputs: Tensor::matrix(indices.len(), f, data).expect("subset shape"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Fixed curvature probe set: `min(N, max)` samples drawn once without
    /// replacement, kept in ascending index order.
    pub fn probe_set(&self, max: usize, seed: u64) -> Dataset {
        if max >= self.len() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::seeded(seed));
        idx.truncate(max);
        idx.sort_unstable();
        self.subset(&idx)
    }

    pub fn standardizer(&self) -> Standardizer {
        let (n, f) = self.inputs.dims2();
        let mut mean = vec![0.0; f];
        let mut var = vec![0.0; f];
        for i in 0..n {
            for (m, x) in mean.iter_mut().zip(self.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for i in 0..n {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(self.row(i)) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn standardize_with(&mut self, st: &Standardizer) {
        let f = self.features();
        for row in self.inputs.data_mut().chunks_exact_mut(f) {
            for ((x, m), s) in row.iter_mut().zip(&st.mean).zip(&st.std) {
                *x = (*x - m) / s;
            }
        }
    }

    /// CSV with header `f0,...,f{d-1},label`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        let f = self.features();
        let header: Vec<String> = (0..f).map(|j| format!("f{j}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",label\n");
        for i in 0..self.len() {
            for x in self.row(i) {
                out.push_str(&format!("{x},"));
            }
            out.push_str(&format!("{}\n", self.labels[i]));
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Per-feature affine normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

fn read_u32_be(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(format!("{what}: truncated header")))
}

/// Parsed IDX image file: `count` images of `rows x cols` unsigned bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32_be(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!(
            "images: bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(bytes, 4, "images")? as usize;
    let rows = read_u32_be(bytes, 8, "images")? as usize;
    let cols = read_u32_be(bytes, 12, "images")? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::format(format!(
            "images: truncated, need {need} pixel bytes, found {}",
            body.len()
        )));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body[..need].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32_be(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!(
            "labels: bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::format(format!(
            "labels: truncated, need {count} label bytes, found {}",
            body.len()
        )));
    }
    Ok(body[..count].to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an IDX image/label pair. Pixels are scaled to `[0, 1]` and
/// standardized with the conventional MNIST constants.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    classes: usize,
) -> Result<Dataset> {
    let images = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    idx_to_dataset(&images, &labels, classes)
}

pub fn idx_to_dataset(images: &IdxImages, labels: &[u8], classes: usize) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::format(format!(
            "image count {} does not match label count {}",
            images.count,
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y as usize >= classes) {
        return Err(Error::config(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let f = images.rows * images.cols;
    let data = images
        .pixels
        .iter()
        .map(|&p| (p as f64 / 255.0 - MNIST_MEAN) / MNIST_STD)
        .collect();
    Dataset::new(
        Tensor::matrix(images.count, f, data)?,
        labels.iter().map(|&y| y as usize).collect(),
        classes,
    )
}

// ---------------------------------------------------------------------------
// Gaussian blobs
// ---------------------------------------------------------------------------

/// Parameters of a synthetic blob classification set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
}

/// Class directions `u_c`: the first `C` coordinate axes when `C <= dim`,
/// otherwise fixed pseudo-random unit vectors (independent of the sample seed).
fn blob_directions(classes: usize, dim: usize) -> Vec<Vec<f64>> {
    if classes <= dim {
        return (0..classes)
            .map(|c| {
                let mut u = vec![0.0; dim];
                u[c] = 1.0;
                u
            })
            .collect();
    }
    let mut rng = rng::seeded(0xB10B_D1CE);
    (0..classes)
        .map(|_| {
            let u = gaussian_vector(&mut rng, dim);
            let n = crate::tensor::norm(&u);
            u.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

/// Raw (unstandardized) blobs, sample-major, class-balanced.
fn sample_blobs(spec: &BlobSpec, seed: u64) -> Result<Dataset> {
    if spec.classes < 2 {
        return Err(Error::config("blobs need at least 2 classes"));
    }
    if spec.per_class == 0 || spec.dim == 0 {
        return Err(Error::config("blobs need n >= 1 and dim >= 1"));
    }
    let dirs = blob_directions(spec.classes, spec.dim);
    let mut rng = rng::seeded(seed);
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..spec.per_class {
        for (c, u) in dirs.iter().enumerate() {
            let noise = gaussian_vector(&mut rng, spec.dim);
            data.extend(u.iter().zip(noise).map(|(ui, e)| spec.separation * ui + e));
            labels.push(c);
        }
    }
    Dataset::new(Tensor::matrix(n, spec.dim, data)?, labels, spec.classes)
}

/// Blobs standardized to per-feature mean 0 / stdev 1.
pub fn make_blobs(spec: &BlobSpec, seed: u64) -> Result<Dataset> {
    let mut ds = sample_blobs(spec, seed)?;
    let st = ds.standardizer();
    ds.standardize_with(&st);
    Ok(ds)
}

/// Train/test blobs sharing class centers; the test split is standardized
/// with the training statistics.
pub fn make_blobs_split(
    spec: &BlobSpec,
    test_per_class: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let mut train = sample_blobs(spec, seed)?;
    let test_spec = BlobSpec {
        per_class: test_per_class,
        ..spec.clone()
    };
    let mut test = sample_blobs(&test_spec, rng::derive_seed(seed, 0x7E57))?;
    let st = train.standardizer();
    train.standardize_with(&st);
    test.standardize_with(&st);
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    pub epoch: u64,
}

/// Shuffled partition of `[0, n)` for one epoch; the final short batch is kept.
pub fn batch_indices(n: usize, plan: &BatchPlan) -> Result<Vec<Vec<usize>>> {
    if plan.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(rng::derive_seed(plan.seed, plan.epoch)));
    Ok(idx.chunks(plan.batch_size).map(|c| c.to_vec()).collect())
}

pub fn batches(dataset: &Dataset, plan: &BatchPlan) -> Result<Vec<Batch>> {
    Ok(batch_indices(dataset.len(), plan)?
        .iter()
        .map(|idx| dataset.subset(idx))
        .collect())
}

/// Writes a small IDX pair; used by tests and the CLI's fixture tooling.
pub fn write_idx_pair(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    images: &IdxImages,
    labels: &[u8],
) -> Result<()> {
    fs::File::create(images_path)?.write_all(&encode_idx_images(images))?;
    fs::File::create(labels_path)?.write_all(&encode_idx_labels(labels))?;
    Ok(())
}
