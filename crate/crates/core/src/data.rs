//! Image classification datasets: a synthetic Gaussian-blob generator and a
//! loader for the fixed-record binary format (one label byte followed by
//! `channels * height * width` pixel bytes, channel-major).

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[N, C, H, W]`.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if images.shape().len() != 4 || images.shape()[0] != labels.len() {
            return Err(Error::Dataset(format!(
                "images shape {:?} inconsistent with {} labels",
                images.shape(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label { label, classes });
        }
        Ok(Self {
            images,
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

    /// `(channels, height, width)`.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    pub fn subset(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let images = self.images.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (images, labels)
    }

    /// Uniformly samples `size` distinct examples (all of them when the set
    /// is smaller).
    pub fn sample_batch<R: Rng>(&self, size: usize, rng: &mut R) -> (Tensor, Vec<usize>) {
        let n = size.min(self.len());
        let mut idx = sample(rng, self.len(), n).into_vec();
        idx.sort_unstable();
        self.subset(&idx)
    }

    pub fn load_binary(path: &Path, format: &BinaryFormat) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", path.display())))?;
        Self::from_binary(&bytes, format)
    }

    pub fn from_binary(bytes: &[u8], format: &BinaryFormat) -> Result<Self> {
        let pixels = format.channels * format.height * format.width;
        let record = 1 + pixels;
        if pixels == 0 || bytes.is_empty() || bytes.len() % record != 0 {
            return Err(Error::Dataset(format!(
                "{} bytes is not a whole number of {record}-byte records",
                bytes.len()
            )));
        }
        let n = bytes.len() / record;
        let mut labels = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * pixels);
        for rec in bytes.chunks_exact(record) {
            labels.push(rec[0] as usize);
            data.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
        }
        let images = Tensor::new(vec![n, format.channels, format.height, format.width], data)?;
        Self::new(images, labels, format.classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFormat {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
}

/// Gaussian blobs rendered as small images. Each class owns a blob centre
/// and a colour; samples jitter the centre and add pixel noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub train_samples: usize,
    pub test_samples: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    /// Blob radius in pixels.
    pub blob_sigma: f64,
    /// Standard deviation of the per-sample centre displacement.
    pub jitter: f64,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            train_samples: 600,
            test_samples: 300,
            channels: 3,
            height: 8,
            width: 8,
            classes: 2,
            blob_sigma: 1.5,
            jitter: 1.0,
            noise: 0.5,
        }
    }
}

struct Prototype {
    centre: (f64, f64),
    colour: Vec<f64>,
}

impl SyntheticSpec {
    fn prototypes(&self) -> Vec<Prototype> {
        let (cy, cx) = ((self.height as f64 - 1.0) / 2.0, (self.width as f64 - 1.0) / 2.0);
        let radius = 0.3 * self.height.min(self.width) as f64;
        (0..self.classes)
            .map(|k| {
                let angle = std::f64::consts::TAU * k as f64 / self.classes as f64 + 0.25 * std::f64::consts::PI;
                let centre = (cy + radius * angle.sin(), cx + radius * angle.cos());
                let colour = (0..self.channels)
                    .map(|c| if (c + k) % self.channels == 0 { 1.0 } else { 0.4 })
                    .collect();
                Prototype { centre, colour }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Dataset(
                "synthetic data needs >= 2 classes and non-empty images".into(),
            ));
        }
        if self.train_samples == 0 || self.test_samples == 0 {
            return Err(Error::EmptyDataset);
        }
        if !(self.blob_sigma > 0.0 && self.jitter >= 0.0 && self.noise >= 0.0) {
            return Err(Error::Dataset("blob parameters must be non-negative".into()));
        }
        Ok(())
    }

    /// Generates `(train, test)` with labels balanced round-robin.
    pub fn generate(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        let protos = self.prototypes();
        let train = self.render(&protos, self.train_samples, &mut rng_for(seed, stream::DATA))?;
        let test = self.render(&protos, self.test_samples, &mut rng_for(seed, stream::TEST_DATA))?;
        Ok((train, test))
    }

    fn render<R: Rng>(&self, protos: &[Prototype], n: usize, rng: &mut R) -> Result<Dataset> {
        let (c, h, w) = (self.channels, self.height, self.width);
        let jitter = Normal::new(0.0, self.jitter.max(1e-12)).expect("positive std");
        let noise = Normal::new(0.0, self.noise.max(1e-12)).expect("positive std");
        let mut data = Vec::with_capacity(n * c * h * w);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % self.classes;
            let p = &protos[k];
            let (py, px) = (p.centre.0 + jitter.sample(rng), p.centre.1 + jitter.sample(rng));
            let amp = rng.gen_range(0.8..1.2);
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let d2 = (y as f64 - py).powi(2) + (x as f64 - px).powi(2);
                        let blob = amp * p.colour[ch] * (-d2 / (2.0 * self.blob_sigma.powi(2))).exp();
                        data.push(blob + noise.sample(rng));
                    }
                }
            }
            labels.push(k);
        }
        Dataset::new(Tensor::new(vec![n, c, h, w], data)?, labels, self.classes)
    }
}
