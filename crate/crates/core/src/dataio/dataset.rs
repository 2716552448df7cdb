use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::rng::{stream_rng, Stream};

/// Ordered, same-shaped images with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<ImageGrid>,
    labels: Option<Vec<u8>>,
    source: String,
}

impl Dataset {
    pub fn new(images: Vec<ImageGrid>, source: impl Into<String>) -> Result<Self> {
        if let Some(first) = images.first() {
            let shape = first.shape();
            for (i, img) in images.iter().enumerate() {
                if img.shape() != shape {
                    return Err(Error::MixedSizes(format!(
                        "item {i} is {:?}, item 0 is {:?}",
                        img.shape(),
                        shape
                    )));
                }
                if img.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidInput(format!("item {i} has values outside [0, 1]")));
                }
            }
        }
        Ok(Self {
            images,
            labels: None,
            source: source.into(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.images.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} images",
                labels.len(),
                self.images.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[ImageGrid] {
        &self.images
    }

    pub fn get(&self, i: usize) -> &ImageGrid {
        &self.images[i]
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// `(height, width, channels)` of every item, or `None` when empty.
    pub fn shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(ImageGrid::shape)
    }

    /// The first `n` items (all of them if `n` exceeds the length).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n].to_vec(),
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
            source: format!("{}[..{n}]", self.source),
        }
    }

    /// Items `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let end = end.min(self.len());
        let start = start.min(end);
        Dataset {
            images: self.images[start..end].to_vec(),
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
            source: format!("{}[{start}..{end}]", self.source),
        }
    }

    /// A permutation of `0..len` determined by `seed` alone.
    pub fn shuffled_indices(&self, seed: u64) -> Vec<usize> {
        shuffled_order(self.len(), seed, 0)
    }

    pub fn shuffled(&self, seed: u64) -> Dataset {
        let order = self.shuffled_indices(seed);
        Dataset {
            images: order.iter().map(|&i| self.images[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| order.iter().map(|&i| l[i]).collect()),
            source: format!("{} (shuffled, seed {seed})", self.source),
        }
    }
}

/// Permutation of `0..n` for one pass over the data.
pub(crate) fn shuffled_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Data, epoch));
    order
}
