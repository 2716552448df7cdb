//! The pixel field shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `H×W×C` real-valued image, stored channel-planar (`c`, `y`, `x`).
///
/// Values are nominally in `[0, 1]` but intermediate states of the chain are
/// allowed to leave that range; only emission clamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(height >= 1 && width >= 1, "image must be at least 1x1");
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            height,
            width,
            channels,
            values: vec![value; height * width * channels],
        }
    }

    /// Builds an image from `f(y, x, c)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::zeros(height, width, channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    img.values[(c * height + y) * width + x] = f(y, x, c);
                }
            }
        }
        img
    }

    /// Wraps a channel-planar buffer, validating shape and finiteness.
    pub fn from_planar(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if values.len() != height * width * channels {
            return Err(Error::ShapeMismatch {
                expected: vec![channels, height, width],
                found: vec![values.len()],
            });
        }
        let img = Self {
            height,
            width,
            channels,
            values,
        };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            let plane = self.height * self.width;
            return Err(Error::InvalidInput(format!(
                "non-finite value {} at (y={}, x={}, c={})",
                self.values[i],
                (i % plane) / self.width,
                i % self.width,
                i / plane
            )));
        }
        Ok(())
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

    /// `(height, width, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Number of scalar dimensions, `H·W·C`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.shape() == other.shape()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.values[(c * self.height + y) * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.values[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mean(&self, c: usize) -> f64 {
        let p = self.plane(c);
        p.iter().sum::<f64>() / p.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    /// `self + scale·other`
    pub fn add_scaled(&self, other: &ImageGrid, scale: f64) -> ImageGrid {
        assert!(self.same_shape(other), "shape mismatch in add_scaled");
        let mut out = self.clone();
        for (o, b) in out.values.iter_mut().zip(&other.values) {
            *o += scale * b;
        }
        out
    }

    pub fn sub(&self, other: &ImageGrid) -> ImageGrid {
        self.add_scaled(other, -1.0)
    }

    pub fn scale(&self, s: f64) -> ImageGrid {
        self.map(|v| v * s)
    }

    pub fn clamped(&self) -> ImageGrid {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn squared_distance(&self, other: &ImageGrid) -> f64 {
        assert!(self.same_shape(other), "shape mismatch in squared_distance");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &ImageGrid) -> f64 {
        assert!(self.same_shape(other), "shape mismatch in max_abs_diff");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Per-pixel mean of squared differences.
    pub fn mse(&self, other: &ImageGrid) -> f64 {
        self.squared_distance(other) / self.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_channel_planar() {
        let img = ImageGrid::from_fn(2, 3, 3, |y, x, c| (100 * c + 10 * y + x) as f64);
        assert_eq!(img.get(1, 2, 2), 212.0);
        assert_eq!(img.plane(1)[4], 111.0);
    }

    #[test]
    fn rejects_non_finite() {
        let err = ImageGrid::from_planar(1, 2, 1, vec![0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn rejects_bad_channel_count() {
        assert!(ImageGrid::from_planar(1, 1, 2, vec![0.0, 0.0]).is_err());
    }
}
