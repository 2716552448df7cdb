//! Exact heat-equation solver on the pixel grid.
//!
//! The Laplacian with zero-flux (Neumann) boundaries is diagonalised by the
//! type-II cosine basis, so running the heat equation for time `t` reduces to
//! scaling each DCT coefficient by `exp(-λ t)`. Everything in here runs in
//! `f64`; the network side of the crate converts at its boundary.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Orthonormal DCT-II coefficients of an [`ImageGrid`], channel-planar with
/// `(m, n)` = (vertical, horizontal) frequency index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralImage {
    height: usize,
    width: usize,
    channels: usize,
    coefficients: Vec<f64>,
}

impl SpectralImage {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            coefficients: vec![0.0; height * width * channels],
        }
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

    /// Coefficient at vertical frequency `m`, horizontal frequency `n`.
    #[inline]
    pub fn get(&self, m: usize, n: usize, c: usize) -> f64 {
        self.coefficients[(c * self.height + m) * self.width + n]
    }

    #[inline]
    pub fn set(&mut self, m: usize, n: usize, c: usize, v: f64) {
        self.coefficients[(c * self.height + m) * self.width + n] = v;
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.coefficients[c * n..(c + 1) * n]
    }

    fn validate(&self) -> Result<()> {
        if self.coefficients.len() != self.height * self.width * self.channels {
            return Err(Error::ShapeMismatch {
                expected: vec![self.channels, self.height, self.width],
                found: vec![self.coefficients.len()],
            });
        }
        if self.coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite spectral coefficient".into()));
        }
        Ok(())
    }

    /// Applies `exp(-λ t)` to every coefficient.
    pub fn decayed(&self, grid: &FrequencyGrid, t: f64) -> Result<SpectralImage> {
        check_time(t)?;
        if grid.height != self.height || grid.width != self.width {
            return Err(Error::ShapeMismatch {
                expected: vec![self.height, self.width],
                found: vec![grid.height, grid.width],
            });
        }
        let mut out = self.clone();
        let plane = self.height * self.width;
        let factors: Vec<f64> = grid.lambdas.iter().map(|l| (-l * t).exp()).collect();
        for chunk in out.coefficients.chunks_mut(plane) {
            for (v, f) in chunk.iter_mut().zip(&factors) {
                *v *= f;
            }
        }
        Ok(out)
    }
}

/// Laplacian eigenvalues `λ_{n,m} = π²(n²/W² + m²/H²)` on an `H×W` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub height: usize,
    pub width: usize,
    /// Row-major over `(m, n)`.
    pub lambdas: Vec<f64>,
    /// `√λ / π`, the radial frequency used for PSD binning.
    pub freqs: Vec<f64>,
}

impl FrequencyGrid {
    pub fn lambda(&self, m: usize, n: usize) -> f64 {
        self.lambdas[m * self.width + n]
    }

    pub fn freq(&self, m: usize, n: usize) -> f64 {
        self.freqs[m * self.width + n]
    }

    pub fn max_freq(&self) -> f64 {
        self.freqs.iter().copied().fold(0.0, f64::max)
    }
}

pub fn frequency_grid(height: usize, width: usize) -> FrequencyGrid {
    assert!(height >= 1 && width >= 1);
    let (h, w) = (height as f64, width as f64);
    let mut lambdas = Vec::with_capacity(height * width);
    let mut freqs = Vec::with_capacity(height * width);
    for m in 0..height {
        for n in 0..width {
            let f2 = (n * n) as f64 / (w * w) + (m * m) as f64 / (h * h);
            lambdas.push(PI * PI * f2);
            freqs.push(f2.sqrt());
        }
    }
    FrequencyGrid {
        height,
        width,
        lambdas,
        freqs,
    }
}

/// Orthonormal DCT-II matrix of size `n`, row `k` = basis function `k`.
fn dct_matrix(n: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().expect("dct cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let nf = n as f64;
            let mut m = vec![0.0; n * n];
            for k in 0..n {
                let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
                for i in 0..n {
                    m[k * n + i] = scale * (PI * k as f64 * (i as f64 + 0.5) / nf).cos();
                }
            }
            Arc::new(m)
        })
        .clone()
}

/// Row-major `a (m×k) · b (k×n)` with optional transposes.
#[allow(clippy::too_many_arguments)]
fn matmul(a: &[f64], a_t: bool, b: &[f64], b_t: bool, m: usize, k: usize, n: usize, out: &mut [f64]) {
    // Row-major storage of the un-transposed operand fixes the strides.
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn transform_plane(plane: &[f64], height: usize, width: usize, forward: bool) -> Vec<f64> {
    let mh = dct_matrix(height);
    let mw = dct_matrix(width);
    let mut tmp = vec![0.0; height * width];
    let mut out = vec![0.0; height * width];
    if forward {
        // C = M_H · U · M_Wᵀ
        matmul(&mh, false, plane, false, height, height, width, &mut tmp);
        matmul(&tmp, false, &mw, true, height, width, width, &mut out);
    } else {
        // U = M_Hᵀ · C · M_W
        matmul(&mh, true, plane, false, height, height, width, &mut tmp);
        matmul(&tmp, false, &mw, false, height, width, width, &mut out);
    }
    out
}

/// Orthonormal 2-D DCT-II applied to each channel.
pub fn dct2(image: &ImageGrid) -> Result<SpectralImage> {
    image.validate()?;
    let (h, w, c) = image.shape();
    let mut coefficients = Vec::with_capacity(h * w * c);
    for ch in 0..c {
        coefficients.extend(transform_plane(image.plane(ch), h, w, true));
    }
    Ok(SpectralImage {
        height: h,
        width: w,
        channels: c,
        coefficients,
    })
}

/// Inverse of [`dct2`].
pub fn idct2(spec: &SpectralImage) -> Result<ImageGrid> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut values = Vec::with_capacity(spec.coefficients.len());
    for ch in 0..spec.channels {
        values.extend(transform_plane(spec.plane(ch), h, w, false));
    }
    ImageGrid::from_planar(h, w, spec.channels, values)
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!(
            "dissipation time must be finite and non-negative, got {t}"
        )));
    }
    Ok(())
}

/// Runs the heat equation for time `t`: `idct2(exp(-λ t) · dct2(image))`.
pub fn dissipate(image: &ImageGrid, t: f64) -> Result<ImageGrid> {
    check_time(t)?;
    let grid = frequency_grid(image.height(), image.width());
    idct2(&dct2(image)?.decayed(&grid, t)?)
}

/// Dissipates one image to several times, sharing the forward transform.
pub fn dissipate_many(image: &ImageGrid, times: &[f64]) -> Result<Vec<ImageGrid>> {
    for &t in times {
        check_time(t)?;
    }
    let grid = frequency_grid(image.height(), image.width());
    let spec = dct2(image)?;
    times.iter().map(|&t| idct2(&spec.decayed(&grid, t)?)).collect()
}

/// One explicit Euler step of the *reverse* heat equation,
/// `u - dt·(Δ₅ u)` with the 5-point stencil and replicate padding.
///
/// For analysis only; the learned sampler never calls this.
pub fn euler_sharpen_step(image: &ImageGrid, dt: f64) -> ImageGrid {
    let (h, w, c) = image.shape();
    let mut out = image.clone();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let centre = image.get(y, x, ch);
                let up = image.get(y.saturating_sub(1), x, ch);
                let down = image.get((y + 1).min(h - 1), x, ch);
                let left = image.get(y, x.saturating_sub(1), ch);
                let right = image.get(y, (x + 1).min(w - 1), ch);
                let lap = up + down + left + right - 4.0 * centre;
                out.set(y, x, ch, centre - dt * lap);
            }
        }
    }
    out
}
