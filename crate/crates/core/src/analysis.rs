//! Spectral diagnostics, input-gradient probes and nearest-neighbour audits.

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::neural::{batch_tensor, forward_graph, DenoiserParams, Graph, Scalar};
use crate::schedule::BlurSchedule;
use crate::spectral::{dct2, frequency_grid, FrequencyGrid, SpectralImage};

/// Floor applied before taking logs of power values.
pub const LOG_FLOOR: f64 = 1e-20;

pub const DEFAULT_BINS: usize = 32;

/// Power averaged over equal-width annuli of radial frequency `√λ/π`.
///
/// Power is the squared orthonormal DCT coefficient, averaged over the
/// channels and the members of each annulus. The zero mode is kept out of
/// the annuli and reported on its own, so `Σ populations + 1 = H·W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdCurve {
    /// Bin boundaries, `bins + 1` values from 0 to the highest frequency.
    pub edges: Vec<f64>,
    pub centers: Vec<f64>,
    /// Mean frequency of the modes in each bin (the centre if empty).
    pub mean_freqs: Vec<f64>,
    pub mean_power: Vec<f64>,
    /// `ln(max(mean_power, LOG_FLOOR))`
    pub log_power: Vec<f64>,
    pub populations: Vec<usize>,
    pub zero_power: f64,
    pub pixels: usize,
}

impl PsdCurve {
    pub fn bins(&self) -> usize {
        self.mean_power.len()
    }

    /// Mean squared pixel value implied by the spectrum (Parseval).
    pub fn total_energy(&self) -> f64 {
        let mut s = self.zero_power;
        for (p, &n) in self.mean_power.iter().zip(&self.populations) {
            s += p * n as f64;
        }
        s / self.pixels as f64
    }

    /// Bin-wise mean of several curves over the same grid.
    pub fn average(curves: &[PsdCurve]) -> Result<PsdCurve> {
        let first = curves
            .first()
            .ok_or_else(|| Error::InvalidArgument("no curves to average".into()))?;
        if curves.iter().any(|c| c.edges != first.edges) {
            return Err(Error::InvalidInput("curves use different bins".into()));
        }
        let n = curves.len() as f64;
        let mut out = first.clone();
        for b in 0..first.bins() {
            out.mean_power[b] = curves.iter().map(|c| c.mean_power[b]).sum::<f64>() / n;
            out.log_power[b] = out.mean_power[b].max(LOG_FLOOR).ln();
        }
        out.zero_power = curves.iter().map(|c| c.zero_power).sum::<f64>() / n;
        Ok(out)
    }
}

/// Bin of every mode of `grid` (`None` for the zero mode) and the edges.
fn annuli(grid: &FrequencyGrid, bins: usize) -> (Vec<Option<usize>>, Vec<f64>) {
    let max = grid.max_freq();
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let edges = (0..=bins)
        .map(|i| if i == bins { max } else { i as f64 * width })
        .collect();
    let assign = grid
        .freqs
        .iter()
        .enumerate()
        .map(|(i, &f)| (i != 0).then(|| ((f / width) as usize).min(bins - 1)))
        .collect();
    (assign, edges)
}

fn curve_from_spectrum(spec: &SpectralImage, grid: &FrequencyGrid, bins: usize) -> PsdCurve {
    let (h, w, c) = (spec.height(), spec.width(), spec.channels());
    let (assign, edges) = annuli(grid, bins);
    let mut sums = vec![0.0; bins];
    let mut fsum = vec![0.0; bins];
    let mut pops = vec![0usize; bins];
    let mut zero_power = 0.0;
    for (i, b) in assign.iter().enumerate() {
        let mut p = 0.0;
        for ch in 0..c {
            p += spec.plane(ch)[i].powi(2);
        }
        p /= c as f64;
        match b {
            None => zero_power = p,
            Some(b) => {
                sums[*b] += p;
                fsum[*b] += grid.freqs[i];
                pops[*b] += 1;
            }
        }
    }
    let centers: Vec<f64> = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    let mean_power: Vec<f64> = sums
        .iter()
        .zip(&pops)
        .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    PsdCurve {
        mean_freqs: fsum
            .iter()
            .zip(&pops)
            .zip(&centers)
            .map(|((s, &n), &c)| if n == 0 { c } else { s / n as f64 })
            .collect(),
        log_power: mean_power.iter().map(|p| p.max(LOG_FLOOR).ln()).collect(),
        mean_power,
        populations: pops,
        centers,
        edges,
        zero_power,
        pixels: h * w,
    }
}

pub fn psd_1d(image: &ImageGrid, bins: usize) -> Result<PsdCurve> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need ≥ 2 bins, got {bins}")));
    }
    let grid = frequency_grid(image.height(), image.width());
    Ok(curve_from_spectrum(&dct2(image)?, &grid, bins))
}

/// Bin-wise mean PSD of several images.
pub fn mean_psd(images: &[ImageGrid], bins: usize) -> Result<PsdCurve> {
    let curves = images.iter().map(|i| psd_1d(i, bins)).collect::<Result<Vec<_>>>()?;
    PsdCurve::average(&curves)
}

/// Power law `power ∝ f^(−α)` fitted on log-log axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha: f64,
    /// Natural-log intercept at `f = 1`.
    pub intercept: f64,
    /// Half-open bin range the fit used.
    pub range: (usize, usize),
    /// Root-mean-square residual in natural-log units.
    pub residual: f64,
}

/// Default fit range: all bins except the lowest two and highest two.
pub fn default_fit_range(bins: usize) -> (usize, usize) {
    (2, bins.saturating_sub(2))
}

/// Least squares of `log_power` on `ln(mean_freq)` over bins `range`,
/// skipping empty bins.
pub fn fit_alpha(curve: &PsdCurve, range: (usize, usize)) -> Result<AlphaFit> {
    let (lo, hi) = range;
    if hi > curve.bins() || lo >= hi {
        return Err(Error::InvalidArgument(format!(
            "fit range {lo}..{hi} is invalid for {} bins",
            curve.bins()
        )));
    }
    let pts: Vec<(f64, f64)> = (lo..hi)
        .filter(|&b| curve.populations[b] > 0 && curve.mean_freqs[b] > 0.0)
        .map(|b| (curve.mean_freqs[b].ln(), curve.log_power[b]))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "fit range {lo}..{hi} holds only {} usable bins",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("fit range has a single frequency".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(AlphaFit {
        alpha: -slope,
        intercept,
        range,
        residual,
    })
}

/// Annulus-averaged power at every level of a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayMap {
    pub sigma_b: Vec<f64>,
    pub centers: Vec<f64>,
    /// `log_power[k−1][bin]`, floored at `ln(LOG_FLOOR)`.
    pub log_power: Vec<Vec<f64>>,
    /// Per level, the fraction of non-zero modes whose power exceeds `σ²`.
    pub above_floor: Vec<f64>,
    pub noise_floor: f64,
}

impl DecayMap {
    /// Rows of (σ_B, bin, log-power) for plotting.
    pub fn to_table(&self) -> String {
        let mut s = String::from("# sigma_b\tfrequency\tlog_power\n");
        for (k, row) in self.log_power.iter().enumerate() {
            for (f, p) in self.centers.iter().zip(row) {
                s.push_str(&format!("{}\t{}\t{}\n", self.sigma_b[k], f, p));
            }
        }
        s
    }

    /// Rows are levels (finest at the top), columns are bins, scaled to [0, 1].
    pub fn heatmap(&self) -> ImageGrid {
        let rows = self.log_power.len();
        let cols = self.centers.len();
        let floor = LOG_FLOOR.ln();
        let vals: Vec<f64> = self.log_power.iter().flatten().copied().collect();
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals
            .iter()
            .copied()
            .filter(|&v| v > floor)
            .fold(f64::INFINITY, f64::min);
        let span = (hi - lo).max(1e-12);
        ImageGrid::from_fn(rows, cols, 1, |y, x, _| {
            ((self.log_power[y][x] - lo) / span).clamp(0.0, 1.0)
        })
    }
}

pub fn frequency_decay_map(image: &ImageGrid, schedule: &BlurSchedule, sigma: f64, bins: usize) -> Result<DecayMap> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need ≥ 2 bins, got {bins}")));
    }
    let grid = frequency_grid(image.height(), image.width());
    let spec = dct2(image)?;
    let floor = sigma * sigma;
    let mut log_power = Vec::with_capacity(schedule.len());
    let mut above_floor = Vec::with_capacity(schedule.len());
    let mut centers = Vec::new();
    let c = image.channels() as f64;
    for k in 1..=schedule.len() {
        let s = spec.decayed(&grid, schedule.time(k))?;
        let curve = curve_from_spectrum(&s, &grid, bins);
        let modes = grid.freqs.len() - 1;
        let above = (1..grid.freqs.len())
            .filter(|&i| (0..image.channels()).map(|ch| s.plane(ch)[i].powi(2)).sum::<f64>() / c > floor)
            .count();
        above_floor.push(if modes == 0 { 0.0 } else { above as f64 / modes as f64 });
        centers = curve.centers.clone();
        log_power.push(curve.log_power);
    }
    Ok(DecayMap {
        sigma_b: schedule.sigma_b.clone(),
        centers,
        log_power,
        above_floor,
        noise_floor: floor,
    })
}

/// `∂ μ_θ(u, k)[pixel] / ∂ u` for every input pixel.
pub fn input_gradient_probe<T: Scalar>(
    params: &DenoiserParams<T>,
    u: &ImageGrid,
    k: usize,
    pixel: (usize, usize, usize),
) -> Result<ImageGrid> {
    let (h, w, c) = u.shape();
    let (py, px, pc) = pixel;
    if py >= h || px >= w || pc >= c {
        return Err(Error::InvalidArgument(format!(
            "pixel {pixel:?} outside a {h}×{w}×{c} image"
        )));
    }
    let mut g = Graph::new();
    let x = g.leaf(batch_tensor::<T>(&[u]), true);
    let out = forward_graph(params, &mut g, x, &[k], false)?;
    let mut seed = vec![T::ZERO; h * w * c];
    seed[(pc * h + py) * w + px] = T::ONE;
    g.backward_with_seed(out.output, seed)?;
    let grad = g.grad(x).expect("input leaf requires grad");
    ImageGrid::from_planar(h, w, c, grad.iter().map(|v| v.to_f64()).collect())
}

/// Fraction of the L1 mass of `grad` inside the `size×size` window centred
/// on `(y, x)`, over all channels.
pub fn window_mass_fraction(grad: &ImageGrid, y: usize, x: usize, size: usize) -> f64 {
    let r = size / 2;
    let (h, w, c) = grad.shape();
    let mut inside = 0.0;
    let mut total = 0.0;
    for ch in 0..c {
        for yy in 0..h {
            for xx in 0..w {
                let v = grad.get(yy, xx, ch).abs();
                total += v;
                if yy.abs_diff(y) <= r && xx.abs_diff(x) <= r {
                    inside += v;
                }
            }
        }
    }
    if total == 0.0 {
        1.0
    } else {
        inside / total
    }
}

/// `|v| / max|v|`, for displaying signed maps.
pub fn abs_normalized(img: &ImageGrid) -> ImageGrid {
    let max = img.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return img.map(|_| 0.0);
    }
    img.map(|v| v.abs() / max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    /// Euclidean pixel distance.
    pub distance: f64,
}

/// The `n` closest dataset items by Euclidean distance, nearest first;
/// ties keep dataset order. Returns fewer when the dataset is smaller.
pub fn nearest_neighbors(sample: &ImageGrid, dataset: &Dataset, n: usize) -> Result<Vec<Neighbor>> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    if dataset.shape() != Some(sample.shape()) {
        return Err(Error::InvalidInput("sample and dataset differ in shape".into()));
    }
    let mut all: Vec<Neighbor> = dataset
        .images()
        .iter()
        .enumerate()
        .map(|(index, img)| Neighbor {
            index,
            distance: sample.squared_distance(img).sqrt(),
        })
        .collect();
    all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
    all.truncate(n);
    Ok(all)
}

/// Plot-ready table: one frequency column and one log-power column per
/// named series, tab-separated, with a `#` header.
pub fn psd_table(series: &[(&str, &PsdCurve)]) -> Result<String> {
    let first = series
        .first()
        .ok_or_else(|| Error::InvalidArgument("no series".into()))?
        .1;
    if series.iter().any(|(_, c)| c.edges != first.edges) {
        return Err(Error::InvalidInput("series use different bins".into()));
    }
    let mut s = String::from("# frequency");
    for (name, _) in series {
        s.push('\t');
        s.push_str(name);
    }
    s.push('\n');
    for b in 0..first.bins() {
        s.push_str(&first.centers[b].to_string());
        for (_, c) in series {
            s.push('\t');
            s.push_str(&c.log_power[b].to_string());
        }
        s.push('\n');
    }
    Ok(s)
}
