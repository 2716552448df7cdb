//! Shared oracles and fixtures for the integration suites.
#![allow(dead_code)]

use ihdm::neural::{forward_graph, DenoiserParams, Graph, Tensor};
use ihdm::ImageGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageGrid {
    let mut r = rng(seed);
    ImageGrid::from_fn(h, w, c, |_, _, _| r.random::<f64>())
}

pub fn gaussian_image(h: usize, w: usize, c: usize, std: f64, seed: u64) -> ImageGrid {
    let mut r = rng(seed);
    ImageGrid::from_fn(h, w, c, |_, _, _| std * r.sample::<f64, _>(StandardNormal))
}

/// Σ weights ⊙ μ_θ(x, k), evaluated directly (no backward pass).
pub fn weighted_output(
    params: &DenoiserParams<f64>,
    x: &[f64],
    shape: [usize; 4],
    ks: &[usize],
    weights: &[f64],
) -> f64 {
    let mut g = Graph::new();
    let xn = g.leaf(Tensor::new(shape.to_vec(), x.to_vec()), false);
    let out = forward_graph(params, &mut g, xn, ks, false).unwrap();
    g.value(out.output)
        .values()
        .iter()
        .zip(weights)
        .map(|(a, b)| a * b)
        .sum()
}

/// Relative error with a floor so that near-zero gradients compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central finite differences of the weighted-output functional with respect
/// to every parameter scalar and every input pixel.
pub fn finite_difference_grads(
    params: &DenoiserParams<f64>,
    x: &[f64],
    shape: [usize; 4],
    ks: &[usize],
    weights: &[f64],
    step: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut work = params.clone();
    let mut param_grads = Vec::new();
    for ti in 0..params.tensors().len() {
        let n = params.tensors()[ti].tensor.len();
        let mut g = vec![0.0; n];
        for (j, gj) in g.iter_mut().enumerate() {
            let orig = params.tensors()[ti].tensor.values()[j];
            work.tensors_mut()[ti].tensor.values_mut()[j] = orig + step;
            let plus = weighted_output(&work, x, shape, ks, weights);
            work.tensors_mut()[ti].tensor.values_mut()[j] = orig - step;
            let minus = weighted_output(&work, x, shape, ks, weights);
            work.tensors_mut()[ti].tensor.values_mut()[j] = orig;
            *gj = (plus - minus) / (2.0 * step);
        }
        param_grads.push(g);
    }
    let mut xg = vec![0.0; x.len()];
    let mut xw = x.to_vec();
    for j in 0..x.len() {
        xw[j] = x[j] + step;
        let plus = weighted_output(params, &xw, shape, ks, weights);
        xw[j] = x[j] - step;
        let minus = weighted_output(params, &xw, shape, ks, weights);
        xw[j] = x[j];
        xg[j] = (plus - minus) / (2.0 * step);
    }
    (param_grads, xg)
}

/// Reverse-mode gradients of the same functional.
pub fn reverse_mode_grads(
    params: &DenoiserParams<f64>,
    x: &[f64],
    shape: [usize; 4],
    ks: &[usize],
    weights: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut g = Graph::new();
    let xn = g.leaf(Tensor::new(shape.to_vec(), x.to_vec()), true);
    let out = forward_graph(params, &mut g, xn, ks, true).unwrap();
    g.backward_with_seed(out.output, weights.to_vec()).unwrap();
    let pg = out
        .params
        .iter()
        .map(|&p| {
            g.grad(p)
                .map(|s| s.to_vec())
                .unwrap_or_else(|| vec![0.0; g.value(p).len()])
        })
        .collect();
    (pg, g.grad(xn).unwrap().to_vec())
}

/// Sampled Gaussian of std `sigma_b`, truncated at `⌈4σ⌉` and normalized.
pub fn sampled_gaussian_taps(sigma_b: f64) -> Vec<f64> {
    let r = (4.0 * sigma_b).ceil() as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma_b * sigma_b)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    taps.iter().map(|t| t / norm).collect()
}

/// Band-limited discrete Gaussian: the taps whose frequency response on
/// `[−π, π]` is `exp(−ω²σ²/2)`, by Simpson quadrature, truncated at `radius`.
pub fn bandlimited_gaussian_taps(sigma_b: f64, radius: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let intervals = 4000;
    let h = PI / intervals as f64;
    let r = radius as isize;
    (-r..=r)
        .map(|n| {
            let f = |w: f64| (-w * w * sigma_b * sigma_b / 2.0).exp() * (w * n as f64).cos();
            let mut acc = f(0.0) + f(PI);
            for i in 1..intervals {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
            }
            acc * h / 3.0 / PI
        })
        .collect()
}

/// Separable convolution with `taps` (odd length, centred). Only pixels at
/// least `margin` from every edge are returned, as `(y, x, c, value)`.
pub fn convolve_interior(img: &ImageGrid, taps: &[f64], margin: usize) -> Vec<(usize, usize, usize, f64)> {
    let r = (taps.len() / 2) as isize;
    assert!(margin as isize >= r);
    let (h, w, c) = img.shape();
    let mut out = Vec::new();
    for ch in 0..c {
        for y in margin..h - margin {
            for x in margin..w - margin {
                let mut acc = 0.0;
                for (i, ty) in taps.iter().enumerate() {
                    for (j, tx) in taps.iter().enumerate() {
                        let yy = (y as isize + i as isize - r) as usize;
                        let xx = (x as isize + j as isize - r) as usize;
                        acc += ty * tx * img.get(yy, xx, ch);
                    }
                }
                out.push((y, x, ch, acc));
            }
        }
    }
    out
}

/// Image built from a few low cosine modes.
pub fn smooth_image(h: usize, w: usize, c: usize) -> ImageGrid {
    use std::f64::consts::PI;
    ImageGrid::from_fn(h, w, c, |y, x, ch| {
        let fy = PI * (y as f64 + 0.5) / h as f64;
        let fx = PI * (x as f64 + 0.5) / w as f64;
        0.5 + 0.2 * fx.cos() + 0.15 * (fy + ch as f64).cos() * 0.5 + 0.1 * fx.cos() * fy.cos()
    })
}

pub fn max_abs(a: &ImageGrid, b: &ImageGrid) -> f64 {
    a.max_abs_diff(b)
}

/// A training config small enough to step in milliseconds on 8×8 data.
pub fn micro_train_config() -> ihdm::training::TrainConfig {
    use ihdm::training::{ModelConfig, TrainConfig};
    TrainConfig {
        k_steps: 6,
        sigma_b_max: 4.0,
        batch_size: 4,
        total_steps: 10,
        log_every: 1,
        checkpoint_every: 5,
        optimizer: ihdm::neural::AdamConfig {
            lr: 1e-3,
            warmup_steps: 2,
            ..Default::default()
        },
        model: ModelConfig {
            base_channels: 4,
            channel_mults: vec![1, 2],
            blocks_per_level: 1,
            groups: 2,
            embed_dim: 8,
            ..ModelConfig::tiny()
        },
        ..TrainConfig::smoke()
    }
}

pub fn micro_dataset(n: usize, seed: u64) -> ihdm::dataio::Dataset {
    let images = (0..n).map(|i| random_image(8, 8, 1, seed * 1000 + i as u64)).collect();
    ihdm::dataio::Dataset::new(images, "micro").unwrap()
}

/// Bundled MNIST subset.
pub fn mnist_path(file: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data/mnist")
        .join(file)
}

pub fn photo_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data/photos")
        .join(format!("{name}.png"))
}

/// `−ln N(x | mean, std²)` summed over coordinates.
pub fn diag_gaussian_nll(x: &[f64], mean: &[f64], std: f64) -> f64 {
    let ln_norm = (std * (2.0 * std::f64::consts::PI).sqrt()).ln();
    x.iter()
        .zip(mean)
        .map(|(a, m)| (a - m).powi(2) / (2.0 * std * std) + ln_norm)
        .sum()
}

/// Monte-Carlo estimate of `KL(N(m, σ²I) ‖ (1/N)Σ N(cᵢ, δ²I))` and its
/// standard error.
pub fn mc_mixture_kl(m: &[f64], sigma: f64, comps: &[Vec<f64>], delta: f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let ln_nt = (comps.len() as f64).ln();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut x = vec![0.0; m.len()];
    for _ in 0..samples {
        for (xi, mi) in x.iter_mut().zip(m) {
            *xi = mi + sigma * r.sample::<f64, _>(StandardNormal);
        }
        let log_q = -diag_gaussian_nll(&x, m, sigma);
        let terms: Vec<f64> = comps.iter().map(|c| -diag_gaussian_nll(&x, c, delta)).collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_p = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln() - ln_nt;
        let v = log_q - log_p;
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Field whose DCT coefficients are `±1/f` with random signs, so its power
/// falls as `f⁻²`.
pub fn inverse_f_field(size: usize, seed: u64) -> ImageGrid {
    let grid = ihdm::frequency_grid(size, size);
    let mut spec = ihdm::SpectralImage::zeros(size, size, 1);
    let mut r = rng(seed);
    for m in 0..size {
        for n in 0..size {
            if m + n > 0 {
                let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
                spec.set(m, n, 0, sign / grid.freq(m, n));
            }
        }
    }
    ihdm::idct2(&spec).unwrap()
}

/// Bundled photograph as a grayscale image.
pub fn photo(name: &str) -> ImageGrid {
    ihdm::dataio::load_png(photo_path(name)).unwrap()
}

pub const PHOTOS: [&str; 4] = ["rocket", "grass", "coins", "chelsea"];

/// The smoke preset on the bundled digits.
pub fn smoke_config() -> ihdm::training::TrainConfig {
    ihdm::training::TrainConfig {
        dataset: Some(mnist_path("train-images-idx3-ubyte")),
        ..ihdm::training::TrainConfig::smoke()
    }
}

pub fn smoke_train_data() -> ihdm::dataio::Dataset {
    ihdm::dataio::load_idx(mnist_path("train-images-idx3-ubyte")).unwrap()
}

pub fn mnist_test_images(n: usize) -> Vec<ImageGrid> {
    ihdm::dataio::load_idx(mnist_path("test-images-idx3-ubyte"))
        .unwrap()
        .images()[..n]
        .to_vec()
}

/// Cache location of the smoke checkpoint, keyed by the config.
pub fn smoke_cache_path() -> std::path::PathBuf {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    toml::to_string(&smoke_config()).unwrap().hash(&mut h);
    env!("CARGO_PKG_VERSION").hash(&mut h);
    std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("smoke-{:016x}.ckpt", h.finish()))
}

/// Trains the smoke preset from scratch and refreshes the cache.
pub fn train_smoke() -> (ihdm::training::Trainer, Vec<ihdm::training::StepRecord>) {
    let mut trainer = ihdm::training::Trainer::new(smoke_config(), smoke_train_data()).unwrap();
    let records = trainer.run(None, |_| {}).unwrap();
    let path = smoke_cache_path();
    let tmp = path.with_extension("partial");
    ihdm::dataio::save_checkpoint(&tmp, &trainer.checkpoint()).unwrap();
    std::fs::rename(&tmp, &path).unwrap();
    (trainer, records)
}

/// The trained smoke checkpoint, from the cache when present.
pub fn smoke_checkpoint() -> ihdm::dataio::Checkpoint {
    let path = smoke_cache_path();
    if let Ok(ckpt) = ihdm::dataio::load_checkpoint(&path) {
        return ckpt;
    }
    train_smoke().0.checkpoint()
}

/// Worst relative error between reverse-mode and finite-difference
/// gradients of a random micro network on 8×8 inputs, and the entry count.
pub fn gradient_check(seed: u64) -> (f64, usize) {
    let arch = ihdm::neural::Architecture::micro(8, 8, 1);
    let params = DenoiserParams::<f64>::init(arch, seed, ihdm::neural::Init::AllRandom).unwrap();
    assert!(params.num_scalars() <= 10_000);
    let shape = [2, 1, 8, 8];
    let x = {
        let mut r = rng(seed + 100);
        (0..128).map(|_| r.random::<f64>()).collect::<Vec<_>>()
    };
    let weights = {
        let mut r = rng(seed + 200);
        (0..128).map(|_| r.random::<f64>() - 0.5).collect::<Vec<_>>()
    };
    let ks = [1, 5];
    let (pa, xa) = reverse_mode_grads(&params, &x, shape, &ks, &weights);
    let (pn, xn) = finite_difference_grads(&params, &x, shape, &ks, &weights, 1e-4);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (a, n) in pa.iter().flatten().zip(pn.iter().flatten()) {
        worst = worst.max(rel_err(*a, *n));
        count += 1;
    }
    for (a, n) in xa.iter().zip(&xn) {
        worst = worst.max(rel_err(*a, *n));
        count += 1;
    }
    (worst, count)
}
