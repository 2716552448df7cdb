//! ELBO terms, the kernel-density prior and per-example NLL bounds.
//!
//! `N` below is the number of scalars in an image (pixels × channels) and
//! every squared error is a sum over those scalars, not a mean.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::neural::{denoiser_forward, DenoiserParams, Scalar};
use crate::rng::{normal_image, stream_rng, Stream};
use crate::schedule::BlurSchedule;
use crate::spectral::dissipate;

fn check_scales(sigma: f64, delta: f64) -> Result<()> {
    if !(sigma > 0.0 && delta > 0.0 && sigma.is_finite() && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need σ > 0 and δ > 0, got σ = {sigma}, δ = {delta}"
        )));
    }
    Ok(())
}

/// `KL(N(m, σ²I) ‖ N(μ, δ²I))` given `sq_err = ‖μ − m‖²`.
pub fn gaussian_kl(sq_err: f64, n: usize, sigma: f64, delta: f64) -> Result<f64> {
    check_scales(sigma, delta)?;
    let n = n as f64;
    let ratio = sigma * sigma / (delta * delta);
    Ok(0.5 * (ratio * n - n + sq_err / (delta * delta) + 2.0 * n * (delta / sigma).ln()))
}

/// `−log N(u₀ | μ, δ²I)` given `sq_err = ‖μ − u₀‖²`.
pub fn gaussian_nll(sq_err: f64, n: usize, delta: f64) -> Result<f64> {
    check_scales(1.0, delta)?;
    let n = n as f64;
    Ok(sq_err / (2.0 * delta * delta) + n * (delta * (2.0 * PI).sqrt()).ln())
}

/// `‖μ_θ(û_k, k) − F(t_{k−1}) u₀‖²` with `û_k = F(t_k) u₀ + σ·noise`.
fn step_sq_err<T: Scalar>(
    params: &DenoiserParams<T>,
    u0: &ImageGrid,
    k: usize,
    schedule: &BlurSchedule,
    sigma: f64,
    noise: &ImageGrid,
) -> Result<f64> {
    if !(1..=schedule.len()).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "step {k} outside 1..={}",
            schedule.len()
        )));
    }
    let input = dissipate(u0, schedule.time(k))?.add_scaled(noise, sigma);
    let target = if k == 1 {
        u0.clone()
    } else {
        dissipate(u0, schedule.time(k - 1))?
    };
    let out = denoiser_forward(params, &[&input], &[k])?.remove(0);
    Ok(out.squared_distance(&target))
}

/// `L_{k−1}` for `k ≥ 2` with one Monte-Carlo draw of `û_k`.
#[allow(clippy::too_many_arguments)]
pub fn kl_term<T: Scalar>(
    params: &DenoiserParams<T>,
    u0: &ImageGrid,
    k: usize,
    schedule: &BlurSchedule,
    sigma: f64,
    delta: f64,
    rng: &mut impl rand::Rng,
) -> Result<f64> {
    check_scales(sigma, delta)?;
    if k < 2 {
        return Err(Error::InvalidArgument(
            "kl_term needs k ≥ 2; use recon_term for k = 1".into(),
        ));
    }
    let (h, w, c) = u0.shape();
    let noise = normal_image(rng, h, w, c, 1.0);
    let e = step_sq_err(params, u0, k, schedule, sigma, &noise)?;
    gaussian_kl(e, u0.len(), sigma, delta)
}

/// `L₀ = −log p_θ(u₀ | û₁)` with one Monte-Carlo draw of `û₁`.
pub fn recon_term<T: Scalar>(
    params: &DenoiserParams<T>,
    u0: &ImageGrid,
    schedule: &BlurSchedule,
    sigma: f64,
    delta: f64,
    rng: &mut impl rand::Rng,
) -> Result<f64> {
    check_scales(sigma, delta)?;
    let (h, w, c) = u0.shape();
    let noise = normal_image(rng, h, w, c, 1.0);
    let e = step_sq_err(params, u0, 1, schedule, sigma, &noise)?;
    gaussian_nll(e, u0.len(), delta)
}

/// Blurred training images `F(t_K) u₀⁽ⁱ⁾` with kernel std `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSet {
    components: Vec<ImageGrid>,
    pub delta: f64,
    terminal_time: f64,
}

impl PriorSet {
    pub fn from_dataset(data: &Dataset, schedule: &BlurSchedule, delta: f64) -> Result<Self> {
        let t = schedule.terminal_time();
        let components = data
            .images()
            .iter()
            .map(|u| dissipate(u, t))
            .collect::<Result<Vec<_>>>()?;
        Self::from_components(components, t, delta)
    }

    /// Components that are already blurred to `terminal_time`.
    pub fn from_components(components: Vec<ImageGrid>, terminal_time: f64, delta: f64) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("prior set is empty".into()))?;
        if components.iter().any(|c| !c.same_shape(first)) {
            return Err(Error::InvalidInput("prior components differ in shape".into()));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("kernel std must be ≥ 0, got {delta}")));
        }
        Ok(Self {
            components,
            delta,
            terminal_time,
        })
    }

    pub fn components(&self) -> &[ImageGrid] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn terminal_time(&self) -> f64 {
        self.terminal_time
    }

    /// `‖F(t_K) u₀ − u_K⁽ⁱ⁾‖²` for every component.
    pub fn distances(&self, u0: &ImageGrid) -> Result<Vec<f64>> {
        let m = dissipate(u0, self.terminal_time)?;
        if !m.same_shape(&self.components[0]) {
            return Err(Error::InvalidInput("image and prior differ in shape".into()));
        }
        Ok(self.components.iter().map(|c| m.squared_distance(c)).collect())
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Upper bound on `KL(q(u_K|u₀) ‖ p(u_K))` from squared distances between
/// the mean of `q` and every prior component.
///
/// `φᵢ = softmax(−KLᵢ)` and the bound is assembled as
/// `−H(q) + Σ φᵢ [H×(q, pᵢ) + log N_T + log φᵢ]`.
pub fn lk_bound_from_distances(distances: &[f64], n: usize, sigma: f64, delta: f64) -> Result<f64> {
    check_scales(sigma, delta)?;
    if distances.is_empty() {
        return Err(Error::InvalidArgument("prior set is empty".into()));
    }
    let nf = n as f64;
    let (s2, d2) = (sigma * sigma, delta * delta);
    let entropy = 0.5 * nf * (2.0 * PI * std::f64::consts::E * s2).ln();
    let cross = |d: f64| 0.5 * nf * (2.0 * PI * d2).ln() + (nf * s2 + d) / (2.0 * d2);
    let neg_kl: Vec<f64> = distances
        .iter()
        .map(|&d| gaussian_kl(d, n, sigma, delta).map(|k| -k))
        .collect::<Result<_>>()?;
    let lse = log_sum_exp(&neg_kl);
    let log_nt = (distances.len() as f64).ln();
    let mut sum = 0.0;
    for (&d, &nk) in distances.iter().zip(&neg_kl) {
        let log_phi = nk - lse;
        let phi = log_phi.exp();
        if phi > 0.0 {
            sum += phi * (cross(d) + log_nt + log_phi);
        }
    }
    Ok(sum - entropy)
}

/// `L_K` bound for one image; `delta` is the kernel std.
pub fn lk_bound(u0: &ImageGrid, prior: &PriorSet, sigma: f64, delta: f64) -> Result<f64> {
    lk_bound_from_distances(&prior.distances(u0)?, u0.len(), sigma, delta)
}

/// Per-term NLL bound in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l0: f64,
    /// `L_{k−1}` for `k = 2..=K`.
    pub lk_terms: Vec<f64>,
    pub l_k: f64,
    pub total_nll_bound: f64,
    pub per_dim_bpd: f64,
}

impl LossBreakdown {
    pub fn from_terms(l0: f64, lk_terms: Vec<f64>, l_k: f64, n: usize) -> Self {
        let total = l0 + lk_terms.iter().sum::<f64>() + l_k;
        Self {
            l0,
            per_dim_bpd: total / (n as f64 * LN_2),
            lk_terms,
            l_k,
            total_nll_bound: total,
        }
    }

    pub fn lk_sum(&self) -> f64 {
        self.lk_terms.iter().sum()
    }
}

/// The δ-independent ingredients of an NLL bound: one squared error per
/// step and the prior distances.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboStats {
    pub n: usize,
    /// Index `k−1` holds `‖μ_θ(û_k, k) − F(t_{k−1}) u₀‖²`.
    pub sq_errs: Vec<f64>,
    pub prior_distances: Vec<f64>,
}

impl ElboStats {
    pub fn breakdown(&self, sigma: f64, delta: f64) -> Result<LossBreakdown> {
        let l0 = gaussian_nll(self.sq_errs[0], self.n, delta)?;
        let lk_terms = self.sq_errs[1..]
            .iter()
            .map(|&e| gaussian_kl(e, self.n, sigma, delta))
            .collect::<Result<Vec<_>>>()?;
        let l_k = lk_bound_from_distances(&self.prior_distances, self.n, sigma, delta)?;
        Ok(LossBreakdown::from_terms(l0, lk_terms, l_k, self.n))
    }
}

/// Draws one `û_k` per step from `noise_seed`'s `Eval` stream at
/// `stream_index` and evaluates every step in batches.
pub fn elbo_stats<T: Scalar>(
    params: &DenoiserParams<T>,
    u0: &ImageGrid,
    schedule: &BlurSchedule,
    prior: &PriorSet,
    sigma: f64,
    noise_seed: u64,
    stream_index: u64,
) -> Result<ElboStats> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("need σ > 0, got {sigma}")));
    }
    let k_steps = schedule.len();
    let (h, w, c) = u0.shape();
    let mut rng = stream_rng(noise_seed, Stream::Eval, stream_index);
    let blurred = crate::spectral::dissipate_many(u0, &(0..=k_steps).map(|k| schedule.time(k)).collect::<Vec<_>>())?;
    let inputs: Vec<ImageGrid> = (1..=k_steps)
        .map(|k| blurred[k].add_scaled(&normal_image(&mut rng, h, w, c, 1.0), sigma))
        .collect();
    let mut sq_errs = Vec::with_capacity(k_steps);
    const CHUNK: usize = 25;
    for start in (0..k_steps).step_by(CHUNK) {
        let end = (start + CHUNK).min(k_steps);
        let refs: Vec<&ImageGrid> = inputs[start..end].iter().collect();
        let ks: Vec<usize> = (start + 1..=end).collect();
        let outs = denoiser_forward(params, &refs, &ks)?;
        for (i, out) in outs.iter().enumerate() {
            let k = start + 1 + i;
            // k = 1 targets the clean image itself.
            let target = if k == 1 { u0 } else { &blurred[k - 1] };
            sq_errs.push(out.squared_distance(target));
        }
    }
    Ok(ElboStats {
        n: u0.len(),
        sq_errs,
        prior_distances: prior.distances(u0)?,
    })
}

/// Full NLL bound with one Monte-Carlo draw per term.
pub fn nll_bound<T: Scalar>(
    params: &DenoiserParams<T>,
    u0: &ImageGrid,
    schedule: &BlurSchedule,
    prior: &PriorSet,
    sigma: f64,
    delta: f64,
    seed: u64,
) -> Result<LossBreakdown> {
    elbo_stats(params, u0, schedule, prior, sigma, seed, 0)?.breakdown(sigma, delta)
}

/// Mean breakdown over `repeats` independent draws plus the standard
/// error of the total.
#[allow(clippy::too_many_arguments)]
pub fn nll_bound_repeated<T: Scalar>(
    params: &DenoiserParams<T>,
    u0: &ImageGrid,
    schedule: &BlurSchedule,
    prior: &PriorSet,
    sigma: f64,
    delta: f64,
    seed: u64,
    repeats: usize,
) -> Result<(LossBreakdown, f64)> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be ≥ 1".into()));
    }
    let runs = (0..repeats)
        .map(|r| elbo_stats(params, u0, schedule, prior, sigma, seed, r as u64)?.breakdown(sigma, delta))
        .collect::<Result<Vec<_>>>()?;
    let r = repeats as f64;
    let mean = |f: &dyn Fn(&LossBreakdown) -> f64| runs.iter().map(f).sum::<f64>() / r;
    let lk_terms = (0..runs[0].lk_terms.len()).map(|i| mean(&|b| b.lk_terms[i])).collect();
    let avg = LossBreakdown::from_terms(mean(&|b| b.l0), lk_terms, mean(&|b| b.l_k), u0.len());
    let stderr = if repeats > 1 {
        let m = avg.total_nll_bound;
        let var = runs.iter().map(|b| (b.total_nll_bound - m).powi(2)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    } else {
        f64::NAN
    };
    Ok((avg, stderr))
}

/// One row of an evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub example: usize,
    pub delta: f64,
    pub l0: f64,
    pub lk_sum: f64,
    pub l_k: f64,
    pub total: f64,
    pub bpd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregate {
    pub delta: f64,
    pub examples: usize,
    pub mean_total: f64,
    pub mean_bpd: f64,
    pub stderr_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub aggregate: Vec<EvalAggregate>,
}

impl EvalReport {
    /// Tab-separated table with a header line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("example\tdelta\tl0\tlk_sum\tl_K\ttotal\tbpd\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.example, r.delta, r.l0, r.lk_sum, r.l_k, r.total, r.bpd
            ));
        }
        s
    }

    /// Grid value with the lowest mean total.
    pub fn best_delta(&self) -> Option<f64> {
        self.aggregate
            .iter()
            .min_by(|a, b| a.mean_total.total_cmp(&b.mean_total))
            .map(|a| a.delta)
    }
}

/// NLL bounds of every example at every `δ` in `deltas`. The network is
/// evaluated once per example; `δ` only enters analytically.
pub fn evaluate<T: Scalar>(
    params: &DenoiserParams<T>,
    examples: &[ImageGrid],
    schedule: &BlurSchedule,
    prior: &PriorSet,
    sigma: f64,
    deltas: &[f64],
    seed: u64,
) -> Result<EvalReport> {
    let stats = examples
        .iter()
        .enumerate()
        .map(|(i, u)| elbo_stats(params, u, schedule, prior, sigma, seed, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(examples.len() * deltas.len());
    let mut aggregate = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mut totals = Vec::with_capacity(stats.len());
        let mut bpds = Vec::with_capacity(stats.len());
        for (i, st) in stats.iter().enumerate() {
            let b = st.breakdown(sigma, delta)?;
            totals.push(b.total_nll_bound);
            bpds.push(b.per_dim_bpd);
            rows.push(EvalRow {
                example: i,
                delta,
                l0: b.l0,
                lk_sum: b.lk_sum(),
                l_k: b.l_k,
                total: b.total_nll_bound,
                bpd: b.per_dim_bpd,
            });
        }
        let n = totals.len() as f64;
        let mean = totals.iter().sum::<f64>() / n;
        let var = if totals.len() > 1 {
            totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        aggregate.push(EvalAggregate {
            delta,
            examples: totals.len(),
            mean_total: mean,
            mean_bpd: bpds.iter().sum::<f64>() / n,
            stderr_total: (var / n).sqrt(),
        });
    }
    Ok(EvalReport { rows, aggregate })
}

/// Mean `L_K` bound of `test` images against a prior built from `train`
/// at each `σ_B,max`, with `σ_B,min` and `K` held fixed.
pub fn prior_overlap_sweep(
    train: &Dataset,
    test: &[ImageGrid],
    k_steps: usize,
    sigma_b_min: f64,
    sigma_b_maxes: &[f64],
    sigma: f64,
    delta: f64,
) -> Result<Vec<(f64, f64)>> {
    sigma_b_maxes
        .iter()
        .map(|&smax| {
            let schedule = BlurSchedule::new(k_steps, sigma_b_min, smax)?;
            let prior = PriorSet::from_dataset(train, &schedule, delta)?;
            let mut total = 0.0;
            for u in test {
                total += lk_bound(u, &prior, sigma, delta)?;
            }
            Ok((smax, total / test.len().max(1) as f64))
        })
        .collect()
}
