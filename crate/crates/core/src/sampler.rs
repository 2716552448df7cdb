//! The learned reverse chain, prior draws, fixed-noise runs and
//! interpolation.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;

use crate::elbo::PriorSet;
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::neural::{denoiser_forward, DenoiserParams, Scalar};
use crate::rng::{normal_image, stream_rng, Stream};

/// Unit-variance draws for a whole chain; `draw(k)` is scaled by `δ` and
/// added after reverse step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrack {
    draws: Vec<ImageGrid>,
    pub seed: Option<u64>,
    pub index: Option<u64>,
}

impl NoiseTrack {
    /// Track number `index` of `seed` from the `Noise` stream.
    pub fn generate(seed: u64, index: u64, k_steps: usize, shape: (usize, usize, usize)) -> Self {
        let mut rng = stream_rng(seed, Stream::Noise, index);
        let draws = (0..k_steps)
            .map(|_| normal_image(&mut rng, shape.0, shape.1, shape.2, 1.0))
            .collect();
        Self {
            draws,
            seed: Some(seed),
            index: Some(index),
        }
    }

    pub fn from_draws(draws: Vec<ImageGrid>) -> Result<Self> {
        let first = draws
            .first()
            .ok_or_else(|| Error::InvalidArgument("noise track needs at least one draw".into()))?;
        if draws.iter().any(|d| !d.same_shape(first)) {
            return Err(Error::InvalidInput("noise draws differ in shape".into()));
        }
        Ok(Self {
            draws,
            seed: None,
            index: None,
        })
    }

    /// `K`.
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Draw used at reverse step `k ∈ 1..=K`.
    pub fn draw(&self, k: usize) -> &ImageGrid {
        &self.draws[k - 1]
    }

    pub fn draws(&self) -> &[ImageGrid] {
        &self.draws
    }

    /// Steps `K` down to `K − shared + 1` from `self`, the rest from `other`.
    pub fn with_prefix_of(&self, other: &NoiseTrack, shared: usize) -> Result<NoiseTrack> {
        if other.len() != self.len() || other.draws[0].shape() != self.draws[0].shape() {
            return Err(Error::InvalidInput("noise tracks differ in shape".into()));
        }
        let k = self.len();
        let draws = (1..=k)
            .map(|step| {
                if step + shared > k {
                    self.draw(step).clone()
                } else {
                    other.draw(step).clone()
                }
            })
            .collect();
        Ok(NoiseTrack {
            draws,
            seed: other.seed,
            index: other.index,
        })
    }
}

/// Every `stride`-th state of a chain, from `u_K` to the output.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub stride: usize,
    /// Step index of each state; `u_K` is `K`, the output is 0.
    pub steps: Vec<usize>,
    pub states: Vec<ImageGrid>,
}

/// `⌈K/12⌉`
pub fn trace_stride(k_steps: usize) -> usize {
    k_steps.div_ceil(12).max(1)
}

/// Number of frames a trace of `K` steps records.
pub fn trace_len(k_steps: usize) -> usize {
    let stride = trace_stride(k_steps);
    // u_K, every state at a multiple of the stride below K, and u_0.
    1 + (1..k_steps).filter(|s| s % stride == 0).count() + 1
}

/// A uniformly chosen blurred training image plus `N(0, δ²I)` noise, and
/// the index of the chosen component.
pub fn sample_prior(prior: &PriorSet, rng: &mut impl Rng) -> Result<(ImageGrid, usize)> {
    if prior.is_empty() {
        return Err(Error::InvalidArgument("prior set is empty".into()));
    }
    let i = rng.random_range(0..prior.len());
    let src = &prior.components()[i];
    if prior.delta == 0.0 {
        return Ok((src.clone(), i));
    }
    let (h, w, c) = src.shape();
    let noise = normal_image(rng, h, w, c, prior.delta);
    Ok((src.add_scaled(&noise, 1.0), i))
}

/// Runs `u ← μ_θ(u, k) + δ·ν_k` for `k = K..1` on a batch of chains, with
/// no noise after step 1. Outputs are not clamped.
pub fn reverse_chains<T: Scalar>(
    params: &DenoiserParams<T>,
    inits: &[ImageGrid],
    delta: f64,
    tracks: &[&NoiseTrack],
    record_trace: bool,
) -> Result<(Vec<ImageGrid>, Option<Vec<ChainTrace>>)> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("δ must be ≥ 0, got {delta}")));
    }
    if tracks.len() != inits.len() {
        return Err(Error::InvalidInput(format!(
            "{} initial states but {} noise tracks",
            inits.len(),
            tracks.len()
        )));
    }
    let Some(first) = inits.first() else {
        return Ok((Vec::new(), record_trace.then(Vec::new)));
    };
    let k_steps = tracks[0].len();
    for (u, t) in inits.iter().zip(tracks) {
        if !u.same_shape(first) || t.len() != k_steps || !t.draw(1).same_shape(first) {
            return Err(Error::InvalidInput(
                "initial states and noise tracks must share one shape and length".into(),
            ));
        }
    }
    let stride = trace_stride(k_steps);
    let mut traces: Option<Vec<ChainTrace>> = record_trace.then(|| {
        inits
            .iter()
            .map(|u| ChainTrace {
                stride,
                steps: vec![k_steps],
                states: vec![u.clone()],
            })
            .collect()
    });
    let mut states = inits.to_vec();
    for k in (1..=k_steps).rev() {
        let refs: Vec<&ImageGrid> = states.iter().collect();
        let mut next = denoiser_forward(params, &refs, &vec![k; states.len()])?;
        if k > 1 && delta > 0.0 {
            for (u, t) in next.iter_mut().zip(tracks) {
                *u = u.add_scaled(t.draw(k), delta);
            }
        }
        if next.iter().any(|u| u.values().iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteState { step: k });
        }
        states = next;
        if let Some(traces) = traces.as_mut() {
            let remaining = k - 1;
            if remaining == 0 || remaining % stride == 0 {
                for (tr, u) in traces.iter_mut().zip(&states) {
                    tr.steps.push(remaining);
                    tr.states.push(u.clone());
                }
            }
        }
    }
    Ok((states, traces))
}

/// Output of a single chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub sample: ImageGrid,
    pub trace: Option<ChainTrace>,
}

pub fn reverse_chain<T: Scalar>(
    params: &DenoiserParams<T>,
    u_init: &ImageGrid,
    delta: f64,
    noise: &NoiseTrack,
    record_trace: bool,
) -> Result<ChainOutput> {
    let (mut out, traces) = reverse_chains(params, std::slice::from_ref(u_init), delta, &[noise], record_trace)?;
    Ok(ChainOutput {
        sample: out.remove(0),
        trace: traces.map(|mut t| t.remove(0)),
    })
}

/// Runs every prior state with the same noise track.
pub fn sample_fixed_noise<T: Scalar>(
    params: &DenoiserParams<T>,
    prior_states: &[ImageGrid],
    shared: &NoiseTrack,
    delta: f64,
) -> Result<Vec<ImageGrid>> {
    if let Some(first) = prior_states.first() {
        if prior_states.iter().any(|s| !s.same_shape(first)) {
            return Err(Error::InvalidInput("prior states differ in shape".into()));
        }
    }
    let tracks = vec![shared; prior_states.len()];
    Ok(reverse_chains(params, prior_states, delta, &tracks, false)?.0)
}

/// Frame `i` of `steps` mixes the prior states linearly and the noise
/// tracks as `sin(φ)ν₁ + cos(φ)ν₂` with `φ` falling from π/2 to 0, so the
/// first frame is `(a, ν₁)` and the last `(b, ν₂)`.
pub fn interpolation_inputs(
    a: &ImageGrid,
    b: &ImageGrid,
    tracks: (&NoiseTrack, &NoiseTrack),
    steps: usize,
) -> Result<Vec<(ImageGrid, NoiseTrack)>> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "interpolation needs ≥ 2 steps, got {steps}"
        )));
    }
    let (t1, t2) = tracks;
    if !a.same_shape(b) || t1.len() != t2.len() || !t1.draw(1).same_shape(a) || !t2.draw(1).same_shape(a) {
        return Err(Error::InvalidInput("endpoints and tracks must be co-shaped".into()));
    }
    let last = steps - 1;
    (0..steps)
        .map(|i| {
            if i == 0 {
                return Ok((a.clone(), t1.clone()));
            }
            if i == last {
                return Ok((b.clone(), t2.clone()));
            }
            let w = i as f64 / last as f64;
            let phi = FRAC_PI_2 * (1.0 - w);
            let (s, c) = phi.sin_cos();
            let state = a.scale(1.0 - w).add_scaled(b, w);
            let draws = t1
                .draws()
                .iter()
                .zip(t2.draws())
                .map(|(n1, n2)| n1.scale(s).add_scaled(n2, c))
                .collect();
            Ok((state, NoiseTrack::from_draws(draws)?))
        })
        .collect()
}

pub fn interpolate<T: Scalar>(
    params: &DenoiserParams<T>,
    a: &ImageGrid,
    b: &ImageGrid,
    tracks: (&NoiseTrack, &NoiseTrack),
    steps: usize,
    delta: f64,
) -> Result<Vec<ImageGrid>> {
    let frames = interpolation_inputs(a, b, tracks, steps)?;
    let states: Vec<ImageGrid> = frames.iter().map(|(s, _)| s.clone()).collect();
    let track_refs: Vec<&NoiseTrack> = frames.iter().map(|(_, t)| t).collect();
    Ok(reverse_chains(params, &states, delta, &track_refs, false)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_and_trace_length() {
        assert_eq!(trace_stride(100), 9);
        assert_eq!(trace_stride(12), 1);
        assert_eq!(trace_stride(13), 2);
        assert_eq!(trace_len(12), 13);
        // 20 steps, stride 2: u_20, u_18 .. u_2, u_0
        assert_eq!(trace_len(20), 11);
    }

    #[test]
    fn prefix_sharing() {
        let a = NoiseTrack::generate(1, 0, 5, (2, 2, 1));
        let b = NoiseTrack::generate(1, 1, 5, (2, 2, 1));
        let s = a.with_prefix_of(&b, 2);
        let s = s.unwrap();
        assert_eq!(s.draw(5), a.draw(5));
        assert_eq!(s.draw(4), a.draw(4));
        assert_eq!(s.draw(3), b.draw(3));
    }

    #[test]
    fn interpolation_needs_two_steps() {
        let t = NoiseTrack::generate(1, 0, 3, (2, 2, 1));
        let u = ImageGrid::zeros(2, 2, 1);
        assert!(interpolation_inputs(&u, &u, (&t, &t), 1).is_err());
    }
}
