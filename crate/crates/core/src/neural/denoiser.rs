//! The residual U-Net `μ_θ(u, k) = u + f_θ(u, k)`.

use std::f64::consts::LN_10;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

use super::graph::{Graph, NodeId};
use super::tensor::{Scalar, Tensor};

/// Shape of the denoiser.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub base_channels: usize,
    /// One entry per resolution level; level `l` runs at `1/2^l` scale.
    pub channel_mults: Vec<usize>,
    pub blocks_per_level: usize,
    pub groups: usize,
    /// Width of the sinusoidal step embedding.
    pub embed_dim: usize,
}

impl Architecture {
    /// About 234k parameters at one channel; the smoke-training network.
    pub fn tiny(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            base_channels: 16,
            channel_mults: vec![1, 2, 2],
            blocks_per_level: 1,
            groups: 4,
            embed_dim: 32,
        }
    }

    /// Smallest useful instance; used for gradient checks.
    pub fn micro(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            base_channels: 4,
            channel_mults: vec![1, 2],
            blocks_per_level: 1,
            groups: 2,
            embed_dim: 8,
        }
    }

    pub fn time_dim(&self) -> usize {
        4 * self.base_channels
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.channel_mults.len();
        if levels == 0 || self.base_channels == 0 || self.blocks_per_level == 0 {
            return Err(Error::InvalidArgument("empty architecture".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "image channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        let factor = 1usize << (levels - 1);
        if !self.height.is_multiple_of(factor) || !self.width.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "{}x{} is not divisible by 2^{} for {levels} levels",
                self.height,
                self.width,
                levels - 1
            )));
        }
        for m in &self.channel_mults {
            if !(m * self.base_channels).is_multiple_of(self.groups) {
                return Err(Error::InvalidArgument(format!(
                    "{} channels not divisible into {} groups",
                    m * self.base_channels,
                    self.groups
                )));
            }
        }
        if self.embed_dim < 4 || !self.embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidArgument("embed_dim must be even and ≥ 4".into()));
        }
        Ok(())
    }
}

/// Sinusoidal step embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepEmbedding {
    frequencies: Vec<f64>,
}

impl TimestepEmbedding {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 4 && dim.is_multiple_of(2));
        let half = dim / 2;
        let scale = 4.0 * LN_10 / (half - 1) as f64; // ln(10⁴)/(half−1)
        Self {
            frequencies: (0..half).map(|i| (-scale * i as f64).exp()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.frequencies.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// `[sin(k·ω_i)…, cos(k·ω_i)…]`
    pub fn embed(&self, k: usize) -> Vec<f64> {
        let k = k as f64;
        let sin = self.frequencies.iter().map(|w| (k * w).sin());
        let cos = self.frequencies.iter().map(|w| (k * w).cos());
        sin.chain(cos).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// All learnable tensors of `f_θ`, in a fixed creation order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams<T> {
    pub arch: Architecture,
    tensors: Vec<NamedTensor<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Fan-in-scaled uniform weights, zero biases, output layer zeroed.
    Standard,
    /// Same, but the output layer is random too (gradient checks).
    AllRandom,
}

struct Builder<'a, T> {
    rng: &'a mut ChaCha8Rng,
    init: Init,
    tensors: Vec<NamedTensor<T>>,
}

impl<T: Scalar> Builder<'_, T> {
    fn add(&mut self, name: String, tensor: Tensor<T>) {
        self.tensors.push(NamedTensor { name, tensor });
    }

    fn uniform(&mut self, shape: Vec<usize>, bound: f64) -> Tensor<T> {
        let n = shape.iter().product();
        let vals = (0..n)
            .map(|_| T::from_f64(self.rng.random_range(-bound..bound)))
            .collect();
        Tensor::new(shape, vals)
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, zero: bool) {
        let bound = 1.0 / ((cin * k * k) as f64).sqrt();
        let w = if zero {
            Tensor::zeros(vec![cout, cin, k, k])
        } else {
            self.uniform(vec![cout, cin, k, k], bound)
        };
        let b = if self.init == Init::AllRandom {
            self.uniform(vec![cout], bound)
        } else {
            Tensor::zeros(vec![cout])
        };
        self.add(format!("{name}.w"), w);
        self.add(format!("{name}.b"), b);
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize) {
        let bound = 1.0 / (din as f64).sqrt();
        let w = self.uniform(vec![dout, din], bound);
        let b = if self.init == Init::AllRandom {
            self.uniform(vec![dout], bound)
        } else {
            Tensor::zeros(vec![dout])
        };
        self.add(format!("{name}.w"), w);
        self.add(format!("{name}.b"), b);
    }

    fn norm(&mut self, name: &str, c: usize) {
        let (g, b) = if self.init == Init::AllRandom {
            let g = self.uniform(vec![c], 0.5);
            let g = Tensor::new(vec![c], g.values().iter().map(|&v| v + T::ONE).collect());
            (g, self.uniform(vec![c], 0.5))
        } else {
            (Tensor::filled(vec![c], T::ONE), Tensor::zeros(vec![c]))
        };
        self.add(format!("{name}.g"), g);
        self.add(format!("{name}.b"), b);
    }

    fn resblock(&mut self, name: &str, cin: usize, cout: usize, tdim: usize) {
        self.norm(&format!("{name}.norm1"), cin);
        self.conv(&format!("{name}.conv1"), cin, cout, 3, false);
        self.linear(&format!("{name}.temb"), tdim, cout);
        self.norm(&format!("{name}.norm2"), cout);
        self.conv(&format!("{name}.conv2"), cout, cout, 3, false);
        if cin != cout {
            self.conv(&format!("{name}.skip"), cin, cout, 1, false);
        }
    }
}

/// Walks the U-Net topology, calling `block(name, cin, cout)` for every
/// residual block; shared by parameter creation and the forward pass.
fn unet_plan(arch: &Architecture) -> Vec<(String, usize, usize)> {
    let base = arch.base_channels;
    let mut plan = Vec::new();
    let mut skip_channels = vec![base];
    let mut ch = base;
    let levels = arch.channel_mults.len();
    for (l, m) in arch.channel_mults.iter().enumerate() {
        for i in 0..arch.blocks_per_level {
            plan.push((format!("down.{l}.{i}"), ch, m * base));
            ch = m * base;
            skip_channels.push(ch);
        }
        if l + 1 < levels {
            skip_channels.push(ch);
        }
    }
    plan.push(("mid.0".into(), ch, ch));
    plan.push(("mid.1".into(), ch, ch));
    for (l, m) in arch.channel_mults.iter().enumerate().rev() {
        for i in 0..=arch.blocks_per_level {
            let skip = skip_channels.pop().expect("skip stack underflow");
            plan.push((format!("up.{l}.{i}"), ch + skip, m * base));
            ch = m * base;
        }
    }
    plan
}

impl<T: Scalar> DenoiserParams<T> {
    pub fn init(arch: Architecture, seed: u64, init: Init) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            rng: &mut rng,
            init,
            tensors: Vec::new(),
        };
        let tdim = arch.time_dim();
        b.linear("temb.0", arch.embed_dim, tdim);
        b.linear("temb.1", tdim, tdim);
        b.conv("conv_in", arch.channels, arch.base_channels, 3, false);
        for (name, cin, cout) in unet_plan(&arch) {
            b.resblock(&name, cin, cout, tdim);
        }
        b.norm("out.norm", arch.base_channels);
        b.conv("out.conv", arch.base_channels, arch.channels, 3, init == Init::Standard);
        let tensors = b.tensors;
        Ok(Self { arch, tensors })
    }

    pub fn from_tensors(arch: Architecture, tensors: Vec<NamedTensor<T>>) -> Result<Self> {
        let reference = Self::init(arch.clone(), 0, Init::Standard)?;
        if reference.tensors.len() != tensors.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} tensors for this architecture, found {}",
                reference.tensors.len(),
                tensors.len()
            )));
        }
        for (r, t) in reference.tensors.iter().zip(&tensors) {
            if r.name != t.name || r.tensor.shape() != t.tensor.shape() {
                return Err(Error::InvalidInput(format!(
                    "tensor {:?} {:?} does not match expected {:?} {:?}",
                    t.name,
                    t.tensor.shape(),
                    r.name,
                    r.tensor.shape()
                )));
            }
        }
        Ok(Self { arch, tensors })
    }

    pub fn tensors(&self) -> &[NamedTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [NamedTensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.iter_mut().find(|t| t.name == name).map(|t| &mut t.tensor)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.tensor.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.tensor.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> DenoiserParams<U> {
        DenoiserParams {
            arch: self.arch.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| NamedTensor {
                    name: t.name.clone(),
                    tensor: t.tensor.cast(),
                })
                .collect(),
        }
    }
}

/// Graph handles produced by one forward pass.
pub struct ForwardNodes {
    pub output: NodeId,
    /// One leaf per parameter tensor, in [`DenoiserParams::tensors`] order.
    pub params: Vec<NodeId>,
}

/// Stacks images into an `[B, C, H, W]` tensor.
pub fn batch_tensor<T: Scalar>(images: &[&ImageGrid]) -> Tensor<T> {
    let (h, w, c) = images[0].shape();
    let mut vals = Vec::with_capacity(images.len() * h * w * c);
    for img in images {
        vals.extend(img.values().iter().map(|&v| T::from_f64(v)));
    }
    Tensor::new(vec![images.len(), c, h, w], vals)
}

/// Splits an `[B, C, H, W]` buffer back into images.
pub fn unbatch<T: Scalar>(values: &[T], h: usize, w: usize, c: usize) -> Vec<ImageGrid> {
    values
        .chunks(h * w * c)
        .map(|chunk| {
            ImageGrid::from_planar(h, w, c, chunk.iter().map(|v| v.to_f64()).collect()).unwrap_or_else(|_| {
                // keep non-finite values visible to the caller's checks
                let mut img = ImageGrid::zeros(h, w, c);
                for (d, s) in img.values_mut().iter_mut().zip(chunk) {
                    *d = s.to_f64();
                }
                img
            })
        })
        .collect()
}

struct Ctx<'a, T: Scalar> {
    g: &'a mut Graph<T>,
    params: &'a [NodeId],
    names: &'a [NamedTensor<T>],
    groups: usize,
}

impl<T: Scalar> Ctx<'_, T> {
    fn p(&self, name: &str) -> NodeId {
        let i = self
            .names
            .iter()
            .position(|t| t.name == name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        self.params[i]
    }

    fn conv(&mut self, name: &str, x: NodeId) -> NodeId {
        let (w, b) = (self.p(&format!("{name}.w")), self.p(&format!("{name}.b")));
        self.g.conv2d(x, w, b)
    }

    fn norm(&mut self, name: &str, x: NodeId) -> NodeId {
        let (gm, bt) = (self.p(&format!("{name}.g")), self.p(&format!("{name}.b")));
        self.g.group_norm(x, gm, bt, self.groups)
    }

    fn linear(&mut self, name: &str, x: NodeId) -> NodeId {
        let (w, b) = (self.p(&format!("{name}.w")), self.p(&format!("{name}.b")));
        self.g.linear(x, w, b)
    }

    fn resblock(&mut self, name: &str, x: NodeId, temb_act: NodeId, has_skip: bool) -> NodeId {
        let h = self.norm(&format!("{name}.norm1"), x);
        let h = self.g.silu(h);
        let h = self.conv(&format!("{name}.conv1"), h);
        let t = self.linear(&format!("{name}.temb"), temb_act);
        let h = self.g.add_channel(h, t);
        let h = self.norm(&format!("{name}.norm2"), h);
        let h = self.g.silu(h);
        let h = self.conv(&format!("{name}.conv2"), h);
        let skip = if has_skip {
            self.conv(&format!("{name}.skip"), x)
        } else {
            x
        };
        self.g.add(h, skip)
    }
}

/// Records `μ_θ(x, k)` on `g`. `x` must be an `[B, C, H, W]` node and `ks`
/// holds one step index per batch item.
pub fn forward_graph<T: Scalar>(
    params: &DenoiserParams<T>,
    g: &mut Graph<T>,
    x: NodeId,
    ks: &[usize],
    trainable: bool,
) -> Result<ForwardNodes> {
    let arch = &params.arch;
    let shape = g.shape(x).to_vec();
    let expect = [ks.len(), arch.channels, arch.height, arch.width];
    if shape != expect {
        return Err(Error::ShapeMismatch {
            expected: expect.to_vec(),
            found: shape,
        });
    }
    if ks.contains(&0) {
        return Err(Error::InvalidInput("step index must be ≥ 1".into()));
    }
    let param_nodes: Vec<NodeId> = params
        .tensors
        .iter()
        .map(|t| g.leaf(t.tensor.clone(), trainable))
        .collect();

    let embedding = TimestepEmbedding::new(arch.embed_dim);
    let mut emb = Vec::with_capacity(ks.len() * arch.embed_dim);
    for &k in ks {
        emb.extend(embedding.embed(k).into_iter().map(T::from_f64));
    }
    let emb = g.leaf(Tensor::new(vec![ks.len(), arch.embed_dim], emb), false);

    let mut cx = Ctx {
        g,
        params: &param_nodes,
        names: &params.tensors,
        groups: arch.groups,
    };
    let t = cx.linear("temb.0", emb);
    let t = cx.g.silu(t);
    let t = cx.linear("temb.1", t);
    // Every block consumes SiLU(temb) through its own projection.
    let temb_act = cx.g.silu(t);

    let plan = unet_plan(arch);
    let mut plan_iter = plan.iter();
    let mut h = cx.conv("conv_in", x);
    let mut skips = vec![h];
    let levels = arch.channel_mults.len();
    for l in 0..levels {
        for _ in 0..arch.blocks_per_level {
            let (name, cin, cout) = plan_iter.next().expect("plan");
            h = cx.resblock(name, h, temb_act, cin != cout);
            skips.push(h);
        }
        if l + 1 < levels {
            h = cx.g.avg_pool2(h);
            skips.push(h);
        }
    }
    for _ in 0..2 {
        let (name, cin, cout) = plan_iter.next().expect("plan");
        h = cx.resblock(name, h, temb_act, cin != cout);
    }
    for l in (0..levels).rev() {
        for _ in 0..=arch.blocks_per_level {
            let (name, cin, cout) = plan_iter.next().expect("plan");
            let s = skips.pop().expect("skip");
            let cat = cx.g.concat(h, s);
            h = cx.resblock(name, cat, temb_act, cin != cout);
        }
        if l > 0 {
            h = cx.g.upsample2(h);
        }
    }
    let h = cx.norm("out.norm", h);
    let h = cx.g.silu(h);
    let f = cx.conv("out.conv", h);
    let output = cx.g.add(x, f);
    Ok(ForwardNodes {
        output,
        params: param_nodes,
    })
}

/// Evaluates `μ_θ` on a batch of images without recording gradients.
pub fn denoiser_forward<T: Scalar>(
    params: &DenoiserParams<T>,
    images: &[&ImageGrid],
    ks: &[usize],
) -> Result<Vec<ImageGrid>> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    if images.len() != ks.len() {
        return Err(Error::InvalidInput(format!(
            "{} images but {} step indices",
            images.len(),
            ks.len()
        )));
    }
    let (h, w, c) = images[0].shape();
    if images.iter().any(|i| i.shape() != (h, w, c)) {
        return Err(Error::InvalidInput("batch images differ in shape".into()));
    }
    let mut g = Graph::new();
    let x = g.leaf(batch_tensor::<T>(images), false);
    let out = forward_graph(params, &mut g, x, ks, false)?;
    Ok(unbatch(g.value(out.output).values(), h, w, c))
}

/// `μ_θ(u, k)` for a single image.
pub fn denoise_one<T: Scalar>(params: &DenoiserParams<T>, u: &ImageGrid, k: usize) -> Result<ImageGrid> {
    Ok(denoiser_forward(params, &[u], &[k])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_is_deterministic_and_distinct() {
        let e = TimestepEmbedding::new(16);
        assert_eq!(e.embed(3), e.embed(3));
        let all: Vec<Vec<f64>> = (1..=200).map(|k| e.embed(k)).collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                let d: f64 = all[i].iter().zip(&all[j]).map(|(a, b)| (a - b).abs()).sum();
                assert!(d > 1e-6, "k={} and k={} collide", i + 1, j + 1);
            }
        }
    }

    #[test]
    fn architecture_validation() {
        assert!(Architecture::tiny(28, 28, 1).validate().is_ok());
        assert!(Architecture::tiny(30, 28, 1).validate().is_err());
        let mut a = Architecture::micro(8, 8, 1);
        a.groups = 3;
        assert!(a.validate().is_err());
    }

    #[test]
    fn output_layer_starts_at_zero() {
        let p = DenoiserParams::<f32>::init(Architecture::micro(8, 8, 1), 1, Init::Standard).unwrap();
        assert!(p.get("out.conv.w").unwrap().values().iter().all(|&v| v == 0.0));
        assert!(p.get("out.conv.b").unwrap().values().iter().all(|&v| v == 0.0));
        assert!(p.is_finite());
    }

    #[test]
    fn micro_network_is_small() {
        let p = DenoiserParams::<f64>::init(Architecture::micro(8, 8, 1), 1, Init::AllRandom).unwrap();
        assert!(p.num_scalars() <= 10_000, "{} parameters", p.num_scalars());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = DenoiserParams::<f32>::init(Architecture::micro(8, 8, 1), 1, Init::Standard).unwrap();
        let img = ImageGrid::zeros(4, 4, 1);
        assert!(matches!(
            denoiser_forward(&p, &[&img], &[1]),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
