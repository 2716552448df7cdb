//! The training objective and loop.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{shuffled_order, Checkpoint, CheckpointMeta, Dataset, RngDescriptor, CHECKPOINT_VERSION};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::neural::{
    batch_tensor, denoiser_forward, forward_graph, AdamConfig, Architecture, DenoiserParams, EmaState, Graph, Init,
    OptimizerState, Scalar,
};
use crate::rng::{normal_image, stream_rng, Stream};
use crate::schedule::BlurSchedule;
use crate::spectral::dissipate_many;

/// Tag attached to outputs of runs with zero training noise.
pub const SIGMA_ZERO_TAG: &str = "ablation-sigma0";

/// Denoiser shape, minus the image dimensions which come from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub base_channels: usize,
    pub channel_mults: Vec<usize>,
    pub blocks_per_level: usize,
    pub groups: usize,
    pub embed_dim: usize,
    /// Weight initialization; only `"uniform-fan-in"` is implemented.
    pub init: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::tiny()
    }
}

impl ModelConfig {
    /// The CPU-friendly network used for desk-scale runs.
    pub fn tiny() -> Self {
        Self::from_architecture(&Architecture::tiny(1, 1, 1))
    }

    /// Full-width network (128 base channels, four blocks per level).
    pub fn wide(channel_mults: Vec<usize>) -> Self {
        Self {
            base_channels: 128,
            channel_mults,
            blocks_per_level: 4,
            groups: 32,
            embed_dim: 128,
            init: "uniform-fan-in".into(),
        }
    }

    pub fn from_architecture(a: &Architecture) -> Self {
        Self {
            base_channels: a.base_channels,
            channel_mults: a.channel_mults.clone(),
            blocks_per_level: a.blocks_per_level,
            groups: a.groups,
            embed_dim: a.embed_dim,
            init: "uniform-fan-in".into(),
        }
    }

    pub fn architecture(&self, height: usize, width: usize, channels: usize) -> Result<Architecture> {
        if self.init != "uniform-fan-in" {
            return Err(Error::Config(format!("unknown init scheme {:?}", self.init)));
        }
        let arch = Architecture {
            height,
            width,
            channels,
            base_channels: self.base_channels,
            channel_mults: self.channel_mults.clone(),
            blocks_per_level: self.blocks_per_level,
            groups: self.groups,
            embed_dim: self.embed_dim,
        };
        arch.validate()?;
        Ok(arch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// IDX image file or directory of PNGs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Use only the first `n` items of the dataset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_examples: Option<usize>,
    pub k_steps: usize,
    /// Training noise std σ.
    pub sigma: f64,
    pub sigma_b_min: f64,
    pub sigma_b_max: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub ema_rate: f64,
    pub seed: u64,
    pub log_every: u64,
    pub checkpoint_every: u64,
    /// Permits `sigma = 0`.
    pub ablation: bool,
    pub optimizer: AdamConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::mnist()
    }
}

impl TrainConfig {
    /// MNIST settings: K = 100, σ_B,max = 20, lr 1e-4, batch 128.
    pub fn mnist() -> Self {
        Self {
            dataset: None,
            max_examples: None,
            k_steps: 100,
            sigma: 0.01,
            sigma_b_min: 0.5,
            sigma_b_max: 20.0,
            batch_size: 128,
            total_steps: 100_000,
            ema_rate: 0.999,
            seed: 0,
            log_every: 50,
            checkpoint_every: 1000,
            ablation: false,
            optimizer: AdamConfig::default(),
            model: ModelConfig::wide(vec![1, 2, 2]),
        }
    }

    /// CIFAR-10 settings: K = 200, σ_B,max = 24, lr 2e-4.
    pub fn cifar10() -> Self {
        Self {
            k_steps: 200,
            sigma_b_max: 24.0,
            total_steps: 400_000,
            optimizer: AdamConfig {
                lr: 2e-4,
                ..AdamConfig::default()
            },
            model: ModelConfig::wide(vec![1, 2, 2, 2]),
            ..Self::mnist()
        }
    }

    /// A run that finishes in minutes on one CPU core: 1000 digits, K = 20,
    /// the tiny network, 2000 steps.
    pub fn smoke() -> Self {
        Self {
            max_examples: Some(1000),
            k_steps: 20,
            batch_size: 16,
            total_steps: 2000,
            ema_rate: 0.995,
            checkpoint_every: 1000,
            optimizer: AdamConfig {
                lr: 1e-3,
                warmup_steps: 100,
                ..AdamConfig::default()
            },
            model: ModelConfig::tiny(),
            ..Self::mnist()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be finite and ≥ 0, got {}", self.sigma));
        }
        if self.sigma == 0.0 && !self.ablation {
            return fail("sigma = 0 is only allowed with ablation = true".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.ema_rate) {
            return fail(format!("ema_rate must lie in [0, 1), got {}", self.ema_rate));
        }
        if self.log_every == 0 || self.checkpoint_every == 0 {
            return fail("log_every and checkpoint_every must be positive".into());
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.clip_norm > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return fail("optimizer hyperparameters out of range".into());
        }
        self.schedule().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<BlurSchedule> {
        BlurSchedule::new(self.k_steps, self.sigma_b_min, self.sigma_b_max)
    }

    /// Tags describing this run in output names and metadata.
    pub fn tags(&self) -> Vec<String> {
        if self.sigma == 0.0 {
            vec![SIGMA_ZERO_TAG.to_string()]
        } else {
            Vec::new()
        }
    }
}

/// Clean images, sampled step indices, blurred pairs and input noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub u0: Vec<ImageGrid>,
    pub ks: Vec<usize>,
    /// `F(t_k) u₀`
    pub u_k: Vec<ImageGrid>,
    /// `F(t_{k−1}) u₀`, the regression target.
    pub u_prev: Vec<ImageGrid>,
    pub noise: Vec<ImageGrid>,
}

impl TrainingBatch {
    /// Draws `k ~ U{1..K}` and `ε ~ N(0, σ²I)` independently per example.
    pub fn sample(u0: Vec<ImageGrid>, schedule: &BlurSchedule, sigma: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut ks = Vec::with_capacity(u0.len());
        let mut noise = Vec::with_capacity(u0.len());
        for img in &u0 {
            let (h, w, c) = img.shape();
            ks.push(rng.random_range(1..=schedule.len()));
            noise.push(normal_image(rng, h, w, c, sigma));
        }
        Self::from_parts(u0, ks, noise, schedule)
    }

    pub fn from_parts(
        u0: Vec<ImageGrid>,
        ks: Vec<usize>,
        noise: Vec<ImageGrid>,
        schedule: &BlurSchedule,
    ) -> Result<Self> {
        if ks.len() != u0.len() || noise.len() != u0.len() {
            return Err(Error::InvalidInput("batch parts differ in length".into()));
        }
        let mut u_k = Vec::with_capacity(u0.len());
        let mut u_prev = Vec::with_capacity(u0.len());
        for ((img, &k), eps) in u0.iter().zip(&ks).zip(&noise) {
            if !(1..=schedule.len()).contains(&k) {
                return Err(Error::InvalidInput(format!(
                    "step index {k} outside 1..={}",
                    schedule.len()
                )));
            }
            if !eps.same_shape(img) {
                return Err(Error::InvalidInput("noise and image differ in shape".into()));
            }
            let mut pair = dissipate_many(img, &[schedule.time(k - 1), schedule.time(k)])?;
            u_k.push(pair.pop().expect("two times"));
            u_prev.push(if k == 1 {
                img.clone()
            } else {
                pair.pop().expect("two times")
            });
        }
        Ok(Self {
            u0,
            ks,
            u_k,
            u_prev,
            noise,
        })
    }

    pub fn len(&self) -> usize {
        self.u0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u0.is_empty()
    }

    /// Network inputs `û_k = u_k + ε`.
    pub fn noisy_inputs(&self) -> Vec<ImageGrid> {
        self.u_k
            .iter()
            .zip(&self.noise)
            .map(|(u, e)| u.add_scaled(e, 1.0))
            .collect()
    }
}

/// Sum and count of per-example losses at one step index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KStat {
    pub count: usize,
    pub sum: f64,
}

impl KStat {
    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Batch mean of `‖μ_θ(û_k, k) − u_{k−1}‖²`.
    pub loss: f64,
    pub per_example: Vec<f64>,
    pub per_k: BTreeMap<usize, KStat>,
}

fn report(per_example: Vec<f64>, ks: &[usize], loss: f64) -> Result<LossReport> {
    if !loss.is_finite() || per_example.iter().any(|v| !v.is_finite()) {
        let mut bad: Vec<usize> = ks
            .iter()
            .zip(&per_example)
            .filter(|(_, v)| !v.is_finite())
            .map(|(&k, _)| k)
            .collect();
        if bad.is_empty() {
            bad = ks.to_vec();
        }
        return Err(Error::NonFiniteLoss { ks: bad });
    }
    let mut per_k: BTreeMap<usize, KStat> = BTreeMap::new();
    for (&k, &v) in ks.iter().zip(&per_example) {
        let e = per_k.entry(k).or_default();
        e.count += 1;
        e.sum += v;
    }
    Ok(LossReport {
        loss,
        per_example,
        per_k,
    })
}

fn squared_errors<T: Scalar>(out: &[T], targets: &[ImageGrid]) -> Vec<f64> {
    let n = targets.first().map_or(0, ImageGrid::len);
    out.chunks(n.max(1))
        .zip(targets)
        .map(|(o, t)| o.iter().zip(t.values()).map(|(a, b)| (a.to_f64() - b).powi(2)).sum())
        .collect()
}

/// The objective without gradients.
pub fn compute_loss<T: Scalar>(params: &DenoiserParams<T>, batch: &TrainingBatch) -> Result<LossReport> {
    let inputs = batch.noisy_inputs();
    let refs: Vec<&ImageGrid> = inputs.iter().collect();
    let out = denoiser_forward(params, &refs, &batch.ks)?;
    let per_example: Vec<f64> = out
        .iter()
        .zip(&batch.u_prev)
        .map(|(o, t)| o.squared_distance(t))
        .collect();
    let loss = per_example.iter().sum::<f64>() / per_example.len().max(1) as f64;
    report(per_example, &batch.ks, loss)
}

/// The objective and its gradient with respect to every parameter tensor.
pub fn loss_and_grads<T: Scalar>(
    params: &DenoiserParams<T>,
    batch: &TrainingBatch,
) -> Result<(LossReport, Vec<Vec<T>>)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let inputs = batch.noisy_inputs();
    let refs: Vec<&ImageGrid> = inputs.iter().collect();
    let mut g = Graph::new();
    let x = g.leaf(batch_tensor::<T>(&refs), false);
    let nodes = forward_graph(params, &mut g, x, &batch.ks, true)?;
    let target: Vec<T> = batch
        .u_prev
        .iter()
        .flat_map(|u| u.values().iter().map(|&v| T::from_f64(v)))
        .collect();
    let per_example = squared_errors(g.value(nodes.output).values(), &batch.u_prev);
    let loss_node = g.squared_error(nodes.output, target);
    let loss = g.value(loss_node).values()[0].to_f64();
    let rep = report(per_example, &batch.ks, loss)?;
    g.backward(loss_node)?;
    let grads = nodes
        .params
        .iter()
        .map(|&p| g.take_grad(p).expect("trainable leaf has a gradient"))
        .collect();
    Ok((rep, grads))
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step number.
    pub step: u64,
    /// Seconds since the trainer was created.
    pub wall_time: f64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub applied: bool,
}

/// Owns the parameters, optimizer and EMA of one run.
pub struct Trainer {
    config: TrainConfig,
    schedule: BlurSchedule,
    data: Dataset,
    params: DenoiserParams<f32>,
    ema: EmaState<f32>,
    optimizer: OptimizerState<f32>,
    step: u64,
    epoch_order: Option<(u64, Vec<usize>)>,
    started: Instant,
}

impl Trainer {
    pub fn new(config: TrainConfig, data: Dataset) -> Result<Self> {
        config.validate()?;
        let data = prepare_data(&config, data)?;
        let (h, w, c) = data.shape().expect("non-empty");
        let arch = config.model.architecture(h, w, c)?;
        let params = DenoiserParams::init(arch, config.seed, Init::Standard)?;
        let ema = EmaState::new(&params, config.ema_rate);
        let optimizer = OptimizerState::new(config.optimizer.clone(), &params);
        Ok(Self {
            schedule: config.schedule()?,
            config,
            data,
            params,
            ema,
            optimizer,
            step: 0,
            epoch_order: None,
            started: Instant::now(),
        })
    }

    /// Continues a run from `ckpt`; the data must be the same dataset.
    pub fn resume(ckpt: Checkpoint, data: Dataset) -> Result<Self> {
        let config = ckpt.meta.config.clone();
        config.validate()?;
        let data = prepare_data(&config, data)?;
        let a = &ckpt.params.arch;
        if data.shape() != Some((a.height, a.width, a.channels)) {
            return Err(Error::InvalidInput(format!(
                "dataset shape {:?} does not match the checkpoint's {:?}",
                data.shape(),
                (a.height, a.width, a.channels)
            )));
        }
        Ok(Self {
            schedule: ckpt.meta.schedule.clone(),
            config,
            data,
            params: ckpt.params,
            ema: ckpt.ema,
            optimizer: ckpt.optimizer,
            step: ckpt.meta.step,
            epoch_order: None,
            started: Instant::now(),
        })
    }

    /// Extends or shortens the run; `run` stops once `step` reaches it.
    pub fn set_total_steps(&mut self, total: u64) {
        self.config.total_steps = total;
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn schedule(&self) -> &BlurSchedule {
        &self.schedule
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn params(&self) -> &DenoiserParams<f32> {
        &self.params
    }

    pub fn ema(&self) -> &EmaState<f32> {
        &self.ema
    }

    pub fn optimizer(&self) -> &OptimizerState<f32> {
        &self.optimizer
    }

    /// Steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// The batch used by 0-based step `step`; depends only on the seed,
    /// the data and `step`.
    pub fn batch_for_step(&mut self, step: u64) -> Result<TrainingBatch> {
        let n = self.data.len() as u64;
        let b = self.config.batch_size as u64;
        let mut u0 = Vec::with_capacity(b as usize);
        for j in 0..b {
            let g = step * b + j;
            let epoch = g / n;
            if self.epoch_order.as_ref().is_none_or(|(e, _)| *e != epoch) {
                self.epoch_order = Some((epoch, shuffled_order(n as usize, self.config.seed, epoch)));
            }
            let order = &self.epoch_order.as_ref().expect("just set").1;
            u0.push(self.data.get(order[(g % n) as usize]).clone());
        }
        let mut rng = stream_rng(self.config.seed, Stream::Train, step);
        TrainingBatch::sample(u0, &self.schedule, self.config.sigma, &mut rng)
    }

    /// One optimization step.
    pub fn train_step(&mut self) -> Result<StepRecord> {
        let batch = self.batch_for_step(self.step)?;
        let (rep, grads) = loss_and_grads(&self.params, &batch)?;
        let sr = self.optimizer.adam_step(&mut self.params, &grads);
        if sr.applied {
            self.ema.update(&self.params);
        }
        self.step += 1;
        Ok(StepRecord {
            step: self.step,
            wall_time: self.started.elapsed().as_secs_f64(),
            loss: rep.loss,
            lr: sr.lr,
            grad_norm: sr.grad_norm,
            applied: sr.applied,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            meta: CheckpointMeta {
                format_version: CHECKPOINT_VERSION,
                step: self.step,
                optimizer_step: self.optimizer.step,
                tags: self.config.tags(),
                rng: RngDescriptor {
                    algorithm: "chacha8".into(),
                    seed: self.config.seed,
                    next_step: self.step,
                },
                config: self.config.clone(),
                architecture: self.params.arch.clone(),
                schedule: self.schedule.clone(),
            },
            params: self.params.clone(),
            ema: self.ema.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    /// Trains until `config.total_steps`, appending metrics and writing
    /// checkpoints under `out` when given. `on_record` sees every step.
    ///
    /// A non-finite loss writes `abort-<step>.ckpt` and returns the error.
    pub fn run(&mut self, out: Option<&Path>, mut on_record: impl FnMut(&StepRecord)) -> Result<Vec<StepRecord>> {
        let mut records = Vec::new();
        let mut log = match out {
            Some(dir) => Some(MetricsLog::open(&dir.join("metrics.jsonl"))?),
            None => None,
        };
        while self.step < self.config.total_steps {
            let rec = match self.train_step() {
                Ok(r) => r,
                Err(e @ Error::NonFiniteLoss { .. }) => {
                    if let Some(dir) = out {
                        let path = dir.join(format!("abort-{:07}.ckpt", self.step));
                        crate::dataio::save_checkpoint(&path, &self.checkpoint())?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            on_record(&rec);
            let last = rec.step == self.config.total_steps;
            if let Some(log) = log.as_mut() {
                if rec.step % self.config.log_every == 0 || last {
                    log.append(&rec)?;
                }
            }
            if let Some(dir) = out {
                if rec.step % self.config.checkpoint_every == 0 || last {
                    let name = checkpoint_name(rec.step, &self.config.tags());
                    crate::dataio::save_checkpoint(dir.join(name), &self.checkpoint())?;
                }
            }
            records.push(rec);
        }
        Ok(records)
    }
}

/// `step-0002000.ckpt`, or `step-0002000-ablation-sigma0.ckpt` for tagged runs.
pub fn checkpoint_name(step: u64, tags: &[String]) -> String {
    let mut name = format!("step-{step:07}");
    for t in tags {
        name.push('-');
        name.push_str(t);
    }
    name.push_str(".ckpt");
    name
}

fn prepare_data(config: &TrainConfig, data: Dataset) -> Result<Dataset> {
    let data = match config.max_examples {
        Some(n) => data.take(n),
        None => data,
    };
    if data.is_empty() {
        return Err(Error::EmptyDataset(data.source().to_string()));
    }
    Ok(data)
}

/// Append-only JSON-lines metrics file.
pub struct MetricsLog {
    file: std::fs::File,
    path: PathBuf,
}

impl MetricsLog {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, rec: &StepRecord) -> Result<()> {
        use std::io::Write;
        let line = serde_json::to_string(rec).expect("record serializes");
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<StepRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format {
                context: path.display().to_string(),
                offset: i as u64,
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Mean per-image squared error of one-step predictions at step `k`, for
/// the network and for the identity map `μ(u) = u`, with inputs noised
/// by `σ` from the `Eval` stream of `seed`.
pub fn one_step_mse<T: Scalar>(
    params: &DenoiserParams<T>,
    images: &[ImageGrid],
    schedule: &BlurSchedule,
    k: usize,
    sigma: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let (mut model, mut identity) = (0.0, 0.0);
    for chunk_start in (0..images.len()).step_by(32) {
        let chunk = &images[chunk_start..(chunk_start + 32).min(images.len())];
        let mut noise = Vec::with_capacity(chunk.len());
        for (i, img) in chunk.iter().enumerate() {
            let (h, w, c) = img.shape();
            let mut rng = stream_rng(seed, Stream::Eval, (chunk_start + i) as u64);
            noise.push(normal_image(&mut rng, h, w, c, sigma));
        }
        let batch = TrainingBatch::from_parts(chunk.to_vec(), vec![k; chunk.len()], noise, schedule)?;
        model += compute_loss(params, &batch)?.per_example.iter().sum::<f64>();
        identity += batch
            .noisy_inputs()
            .iter()
            .zip(&batch.u_prev)
            .map(|(a, b)| a.squared_distance(b))
            .sum::<f64>();
    }
    let n = images.len().max(1) as f64;
    Ok((model / n, identity / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for c in [TrainConfig::mnist(), TrainConfig::cifar10(), TrainConfig::smoke()] {
            c.validate().unwrap();
        }
        assert_eq!(TrainConfig::cifar10().schedule().unwrap().terminal_time(), 288.0);
    }

    #[test]
    fn sigma_zero_needs_ablation() {
        let mut c = TrainConfig::smoke();
        c.sigma = 0.0;
        assert!(c.validate().is_err());
        c.ablation = true;
        c.validate().unwrap();
        assert_eq!(c.tags(), vec![SIGMA_ZERO_TAG.to_string()]);
        assert_eq!(checkpoint_name(20, &c.tags()), "step-0000020-ablation-sigma0.ckpt");
    }

    #[test]
    fn config_toml_roundtrip_and_partial() {
        let c = TrainConfig::smoke();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<TrainConfig>(&text).unwrap(), c);
        let partial: TrainConfig = toml::from_str("k_steps = 7\n[optimizer]\nlr = 0.5\n").unwrap();
        assert_eq!(partial.k_steps, 7);
        assert_eq!(partial.optimizer.lr, 0.5);
        assert_eq!(partial.optimizer.beta2, 0.999);
        assert!(toml::from_str::<TrainConfig>("k_stepz = 7").is_err());
    }
}
