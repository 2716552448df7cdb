//! The `ihdm` command line.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 for usage and
//! configuration errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{default_fit_range, fit_alpha, psd_1d, psd_table, AlphaFit, DEFAULT_BINS};
use crate::dataio::{load_checkpoint, load_dataset, load_png, save_montage, save_png, Checkpoint, Dataset};
use crate::elbo::{evaluate, PriorSet};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::rng::{stream_rng, Stream};
use crate::sampler::{interpolate, reverse_chains, sample_prior, NoiseTrack};
use crate::training::{TrainConfig, Trainer};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "IHDM_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleOptions {
    pub delta: f64,
    pub count: usize,
    pub columns: usize,
    pub trace: bool,
    /// Run every sample with one shared noise track.
    pub fixed_noise: bool,
    /// Number of prior states in fixed-noise mode.
    pub priors: usize,
    /// Reverse steps, counted from `K`, whose noise all samples share.
    pub shared_prefix: usize,
    /// Use the EMA weights rather than the raw ones.
    pub ema: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            delta: 0.0125,
            count: 16,
            columns: 8,
            trace: false,
            fixed_noise: false,
            priors: 8,
            shared_prefix: 0,
            ema: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub deltas: Vec<f64>,
    pub examples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            deltas: (0..=10).map(|i| (90 + 5 * i) as f64 / 10_000.0).collect(),
            examples: 100,
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub bins: usize,
    /// Half-open bin range for the α fit; defaults to all but two bins
    /// at each end.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_range: Option<[usize; 2]>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            fit_range: None,
        }
    }
}

impl AnalysisOptions {
    pub fn range(&self) -> (usize, usize) {
        self.fit_range.map_or(default_fit_range(self.bins), |[a, b]| (a, b))
    }
}

/// Everything a command reads, as written to and read from config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed of sampling and evaluation streams.
    pub seed: u64,
    pub train: TrainConfig,
    pub sample: SampleOptions,
    pub eval: EvalOptions,
    pub analysis: AnalysisOptions,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

#[derive(Debug, Parser)]
#[command(name = "ihdm", version, about = "Inverse heat dissipation models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: $IHDM_OUT/<command>, or runs/<command>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a denoiser.
    Train {
        #[command(flatten)]
        common: Common,
        /// IDX image file or directory of PNGs.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Training noise σ; 0 runs the zero-noise ablation.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Draw samples from a trained checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training images for the prior (default: the checkpoint's dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        /// Write intermediate states every ⌈K/12⌉ steps.
        #[arg(long)]
        trace: bool,
        /// Run several prior states through one shared noise track.
        #[arg(long)]
        fixed_noise: bool,
        /// Prior states in fixed-noise mode.
        #[arg(long)]
        priors: Option<usize>,
        /// Share the noise of the first N reverse steps and one prior state.
        #[arg(long)]
        shared_prefix: Option<usize>,
    },
    /// Per-example NLL bounds over a grid of δ.
    EvalNll {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation images.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Training images for the prior (default: the checkpoint's dataset).
        #[arg(long)]
        prior_dataset: Option<PathBuf>,
        /// Comma-separated δ grid.
        #[arg(long, value_delimiter = ',')]
        delta: Option<Vec<f64>>,
        #[arg(long)]
        examples: Option<usize>,
    },
    /// Radially averaged power spectra and 1/f^α fits.
    Psd {
        #[command(flatten)]
        common: Common,
        /// PNG files or directories of PNGs.
        images: Vec<PathBuf>,
        /// Analyse fresh samples of this checkpoint instead.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Interpolate between two samples.
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Sample indices of the two endpoints.
        #[arg(long, value_delimiter = ',', num_args = 1, default_value = "0,1")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 8)]
        steps: usize,
        #[arg(long)]
        delta: Option<f64>,
    },
}

/// Failures tagged with the exit code they map to.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => CliError::Usage(e.to_string()),
            e => CliError::Run(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

/// Parses `args` and runs the command, returning the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("run `ihdm --help` for usage");
            }
            e.exit_code()
        }
    }
}

fn resolve(common: &Common) -> std::result::Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, command: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| {
        std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(command)
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn open_dataset(path: &Path) -> std::result::Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("dataset {} does not exist", path.display())));
    }
    Ok(load_dataset(path)?)
}

/// Training images behind a checkpoint's prior.
fn prior_data(ckpt: &Checkpoint, dataset: Option<&PathBuf>) -> std::result::Result<Dataset, CliError> {
    let path = dataset
        .or(ckpt.meta.config.dataset.as_ref())
        .ok_or_else(|| CliError::Usage("no dataset for the prior; pass --dataset".into()))?;
    let data = open_dataset(path)?;
    Ok(match ckpt.meta.config.max_examples {
        Some(n) => data.take(n),
        None => data,
    })
}

fn weights(ckpt: &Checkpoint, ema: bool) -> &crate::neural::DenoiserParams<f32> {
    if ema {
        &ckpt.ema.shadow
    } else {
        &ckpt.params
    }
}

pub fn run(command: Command) -> std::result::Result<(), CliError> {
    match command {
        Command::Train {
            common,
            dataset,
            sigma,
            steps,
            resume,
        } => cmd_train(&common, dataset, sigma, steps, resume),
        Command::Sample {
            common,
            checkpoint,
            dataset,
            delta,
            count,
            trace,
            fixed_noise,
            priors,
            shared_prefix,
        } => {
            let mut cfg = resolve(&common)?;
            let s = &mut cfg.sample;
            s.delta = delta.unwrap_or(s.delta);
            s.count = count.unwrap_or(s.count);
            s.trace |= trace;
            s.fixed_noise |= fixed_noise;
            s.priors = priors.unwrap_or(s.priors);
            s.shared_prefix = shared_prefix.unwrap_or(s.shared_prefix);
            cmd_sample(&cfg, &checkpoint, dataset.as_ref(), &out_dir(&common, "sample"))
        }
        Command::EvalNll {
            common,
            checkpoint,
            dataset,
            prior_dataset,
            delta,
            examples,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(d) = delta {
                cfg.eval.deltas = d;
            }
            cfg.eval.examples = examples.unwrap_or(cfg.eval.examples);
            cfg.eval.dataset = dataset.or(cfg.eval.dataset);
            cmd_eval_nll(&cfg, &checkpoint, prior_dataset.as_ref(), &out_dir(&common, "eval-nll"))
        }
        Command::Psd {
            common,
            images,
            checkpoint,
            dataset,
            delta,
            count,
            bins,
        } => {
            let mut cfg = resolve(&common)?;
            cfg.analysis.bins = bins.unwrap_or(cfg.analysis.bins);
            cfg.sample.delta = delta.unwrap_or(cfg.sample.delta);
            cfg.sample.count = count.unwrap_or(cfg.sample.count);
            cmd_psd(
                &cfg,
                &images,
                checkpoint.as_ref(),
                dataset.as_ref(),
                &out_dir(&common, "psd"),
            )
        }
        Command::Interpolate {
            common,
            checkpoint,
            dataset,
            seeds,
            steps,
            delta,
        } => {
            let mut cfg = resolve(&common)?;
            cfg.sample.delta = delta.unwrap_or(cfg.sample.delta);
            if seeds.len() != 2 {
                return Err(CliError::Usage(format!(
                    "--seeds needs two values, got {}",
                    seeds.len()
                )));
            }
            if steps < 2 {
                return Err(CliError::Usage(format!("--steps must be ≥ 2, got {steps}")));
            }
            cmd_interpolate(
                &cfg,
                &checkpoint,
                dataset.as_ref(),
                (seeds[0], seeds[1]),
                steps,
                &out_dir(&common, "interpolate"),
            )
        }
    }
}

fn cmd_train(
    common: &Common,
    dataset: Option<PathBuf>,
    sigma: Option<f64>,
    steps: Option<u64>,
    resume: Option<PathBuf>,
) -> std::result::Result<(), CliError> {
    let mut cfg = resolve(common)?;
    let mut trainer = if let Some(path) = resume {
        let ckpt = load_checkpoint(&path)?;
        let data_path = dataset
            .or(ckpt.meta.config.dataset.clone())
            .ok_or_else(|| CliError::Usage("missing dataset path; pass --dataset".into()))?;
        let data = open_dataset(&data_path)?;
        let mut t = Trainer::resume(ckpt, data)?;
        if let Some(s) = steps {
            t.set_total_steps(s);
        }
        cfg.train = t.config().clone();
        t
    } else {
        let t = &mut cfg.train;
        if let Some(d) = dataset {
            t.dataset = Some(d);
        }
        if let Some(s) = sigma {
            t.sigma = s;
            if s == 0.0 {
                t.ablation = true;
            }
        }
        if let Some(s) = steps {
            t.total_steps = s;
        }
        let path = t
            .dataset
            .clone()
            .ok_or_else(|| CliError::Usage("missing dataset path; pass --dataset or set train.dataset".into()))?;
        t.validate()?;
        let data = open_dataset(&path)?;
        Trainer::new(cfg.train.clone(), data)?
    };
    let mut out = out_dir(common, "train");
    for tag in cfg.train.tags() {
        let name = out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.set_file_name(format!("{name}-{tag}"));
    }
    create_dir(&out)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    eprintln!(
        "training {} parameters on {} images for {} steps → {}",
        trainer.params().num_scalars(),
        trainer.data().len(),
        cfg.train.total_steps,
        out.display()
    );
    let every = cfg.train.log_every;
    let records = trainer.run(Some(&out), |r| {
        if r.step % every == 0 {
            eprintln!(
                "step {:>7}  loss {:.5}  lr {:.2e}  grad {:.3}",
                r.step, r.loss, r.lr, r.grad_norm
            );
        }
    })?;
    if let Some(last) = records.last() {
        println!("finished at step {} with loss {:.5}", last.step, last.loss);
    }
    println!("outputs in {}", out.display());
    Ok(())
}

/// Provenance written next to sample outputs.
#[derive(Debug, Serialize)]
struct SampleRecord {
    index: usize,
    prior_component: usize,
    noise_seed: u64,
    noise_track: u64,
}

#[derive(Debug, Serialize)]
struct SampleMeta<'a> {
    checkpoint: String,
    k_steps: usize,
    delta: f64,
    seed: u64,
    mode: &'a str,
    samples: Vec<SampleRecord>,
    config: &'a RunConfig,
}

/// Samples, their provenance, optional traces and the sampling mode.
type Drawn = (
    Vec<ImageGrid>,
    Vec<SampleRecord>,
    Option<Vec<crate::sampler::ChainTrace>>,
    &'static str,
);

fn draw_samples(cfg: &RunConfig, ckpt: &Checkpoint, prior: &PriorSet) -> Result<Drawn> {
    let s = &cfg.sample;
    let k = ckpt.meta.schedule.len();
    let shape = prior.components()[0].shape();
    let seed = cfg.seed;
    let (n, mode) = if s.fixed_noise {
        (s.priors, "fixed-noise")
    } else if s.shared_prefix > 0 {
        (s.count, "shared-prefix")
    } else {
        (s.count, "independent")
    };
    let mut inits = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    let mut tracks = Vec::with_capacity(n);
    for i in 0..n {
        let prior_index = if s.shared_prefix > 0 && !s.fixed_noise {
            0
        } else {
            i as u64
        };
        let (u, comp) = sample_prior(prior, &mut stream_rng(seed, Stream::Prior, prior_index))?;
        let track_index = if s.fixed_noise { 0 } else { i as u64 };
        let mut track = NoiseTrack::generate(seed, track_index, k, shape);
        if s.shared_prefix > 0 && !s.fixed_noise {
            track = NoiseTrack::generate(seed, 0, k, shape).with_prefix_of(&track, s.shared_prefix.min(k))?;
        }
        inits.push(u);
        records.push(SampleRecord {
            index: i,
            prior_component: comp,
            noise_seed: seed,
            noise_track: track_index,
        });
        tracks.push(track);
    }
    let refs: Vec<&NoiseTrack> = tracks.iter().collect();
    let (samples, traces) = reverse_chains(weights(ckpt, s.ema), &inits, s.delta, &refs, s.trace)?;
    Ok((samples, records, traces, mode))
}

fn cmd_sample(
    cfg: &RunConfig,
    checkpoint: &Path,
    dataset: Option<&PathBuf>,
    out: &Path,
) -> std::result::Result<(), CliError> {
    let s = &cfg.sample;
    if !(s.delta >= 0.0) {
        return Err(CliError::Usage(format!("--delta must be ≥ 0, got {}", s.delta)));
    }
    let ckpt = load_checkpoint(checkpoint)?;
    let data = prior_data(&ckpt, dataset)?;
    let prior = PriorSet::from_dataset(&data, &ckpt.meta.schedule, s.delta)?;
    let (samples, records, traces, mode) = draw_samples(cfg, &ckpt, &prior)?;
    create_dir(out)?;
    for (i, img) in samples.iter().enumerate() {
        save_png(out.join(format!("sample-{i:03}.png")), img)?;
    }
    save_montage(out.join("samples.png"), &samples, s.columns.max(1))?;
    if let Some(traces) = &traces {
        for (i, tr) in traces.iter().enumerate() {
            let dir = out.join("trace").join(format!("sample-{i:03}"));
            for (step, state) in tr.steps.iter().zip(&tr.states) {
                save_png(dir.join(format!("step-{step:04}.png")), state)?;
            }
            save_montage(dir.join("sequence.png"), &tr.states, tr.states.len())?;
        }
    }
    let meta = SampleMeta {
        checkpoint: checkpoint.display().to_string(),
        k_steps: ckpt.meta.schedule.len(),
        delta: s.delta,
        seed: cfg.seed,
        mode,
        samples: records,
        config: cfg,
    };
    write_text(
        &out.join("samples.toml"),
        &toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    println!("{} samples ({mode}) written to {}", samples.len(), out.display());
    Ok(())
}

fn cmd_eval_nll(
    cfg: &RunConfig,
    checkpoint: &Path,
    prior_dataset: Option<&PathBuf>,
    out: &Path,
) -> std::result::Result<(), CliError> {
    let e = &cfg.eval;
    if e.deltas.is_empty() || e.deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(CliError::Usage("the δ grid must be non-empty and positive".into()));
    }
    let path = e
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::Usage("missing evaluation dataset; pass --dataset".into()))?;
    let ckpt = load_checkpoint(checkpoint)?;
    let test = open_dataset(path)?;
    let train = prior_data(&ckpt, prior_dataset)?;
    let schedule = &ckpt.meta.schedule;
    let sigma = ckpt.meta.config.sigma;
    if !(sigma > 0.0) {
        return Err(CliError::Usage(
            "NLL bounds need a checkpoint trained with σ > 0".into(),
        ));
    }
    let prior = PriorSet::from_dataset(&train, schedule, e.deltas[0])?;
    let examples = &test.images()[..e.examples.min(test.len())];
    let report = evaluate(&ckpt.ema.shadow, examples, schedule, &prior, sigma, &e.deltas, cfg.seed)?;
    create_dir(out)?;
    write_text(&out.join("eval.tsv"), &report.to_tsv())?;
    #[derive(Serialize)]
    struct Summary<'a> {
        checkpoint: String,
        aggregate: &'a [crate::elbo::EvalAggregate],
        config: &'a RunConfig,
    }
    let summary = Summary {
        checkpoint: checkpoint.display().to_string(),
        aggregate: &report.aggregate,
        config: cfg,
    };
    write_text(
        &out.join("summary.toml"),
        &toml::to_string(&summary).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    println!("delta\tmean_nll_nats\tstderr\tbpd");
    for a in &report.aggregate {
        println!(
            "{}\t{:.3}\t{:.3}\t{:.5}",
            a.delta, a.mean_total, a.stderr_total, a.mean_bpd
        );
    }
    Ok(())
}

fn collect_pngs(paths: &[PathBuf]) -> std::result::Result<Vec<(String, ImageGrid)>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let data = open_dataset(p)?;
            let mut names: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| {
                    q.extension()
                        .and_then(|x| x.to_str())
                        .is_some_and(|x| x.eq_ignore_ascii_case("png"))
                })
                .collect();
            names.sort();
            for (n, img) in names.iter().zip(data.images()) {
                out.push((n.display().to_string(), img.clone()));
            }
        } else if p.exists() {
            out.push((p.display().to_string(), load_png(p)?));
        } else {
            return Err(CliError::Usage(format!("{} does not exist", p.display())));
        }
    }
    Ok(out)
}

fn cmd_psd(
    cfg: &RunConfig,
    images: &[PathBuf],
    checkpoint: Option<&PathBuf>,
    dataset: Option<&PathBuf>,
    out: &Path,
) -> std::result::Result<(), CliError> {
    let named: Vec<(String, ImageGrid)> = match checkpoint {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let data = prior_data(&ckpt, dataset)?;
            let prior = PriorSet::from_dataset(&data, &ckpt.meta.schedule, cfg.sample.delta)?;
            let (samples, ..) = draw_samples(cfg, &ckpt, &prior)?;
            samples
                .into_iter()
                .enumerate()
                .map(|(i, s)| (format!("sample-{i:03}"), s.clamped()))
                .collect()
        }
        None if images.is_empty() => {
            return Err(CliError::Usage("pass image paths or --checkpoint".into()));
        }
        None => collect_pngs(images)?,
    };
    let bins = cfg.analysis.bins;
    let range = cfg.analysis.range();
    let mut curves = Vec::with_capacity(named.len());
    let mut fits: Vec<(String, AlphaFit)> = Vec::with_capacity(named.len());
    for (name, img) in &named {
        let c = psd_1d(img, bins).map_err(|e| CliError::Usage(e.to_string()))?;
        let fit = fit_alpha(&c, range).map_err(|e| CliError::Usage(e.to_string()))?;
        fits.push((name.clone(), fit));
        curves.push(c);
    }
    create_dir(out)?;
    let series: Vec<(&str, &crate::analysis::PsdCurve)> = named.iter().map(|(n, _)| n.as_str()).zip(&curves).collect();
    if curves.windows(2).all(|w| w[0].edges == w[1].edges) {
        write_text(&out.join("psd.tsv"), &psd_table(&series)?)?;
    } else {
        for (i, s) in series.iter().enumerate() {
            write_text(
                &out.join(format!("psd-{i:03}.tsv")),
                &psd_table(std::slice::from_ref(s))?,
            )?;
        }
    }
    let mut table = String::from("# image\talpha\tintercept\tresidual\tfirst_bin\tend_bin\n");
    for (name, f) in &fits {
        table.push_str(&format!(
            "{name}\t{}\t{}\t{}\t{}\t{}\n",
            f.alpha, f.intercept, f.residual, f.range.0, f.range.1
        ));
        println!("{name}\talpha {:.3}", f.alpha);
    }
    write_text(&out.join("alpha.tsv"), &table)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    Ok(())
}

fn cmd_interpolate(
    cfg: &RunConfig,
    checkpoint: &Path,
    dataset: Option<&PathBuf>,
    seeds: (u64, u64),
    steps: usize,
    out: &Path,
) -> std::result::Result<(), CliError> {
    let delta = cfg.sample.delta;
    let ckpt = load_checkpoint(checkpoint)?;
    let data = prior_data(&ckpt, dataset)?;
    let prior = PriorSet::from_dataset(&data, &ckpt.meta.schedule, delta)?;
    let k = ckpt.meta.schedule.len();
    let shape = prior.components()[0].shape();
    let endpoint = |i: u64| -> Result<(ImageGrid, NoiseTrack)> {
        let (u, _) = sample_prior(&prior, &mut stream_rng(cfg.seed, Stream::Prior, i))?;
        Ok((u, NoiseTrack::generate(cfg.seed, i, k, shape)))
    };
    let (a, ta) = endpoint(seeds.0)?;
    let (b, tb) = endpoint(seeds.1)?;
    let frames = interpolate(weights(&ckpt, cfg.sample.ema), &a, &b, (&ta, &tb), steps, delta)?;
    create_dir(out)?;
    for (i, f) in frames.iter().enumerate() {
        save_png(out.join(format!("frame-{i:03}.png")), f)?;
    }
    save_montage(out.join("interpolation.png"), &frames, frames.len())?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    println!("{} frames written to {}", frames.len(), out.display());
    Ok(())
}
