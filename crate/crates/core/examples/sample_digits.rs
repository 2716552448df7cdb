//! Draws digits from a trained checkpoint at several sampling-noise levels
//! and writes one montage per level.
//!
//! cargo run --release --example sample_digits -- <checkpoint> [out-dir]

use std::path::PathBuf;

use ihdm::dataio::{load_checkpoint, load_idx, save_montage};
use ihdm::elbo::PriorSet;
use ihdm::rng::{stream_rng, Stream};
use ihdm::sampler::{reverse_chains, sample_prior, NoiseTrack};

fn main() -> ihdm::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = load_checkpoint(args.next().expect("usage: sample_digits <checkpoint> [out-dir]"))?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/sample_digits".into()));

    let data_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/mnist");
    let train = load_idx(data_dir.join("train-images-idx3-ubyte"))?;
    let train = train.take(ckpt.meta.config.max_examples.unwrap_or(train.len()));
    let schedule = &ckpt.meta.schedule;
    let sigma = ckpt.meta.config.sigma;
    let seed = 0;
    let count = 16;

    for delta in [0.0, sigma, 1.25 * sigma] {
        let prior = PriorSet::from_dataset(&train, schedule, delta)?;
        let mut inits = Vec::new();
        let mut tracks = Vec::new();
        for i in 0..count {
            let (u, _) = sample_prior(&prior, &mut stream_rng(seed, Stream::Prior, i))?;
            tracks.push(NoiseTrack::generate(seed, i, schedule.len(), u.shape()));
            inits.push(u);
        }
        let refs: Vec<&NoiseTrack> = tracks.iter().collect();
        let (samples, _) = reverse_chains(&ckpt.ema.shadow, &inits, delta, &refs, false)?;
        let path = out.join(format!("delta-{delta:.4}.png"));
        save_montage(&path, &samples, 8)?;
        println!("δ = {delta:.4}: {}", path.display());
    }
    Ok(())
}
