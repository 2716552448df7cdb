//! Interpolates between two samples by mixing their prior states linearly
//! and their noise tracks on a great circle.
//!
//! cargo run --release --example interpolate_digits -- <checkpoint> [out-dir]

use std::path::PathBuf;

use ihdm::dataio::{load_checkpoint, load_idx, save_montage};
use ihdm::elbo::PriorSet;
use ihdm::rng::{stream_rng, Stream};
use ihdm::sampler::{interpolate, sample_prior, NoiseTrack};

fn main() -> ihdm::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = load_checkpoint(args.next().expect("usage: interpolate_digits <checkpoint> [out-dir]"))?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/interpolate_digits".into()));

    let data_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/mnist");
    let train = load_idx(data_dir.join("train-images-idx3-ubyte"))?;
    let train = train.take(ckpt.meta.config.max_examples.unwrap_or(train.len()));
    let schedule = &ckpt.meta.schedule;
    let delta = ckpt.meta.config.sigma;
    let prior = PriorSet::from_dataset(&train, schedule, delta)?;

    let mut rows = Vec::new();
    for (a, b) in [(0u64, 1u64), (2, 3), (4, 5), (6, 7)] {
        let (ua, _) = sample_prior(&prior, &mut stream_rng(0, Stream::Prior, a))?;
        let (ub, _) = sample_prior(&prior, &mut stream_rng(0, Stream::Prior, b))?;
        let ta = NoiseTrack::generate(0, a, schedule.len(), ua.shape());
        let tb = NoiseTrack::generate(0, b, schedule.len(), ub.shape());
        let frames = interpolate(&ckpt.ema.shadow, &ua, &ub, (&ta, &tb), 10, delta)?;
        let steps: Vec<String> = frames
            .windows(2)
            .map(|w| format!("{:.3}", w[0].mse(&w[1]).sqrt()))
            .collect();
        println!("{a}→{b}: RMS change per frame {}", steps.join(" "));
        rows.extend(frames);
    }
    save_montage(out.join("interpolation.png"), &rows, 10)?;
    println!("wrote {}", out.join("interpolation.png").display());
    Ok(())
}
