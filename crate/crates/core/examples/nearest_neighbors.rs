//! Generated digits next to their closest training images, to check the
//! model is not reproducing its training set.
//!
//! cargo run --release --example nearest_neighbors -- <checkpoint> [out-dir]

use std::path::PathBuf;

use ihdm::analysis::nearest_neighbors;
use ihdm::dataio::{load_checkpoint, load_idx, save_montage};
use ihdm::elbo::PriorSet;
use ihdm::rng::{stream_rng, Stream};
use ihdm::sampler::{reverse_chain, sample_prior, NoiseTrack};

fn main() -> ihdm::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = load_checkpoint(args.next().expect("usage: nearest_neighbors <checkpoint> [out-dir]"))?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/nearest_neighbors".into()));

    let data_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/mnist");
    let train = load_idx(data_dir.join("train-images-idx3-ubyte"))?;
    let train = train.take(ckpt.meta.config.max_examples.unwrap_or(train.len()));
    let schedule = &ckpt.meta.schedule;
    let delta = ckpt.meta.config.sigma;
    let prior = PriorSet::from_dataset(&train, schedule, delta)?;

    let neighbours = 5;
    let mut tiles = Vec::new();
    for i in 0..6 {
        let (u, comp) = sample_prior(&prior, &mut stream_rng(0, Stream::Prior, i))?;
        let track = NoiseTrack::generate(0, i, schedule.len(), u.shape());
        let sample = reverse_chain(&ckpt.ema.shadow, &u, delta, &track, false)?
            .sample
            .clamped();
        let nn = nearest_neighbors(&sample, &train, neighbours)?;
        let found: Vec<String> = nn.iter().map(|n| format!("#{} ({:.2})", n.index, n.distance)).collect();
        println!("sample {i} (prior from #{comp}): {}", found.join(", "));
        tiles.push(sample);
        tiles.extend(nn.iter().map(|n| train.get(n.index).clone()));
    }
    save_montage(out.join("neighbors.png"), &tiles, neighbours + 1)?;
    println!("wrote {}", out.join("neighbors.png").display());
    Ok(())
}
