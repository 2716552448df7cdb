//! Input gradients of single output pixels along a sampling chain: how far
//! each reverse step looks when it updates one pixel.
//!
//! cargo run --release --example gradient_probe -- <checkpoint> [out-dir]

use std::path::PathBuf;

use ihdm::analysis::{abs_normalized, input_gradient_probe, window_mass_fraction};
use ihdm::dataio::{load_checkpoint, load_idx, save_montage};
use ihdm::elbo::PriorSet;
use ihdm::rng::{stream_rng, Stream};
use ihdm::sampler::{reverse_chain, sample_prior, NoiseTrack};

fn main() -> ihdm::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = load_checkpoint(args.next().expect("usage: gradient_probe <checkpoint> [out-dir]"))?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/gradient_probe".into()));

    let data_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/mnist");
    let train = load_idx(data_dir.join("train-images-idx3-ubyte"))?;
    let train = train.take(ckpt.meta.config.max_examples.unwrap_or(train.len()));
    let schedule = &ckpt.meta.schedule;
    let delta = ckpt.meta.config.sigma;
    let prior = PriorSet::from_dataset(&train, schedule, delta)?;
    let (u, _) = sample_prior(&prior, &mut stream_rng(0, Stream::Prior, 0))?;
    let track = NoiseTrack::generate(0, 0, schedule.len(), u.shape());
    let chain = reverse_chain(&ckpt.ema.shadow, &u, delta, &track, true)?;
    let trace = chain.trace.expect("trace requested");

    let (py, px) = (u.height() / 2, u.width() / 2);
    let mut maps = Vec::new();
    println!("step  L1 mass inside 5×5 / 9×9 around ({py},{px})");
    for (&k, state) in trace.steps.iter().zip(&trace.states) {
        if k == 0 {
            continue;
        }
        let g = input_gradient_probe(&ckpt.ema.shadow, state, k, (py, px, 0))?;
        println!(
            "{k:4}  {:.3} / {:.3}",
            window_mass_fraction(&g, py, px, 5),
            window_mass_fraction(&g, py, px, 9)
        );
        maps.push(abs_normalized(&g));
    }
    let columns = maps.len();
    let mut tiles = trace.states[..columns].to_vec();
    tiles.extend(maps);
    save_montage(out.join("probe.png"), &tiles, columns)?;
    println!(
        "states (top) and |gradient| maps (bottom) in {}",
        out.join("probe.png").display()
    );
    Ok(())
}
