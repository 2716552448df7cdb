//! NLL bound of held-out digits over a grid of sampling-noise levels δ.
//!
//! cargo run --release --example delta_sweep -- <checkpoint> [examples]

use std::path::PathBuf;

use ihdm::dataio::{load_checkpoint, load_idx};
use ihdm::elbo::{evaluate, PriorSet};

fn main() -> ihdm::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = load_checkpoint(args.next().expect("usage: delta_sweep <checkpoint> [examples]"))?;
    let count: usize = args.next().map_or(100, |s| s.parse().expect("examples"));

    let data_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/mnist");
    let mut train = load_idx(data_dir.join("train-images-idx3-ubyte"))?;
    if let Some(n) = ckpt.meta.config.max_examples {
        train = train.take(n);
    }
    let test = load_idx(data_dir.join("test-images-idx3-ubyte"))?;
    let schedule = &ckpt.meta.schedule;
    let sigma = ckpt.meta.config.sigma;
    let prior = PriorSet::from_dataset(&train, schedule, sigma)?;

    let deltas: Vec<f64> = (0..=10).map(|i| 0.009 + 0.0005 * i as f64).collect();
    let report = evaluate(
        &ckpt.ema.shadow,
        &test.images()[..count],
        schedule,
        &prior,
        sigma,
        &deltas,
        0,
    )?;
    println!("delta     mean NLL bound (nats)   bits/dim");
    for a in &report.aggregate {
        println!(
            "{:.4}    {:12.2} ± {:6.2}    {:.4}",
            a.delta, a.mean_total, a.stderr_total, a.mean_bpd
        );
    }
    println!("best δ = {:.4}", report.best_delta().expect("non-empty grid"));
    Ok(())
}
