//! Trains the tiny denoiser on the bundled MNIST subset.
//!
//! cargo run --release --example train_mnist -- [steps] [out-dir]

use std::path::PathBuf;

use ihdm::dataio::load_idx;
use ihdm::training::{one_step_mse, TrainConfig, Trainer};

fn main() -> ihdm::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(2000, |s| s.parse().expect("steps"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/train_mnist".into()));

    let data_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/mnist");
    let train = load_idx(data_dir.join("train-images-idx3-ubyte"))?;
    let test = load_idx(data_dir.join("test-images-idx3-ubyte"))?;

    let config = TrainConfig {
        total_steps: steps,
        ..TrainConfig::smoke()
    };
    let mut trainer = Trainer::new(config, train)?;
    println!(
        "{} parameters, {} training images, K = {}",
        trainer.params().num_scalars(),
        trainer.data().len(),
        trainer.schedule().len()
    );
    let records = trainer.run(Some(&out), |r| {
        if r.step % 100 == 0 {
            println!(
                "step {:5}  loss {:.4}  grad {:.3}  {:.0}s",
                r.step, r.loss, r.grad_norm, r.wall_time
            );
        }
    })?;

    let window = 100.min(records.len());
    let mean = |rs: &[ihdm::training::StepRecord]| rs.iter().map(|r| r.loss).sum::<f64>() / rs.len() as f64;
    println!(
        "first {window} steps {:.4}, last {window} steps {:.4}",
        mean(&records[..window]),
        mean(&records[records.len() - window..])
    );
    let k = trainer.schedule().len() / 2;
    let held_out = &test.images()[..200];
    for (name, p) in [("raw", trainer.params()), ("ema", &trainer.ema().shadow)] {
        let (model, identity) = one_step_mse(p, held_out, trainer.schedule(), k, 0.01, 1)?;
        println!("{name}: held-out MSE at k={k}: model {model:.5}, identity {identity:.5}");
    }
    println!("checkpoints in {}", out.display());
    Ok(())
}
