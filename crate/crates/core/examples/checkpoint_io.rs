//! Saves, reloads and inspects a checkpoint, then shows that a single
//! flipped byte is caught on load.
//!
//! cargo run --release --example checkpoint_io -- [checkpoint]

use ihdm::dataio::{decode_container, load_checkpoint, save_checkpoint, Checkpoint, Dataset};
use ihdm::rng::{normal_image, stream_rng, Stream};
use ihdm::training::{ModelConfig, TrainConfig, Trainer};

fn fresh() -> ihdm::Result<Checkpoint> {
    let images = (0..16)
        .map(|i| normal_image(&mut stream_rng(0, Stream::Data, i), 8, 8, 1, 0.2).map(|v| (v + 0.5).clamp(0.0, 1.0)))
        .collect();
    let config = TrainConfig {
        k_steps: 6,
        sigma_b_max: 4.0,
        batch_size: 4,
        model: ModelConfig {
            base_channels: 4,
            channel_mults: vec![1, 2],
            groups: 2,
            embed_dim: 8,
            ..ModelConfig::tiny()
        },
        ..TrainConfig::smoke()
    };
    let mut trainer = Trainer::new(config, Dataset::new(images, "noise")?)?;
    for _ in 0..5 {
        trainer.train_step()?;
    }
    Ok(trainer.checkpoint())
}

fn main() -> ihdm::Result<()> {
    let ckpt = match std::env::args().nth(1) {
        Some(path) => load_checkpoint(path)?,
        None => fresh()?,
    };
    let dir = std::env::temp_dir().join(format!("checkpoint_io-{}", std::process::id()));
    let path = dir.join("copy.ckpt");
    save_checkpoint(&path, &ckpt)?;
    let bytes = std::fs::read(&path).expect("read back");

    let (metadata, records) = decode_container(&bytes, "copy.ckpt")?;
    println!(
        "{} bytes, {} tensor records; metadata:\n{metadata}",
        bytes.len(),
        records.len()
    );
    for r in records.iter().take(6) {
        println!("  {:32} {:?} {:?}", r.name, r.dtype, r.dims);
    }

    let back = load_checkpoint(&path)?;
    println!("reloaded checkpoint equal to the original: {}", back == ckpt);

    let mut corrupt = bytes.clone();
    let i = corrupt.len() - 100;
    corrupt[i] ^= 1;
    match Checkpoint::from_bytes(&corrupt, "corrupt.ckpt") {
        Ok(_) => println!("flipped byte {i} went unnoticed"),
        Err(e) => println!("flipped byte {i}: {e}"),
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
