//! Radially averaged power spectra and 1/f^α fits for the bundled
//! photographs, white noise and MNIST digits, before and after blurring.
//!
//! cargo run --release --example power_spectrum

use std::path::PathBuf;

use ihdm::analysis::{default_fit_range, fit_alpha, mean_psd, psd_1d, psd_table};
use ihdm::dataio::{load_idx, load_png};
use ihdm::rng::{normal_image, stream_rng, Stream};
use ihdm::{dissipate, ImageGrid};

fn main() -> ihdm::Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let bins = 32;
    let range = default_fit_range(bins);

    for name in ["rocket", "grass", "coins", "chelsea"] {
        let img = load_png(root.join(format!("photos/{name}.png")))?;
        let fit = fit_alpha(&psd_1d(&img, bins)?, range)?;
        let blurred = fit_alpha(&psd_1d(&dissipate(&img, 2.0)?, bins)?, range)?;
        println!(
            "{name:8} α = {:.3} (residual {:.3}); after t=2: α = {:.3}",
            fit.alpha, fit.residual, blurred.alpha
        );
    }
    let noise = normal_image(&mut stream_rng(0, Stream::Eval, 0), 128, 128, 1, 0.1);
    println!("white    α = {:+.3}", fit_alpha(&psd_1d(&noise, bins)?, range)?.alpha);

    let digits = load_idx(root.join("mnist/test-images-idx3-ubyte"))?.take(200);
    let clean = mean_psd(digits.images(), bins)?;
    let noisy: Vec<ImageGrid> = digits
        .images()
        .iter()
        .enumerate()
        .map(|(i, u)| {
            u.add_scaled(
                &normal_image(&mut stream_rng(0, Stream::Eval, i as u64), 28, 28, 1, 0.1),
                1.0,
            )
        })
        .collect();
    let noisy = mean_psd(&noisy, bins)?;
    let blurred: Vec<ImageGrid> = digits
        .images()
        .iter()
        .map(|u| dissipate(u, 2.0))
        .collect::<ihdm::Result<_>>()?;
    let blurred = mean_psd(&blurred, bins)?;
    println!("\nmean PSD of 200 digits:");
    print!(
        "{}",
        psd_table(&[("clean", &clean), ("noise 0.1", &noisy), ("blur t=2", &blurred)])?
    );
    Ok(())
}
