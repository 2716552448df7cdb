//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits non-zero if any failed.
//!
//! Trains the smoke model from scratch, so a full run takes about 15
//! minutes on one core.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use ihdm::analysis::{default_fit_range, fit_alpha, mean_psd, psd_1d};
use ihdm::cli::EvalOptions;
use ihdm::dataio::{encode_idx_images, load_checkpoint, load_idx, save_checkpoint, Checkpoint};
use ihdm::elbo::{evaluate, gaussian_kl, lk_bound, prior_overlap_sweep, PriorSet};
use ihdm::neural::denoise_one;
use ihdm::rng::{stream_rng, Stream};
use ihdm::sampler::{reverse_chain, sample_prior, NoiseTrack};
use ihdm::training::{checkpoint_name, one_step_mse, TrainConfig, Trainer};
use ihdm::{build_schedule, dct2, dissipate, idct2, Error, ImageGrid};
use rand::Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Suite {
    failed: Vec<&'static str>,
}

impl Suite {
    /// Runs one criterion; `budget` is its runtime limit in seconds, with
    /// `spent` seconds already charged to it by earlier work.
    fn run(&mut self, name: &'static str, budget: f64, spent: f64, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = spent + start.elapsed().as_secs_f64();
        let outcome = outcome.and_then(|d| {
            if secs <= budget {
                Ok(d)
            } else {
                Err(format!("{d}; over the {budget:.0} s budget"))
            }
        });
        match outcome {
            Ok(d) => println!("PASS  {name}  ({secs:.1} s)  {d}"),
            Err(d) => {
                println!("FAIL  {name}  ({secs:.1} s)  {d}");
                self.failed.push(name);
            }
        }
    }
}

fn spectral() -> Check {
    let mut worst = [0.0f64; 4];
    let mut r = rng(1);
    for (i, (h, w, c)) in [(28, 28, 1), (32, 32, 3), (17, 23, 1), (64, 48, 3)]
        .into_iter()
        .enumerate()
    {
        let u = random_image(h, w, c, i as u64);
        worst[0] = worst[0].max(idct2(&dct2(&u).unwrap()).unwrap().max_abs_diff(&u));
        for _ in 0..5 {
            let (t1, t2) = (r.random_range(0.0..100.0), r.random_range(0.0..100.0));
            let two = dissipate(&dissipate(&u, t1).unwrap(), t2).unwrap();
            worst[1] = worst[1].max(two.max_abs_diff(&dissipate(&u, t1 + t2).unwrap()));
            let d = dissipate(&u, t1).unwrap();
            for ch in 0..c {
                worst[2] = worst[2].max((d.channel_mean(ch) - u.channel_mean(ch)).abs());
            }
        }
        let d = dissipate(&u, 1e6).unwrap();
        for ch in 0..c {
            let m = u.channel_mean(ch);
            worst[3] = worst[3].max(d.plane(ch).iter().fold(0.0, |a, v| a.max((v - m).abs())));
        }
    }
    ensure(worst[0] < 1e-10, || format!("roundtrip {:.2e}", worst[0]))?;
    ensure(worst[1] < 1e-8, || format!("semigroup {:.2e}", worst[1]))?;
    ensure(worst[2] < 1e-12, || format!("mean {:.2e}", worst[2]))?;
    ensure(worst[3] < 1e-6, || format!("steady state {:.2e}", worst[3]))?;
    let mut blur = 0.0f64;
    for seed in 0..3 {
        let u = random_image(64, 64, 1, 10 + seed);
        for sigma_b in [0.5, 1.0, 1.5, 2.0] {
            let d = dissipate(&u, sigma_b * sigma_b / 2.0).unwrap();
            for (y, x, c, v) in convolve_interior(&u, &bandlimited_gaussian_taps(sigma_b, 16), 16) {
                blur = blur.max((d.get(y, x, c) - v).abs());
            }
        }
    }
    ensure(blur < 1e-2, || format!("Gaussian oracle {blur:.2e}"))?;
    Ok(format!(
        "roundtrip {:.1e}, semigroup {:.1e}, mean {:.1e}, steady {:.1e}, blur oracle {blur:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn schedule() -> Check {
    let mut worst = 0.0f64;
    for (k, lo, hi) in [(20, 0.5, 20.0), (100, 0.5, 20.0), (200, 0.5, 24.0), (7, 0.3, 2.9)] {
        let s = build_schedule(k, lo, hi).unwrap();
        let expect = (hi / lo).powf(1.0 / (k - 1) as f64);
        for w in s.sigma_b.windows(2) {
            worst = worst.max((w[1] / w[0] - expect).abs());
        }
    }
    ensure(worst < 1e-12, || format!("ratio deviation {worst:.2e}"))?;
    let s = build_schedule(3, 0.5, 2.0).unwrap();
    let fixture = s
        .sigma_b
        .iter()
        .zip([0.5, 1.0, 2.0])
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    ensure(fixture < 1e-12, || format!("K=3 fixture {:?}", s.sigma_b))?;
    Ok(format!("ratio deviation {worst:.1e}, K=3 {:?}", s.sigma_b))
}

fn autodiff() -> Check {
    let mut parts = Vec::new();
    for seed in [11, 12, 13] {
        let (worst, count) = gradient_check(seed);
        ensure(worst < 1e-3, || {
            format!("seed {seed}: {worst:.2e} over {count} entries")
        })?;
        parts.push(format!("seed {seed} {worst:.1e}/{count}"));
    }
    Ok(format!("worst relative error: {}", parts.join(", ")))
}

fn elbo_algebra() -> Check {
    for (n, s) in [(1, 0.01), (784, 0.01), (3072, 0.3)] {
        let kl = gaussian_kl(0.0, n, s, s).unwrap();
        ensure(kl == 0.0, || format!("matched KL {kl} at N={n}"))?;
    }
    let mut tightest = f64::INFINITY;
    for seed in 0..10u64 {
        let mut r = rng(seed);
        let u0 = random_image(2, 2, 1, seed);
        let comps: Vec<ImageGrid> = (0..3).map(|i| random_image(2, 2, 1, 100 + seed * 7 + i)).collect();
        let t = r.random_range(0.05..0.5);
        let sigma = r.random_range(0.05..0.4);
        let delta = r.random_range(0.05..0.4);
        let prior = PriorSet::from_components(comps.clone(), t, delta).unwrap();
        let bound = lk_bound(&u0, &prior, sigma, delta).unwrap();
        let m = dissipate(&u0, t).unwrap();
        let cs: Vec<Vec<f64>> = comps.iter().map(|c| c.values().to_vec()).collect();
        let (kl, se) = mc_mixture_kl(m.values(), sigma, &cs, delta, 100_000, 1000 + seed);
        ensure(bound >= kl - 3.0 * se, || {
            format!("mixture {seed}: bound {bound} < {kl} ± {se}")
        })?;
        tightest = tightest.min((bound - kl) / se);
    }
    Ok(format!(
        "matched KL = 0; bound ≥ MC KL on 10 mixtures, tightest margin {tightest:+.1} SE"
    ))
}

fn window_mean(records: &[ihdm::training::StepRecord]) -> f64 {
    records.iter().map(|r| r.loss).sum::<f64>() / records.len() as f64
}

fn training_smoke(out: &mut Option<Checkpoint>) -> Check {
    let (trainer, records) = train_smoke();
    let ckpt = trainer.checkpoint();
    *out = Some(ckpt.clone());
    let c = &ckpt.meta.config;
    ensure(
        trainer.data().len() == 1000 && c.k_steps == 20 && c.total_steps == 2000 && records.len() == 2000,
        || "smoke run is not 1000 images, K=20, 2000 steps".into(),
    )?;
    let (first, last) = (
        window_mean(&records[..100]),
        window_mean(&records[records.len() - 100..]),
    );
    ensure(last < 0.5 * first, || format!("loss {first:.4} → {last:.4}"))?;
    let k = trainer.schedule().len() / 2;
    let held_out = mnist_test_images(200);
    let (model, identity) = one_step_mse(trainer.params(), &held_out, trainer.schedule(), k, c.sigma, 1).unwrap();
    let (ema, _) = one_step_mse(&trainer.ema().shadow, &held_out, trainer.schedule(), k, c.sigma, 1).unwrap();
    ensure(model < identity && ema < identity, || {
        format!("held-out MSE at k={k}: model {model:.4}, EMA {ema:.4}, identity {identity:.4}")
    })?;
    Ok(format!(
        "loss {first:.4} → {last:.4} (ratio {:.3}); held-out MSE at k={k}: model {model:.4}, EMA {ema:.4}, identity {identity:.4}",
        last / first
    ))
}

fn sampler_determinism(ckpt: &Checkpoint) -> Check {
    let params = &ckpt.ema.shadow;
    let schedule = &ckpt.meta.schedule;
    let k_steps = schedule.len();
    let delta = ckpt.meta.config.sigma;
    let data = load_idx(mnist_path("train-images-idx3-ubyte")).unwrap().take(1000);
    let prior = PriorSet::from_dataset(&data, schedule, delta).unwrap();
    for i in 0..4u64 {
        let (u, _) = sample_prior(&prior, &mut stream_rng(5, Stream::Prior, i)).unwrap();
        let track = NoiseTrack::generate(5, i, k_steps, u.shape());
        let other = NoiseTrack::generate(6, i, k_steps, u.shape());
        let a = reverse_chain(params, &u, 0.0, &track, false).unwrap().sample;
        let b = reverse_chain(params, &u, 0.0, &other, false).unwrap().sample;
        ensure(a == b, || format!("chain {i}: δ=0 runs differ"))?;

        let s1 = reverse_chain(params, &u, delta, &track, false).unwrap().sample;
        let replay = NoiseTrack::from_draws(track.draws().to_vec()).unwrap();
        let s2 = reverse_chain(params, &u, delta, &replay, false).unwrap().sample;
        ensure(s1 == s2, || format!("chain {i}: replayed track differs"))?;

        let mut state = u.clone();
        for k in (2..=k_steps).rev() {
            state = denoise_one(params, &state, k).unwrap().add_scaled(track.draw(k), delta);
        }
        let last = denoise_one(params, &state, 1).unwrap();
        ensure(last == s1, || format!("chain {i}: final state is not μ_θ(u_1, 1)"))?;
    }
    Ok("4 chains: δ=0 bitwise equal across tracks, replay bitwise equal, u_0 = μ_θ(u_1, 1) exactly".into())
}

fn duality() -> Check {
    let data = load_idx(mnist_path("test-images-idx3-ubyte")).unwrap().take(100);
    let clean = mean_psd(data.images(), 32).unwrap();
    let mut noisy = Vec::new();
    for (i, u) in data.images().iter().enumerate() {
        let n = gaussian_image(28, 28, 1, 0.1, 500 + i as u64);
        noisy.push(u.add_scaled(&n, 1.0));
        noisy.push(u.add_scaled(&n, -1.0));
    }
    let noisy = mean_psd(&noisy, 32).unwrap();
    let blurred: Vec<ImageGrid> = data.images().iter().map(|u| dissipate(u, 2.0).unwrap()).collect();
    let blurred = mean_psd(&blurred, 32).unwrap();
    for b in (0..8).filter(|&b| clean.populations[b] > 0) {
        ensure(noisy.mean_power[b] > clean.mean_power[b], || {
            format!("noise did not raise bin {b}")
        })?;
    }
    for b in (24..32).filter(|&b| clean.populations[b] > 0) {
        ensure(blurred.mean_power[b] < clean.mean_power[b], || {
            format!("blur did not lower bin {b}")
        })?;
    }
    let alpha = |u: &ImageGrid| fit_alpha(&psd_1d(u, 32).unwrap(), default_fit_range(32)).unwrap().alpha;
    let mut photos = Vec::new();
    for name in PHOTOS {
        let a = alpha(&photo(name));
        ensure((1.0..=3.0).contains(&a), || format!("photo {name}: α = {a:.3}"))?;
        photos.push(format!("{name} {a:.2}"));
    }
    let white: f64 = (0..100)
        .map(|s| alpha(&gaussian_image(64, 64, 1, 1.0, 9000 + s)))
        .sum::<f64>()
        / 100.0;
    ensure(white.abs() < 0.3, || format!("white noise α = {white:.3}"))?;
    let mut field = Vec::new();
    for seed in 0..3 {
        let a = alpha(&inverse_f_field(128, seed));
        ensure((a - 2.0).abs() <= 0.2, || format!("1/f field {seed}: α = {a:.3}"))?;
        field.push(format!("{a:.2}"));
    }
    Ok(format!(
        "noise raises bins 0-7, blur lowers bins 24-31; photos α: {}; white α {white:+.3}; 1/f α {}",
        photos.join(", "),
        field.join("/")
    ))
}

fn ablations(ckpt: &Checkpoint) -> Check {
    let schedule = &ckpt.meta.schedule;
    let sigma = ckpt.meta.config.sigma;
    let train = load_idx(mnist_path("train-images-idx3-ubyte")).unwrap().take(1000);
    let test = mnist_test_images(100);
    let prior = PriorSet::from_dataset(&train, schedule, sigma).unwrap();
    let deltas = EvalOptions::default().deltas;
    let report = evaluate(&ckpt.ema.shadow, &test, schedule, &prior, sigma, &deltas, 0).unwrap();
    let best = report.best_delta().unwrap();
    let curve: Vec<String> = report
        .aggregate
        .iter()
        .map(|a| format!("{:.4}:{:.1}", a.delta, a.mean_total))
        .collect();
    ensure((0.009..=0.0115).contains(&best), || {
        format!("δ argmin {best} outside [0.009, 0.0115]; {}", curve.join(" "))
    })?;

    let c = &ckpt.meta.config;
    let sweep = prior_overlap_sweep(
        &train,
        &test,
        c.k_steps,
        c.sigma_b_min,
        &[4.0, 8.0, 16.0, 24.0],
        sigma,
        sigma,
    )
    .unwrap();
    let lk: Vec<String> = sweep.iter().map(|(s, v)| format!("{s}:{v:.1}")).collect();
    ensure(sweep.windows(2).all(|w| w[1].1 < w[0].1), || {
        format!("L_K not decreasing: {}", lk.join(" "))
    })?;

    let dir = tempfile::tempdir().unwrap();
    let config = TrainConfig {
        sigma: 0.0,
        ablation: true,
        total_steps: 100,
        checkpoint_every: 100,
        ..smoke_config()
    };
    let mut trainer = Trainer::new(config.clone(), smoke_train_data()).unwrap();
    let records = trainer.run(Some(dir.path()), |_| {}).unwrap();
    ensure(
        records.len() == 100 && records.iter().all(|r| r.loss.is_finite()),
        || "σ=0 run did not finish".into(),
    )?;
    let name = checkpoint_name(100, &config.tags());
    let saved = load_checkpoint(dir.path().join(&name)).map_err(|e| e.to_string())?;
    ensure(name.contains("sigma0") && saved.meta.tags == config.tags(), || {
        format!("σ=0 run not tagged: {name}")
    })?;
    let u = sample_prior(&prior, &mut stream_rng(0, Stream::Prior, 0)).unwrap().0;
    let track = NoiseTrack::generate(0, 0, schedule.len(), u.shape());
    let s = reverse_chain(&saved.ema.shadow, &u, 0.0, &track, false).unwrap().sample;
    ensure(s.values().iter().all(|v| v.is_finite()), || {
        "σ=0 sample not finite".into()
    })?;

    Ok(format!(
        "δ argmin {best} ({}); L_K by σ_B,max {}; σ=0 run saved as {name}",
        curve.join(" "),
        lk.join(" ")
    ))
}

fn io_exactness(ckpt: &Checkpoint) -> Check {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<Vec<u8>> = (0..3u8)
        .map(|i| (0..12u8).map(|j| i.wrapping_mul(97).wrapping_add(j * 21)).collect())
        .collect();
    let mut reference = vec![0, 0, 8, 3];
    for v in [3u32, 3, 4] {
        reference.extend(v.to_be_bytes());
    }
    reference.extend(pixels.iter().flatten());
    let path = dir.path().join("ref.idx");
    std::fs::write(&path, &reference).unwrap();
    let decoded = load_idx(&path).unwrap();
    for (img, px) in decoded.images().iter().zip(&pixels) {
        let expect: Vec<f64> = px.iter().map(|&b| b as f64 / 255.0).collect();
        ensure(img.values() == expect.as_slice(), || {
            "IDX decode differs from the reference".into()
        })?;
    }
    ensure(encode_idx_images(decoded.images()).unwrap() == reference, || {
        "IDX encode differs from the reference".into()
    })?;

    let path = dir.path().join("smoke.ckpt");
    save_checkpoint(&path, ckpt).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let bits = |c: &Checkpoint| -> Vec<u32> {
        c.params
            .tensors()
            .iter()
            .chain(c.ema.shadow.tensors())
            .flat_map(|t| t.tensor.values().iter().map(|v| v.to_bits()))
            .chain(
                c.optimizer
                    .m
                    .iter()
                    .chain(&c.optimizer.v)
                    .flatten()
                    .map(|v| v.to_bits()),
            )
            .collect()
    };
    ensure(bits(&back) == bits(ckpt) && back == *ckpt, || {
        "checkpoint roundtrip not bitwise".into()
    })?;

    let bytes = std::fs::read(&path).unwrap();
    let mut rejected = 0;
    let positions: Vec<usize> = (0..64).map(|i| bytes.len() / 2 + i * 997).collect();
    for &i in &positions {
        let mut b = bytes.clone();
        b[i] ^= 0x04;
        std::fs::write(dir.path().join("bad.ckpt"), &b).unwrap();
        match load_checkpoint(dir.path().join("bad.ckpt")) {
            Err(Error::Corrupted { .. }) => rejected += 1,
            Err(e) => return Err(format!("flip at byte {i} rejected with the wrong error: {e}")),
            Ok(_) => return Err(format!("flip at byte {i} accepted")),
        }
    }
    Ok(format!(
        "IDX encode/decode equal to reference; {} tensor values bitwise equal; {rejected}/{} flips rejected",
        bits(ckpt).len(),
        positions.len()
    ))
}

fn main() {
    let mut suite = Suite { failed: Vec::new() };
    suite.run("spectral solver", 10.0, 0.0, spectral);
    suite.run("schedule", f64::INFINITY, 0.0, schedule);
    suite.run("autodiff", 60.0, 0.0, autodiff);
    suite.run("ELBO algebra", 120.0, 0.0, elbo_algebra);

    let mut trained = None;
    let start = Instant::now();
    suite.run("training smoke", 1800.0, 0.0, || training_smoke(&mut trained));
    let smoke_secs = start.elapsed().as_secs_f64();
    let ckpt = trained.unwrap_or_else(smoke_checkpoint);

    suite.run("sampler determinism", f64::INFINITY, 0.0, || sampler_determinism(&ckpt));
    suite.run("duality and PSD", 60.0, 0.0, duality);
    suite.run("ablation trends", 7200.0, smoke_secs, || ablations(&ckpt));
    suite.run("I/O exactness", f64::INFINITY, 0.0, || io_exactness(&ckpt));

    if suite.failed.is_empty() {
        println!("acceptance: all 9 criteria passed");
    } else {
        println!("acceptance: {} failed: {}", suite.failed.len(), suite.failed.join(", "));
        std::process::exit(1);
    }
}
