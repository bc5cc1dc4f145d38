//! Trains on simulated students and compares against the reference baselines.
//!
//! ```text
//! cargo run --release --example synthetic_benchmark -- [epochs] [seed] [levels] [streak_bonus] [batch_size] [init_mastery] [stickiness] [patience] [learn_rate]
//! ```

use plkt::dataio::{generate_synthetic, segment_sequences, split_dataset, SynthParams};
use plkt::metrics::{auc, baselines};
use plkt::training::{evaluate, fit, TrainConfig};

fn main() -> plkt::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let epochs: usize = arg(1, "30").parse().expect("epochs");
    let seed: u64 = arg(2, "0").parse().expect("seed");
    let levels: usize = arg(3, "3").parse().expect("levels");
    let streak_bonus: f64 = arg(4, "0").parse().expect("streak_bonus");
    let batch_size: usize = arg(5, "32").parse().expect("batch_size");
    let init_mastery: f64 = arg(6, "0.5").parse().expect("init_mastery");
    let concept_stickiness: f64 = arg(7, "0").parse().expect("stickiness");
    let patience: usize = arg(8, "5").parse().expect("patience");
    let learn_rate: f64 = arg(9, "0.2").parse().expect("learn_rate");

    let data = generate_synthetic(&SynthParams {
        seed,
        streak_bonus,
        init_mastery,
        concept_stickiness,
        learn_rate,
        ..SynthParams::default()
    })?;
    let config = TrainConfig {
        dim: 32,
        levels,
        lambda: 0.7,
        max_len: 50,
        global_hidden: 64,
        dropout: 0.1,
        batch_size,
        patience,
        max_epochs: epochs,
        seed,
        ..TrainConfig::default()
    };
    let split = split_dataset(&data.sequences, seed, 0)?;
    let train = segment_sequences(&split.train, config.max_len);
    let validation = segment_sequences(&split.validation, config.max_len);
    let test = segment_sequences(&split.test, config.max_len);

    let started = std::time::Instant::now();
    let fitted = fit(&data, &train, &validation, &config)?;
    let result = evaluate(&fitted.model, &test)?;
    let (p, l) = baselines::concept_running_mean(&train, &test);
    let running_mean = auc(&p, &l)?;
    let (p, l) = baselines::majority_class(&train, &test);
    let majority = auc(&p, &l)?;
    println!(
        "model auc {:.4} acc {:.4} | running-mean auc {running_mean:.4} | majority auc {majority:.4} | best epoch {} | {:.1}s",
        result.auc,
        result.acc,
        fitted.report.best_epoch,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
