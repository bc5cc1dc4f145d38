//! Trains a small model, saves a checkpoint and reloads it.
//!
//! ```text
//! cargo run --release --example train_model
//! ```

use plkt::cli::prepare_splits;
use plkt::dataio::{generate_synthetic, SynthParams};
use plkt::training::{evaluate, fit, TrainConfig, TrainedModel};

fn main() -> plkt::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let data = generate_synthetic(&SynthParams {
        num_students: 150,
        seq_len: 40,
        ..SynthParams::default()
    })?;
    let config = TrainConfig {
        dim: 16,
        levels: 3,
        max_len: 40,
        global_hidden: 32,
        batch_size: 8,
        dropout: 0.1,
        max_epochs: 8,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let [train, validation, test] = prepare_splits(&data, &config)?;
    let fitted = fit(&data, &train, &validation, &config)?;
    for e in &fitted.report.epochs {
        println!("epoch {:>2} loss {:.4} val auc {:.4}", e.epoch, e.train_loss, e.val_auc);
    }
    let result = evaluate(&fitted.model, &test)?;
    println!(
        "test auc {:.4} acc {:.4} over {} targets",
        result.auc, result.acc, result.n_targets
    );

    let path = std::env::temp_dir().join("plkt-example-checkpoint.json");
    fitted.model.save(&path)?;
    let reloaded = TrainedModel::load(&path)?;
    let same = reloaded.predict(&test)? == fitted.model.predict(&test)?;
    println!("checkpoint {} reproduces predictions: {same}", path.display());
    Ok(())
}
