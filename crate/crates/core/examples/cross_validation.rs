//! Five-fold cross-validation with a metrics CSV.
//!
//! ```text
//! cargo run --release --example cross_validation
//! ```

use plkt::dataio::{generate_synthetic, SynthParams};
use plkt::metrics::{run_cross_validation, write_metrics_csv};
use plkt::training::TrainConfig;

fn main() -> plkt::Result<()> {
    let data = generate_synthetic(&SynthParams {
        num_students: 100,
        seq_len: 30,
        ..SynthParams::default()
    })?;
    let config = TrainConfig {
        dim: 8,
        max_len: 30,
        global_hidden: 16,
        batch_size: 8,
        max_epochs: 3,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let report = run_cross_validation(&data, &config, 5)?;
    for f in &report.folds {
        println!(
            "fold {}: auc {:.4} acc {:.4} ({} targets)",
            f.fold_index.unwrap_or_default(),
            f.auc,
            f.acc,
            f.n_targets
        );
    }
    println!("auc {:.4} ± {:.4}", report.mean_auc, report.std_auc);
    let path = std::env::temp_dir().join("plkt-cv-metrics.csv");
    write_metrics_csv(&path, &report.folds)?;
    println!("wrote {}", path.display());
    Ok(())
}
