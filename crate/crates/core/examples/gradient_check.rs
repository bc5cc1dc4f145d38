//! Central-difference check of the full model gradient on a toy problem.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use plkt::cli::{toy_train_config, GRADCHECK_STEP};
use plkt::dataio::{generate_synthetic, SynthParams};
use plkt::diffcore::grad_check;
use plkt::training::{BatchObjective, TrainedModel};

fn main() -> plkt::Result<()> {
    let data = generate_synthetic(&SynthParams {
        num_students: 2,
        num_concepts: 2,
        questions_per_concept: 2,
        seq_len: 7,
        ..SynthParams::default()
    })?;
    let mut model = TrainedModel::init(&data, &data.sequences, &toy_train_config())?;
    let objective = BatchObjective::new(&model.difficulty, &data.sequences);
    let report = grad_check(&objective, &mut model.params, GRADCHECK_STEP)?;
    for g in &report.groups {
        println!("{:<22} rel {:.2e}  |g| {:.3e}", g.name, g.rel_error, g.analytic_norm);
    }
    println!("max relative error {:.2e}", report.max_rel_error());
    Ok(())
}
