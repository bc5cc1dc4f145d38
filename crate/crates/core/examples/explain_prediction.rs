//! Traces one prediction and renders it as JSON and SVG.
//!
//! ```text
//! cargo run --example explain_prediction
//! ```

use plkt::dataio::{Dataset, IdMap, Interaction, StudentSequence};
use plkt::explain::{pattern_label, render_report, trace_prediction, Outcome, ReportFormat};
use plkt::training::{fit, TrainConfig};

fn main() -> plkt::Result<()> {
    let student = |id: &str, xs: &[(usize, usize, u8)]| {
        StudentSequence::new(
            id,
            xs.iter()
                .map(|&(q, c, r)| Interaction {
                    question_id: q,
                    concept_id: c,
                    response: r,
                })
                .collect(),
        )
    };
    let data = Dataset {
        sequences: vec![
            student(
                "a",
                &[
                    (0, 0, 1),
                    (2, 1, 0),
                    (1, 0, 1),
                    (3, 1, 0),
                    (0, 0, 1),
                    (2, 1, 0),
                    (1, 0, 1),
                    (3, 1, 0),
                ],
            ),
            student(
                "b",
                &[
                    (2, 1, 1),
                    (0, 0, 0),
                    (3, 1, 1),
                    (1, 0, 0),
                    (2, 1, 1),
                    (0, 0, 0),
                    (3, 1, 1),
                    (1, 0, 0),
                ],
            ),
        ],
        num_questions: 4,
        num_concepts: 2,
        id_map: IdMap::default(),
    };
    let config = TrainConfig {
        dim: 16,
        max_len: 8,
        global_hidden: 16,
        dropout: 0.0,
        batch_size: 2,
        max_epochs: 200,
        patience: 200,
        ..TrainConfig::default()
    };
    let model = fit(&data, &data.sequences, &data.sequences, &config)?.model;

    let trace = trace_prediction(&model, &data.sequences[0], 6)?;
    println!(
        "p(correct) = {:.4}, replayed {:.4}",
        trace.probability,
        trace.replay_probability()
    );
    for lv in &trace.levels {
        let plus = &lv.outcomes.plus;
        let best = (0..plus.fused.len())
            .max_by(|&i, &j| plus.fused[i].total_cmp(&plus.fused[j]))
            .unwrap_or(0);
        println!(
            "level {}: {} patterns, heaviest {} (w = {:.3})",
            lv.level,
            plus.fused.len(),
            pattern_label(&plus.members[best]),
            plus.fused[best]
        );
    }
    let dir = std::env::temp_dir();
    for (format, name) in [(ReportFormat::Json, "trace.json"), (ReportFormat::Svg, "trace.svg")] {
        let path = dir.join(name);
        std::fs::write(&path, render_report(&trace, format, Outcome::Plus)?).map_err(|e| plkt::Error::io(&path, e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
