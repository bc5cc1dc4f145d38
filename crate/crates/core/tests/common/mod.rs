#![allow(dead_code)]

use plkt::dataio::{Dataset, IdMap, Interaction, StudentSequence};
use plkt::training::TrainConfig;

fn student(id: &str, xs: &[(usize, usize, u8)]) -> StudentSequence {
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
}

/// Two students, eight interactions each. Every student answers one
/// concept always correctly and the other always incorrectly, with the
/// roles swapped between students, so the history decides each label.
pub fn overfit_fixture() -> Dataset {
    let a = student(
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
    );
    let b = student(
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
    );
    Dataset {
        sequences: vec![a, b],
        num_questions: 4,
        num_concepts: 2,
        id_map: IdMap::default(),
    }
}

/// 500 full-batch Adam steps at learning rate 1e-3 without dropout.
pub fn overfit_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        batch_size: 2,
        dim: 32,
        levels: 3,
        lambda: 0.7,
        dropout: 0.0,
        max_len: 8,
        max_epochs: 500,
        patience: 500,
        seed: 0,
        global_hidden: 32,
        ..TrainConfig::default()
    }
}
