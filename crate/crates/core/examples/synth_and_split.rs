//! Simulated students, dataset files and the student-level split.
//!
//! ```text
//! cargo run --example synth_and_split
//! ```

use plkt::dataio::{
    build_difficulty, generate_synthetic, load_dataset, overall_accuracy, segment_sequences, split_dataset,
    write_dataset_with_map, SynthParams,
};

fn main() -> plkt::Result<()> {
    let params = SynthParams {
        num_students: 100,
        seq_len: 120,
        streak_bonus: 0.3,
        concept_stickiness: 0.5,
        ..SynthParams::default()
    };
    let data = generate_synthetic(&params)?;
    println!(
        "{} students, {} questions, {} concepts, accuracy {:.3}",
        data.sequences.len(),
        data.num_questions,
        data.num_concepts,
        overall_accuracy(&data.sequences)
    );

    let dir = std::env::temp_dir().join("plkt-example");
    std::fs::create_dir_all(&dir).map_err(|e| plkt::Error::io(&dir, e))?;
    let path = dir.join("students.csv");
    write_dataset_with_map(&path, &data)?;
    let reloaded = load_dataset(&path)?;
    println!(
        "wrote and reloaded {} ({} students)",
        path.display(),
        reloaded.sequences.len()
    );

    let split = split_dataset(&reloaded.sequences, 0, 0)?;
    println!(
        "fold 0: {} train / {} validation / {} test students",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    let windows = segment_sequences(&split.train, 80);
    println!("{} training windows of at most 80 interactions", windows.len());
    let difficulty = build_difficulty(&split.train, reloaded.num_questions);
    println!(
        "difficulty of the first five questions: {:?}",
        &difficulty.difficulty[..5]
    );
    Ok(())
}
