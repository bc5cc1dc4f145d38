//! Interaction logs: CSV loading with dense id remapping, segmentation,
//! difficulty statistics, student-level splits and a synthetic generator.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header of the dataset CSV.
pub const DATASET_HEADER: [&str; 5] = ["student_id", "order", "question_id", "concept_id", "response"];

/// Sequence length used for segmentation unless configured otherwise.
pub const DEFAULT_MAX_LEN: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub question_id: usize,
    pub concept_id: usize,
    pub response: u8,
}

impl Interaction {
    pub const PAD: Interaction = Interaction {
        question_id: 0,
        concept_id: 0,
        response: 0,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentSequence {
    pub student_id: String,
    /// Time-ordered; entries at `valid_length..` are padding.
    pub interactions: Vec<Interaction>,
    pub valid_length: usize,
}

impl StudentSequence {
    pub fn new(student_id: impl Into<String>, interactions: Vec<Interaction>) -> Self {
        let valid_length = interactions.len();
        StudentSequence {
            student_id: student_id.into(),
            interactions,
            valid_length,
        }
    }

    pub fn valid(&self) -> &[Interaction] {
        &self.interactions[..self.valid_length]
    }

    /// Number of prediction targets (every position after the first).
    pub fn num_targets(&self) -> usize {
        self.valid_length.saturating_sub(1)
    }
}

/// Dense-id ↔ raw-id mapping persisted next to a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdMap {
    pub questions: Vec<String>,
    pub concepts: Vec<String>,
    /// Concept of each dense question id.
    pub question_concept: Vec<usize>,
}

impl IdMap {
    fn lookup(raw: &[String]) -> HashMap<&str, usize> {
        raw.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    /// Writes the `raw_id,dense_id,kind` sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["raw_id", "dense_id", "kind"])?;
        for (dense, raw) in self.questions.iter().enumerate() {
            w.write_record([raw.as_str(), &dense.to_string(), "question"])?;
        }
        for (dense, raw) in self.concepts.iter().enumerate() {
            w.write_record([raw.as_str(), &dense.to_string(), "concept"])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut questions: Vec<(usize, String)> = Vec::new();
        let mut concepts: Vec<(usize, String)> = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let err = |message: String| Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            };
            if rec.len() != 3 {
                return Err(err(format!("expected 3 fields, got {}", rec.len())));
            }
            let dense: usize = rec[1].parse().map_err(|_| err(format!("bad dense_id `{}`", &rec[1])))?;
            match &rec[2] {
                "question" => questions.push((dense, rec[0].to_string())),
                "concept" => concepts.push((dense, rec[0].to_string())),
                other => return Err(err(format!("unknown kind `{other}`"))),
            }
        }
        let densify = |mut v: Vec<(usize, String)>| -> Result<Vec<String>> {
            v.sort_by_key(|(d, _)| *d);
            if v.iter().enumerate().any(|(i, (d, _))| i != *d) {
                return Err(Error::Data(format!("{}: dense ids are not contiguous", path.display())));
            }
            Ok(v.into_iter().map(|(_, s)| s).collect())
        };
        Ok(IdMap {
            questions: densify(questions)?,
            concepts: densify(concepts)?,
            question_concept: Vec::new(),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sequences: Vec<StudentSequence>,
    pub num_questions: usize,
    pub num_concepts: usize,
    pub id_map: IdMap,
}

#[derive(Debug, Deserialize)]
struct Row {
    student_id: String,
    order: i64,
    question_id: String,
    concept_id: String,
    response: String,
}

/// Loads a dataset CSV, assigning dense ids in order of first appearance.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    load_impl(path, None)
}

/// Loads a dataset CSV against an existing id map; ids absent from the map
/// are rejected.
pub fn load_dataset_with_map(path: &Path, map: &IdMap) -> Result<Dataset> {
    load_impl(path, Some(map))
}

fn load_impl(path: &Path, fixed: Option<&IdMap>) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let display = path.display().to_string();

    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(e) => return Err(e.into()),
    };
    if headers.is_empty() {
        let map = fixed.cloned().unwrap_or_default();
        return Ok(Dataset {
            sequences: Vec::new(),
            num_questions: map.questions.len(),
            num_concepts: map.concepts.len(),
            id_map: map,
        });
    }
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(Error::Parse {
            path: display,
            line: 1,
            message: format!("expected header `{}`", DATASET_HEADER.join(",")),
        });
    }

    let mut map = fixed.cloned().unwrap_or_default();
    let mut q_lookup: HashMap<String, usize> = IdMap::lookup(&map.questions)
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let mut c_lookup: HashMap<String, usize> = IdMap::lookup(&map.concepts)
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    // the question → concept map is rebuilt from the data when absent
    let mut question_concept: HashMap<usize, usize> = map.question_concept.iter().copied().enumerate().collect();

    let mut students: Vec<String> = Vec::new();
    let mut by_student: HashMap<String, Vec<(i64, usize, Interaction)>> = HashMap::new();

    for (i, rec) in reader.deserialize::<Row>().enumerate() {
        let line = i as u64 + 2;
        let err = |message: String| Error::Parse {
            path: display.clone(),
            line,
            message,
        };
        let row = rec.map_err(|e| err(e.to_string()))?;
        let response = match row.response.as_str() {
            "0" => 0u8,
            "1" => 1u8,
            other => return Err(err(format!("response must be 0 or 1, got `{other}`"))),
        };
        let intern = |lookup: &mut HashMap<String, usize>, raw: &mut Vec<String>, id: &str, kind: &str| {
            if let Some(&d) = lookup.get(id) {
                return Ok(d);
            }
            if fixed.is_some() {
                return Err(err(format!(
                    "{kind} id `{id}` is not in the checkpoint vocabulary of size {}",
                    raw.len()
                )));
            }
            let d = raw.len();
            raw.push(id.to_string());
            lookup.insert(id.to_string(), d);
            Ok(d)
        };
        let q = intern(&mut q_lookup, &mut map.questions, &row.question_id, "question")?;
        let c = intern(&mut c_lookup, &mut map.concepts, &row.concept_id, "concept")?;
        let concept_id = match question_concept.get(&q) {
            Some(&first) => {
                if first != c {
                    log::warn!(
                        "{display}:{line}: question `{}` already tagged with concept `{}`; keeping the first",
                        row.question_id,
                        map.concepts[first]
                    );
                }
                first
            }
            None => {
                question_concept.insert(q, c);
                c
            }
        };
        if !by_student.contains_key(&row.student_id) {
            students.push(row.student_id.clone());
        }
        by_student.entry(row.student_id).or_default().push((
            row.order,
            i,
            Interaction {
                question_id: q,
                concept_id,
                response,
            },
        ));
    }

    map.question_concept = (0..map.questions.len())
        .map(|q| question_concept.get(&q).copied().unwrap_or(0))
        .collect();
    let sequences = students
        .into_iter()
        .map(|s| {
            let mut rows = by_student.remove(&s).unwrap_or_default();
            rows.sort_by_key(|(order, idx, _)| (*order, *idx));
            StudentSequence::new(s, rows.into_iter().map(|(_, _, x)| x).collect())
        })
        .collect();
    Ok(Dataset {
        sequences,
        num_questions: map.questions.len(),
        num_concepts: map.concepts.len(),
        id_map: map,
    })
}

/// Writes sequences in the dataset CSV format using the raw ids of `map`
/// (dense ids when the map is empty).
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DATASET_HEADER)?;
    let raw = |names: &[String], id: usize| names.get(id).cloned().unwrap_or_else(|| id.to_string());
    for seq in &dataset.sequences {
        for (order, x) in seq.valid().iter().enumerate() {
            w.write_record([
                seq.student_id.clone(),
                order.to_string(),
                raw(&dataset.id_map.questions, x.question_id),
                raw(&dataset.id_map.concepts, x.concept_id),
                x.response.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Splits each sequence into consecutive chunks of `max_len`, padding the
/// last one. Chunks with fewer than two real interactions are dropped.
pub fn segment_sequences(seqs: &[StudentSequence], max_len: usize) -> Vec<StudentSequence> {
    assert!(max_len >= 2, "max_len must be at least 2");
    let mut out = Vec::new();
    for seq in seqs {
        for chunk in seq.valid().chunks(max_len) {
            if chunk.len() < 2 {
                continue;
            }
            let mut interactions = chunk.to_vec();
            interactions.resize(max_len, Interaction::PAD);
            out.push(StudentSequence {
                student_id: seq.student_id.clone(),
                interactions,
                valid_length: chunk.len(),
            });
        }
    }
    out
}

/// Row of an embedding table for `(id, r)`: `id + r·vocab`.
pub fn response_offset_index(id: usize, response: u8, vocab: usize) -> Result<usize> {
    if id >= vocab {
        return Err(Error::IndexOutOfRange { index: id, vocab });
    }
    if response > 1 {
        return Err(Error::Data(format!("response must be 0 or 1, got {response}")));
    }
    Ok(id + response as usize * vocab)
}

/// Neutral difficulty for questions never attempted in training.
pub const NEUTRAL_DIFFICULTY: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyTable {
    pub attempts: Vec<u64>,
    pub corrects: Vec<u64>,
    pub difficulty: Vec<f64>,
}

impl DifficultyTable {
    pub fn get(&self, question: usize) -> f64 {
        self.difficulty.get(question).copied().unwrap_or(NEUTRAL_DIFFICULTY)
    }
}

/// `d_q = 1 − M_q / N_q` from the given (training) sequences.
pub fn build_difficulty(train: &[StudentSequence], num_questions: usize) -> DifficultyTable {
    let mut attempts = vec![0u64; num_questions];
    let mut corrects = vec![0u64; num_questions];
    for seq in train {
        for x in seq.valid() {
            attempts[x.question_id] += 1;
            corrects[x.question_id] += x.response as u64;
        }
    }
    let difficulty = attempts
        .iter()
        .zip(&corrects)
        .map(|(&n, &m)| {
            if n > 0 {
                1.0 - m as f64 / n as f64
            } else {
                NEUTRAL_DIFFICULTY
            }
        })
        .collect();
    DifficultyTable {
        attempts,
        corrects,
        difficulty,
    }
}

pub const NUM_FOLDS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<StudentSequence>,
    pub validation: Vec<StudentSequence>,
    pub test: Vec<StudentSequence>,
    pub fold_index: usize,
}

/// Student-level 7:1:2 split. Students are shuffled once under `seed` and
/// cut into five blocks; block `fold_index` is the test set, and a tenth of
/// all students taken from the rest forms the validation set.
pub fn split_dataset(seqs: &[StudentSequence], seed: u64, fold_index: usize) -> Result<DatasetSplit> {
    if fold_index >= NUM_FOLDS {
        return Err(Error::Config(format!(
            "fold_index must be in 0..{NUM_FOLDS}, got {fold_index}"
        )));
    }
    let mut students: Vec<&str> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for s in seqs {
        if seen.insert(s.student_id.as_str()) {
            students.push(&s.student_id);
        }
    }
    let n = students.len();
    if n < 10 {
        return Err(Error::Data(format!("splitting needs at least 10 students, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    students.shuffle(&mut rng);

    let bounds: Vec<usize> = (0..=NUM_FOLDS).map(|k| k * n / NUM_FOLDS).collect();
    let test: std::collections::HashSet<&str> = students[bounds[fold_index]..bounds[fold_index + 1]]
        .iter()
        .copied()
        .collect();
    let rest: Vec<&str> = students.iter().copied().filter(|s| !test.contains(s)).collect();
    let n_valid = ((n as f64) / 10.0).round() as usize;
    let validation: std::collections::HashSet<&str> = rest[..n_valid].iter().copied().collect();

    let pick = |set: &dyn Fn(&str) -> bool| -> Vec<StudentSequence> {
        seqs.iter().filter(|s| set(&s.student_id)).cloned().collect()
    };
    Ok(DatasetSplit {
        train: pick(&|s| !test.contains(s) && !validation.contains(s)),
        validation: pick(&|s| validation.contains(s)),
        test: pick(&|s| test.contains(s)),
        fold_index,
    })
}

/// Knobs of the synthetic student simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub num_students: usize,
    pub num_concepts: usize,
    pub questions_per_concept: usize,
    pub seq_len: usize,
    pub seed: u64,
    /// Probability an unmastered concept becomes mastered after a practice.
    pub learn_rate: f64,
    pub guess: f64,
    pub slip: f64,
    pub init_mastery: f64,
    /// Extra mastery probability after two consecutive correct answers on
    /// the same concept.
    pub streak_bonus: f64,
    /// Probability that the next question is drawn from the previous
    /// question's concept instead of uniformly from all questions.
    pub concept_stickiness: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            num_students: 500,
            num_concepts: 10,
            questions_per_concept: 5,
            seq_len: 50,
            seed: 0,
            learn_rate: 0.2,
            guess: 0.2,
            slip: 0.1,
            init_mastery: 0.2,
            streak_bonus: 0.0,
            concept_stickiness: 0.0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learn_rate", self.learn_rate),
            ("guess", self.guess),
            ("slip", self.slip),
            ("init_mastery", self.init_mastery),
            ("streak_bonus", self.streak_bonus),
            ("concept_stickiness", self.concept_stickiness),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.num_concepts == 0 || self.questions_per_concept == 0 {
            return Err(Error::Config(
                "need at least one concept and one question per concept".into(),
            ));
        }
        Ok(())
    }
}

/// Simulates students with latent per-concept mastery. Each step draws a
/// question uniformly, or with probability `concept_stickiness` a question of
/// the previous concept; question `q` belongs to concept `q / questions_per_concept`.
pub fn generate_synthetic(params: &SynthParams) -> Result<Dataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let num_questions = params.num_concepts * params.questions_per_concept;
    let mut sequences = Vec::with_capacity(params.num_students);
    for s in 0..params.num_students {
        let mut mastered: Vec<bool> = (0..params.num_concepts)
            .map(|_| rng.random::<f64>() < params.init_mastery)
            .collect();
        let mut prev: Option<Interaction> = None;
        let mut interactions = Vec::with_capacity(params.seq_len);
        for _ in 0..params.seq_len {
            let q = match prev {
                Some(p) if params.concept_stickiness > 0.0 && rng.random::<f64>() < params.concept_stickiness => {
                    p.concept_id * params.questions_per_concept + rng.random_range(0..params.questions_per_concept)
                }
                _ => rng.random_range(0..num_questions),
            };
            let c = q / params.questions_per_concept;
            let p_correct = if mastered[c] { 1.0 - params.slip } else { params.guess };
            let response = u8::from(rng.random::<f64>() < p_correct);
            if !mastered[c] {
                let streak = matches!(prev, Some(p) if p.concept_id == c && p.response == 1) && response == 1;
                let p_learn = if streak {
                    (params.learn_rate + params.streak_bonus).min(1.0)
                } else {
                    params.learn_rate
                };
                mastered[c] = rng.random::<f64>() < p_learn;
            }
            let x = Interaction {
                question_id: q,
                concept_id: c,
                response,
            };
            interactions.push(x);
            prev = Some(x);
        }
        sequences.push(StudentSequence::new(format!("s{s:05}"), interactions));
    }
    let id_map = IdMap {
        questions: (0..num_questions).map(|q| format!("q{q}")).collect(),
        concepts: (0..params.num_concepts).map(|c| format!("c{c}")).collect(),
        question_concept: (0..num_questions).map(|q| q / params.questions_per_concept).collect(),
    };
    Ok(Dataset {
        sequences,
        num_questions,
        num_concepts: params.num_concepts,
        id_map,
    })
}

/// Writes a dataset plus its `<stem>.idmap.csv` sidecar.
pub fn write_dataset_with_map(path: &Path, dataset: &Dataset) -> Result<()> {
    write_dataset(path, dataset)?;
    dataset.id_map.write_csv(&idmap_path(path))
}

pub fn idmap_path(dataset_path: &Path) -> std::path::PathBuf {
    let stem = dataset_path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    dataset_path.with_file_name(format!("{stem}.idmap.csv"))
}

/// Overall fraction of correct responses.
pub fn overall_accuracy(seqs: &[StudentSequence]) -> f64 {
    let (n, m) = seqs
        .iter()
        .flat_map(|s| s.valid())
        .fold((0usize, 0usize), |(n, m), x| (n + 1, m + x.response as usize));
    if n == 0 {
        0.0
    } else {
        m as f64 / n as f64
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
