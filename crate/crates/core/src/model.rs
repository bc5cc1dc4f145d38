//! The full model: parameters and the per-sequence forward/backward pass.
//!
//! For a sequence of `n` valid interactions every position `j ≥ 1` is a
//! prediction target whose history is positions `0..j`. Interaction
//! embeddings, window conjunctions and the global-MLP hidden layer are
//! computed once per sequence; each target then reads only the windows
//! that end inside its history.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::betaembed::{
    combine, combine_backward, expectation, kl_backward, kl_from_terms, BetaCurvature, BetaEmbedding, BetaTerms,
    EmbeddingTables, InteractionCache,
};
use crate::dataio::{DifficultyTable, StudentSequence};
use crate::diffcore::{dot, matvec_t_acc, outer_acc, sigmoid, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::mlp::{Dropout, Mlp, MlpCache};
use crate::scoring::{score_target, score_target_backward, softplus_inverse, ScoringParams, TargetScore};

/// Probabilities are clipped to `[CLIP, 1 − CLIP]` inside the loss.
pub const CLIP: f64 = 1e-7;

/// Initial value of the temperature `γ`.
pub const GAMMA_INIT: f64 = 10.0;

/// Architecture hyperparameters fixed at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub num_questions: usize,
    pub num_concepts: usize,
    pub dim: usize,
    pub levels: usize,
    pub max_len: usize,
    pub global_hidden: usize,
    pub lambda: f64,
    pub epsilon: f64,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.levels == 0 || self.global_hidden == 0 {
            return Err(Error::Config("dim, levels and global_hidden must be positive".into()));
        }
        if self.max_len < 2 || self.levels > self.max_len {
            return Err(Error::Config(format!(
                "max_len {} must be ≥ 2 and ≥ levels {}",
                self.max_len, self.levels
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    pub tables: EmbeddingTables,
    pub scoring: ScoringParams,
}

impl ModelParams {
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tables = EmbeddingTables::init(arch.num_questions, arch.num_concepts, arch.dim, arch.epsilon, &mut rng);
        let global_mlps = (1..=arch.levels)
            .map(|l| {
                Mlp::init(
                    arch.max_len * arch.dim,
                    arch.global_hidden,
                    arch.max_len - l + 1,
                    true,
                    &mut rng,
                )
            })
            .collect();
        let scoring = ScoringParams {
            gamma_raw: Tensor::scalar(softplus_inverse(GAMMA_INIT)),
            lambda: arch.lambda,
            global_mlps,
        };
        Ok(ModelParams { arch, tables, scoring })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            arch: self.arch.clone(),
            tables: self.tables.zeros_like(),
            scoring: ScoringParams {
                gamma_raw: Tensor::zeros(&[]),
                lambda: self.scoring.lambda,
                global_mlps: self.scoring.global_mlps.iter().map(Mlp::zeros_like).collect(),
            },
        }
    }

    pub fn gamma(&self) -> f64 {
        self.scoring.gamma()
    }

    pub fn lambda(&self) -> f64 {
        self.scoring.lambda
    }

    /// Gradient buffers flattened in `tensors()` order.
    pub fn to_grad_vec(&self) -> Vec<Vec<f64>> {
        self.tensors().into_iter().map(|(_, t)| t.values().to_vec()).collect()
    }

    pub fn all_finite(&self) -> std::result::Result<(), String> {
        for (name, t) in self.tensors() {
            if !t.all_finite() {
                return Err(name);
            }
        }
        Ok(())
    }
}

impl ParamStore for ModelParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let t = &self.tables;
        let mut out = vec![
            ("question_table".to_string(), &t.question_table),
            ("concept_table".to_string(), &t.concept_table),
            ("w_alpha".to_string(), &t.w_alpha),
            ("w_beta".to_string(), &t.w_beta),
        ];
        t.interaction_mlp.tensors("interaction_mlp", &mut out);
        t.pattern_mlp.tensors("pattern_mlp", &mut out);
        out.push(("gamma_raw".to_string(), &self.scoring.gamma_raw));
        for (i, m) in self.scoring.global_mlps.iter().enumerate() {
            m.tensors(&format!("global_mlp{}", i + 1), &mut out);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let t = &mut self.tables;
        let mut out = vec![
            ("question_table".to_string(), &mut t.question_table),
            ("concept_table".to_string(), &mut t.concept_table),
            ("w_alpha".to_string(), &mut t.w_alpha),
            ("w_beta".to_string(), &mut t.w_beta),
        ];
        t.interaction_mlp.tensors_mut("interaction_mlp", &mut out);
        t.pattern_mlp.tensors_mut("pattern_mlp", &mut out);
        out.push(("gamma_raw".to_string(), &mut self.scoring.gamma_raw));
        for (i, m) in self.scoring.global_mlps.iter_mut().enumerate() {
            m.tensors_mut(&format!("global_mlp{}", i + 1), &mut out);
        }
        out
    }
}

/// Gradient accumulation request for [`run_sequence`]: the summed BCE of
/// the sequence is scaled by `loss_scale` and its gradient added to `grads`.
pub struct GradSink<'a> {
    pub loss_scale: f64,
    pub grads: &'a mut ModelParams,
}

/// Per-target outputs of a sequence pass.
#[derive(Clone, Debug, Default)]
pub struct SequenceOutput {
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
    /// Sum (not mean) of the clipped BCE over targets.
    pub loss_sum: f64,
    /// Populated when requested.
    pub scores: Vec<TargetScore>,
}

/// Clipped binary cross-entropy of one prediction.
pub fn bce_term(p: f64, label: u8) -> f64 {
    let p = p.clamp(CLIP, 1.0 - CLIP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean clipped BCE.
pub fn bce_loss(probabilities: &[f64], labels: &[u8]) -> f64 {
    if probabilities.is_empty() {
        return 0.0;
    }
    probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &r)| bce_term(p, r))
        .sum::<f64>()
        / probabilities.len() as f64
}

/// Runs the model over every target of `seq`.
pub fn run_sequence(
    params: &ModelParams,
    difficulty: &DifficultyTable,
    seq: &StudentSequence,
    mut dropout: Option<&mut Dropout>,
    train: Option<GradSink<'_>>,
    keep_scores: bool,
) -> Result<SequenceOutput> {
    let n = seq.valid_length;
    if n < 2 {
        return Err(Error::Contract(format!(
            "sequence `{}` has valid length {n}; at least 2 needed",
            seq.student_id
        )));
    }
    if n > params.arch.max_len {
        return Err(Error::Contract(format!(
            "sequence `{}` has valid length {n} > max_len {}",
            seq.student_id, params.arch.max_len
        )));
    }
    let xs = seq.valid();
    let tables = &params.tables;
    let d = params.arch.dim;
    let levels = params.arch.levels;
    let hist_len = n - 1;

    // interaction embeddings of the history
    let mut history = Vec::with_capacity(hist_len);
    let mut history_cache = Vec::with_capacity(hist_len);
    for x in &xs[..hist_len] {
        let (e, c) = tables.interaction_forward(
            x.question_id,
            x.concept_id,
            x.response,
            difficulty.get(x.question_id),
            dropout.as_deref_mut(),
        )?;
        history.push(e);
        history_cache.push(c);
    }

    // target pairs for positions 1..n
    let mut targets: Vec<[(BetaEmbedding, InteractionCache); 2]> = Vec::with_capacity(hist_len);
    for x in &xs[1..] {
        let dq = difficulty.get(x.question_id);
        let plus = tables.interaction_forward(x.question_id, x.concept_id, 1, dq, dropout.as_deref_mut())?;
        let minus = tables.interaction_forward(x.question_id, x.concept_id, 0, dq, dropout.as_deref_mut())?;
        targets.push([plus, minus]);
    }

    // pattern-level attention logits per history item
    let mut pattern_logits = Vec::with_capacity(hist_len);
    let mut pattern_mlp_cache: Vec<MlpCache> = Vec::with_capacity(hist_len);
    for e in &history {
        let (z, c) = tables.pattern_mlp.forward(&e.concat(), dropout.as_deref_mut());
        pattern_logits.push(z);
        pattern_mlp_cache.push(c);
    }

    // windows over the whole history; level l, start k
    let mut patterns: Vec<Vec<BetaEmbedding>> = Vec::with_capacity(levels);
    let mut pattern_weights: Vec<Vec<Vec<Vec<f64>>>> = Vec::with_capacity(levels);
    let mut pattern_terms: Vec<Vec<BetaTerms>> = Vec::with_capacity(levels);
    for l in 1..=levels {
        let count = (hist_len + 1).saturating_sub(l);
        let mut embs = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for k in 0..count {
            if l == 1 {
                embs.push(history[k].clone());
                weights.push(Vec::new());
            } else {
                let items: Vec<&BetaEmbedding> = history[k..k + l].iter().collect();
                let z: Vec<&[f64]> = pattern_logits[k..k + l].iter().map(Vec::as_slice).collect();
                let (e, w) = combine(&items, &z);
                embs.push(e);
                weights.push(w);
            }
        }
        pattern_terms.push(embs.iter().map(BetaTerms::new).collect());
        patterns.push(embs);
        pattern_weights.push(weights);
    }

    // global MLP hidden pre-activations for history lengths 1..=hist_len:
    // pre_t = b1 + Σ_{i<t} W1[:, i·d..(i+1)·d] e_i
    let expectations: Vec<Vec<f64>> = history.iter().map(expectation).collect();
    let in_dim = params.arch.max_len * d;
    let mut global_pre: Vec<Vec<Vec<f64>>> = Vec::with_capacity(levels);
    for mlp in &params.scoring.global_mlps {
        let h = mlp.hidden_dim();
        let w1 = mlp.w1.values();
        let mut acc = mlp.b1.values().to_vec();
        let mut per_t = Vec::with_capacity(hist_len);
        for (i, e) in expectations.iter().enumerate() {
            for (u, a) in acc.iter_mut().enumerate().take(h) {
                *a += dot(&w1[u * in_dim + i * d..u * in_dim + (i + 1) * d], e);
            }
            per_t.push(acc.clone());
        }
        global_pre.push(per_t);
    }

    let gamma = params.gamma();
    let lambda = params.lambda();

    let mut train = train;
    // gradient accumulators (only used in training)
    let grad_on = train.is_some();
    let zeros = || (vec![0.0; d], vec![0.0; d]);
    let mut d_history: Vec<(Vec<f64>, Vec<f64>)> = if grad_on { vec![zeros(); hist_len] } else { Vec::new() };
    let mut d_targets: Vec<[(Vec<f64>, Vec<f64>); 2]> = if grad_on {
        vec![[zeros(), zeros()]; hist_len]
    } else {
        Vec::new()
    };
    let mut d_patterns: Vec<Vec<(Vec<f64>, Vec<f64>)>> = if grad_on {
        patterns.iter().map(|lv| vec![zeros(); lv.len()]).collect()
    } else {
        Vec::new()
    };
    let mut d_global_pre: Vec<Vec<Vec<f64>>> = if grad_on {
        params
            .scoring
            .global_mlps
            .iter()
            .map(|m| vec![vec![0.0; m.hidden_dim()]; hist_len])
            .collect()
    } else {
        Vec::new()
    };
    let mut d_gamma = 0.0;

    let mut out = SequenceOutput {
        probabilities: Vec::with_capacity(hist_len),
        labels: Vec::with_capacity(hist_len),
        ..Default::default()
    };

    for (j, x) in xs.iter().enumerate().skip(1) {
        let t = j;
        let [(tp, _), (tm, _)] = &targets[j - 1];
        let target_terms = [BetaTerms::new(tp), BetaTerms::new(tm)];

        let mut level_inputs = Vec::with_capacity(levels);
        let mut global_act: Vec<(usize, Vec<f64>, Option<Vec<f64>>)> = Vec::with_capacity(levels);
        for l in 1..=levels {
            if l > t {
                break;
            }
            let count = t - l + 1;
            let mut dist = [Vec::with_capacity(count), Vec::with_capacity(count)];
            for k in 0..count {
                dist[0].push(kl_from_terms(
                    tp,
                    &target_terms[0],
                    &patterns[l - 1][k],
                    &pattern_terms[l - 1][k],
                ));
                dist[1].push(kl_from_terms(
                    tm,
                    &target_terms[1],
                    &patterns[l - 1][k],
                    &pattern_terms[l - 1][k],
                ));
            }
            let mlp = &params.scoring.global_mlps[l - 1];
            let act: Vec<f64> = global_pre[l - 1][t - 1].iter().map(|v| v.tanh()).collect();
            let mask = dropout.as_deref_mut().and_then(|dr| dr.mask(act.len()));
            let used: Vec<f64> = match &mask {
                Some(m) => act.iter().zip(m).map(|(a, m)| a * m).collect(),
                None => act.clone(),
            };
            let h = mlp.hidden_dim();
            let w2 = mlp.w2.values();
            let b2 = mlp.b2.as_ref().expect("global MLP has an output bias").values();
            let logits: Vec<f64> = (0..count)
                .map(|k| b2[k] + dot(&w2[k * h..(k + 1) * h], &used))
                .collect();
            level_inputs.push((l, dist, logits));
            global_act.push((l, act, mask));
        }

        let score = score_target(level_inputs, gamma, lambda);
        let p = score.probability;
        if !p.is_finite() {
            return Err(Error::NonFinite {
                name: format!("probability of target {j} in `{}`", seq.student_id),
            });
        }
        out.loss_sum += bce_term(p, x.response);
        out.probabilities.push(p);
        out.labels.push(x.response);

        if let Some(GradSink { loss_scale, grads }) = train.as_mut() {
            let r = x.response as f64;
            let dlogit = if (CLIP..=1.0 - CLIP).contains(&p) {
                *loss_scale * (p - r)
            } else {
                0.0
            };
            if dlogit != 0.0 {
                let sg = score_target_backward(&score, dlogit);
                d_gamma += sg.d_gamma;
                let curv = [BetaCurvature::new(tp), BetaCurvature::new(tm)];
                for (li, lv) in score.levels.iter().enumerate() {
                    let l = lv.level;
                    for (o, tgt) in [tp, tm].into_iter().enumerate() {
                        let (dta, dtb) = &mut d_targets[j - 1][o];
                        for k in 0..lv.len() {
                            let scale = sg.d_distances[li][o][k];
                            if scale == 0.0 {
                                continue;
                            }
                            let (dpa, dpb) = &mut d_patterns[l - 1][k];
                            kl_backward(
                                tgt,
                                &target_terms[o],
                                &curv[o],
                                &patterns[l - 1][k],
                                &pattern_terms[l - 1][k],
                                scale,
                                (dta, dtb),
                                (dpa, dpb),
                            );
                        }
                    }
                    // global output layer
                    let mlp = &params.scoring.global_mlps[l - 1];
                    let gm = &mut grads.scoring.global_mlps[l - 1];
                    let (_, act, mask) = &global_act[li];
                    let h = mlp.hidden_dim();
                    let dz = &sg.d_global_logits[li];
                    let used: Vec<f64> = match mask {
                        Some(m) => act.iter().zip(m).map(|(a, m)| a * m).collect(),
                        None => act.clone(),
                    };
                    outer_acc(&mut gm.w2.values_mut()[..dz.len() * h], h, dz, &used);
                    let b2 = gm.b2.as_mut().expect("global MLP has an output bias").values_mut();
                    b2.iter_mut().zip(dz).for_each(|(g, v)| *g += v);
                    let mut dact = vec![0.0; h];
                    matvec_t_acc(&mlp.w2.values()[..dz.len() * h], dz.len(), h, dz, &mut dact);
                    if let Some(m) = mask {
                        dact.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
                    }
                    let dpre = &mut d_global_pre[l - 1][t - 1];
                    for u in 0..h {
                        dpre[u] += dact[u] * (1.0 - act[u] * act[u]);
                    }
                }
            }
        }
        if keep_scores {
            out.scores.push(score);
        }
    }

    let Some(GradSink { grads, .. }) = train else {
        return Ok(out);
    };

    grads.scoring.gamma_raw.values_mut()[0] += d_gamma * sigmoid(params.scoring.gamma_raw.values()[0]);

    // global first layer: target t used e_i for all i < t
    let mut d_expect = vec![vec![0.0; d]; hist_len];
    for (l, mlp) in params.scoring.global_mlps.iter().enumerate() {
        let h = mlp.hidden_dim();
        let gm = &mut grads.scoring.global_mlps[l];
        let mut suffix = vec![0.0; h];
        for i in (0..hist_len).rev() {
            // targets with history length t > i, stored at index t − 1 ≥ i
            suffix.iter_mut().zip(&d_global_pre[l][i]).for_each(|(s, v)| *s += v);
            let w1 = mlp.w1.values();
            let gw1 = gm.w1.values_mut();
            for (u, &su) in suffix.iter().enumerate() {
                if su == 0.0 {
                    continue;
                }
                let row = u * in_dim + i * d;
                for c in 0..d {
                    gw1[row + c] += su * expectations[i][c];
                    d_expect[i][c] += su * w1[row + c];
                }
            }
        }
        gm.b1.values_mut().iter_mut().zip(&suffix).for_each(|(g, v)| *g += v);
    }
    for (i, de) in d_expect.iter().enumerate() {
        let e = &history[i];
        let (da, db) = &mut d_history[i];
        for c in 0..d {
            let s = e.alpha[c] + e.beta[c];
            let s2 = s * s;
            da[c] += de[c] * e.beta[c] / s2;
            db[c] -= de[c] * e.alpha[c] / s2;
        }
    }

    // windows back onto their members
    let mut d_pattern_logits = vec![vec![0.0; d]; hist_len];
    for l in 1..=levels {
        for (k, (dpa, dpb)) in d_patterns[l - 1].iter().enumerate() {
            if l == 1 {
                d_history[k].0.iter_mut().zip(dpa).for_each(|(a, b)| *a += b);
                d_history[k].1.iter_mut().zip(dpb).for_each(|(a, b)| *a += b);
                continue;
            }
            let items: Vec<&BetaEmbedding> = history[k..k + l].iter().collect();
            combine_backward(
                &items,
                &pattern_weights[l - 1][k],
                dpa,
                dpb,
                &mut d_history[k..k + l],
                &mut d_pattern_logits[k..k + l],
            );
        }
    }
    for i in 0..hist_len {
        if d_pattern_logits[i].iter().all(|&v| v == 0.0) {
            continue;
        }
        let dx = tables.pattern_mlp.backward(
            &pattern_mlp_cache[i],
            &d_pattern_logits[i],
            &mut grads.tables.pattern_mlp,
        );
        let (dxa, dxb) = dx.split_at(d);
        d_history[i].0.iter_mut().zip(dxa).for_each(|(a, b)| *a += b);
        d_history[i].1.iter_mut().zip(dxb).for_each(|(a, b)| *a += b);
    }

    for (i, (da, db)) in d_history.iter().enumerate() {
        tables.interaction_backward(&history_cache[i], da, db, &mut grads.tables);
    }
    for (j, pair) in targets.iter().enumerate() {
        for o in 0..2 {
            let (da, db) = &d_targets[j][o];
            tables.interaction_backward(&pair[o].1, da, db, &mut grads.tables);
        }
    }
    Ok(out)
}

/// Probabilities for every target of a sequence (evaluation mode).
pub fn forward_sequence(params: &ModelParams, difficulty: &DifficultyTable, seq: &StudentSequence) -> Result<Vec<f64>> {
    Ok(run_sequence(params, difficulty, seq, None, None, false)?.probabilities)
}
