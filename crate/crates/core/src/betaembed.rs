//! Beta-distribution embeddings and the operations defined on them:
//! difficulty modulation, probabilistic conjunction, expectation and the
//! closed-form Kullback–Leibler divergence.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::response_offset_index;
use crate::diffcore::special::{digamma_unchecked, ln_beta_unchecked, trigamma_unchecked};
use crate::diffcore::{sigmoid, softmax_backward, softplus, Tensor};
use crate::error::{Error, Result};
use crate::mlp::{gaussian, Dropout, Mlp, MlpCache};

/// Positivity floor added after softplus.
pub const EPSILON: f64 = 1e-4;

/// Standard deviation of the raw embedding-table initializer.
pub const TABLE_INIT_STD: f64 = 0.1;

/// `d` independent Beta distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaEmbedding {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BetaEmbedding {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::Shape(format!(
                "alpha has {} components, beta {}",
                alpha.len(),
                beta.len()
            )));
        }
        if let Some(&bad) = alpha.iter().chain(&beta).find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Domain {
                func: "BetaEmbedding",
                arg: bad,
            });
        }
        Ok(BetaEmbedding { alpha, beta })
    }

    /// The same `Beta(a, b)` in every one of `d` dimensions.
    pub fn uniform(d: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a; d], vec![b; d])
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// `[α; β]`
    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dim());
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn min_param(&self) -> f64 {
        self.alpha
            .iter()
            .chain(&self.beta)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Componentwise mean `α / (α + β)`.
pub fn expectation(p: &BetaEmbedding) -> Vec<f64> {
    p.alpha.iter().zip(&p.beta).map(|(a, b)| a / (a + b)).collect()
}

/// Per-dimension quantities of one embedding that the KL formula reuses.
#[derive(Clone, Debug)]
pub struct BetaTerms {
    pub ln_b: Vec<f64>,
    pub dig_a: Vec<f64>,
    pub dig_b: Vec<f64>,
    pub dig_ab: Vec<f64>,
}

impl BetaTerms {
    pub fn new(p: &BetaEmbedding) -> Self {
        let d = p.dim();
        let mut t = BetaTerms {
            ln_b: Vec::with_capacity(d),
            dig_a: Vec::with_capacity(d),
            dig_b: Vec::with_capacity(d),
            dig_ab: Vec::with_capacity(d),
        };
        for (&a, &b) in p.alpha.iter().zip(&p.beta) {
            t.ln_b.push(ln_beta_unchecked(a, b));
            t.dig_a.push(digamma_unchecked(a));
            t.dig_b.push(digamma_unchecked(b));
            t.dig_ab.push(digamma_unchecked(a + b));
        }
        t
    }
}

/// Trigamma values of the left-hand (reference) side, needed only for
/// gradients with respect to it.
#[derive(Clone, Debug)]
pub struct BetaCurvature {
    pub tri_a: Vec<f64>,
    pub tri_b: Vec<f64>,
    pub tri_ab: Vec<f64>,
}

impl BetaCurvature {
    pub fn new(p: &BetaEmbedding) -> Self {
        BetaCurvature {
            tri_a: p.alpha.iter().map(|&a| trigamma_unchecked(a)).collect(),
            tri_b: p.beta.iter().map(|&b| trigamma_unchecked(b)).collect(),
            tri_ab: p
                .alpha
                .iter()
                .zip(&p.beta)
                .map(|(&a, &b)| trigamma_unchecked(a + b))
                .collect(),
        }
    }
}

/// `Σ_j KL(Beta(p_j) ∥ Beta(q_j))` from precomputed terms.
pub fn kl_from_terms(p: &BetaEmbedding, pt: &BetaTerms, q: &BetaEmbedding, qt: &BetaTerms) -> f64 {
    let mut total = 0.0;
    for j in 0..p.dim() {
        let (a1, b1, a2, b2) = (p.alpha[j], p.beta[j], q.alpha[j], q.beta[j]);
        total += qt.ln_b[j] - pt.ln_b[j]
            + (a1 - a2) * pt.dig_a[j]
            + (b1 - b2) * pt.dig_b[j]
            + (a2 - a1 + b2 - b1) * pt.dig_ab[j];
    }
    total
}

/// Accumulates `scale · ∂KL(p ∥ q)` into the four gradient buffers.
#[allow(clippy::too_many_arguments)]
pub fn kl_backward(
    p: &BetaEmbedding,
    pt: &BetaTerms,
    pc: &BetaCurvature,
    q: &BetaEmbedding,
    qt: &BetaTerms,
    scale: f64,
    dp: (&mut [f64], &mut [f64]),
    dq: (&mut [f64], &mut [f64]),
) {
    let (dpa, dpb) = dp;
    let (dqa, dqb) = dq;
    for j in 0..p.dim() {
        let (a1, b1, a2, b2) = (p.alpha[j], p.beta[j], q.alpha[j], q.beta[j]);
        let spread = a2 - a1 + b2 - b1;
        dpa[j] += scale * ((a1 - a2) * pc.tri_a[j] + spread * pc.tri_ab[j]);
        dpb[j] += scale * ((b1 - b2) * pc.tri_b[j] + spread * pc.tri_ab[j]);
        dqa[j] += scale * (qt.dig_a[j] - qt.dig_ab[j] - pt.dig_a[j] + pt.dig_ab[j]);
        dqb[j] += scale * (qt.dig_b[j] - qt.dig_ab[j] - pt.dig_b[j] + pt.dig_ab[j]);
    }
}

/// `KL(p ∥ q)` summed over dimensions.
pub fn beta_kl(p: &BetaEmbedding, q: &BetaEmbedding) -> Result<f64> {
    check_pair(p, q)?;
    Ok(kl_from_terms(p, &BetaTerms::new(p), q, &BetaTerms::new(q)))
}

/// Gradients of [`beta_kl`] as `(dα_p, dβ_p, dα_q, dβ_q)`.
pub fn beta_kl_grad(p: &BetaEmbedding, q: &BetaEmbedding) -> Result<[Vec<f64>; 4]> {
    check_pair(p, q)?;
    let d = p.dim();
    let mut g = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let [dpa, dpb, dqa, dqb] = &mut g;
    kl_backward(
        p,
        &BetaTerms::new(p),
        &BetaCurvature::new(p),
        q,
        &BetaTerms::new(q),
        1.0,
        (dpa, dpb),
        (dqa, dqb),
    );
    Ok(g)
}

fn check_pair(p: &BetaEmbedding, q: &BetaEmbedding) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::Shape(format!("KL between d={} and d={}", p.dim(), q.dim())));
    }
    for e in [p, q] {
        if let Some(&bad) = e.alpha.iter().chain(&e.beta).find(|v| v.is_nan() || **v <= 0.0) {
            return Err(Error::Domain {
                func: "beta_kl",
                arg: bad,
            });
        }
    }
    Ok(())
}

/// Weighted combination `(Σ w_i ⊙ α_i, Σ w_i ⊙ β_i)` with per-dimension
/// weights `w = softmax_i(logits_i)`. Returns the output and the weights.
pub fn combine(items: &[&BetaEmbedding], logits: &[&[f64]]) -> (BetaEmbedding, Vec<Vec<f64>>) {
    let d = items[0].dim();
    let n = items.len();
    let mut weights = vec![vec![0.0; d]; n];
    let mut alpha = vec![0.0; d];
    let mut beta = vec![0.0; d];
    let mut col = vec![0.0; n];
    for j in 0..d {
        for (c, z) in col.iter_mut().zip(logits) {
            *c = z[j];
        }
        crate::diffcore::softmax_in_place(&mut col);
        for (i, &w) in col.iter().enumerate() {
            weights[i][j] = w;
            alpha[j] += w * items[i].alpha[j];
            beta[j] += w * items[i].beta[j];
        }
    }
    (BetaEmbedding { alpha, beta }, weights)
}

/// Backward of [`combine`]. Adds into `d_items` (pairs of α/β buffers) and
/// `d_logits`.
pub fn combine_backward(
    items: &[&BetaEmbedding],
    weights: &[Vec<f64>],
    d_alpha: &[f64],
    d_beta: &[f64],
    d_items: &mut [(Vec<f64>, Vec<f64>)],
    d_logits: &mut [Vec<f64>],
) {
    let n = items.len();
    let d = d_alpha.len();
    let mut w_col = vec![0.0; n];
    let mut dw_col = vec![0.0; n];
    let mut dz_col = vec![0.0; n];
    for j in 0..d {
        for i in 0..n {
            let w = weights[i][j];
            w_col[i] = w;
            dw_col[i] = d_alpha[j] * items[i].alpha[j] + d_beta[j] * items[i].beta[j];
            d_items[i].0[j] += w * d_alpha[j];
            d_items[i].1[j] += w * d_beta[j];
            dz_col[i] = 0.0;
        }
        if n > 1 {
            softmax_backward(&w_col, &dw_col, &mut dz_col);
            for i in 0..n {
                d_logits[i][j] += dz_col[i];
            }
        }
    }
}

/// Probabilistic conjunction of `items` with attention logits from `mlp`.
pub fn conjunction(items: &[BetaEmbedding], mlp: &Mlp) -> Result<BetaEmbedding> {
    let first = items
        .first()
        .ok_or_else(|| Error::Contract("conjunction of zero embeddings".into()))?;
    if items.iter().any(|e| e.dim() != first.dim()) {
        return Err(Error::Shape("conjunction items differ in dimension".into()));
    }
    let logits: Vec<Vec<f64>> = items.iter().map(|e| mlp.infer(&e.concat())).collect();
    let refs: Vec<&BetaEmbedding> = items.iter().collect();
    let lrefs: Vec<&[f64]> = logits.iter().map(Vec::as_slice).collect();
    Ok(combine(&refs, &lrefs).0)
}

/// Per-dimension conjunction weights, exposed for inspection.
pub fn conjunction_weights(items: &[BetaEmbedding], mlp: &Mlp) -> Result<Vec<Vec<f64>>> {
    if items.is_empty() {
        return Err(Error::Contract("conjunction of zero embeddings".into()));
    }
    let logits: Vec<Vec<f64>> = items.iter().map(|e| mlp.infer(&e.concat())).collect();
    let refs: Vec<&BetaEmbedding> = items.iter().collect();
    let lrefs: Vec<&[f64]> = logits.iter().map(Vec::as_slice).collect();
    Ok(combine(&refs, &lrefs).1)
}

/// `softplus(raw + w·d_q) + ε` for both shape vectors.
pub fn modulate_difficulty(
    alpha_raw: &[f64],
    beta_raw: &[f64],
    difficulty: f64,
    w_alpha: &[f64],
    w_beta: &[f64],
    epsilon: f64,
) -> BetaEmbedding {
    let f = |raw: &[f64], w: &[f64]| -> Vec<f64> {
        raw.iter()
            .zip(w)
            .map(|(r, w)| softplus(r + w * difficulty) + epsilon)
            .collect()
    };
    BetaEmbedding {
        alpha: f(alpha_raw, w_alpha),
        beta: f(beta_raw, w_beta),
    }
}

/// `softplus(raw) + ε`, the positivity map without difficulty.
pub fn positive(alpha_raw: &[f64], beta_raw: &[f64], epsilon: f64) -> BetaEmbedding {
    let f = |raw: &[f64]| -> Vec<f64> { raw.iter().map(|r| softplus(*r) + epsilon).collect() };
    BetaEmbedding {
        alpha: f(alpha_raw),
        beta: f(beta_raw),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbedKind {
    Question,
    Concept,
}

/// Learnable embedding tables and the two conjunction MLPs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTables {
    /// `[2|Q|, 2d]`, raw (pre-positivity) α then β per row.
    pub question_table: Tensor,
    /// `[2|C|, 2d]`
    pub concept_table: Tensor,
    pub w_alpha: Tensor,
    pub w_beta: Tensor,
    pub interaction_mlp: Mlp,
    pub pattern_mlp: Mlp,
    pub epsilon: f64,
}

impl EmbeddingTables {
    pub fn init(num_questions: usize, num_concepts: usize, d: usize, epsilon: f64, rng: &mut ChaCha8Rng) -> Self {
        EmbeddingTables {
            question_table: gaussian(&[2 * num_questions, 2 * d], TABLE_INIT_STD, rng),
            concept_table: gaussian(&[2 * num_concepts, 2 * d], TABLE_INIT_STD, rng),
            w_alpha: gaussian(&[d], TABLE_INIT_STD, rng),
            w_beta: gaussian(&[d], TABLE_INIT_STD, rng),
            interaction_mlp: Mlp::init(2 * d, 2 * d, d, false, rng),
            pattern_mlp: Mlp::init(2 * d, 2 * d, d, false, rng),
            epsilon,
        }
    }

    pub fn zeros_like(&self) -> Self {
        EmbeddingTables {
            question_table: Tensor::zeros(self.question_table.shape()),
            concept_table: Tensor::zeros(self.concept_table.shape()),
            w_alpha: Tensor::zeros(self.w_alpha.shape()),
            w_beta: Tensor::zeros(self.w_beta.shape()),
            interaction_mlp: self.interaction_mlp.zeros_like(),
            pattern_mlp: self.pattern_mlp.zeros_like(),
            epsilon: self.epsilon,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_alpha.len()
    }

    pub fn num_questions(&self) -> usize {
        self.question_table.rows() / 2
    }

    pub fn num_concepts(&self) -> usize {
        self.concept_table.rows() / 2
    }

    /// Raw `(α_raw, β_raw)` row for `(id, r)`.
    pub fn embed(&self, kind: EmbedKind, id: usize, response: u8) -> Result<(&[f64], &[f64])> {
        let (table, vocab) = match kind {
            EmbedKind::Question => (&self.question_table, self.num_questions()),
            EmbedKind::Concept => (&self.concept_table, self.num_concepts()),
        };
        let row = table.row(response_offset_index(id, response, vocab)?);
        Ok(row.split_at(self.dim()))
    }

    /// Conjunction of the concept-level and difficulty-modulated
    /// question-level embeddings, in that order.
    pub fn build_interaction(
        &self,
        question: usize,
        concept: usize,
        response: u8,
        difficulty: f64,
    ) -> Result<BetaEmbedding> {
        Ok(self
            .interaction_forward(question, concept, response, difficulty, None)?
            .0)
    }

    /// `(target⁺, target⁻)` for the next question.
    pub fn build_targets(
        &self,
        question: usize,
        concept: usize,
        difficulty: f64,
    ) -> Result<(BetaEmbedding, BetaEmbedding)> {
        Ok((
            self.build_interaction(question, concept, 1, difficulty)?,
            self.build_interaction(question, concept, 0, difficulty)?,
        ))
    }

    pub(crate) fn interaction_forward(
        &self,
        question: usize,
        concept: usize,
        response: u8,
        difficulty: f64,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<(BetaEmbedding, InteractionCache)> {
        let d = self.dim();
        let q_row = response_offset_index(question, response, self.num_questions())?;
        let c_row = response_offset_index(concept, response, self.num_concepts())?;
        let (ca, cb) = self.concept_table.row(c_row).split_at(d);
        let (qa, qb) = self.question_table.row(q_row).split_at(d);
        let concept_emb = positive(ca, cb, self.epsilon);
        let question_emb = modulate_difficulty(
            qa,
            qb,
            difficulty,
            self.w_alpha.values(),
            self.w_beta.values(),
            self.epsilon,
        );
        let (zc, cache_c) = self
            .interaction_mlp
            .forward(&concept_emb.concat(), dropout.as_deref_mut());
        let (zq, cache_q) = self.interaction_mlp.forward(&question_emb.concat(), dropout);
        let (out, weights) = combine(&[&concept_emb, &question_emb], &[&zc, &zq]);
        Ok((
            out,
            InteractionCache {
                q_row,
                c_row,
                difficulty,
                concept: concept_emb,
                question: question_emb,
                weights,
                mlp: [cache_c, cache_q],
            },
        ))
    }

    /// Accumulates gradients of an interaction build into `grad`.
    pub(crate) fn interaction_backward(
        &self,
        cache: &InteractionCache,
        d_alpha: &[f64],
        d_beta: &[f64],
        grad: &mut EmbeddingTables,
    ) {
        let d = self.dim();
        let items = [&cache.concept, &cache.question];
        let mut d_items = vec![(vec![0.0; d], vec![0.0; d]); 2];
        let mut d_logits = vec![vec![0.0; d]; 2];
        combine_backward(&items, &cache.weights, d_alpha, d_beta, &mut d_items, &mut d_logits);
        for (k, dz) in d_logits.iter().enumerate() {
            let dx = self
                .interaction_mlp
                .backward(&cache.mlp[k], dz, &mut grad.interaction_mlp);
            let (dxa, dxb) = dx.split_at(d);
            d_items[k].0.iter_mut().zip(dxa).for_each(|(a, b)| *a += b);
            d_items[k].1.iter_mut().zip(dxb).for_each(|(a, b)| *a += b);
        }

        // concept: softplus(raw) + ε
        let c_raw = self.concept_table.row(cache.c_row).to_vec();
        let gc = grad.concept_table.row_mut(cache.c_row);
        for j in 0..d {
            gc[j] += d_items[0].0[j] * sigmoid(c_raw[j]);
            gc[d + j] += d_items[0].1[j] * sigmoid(c_raw[d + j]);
        }

        // question: softplus(raw + w·d_q) + ε
        let q_raw = self.question_table.row(cache.q_row).to_vec();
        let (wa, wb) = (self.w_alpha.values(), self.w_beta.values());
        for j in 0..d {
            let pa = d_items[1].0[j] * sigmoid(q_raw[j] + wa[j] * cache.difficulty);
            let pb = d_items[1].1[j] * sigmoid(q_raw[d + j] + wb[j] * cache.difficulty);
            let gq = grad.question_table.row_mut(cache.q_row);
            gq[j] += pa;
            gq[d + j] += pb;
            grad.w_alpha.values_mut()[j] += pa * cache.difficulty;
            grad.w_beta.values_mut()[j] += pb * cache.difficulty;
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct InteractionCache {
    q_row: usize,
    c_row: usize,
    difficulty: f64,
    concept: BetaEmbedding,
    question: BetaEmbedding,
    weights: Vec<Vec<f64>>,
    mlp: [MlpCache; 2],
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn constant_mlp(d: usize) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Mlp::init(2 * d, 2 * d, d, false, &mut rng);
        m.w2.values_mut().iter_mut().for_each(|v| *v = 0.0);
        m
    }

    #[test]
    fn embedding_rejects_nonpositive() {
        assert!(BetaEmbedding::new(vec![1.0], vec![0.0]).is_err());
        assert!(BetaEmbedding::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn expectation_examples() {
        for (a, b, e) in [(1.0, 1.0, 0.5), (3.0, 1.0, 0.75), (2.0, 6.0, 0.25)] {
            let p = BetaEmbedding::uniform(1, a, b).unwrap();
            assert!((expectation(&p)[0] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn kl_of_identical_is_zero() {
        let p = BetaEmbedding::new(vec![0.3, 2.0, 7.5], vec![1.1, 0.2, 3.0]).unwrap();
        assert!(beta_kl(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kl_closed_form_values() {
        let uniform = BetaEmbedding::uniform(1, 1.0, 1.0).unwrap();
        let bump = BetaEmbedding::uniform(1, 2.0, 2.0).unwrap();
        // KL(Beta(2,2) ∥ U) = ln 6 − 5/3 ; KL(U ∥ Beta(2,2)) = ln(1/6) + 2
        let forward = beta_kl(&bump, &uniform).unwrap();
        let reverse = beta_kl(&uniform, &bump).unwrap();
        assert!((forward - (6f64.ln() - 5.0 / 3.0)).abs() < 1e-12);
        assert!((reverse - (2.0 - 6f64.ln())).abs() < 1e-12);
        assert!((forward - 0.125_09).abs() < 1e-5);
        assert!((reverse - 0.208_24).abs() < 1e-5);
    }

    #[test]
    fn kl_rejects_bad_inputs() {
        let p = BetaEmbedding::uniform(2, 1.0, 1.0).unwrap();
        let q = BetaEmbedding::uniform(3, 1.0, 1.0).unwrap();
        assert!(matches!(beta_kl(&p, &q), Err(Error::Shape(_))));
        let bad = BetaEmbedding {
            alpha: vec![-1.0, 1.0],
            beta: vec![1.0, 1.0],
        };
        assert!(matches!(beta_kl(&p, &bad), Err(Error::Domain { .. })));
    }

    #[test]
    fn conjunction_of_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mlp = Mlp::init(6, 6, 3, false, &mut rng);
        let p = BetaEmbedding::new(vec![0.5, 1.5, 2.5], vec![3.0, 0.1, 1.0]).unwrap();
        assert_eq!(conjunction(std::slice::from_ref(&p), &mlp).unwrap(), p);
        assert!(conjunction(&[], &mlp).is_err());
    }

    #[test]
    fn constant_mlp_gives_elementwise_mean() {
        let mlp = constant_mlp(2);
        let a = BetaEmbedding::uniform(2, 1.0, 3.0).unwrap();
        let b = BetaEmbedding::uniform(2, 3.0, 1.0).unwrap();
        let out = conjunction(&[a, b], &mlp).unwrap();
        for j in 0..2 {
            assert!((out.alpha[j] - 2.0).abs() < 1e-15);
            assert!((out.beta[j] - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn modulation_examples() {
        let zero = [0.0];
        let p = modulate_difficulty(&zero, &zero, 0.8, &zero, &zero, EPSILON);
        assert!((p.alpha[0] - (std::f64::consts::LN_2 + EPSILON)).abs() < 1e-15);
        let q = modulate_difficulty(&zero, &zero, 0.5, &[1.0], &[1.0], EPSILON);
        assert!((q.alpha[0] - (0.974_076_984_180_107_6 + EPSILON)).abs() < 1e-14);
        let r = modulate_difficulty(&[-1e6], &[-1e6], 0.5, &[1.0], &[1.0], EPSILON);
        assert!(r.alpha[0] >= EPSILON && r.beta[0] >= EPSILON);
    }

    #[test]
    fn embed_rows_depend_on_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = EmbeddingTables::init(5, 3, 4, EPSILON, &mut rng);
        let (a0, _) = t.embed(EmbedKind::Question, 2, 0).unwrap();
        let (a0b, _) = t.embed(EmbedKind::Question, 2, 0).unwrap();
        let (a1, _) = t.embed(EmbedKind::Question, 2, 1).unwrap();
        assert_eq!(a0, a0b);
        assert_ne!(a0, a1);
        assert!(t.embed(EmbedKind::Concept, 3, 0).is_err());
    }

    #[test]
    fn identical_raw_rows_with_constant_mlp_are_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t = EmbeddingTables::init(1, 1, 3, EPSILON, &mut rng);
        t.interaction_mlp = constant_mlp(3);
        t.w_alpha.values_mut().iter_mut().for_each(|v| *v = 0.0);
        t.w_beta.values_mut().iter_mut().for_each(|v| *v = 0.0);
        let row = t.concept_table.row(1).to_vec();
        t.question_table.row_mut(1).copy_from_slice(&row);
        let out = t.build_interaction(0, 0, 1, 0.4).unwrap();
        let (ra, rb) = row.split_at(3);
        let expected = positive(ra, rb, EPSILON);
        for j in 0..3 {
            assert!((out.alpha[j] - expected.alpha[j]).abs() < 1e-15);
            assert!((out.beta[j] - expected.beta[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn targets_differ_and_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = EmbeddingTables::init(4, 2, 4, EPSILON, &mut rng);
        let (plus, minus) = t.build_targets(3, 1, 0.5).unwrap();
        let (plus2, minus2) = t.build_targets(3, 1, 0.5).unwrap();
        assert_eq!(plus, plus2);
        assert_eq!(minus, minus2);
        let max_diff = plus
            .alpha
            .iter()
            .zip(&minus.alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 1e-9);
        assert!(plus.min_param() >= EPSILON && minus.min_param() >= EPSILON);
    }
}
