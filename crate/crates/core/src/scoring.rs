//! Pattern–target matching, local/global/fused weights, evidence
//! aggregation and the outcome probability.
//!
//! Index `0` of every `[_; 2]` array is the correct-response outcome (`+`),
//! index `1` the incorrect one (`−`).

use serde::{Deserialize, Serialize};

use crate::betaembed::{beta_kl, expectation, BetaEmbedding};
use crate::diffcore::{sigmoid, softmax_backward, softmax_in_place, softplus};
use crate::error::{Error, Result};
use crate::mlp::Mlp;

pub const PLUS: usize = 0;
pub const MINUS: usize = 1;

/// Logit assigned to masked positions before a softmax.
pub const MASKED_LOGIT: f64 = -1e30;

/// Distances `D = KL(target ∥ pattern)` and scores `s = γ − D` of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchScores {
    pub level: usize,
    pub distances: [Vec<f64>; 2],
    pub scores: [Vec<f64>; 2],
}

/// Matches every pattern of every level against both targets.
pub fn match_patterns(
    patterns: &[Vec<BetaEmbedding>],
    target_plus: &BetaEmbedding,
    target_minus: &BetaEmbedding,
    gamma: f64,
) -> Result<Vec<MatchScores>> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::Domain {
            func: "match",
            arg: gamma,
        });
    }
    patterns
        .iter()
        .enumerate()
        .map(|(i, level)| {
            let mut distances = [Vec::new(), Vec::new()];
            for (o, target) in [target_plus, target_minus].into_iter().enumerate() {
                distances[o] = level.iter().map(|p| beta_kl(target, p)).collect::<Result<_>>()?;
            }
            let scores = distances.clone().map(|d| d.iter().map(|x| gamma - x).collect());
            Ok(MatchScores {
                level: i + 1,
                distances,
                scores,
            })
        })
        .collect()
}

/// Softmax of the scores over the valid patterns of a level; masked
/// patterns get weight 0. `None` when no pattern is valid.
pub fn local_weights(scores: &[f64], valid: &[bool]) -> Option<Vec<f64>> {
    masked_softmax(scores, valid)
}

fn masked_softmax(logits: &[f64], valid: &[bool]) -> Option<Vec<f64>> {
    if !valid.iter().any(|&v| v) {
        return None;
    }
    let mut z: Vec<f64> = logits
        .iter()
        .zip(valid)
        .map(|(&x, &ok)| if ok { x } else { MASKED_LOGIT })
        .collect();
    softmax_in_place(&mut z);
    Some(z)
}

/// `w = η + λ·δ`.
pub fn fuse_weights(eta: &[f64], delta: &[f64], lambda: f64) -> Vec<f64> {
    eta.iter().zip(delta).map(|(e, d)| e + lambda * d).collect()
}

/// `Σ_l Σ_k w_k s_k` over the given levels; levels are `(weights, scores)`.
pub fn aggregate(levels: &[(&[f64], &[f64])]) -> f64 {
    levels
        .iter()
        .map(|(w, s)| w.iter().zip(s.iter()).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// `σ(s⁺ − s⁻)`
pub fn predict(s_plus: f64, s_minus: f64) -> f64 {
    sigmoid(s_plus - s_minus)
}

/// Global importance of the level-`level` patterns from the expectation
/// matrix of the history, zero-padded to `max_len` rows.
pub fn global_weights(history: &[BetaEmbedding], level: usize, mlp: &Mlp, max_len: usize) -> Result<Vec<f64>> {
    let t = history.len();
    if t == 0 || t > max_len {
        return Err(Error::Contract(format!("history length {t} outside 1..={max_len}")));
    }
    let d = history[0].dim();
    let mut flat = vec![0.0; max_len * d];
    for (i, e) in history.iter().enumerate() {
        flat[i * d..(i + 1) * d].copy_from_slice(&expectation(e));
    }
    let logits = mlp.infer(&flat);
    let n_valid = (t + 1).saturating_sub(level);
    let valid: Vec<bool> = (0..logits.len()).map(|k| k < n_valid).collect();
    let delta = masked_softmax(&logits, &valid)
        .ok_or_else(|| Error::Contract(format!("level {level} has no pattern for history length {t}")))?;
    Ok(delta)
}

/// Learnable temperature, fusion coefficient and per-level global MLPs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams {
    /// `γ = softplus(gamma_raw)`
    pub gamma_raw: crate::diffcore::Tensor,
    pub lambda: f64,
    /// `global_mlps[l − 1]` maps `max_len·d → max_len − l + 1`.
    pub global_mlps: Vec<Mlp>,
}

impl ScoringParams {
    pub fn gamma(&self) -> f64 {
        softplus(self.gamma_raw.values()[0])
    }
}

/// Inverse of softplus, for initializing `γ`.
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Everything computed for one level while scoring one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelScore {
    pub level: usize,
    pub distances: [Vec<f64>; 2],
    pub scores: [Vec<f64>; 2],
    pub eta: [Vec<f64>; 2],
    pub delta: Vec<f64>,
    pub fused: [Vec<f64>; 2],
    pub level_sum: [f64; 2],
}

impl LevelScore {
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScore {
    pub gamma: f64,
    pub lambda: f64,
    /// Non-empty levels only.
    pub levels: Vec<LevelScore>,
    pub s_plus: f64,
    pub s_minus: f64,
    pub logit: f64,
    pub probability: f64,
}

/// Scores one target from per-level distances and global logits (both
/// restricted to the valid patterns of each level).
///
/// Local weights are taken as `softmax(−D)`, which equals `softmax(γ − D)`;
/// the logit is assembled as `Σ_l γ(Σw⁺ − Σw⁻) − (Σw⁺D⁺ − Σw⁻D⁻)`, the
/// same quantity as `s⁺ − s⁻` with the `γ` terms grouped.
pub fn score_target(levels: Vec<(usize, [Vec<f64>; 2], Vec<f64>)>, gamma: f64, lambda: f64) -> TargetScore {
    let mut out = Vec::with_capacity(levels.len());
    let (mut s_plus, mut s_minus, mut logit) = (0.0, 0.0, 0.0);
    for (level, distances, global_logits) in levels {
        let n = global_logits.len();
        debug_assert!(n > 0 && distances[PLUS].len() == n && distances[MINUS].len() == n);
        let mut delta = global_logits;
        softmax_in_place(&mut delta);
        let mut eta = [Vec::new(), Vec::new()];
        let mut fused = [Vec::new(), Vec::new()];
        let mut scores = [Vec::new(), Vec::new()];
        let mut level_sum = [0.0; 2];
        let mut weight_sum = [0.0; 2];
        let mut weighted_dist = [0.0; 2];
        for o in [PLUS, MINUS] {
            let mut e: Vec<f64> = distances[o].iter().map(|d| -d).collect();
            softmax_in_place(&mut e);
            let w = fuse_weights(&e, &delta, lambda);
            let s: Vec<f64> = distances[o].iter().map(|d| gamma - d).collect();
            level_sum[o] = w.iter().zip(&s).map(|(a, b)| a * b).sum();
            weight_sum[o] = w.iter().sum();
            weighted_dist[o] = w.iter().zip(&distances[o]).map(|(a, b)| a * b).sum();
            eta[o] = e;
            fused[o] = w;
            scores[o] = s;
        }
        s_plus += level_sum[PLUS];
        s_minus += level_sum[MINUS];
        logit += gamma * (weight_sum[PLUS] - weight_sum[MINUS]) - (weighted_dist[PLUS] - weighted_dist[MINUS]);
        out.push(LevelScore {
            level,
            distances,
            scores,
            eta,
            delta,
            fused,
            level_sum,
        });
    }
    TargetScore {
        gamma,
        lambda,
        levels: out,
        s_plus,
        s_minus,
        logit,
        probability: sigmoid(logit),
    }
}

/// Gradients of the logit of a [`TargetScore`] scaled by `dlogit`.
pub struct TargetScoreGrad {
    /// `d/dD` per level and outcome.
    pub d_distances: Vec<[Vec<f64>; 2]>,
    /// `d/d(global logit)` per level.
    pub d_global_logits: Vec<Vec<f64>>,
    pub d_gamma: f64,
}

pub fn score_target_backward(score: &TargetScore, dlogit: f64) -> TargetScoreGrad {
    let (gamma, lambda) = (score.gamma, score.lambda);
    let mut d_distances = Vec::with_capacity(score.levels.len());
    let mut d_global_logits = Vec::with_capacity(score.levels.len());
    let mut d_gamma = 0.0;
    for lv in &score.levels {
        let n = lv.len();
        let mut d_delta = vec![0.0; n];
        let mut dd = [vec![0.0; n], vec![0.0; n]];
        for (o, sign) in [(PLUS, 1.0), (MINUS, -1.0)] {
            let g = sign * dlogit;
            let w = &lv.fused[o];
            let dist = &lv.distances[o];
            d_gamma += g * w.iter().sum::<f64>();
            // d logit / d w_k = ±(γ − D_k)
            let dw: Vec<f64> = dist.iter().map(|d| g * (gamma - d)).collect();
            for k in 0..n {
                dd[o][k] -= g * w[k];
                d_delta[k] += lambda * dw[k];
            }
            // η = softmax(−D)
            let mut d_neg = vec![0.0; n];
            softmax_backward(&lv.eta[o], &dw, &mut d_neg);
            for k in 0..n {
                dd[o][k] -= d_neg[k];
            }
        }
        let mut dz = vec![0.0; n];
        softmax_backward(&lv.delta, &d_delta, &mut dz);
        d_distances.push(dd);
        d_global_logits.push(dz);
    }
    TargetScoreGrad {
        d_distances,
        d_global_logits,
        d_gamma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn self_match_scores_gamma() {
        let target = BetaEmbedding::new(vec![1.5, 0.4], vec![2.0, 3.0]).unwrap();
        let other = BetaEmbedding::uniform(2, 1.0, 1.0).unwrap();
        let m = match_patterns(&[vec![target.clone()]], &target, &other, 3.5).unwrap();
        assert_eq!(m[0].scores[PLUS][0], 3.5);
        assert!(match_patterns(&[vec![target.clone()]], &target, &other, 0.0).is_err());
    }

    #[test]
    fn quadrature_example_score() {
        let target = BetaEmbedding::uniform(1, 2.0, 2.0).unwrap();
        let pattern = BetaEmbedding::uniform(1, 1.0, 1.0).unwrap();
        let m = match_patterns(&[vec![pattern]], &target, &target, 10.0).unwrap();
        assert!((m[0].scores[PLUS][0] - 9.874_91).abs() < 1e-5);
    }

    #[test]
    fn local_weight_examples() {
        let eta = local_weights(&[1.0, 1.0 + 3f64.ln()], &[true, true]).unwrap();
        assert!((eta[0] - 0.25).abs() < 1e-12 && (eta[1] - 0.75).abs() < 1e-12);
        let uniform = local_weights(&[2.0; 4], &[true; 4]).unwrap();
        assert!(uniform.iter().all(|w| (w - 0.25).abs() < 1e-15));
        let masked = local_weights(&[5.0, 1.0, 1.0], &[false, true, true]).unwrap();
        assert_eq!(masked[0], 0.0);
        assert!(local_weights(&[1.0], &[false]).is_none());
    }

    #[test]
    fn fuse_examples() {
        let eta = [0.2, 0.8];
        assert_eq!(fuse_weights(&eta, &[0.5, 0.5], 0.0), eta.to_vec());
        assert_eq!(fuse_weights(&[0.5, 0.5], &[0.5, 0.5], 1.0), vec![1.0, 1.0]);
    }

    #[test]
    fn aggregate_and_predict_examples() {
        assert_eq!(aggregate(&[(&[1.7], &[4.0])]), 1.7 * 4.0);
        assert_eq!(aggregate(&[(&[0.3, 0.7], &[0.0, 0.0])]), 0.0);
        assert_eq!(aggregate(&[(&[1.0], &[2.0]), (&[1.0], &[5.0])]), 7.0);
        assert_eq!(predict(1.2, 1.2), 0.5);
        assert!((predict(3f64.ln(), 0.0) - 0.75).abs() < 1e-15);
        assert!((predict(0.0, 3f64.ln()) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn global_weights_uniform_with_zero_output_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let max_len = 6;
        let mut mlp = Mlp::init(max_len * 2, 8, max_len - 1, true, &mut rng);
        let history = vec![BetaEmbedding::uniform(2, 1.0, 2.0).unwrap(); 4];
        let delta = global_weights(&history, 2, &mlp, max_len).unwrap();
        assert!((delta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(delta[3..].iter().all(|&w| w == 0.0));
        mlp.w2.values_mut().iter_mut().for_each(|v| *v = 0.0);
        let flat = global_weights(&history, 2, &mlp, max_len).unwrap();
        assert!(flat[..3].iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn score_target_self_match_single_pattern() {
        let s = score_target(vec![(1, [vec![0.0], vec![0.0]], vec![0.3])], 4.0, 0.7);
        assert!((s.s_plus - 1.7 * 4.0).abs() < 1e-12);
        assert_eq!(s.probability, 0.5);
    }

    #[test]
    fn score_backward_matches_finite_differences() {
        let levels = || {
            vec![
                (1, [vec![0.3, 1.2, 0.1], vec![0.9, 0.2, 0.4]], vec![0.1, -0.3, 0.5]),
                (2, [vec![0.7, 0.05], vec![0.3, 1.5]], vec![0.2, 0.0]),
            ]
        };
        let (gamma, lambda) = (2.5, 0.6);
        let base = score_target(levels(), gamma, lambda);
        let g = score_target_backward(&base, 1.0);
        let h = 1e-6;
        for li in 0..2 {
            for o in 0..2 {
                for k in 0..base.levels[li].len() {
                    let mut up = levels();
                    let mut dn = levels();
                    up[li].1[o][k] += h;
                    dn[li].1[o][k] -= h;
                    let fd =
                        (score_target(up, gamma, lambda).logit - score_target(dn, gamma, lambda).logit) / (2.0 * h);
                    assert!((fd - g.d_distances[li][o][k]).abs() < 1e-8);
                }
            }
            for k in 0..base.levels[li].len() {
                let mut up = levels();
                let mut dn = levels();
                up[li].2[k] += h;
                dn[li].2[k] -= h;
                let fd = (score_target(up, gamma, lambda).logit - score_target(dn, gamma, lambda).logit) / (2.0 * h);
                assert!((fd - g.d_global_logits[li][k]).abs() < 1e-8);
            }
        }
        assert!(g.d_gamma.abs() < 1e-12);
        assert!(((base.s_plus - base.s_minus) - base.logit).abs() < 1e-12);
    }

    #[test]
    fn softplus_inverse_roundtrip() {
        for y in [0.1, 1.0, 10.0, 40.0] {
            assert!((softplus(softplus_inverse(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
    }
}
