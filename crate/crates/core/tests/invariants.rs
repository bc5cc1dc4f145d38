//! Property tests checked against oracles that live here, independent of
//! the library's own formulas.

use std::collections::HashSet;

use plkt::dataio::{generate_synthetic, split_dataset, Interaction, StudentSequence, SynthParams, NUM_FOLDS};
use plkt::diffcore::{digamma, lgamma, trigamma, AdamState, Graph, NamedParams, Tensor, Var};
use plkt::metrics::auc;
use plkt::model::{forward_sequence, Architecture, ModelParams};
use proptest::prelude::*;

#[derive(Clone, Copy, Debug)]
enum Op {
    Softplus,
    Sigmoid,
    AddOther,
    MulOther,
    Softmax,
    LogOfSoftplus,
    LgammaOfShifted,
    DigammaOfShifted,
    Exp,
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::Softplus),
        Just(Op::Sigmoid),
        Just(Op::AddOther),
        Just(Op::MulOther),
        Just(Op::Softmax),
        Just(Op::LogOfSoftplus),
        Just(Op::LgammaOfShifted),
        Just(Op::DigammaOfShifted),
        Just(Op::Exp),
    ]
}

/// Builds `sum(f(x, y))` for a random chain of ops and returns the loss.
fn build(g: &mut Graph, ops: &[Op], x: Var, y: Var, shift: Var) -> Var {
    let mut cur = x;
    for op in ops {
        cur = match op {
            Op::Softplus => g.softplus(cur),
            Op::Sigmoid => g.sigmoid(cur),
            Op::AddOther => g.add(cur, y),
            Op::MulOther => g.mul(cur, y),
            Op::Softmax => g.softmax(cur),
            Op::LogOfSoftplus => {
                let s = g.softplus(cur).unwrap();
                let s = g.add(s, shift).unwrap();
                g.log(s)
            }
            Op::LgammaOfShifted => {
                let s = g.softplus(cur).unwrap();
                let s = g.add(s, shift).unwrap();
                g.lgamma(s)
            }
            Op::DigammaOfShifted => {
                let s = g.softplus(cur).unwrap();
                let s = g.add(s, shift).unwrap();
                g.digamma(s)
            }
            Op::Exp => {
                let s = g.sigmoid(cur).unwrap();
                g.exp(s)
            }
        }
        .unwrap();
    }
    g.sum(cur).unwrap()
}

fn eval(ops: &[Op], xs: &[f64], ys: &[f64]) -> f64 {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(xs.to_vec()));
    let y = g.leaf(Tensor::vector(ys.to_vec()));
    let shift = g.leaf(Tensor::vector(vec![0.5; xs.len()]));
    let loss = build(&mut g, ops, x, y, shift);
    g.value(loss)[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_graphs_match_central_differences(
        ops in prop::collection::vec(op_strategy(), 1..6),
        xs in prop::collection::vec(-1.5f64..1.5, 1..4),
        seed_y in -1.0f64..1.0,
    ) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, _)| seed_y + 0.3 * i as f64).collect();
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(xs.clone()).with_grad());
        let y = g.leaf(Tensor::vector(ys.clone()).with_grad());
        let shift = g.leaf(Tensor::vector(vec![0.5; xs.len()]));
        let loss = build(&mut g, &ops, x, y, shift);
        g.backward(loss).unwrap();
        let h = 1e-6;
        for (var, base, is_x) in [(x, &xs, true), (y, &ys, false)] {
            let analytic = g.tensor(var).grad().unwrap().to_vec();
            for i in 0..base.len() {
                let mut up = base.clone();
                let mut down = base.clone();
                up[i] += h;
                down[i] -= h;
                let f = |v: &Vec<f64>| if is_x { eval(&ops, v, &ys) } else { eval(&ops, &xs, v) };
                let numeric = (f(&up) - f(&down)) / (2.0 * h);
                let scale = analytic[i].abs().max(numeric.abs()).max(1.0);
                prop_assert!((analytic[i] - numeric).abs() / scale < 1e-6,
                    "{ops:?} grad {} vs {}", analytic[i], numeric);
            }
        }
    }

    #[test]
    fn special_function_recurrences(x in 0.05f64..40.0) {
        let tol = |v: f64| 1e-11 * v.abs().max(1.0);
        let l = lgamma(x + 1.0).unwrap() - lgamma(x).unwrap() - x.ln();
        prop_assert!(l.abs() < tol(lgamma(x).unwrap()) * 10.0, "lgamma recurrence off by {l}");
        let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x;
        prop_assert!(d.abs() < tol(1.0 / x), "digamma recurrence off by {d}");
        let t = trigamma(x + 1.0).unwrap() - trigamma(x).unwrap() + 1.0 / (x * x);
        prop_assert!(t.abs() < tol(1.0 / (x * x)), "trigamma recurrence off by {t}");
    }

    #[test]
    fn special_functions_match_statrs(x in 0.01f64..100.0) {
        let lg = statrs::function::gamma::ln_gamma(x);
        prop_assert!((lgamma(x).unwrap() - lg).abs() < 1e-10 * lg.abs().max(1.0));
        let dg = statrs::function::gamma::digamma(x);
        prop_assert!((digamma(x).unwrap() - dg).abs() < 1e-9 * dg.abs().max(1.0));
    }

    #[test]
    fn adam_first_step_is_scale_equivariant(
        grads in prop::collection::vec(prop_oneof![-5.0f64..-0.01, 0.01f64..5.0], 1..6),
        scale in 0.1f64..10.0,
    ) {
        let init = vec![0.3; grads.len()];
        let run = |g: Vec<f64>| {
            let mut p = NamedParams(vec![("w".into(), Tensor::vector(init.clone()))]);
            let mut adam = AdamState::new(&p, 1e-2);
            adam.step(&mut p, &[g]).unwrap();
            p.0[0].1.values().to_vec()
        };
        let a = run(grads.clone());
        let b = run(grads.iter().map(|g| g * scale).collect());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms(
        pairs in prop::collection::vec((-3.0f64..3.0, any::<bool>()), 2..100),
    ) {
        let preds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<u8> = pairs.iter().map(|p| p.1 as u8).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let base = auc(&preds, &labels).unwrap();
        let exp: Vec<f64> = preds.iter().map(|p| p.exp()).collect();
        let times: Vec<f64> = preds.iter().map(|p| p * 10.0).collect();
        prop_assert_eq!(auc(&exp, &labels).unwrap(), base);
        prop_assert_eq!(auc(&times, &labels).unwrap(), base);
    }
}

fn tiny_model(levels: usize) -> ModelParams {
    ModelParams::init(
        Architecture {
            num_questions: 5,
            num_concepts: 3,
            dim: 4,
            levels,
            max_len: 12,
            global_hidden: 6,
            lambda: 0.7,
            epsilon: 1e-4,
        },
        11,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn appending_interactions_leaves_earlier_predictions_unchanged(
        xs in prop::collection::vec((0usize..5, 0u8..2), 3..12),
        cut in 2usize..11,
    ) {
        let cut = cut.min(xs.len());
        let seq: Vec<Interaction> = xs.iter().map(|&(q, r)| Interaction {
            question_id: q,
            concept_id: q % 3,
            response: r,
        }).collect();
        let params = tiny_model(3);
        let difficulty = plkt::dataio::build_difficulty(&[], 5);
        let full = forward_sequence(&params, &difficulty, &StudentSequence::new("s", seq.clone())).unwrap();
        let prefix = forward_sequence(&params, &difficulty, &StudentSequence::new("s", seq[..cut].to_vec())).unwrap();
        prop_assert_eq!(&full[..prefix.len()], &prefix[..]);
        prop_assert!(full.iter().all(|&p| p > 0.0 && p < 1.0));
    }
}

#[test]
fn fold_test_sets_partition_twenty_students() {
    let seqs: Vec<StudentSequence> = (0..20)
        .map(|i| {
            StudentSequence::new(
                format!("u{i}"),
                vec![
                    Interaction {
                        question_id: 0,
                        concept_id: 0,
                        response: 1,
                    };
                    3
                ],
            )
        })
        .collect();
    let mut seen = HashSet::new();
    for fold in 0..NUM_FOLDS {
        let split = split_dataset(&seqs, 7, fold).unwrap();
        assert_eq!(split.test.len(), 4);
        assert_eq!(split.validation.len(), 2);
        assert_eq!(split.train.len(), 14);
        let ids = |v: &[StudentSequence]| v.iter().map(|s| s.student_id.clone()).collect::<HashSet<_>>();
        let (tr, va, te) = (ids(&split.train), ids(&split.validation), ids(&split.test));
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        for id in te {
            assert!(seen.insert(id), "student in two test folds");
        }
    }
    assert_eq!(seen.len(), 20);
}

/// Expected accuracy of the simulator without streaks: after `n` practices
/// of a concept the mastery probability is `1 − (1−m₀)(1−ℓ)ⁿ`, and with
/// uniformly drawn concepts `E[(1−ℓ)ⁿ] = (1 − ℓ/C)ᵗ` before step `t`.
#[test]
fn synthetic_accuracy_matches_closed_form() {
    let params = SynthParams {
        num_students: 4000,
        seq_len: 30,
        seed: 5,
        ..SynthParams::default()
    };
    let data = generate_synthetic(&params).unwrap();
    let c = params.num_concepts as f64;
    let expected: f64 = (0..params.seq_len)
        .map(|t| {
            let mastered = 1.0 - (1.0 - params.init_mastery) * (1.0 - params.learn_rate / c).powi(t as i32);
            params.guess + (1.0 - params.slip - params.guess) * mastered
        })
        .sum::<f64>()
        / params.seq_len as f64;
    let observed = plkt::dataio::overall_accuracy(&data.sequences);
    let n = (params.num_students * params.seq_len) as f64;
    let sd = (expected * (1.0 - expected) / n).sqrt();
    assert!(
        (observed - expected).abs() < 4.0 * sd * 2.0,
        "observed {observed}, expected {expected} (sd {sd})"
    );
}
