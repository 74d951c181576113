use proptest::prelude::{prop, prop_assert, proptest};
use rand::seq::SliceRandom;

use super::*;
use crate::derived::{augment_domain, AugmentationSpec};
use crate::domains;
use crate::grounding::GroundAtom;
use crate::pddl::{parse_domain, ObjId, PredId};

fn tiny_domain() -> Domain {
    parse_domain(
        "(define (domain tiny) (:requirements :strips)
           (:predicates (flag) (u ?x) (e ?x ?y))
           (:action noop :parameters () :precondition () :effect ()))",
    )
    .unwrap()
}

fn hyper(k: usize, layers: usize, seed: u64) -> GnnHyper {
    GnnHyper { k, layers, alpha: 8.0, seed }
}

fn frame(n: usize, k: usize, seed: u64) -> EmbeddingFrame {
    initial_embeddings(n, k, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn smax_examples() {
    assert_eq!(smax(&[1.5], 8.0).unwrap(), 1.5);
    assert_eq!(smax(&[-3.0], 0.1).unwrap(), -3.0);
    let v = smax(&[0.0, 0.0], 8.0).unwrap();
    assert!((v - 2f64.ln() / 8.0).abs() < 1e-15);
    assert!((v - 0.0866434).abs() < 1e-7);
    assert_eq!(smax(&[], 8.0), Err(GnnError::EmptySmax));
    // Large inputs do not overflow.
    assert!((smax(&[1000.0, 1000.0], 8.0).unwrap() - (1000.0 + 2f64.ln() / 8.0)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn smax_sandwich(xs in prop::collection::vec(-50.0f64..50.0, 1..40), alpha in 0.5f64..20.0) {
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s = smax(&xs, alpha).unwrap();
        prop_assert!(max <= s);
        prop_assert!(s <= max + (xs.len() as f64).ln() / alpha + 1e-12);
    }
}

#[test]
fn parameter_shapes() {
    let d = tiny_domain();
    let p = init_params(&d, hyper(4, 2, 0)).unwrap();
    let layout = p.layout();
    assert_eq!(layout.predicates[0], (0, None));
    let e = layout.predicates[2].1.unwrap();
    assert_eq!((e.input, e.output), (8, 8));
    assert_eq!((layout.update.input, layout.update.output), (8, 4));
    assert_eq!((layout.readout2.input, layout.readout2.output), (4, 1));
    assert!(matches!(init_params(&d, hyper(5, 2, 0)), Err(GnnError::OddDimension(5))));
    assert!(matches!(init_params(&d, hyper(4, 0, 0)), Err(GnnError::NoLayers)));
}

#[test]
fn parameter_count_blocks_k64() {
    let blocks = domains::load("blocks").unwrap();
    let d = augment_domain(&blocks, &AugmentationSpec::preset("blocks-above").unwrap()).unwrap();
    let p = init_params(&d, GnnHyper::default()).unwrap();
    let k = 64usize;
    // Two dense layers with hidden width equal to input width.
    let mlp = |i: usize, o: usize| i * i + i + i * o + o;
    let arities: Vec<usize> = d.predicates.iter().map(|p| p.arity).collect();
    // Blocks: on/2 ontable/1 clear/1 handempty/0 holding/1, their goal
    // versions, and above/2.
    assert_eq!(arities, [2, 1, 1, 0, 1, 2, 1, 1, 0, 1, 2]);
    let expected = 3 * mlp(2 * k, 2 * k) + 6 * mlp(k, k) + mlp(2 * k, k) + mlp(k, k) + mlp(k, 1);
    assert_eq!(p.len(), expected);
}

#[test]
fn init_is_deterministic_and_scaled() {
    let d = tiny_domain();
    let a = init_params(&d, hyper(8, 2, 3)).unwrap();
    let b = init_params(&d, hyper(8, 2, 3)).unwrap();
    assert_eq!(a.values(), b.values());
    assert_ne!(a.values(), init_params(&d, hyper(8, 2, 4)).unwrap().values());
    let u = a.layout().update;
    let bound = 1.0 / (u.input as f64).sqrt();
    assert!(a.values()[u.w1()].iter().all(|w| w.abs() <= bound));
    assert!(a.values()[u.b1()].iter().all(|&b| b == 0.0));
    assert!(a.values()[u.b2()].iter().all(|&b| b == 0.0));
}

#[test]
fn initial_embedding_halves() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = initial_embeddings(625, 32, &mut rng);
    let mut randoms = Vec::new();
    for o in 0..625 {
        assert!(f.row(o)[..16].iter().all(|&v| v == 0.0));
        randoms.extend_from_slice(&f.row(o)[16..]);
    }
    assert_eq!(randoms.len(), 10_000);
    let mean = randoms.iter().sum::<f64>() / randoms.len() as f64;
    assert!(mean.abs() < 0.05, "mean {mean}");
    let var = randoms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / randoms.len() as f64;
    assert!((var - 1.0).abs() < 0.1, "variance {var}");
    assert_eq!(frame(3, 4, 9), frame(3, 4, 9));
}

#[test]
fn degenerate_and_zero_inputs() {
    let d = tiny_domain();
    let mut p = init_params(&d, hyper(4, 3, 1)).unwrap();
    let empty = State::default();
    let f = frame(1, 4, 2);
    let v1 = forward(&p, &empty, &f).unwrap().value();
    assert!(v1.is_finite());
    assert_eq!(forward(&p, &empty, &f).unwrap().value(), v1);

    let g = backward(&forward(&p, &empty, &f).unwrap(), &p).unwrap();
    for (_, mlp) in &p.layout().predicates {
        if let Some(m) = mlp {
            assert!(g.values[m.offset..m.end()].iter().all(|&x| x == 0.0));
        }
    }
    let out_bias = p.layout().readout2.b2().start;
    assert_eq!(g.values[out_bias], 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_state(&d, 4, 0.5, &mut rng);
    p.values_mut().fill(0.0);
    assert_eq!(forward(&p, &s, &frame(4, 4, 1)).unwrap().value(), 0.0);
}

#[test]
fn errors_are_reported() {
    let d = tiny_domain();
    let p = init_params(&d, hyper(4, 1, 1)).unwrap();
    let bad_pred = State::new(vec![GroundAtom::new(PredId(7), [ObjId(0)])]);
    assert!(matches!(forward(&p, &bad_pred, &frame(1, 4, 0)), Err(GnnError::UnknownPredicate(7))));
    let bad_arity = State::new(vec![GroundAtom::new(PredId(1), [ObjId(0), ObjId(0)])]);
    assert!(matches!(forward(&p, &bad_arity, &frame(1, 4, 0)), Err(GnnError::Arity { .. })));
    let bad_obj = State::new(vec![GroundAtom::new(PredId(1), [ObjId(3)])]);
    assert!(matches!(forward(&p, &bad_obj, &frame(2, 4, 0)), Err(GnnError::ObjectOutOfRange { .. })));
    let wrong_k = frame(2, 6, 0);
    assert!(matches!(forward(&p, &State::default(), &wrong_k), Err(GnnError::FrameShape { .. })));

    let mut q = p.clone();
    let tape = forward(&q, &State::default(), &frame(1, 4, 0)).unwrap();
    q.values_mut()[0] += 1.0;
    assert_eq!(backward(&tape, &q).unwrap_err(), GnnError::StaleTape);
    // A tape from one parameter set cannot be replayed against a clone.
    let tape = forward(&p, &State::default(), &frame(1, 4, 0)).unwrap();
    assert_eq!(backward(&tape, &p.clone()).unwrap_err(), GnnError::StaleTape);
}

#[test]
fn permutation_equivariance() {
    let d = tiny_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..10 {
        let p = init_params(&d, hyper(6, 3, trial)).unwrap();
        let n = 5;
        let s = random_state(&d, n, 0.3, &mut rng);
        let f = frame(n, 6, trial);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let permuted = State::new(
            s.atoms()
                .iter()
                .map(|a| GroundAtom::new(a.pred, a.args.iter().map(|o| ObjId(perm[o.index()] as u32))))
                .collect(),
        );
        let v = forward(&p, &s, &f).unwrap().value();
        let w = forward(&p, &permuted, &f.permuted(&perm)).unwrap().value();
        assert!((v - w).abs() <= 1e-9 * v.abs().max(1.0), "{v} vs {w}");
    }
}

#[test]
fn gradients_match_finite_differences() {
    let d = tiny_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut total = GradcheckReport::default();
    for seed in 0..3 {
        let p = init_params(&d, hyper(4, 2, seed)).unwrap();
        for _ in 0..3 {
            let n = rng.random_range(1..=4);
            let s = random_state(&d, n, 0.4, &mut rng);
            let f = initial_embeddings(n, 4, &mut rng);
            total.merge(&gradcheck(&p, &s, &f).unwrap());
        }
    }
    assert!(total.max_rel_error < 1e-4, "{total:?}");
    assert!(total.skipped * 20 < total.checked, "{total:?}");
}

#[test]
fn smax_bounds_hold_on_tape() {
    let d = tiny_domain();
    let p = init_params(&d, hyper(8, 4, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = random_state(&d, 6, 0.4, &mut rng);
    let tape = forward(&p, &s, &frame(6, 8, 1)).unwrap();
    assert!(tape.max_smax_bound_violation() <= 1e-12);
}

#[test]
fn value_modes() {
    let d = tiny_domain();
    let p = init_params(&d, hyper(8, 2, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = random_state(&d, 5, 0.3, &mut rng);
    let a = value_of(&p, &s, 5, EmbeddingMode::FixedSeed(3), &mut rng).unwrap();
    let b = value_of(&p, &s, 5, EmbeddingMode::FixedSeed(3), &mut rng).unwrap();
    assert_eq!(a, b);
    let samples: Vec<f64> =
        (0..100).map(|_| value_of(&p, &s, 5, EmbeddingMode::Stochastic, &mut rng).unwrap()).collect();
    let mean = samples.iter().sum::<f64>() / 100.0;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0;
    assert!(var.is_finite() && var > 0.0);

    // Larger instances than any seen before work with the same parameters.
    let big = random_state(&d, 40, 0.05, &mut rng);
    assert!(value_of(&p, &big, 40, EmbeddingMode::FixedSeed(0), &mut rng).unwrap().is_finite());
}

#[test]
fn goal_augmentation_changes_value() {
    let blocks = domains::load("blocks").unwrap();
    let aug = crate::derived::Augmenter::new(&blocks, &AugmentationSpec::goal_only()).unwrap();
    let inst = crate::pddl::parse_instance(&crate::generators::blocks(4, 1), &blocks).unwrap();
    let p = init_params(aug.domain(), hyper(8, 2, 0)).unwrap();
    let base = State::new(inst.init.clone());
    let f = frame(4, 8, 0);
    let plain = forward(&p, &base, &f).unwrap().value();
    let with_goal = forward(&p, &aug.augment(&base, &inst.goal), &f).unwrap().value();
    assert_ne!(plain, with_goal);
}

#[test]
fn saved_model_round_trip() {
    let d = tiny_domain();
    let p = init_params(&d, hyper(4, 2, 8)).unwrap();
    let saved = SavedModel::from_params(&p);
    let json = serde_json::to_string(&saved).unwrap();
    let back: SavedModel = serde_json::from_str(&json).unwrap();
    assert_eq!(back.to_params(&d).unwrap(), p);
    let other = domains::load("blocks").unwrap();
    assert!(matches!(back.to_params(&other), Err(GnnError::SignatureMismatch { .. })));
}
