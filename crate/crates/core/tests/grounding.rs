use groundgram::grounding::{
    contrastive_loss, encode_spans, hinge, negative_weights, GroundingParams, NegativeStrategy,
};
use groundgram::inference::eligible_spans;
use groundgram::tensor::{Graph, ParamStore, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss_of(enc: &[Vec<f64>], scenes: &[Vec<f64>], weights: Option<&[f64]>, eps: f64) -> f64 {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let b = scenes.len();
    let k = enc.len() / b;
    let e = g.constant(Tensor::matrix(enc.len(), enc[0].len(), enc.concat()).unwrap());
    let m = g.constant(Tensor::matrix(b, scenes[0].len(), scenes.concat()).unwrap());
    let w = weights.map(|w| g.constant(Tensor::vector(w.to_vec())));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let neg = negative_weights(k, b, NegativeStrategy::InBatchAll, &mut rng).unwrap();
    let l = contrastive_loss(&mut g, e, m, w, &neg, eps).unwrap();
    g.value(l).item().unwrap()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

#[test]
fn hinge_hand_examples() {
    let (c, m) = ([1.0, 0.0], [1.0, 0.0]);
    assert_eq!(hinge(&c, &m, &[0.0, 1.0], &[0.0, 1.0], 0.5), 0.0);
    let m = unit(&[1.0, 1.0]);
    // cos(c_neg, m) = cos(c, m) = 1/√2, and the scene negative is anti-aligned.
    let h = hinge(&c, &m, &[0.0, 1.0], &[-1.0, 0.0], 0.5);
    assert!((h - 0.5).abs() < 1e-12, "{h}");
    // A swapped pair with margin 0.2: both sides equal 0.2 + 1 - 0.
    let h = hinge(&[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], 0.2);
    assert!((h - 2.4).abs() < 1e-12, "{h}");
}

#[test]
fn three_word_pair_loss_matches_hand_arithmetic() {
    // Rows are span k of caption b at k·B + b; marginals {0.3, 0.7} and {0.5, 0.5}.
    let enc = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8], vec![0.8, 0.6]];
    let scenes = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let l = loss_of(&enc, &scenes, Some(&[0.3, 0.5, 0.7, 0.5]), 0.5);
    // Only the second span of each caption violates the margin: 0.7 + 0.7 each.
    assert!((l - (0.7 * 1.4 + 0.5 * 1.4)).abs() < 1e-12, "{l}");
}

#[test]
fn two_pair_batch_is_the_sum_of_pairwise_hinges() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut v = || unit(&(0..4).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let (c0, c1, m0, m1) = (v(), v(), v(), v());
        let l = loss_of(&[c0.clone(), c1.clone()], &[m0.clone(), m1.clone()], None, 0.5);
        let manual = hinge(&c0, &m0, &c1, &m1, 0.5) + hinge(&c1, &m1, &c0, &m0, 0.5);
        assert!((l - manual).abs() < 1e-12, "{l} vs {manual}");
    }
}

#[test]
fn in_batch_all_averages_over_negatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let enc: Vec<Vec<f64>> = (0..3).map(|_| unit(&[rng.random(), rng.random(), -rng.random::<f64>()])).collect();
    let scenes: Vec<Vec<f64>> = (0..3).map(|_| unit(&[rng.random(), -rng.random::<f64>(), rng.random()])).collect();
    let l = loss_of(&enc, &scenes, None, 0.5);
    let mut manual = 0.0;
    for b in 0..3 {
        for j in (0..3).filter(|&j| j != b) {
            manual += 0.5 * hinge(&enc[b], &scenes[b], &enc[j], &scenes[j], 0.5);
        }
    }
    assert!((l - manual).abs() < 1e-12);
}

#[test]
fn single_pair_batches_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(negative_weights(1, 1, NegativeStrategy::InBatchAll, &mut rng).is_err());
    assert!(negative_weights(3, 1, NegativeStrategy::SingleSampled, &mut rng).is_err());
}

#[test]
fn single_sampled_negatives_pick_one_other_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = negative_weights(4, 5, NegativeStrategy::SingleSampled, &mut rng).unwrap();
    for row in 0..20 {
        let r = w.row(row);
        assert_eq!(r[row % 5], 0.0);
        assert_eq!(r.iter().filter(|&&x| x == 1.0).count(), 1);
        assert_eq!(r.iter().sum::<f64>(), 1.0);
    }
}

fn span_params(seed: u64) -> (ParamStore, GroundingParams) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..7 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let embed = store.add("embed", Tensor::matrix(7, 4, data).unwrap()).unwrap();
    let p = GroundingParams::register(&mut store, &mut rng, embed, 4, 5, 3, 6, 4).unwrap();
    (store, p)
}

#[test]
fn span_encodings_ignore_surrounding_words() {
    let (store, p) = span_params(1);
    let sents: Vec<Vec<usize>> = vec![vec![1, 2, 3, 4, 5, 6], vec![6, 5, 0, 3, 3, 1]];
    let refs: Vec<&[usize]> = sents.iter().map(Vec::as_slice).collect();
    let mut g = Graph::new(&store);
    let enc = encode_spans(&mut g, &p, &refs, true).unwrap();
    let spans = g.value(enc.spans.unwrap()).clone();
    let whole = g.value(enc.caption).clone();
    let solo = |t: &[usize]| {
        let mut g = Graph::new(&store);
        let e = encode_spans(&mut g, &p, &[t], false).unwrap();
        g.value(e.caption).data().to_vec()
    };
    for (e, &(i, j)) in eligible_spans(6).iter().enumerate() {
        for (b, s) in sents.iter().enumerate() {
            let want = solo(&s[i..j]);
            let got = spans.row(e * 2 + b);
            let d = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d < 1e-12, "span ({i},{j}) of sentence {b}: {d}");
        }
    }
    for (b, s) in sents.iter().enumerate() {
        let want = solo(s);
        let d = whole.row(b).iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12);
        let n: f64 = whole.row(b).iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn two_word_captions_have_no_eligible_spans() {
    let (store, p) = span_params(2);
    let mut g = Graph::new(&store);
    let enc = encode_spans(&mut g, &p, &[&[1, 2], &[3, 4]], true).unwrap();
    assert!(enc.spans.is_none());
    assert_eq!(enc.n_spans, 0);
}

fn arb_batch() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<usize>)> {
    (2usize..5, 1usize..4).prop_flat_map(|(b, k)| {
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), k * b),
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), b),
            prop::collection::vec(0.0f64..1.0, k * b),
            Just((0..b).collect::<Vec<_>>()).prop_shuffle(),
        )
    })
}

proptest! {
    #[test]
    fn loss_is_non_negative_and_permutation_invariant((enc, scenes, w, perm) in arb_batch()) {
        let enc: Vec<Vec<f64>> = enc.iter().map(|v| unit(&v.iter().map(|x| x + 1e-3).collect::<Vec<_>>())).collect();
        let scenes: Vec<Vec<f64>> = scenes.iter().map(|v| unit(&v.iter().map(|x| x + 1e-3).collect::<Vec<_>>())).collect();
        let b = scenes.len();
        let k = enc.len() / b;
        let l = loss_of(&enc, &scenes, Some(&w), 0.5);
        prop_assert!(l >= 0.0);
        let penc: Vec<Vec<f64>> = (0..k * b).map(|r| enc[(r / b) * b + perm[r % b]].clone()).collect();
        let pw: Vec<f64> = (0..k * b).map(|r| w[(r / b) * b + perm[r % b]]).collect();
        let pscenes: Vec<Vec<f64>> = perm.iter().map(|&i| scenes[i].clone()).collect();
        let lp = loss_of(&penc, &pscenes, Some(&pw), 0.5);
        prop_assert!((l - lp).abs() < 1e-10, "{} vs {}", l, lp);
    }

    #[test]
    fn zero_marginal_spans_change_nothing((enc, scenes, w, _p) in arb_batch(), extra in prop::collection::vec(-1.0f64..1.0, 3)) {
        let b = scenes.len();
        let l = loss_of(&enc, &scenes, Some(&w), 0.5);
        let mut enc2 = enc.clone();
        let mut w2 = w.clone();
        for _ in 0..b {
            enc2.push(extra.clone());
            w2.push(0.0);
        }
        let l2 = loss_of(&enc2, &scenes, Some(&w2), 0.5);
        prop_assert!((l - l2).abs() < 1e-12);
    }
}
