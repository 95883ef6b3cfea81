#[path = "support/probe.rs"]
mod probe;

use std::collections::BTreeSet;

use groundgram::scenegen::lexicon::{self, Category};
use groundgram::scenegen::{
    degrade_embedding, generate_corpus, make_splits, read_corpus, read_items, scene_to_label_vector, write_corpus,
    write_items, Degradation, GenConfig, MatchKind, Scene, SplitTag,
};
use groundgram::ParseTree;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(seed: u64) -> GenConfig {
    GenConfig {
        n_scenes: 120,
        seed,
        ..GenConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_corpus_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    write_corpus(&a, &generate_corpus(&small(4)).unwrap()).unwrap();
    write_corpus(&b, &generate_corpus(&small(4)).unwrap()).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let other = generate_corpus(&small(5)).unwrap();
    assert_ne!(other.items, read_corpus(&a).unwrap().items);
}

#[test]
fn corpus_round_trips_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let corpus = generate_corpus(&small(2)).unwrap();
    write_corpus(&path, &corpus).unwrap();
    assert_eq!(read_corpus(&path).unwrap(), corpus);

    let splits = make_splits(&corpus).unwrap();
    let items_path = dir.path().join("verb.jsonl");
    write_items(&items_path, &splits.verb_items).unwrap();
    assert_eq!(read_items(&items_path).unwrap(), splits.verb_items);
}

#[test]
fn default_corpus_size() {
    let corpus = generate_corpus(&GenConfig::default()).unwrap();
    assert_eq!(corpus.items.len(), 2000);
    let vocab: BTreeSet<&str> = corpus.items.iter().flat_map(|i| i.tokens.iter().map(String::as_str)).collect();
    assert!((80..=160).contains(&vocab.len()), "vocabulary of {}", vocab.len());
}

#[test]
fn tokens_categories_and_leaves_agree() {
    let corpus = generate_corpus(&small(1)).unwrap();
    for it in &corpus.items {
        let tree = ParseTree::parse(&it.gold_tree).unwrap();
        assert_eq!(tree.len(), it.tokens.len());
        assert_eq!(it.gold_cats.len(), it.tokens.len());
        assert_eq!(tree.words(), it.tokens.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(tree.to_string(), it.gold_tree);
    }
}

#[test]
fn every_caption_has_one_main_verb() {
    let corpus = generate_corpus(&small(3)).unwrap();
    for it in &corpus.items {
        let verbs: Vec<&String> = it
            .tokens
            .iter()
            .zip(&it.gold_cats)
            .filter(|(_, c)| **c == Category::Verb)
            .map(|(w, _)| w)
            .collect();
        assert_eq!(verbs.len(), 1, "{:?}", it.tokens);
        let (stem, third) = lexicon::verb_forms(it.scene.action.as_ref().unwrap().verb);
        assert!(verbs[0] == stem || verbs[0] == third);
        assert_eq!(it.meta.verb_stem, stem);
    }
}

#[test]
fn transitive_ratio_matches_configuration() {
    let config = GenConfig {
        n_scenes: 2000,
        ..GenConfig::default()
    };
    let corpus = generate_corpus(&config).unwrap();
    assert_eq!(corpus.items.len(), 10_000);
    let rate = corpus.items.iter().filter(|i| i.meta.transitive).count() as f64 / corpus.items.len() as f64;
    assert!((rate - config.transitive_rate).abs() <= 0.05, "transitive rate {rate}");
}

#[test]
fn captions_are_faithful_to_their_scene() {
    let corpus = generate_corpus(&small(6)).unwrap();
    for it in &corpus.items {
        let a = it.scene.action.as_ref().unwrap();
        assert_eq!(a.class, it.meta.verb_class);
        assert_eq!(a.patient.is_some(), it.meta.transitive);
        assert_eq!(lexicon::VerbClass::of_verb(a.verb), a.class);
        let present: BTreeSet<&str> = it.scene.entities.iter().map(|e| lexicon::type_word(e.ty)).collect();
        for (w, c) in it.tokens.iter().zip(&it.gold_cats) {
            if matches!(c, Category::Noun | Category::ProperNoun) {
                assert!(present.contains(w.as_str()), "{w} not in scene for {:?}", it.tokens);
            }
        }
        it.scene.validate(corpus.layout.slots).unwrap();
    }
}

#[test]
fn label_vectors_decode_to_the_entity_multiset() {
    let corpus = generate_corpus(&small(7)).unwrap();
    for it in &corpus.items {
        assert_eq!(corpus.layout.decode_types(&it.label), it.scene.types());
        let present: Vec<usize> = (0..corpus.layout.slots)
            .filter(|s| corpus.layout.presence(&it.label)[*s])
            .collect();
        let mut slots: Vec<usize> = it.scene.entities.iter().map(|e| e.slot).collect();
        slots.sort_unstable();
        assert_eq!(present, slots);
    }
}

#[test]
fn empty_scene_encodes_to_zeros() {
    let config = GenConfig::default();
    let v = scene_to_label_vector(
        &Scene {
            entities: Vec::new(),
            action: None,
        },
        &config,
    )
    .unwrap();
    assert_eq!(v.len(), config.layout().dim);
    assert!(v.iter().all(|&x| x == 0.0));
}

#[test]
fn identity_degradation_without_noise_is_tanh() {
    let v: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.2).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = Degradation::identity(10, 10, 0.0).apply(&v, &mut rng).unwrap();
    for (a, b) in out.iter().zip(&v) {
        assert!((a - b.tanh()).abs() < 1e-15);
    }
    let padded = Degradation::identity(10, 12, 0.0).apply(&v, &mut rng).unwrap();
    assert_eq!(&padded[10..], &[0.0, 0.0]);
}

#[test]
fn degraded_vectors_are_fixed_per_scene() {
    let config = small(8);
    let corpus = generate_corpus(&config).unwrap();
    assert_eq!(corpus.items[0].degraded.len(), config.layout().dim / 2);
    for pair in corpus.items.windows(2) {
        if pair[0].scene_id == pair[1].scene_id {
            assert_eq!(pair[0].degraded, pair[1].degraded);
        }
    }
    let it = &corpus.items[0];
    assert_eq!(degrade_embedding(&it.label, &config, it.scene_id as u64).unwrap(), it.degraded);
}

#[test]
fn linear_probe_recovers_presence_within_band() {
    let corpus = generate_corpus(&GenConfig::default()).unwrap();
    let acc = probe::presence_probe_accuracy(&corpus, true);
    assert!((0.6..=0.95).contains(&acc), "probe accuracy {acc}");
    assert!(probe::presence_probe_accuracy(&corpus, false) > acc);
}

#[test]
fn heldout_stems_never_reach_training() {
    let corpus = generate_corpus(&GenConfig::default()).unwrap();
    let config = &corpus.config;
    let stems = config.heldout_stems();
    assert_eq!(stems.len(), 3 * config.heldout_per_class);
    let heldout_words: BTreeSet<&str> = lexicon::VerbClass::ALL
        .iter()
        .flat_map(|c| c.verbs().iter())
        .filter(|v| stems.contains(&v.0))
        .flat_map(|v| [v.0, v.1])
        .collect();
    let splits = make_splits(&corpus).unwrap();
    for &i in &splits.train {
        let it = &corpus.items[i];
        assert_eq!(it.meta.split, SplitTag::Train);
        assert!(it.tokens.iter().all(|w| !heldout_words.contains(w.as_str())), "{:?}", it.tokens);
    }
    for &i in &splits.test_outdist {
        assert!(stems.contains(&corpus.items[i].meta.verb_stem.as_str()));
    }
    for class in lexicon::VerbClass::ALL {
        let n = stems.iter().filter(|s| class.verbs().iter().any(|v| v.0 == **s)).count();
        assert_eq!(n, config.heldout_per_class);
    }
}

#[test]
fn splits_are_disjoint_and_complete() {
    let corpus = generate_corpus(&GenConfig::default()).unwrap();
    let s = make_splits(&corpus).unwrap();
    let train: BTreeSet<usize> = s.train.iter().copied().collect();
    let out: BTreeSet<usize> = s.test_outdist.iter().copied().collect();
    assert!(train.is_disjoint(&out));
    assert_eq!(train.len() + out.len(), corpus.items.len());
    let returned: BTreeSet<usize> = s.returned.iter().copied().collect();
    let indist: BTreeSet<usize> = s.test_indist.iter().copied().collect();
    assert!(returned.is_disjoint(&indist));
    assert_eq!(returned.union(&indist).copied().collect::<BTreeSet<_>>(), out);
    assert!(returned.len().abs_diff(indist.len()) <= 1);
    let in_train: BTreeSet<usize> = s.train_for(groundgram::scenegen::Regime::InDistribution).into_iter().collect();
    assert!(in_train.is_disjoint(&indist));
}

#[test]
fn verb_items_pair_one_correct_scene() {
    let corpus = generate_corpus(&GenConfig::default()).unwrap();
    let s = make_splits(&corpus).unwrap();
    assert!(!s.verb_items.is_empty());
    let mut targets = [0usize; 2];
    for it in s.verb_items.iter().chain(&s.verb_items_indist) {
        it.validate().unwrap();
        assert_eq!(it.kind, MatchKind::VerbMatch);
        assert_eq!(it.labels.len(), 2);
        let own = it.sources[it.target];
        let other = it.sources[1 - it.target];
        assert_eq!(corpus.items[own].tokens, it.captions[0]);
        assert_eq!(it.labels[it.target], corpus.items[own].label);
        assert_ne!(corpus.items[own].meta.transitive, corpus.items[other].meta.transitive);
        targets[it.target] += 1;
    }
    assert!(targets[0] > 0 && targets[1] > 0);
    let transitive = s.verb_items.iter().filter(|i| i.meta.transitive).count();
    assert_eq!(transitive * 2, s.verb_items.len());
}

#[test]
fn role_items_differ_only_in_swapped_nouns() {
    let corpus = generate_corpus(&GenConfig::default()).unwrap();
    let s = make_splits(&corpus).unwrap();
    assert_eq!(s.role_items.len(), corpus.config.n_role_items);
    let stems = corpus.config.heldout_stems();
    for it in &s.role_items {
        it.validate().unwrap();
        assert_eq!(it.kind, MatchKind::RoleMatch);
        let (a, b) = (&it.captions[0], &it.captions[1]);
        assert_eq!(a.len(), 5);
        let diff: Vec<usize> = (0..a.len()).filter(|&k| a[k] != b[k]).collect();
        assert_eq!(diff, vec![1, 4]);
        assert_eq!((a[1].as_str(), a[4].as_str()), (b[4].as_str(), b[1].as_str()));
        assert!(!stems.contains(&it.meta.verb_stem.as_str()));
        let decoded: Vec<&str> = corpus.layout.decode_types(&it.labels[0]).into_iter().map(lexicon::type_word).collect();
        assert!(decoded.contains(&a[1].as_str()) && decoded.contains(&a[4].as_str()));
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        GenConfig {
            heldout_per_class: 12,
            ..GenConfig::default()
        },
        GenConfig {
            captions_per_scene: 7,
            ..GenConfig::default()
        },
        GenConfig {
            noise: -1.0,
            ..GenConfig::default()
        },
    ];
    for c in bad {
        assert!(generate_corpus(&c).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_items_keep_their_invariants(seed in any::<u64>(), per in 1usize..=6) {
        let config = GenConfig { n_scenes: 15, captions_per_scene: per, seed, ..GenConfig::default() };
        let corpus = generate_corpus(&config).unwrap();
        prop_assert_eq!(corpus.items.len(), 15 * per);
        for it in &corpus.items {
            let tree = ParseTree::parse(&it.gold_tree).unwrap();
            prop_assert_eq!(tree.len(), it.tokens.len());
            prop_assert_eq!(it.gold_cats.len(), it.tokens.len());
            prop_assert_eq!(it.label.len(), corpus.layout.dim);
            prop_assert!(it.scene.validate(corpus.layout.slots).is_ok());
            prop_assert_eq!(corpus.layout.decode_types(&it.label), it.scene.types());
        }
    }
}
