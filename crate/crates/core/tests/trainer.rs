use groundgram::model::SemanticMode;
use groundgram::scenegen::{generate_corpus, Corpus, GenConfig};
use groundgram::tensor::{Graph, ParamStore, Tensor};
use groundgram::trainer::{
    active_losses, read_metrics_csv, write_metrics_csv, Adam, AdamConfig, Checkpoint, MetricsRecord, Schedule,
    ScheduleKind, TrainConfig, Trainer,
};
use groundgram::ModelConfig;
use proptest::prelude::*;
use std::collections::BTreeSet;

fn toy_corpus() -> Corpus {
    generate_corpus(&GenConfig { n_scenes: 10, captions_per_scene: 5, seed: 3, ..GenConfig::default() }).unwrap()
}

fn small_model() -> ModelConfig {
    let mut m = ModelConfig::default();
    m.grammar.symbol_embed = 16;
    m.grammar.hidden = 16;
    m.grammar.z = 8;
    m
}

fn toy_config(kind: ScheduleKind, epochs: usize) -> TrainConfig {
    TrainConfig {
        schedule: kind,
        epochs,
        batch_size: 4,
        seed: 7,
        model: small_model(),
        ..TrainConfig::default()
    }
}

fn params(t: &Trainer) -> Vec<Vec<u64>> {
    t.model.store.iter().map(|(_, _, v)| v.data().iter().map(|x| x.to_bits()).collect()).collect()
}

#[test]
fn active_losses_follow_the_schedule_definitions() {
    let on = |k, e| {
        let a = active_losses(&Schedule::new(k, 30, None).unwrap(), e).unwrap();
        (a.syntax, a.semantics)
    };
    assert_eq!(on(ScheduleKind::Joint, 0), (true, true));
    assert_eq!(on(ScheduleKind::SyntaxFirst, 0), (true, false));
    assert_eq!(on(ScheduleKind::SyntaxFirst, 15), (true, true));
    assert_eq!(on(ScheduleKind::SemanticsFirst, 14), (false, true));
    assert_eq!(on(ScheduleKind::SemanticsFirst, 15), (true, true));
    assert_eq!(on(ScheduleKind::VisualLabels, 0), (true, true));
    let s = Schedule::new(ScheduleKind::Joint, 30, None).unwrap();
    assert!(active_losses(&s, 30).is_err());
}

#[test]
fn default_switch_is_half_way() {
    assert_eq!(Schedule::new(ScheduleKind::SyntaxFirst, 30, None).unwrap().switch_epoch, 15);
    assert_eq!(Schedule::new(ScheduleKind::SyntaxFirst, 7, None).unwrap().switch_epoch, 3);
    assert!(Schedule::new(ScheduleKind::SyntaxFirst, 10, Some(11)).is_err());
}

#[test]
fn semantics_first_matches_whole_captions_before_the_switch() {
    let s = Schedule::new(ScheduleKind::SemanticsFirst, 10, None).unwrap();
    assert_eq!(s.semantic_mode(4).unwrap(), SemanticMode::Caption);
    assert_eq!(s.semantic_mode(5).unwrap(), SemanticMode::Spans);
    assert!(s.whole_caption_eval(4) && !s.whole_caption_eval(5));
    let s = Schedule::new(ScheduleKind::SyntaxFirst, 10, None).unwrap();
    assert_eq!(s.semantic_mode(4).unwrap(), SemanticMode::Off);
    assert!(!s.whole_caption_eval(0));
}

#[test]
fn schedule_names_round_trip() {
    for k in ScheduleKind::ALL {
        assert_eq!(k.name().parse::<ScheduleKind>().unwrap(), k);
    }
    assert!("both".parse::<ScheduleKind>().is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        TrainConfig { epochs: 1, ..TrainConfig::default() },
        TrainConfig { batch_size: 1, ..TrainConfig::default() },
        TrainConfig { clip_norm: 0.0, ..TrainConfig::default() },
        TrainConfig { min_count: 0, ..TrainConfig::default() },
        TrainConfig { unk_dropout: 1.0, ..TrainConfig::default() },
    ];
    for c in bad {
        assert!(c.validate().is_err(), "{c:?}");
    }
    TrainConfig::default().validate().unwrap();
}

/// Under a constant gradient every bias-corrected step moves each
/// coordinate by `lr · g / (|g| + eps)`.
#[test]
fn adam_steps_match_closed_form_under_constant_gradient() {
    let mut store = ParamStore::new();
    let id = store.add("x", Tensor::vector(vec![0.5, -1.0, 2.0])).unwrap();
    let c = [3.0, -0.2, 1e-3];
    let cfg = AdamConfig::default();
    let mut adam = Adam::new(cfg, &store);
    let mut expect = vec![0.5, -1.0, 2.0];
    for _ in 0..4 {
        let grads = {
            let mut g = Graph::new(&store);
            let x = g.param(id);
            let w = g.constant(Tensor::vector(c.to_vec()));
            let y = g.mul(x, w).unwrap();
            let l = g.sum(y).unwrap();
            g.backward(l).unwrap()
        };
        adam.step(&mut store, &grads).unwrap();
        for (e, g) in expect.iter_mut().zip(c) {
            *e -= cfg.lr * g / (g.abs() + cfg.eps);
        }
    }
    for (a, b) in store.get(id).data().iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn batches_cover_training_set_once_with_equal_lengths() {
    let t = Trainer::new(&toy_corpus(), toy_config(ScheduleKind::Joint, 2)).unwrap();
    for epoch in 0..3 {
        let batches = t.data.batches(4, 7, epoch);
        let mut seen = BTreeSet::new();
        for b in &batches {
            let n = t.data.train[b[0]].tokens.len();
            assert!(b.iter().all(|&i| t.data.train[i].tokens.len() == n));
            for &i in b {
                assert!(seen.insert(i));
            }
        }
        assert_eq!(seen.len(), t.data.train.len());
        assert_eq!(batches, t.data.batches(4, 7, epoch));
    }
    assert_ne!(t.data.batches(4, 7, 0), t.data.batches(4, 7, 1));
}

#[test]
fn steps_decompose_losses_and_respect_the_clip() {
    let corpus = toy_corpus();
    let mut cfg = toy_config(ScheduleKind::Joint, 2);
    cfg.clip_norm = 0.05;
    cfg.matching.alpha1 = 0.7;
    cfg.matching.alpha2 = 1.3;
    let mut t = Trainer::new(&corpus, cfg).unwrap();
    let plan = t.plan(0).unwrap();
    for (k, b) in t.data.batches(4, 7, 0).iter().take(4).enumerate() {
        let m = t.step(b, &plan, k as u64).unwrap();
        assert!((m.loss_total - (0.7 * m.loss_syntax + 1.3 * m.loss_semantics)).abs() < 1e-9);
        assert!(m.grad_norm > 0.05, "expected clipping, norm {}", m.grad_norm);
        assert!(m.clipped_norm <= 0.05 + 1e-9);
    }
}

#[test]
fn three_steps_are_bitwise_reproducible() {
    let corpus = toy_corpus();
    let run = || {
        let mut t = Trainer::new(&corpus, toy_config(ScheduleKind::Joint, 2)).unwrap();
        let plan = t.plan(0).unwrap();
        let batches = t.data.batches(4, 7, 0);
        for (k, b) in batches.iter().take(3).enumerate() {
            t.step(b, &plan, k as u64).unwrap();
        }
        params(&t)
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_semantic_weight_equals_pure_syntax_step() {
    let corpus = toy_corpus();
    let mut cfg = toy_config(ScheduleKind::Joint, 2);
    cfg.matching.alpha2 = 0.0;
    let mut a = Trainer::new(&corpus, cfg.clone()).unwrap();
    let mut b = Trainer::new(&corpus, toy_config(ScheduleKind::SyntaxFirst, 2)).unwrap();
    let batch = a.data.batches(4, 7, 0)[0].clone();
    let pa = a.plan(0).unwrap();
    let pb = b.plan(0).unwrap();
    assert_eq!(pb.semantics, SemanticMode::Off);
    a.step(&batch, &pa, 0).unwrap();
    b.step(&batch, &pb, 0).unwrap();
    assert_eq!(params(&a), params(&b));
}

#[test]
fn syntax_first_with_switch_zero_is_joint() {
    let corpus = toy_corpus();
    let mut a = Trainer::new(&corpus, toy_config(ScheduleKind::Joint, 2)).unwrap();
    let mut cfg = toy_config(ScheduleKind::SyntaxFirst, 2);
    cfg.switch_epoch = Some(0);
    let mut b = Trainer::new(&corpus, cfg).unwrap();
    for _ in 0..2 {
        a.train_epoch().unwrap();
        b.train_epoch().unwrap();
        assert_eq!(params(&a), params(&b));
    }
}

#[test]
fn two_epoch_smoke_run_writes_metrics_and_checkpoints() {
    let corpus = toy_corpus();
    assert_eq!(corpus.items.len(), 50);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(ScheduleKind::SemanticsFirst, 2);
    cfg.checkpoint_every = 1;
    let mut t = Trainer::new(&corpus, cfg).unwrap();
    let mut seen = 0;
    let saved = t.run(Some(dir.path()), |_| seen += 1).unwrap();
    assert_eq!(seen, 2);
    assert_eq!(saved.len(), 2);
    assert!(saved[1].ends_with("checkpoint-epoch002.json"));
    let rows = read_metrics_csv(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    let text = |r: &[MetricsRecord]| r.iter().map(MetricsRecord::to_csv_row).collect::<Vec<_>>();
    assert_eq!(text(&rows), text(&t.metrics));
    for (e, r) in rows.iter().enumerate() {
        assert_eq!(r.epoch, e);
        assert_eq!(r.schedule, "semantics-first");
        for col in ["loss_total", "span_f1", "v_measure", "role_match"] {
            assert!(r.get(col).unwrap().is_finite(), "{col}");
        }
    }
    // Epoch 0 of semantics-first trains no syntax.
    assert_eq!(rows[0].loss_syntax, 0.0);
    assert!(rows[1].loss_syntax > 0.0);
}

#[test]
fn resuming_reproduces_the_uninterrupted_run() {
    let corpus = toy_corpus();
    let mut full = Trainer::new(&corpus, toy_config(ScheduleKind::Joint, 3)).unwrap();
    full.run(None, |_| {}).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let mut part = Trainer::new(&corpus, toy_config(ScheduleKind::Joint, 3)).unwrap();
    part.run_epoch().unwrap();
    part.checkpoint().save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    assert_eq!(ck.epoch, 1);
    let mut resumed = Trainer::resume(&corpus, &ck).unwrap();
    assert_eq!(params(&resumed), params(&part));
    resumed.run(None, |_| {}).unwrap();
    let text = |r: &[MetricsRecord]| r.iter().map(MetricsRecord::to_csv_row).collect::<Vec<_>>();
    assert_eq!(text(&resumed.metrics), text(&full.metrics));
    assert_eq!(params(&resumed), params(&full));
}

#[test]
fn resume_rejects_a_foreign_corpus() {
    let corpus = toy_corpus();
    let t = Trainer::new(&corpus, toy_config(ScheduleKind::Joint, 2)).unwrap();
    let other = generate_corpus(&GenConfig { n_scenes: 10, captions_per_scene: 5, seed: 99, ..GenConfig::default() }).unwrap();
    assert!(Trainer::resume(&other, &t.checkpoint()).is_err());
}

#[test]
fn word_dropout_is_seeded_and_changes_training() {
    let corpus = toy_corpus();
    let mut cfg = toy_config(ScheduleKind::Joint, 2);
    cfg.unk_dropout = 0.3;
    let run = |cfg: TrainConfig| {
        let mut t = Trainer::new(&corpus, cfg).unwrap();
        t.train_epoch().unwrap();
        params(&t)
    };
    let a = run(cfg.clone());
    assert_eq!(a, run(cfg));
    assert_ne!(a, run(toy_config(ScheduleKind::Joint, 2)));
}

fn arb_record() -> impl Strategy<Value = MetricsRecord> {
    (0usize..100, any::<u64>(), prop::collection::vec(-1e6f64..1e6, 9)).prop_map(|(epoch, seed, v)| MetricsRecord {
        epoch,
        schedule: "joint".into(),
        seed,
        loss_total: v[0],
        loss_syntax: v[1],
        loss_semantics: v[2],
        span_f1: v[3],
        v_measure: v[4],
        homogeneity: v[5],
        completeness: v[6],
        verb_match: v[7],
        role_match: v[8],
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn metrics_csv_round_trips_exactly(rows in prop::collection::vec(arb_record(), 0..5)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics_csv(&p, &rows).unwrap();
        prop_assert_eq!(read_metrics_csv(&p).unwrap(), rows);
    }

    #[test]
    fn switch_splits_the_run_into_two_phases(total in 2usize..60, frac in 0.0f64..1.0, epoch_frac in 0.0f64..1.0) {
        let switch = ((total as f64) * frac) as usize;
        let s = Schedule::new(ScheduleKind::SemanticsFirst, total, Some(switch)).unwrap();
        let epoch = ((total as f64) * epoch_frac) as usize;
        let a = active_losses(&s, epoch).unwrap();
        prop_assert!(a.semantics);
        prop_assert_eq!(a.syntax, epoch >= switch);
    }
}
