//! Joint objective, training schedules, optimisation, per-epoch evaluation
//! and checkpointing.

mod adam;
mod checkpoint;
mod metrics;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{decode_f64, encode_f64, AdamState, Checkpoint, StoredTensor, CHECKPOINT_FORMAT};
pub use metrics::{read_metrics_csv, write_metrics_csv, MetricsRecord, METRICS_HEADER};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalsuite::{self, match_scores, SceneSource};
use crate::grammar::{GrammarSpec, Vocab};
use crate::grounding::MatchConfig;
use crate::inference::{draw_noise, ParseTree};
use crate::model::{Batch, Model, ModelConfig, SemanticMode, StepPlan};
use crate::rng::{stream_rng, Stream};
use crate::scenegen::{make_splits, Category, Corpus, MatchItem, Regime, Splits};
use crate::tensor::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Joint,
    SyntaxFirst,
    SemanticsFirst,
    VisualLabels,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 4] = [
        ScheduleKind::Joint,
        ScheduleKind::SyntaxFirst,
        ScheduleKind::SemanticsFirst,
        ScheduleKind::VisualLabels,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Joint => "joint",
            ScheduleKind::SyntaxFirst => "syntax-first",
            ScheduleKind::SemanticsFirst => "semantics-first",
            ScheduleKind::VisualLabels => "visual-labels",
        }
    }

    /// Label vectors for the oracle schedule, degraded vectors otherwise.
    pub fn scene_source(self) -> SceneSource {
        match self {
            ScheduleKind::VisualLabels => SceneSource::Labels,
            _ => SceneSource::Degraded,
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown schedule {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub switch_epoch: usize,
    pub total_epochs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActiveLosses {
    pub syntax: bool,
    pub semantics: bool,
}

impl Schedule {
    /// Switch half way through unless given.
    pub fn new(kind: ScheduleKind, total_epochs: usize, switch_epoch: Option<usize>) -> Result<Self> {
        let switch_epoch = switch_epoch.unwrap_or(total_epochs / 2);
        if switch_epoch > total_epochs {
            return Err(Error::Invalid(format!(
                "switch epoch {switch_epoch} beyond {total_epochs} epochs"
            )));
        }
        Ok(Schedule {
            kind,
            switch_epoch,
            total_epochs,
        })
    }

    /// Semantic objective for a step: whole-caption matching before the
    /// semantics-first switch, span matching whenever syntax is also on.
    pub fn semantic_mode(&self, epoch: usize) -> Result<SemanticMode> {
        let a = active_losses(self, epoch)?;
        Ok(match (a.syntax, a.semantics) {
            (_, false) => SemanticMode::Off,
            (false, true) => SemanticMode::Caption,
            (true, true) => SemanticMode::Spans,
        })
    }

    /// Evaluation after epoch `epoch` scores whole captions while the
    /// grammar is still untrained.
    pub fn whole_caption_eval(&self, epoch: usize) -> bool {
        self.kind == ScheduleKind::SemanticsFirst && epoch < self.switch_epoch
    }
}

pub fn active_losses(schedule: &Schedule, epoch: usize) -> Result<ActiveLosses> {
    if epoch >= schedule.total_epochs {
        return Err(Error::Invalid(format!(
            "epoch {epoch} outside a {}-epoch schedule",
            schedule.total_epochs
        )));
    }
    let after = epoch >= schedule.switch_epoch;
    Ok(match schedule.kind {
        ScheduleKind::Joint | ScheduleKind::VisualLabels => ActiveLosses {
            syntax: true,
            semantics: true,
        },
        ScheduleKind::SyntaxFirst => ActiveLosses {
            syntax: true,
            semantics: after,
        },
        ScheduleKind::SemanticsFirst => ActiveLosses {
            syntax: after,
            semantics: true,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub schedule: ScheduleKind,
    pub epochs: usize,
    pub switch_epoch: Option<usize>,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub seed: u64,
    pub regime: Regime,
    /// Checkpoint cadence in epochs; the final epoch is always saved.
    pub checkpoint_every: usize,
    /// Training words rarer than this become the unknown word.
    pub min_count: usize,
    /// Chance of replacing a training token by the unknown word at each step,
    /// so the unknown word has a trained embedding for novel test words.
    pub unk_dropout: f64,
    /// Homogeneity weight of the V-measure.
    pub v_beta: f64,
    pub matching: MatchConfig,
    /// `scene_dim` is filled in from the corpus.
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: ScheduleKind::Joint,
            epochs: 30,
            switch_epoch: None,
            batch_size: 8,
            adam: AdamConfig::default(),
            clip_norm: 3.0,
            seed: 0,
            regime: Regime::InDistribution,
            checkpoint_every: 5,
            min_count: 2,
            unk_dropout: 0.1,
            v_beta: 0.3,
            matching: MatchConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 2 {
            return Err(Error::Invalid("training needs at least 2 epochs".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Invalid("batch size must be at least 2".into()));
        }
        if !(self.clip_norm > 0.0) || !(self.adam.lr > 0.0) {
            return Err(Error::Invalid("clip norm and learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.unk_dropout) {
            return Err(Error::Invalid("unk_dropout must lie in [0, 1)".into()));
        }
        if self.min_count == 0 {
            return Err(Error::Invalid("min_count must be at least 1".into()));
        }
        self.matching.validate()?;
        self.schedule()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.schedule, self.epochs, self.switch_epoch)
    }
}

#[derive(Clone, Debug)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub scene: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TestExample {
    pub tokens: Vec<usize>,
    pub words: Vec<String>,
    pub gold: ParseTree,
    pub gold_cats: Vec<Category>,
}

/// Everything a run reads from the corpus, in model-ready form.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub vocab: Vocab,
    pub scene_dim: usize,
    pub source: SceneSource,
    pub train: Vec<Example>,
    pub test: Vec<TestExample>,
    pub verb_items: Vec<MatchItem>,
    pub role_items: Vec<MatchItem>,
}

impl TrainData {
    pub fn new(corpus: &Corpus, splits: &Splits, config: &TrainConfig) -> Result<Self> {
        let train_ids = splits.train_for(config.regime);
        let vocab = Vocab::from_sentences(train_ids.iter().map(|&i| &corpus.items[i].tokens), config.min_count);
        let source = config.schedule.scene_source();
        let scene_of = |i: usize| match source {
            SceneSource::Labels => corpus.items[i].label.clone(),
            SceneSource::Degraded => corpus.items[i].degraded.clone(),
        };
        let train: Vec<Example> = train_ids
            .iter()
            .filter(|&&i| corpus.items[i].tokens.len() >= 2)
            .map(|&i| Example {
                tokens: vocab.encode(&corpus.items[i].tokens),
                scene: scene_of(i),
            })
            .collect();
        let test = splits
            .test_for(config.regime)
            .iter()
            .filter(|&&i| corpus.items[i].tokens.len() >= 2)
            .map(|&i| {
                let it = &corpus.items[i];
                Ok(TestExample {
                    tokens: vocab.encode(&it.tokens),
                    words: it.tokens.clone(),
                    gold: ParseTree::parse(&it.gold_tree)?,
                    gold_cats: it.gold_cats.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if train.len() < 2 || test.is_empty() {
            return Err(Error::Invalid("corpus too small for a train/test split".into()));
        }
        let scene_dim = train[0].scene.len();
        Ok(TrainData {
            vocab,
            scene_dim,
            source,
            train,
            test,
            verb_items: splits.verb_items_for(config.regime).to_vec(),
            role_items: splits.role_items.clone(),
        })
    }

    /// Batches of equal-length sentences in shuffled order. A lone leftover
    /// sentence joins the previous batch of its length.
    pub fn batches(&self, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
        let mut rng = stream_rng(seed, Stream::DataShuffle, epoch as u64);
        let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, ex) in self.train.iter().enumerate() {
            buckets.entry(ex.tokens.len()).or_default().push(i);
        }
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for (_, mut ids) in buckets {
            ids.shuffle(&mut rng);
            let mut chunks: Vec<Vec<usize>> = ids.chunks(batch_size).map(<[usize]>::to_vec).collect();
            if chunks.len() > 1 && chunks.last().is_some_and(|c| c.len() == 1) {
                let lone = chunks.pop().expect("non-empty");
                chunks.last_mut().expect("at least one").extend(lone);
            }
            batches.extend(chunks);
        }
        batches.shuffle(&mut rng);
        batches
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub loss_total: f64,
    pub loss_syntax: f64,
    pub loss_semantics: f64,
    pub grad_norm: f64,
    pub clipped_norm: f64,
    pub sentences: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub span_f1: f64,
    pub v_measure: f64,
    pub homogeneity: f64,
    pub completeness: f64,
    pub verb_match: f64,
    pub role_match: f64,
    /// Viterbi trees of the test sentences, in test order.
    pub trees: Vec<ParseTree>,
    /// Per-sentence span F1.
    pub sentence_f1: Vec<f64>,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub schedule: Schedule,
    pub data: TrainData,
    pub model: Model,
    pub adam: Adam,
    /// Epochs completed.
    pub epoch: usize,
    pub metrics: Vec<MetricsRecord>,
}

impl Trainer {
    pub fn new(corpus: &Corpus, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let splits = make_splits(corpus)?;
        let data = TrainData::new(corpus, &splits, &config)?;
        let mut model_config = config.model.clone();
        model_config.scene_dim = data.scene_dim;
        let spec = GrammarSpec::new(
            model_config.n_nonterminals,
            model_config.n_preterminals,
            data.vocab.clone(),
            model_config.grammar,
        )?;
        let model = Model::new(spec, model_config, config.seed)?;
        let adam = Adam::new(config.adam, &model.store);
        Ok(Trainer {
            schedule: config.schedule()?,
            config,
            data,
            model,
            adam,
            epoch: 0,
            metrics: Vec::new(),
        })
    }

    /// Continue a run from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(corpus: &Corpus, ck: &Checkpoint) -> Result<Self> {
        let config = ck.train.clone();
        config.validate()?;
        let splits = make_splits(corpus)?;
        let data = TrainData::new(corpus, &splits, &config)?;
        if data.vocab != ck.spec.vocab {
            return Err(Error::Format("checkpoint vocabulary does not match the corpus".into()));
        }
        let model = ck.model()?;
        let adam = ck
            .adam(&model)?
            .ok_or_else(|| Error::Format("checkpoint lacks optimizer state".into()))?;
        Ok(Trainer {
            schedule: config.schedule()?,
            config,
            data,
            model,
            adam,
            epoch: ck.epoch,
            metrics: ck.metrics.clone(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.model, &self.config, self.epoch, Some(&self.adam), &self.metrics)
    }

    pub fn plan(&self, epoch: usize) -> Result<StepPlan> {
        let a = active_losses(&self.schedule, epoch)?;
        Ok(StepPlan {
            syntax: a.syntax,
            semantics: self.schedule.semantic_mode(epoch)?,
            matching: self.config.matching,
        })
    }

    /// One optimisation step on `batch` (indices into the training set).
    /// Reported losses are batch sums; the update follows the batch mean.
    pub fn step(&mut self, batch: &[usize], plan: &StepPlan, stream_index: u64) -> Result<StepMetrics> {
        let dropped = self.dropped_tokens(batch, stream_index);
        let tokens: Vec<&[usize]> = match &dropped {
            Some(d) => d.iter().map(Vec::as_slice).collect(),
            None => batch.iter().map(|&i| self.data.train[i].tokens.as_slice()).collect(),
        };
        let scenes: Vec<&[f64]> = batch.iter().map(|&i| self.data.train[i].scene.as_slice()).collect();
        let seed = self.config.seed;
        let eps = draw_noise(
            &mut stream_rng(seed, Stream::ZNoise, stream_index),
            batch.len(),
            self.model.spec.dims.z,
        );
        let mut neg_rng = stream_rng(seed, Stream::NegativeSampling, stream_index);
        let (mut grads, out) = {
            let mut g = Graph::new(&self.model.store);
            let loss = self
                .model
                .batch_loss(&mut g, &Batch { tokens, scenes }, plan, eps, &mut neg_rng)?;
            if cfg!(debug_assertions) {
                for &io in &loss.io {
                    let v = g.value(io).data();
                    let n = self.data.train[batch[0]].tokens.len();
                    let s: f64 = v[1..].iter().sum();
                    debug_assert!((s - (n as f64 - 2.0)).abs() < 1e-6, "marginal sum {s} for length {n}");
                }
            }
            let total = g.value(loss.total).item()?;
            if !total.is_finite() {
                return Err(Error::NonFinite(format!("loss {total} at step {stream_index}")));
            }
            let syntax = if plan.syntax { loss.syntax } else { 0.0 };
            let grads = g.backward(loss.total)?;
            (grads, (total, syntax, loss.semantics))
        };
        if !grads.is_finite() {
            return Err(Error::NonFinite(format!("gradient at step {stream_index}")));
        }
        grads.scale(1.0 / batch.len() as f64);
        let grad_norm = grads.clip_global_norm(self.config.clip_norm);
        let clipped_norm = grads.global_norm();
        self.adam.step(&mut self.model.store, &grads)?;
        Ok(StepMetrics {
            loss_total: out.0,
            loss_syntax: out.1,
            loss_semantics: out.2,
            grad_norm,
            clipped_norm,
            sentences: batch.len(),
        })
    }

    fn dropped_tokens(&self, batch: &[usize], stream_index: u64) -> Option<Vec<Vec<usize>>> {
        let p = self.config.unk_dropout;
        if p <= 0.0 {
            return None;
        }
        let mut rng = stream_rng(self.config.seed, Stream::WordDropout, stream_index);
        Some(
            batch
                .iter()
                .map(|&i| {
                    self.data.train[i]
                        .tokens
                        .iter()
                        .map(|&t| if rng.random::<f64>() < p { 0 } else { t })
                        .collect()
                })
                .collect(),
        )
    }

    /// Train one epoch; returns summed losses over the epoch.
    pub fn train_epoch(&mut self) -> Result<StepMetrics> {
        let epoch = self.epoch;
        let plan = self.plan(epoch)?;
        let batches = self.data.batches(self.config.batch_size, self.config.seed, epoch);
        let mut sum = StepMetrics {
            loss_total: 0.0,
            loss_syntax: 0.0,
            loss_semantics: 0.0,
            grad_norm: 0.0,
            clipped_norm: 0.0,
            sentences: 0,
        };
        for (b, batch) in batches.iter().enumerate() {
            let m = self.step(batch, &plan, ((epoch as u64) << 24) | b as u64)?;
            sum.loss_total += m.loss_total;
            sum.loss_syntax += m.loss_syntax;
            sum.loss_semantics += m.loss_semantics;
            sum.grad_norm = sum.grad_norm.max(m.grad_norm);
            sum.clipped_norm = sum.clipped_norm.max(m.clipped_norm);
            sum.sentences += m.sentences;
        }
        self.epoch += 1;
        Ok(sum)
    }

    /// Test-split parsing and matching metrics for the current parameters,
    /// as seen after `epoch` (which selects whole-caption scoring).
    pub fn evaluate(&self, epoch: usize) -> Result<Evaluation> {
        evaluate_model(
            &self.model,
            &self.data,
            self.config.v_beta,
            self.schedule.whole_caption_eval(epoch),
        )
    }

    /// Train and evaluate one epoch, appending a metrics row.
    pub fn run_epoch(&mut self) -> Result<MetricsRecord> {
        let epoch = self.epoch;
        let losses = self.train_epoch()?;
        let e = self.evaluate(epoch)?;
        let n = losses.sentences.max(1) as f64;
        let row = MetricsRecord {
            epoch,
            schedule: self.config.schedule.name().to_string(),
            seed: self.config.seed,
            loss_total: losses.loss_total / n,
            loss_syntax: losses.loss_syntax / n,
            loss_semantics: losses.loss_semantics / n,
            span_f1: e.span_f1,
            v_measure: e.v_measure,
            homogeneity: e.homogeneity,
            completeness: e.completeness,
            verb_match: e.verb_match,
            role_match: e.role_match,
        };
        self.metrics.push(row.clone());
        Ok(row)
    }

    /// Run the remaining epochs. With `out`, rewrite `metrics.csv` after every
    /// epoch and save checkpoints on the configured cadence plus the final one.
    pub fn run(&mut self, out: Option<&Path>, mut on_epoch: impl FnMut(&MetricsRecord)) -> Result<Vec<PathBuf>> {
        let mut saved = Vec::new();
        while self.epoch < self.config.epochs {
            let row = self.run_epoch()?;
            on_epoch(&row);
            if let Some(dir) = out {
                write_metrics_csv(&dir.join("metrics.csv"), &self.metrics)?;
                let done = self.epoch;
                let every = self.config.checkpoint_every.max(1);
                if done % every == 0 || done == self.config.epochs {
                    let path = dir.join(format!("checkpoint-epoch{done:03}.json"));
                    self.checkpoint().save(&path)?;
                    saved.push(path);
                }
            }
        }
        Ok(saved)
    }
}

/// Parsing, category and matching metrics for a model on prepared data.
pub fn evaluate_model(model: &Model, data: &TrainData, v_beta: f64, whole_caption: bool) -> Result<Evaluation> {
    let tokens: Vec<&[usize]> = data.test.iter().map(|t| t.tokens.as_slice()).collect();
    let words: Vec<&[String]> = data.test.iter().map(|t| t.words.as_slice()).collect();
    let views = model.caption_views_all(&tokens, &words)?;
    let mut sentence_f1 = Vec::with_capacity(views.len());
    let mut pred_cats = Vec::new();
    let mut gold_cats = Vec::new();
    let mut trees = Vec::with_capacity(views.len());
    for (v, t) in views.into_iter().zip(&data.test) {
        sentence_f1.push(evalsuite::span_f1(&v.best.tree, &t.gold)?.f1);
        pred_cats.extend(v.best.preterminals.iter().copied());
        gold_cats.extend(t.gold_cats.iter().copied());
        trees.push(v.best.tree);
    }
    let vm = evalsuite::v_measure(&pred_cats, &gold_cats, v_beta)?;
    let match_score = |items: &[MatchItem]| -> Result<f64> {
        if items.is_empty() {
            return Ok(f64::NAN);
        }
        let scores = match_scores(model, items, data.source, whole_caption)?;
        Ok(evalsuite::evaluate_matches(items, &scores)?.score)
    };
    Ok(Evaluation {
        span_f1: sentence_f1.iter().sum::<f64>() / sentence_f1.len() as f64,
        v_measure: vm.v,
        homogeneity: vm.homogeneity,
        completeness: vm.completeness,
        verb_match: match_score(&data.verb_items)?,
        role_match: match_score(&data.role_items)?,
        trees,
        sentence_f1,
    })
}
