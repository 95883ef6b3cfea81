//! Synthetic clip-art scenes with template captions, gold trees, gold
//! lexical categories, label vectors and degraded scene vectors.

mod io;
mod layout;
pub mod lexicon;
mod splits;

pub use io::{read_corpus, read_items, write_corpus, write_items, CORPUS_FORMAT, FORMAT_VERSION, ITEMS_FORMAT};
pub use layout::LabelLayout;
pub use lexicon::{Category, VerbClass};
pub use splits::{make_splits, role_items, verb_items, MatchItem, MatchKind, Regime, Splits};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ParseTree;
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_scenes: usize,
    pub captions_per_scene: usize,
    pub animate_types: usize,
    pub inanimate_types: usize,
    pub verbs_per_class: usize,
    pub heldout_per_class: usize,
    /// Entity slots in the label vector.
    pub max_entities: usize,
    pub n_poses: usize,
    pub n_expressions: usize,
    pub transitive_rate: f64,
    pub adjective_rate: f64,
    pub adverb_rate: f64,
    pub modal_rate: f64,
    pub pronoun_rate: f64,
    pub conjunction_rate: f64,
    pub pp_rate: f64,
    /// Standard deviation of the noise added to degraded vectors.
    pub noise: f64,
    /// Degraded vector size; half the label size when absent.
    pub degraded_dim: Option<usize>,
    pub n_role_items: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_scenes: 400,
            captions_per_scene: 5,
            animate_types: lexicon::ANIMATE.len(),
            inanimate_types: lexicon::INANIMATE.len(),
            verbs_per_class: 12,
            heldout_per_class: 3,
            max_entities: 4,
            n_poses: 4,
            n_expressions: 3,
            transitive_rate: 0.6,
            adjective_rate: 0.3,
            adverb_rate: 0.2,
            modal_rate: 0.1,
            pronoun_rate: 0.1,
            conjunction_rate: 0.1,
            pp_rate: 0.1,
            noise: 0.5,
            degraded_dim: None,
            n_role_items: 50,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.n_scenes == 0 {
            return bad("n_scenes must be positive".into());
        }
        if !(1..=6).contains(&self.captions_per_scene) {
            return bad(format!("captions_per_scene {} outside 1..=6", self.captions_per_scene));
        }
        if !(2..=lexicon::ANIMATE.len()).contains(&self.animate_types) {
            return bad(format!("animate_types must be in 2..={}", lexicon::ANIMATE.len()));
        }
        if !(1..=lexicon::INANIMATE.len()).contains(&self.inanimate_types) {
            return bad(format!("inanimate_types must be in 1..={}", lexicon::INANIMATE.len()));
        }
        if !(1..=12).contains(&self.verbs_per_class) {
            return bad("verbs_per_class must be in 1..=12".into());
        }
        if self.heldout_per_class >= self.verbs_per_class {
            return bad(format!(
                "held-out stems per class ({}) must be fewer than the inventory ({})",
                self.heldout_per_class, self.verbs_per_class
            ));
        }
        if self.max_entities < 2 {
            return bad("max_entities must be at least 2".into());
        }
        if self.n_poses == 0 || self.n_expressions == 0 || self.n_expressions > lexicon::EXPRESSION_ADJ.len() {
            return bad("pose and expression inventories must be non-empty (at most 3 expressions)".into());
        }
        let rates = [
            self.transitive_rate,
            self.adjective_rate,
            self.adverb_rate,
            self.modal_rate,
            self.pronoun_rate,
            self.conjunction_rate,
            self.pp_rate,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("rates must lie in [0, 1]".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise level {} must be non-negative", self.noise));
        }
        if self.degraded_dim == Some(0) {
            return bad("degraded_dim must be positive".into());
        }
        Ok(())
    }

    pub fn layout(&self) -> LabelLayout {
        LabelLayout::new(self.max_entities, self.n_poses, self.n_expressions)
    }

    pub fn degraded_dim(&self) -> usize {
        self.degraded_dim.unwrap_or_else(|| (self.layout().dim / 2).max(1))
    }

    /// Stems absent from the out-of-distribution training split.
    pub fn heldout_stems(&self) -> Vec<&'static str> {
        VerbClass::ALL
            .iter()
            .flat_map(|c| {
                c.verbs()[self.verbs_per_class - self.heldout_per_class..self.verbs_per_class]
                    .iter()
                    .map(|v| v.0)
            })
            .collect()
    }

    pub fn is_heldout(&self, verb: usize) -> bool {
        let class = VerbClass::of_verb(verb);
        let local = verb - class.offset();
        local >= self.verbs_per_class - self.heldout_per_class
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub ty: usize,
    pub animate: bool,
    /// Label-vector slot.
    pub slot: usize,
    pub x: f64,
    pub y: f64,
    pub rotation: f64,
    pub pose: usize,
    pub expression: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub verb: usize,
    pub class: VerbClass,
    /// Index into `Scene::entities`.
    pub agent: usize,
    pub patient: Option<usize>,
    pub object_animate: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub entities: Vec<Entity>,
    pub action: Option<Action>,
}

impl Scene {
    pub fn validate(&self, slots: usize) -> Result<()> {
        let mut used = vec![false; slots];
        for e in &self.entities {
            if e.slot >= slots || std::mem::replace(&mut used[e.slot], true) {
                return Err(Error::Invalid(format!("entity slot {} invalid or reused", e.slot)));
            }
        }
        if let Some(a) = &self.action {
            let n = self.entities.len();
            if a.agent >= n || a.patient.is_some_and(|p| p >= n || p == a.agent) {
                return Err(Error::Invalid("action refers to a missing entity".into()));
            }
            if a.class.is_transitive() != a.patient.is_some() {
                return Err(Error::Invalid("transitivity disagrees with the patient".into()));
            }
        }
        Ok(())
    }

    pub fn types(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.entities.iter().map(|e| e.ty).collect();
        t.sort_unstable();
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitTag {
    Train,
    /// Uses a held-out verb stem.
    Heldout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub verb_stem: String,
    pub verb_class: VerbClass,
    pub transitive: bool,
    pub object_animate: Option<bool>,
    pub split: SplitTag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: usize,
    pub scene_id: usize,
    pub tokens: Vec<String>,
    pub label: Vec<f64>,
    pub degraded: Vec<f64>,
    pub gold_tree: String,
    pub gold_cats: Vec<Category>,
    pub meta: ItemMeta,
    pub scene: Scene,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub config: GenConfig,
    pub layout: LabelLayout,
    pub items: Vec<CorpusItem>,
}

/// Fixed random projection `v' = tanh(W v + b) + noise`.
#[derive(Clone, Debug, PartialEq)]
pub struct Degradation {
    /// `[out, in]`, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub input: usize,
    pub noise: f64,
}

impl Degradation {
    /// The corpus transform for `config.seed`.
    pub fn for_config(config: &GenConfig) -> Self {
        let input = config.layout().dim;
        let out = config.degraded_dim();
        let mut rng = stream_rng(config.seed, Stream::SceneNoise, u32::MAX as u64);
        // Scaled so a typical label vector (about 20 unit entries) gives
        // unit-variance pre-activations.
        let scale = 1.0 / 20f64.sqrt();
        let w = (0..out * input)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let b = (0..out).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        Degradation {
            w,
            b,
            input,
            noise: config.noise,
        }
    }

    /// `W` the identity padded with zero rows or truncated, `b = 0`.
    pub fn identity(input: usize, out: usize, noise: f64) -> Self {
        let mut w = vec![0.0; out * input];
        for i in 0..out.min(input) {
            w[i * input + i] = 1.0;
        }
        Degradation {
            w,
            b: vec![0.0; out],
            input,
            noise,
        }
    }

    pub fn apply(&self, v: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        if v.len() != self.input {
            return Err(Error::shape("degrade", format!("vector of {} for input {}", v.len(), self.input)));
        }
        Ok(self
            .b
            .iter()
            .enumerate()
            .map(|(o, &b)| {
                let row = &self.w[o * self.input..(o + 1) * self.input];
                let pre: f64 = row.iter().zip(v).map(|(w, x)| w * x).sum::<f64>() + b;
                let eps: f64 = if self.noise > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                pre.tanh() + self.noise * eps
            })
            .collect())
    }
}

/// Degraded vector of `v` with the noise of scene `index`.
pub fn degrade_embedding(v: &[f64], config: &GenConfig, index: u64) -> Result<Vec<f64>> {
    let d = Degradation::for_config(config);
    d.apply(v, &mut stream_rng(config.seed, Stream::SceneNoise, index))
}

pub fn scene_to_label_vector(scene: &Scene, config: &GenConfig) -> Result<Vec<f64>> {
    let layout = config.layout();
    scene.validate(layout.slots)?;
    layout.encode(scene)
}

fn random_entity(rng: &mut ChaCha8Rng, config: &GenConfig, ty: usize, slot: usize) -> Entity {
    Entity {
        ty,
        animate: lexicon::is_animate(ty),
        slot,
        x: rng.random(),
        y: rng.random(),
        rotation: layout::rotation(rng.random()),
        pose: rng.random_range(0..config.n_poses),
        expression: rng.random_range(0..config.n_expressions),
    }
}

fn animate_type(rng: &mut ChaCha8Rng, config: &GenConfig) -> usize {
    rng.random_range(0..config.animate_types)
}

fn inanimate_type(rng: &mut ChaCha8Rng, config: &GenConfig) -> usize {
    lexicon::ANIMATE.len() + rng.random_range(0..config.inanimate_types)
}

/// Scene with an agent, an optional patient and up to `max_entities`
/// entities in random slots.
fn sample_scene(rng: &mut ChaCha8Rng, config: &GenConfig, class: VerbClass, verb: usize, extras: bool) -> Scene {
    let agent_ty = animate_type(rng, config);
    let patient_ty = match class {
        VerbClass::TransitiveAnimate => loop {
            let t = animate_type(rng, config);
            if t != agent_ty {
                break Some(t);
            }
        },
        VerbClass::TransitiveInanimate => Some(inanimate_type(rng, config)),
        VerbClass::Intransitive => None,
    };
    let mut types = vec![agent_ty];
    types.extend(patient_ty);
    let room = config.max_entities - types.len();
    let n_extra = if extras { rng.random_range(0..=room) } else { 0 };
    for _ in 0..n_extra {
        let t = if rng.random_bool(0.5) {
            animate_type(rng, config)
        } else {
            inanimate_type(rng, config)
        };
        types.push(t);
    }
    let mut slots: Vec<usize> = (0..config.max_entities).collect();
    slots.shuffle(rng);
    let mut order: Vec<usize> = (0..types.len()).collect();
    order.shuffle(rng);
    let entities: Vec<Entity> = order
        .iter()
        .zip(&slots)
        .map(|(&k, &slot)| random_entity(rng, config, types[k], slot))
        .collect();
    let agent = order.iter().position(|&k| k == 0).expect("agent placed");
    let patient = patient_ty.map(|_| order.iter().position(|&k| k == 1).expect("patient placed"));
    Scene {
        action: Some(Action {
            verb,
            class,
            agent,
            patient,
            object_animate: patient.map(|p| entities[p].animate),
        }),
        entities,
    }
}

fn leaf(tag: &str, word: &str) -> ParseTree {
    ParseTree::leaf(tag, word)
}

fn node(label: &str, left: ParseTree, right: ParseTree) -> ParseTree {
    ParseTree::node(label, vec![left, right])
}

/// Caption templates over a scene.
struct Realizer<'a> {
    config: &'a GenConfig,
    scene: &'a Scene,
}

impl Realizer<'_> {
    fn np(&self, rng: &mut ChaCha8Rng, e: &Entity, allow_pronoun: bool) -> ParseTree {
        let word = lexicon::type_word(e.ty);
        if lexicon::is_proper(e.ty) {
            return leaf("NNP", word);
        }
        if allow_pronoun && rng.random_bool(self.config.pronoun_rate) {
            return leaf("PRP", lexicon::pronoun(e.ty));
        }
        let det = leaf("DT", lexicon::DETERMINERS[rng.random_range(0..lexicon::DETERMINERS.len())]);
        let noun = leaf("NN", word);
        if rng.random_bool(self.config.adjective_rate) {
            let adj = if e.animate {
                lexicon::EXPRESSION_ADJ[e.expression % lexicon::EXPRESSION_ADJ.len()]
            } else {
                lexicon::POSE_ADJ[e.pose % lexicon::POSE_ADJ.len()]
            };
            node("NP", det, node("NOM", leaf("JJ", adj), noun))
        } else {
            node("NP", det, noun)
        }
    }

    /// Entities not taking part in the action.
    fn bystanders(&self) -> Vec<&Entity> {
        let a = self.scene.action.as_ref().expect("captioned scenes have an action");
        self.scene
            .entities
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != a.agent && Some(i) != a.patient)
            .map(|(_, e)| e)
            .collect()
    }

    fn caption(&self, rng: &mut ChaCha8Rng) -> ParseTree {
        let a = self.scene.action.as_ref().expect("captioned scenes have an action");
        let (stem, third) = lexicon::verb_forms(a.verb);
        let modal = rng.random_bool(self.config.modal_rate);
        let verb = if modal { leaf("VB", stem) } else { leaf("VBZ", third) };
        let subject = self.np(rng, &self.scene.entities[a.agent], true);
        let bystanders = self.bystanders();

        let mut vp = match a.patient {
            Some(p) => {
                let mut obj = self.np(rng, &self.scene.entities[p], false);
                if !bystanders.is_empty() && rng.random_bool(self.config.conjunction_rate) {
                    let other = bystanders[rng.random_range(0..bystanders.len())];
                    let second = self.np(rng, other, false);
                    obj = node("NP", obj, node("CONJP", leaf("CC", lexicon::CONJUNCTION), second));
                }
                node("VP", verb, obj)
            }
            None => verb,
        };
        if modal {
            let m = lexicon::MODALS[rng.random_range(0..lexicon::MODALS.len())];
            vp = node("VP", leaf("MD", m), vp);
        }
        if rng.random_bool(self.config.adverb_rate) {
            let adv = lexicon::ADVERBS[rng.random_range(0..lexicon::ADVERBS.len())];
            vp = node("VP", vp, leaf("RB", adv));
        }
        if !bystanders.is_empty() && rng.random_bool(self.config.pp_rate) {
            let other = bystanders[rng.random_range(0..bystanders.len())];
            let prep = lexicon::PREPOSITIONS[rng.random_range(0..lexicon::PREPOSITIONS.len())];
            let obj = self.np(rng, other, false);
            vp = node("VP", vp, node("PP", leaf("IN", prep), obj));
        }
        node("S", subject, vp)
    }
}

/// Verb class and global verb id for a new scene.
fn sample_action(rng: &mut ChaCha8Rng, config: &GenConfig) -> (VerbClass, usize) {
    let class = if rng.random_bool(config.transitive_rate) {
        if rng.random_bool(0.5) {
            VerbClass::TransitiveAnimate
        } else {
            VerbClass::TransitiveInanimate
        }
    } else {
        VerbClass::Intransitive
    };
    (class, class.offset() + rng.random_range(0..config.verbs_per_class))
}

pub(crate) fn item_meta(config: &GenConfig, scene: &Scene) -> ItemMeta {
    let a = scene.action.as_ref().expect("captioned scenes have an action");
    ItemMeta {
        verb_stem: lexicon::verb_forms(a.verb).0.to_string(),
        verb_class: a.class,
        transitive: a.class.is_transitive(),
        object_animate: a.object_animate,
        split: if config.is_heldout(a.verb) {
            SplitTag::Heldout
        } else {
            SplitTag::Train
        },
    }
}

pub(crate) fn gold_cats(tree: &ParseTree) -> Vec<Category> {
    tree.tags().into_iter().map(Category::from_tag).collect()
}

pub fn generate_corpus(config: &GenConfig) -> Result<Corpus> {
    config.validate()?;
    let layout = config.layout();
    let degradation = Degradation::for_config(config);
    let mut items = Vec::with_capacity(config.n_scenes * config.captions_per_scene);
    for s in 0..config.n_scenes {
        let mut rng = stream_rng(config.seed, Stream::Generator, s as u64);
        let (class, verb) = sample_action(&mut rng, config);
        let scene = sample_scene(&mut rng, config, class, verb, true);
        let label = scene_to_label_vector(&scene, config)?;
        let degraded = degradation.apply(&label, &mut stream_rng(config.seed, Stream::SceneNoise, s as u64))?;
        let meta = item_meta(config, &scene);
        let realizer = Realizer { config, scene: &scene };
        for _ in 0..config.captions_per_scene {
            let tree = realizer.caption(&mut rng);
            items.push(CorpusItem {
                id: items.len(),
                scene_id: s,
                tokens: tree.words().into_iter().map(String::from).collect(),
                label: label.clone(),
                degraded: degraded.clone(),
                gold_tree: tree.to_string(),
                gold_cats: gold_cats(&tree),
                meta: meta.clone(),
                scene: scene.clone(),
            });
        }
    }
    Ok(Corpus {
        config: config.clone(),
        layout,
        items,
    })
}

/// Scene for a role-reversal item: a known animate-object verb with two
/// common-noun participants.
pub(crate) fn role_scene(rng: &mut ChaCha8Rng, config: &GenConfig) -> Scene {
    let known = config.verbs_per_class - config.heldout_per_class;
    let verb = VerbClass::TransitiveAnimate.offset() + rng.random_range(0..known);
    loop {
        let scene = sample_scene(rng, config, VerbClass::TransitiveAnimate, verb, true);
        let a = scene.action.as_ref().expect("sampled with an action");
        let common = |i: usize| !lexicon::is_proper(scene.entities[i].ty);
        if common(a.agent) && a.patient.is_some_and(common) {
            return scene;
        }
    }
}
