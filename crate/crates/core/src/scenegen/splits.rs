//! Train/test splits and the two matching tasks.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{item_meta, lexicon, role_scene, scene_to_label_vector, Corpus, Degradation, ItemMeta, SplitTag};
use crate::error::{Error, Result};
use crate::inference::ParseTree;
use crate::rng::{stream_rng, Stream};

/// Stream indices reserved for split decisions, far above scene indices.
const SPLIT_INDEX: u64 = 1 << 40;
const VERB_ITEMS_INDEX: u64 = SPLIT_INDEX + 1;
const ROLE_ITEMS_INDEX: u64 = SPLIT_INDEX + 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Half of the held-out items return to training; the rest are tested.
    InDistribution,
    /// Every held-out stem is unseen during training.
    OutOfDistribution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchKind {
    VerbMatch,
    RoleMatch,
}

/// Two-way forced choice: one caption against two scenes, or two captions
/// against one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchItem {
    pub kind: MatchKind,
    pub id: usize,
    pub captions: Vec<Vec<String>>,
    /// Label vectors, parallel to `degraded`.
    pub labels: Vec<Vec<f64>>,
    pub degraded: Vec<Vec<f64>>,
    pub target: usize,
    pub meta: ItemMeta,
    /// Corpus items the candidates come from (empty for constructed items).
    pub sources: Vec<usize>,
}

impl MatchItem {
    pub fn validate(&self) -> Result<()> {
        let (c, s) = match self.kind {
            MatchKind::VerbMatch => (1, 2),
            MatchKind::RoleMatch => (2, 1),
        };
        if self.captions.len() != c || self.labels.len() != s || self.degraded.len() != s {
            return Err(Error::Format(format!("match item {} has the wrong candidate count", self.id)));
        }
        if self.target >= 2 {
            return Err(Error::Format(format!("match item {} target {} out of range", self.id, self.target)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    /// Training items when every held-out stem stays unseen.
    pub train: Vec<usize>,
    pub test_outdist: Vec<usize>,
    /// Held-out items returned to training in the in-distribution regime.
    pub returned: Vec<usize>,
    pub test_indist: Vec<usize>,
    pub verb_items: Vec<MatchItem>,
    /// Verb matching over the in-distribution test items.
    pub verb_items_indist: Vec<MatchItem>,
    pub role_items: Vec<MatchItem>,
}

impl Splits {
    pub fn train_for(&self, regime: Regime) -> Vec<usize> {
        match regime {
            Regime::OutOfDistribution => self.train.clone(),
            Regime::InDistribution => {
                let mut t = self.train.clone();
                t.extend(&self.returned);
                t.sort_unstable();
                t
            }
        }
    }

    pub fn test_for(&self, regime: Regime) -> &[usize] {
        match regime {
            Regime::OutOfDistribution => &self.test_outdist,
            Regime::InDistribution => &self.test_indist,
        }
    }

    pub fn verb_items_for(&self, regime: Regime) -> &[MatchItem] {
        match regime {
            Regime::OutOfDistribution => &self.verb_items,
            Regime::InDistribution => &self.verb_items_indist,
        }
    }
}

/// Pairs each transitive test item with an intransitive one, preferring
/// partners whose scene shares an entity type; each pair yields two items,
/// one per caption, with the other's scene as distractor. Empty when the
/// test set lacks one of the two classes.
pub fn verb_items(corpus: &Corpus, test: &[usize], stream_index: u64) -> Result<Vec<MatchItem>> {
    let mut rng = stream_rng(corpus.config.seed, Stream::Generator, stream_index);
    let items = &corpus.items;
    let mut trans: Vec<usize> = test.iter().copied().filter(|&i| items[i].meta.transitive).collect();
    let mut intrans: Vec<usize> = test.iter().copied().filter(|&i| !items[i].meta.transitive).collect();
    if trans.is_empty() || intrans.is_empty() {
        return Ok(Vec::new());
    }
    trans.shuffle(&mut rng);
    intrans.shuffle(&mut rng);
    let mut free: BTreeSet<usize> = (0..intrans.len()).collect();
    let mut out = Vec::new();
    for &t in &trans {
        if free.is_empty() {
            break;
        }
        let types: BTreeSet<usize> = items[t].scene.types().into_iter().collect();
        let shares = |k: &usize| {
            let it = &items[intrans[*k]];
            it.scene_id != items[t].scene_id && it.scene.types().iter().any(|ty| types.contains(ty))
        };
        let k = free
            .iter()
            .copied()
            .find(shares)
            .or_else(|| free.iter().copied().find(|&k| items[intrans[k]].scene_id != items[t].scene_id));
        let Some(k) = k else { continue };
        free.remove(&k);
        let i = intrans[k];
        for (own, other) in [(t, i), (i, t)] {
            let target = rng.random_range(0..2usize);
            let (a, b) = if target == 0 { (own, other) } else { (other, own) };
            out.push(MatchItem {
                kind: MatchKind::VerbMatch,
                id: out.len(),
                captions: vec![items[own].tokens.clone()],
                labels: vec![items[a].label.clone(), items[b].label.clone()],
                degraded: vec![items[a].degraded.clone(), items[b].degraded.clone()],
                target,
                meta: items[own].meta.clone(),
                sources: vec![a, b],
            });
        }
    }
    Ok(out)
}

fn simple_np(det: &str, noun: &str) -> ParseTree {
    ParseTree::node("NP", vec![ParseTree::leaf("DT", det), ParseTree::leaf("NN", noun)])
}

/// Minimal pairs `the A verbs the B` / `the B verbs the A` over one scene,
/// using known verbs only.
pub fn role_items(corpus_config: &super::GenConfig, count: usize) -> Result<Vec<MatchItem>> {
    let config = corpus_config;
    let degradation = Degradation::for_config(config);
    let mut rng = stream_rng(config.seed, Stream::Generator, ROLE_ITEMS_INDEX);
    let mut out = Vec::with_capacity(count);
    for id in 0..count {
        let scene = role_scene(&mut rng, config);
        let a = scene.action.as_ref().expect("role scenes have an action");
        let patient = a.patient.expect("role scenes are transitive");
        let agent_word = lexicon::type_word(scene.entities[a.agent].ty);
        let patient_word = lexicon::type_word(scene.entities[patient].ty);
        let verb = lexicon::verb_forms(a.verb).1;
        let sentence = |x: &str, y: &str| {
            let t = ParseTree::node(
                "S",
                vec![
                    simple_np("the", x),
                    ParseTree::node("VP", vec![ParseTree::leaf("VBZ", verb), simple_np("the", y)]),
                ],
            );
            t.words().into_iter().map(String::from).collect::<Vec<_>>()
        };
        let right = sentence(agent_word, patient_word);
        let swapped = sentence(patient_word, agent_word);
        let target = rng.random_range(0..2usize);
        let captions = if target == 0 { vec![right, swapped] } else { vec![swapped, right] };
        let label = scene_to_label_vector(&scene, config)?;
        let degraded = degradation.apply(
            &label,
            &mut stream_rng(config.seed, Stream::SceneNoise, ROLE_ITEMS_INDEX + 1 + id as u64),
        )?;
        let mut meta = item_meta(config, &scene);
        meta.split = SplitTag::Train;
        out.push(MatchItem {
            kind: MatchKind::RoleMatch,
            id,
            captions,
            labels: vec![label],
            degraded: vec![degraded],
            target,
            meta,
            sources: Vec::new(),
        });
    }
    Ok(out)
}

pub fn make_splits(corpus: &Corpus) -> Result<Splits> {
    let config = &corpus.config;
    let mut train = Vec::new();
    let mut heldout = Vec::new();
    for (i, item) in corpus.items.iter().enumerate() {
        match item.meta.split {
            SplitTag::Train => train.push(i),
            SplitTag::Heldout => heldout.push(i),
        }
    }
    if heldout.len() < 2 {
        return Err(Error::Invalid(format!(
            "only {} held-out items; cannot form test splits",
            heldout.len()
        )));
    }
    let mut shuffled = heldout.clone();
    shuffled.shuffle(&mut stream_rng(config.seed, Stream::Generator, SPLIT_INDEX));
    let half = shuffled.len() / 2;
    let mut returned = shuffled[..half].to_vec();
    let mut test_indist = shuffled[half..].to_vec();
    returned.sort_unstable();
    test_indist.sort_unstable();
    Ok(Splits {
        verb_items: verb_items(corpus, &heldout, VERB_ITEMS_INDEX)?,
        verb_items_indist: verb_items(corpus, &test_indist, VERB_ITEMS_INDEX + 1)?,
        role_items: role_items(config, config.n_role_items)?,
        train,
        test_outdist: heldout,
        returned,
        test_indist,
    })
}
