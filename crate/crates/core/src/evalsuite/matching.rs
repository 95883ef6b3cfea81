//! Two-way forced-choice matching between captions and scenes.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::scenegen::{MatchItem, MatchKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneSource {
    Labels,
    Degraded,
}

/// Candidate scores per item.
pub type MatchScores = Vec<[f64; 2]>;

#[derive(Clone, Debug, PartialEq)]
pub struct MatchReport {
    /// Fraction of items whose best candidate is the target.
    pub score: f64,
    pub n: usize,
    pub correct: Vec<bool>,
    /// `"transitive"` / `"intransitive"` to (score, count).
    pub by_transitivity: BTreeMap<String, (f64, usize)>,
    /// `"animate"` / `"inanimate"` objects of transitive items.
    pub by_animacy: BTreeMap<String, (f64, usize)>,
}

fn breakout<'a>(keys: impl Iterator<Item = Option<&'a str>>, correct: &[bool]) -> BTreeMap<String, (f64, usize)> {
    let mut acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (k, &c) in keys.zip(correct) {
        if let Some(k) = k {
            let e = acc.entry(k.to_string()).or_default();
            e.0 += c as usize;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(k, (hit, n))| (k, (hit as f64 / n as f64, n)))
        .collect()
}

/// Chooses the higher-scoring candidate, preferring index 0 on ties.
pub fn evaluate_matches(items: &[MatchItem], scores: &[[f64; 2]]) -> Result<MatchReport> {
    if items.is_empty() {
        return Err(Error::Invalid("no match items".into()));
    }
    if items.len() != scores.len() {
        return Err(Error::shape("evaluate_matches", "one score pair per item"));
    }
    let correct: Vec<bool> = items
        .iter()
        .zip(scores)
        .map(|(it, s)| {
            let choice = if s[1] > s[0] { 1 } else { 0 };
            choice == it.target
        })
        .collect();
    let score = correct.iter().filter(|&&c| c).count() as f64 / items.len() as f64;
    let by_transitivity = breakout(
        items
            .iter()
            .map(|it| Some(if it.meta.transitive { "transitive" } else { "intransitive" })),
        &correct,
    );
    let by_animacy = breakout(
        items.iter().map(|it| {
            it.meta
                .object_animate
                .map(|a| if a { "animate" } else { "inanimate" })
        }),
        &correct,
    );
    Ok(MatchReport {
        score,
        n: items.len(),
        correct,
        by_transitivity,
        by_animacy,
    })
}

fn check_kind(items: &[MatchItem], kind: MatchKind) -> Result<()> {
    match items.iter().find(|it| it.kind != kind) {
        Some(it) => Err(Error::Invalid(format!("item {} is {:?}, expected {kind:?}", it.id, it.kind))),
        None => Ok(()),
    }
}

/// Verb matching with an arbitrary scorer of (item, scene candidate).
pub fn verb_match_eval(items: &[MatchItem], mut scorer: impl FnMut(&MatchItem, usize) -> f64) -> Result<MatchReport> {
    check_kind(items, MatchKind::VerbMatch)?;
    let scores: Vec<[f64; 2]> = items.iter().map(|it| [scorer(it, 0), scorer(it, 1)]).collect();
    evaluate_matches(items, &scores)
}

/// Role matching with an arbitrary scorer of (item, caption candidate).
pub fn role_match_eval(items: &[MatchItem], mut scorer: impl FnMut(&MatchItem, usize) -> f64) -> Result<MatchReport> {
    check_kind(items, MatchKind::RoleMatch)?;
    let scores: Vec<[f64; 2]> = items.iter().map(|it| [scorer(it, 0), scorer(it, 1)]).collect();
    evaluate_matches(items, &scores)
}

/// Model scores for every candidate under `z = mu`: marginal-weighted span
/// cosines, or the whole-caption cosine when `whole_caption`.
pub fn match_scores(model: &Model, items: &[MatchItem], source: SceneSource, whole_caption: bool) -> Result<MatchScores> {
    let vocab = &model.spec.vocab;
    let mut caption_index: HashMap<&[String], usize> = HashMap::new();
    let mut captions: Vec<&[String]> = Vec::new();
    for it in items {
        it.validate()?;
        for c in &it.captions {
            if c.len() < 2 {
                return Err(Error::Invalid(format!("item {} caption shorter than two words", it.id)));
            }
            caption_index.entry(c.as_slice()).or_insert_with(|| {
                captions.push(c.as_slice());
                captions.len() - 1
            });
        }
    }
    let tokens: Vec<Vec<usize>> = captions.iter().map(|c| vocab.encode(c)).collect();
    let token_refs: Vec<&[usize]> = tokens.iter().map(Vec::as_slice).collect();
    let views = model.caption_views_all(&token_refs, &captions)?;

    let scenes_of = |it: &MatchItem| match source {
        SceneSource::Labels => it.labels.clone(),
        SceneSource::Degraded => it.degraded.clone(),
    };
    let all_scenes: Vec<Vec<f64>> = items.iter().flat_map(scenes_of).collect();
    let mut codes = Vec::with_capacity(all_scenes.len());
    for chunk in all_scenes.chunks(256) {
        let refs: Vec<&[f64]> = chunk.iter().map(Vec::as_slice).collect();
        codes.extend(model.scene_codes(&refs)?);
    }

    let mut out = Vec::with_capacity(items.len());
    let mut at = 0;
    for it in items {
        let view = |k: usize| &views[caption_index[it.captions[k].as_slice()]];
        let s = match it.kind {
            MatchKind::VerbMatch => {
                let v = view(0);
                [
                    v.match_score(&codes[at], whole_caption),
                    v.match_score(&codes[at + 1], whole_caption),
                ]
            }
            MatchKind::RoleMatch => [
                view(0).match_score(&codes[at], whole_caption),
                view(1).match_score(&codes[at], whole_caption),
            ],
        };
        at += it.labels.len();
        out.push(s);
    }
    Ok(out)
}
