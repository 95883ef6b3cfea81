//! Flat `key = value` run configuration.
//!
//! Keys mirror [`TrainConfig`] with nested fields flattened. A file is
//! applied first, then command-line overrides, and the fully resolved set is
//! written back into the run directory.

use std::path::Path;

use groundgram::grounding::NegativeStrategy;
use groundgram::scenegen::Regime;
use groundgram::trainer::{ScheduleKind, TrainConfig};
use ini::Ini;

use crate::CliError;

pub const KEYS: [&str; 30] = [
    "schedule",
    "epochs",
    "switch_epoch",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "clip_norm",
    "seed",
    "regime",
    "checkpoint_every",
    "min_count",
    "unk_dropout",
    "v_beta",
    "margin",
    "negative_strategy",
    "alpha1",
    "alpha2",
    "n_nonterminals",
    "n_preterminals",
    "symbol_embed",
    "z_dim",
    "grammar_hidden",
    "word_dim",
    "encoder_hidden",
    "span_hidden",
    "sem_dim",
    "scene_hidden",
    "share_embeddings",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::Usage(format!("config key {key}: cannot parse {value:?}: {e}")))
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::InDistribution => "in-distribution",
        Regime::OutOfDistribution => "out-of-distribution",
    }
}

fn strategy_name(s: NegativeStrategy) -> &'static str {
    match s {
        NegativeStrategy::InBatchAll => "in-batch-all",
        NegativeStrategy::SingleSampled => "single-sampled",
    }
}

pub fn set(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<(), CliError> {
    let v = value.trim();
    let m = &mut cfg.model;
    match key.trim() {
        "schedule" => cfg.schedule = v.parse::<ScheduleKind>().map_err(|e| CliError::Usage(e.to_string()))?,
        "epochs" => cfg.epochs = parse(key, v)?,
        "switch_epoch" => {
            cfg.switch_epoch = match v {
                "" | "default" => None,
                _ => Some(parse(key, v)?),
            }
        }
        "batch_size" => cfg.batch_size = parse(key, v)?,
        "lr" => cfg.adam.lr = parse(key, v)?,
        "beta1" => cfg.adam.beta1 = parse(key, v)?,
        "beta2" => cfg.adam.beta2 = parse(key, v)?,
        "adam_eps" => cfg.adam.eps = parse(key, v)?,
        "clip_norm" => cfg.clip_norm = parse(key, v)?,
        "seed" => cfg.seed = parse(key, v)?,
        "regime" => {
            cfg.regime = match v {
                "in-distribution" => Regime::InDistribution,
                "out-of-distribution" => Regime::OutOfDistribution,
                _ => return Err(CliError::Usage(format!("unknown regime {v:?}"))),
            }
        }
        "checkpoint_every" => cfg.checkpoint_every = parse(key, v)?,
        "min_count" => cfg.min_count = parse(key, v)?,
        "unk_dropout" => cfg.unk_dropout = parse(key, v)?,
        "v_beta" => cfg.v_beta = parse(key, v)?,
        "margin" => cfg.matching.epsilon = parse(key, v)?,
        "negative_strategy" => {
            cfg.matching.negative_strategy = match v {
                "in-batch-all" => NegativeStrategy::InBatchAll,
                "single-sampled" => NegativeStrategy::SingleSampled,
                _ => return Err(CliError::Usage(format!("unknown negative strategy {v:?}"))),
            }
        }
        "alpha1" => cfg.matching.alpha1 = parse(key, v)?,
        "alpha2" => cfg.matching.alpha2 = parse(key, v)?,
        "n_nonterminals" => m.n_nonterminals = parse(key, v)?,
        "n_preterminals" => m.n_preterminals = parse(key, v)?,
        "symbol_embed" => m.grammar.symbol_embed = parse(key, v)?,
        "z_dim" => m.grammar.z = parse(key, v)?,
        "grammar_hidden" => m.grammar.hidden = parse(key, v)?,
        "word_dim" => m.word_dim = parse(key, v)?,
        "encoder_hidden" => m.encoder_hidden = parse(key, v)?,
        "span_hidden" => m.span_hidden = parse(key, v)?,
        "sem_dim" => m.sem_dim = parse(key, v)?,
        "scene_hidden" => m.scene_hidden = parse(key, v)?,
        "share_embeddings" => m.share_embeddings = parse(key, v)?,
        other => return Err(CliError::Usage(format!("unknown config key {other:?}"))),
    }
    Ok(())
}

/// Apply every `key = value` of an INI file (section headers are ignored).
pub fn apply_file(cfg: &mut TrainConfig, path: &Path) -> Result<(), CliError> {
    let ini = Ini::load_from_file(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for (_, props) in ini.iter() {
        for (k, v) in props.iter() {
            set(cfg, k, v)?;
        }
    }
    Ok(())
}

/// Apply a `key=value` override.
pub fn apply_override(cfg: &mut TrainConfig, kv: &str) -> Result<(), CliError> {
    let (k, v) = kv
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {kv:?} is not key=value")))?;
    set(cfg, k, v)
}

/// Every key with its resolved value, one per line, in [`KEYS`] order.
pub fn render(cfg: &TrainConfig) -> String {
    let m = &cfg.model;
    let values: [String; 30] = [
        cfg.schedule.name().to_string(),
        cfg.epochs.to_string(),
        cfg.switch_epoch.map_or("default".into(), |s| s.to_string()),
        cfg.batch_size.to_string(),
        cfg.adam.lr.to_string(),
        cfg.adam.beta1.to_string(),
        cfg.adam.beta2.to_string(),
        cfg.adam.eps.to_string(),
        cfg.clip_norm.to_string(),
        cfg.seed.to_string(),
        regime_name(cfg.regime).to_string(),
        cfg.checkpoint_every.to_string(),
        cfg.min_count.to_string(),
        cfg.unk_dropout.to_string(),
        cfg.v_beta.to_string(),
        cfg.matching.epsilon.to_string(),
        strategy_name(cfg.matching.negative_strategy).to_string(),
        cfg.matching.alpha1.to_string(),
        cfg.matching.alpha2.to_string(),
        m.n_nonterminals.to_string(),
        m.n_preterminals.to_string(),
        m.grammar.symbol_embed.to_string(),
        m.grammar.z.to_string(),
        m.grammar.hidden.to_string(),
        m.word_dim.to_string(),
        m.encoder_hidden.to_string(),
        m.span_hidden.to_string(),
        m.sem_dim.to_string(),
        m.scene_hidden.to_string(),
        m.share_embeddings.to_string(),
    ];
    let mut out = String::new();
    for (k, v) in KEYS.iter().zip(values) {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_then_apply_reproduces_the_config() {
        let mut cfg = TrainConfig::default();
        for kv in [
            "schedule=semantics-first",
            "epochs=12",
            "switch_epoch=4",
            "lr=0.0025",
            "regime=out-of-distribution",
            "negative_strategy=single-sampled",
            "unk_dropout=0.1",
            "n_nonterminals=7",
            "share_embeddings=false",
        ] {
            apply_override(&mut cfg, kv).unwrap();
        }
        let text = render(&cfg);
        assert_eq!(text.lines().count(), KEYS.len());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ini");
        std::fs::write(&p, &text).unwrap();
        let mut back = TrainConfig::default();
        apply_file(&mut back, &p).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(render(&back), text);
    }

    #[test]
    fn bad_keys_and_values_are_usage_errors() {
        let mut cfg = TrainConfig::default();
        assert!(matches!(apply_override(&mut cfg, "nope=1"), Err(CliError::Usage(_))));
        assert!(matches!(apply_override(&mut cfg, "epochs=many"), Err(CliError::Usage(_))));
        assert!(matches!(apply_override(&mut cfg, "epochs"), Err(CliError::Usage(_))));
        assert!(matches!(apply_override(&mut cfg, "schedule=both"), Err(CliError::Usage(_))));
    }
}
