//! `eval`: one task against one checkpoint.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use groundgram::evalsuite::{
    self, branching_baseline, contingency, expected_random_f1, match_scores, span_f1, svg, Direction,
};
use groundgram::model::CaptionView;
use groundgram::scenegen::{make_splits, read_corpus, read_items, MatchItem, MatchKind};
use groundgram::trainer::{Checkpoint, TrainData};
use groundgram::Model;

use crate::manifest::RunManifest;
use crate::{create_dir, write_file, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    F1,
    Vmeasure,
    Contingency,
    VerbMatch,
    RoleMatch,
    ParseDump,
}

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum)]
    task: Task,
    /// Match items; defaults to the corpus's items for the run's regime.
    #[arg(long)]
    items: Option<PathBuf>,
    /// Corpus; defaults to the one recorded in the run manifest.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

const DUMP_SENTENCES: usize = 20;

struct Loaded {
    model: Model,
    data: TrainData,
    v_beta: f64,
    whole_caption: bool,
}

fn load(a: &EvalArgs) -> Result<Loaded, CliError> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let corpus_path = match &a.corpus {
        Some(p) => p.clone(),
        None => {
            let dir = a.checkpoint.parent().unwrap_or(Path::new("."));
            RunManifest::load(dir)
                .map_err(|e| CliError::Usage(format!("no --corpus given and no usable manifest: {e}")))?
                .corpus
        }
    };
    let corpus = read_corpus(&corpus_path)?;
    let splits = make_splits(&corpus)?;
    let data = TrainData::new(&corpus, &splits, &ck.train)?;
    if data.vocab != ck.spec.vocab {
        return Err(CliError::Data("checkpoint vocabulary does not match the corpus".into()));
    }
    let schedule = ck.train.schedule()?;
    Ok(Loaded {
        model: ck.model()?,
        whole_caption: schedule.whole_caption_eval(ck.epoch.saturating_sub(1)),
        v_beta: ck.train.v_beta,
        data,
    })
}

fn test_views(l: &Loaded) -> Result<Vec<CaptionView>, CliError> {
    let tokens: Vec<&[usize]> = l.data.test.iter().map(|t| t.tokens.as_slice()).collect();
    let words: Vec<&[String]> = l.data.test.iter().map(|t| t.words.as_slice()).collect();
    Ok(l.model.caption_views_all(&tokens, &words)?)
}

/// Mean and sample standard deviation across sentences.
fn mean_sd(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 } else { 0.0 };
    (m, var.sqrt())
}

fn f1_table(l: &Loaded) -> Result<String, CliError> {
    let views = test_views(l)?;
    let mut model = Vec::new();
    let (mut left, mut right, mut random) = (Vec::new(), Vec::new(), Vec::new());
    for (v, t) in views.iter().zip(&l.data.test) {
        model.push(span_f1(&v.best.tree, &t.gold)?.f1);
        left.push(span_f1(&branching_baseline(&t.words, Direction::Left)?, &t.gold)?.f1);
        right.push(span_f1(&branching_baseline(&t.words, Direction::Right)?, &t.gold)?.f1);
        random.push(expected_random_f1(&t.gold));
    }
    let mut out = String::from("parser,span_f1,sd_sentences,sentences\n");
    for (name, v) in [("model", &model), ("left-branching", &left), ("right-branching", &right), ("random-tree", &random)] {
        let (m, sd) = mean_sd(v);
        out.push_str(&format!("{name},{m},{sd},{}\n", v.len()));
    }
    Ok(out)
}

fn categories(l: &Loaded) -> Result<(Vec<String>, Vec<String>), CliError> {
    let views = test_views(l)?;
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for (v, t) in views.iter().zip(&l.data.test) {
        pred.extend(v.best.preterminals.iter().map(|&p| format!("T{p:02}")));
        gold.extend(t.gold_cats.iter().map(|c| c.name().to_string()));
    }
    Ok((pred, gold))
}

fn match_items(a: &EvalArgs, l: &Loaded, kind: MatchKind) -> Result<Vec<MatchItem>, CliError> {
    let items = match &a.items {
        Some(p) => read_items(p)?,
        None => match kind {
            MatchKind::VerbMatch => l.data.verb_items.clone(),
            MatchKind::RoleMatch => l.data.role_items.clone(),
        },
    };
    if let Some(bad) = items.iter().find(|it| it.kind != kind) {
        return Err(CliError::Usage(format!(
            "task expects {kind:?} items but item {} is {:?}",
            bad.id, bad.kind
        )));
    }
    if items.is_empty() {
        return Err(CliError::Data("no match items to evaluate".into()));
    }
    Ok(items)
}

fn match_task(a: &EvalArgs, l: &Loaded, kind: MatchKind) -> Result<(String, String), CliError> {
    let items = match_items(a, l, kind)?;
    let scores = match_scores(&l.model, &items, l.data.source, l.whole_caption)?;
    let report = evalsuite::evaluate_matches(&items, &scores)?;
    let mut per_item = String::from("item,verb_stem,transitive,target,score0,score1,correct\n");
    for (it, s) in items.iter().zip(&scores) {
        let chosen = usize::from(s[1] > s[0]);
        per_item.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            it.id,
            it.meta.verb_stem,
            it.meta.transitive,
            it.target,
            s[0],
            s[1],
            u8::from(chosen == it.target)
        ));
    }
    let mut summary = format!("group,items,score\nall,{},{}\n", report.n, report.score);
    for (group, (score, n)) in &report.by_transitivity {
        summary.push_str(&format!("{group},{n},{score}\n"));
    }
    Ok((summary, per_item))
}

pub fn run(a: &EvalArgs) -> Result<(), CliError> {
    if let (Some(_), Task::F1 | Task::Vmeasure | Task::Contingency | Task::ParseDump) = (&a.items, a.task) {
        return Err(CliError::Usage("--items only applies to verb-match and role-match".into()));
    }
    let l = load(a)?;
    create_dir(&a.out)?;
    match a.task {
        Task::F1 => write_file(&a.out.join("f1.csv"), &f1_table(&l)?),
        Task::Vmeasure => {
            let (pred, gold) = categories(&l)?;
            let v = evalsuite::v_measure(&pred, &gold, l.v_beta)?;
            write_file(
                &a.out.join("vmeasure.csv"),
                &format!("beta,homogeneity,completeness,v_measure\n{},{},{},{}\n", l.v_beta, v.homogeneity, v.completeness, v.v),
            )
        }
        Task::Contingency => {
            let (pred, gold) = categories(&l)?;
            let c = contingency(&pred, &gold)?;
            write_file(&a.out.join("contingency.csv"), &c.to_csv())?;
            let chart = svg::heat_map("Gold categories by induced preterminal", &c.rows, &c.cols, &c.table);
            write_file(&a.out.join("contingency.svg"), &chart)
        }
        Task::VerbMatch | Task::RoleMatch => {
            let (kind, name) = match a.task {
                Task::VerbMatch => (MatchKind::VerbMatch, "verb-match"),
                _ => (MatchKind::RoleMatch, "role-match"),
            };
            let (summary, per_item) = match_task(a, &l, kind)?;
            write_file(&a.out.join(format!("{name}.csv")), &summary)?;
            write_file(&a.out.join(format!("{name}-items.csv")), &per_item)
        }
        Task::ParseDump => {
            let views = test_views(&l)?;
            let mut text = String::new();
            for (v, t) in views.iter().zip(&l.data.test).take(DUMP_SENTENCES) {
                text.push_str(&format!("pred {}\ngold {}\n\n", v.best.tree, t.gold));
            }
            write_file(&a.out.join("parse-dump.txt"), &text)
        }
    }
}
