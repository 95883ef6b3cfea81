//! JSON-lines corpus and match-item files. The first line is a header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusItem, GenConfig, LabelLayout, MatchItem};
use crate::error::{Error, Result};

pub const CORPUS_FORMAT: &str = "groundgram-corpus";
pub const ITEMS_FORMAT: &str = "groundgram-items";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    format: String,
    version: u32,
    config: GenConfig,
    layout: LabelLayout,
    items: usize,
}

#[derive(Serialize, Deserialize)]
struct ItemsHeader {
    format: String,
    version: u32,
    items: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_line<T: Serialize>(out: &mut impl Write, path: &Path, value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(out, "{line}").map_err(|e| Error::io(path, e))
}

fn lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>> + use<'_>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(f)
        .lines()
        .enumerate()
        .map(move |(n, l)| l.map(|l| (n + 1, l)).map_err(|e| Error::io(path, e)))
        .filter(|l| !matches!(l, Ok((_, s)) if s.trim().is_empty())))
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, n: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Format(format!("{}:{n}: {e}", path.display())))
}

fn check_version(path: &Path, format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected || version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: expected {expected} version {FORMAT_VERSION}, found {format} version {version}",
            path.display()
        )));
    }
    Ok(())
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut out = create(path)?;
    let header = CorpusHeader {
        format: CORPUS_FORMAT.into(),
        version: FORMAT_VERSION,
        config: corpus.config.clone(),
        layout: corpus.layout.clone(),
        items: corpus.items.len(),
    };
    write_line(&mut out, path, &header)?;
    for item in &corpus.items {
        write_line(&mut out, path, item)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let mut it = lines(path)?;
    let (n, first) = it
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty corpus file", path.display())))??;
    let header: CorpusHeader = parse(path, n, &first)?;
    check_version(path, &header.format, header.version, CORPUS_FORMAT)?;
    let mut items = Vec::with_capacity(header.items);
    for l in it {
        let (n, line) = l?;
        let item: CorpusItem = parse(path, n, &line)?;
        if item.tokens.len() != item.gold_cats.len() {
            return Err(Error::Format(format!("{}:{n}: token and category counts differ", path.display())));
        }
        items.push(item);
    }
    if items.len() != header.items {
        return Err(Error::Format(format!(
            "{}: header announces {} items, found {}",
            path.display(),
            header.items,
            items.len()
        )));
    }
    Ok(Corpus {
        config: header.config,
        layout: header.layout,
        items,
    })
}

pub fn write_items(path: &Path, items: &[MatchItem]) -> Result<()> {
    let mut out = create(path)?;
    let header = ItemsHeader {
        format: ITEMS_FORMAT.into(),
        version: FORMAT_VERSION,
        items: items.len(),
    };
    write_line(&mut out, path, &header)?;
    for item in items {
        write_line(&mut out, path, item)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_items(path: &Path) -> Result<Vec<MatchItem>> {
    let mut it = lines(path)?;
    let (n, first) = it
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty item file", path.display())))??;
    let header: ItemsHeader = parse(path, n, &first)?;
    check_version(path, &header.format, header.version, ITEMS_FORMAT)?;
    let mut items = Vec::with_capacity(header.items);
    for l in it {
        let (n, line) = l?;
        let item: MatchItem = parse(path, n, &line)?;
        item.validate()?;
        items.push(item);
    }
    if items.len() != header.items {
        return Err(Error::Format(format!(
            "{}: header announces {} items, found {}",
            path.display(),
            header.items,
            items.len()
        )));
    }
    Ok(items)
}
