use std::fmt;

use crate::error::{Error, Result};

/// Labelled constituency tree; leaves are preterminals over a single word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseTree {
    Node { label: String, children: Vec<ParseTree> },
    Leaf { label: String, word: String },
}

impl ParseTree {
    pub fn leaf(label: impl Into<String>, word: impl Into<String>) -> Self {
        ParseTree::Leaf {
            label: label.into(),
            word: word.into(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<ParseTree>) -> Self {
        ParseTree::Node {
            label: label.into(),
            children,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            ParseTree::Node { label, .. } | ParseTree::Leaf { label, .. } => label,
        }
    }

    /// Number of words.
    pub fn len(&self) -> usize {
        match self {
            ParseTree::Leaf { .. } => 1,
            ParseTree::Node { children, .. } => children.iter().map(ParseTree::len).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn words(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |label, word| {
            let _ = label;
            out.push(word);
        });
        out
    }

    /// Preterminal label of each word.
    pub fn tags(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |label, _| out.push(label));
        out
    }

    fn visit_leaves<'a>(&'a self, f: &mut impl FnMut(&'a str, &'a str)) {
        match self {
            ParseTree::Leaf { label, word } => f(label, word),
            ParseTree::Node { children, .. } => children.iter().for_each(|c| c.visit_leaves(f)),
        }
    }

    /// Every constituent span `(i, j)` including words and the whole sentence.
    pub fn all_spans(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        self.collect_spans(0, &mut out);
        out
    }

    fn collect_spans(&self, start: usize, out: &mut Vec<(usize, usize)>) -> usize {
        match self {
            ParseTree::Leaf { .. } => {
                out.push((start, start + 1));
                start + 1
            }
            ParseTree::Node { children, .. } => {
                let mut pos = start;
                for c in children {
                    pos = c.collect_spans(pos, out);
                }
                out.push((start, pos));
                pos
            }
        }
    }

    /// Internal spans: width between 2 and `n - 1`, deduplicated and sorted.
    pub fn internal_spans(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut spans: Vec<_> = self
            .all_spans()
            .into_iter()
            .filter(|&(i, j)| j - i >= 2 && j - i < n)
            .collect();
        spans.sort_unstable();
        spans.dedup();
        spans
    }

    pub fn parse(text: &str) -> Result<ParseTree> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let tree = parse_tree(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Format(format!("trailing input after tree in {text:?}")));
        }
        Ok(tree)
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseTree::Leaf { label, word } => write!(f, "({label} {word})"),
            ParseTree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch == '(' || ch == ')' || ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok::Atom(&text[s..i]));
            }
            match ch {
                '(' => out.push(Tok::Open),
                ')' => out.push(Tok::Close),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok::Atom(&text[s..]));
    }
    out
}

fn parse_tree(tokens: &[Tok], pos: &mut usize) -> Result<ParseTree> {
    let err = |m: &str| Error::Format(format!("bracketed tree: {m}"));
    if tokens.get(*pos) != Some(&Tok::Open) {
        return Err(err("expected '('"));
    }
    *pos += 1;
    let Some(Tok::Atom(label)) = tokens.get(*pos) else {
        return Err(err("expected a label"));
    };
    *pos += 1;
    let tree = match tokens.get(*pos) {
        Some(Tok::Atom(word)) => {
            *pos += 1;
            ParseTree::leaf(*label, *word)
        }
        Some(Tok::Open) => {
            let mut children = Vec::new();
            while tokens.get(*pos) == Some(&Tok::Open) {
                children.push(parse_tree(tokens, pos)?);
            }
            ParseTree::node(*label, children)
        }
        _ => return Err(err("empty constituent")),
    };
    if tokens.get(*pos) != Some(&Tok::Close) {
        return Err(err("expected ')'"));
    }
    *pos += 1;
    Ok(tree)
}
