//! Span F1, branching baselines, V-measure, contingency tables and the
//! paired t-test.

use std::collections::{BTreeMap, BTreeSet};

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::inference::ParseTree;

/// Internal spans `(i, j)` with `2 <= j - i <= n - 1`.
pub type SpanSet = BTreeSet<(usize, usize)>;

pub fn span_set(tree: &ParseTree) -> SpanSet {
    tree.internal_spans().into_iter().collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set precision, recall and F1; two empty sets score 1, one empty set 0.
pub fn span_f1(pred: &ParseTree, gold: &ParseTree) -> Result<Prf> {
    if pred.len() != gold.len() {
        return Err(Error::Invalid(format!(
            "predicted tree has {} leaves, gold has {}",
            pred.len(),
            gold.len()
        )));
    }
    Ok(prf(&span_set(pred), &span_set(gold)))
}

pub(crate) fn prf(pred: &SpanSet, gold: &SpanSet) -> Prf {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => {
            return Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            }
        }
        (true, false) | (false, true) => {
            return Prf {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            }
        }
        _ => {}
    }
    let hit = pred.intersection(gold).count() as f64;
    let precision = hit / pred.len() as f64;
    let recall = hit / gold.len() as f64;
    let f1 = if hit == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

/// Fully left- or right-branching tree over `words`.
pub fn branching_baseline<S: AsRef<str>>(words: &[S], direction: Direction) -> Result<ParseTree> {
    if words.len() < 2 {
        return Err(Error::Invalid("branching baseline needs at least two words".into()));
    }
    let leaves: Vec<ParseTree> = words.iter().map(|w| ParseTree::leaf("X", w.as_ref())).collect();
    let tree = match direction {
        Direction::Right => leaves
            .into_iter()
            .rev()
            .reduce(|acc, l| ParseTree::node("X", vec![l, acc]))
            .expect("non-empty"),
        Direction::Left => leaves
            .into_iter()
            .reduce(|acc, l| ParseTree::node("X", vec![acc, l]))
            .expect("non-empty"),
    };
    Ok(match tree {
        ParseTree::Node { children, .. } => ParseTree::node("S", children),
        leaf => leaf,
    })
}

/// Binary bracketings of `k + 1` leaves.
fn catalan(k: usize) -> f64 {
    (0..k).fold(1.0, |c, i| c * 2.0 * (2 * i + 1) as f64 / (i + 2) as f64)
}

/// Expected span F1 of a uniformly random binary tree against `gold`.
///
/// Every binary tree has `n - 2` internal spans, so F1 is linear in the
/// overlap count and the expectation only needs each gold span's inclusion
/// probability `Cat(w-1)·Cat(n-w)/Cat(n-1)`.
pub fn expected_random_f1(gold: &ParseTree) -> f64 {
    let n = gold.len();
    let spans = span_set(gold);
    if n <= 2 {
        return if spans.is_empty() { 1.0 } else { 0.0 };
    }
    if spans.is_empty() {
        return 0.0;
    }
    let total = catalan(n - 1);
    let hits: f64 = spans
        .iter()
        .map(|&(i, j)| {
            let w = j - i;
            catalan(w - 1) * catalan(n - w) / total
        })
        .sum();
    2.0 * hits / ((n - 2) as f64 + spans.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// `H(X | Y)` from joint counts keyed `(x, y)`.
fn conditional_entropy<X: Ord, Y: Ord + Clone>(joint: &BTreeMap<(X, Y), usize>, total: f64) -> f64 {
    let mut y_counts: BTreeMap<Y, usize> = BTreeMap::new();
    for ((_, y), &c) in joint {
        *y_counts.entry(y.clone()).or_default() += c;
    }
    joint
        .iter()
        .map(|((_, y), &c)| {
            let p = c as f64 / total;
            -p * (c as f64 / y_counts[y] as f64).ln()
        })
        .sum()
}

/// Homogeneity, completeness and their `β`-weighted harmonic mean
/// `(1+β)hc/(βh + c)`.
pub fn v_measure<P: Ord + Clone, G: Ord + Clone>(pred: &[P], gold: &[G], beta: f64) -> Result<VMeasure> {
    if pred.len() != gold.len() {
        return Err(Error::Invalid(format!(
            "{} predicted labels for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Invalid("v_measure of an empty labelling".into()));
    }
    let total = pred.len() as f64;
    let mut joint_gp: BTreeMap<(G, P), usize> = BTreeMap::new();
    let mut joint_pg: BTreeMap<(P, G), usize> = BTreeMap::new();
    let mut gc: BTreeMap<G, usize> = BTreeMap::new();
    let mut pc: BTreeMap<P, usize> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gold) {
        *joint_gp.entry((g.clone(), p.clone())).or_default() += 1;
        *joint_pg.entry((p.clone(), g.clone())).or_default() += 1;
        *gc.entry(g.clone()).or_default() += 1;
        *pc.entry(p.clone()).or_default() += 1;
    }
    let h_gold = entropy(gc.values().copied(), total);
    let h_pred = entropy(pc.values().copied(), total);
    let homogeneity = if h_gold == 0.0 {
        1.0
    } else {
        1.0 - conditional_entropy(&joint_gp, total) / h_gold
    };
    let completeness = if h_pred == 0.0 {
        1.0
    } else {
        1.0 - conditional_entropy(&joint_pg, total) / h_pred
    };
    let denom = beta * homogeneity + completeness;
    let v = if homogeneity == 0.0 && completeness == 0.0 || denom == 0.0 {
        0.0
    } else {
        (1.0 + beta) * homogeneity * completeness / denom
    };
    Ok(VMeasure {
        homogeneity,
        completeness,
        v,
    })
}

/// Row-normalised counts: rows are gold categories, columns predicted ones.
#[derive(Clone, Debug, PartialEq)]
pub struct Contingency {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// `[rows][cols]`
    pub table: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
}

pub fn contingency<P: Ord + ToString, G: Ord + ToString>(pred: &[P], gold: &[G]) -> Result<Contingency> {
    if pred.len() != gold.len() || pred.is_empty() {
        return Err(Error::Invalid("contingency needs equal, non-empty label sequences".into()));
    }
    let rows: Vec<&G> = gold.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let cols: Vec<&P> = pred.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let mut counts = vec![vec![0usize; cols.len()]; rows.len()];
    for (p, g) in pred.iter().zip(gold) {
        let r = rows.binary_search(&g).expect("row present");
        let c = cols.binary_search(&p).expect("column present");
        counts[r][c] += 1;
    }
    let table = counts
        .iter()
        .map(|row| {
            let s: usize = row.iter().sum();
            row.iter().map(|&c| c as f64 / s as f64).collect()
        })
        .collect();
    Ok(Contingency {
        rows: rows.iter().map(|g| g.to_string()).collect(),
        cols: cols.iter().map(|p| p.to_string()).collect(),
        table,
        counts,
    })
}

impl Contingency {
    pub fn to_csv(&self) -> String {
        let mut out = format!("gold,{}\n", self.cols.join(","));
        for (name, row) in self.rows.iter().zip(&self.table) {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.6}")).collect();
            out.push_str(&format!("{name},{}\n", cells.join(",")));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub mean_diff: f64,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Invalid(format!(
            "paired t-test needs two equal samples of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::Degenerate("paired differences have zero variance".into()));
    }
    let t = mean / (var.sqrt() / n.sqrt());
    let df = n - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Invalid(e.to_string()))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTest {
        t,
        df,
        p,
        mean_diff: mean,
    })
}

/// Mean and standard error of the mean (zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
