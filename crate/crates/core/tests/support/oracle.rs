//! Exhaustive enumeration over every binary bracketing and every symbol
//! labelling of a short sentence. Exponential; only for tiny grammars.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain rule tables in log space: `root [N]`, `binary [N, S, S]`, `term [n, P]`.
#[derive(Clone, Debug)]
pub struct Case {
    pub n_nt: usize,
    pub n_pt: usize,
    pub root: Vec<f64>,
    pub binary: Vec<f64>,
    pub term: Vec<f64>,
}

impl Case {
    pub fn len(&self) -> usize {
        self.term.len() / self.n_pt
    }

    pub fn rules(&self) -> groundgram::inference::SentenceRules<'_> {
        groundgram::inference::SentenceRules {
            n_nt: self.n_nt,
            n_pt: self.n_pt,
            root: &self.root,
            binary: &self.binary,
            term: &self.term,
        }
    }

    pub fn words(&self) -> Vec<String> {
        (0..self.len()).map(|i| format!("w{i}")).collect()
    }
}

fn log_normalize(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    v.iter_mut().for_each(|x| *x -= z);
}

/// Random normalised grammar with a random sentence over a 4-word vocabulary.
pub fn random_case(rng: &mut ChaCha8Rng, n_nt: usize, n_pt: usize, len: usize) -> Case {
    let s = n_nt + n_pt;
    let vocab = 4;
    let mut logits = |count: usize| -> Vec<f64> { (0..count).map(|_| rng.random_range(-2.0..2.0)).collect() };
    let mut root = logits(n_nt);
    log_normalize(&mut root);
    let mut binary = logits(n_nt * s * s);
    binary.chunks_mut(s * s).for_each(log_normalize);
    let mut emit = logits(n_pt * vocab);
    emit.chunks_mut(vocab).for_each(log_normalize);
    let tokens: Vec<usize> = (0..len).map(|_| rng.random_range(0..vocab)).collect();
    let term = tokens
        .iter()
        .flat_map(|&w| (0..n_pt).map(|t| emit[t * vocab + w]).collect::<Vec<_>>())
        .collect();
    Case {
        n_nt,
        n_pt,
        root,
        binary,
        term,
    }
}

/// The 100 seeded cases used across the oracle checks: up to 3
/// nonterminals and 3 preterminals, lengths 2 to 6.
pub fn standard_cases() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    (0..100)
        .map(|k| {
            let n_nt = rng.random_range(1..=3);
            let n_pt = rng.random_range(1..=3);
            let len = 2 + k % 5;
            random_case(&mut rng, n_nt, n_pt, len)
        })
        .collect()
}

/// Internal node `(i, k, j)` with children indices into the node list, or
/// `None` for a word.
#[derive(Clone, Debug)]
struct Node {
    i: usize,
    k: usize,
    j: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// All bracketings of `i..j`, each a preorder node list (root first).
fn shapes(i: usize, j: usize) -> Vec<Vec<Node>> {
    if j - i == 1 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for k in i + 1..j {
        for l in shapes(i, k) {
            for r in shapes(k, j) {
                let mut nodes = vec![Node {
                    i,
                    k,
                    j,
                    left: None,
                    right: None,
                }];
                let left_root = if l.is_empty() { None } else { Some(1) };
                let offset = 1 + l.len();
                nodes.extend(l.iter().cloned().map(|mut n| {
                    n.left = n.left.map(|x| x + 1);
                    n.right = n.right.map(|x| x + 1);
                    n
                }));
                let right_root = if r.is_empty() { None } else { Some(offset) };
                nodes.extend(r.iter().cloned().map(|mut n| {
                    n.left = n.left.map(|x| x + offset);
                    n.right = n.right.map(|x| x + offset);
                    n
                }));
                nodes[0].left = left_root;
                nodes[0].right = right_root;
                out.push(nodes);
            }
        }
    }
    out
}

fn lse(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[derive(Clone, Debug)]
pub struct Enumeration {
    pub log_z: f64,
    /// Probability that `(i, j)` is a constituent, for `2 <= j - i <= n - 1`.
    pub marginals: BTreeMap<(usize, usize), f64>,
    pub best_log_prob: f64,
    /// Bracketed best tree: root labelled `S`, other symbols `C{index}` with
    /// nonterminals first, words `w{i}`.
    pub best_tree: String,
    pub n_trees: usize,
}

fn render(nodes: &[Node], at: Option<usize>, pos: usize, label: String, labels: &[usize], leaf_label: &[usize], nt: usize) -> String {
    match at {
        None => format!("({label} w{pos})"),
        Some(x) => {
            let n = &nodes[x];
            let sym = |c: Option<usize>, p: usize| match c {
                Some(y) => labels[y],
                None => nt + leaf_label[p],
            };
            let l = render(nodes, n.left, n.i, format!("C{}", sym(n.left, n.i)), labels, leaf_label, nt);
            let r = render(nodes, n.right, n.k, format!("C{}", sym(n.right, n.k)), labels, leaf_label, nt);
            format!("({label} {l} {r})")
        }
    }
}

pub fn enumerate(c: &Case) -> Enumeration {
    let (nt, pt) = (c.n_nt, c.n_pt);
    let s = nt + pt;
    let n = c.len();
    let mut log_z = f64::NEG_INFINITY;
    let mut span_mass: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut best: Option<(f64, Vec<usize>, String)> = None;
    let mut n_trees = 0;

    for nodes in shapes(0, n) {
        let m = nodes.len();
        let mut shape_mass = f64::NEG_INFINITY;
        let mut labels = vec![0usize; m];
        let mut leaves = vec![0usize; n];
        loop {
            let sym = |child: Option<usize>, pos: usize, labels: &[usize], leaves: &[usize]| match child {
                Some(y) => labels[y],
                None => nt + leaves[pos],
            };
            let mut score = c.root[labels[0]];
            for (x, node) in nodes.iter().enumerate() {
                let b = sym(node.left, node.i, &labels, &leaves);
                let cc = sym(node.right, node.k, &labels, &leaves);
                score += c.binary[labels[x] * s * s + b * s + cc];
            }
            for (i, &t) in leaves.iter().enumerate() {
                score += c.term[i * pt + t];
            }
            shape_mass = lse(shape_mass, score);
            n_trees += 1;

            // Tie-break key: root label, then (split, left, right) in preorder.
            let mut key = vec![labels[0]];
            for node in &nodes {
                key.push(node.k);
                key.push(sym(node.left, node.i, &labels, &leaves));
                key.push(sym(node.right, node.k, &labels, &leaves));
            }
            let better = match &best {
                None => true,
                Some((bs, bk, _)) => {
                    let tol = 1e-12 * bs.abs().max(1.0);
                    score > bs + tol || ((score - bs).abs() <= tol && key < *bk)
                }
            };
            if better {
                let tree = render(&nodes, Some(0), 0, "S".into(), &labels, &leaves, nt);
                best = Some((score, key, tree));
            }

            // Odometer over internal labels then leaf labels.
            let mut carry = true;
            for l in labels.iter_mut() {
                *l += 1;
                if *l < nt {
                    carry = false;
                    break;
                }
                *l = 0;
            }
            if carry {
                for l in leaves.iter_mut() {
                    *l += 1;
                    if *l < pt {
                        carry = false;
                        break;
                    }
                    *l = 0;
                }
            }
            if carry {
                break;
            }
        }
        log_z = lse(log_z, shape_mass);
        for node in &nodes {
            if node.j - node.i >= 2 && node.j - node.i < n {
                let e = span_mass.entry((node.i, node.j)).or_insert(f64::NEG_INFINITY);
                *e = lse(*e, shape_mass);
            }
        }
    }

    let mut marginals = BTreeMap::new();
    for w in 2..n {
        for i in 0..=n - w {
            let m = span_mass.get(&(i, i + w)).copied().unwrap_or(f64::NEG_INFINITY);
            marginals.insert((i, i + w), (m - log_z).exp());
        }
    }
    let (best_log_prob, _, best_tree) = best.expect("at least one tree");
    Enumeration {
        log_z,
        marginals,
        best_log_prob,
        best_tree,
        n_trees,
    }
}
