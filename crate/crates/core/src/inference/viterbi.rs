use super::chart::SentenceRules;
use super::tree::ParseTree;
use crate::error::{Error, Result};

/// Highest-scoring derivation of a sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct BestParse {
    pub tree: ParseTree,
    pub log_prob: f64,
    /// Preterminal of each word, as an index into `0..P`.
    pub preterminals: Vec<usize>,
    /// Nonterminal chosen at the root, as an index into `0..N`.
    pub root: usize,
}

#[derive(Clone, Copy, Default)]
struct Back {
    split: usize,
    left: usize,
    right: usize,
}

/// Label used for symbol `sym` of the combined inventory (nonterminals first).
pub fn symbol_label(sym: usize) -> String {
    format!("C{sym}")
}

const TIE_TOL: f64 = 1e-12;

fn beats(v: f64, best: f64) -> bool {
    if best == f64::NEG_INFINITY {
        return v > best;
    }
    v > best + TIE_TOL * best.abs().max(1.0)
}

/// Max-product variant of the inside recursion. Ties prefer the smaller split
/// point, then the lower left symbol, then the lower right symbol; at the
/// root the lower nonterminal wins. Scores within a relative 1e-12 count as
/// tied, so summation order cannot decide between equal derivations.
pub fn best_parse(r: &SentenceRules, words: &[&str]) -> Result<BestParse> {
    let (nt, pt) = (r.n_nt, r.n_pt);
    let s = nt + pt;
    let n = r.len();
    if n < 2 || r.root.len() != nt || r.binary.len() != nt * s * s {
        return Err(Error::Invalid(format!("viterbi on sentence of length {n}")));
    }
    if words.len() != n {
        return Err(Error::shape("best_parse", format!("{} words for {n} tokens", words.len())));
    }
    let cell = |i: usize, j: usize| i * (n + 1) + j;
    let range = |w: usize| if w == 1 { nt..s } else { 0..nt };
    let mut score = vec![f64::NEG_INFINITY; (n + 1) * (n + 1) * s];
    let mut back = vec![Back::default(); (n + 1) * (n + 1) * s];
    for i in 0..n {
        for t in 0..pt {
            score[cell(i, i + 1) * s + nt + t] = r.term[i * pt + t];
        }
    }
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width;
            let c = cell(i, j);
            for a in 0..nt {
                let mut best = f64::NEG_INFINITY;
                let mut arg = Back::default();
                for k in i + 1..j {
                    let (lc, rc) = (cell(i, k), cell(k, j));
                    for b in range(k - i) {
                        let lb = score[lc * s + b];
                        let row = &r.binary[a * s * s + b * s..a * s * s + (b + 1) * s];
                        for cc in range(j - k) {
                            let v = row[cc] + lb + score[rc * s + cc];
                            if beats(v, best) {
                                best = v;
                                arg = Back { split: k, left: b, right: cc };
                            }
                        }
                    }
                }
                score[c * s + a] = best;
                back[c * s + a] = arg;
            }
        }
    }
    let top = cell(0, n);
    let mut root = 0;
    let mut best = f64::NEG_INFINITY;
    for a in 0..nt {
        let v = r.root[a] + score[top * s + a];
        if beats(v, best) {
            best = v;
            root = a;
        }
    }
    if !best.is_finite() {
        return Err(Error::NonFinite("viterbi".into()));
    }

    struct Ctx<'a> {
        n: usize,
        s: usize,
        nt: usize,
        back: &'a [Back],
        words: &'a [&'a str],
    }
    fn build(ctx: &Ctx, i: usize, j: usize, sym: usize, label: String, pre: &mut [usize]) -> ParseTree {
        if j - i == 1 {
            pre[i] = sym - ctx.nt;
            return ParseTree::leaf(label, ctx.words[i]);
        }
        let bp = ctx.back[(i * (ctx.n + 1) + j) * ctx.s + sym];
        let left = build(ctx, i, bp.split, bp.left, symbol_label(bp.left), pre);
        let right = build(ctx, bp.split, j, bp.right, symbol_label(bp.right), pre);
        ParseTree::node(label, vec![left, right])
    }
    let ctx = Ctx { n, s, nt, back: &back, words };
    let mut preterminals = vec![0; n];
    let tree = build(&ctx, 0, n, root, "S".to_string(), &mut preterminals);
    Ok(BestParse {
        tree,
        log_prob: best,
        preterminals,
        root,
    })
}
