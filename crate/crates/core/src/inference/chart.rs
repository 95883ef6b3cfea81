//! Inside and outside passes over a single sentence.
//!
//! Cells hold scaled probabilities: a log scale `s` plus a non-negative vector
//! `v` summing to one, so `inside[i, j, A] = s_ij + ln v_ij[A]`. Width-one
//! cells live on preterminals and wider cells on nonterminals; both are stored
//! in the full symbol space `S = N ∪ P` (nonterminals first) with zeros
//! elsewhere.
//!
//! The outside pass is written as the adjoint of the inside recursion, so the
//! adjoint of a cell symbol is its posterior probability. Span marginals are
//! the adjoints of per-span additive potentials. Gradients of the marginals
//! themselves come from rerunning both passes on dual numbers with the
//! potentials seeded by the upstream gradient.

use std::ops::Range;

use super::scalar::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::tensor::{CustomOp, Graph, Tensor, Var};

/// Rule log-probabilities for one sentence under one latent vector.
#[derive(Clone, Copy, Debug)]
pub struct SentenceRules<'a> {
    pub n_nt: usize,
    pub n_pt: usize,
    /// `[N]` root log-probabilities.
    pub root: &'a [f64],
    /// `[N, S, S]` binary log-probabilities.
    pub binary: &'a [f64],
    /// `[n, P]` log-probability of each preterminal emitting each token.
    pub term: &'a [f64],
}

impl SentenceRules<'_> {
    pub fn n_symbols(&self) -> usize {
        self.n_nt + self.n_pt
    }

    pub fn len(&self) -> usize {
        self.term.len() / self.n_pt.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.term.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let s = self.n_symbols();
        if self.n_nt == 0 || self.n_pt == 0 {
            return Err(Error::Invalid("grammar needs nonterminals and preterminals".into()));
        }
        if self.root.len() != self.n_nt
            || self.binary.len() != self.n_nt * s * s
            || self.term.len() % self.n_pt != 0
        {
            return Err(Error::shape(
                "sentence rules",
                format!(
                    "root {}, binary {}, term {} for N={} P={}",
                    self.root.len(),
                    self.binary.len(),
                    self.term.len(),
                    self.n_nt,
                    self.n_pt
                ),
            ));
        }
        if self.len() < 2 {
            return Err(Error::Invalid(format!(
                "sentence length {} is below 2",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Spans `(i, j)` with `2 <= j - i <= n - 1`, ordered by width then start.
pub fn eligible_spans(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for width in 2..n {
        for i in 0..=n - width {
            out.push((i, i + width));
        }
    }
    out
}

#[derive(Clone, Copy)]
struct Dims {
    n: usize,
    nt: usize,
    s: usize,
}

impl Dims {
    fn new(r: &SentenceRules) -> Self {
        Dims {
            n: r.len(),
            nt: r.n_nt,
            s: r.n_symbols(),
        }
    }

    fn cell(&self, i: usize, j: usize) -> usize {
        i * (self.n + 1) + j
    }

    fn symbols(&self, width: usize) -> Range<usize> {
        if width == 1 {
            self.nt..self.s
        } else {
            0..self.nt
        }
    }

    /// Index of an eligible span in [`eligible_spans`] order.
    fn eligible(&self, i: usize, width: usize) -> Option<usize> {
        if width < 2 || width >= self.n {
            return None;
        }
        // Widths 2..width contribute (n - w + 1) spans each.
        let before: usize = (2..width).map(|w| self.n - w + 1).sum();
        Some(before + i)
    }

    /// Distinct (left, right) child symbol blocks used by spans of `width`.
    fn blocks(&self, width: usize) -> Vec<(Range<usize>, Range<usize>)> {
        let mut out = Vec::with_capacity(4);
        for k in 1..width {
            let b = (self.symbols(k), self.symbols(width - k));
            if !out.contains(&b) {
                out.push(b);
            }
        }
        out
    }
}

struct Inside<T> {
    scale: Vec<T>,
    v: Vec<T>,
    shift: Vec<f64>,
    qsum: Vec<T>,
    root_r: T,
    log_z: T,
}

/// Accumulate `P[B, C] = Σ_k e_k v_ik[B] v_kj[C]` for span `(i, j)`; returns
/// the per-split weights `e_k` (indexed by `k - i - 1`).
fn split_mass<T: Scalar>(d: &Dims, ins: &Inside<T>, i: usize, j: usize, p: &mut [T]) -> Vec<T> {
    let s = d.s;
    let m = ins.shift[d.cell(i, j)];
    p.iter_mut().for_each(|x| *x = T::zero());
    let mut weights = Vec::with_capacity(j - i - 1);
    for k in i + 1..j {
        let (lc, rc) = (d.cell(i, k), d.cell(k, j));
        let e = (ins.scale[lc] + ins.scale[rc] - T::constant(m)).exp();
        weights.push(e);
        let right = &ins.v[rc * s..(rc + 1) * s];
        let rr = d.symbols(j - k);
        for b in d.symbols(k - i) {
            let a = e * ins.v[lc * s + b];
            let row = &mut p[b * s..(b + 1) * s];
            for c in rr.clone() {
                row[c] += a * right[c];
            }
        }
    }
    weights
}

fn inside_pass<T: Scalar>(
    d: &Dims,
    r: &SentenceRules,
    bin_p: &[f64],
    root_p: &[f64],
    phi: &[T],
) -> Result<Inside<T>> {
    let (n, nt, s) = (d.n, d.nt, d.s);
    let cells = (n + 1) * (n + 1);
    let mut ins = Inside {
        scale: vec![T::zero(); cells],
        v: vec![T::zero(); cells * s],
        shift: vec![0.0; cells],
        qsum: vec![T::constant(1.0); cells],
        root_r: T::zero(),
        log_z: T::zero(),
    };
    let pt = s - nt;
    for i in 0..n {
        let row = &r.term[i * pt..(i + 1) * pt];
        let lse = crate::tensor::logsumexp(row);
        if !lse.is_finite() {
            return Err(Error::NonFinite(format!("inside: token {i} has no mass")));
        }
        let c = d.cell(i, i + 1);
        ins.scale[c] = T::constant(lse);
        for (t, &lp) in row.iter().enumerate() {
            ins.v[c * s + nt + t] = T::constant((lp - lse).exp());
        }
    }

    let s2 = s * s;
    let mut p = vec![T::zero(); s2];
    let mut q = vec![T::zero(); nt];
    for width in 2..=n {
        let blocks = d.blocks(width);
        for i in 0..=n - width {
            let j = i + width;
            let c = d.cell(i, j);
            let m = (i + 1..j)
                .map(|k| ins.scale[d.cell(i, k)].re() + ins.scale[d.cell(k, j)].re())
                .fold(f64::NEG_INFINITY, f64::max);
            ins.shift[c] = m;
            split_mass(d, &ins, i, j, &mut p);
            let mut total = T::zero();
            for (a, qa) in q.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (rb, rc) in &blocks {
                    for b in rb.clone() {
                        let w = &bin_p[a * s2 + b * s..a * s2 + (b + 1) * s];
                        let pr = &p[b * s..(b + 1) * s];
                        for cc in rc.clone() {
                            acc += pr[cc] * w[cc];
                        }
                    }
                }
                *qa = acc;
                total += acc;
            }
            if !(total.re() > 0.0 && total.re().is_finite()) {
                return Err(Error::NonFinite(format!("inside: span ({i}, {j})")));
            }
            let pot = d.eligible(i, width).map_or(T::zero(), |e| phi.get(e).copied().unwrap_or(T::zero()));
            ins.scale[c] = pot + T::constant(m) + total.ln();
            ins.qsum[c] = total;
            for (a, &qa) in q.iter().enumerate() {
                ins.v[c * s + a] = qa / total;
            }
        }
    }

    let top = d.cell(0, n);
    let mut rr = T::zero();
    for (a, &rp) in root_p.iter().enumerate() {
        rr += ins.v[top * s + a] * rp;
    }
    if !(rr.re() > 0.0) {
        return Err(Error::NonFinite("inside: root".into()));
    }
    ins.root_r = rr;
    ins.log_z = ins.scale[top] + rr.ln();
    if !ins.log_z.re().is_finite() {
        return Err(Error::NonFinite("inside: log partition".into()));
    }
    Ok(ins)
}

struct Adjoint<T> {
    log_z: T,
    d_root: Vec<T>,
    d_bin: Vec<T>,
    d_term: Vec<T>,
    marginals: Vec<T>,
    /// Posterior mass per cell and symbol.
    abar: Vec<T>,
}

fn adjoint_pass<T: Scalar>(d: &Dims, bin_p: &[f64], root_p: &[f64], ins: Inside<T>) -> Adjoint<T> {
    let (n, nt, s) = (d.n, d.nt, d.s);
    let s2 = s * s;
    let pt = s - nt;
    let mut abar = vec![T::zero(); ins.v.len()];
    let mut d_root = vec![T::zero(); nt];
    let mut d_bin = vec![T::zero(); nt * s2];
    let mut d_term = vec![T::zero(); n * pt];
    let mut marginals = vec![T::zero(); eligible_spans(n).len()];

    let top = d.cell(0, n);
    for a in 0..nt {
        let w = ins.v[top * s + a] * root_p[a] / ins.root_r;
        d_root[a] = w;
        abar[top * s + a] = w;
    }

    let mut p = vec![T::zero(); s2];
    let mut g = vec![T::zero(); s2];
    let mut r = vec![T::zero(); nt];
    for width in (2..=n).rev() {
        let blocks = d.blocks(width);
        for i in 0..=n - width {
            let j = i + width;
            let c = d.cell(i, j);
            let mut mass = T::zero();
            for a in 0..nt {
                mass += abar[c * s + a];
                let q = ins.v[c * s + a] * ins.qsum[c];
                r[a] = if q.re() > 0.0 { abar[c * s + a] / q } else { T::zero() };
            }
            if let Some(e) = d.eligible(i, width) {
                marginals[e] = mass;
            }
            let weights = split_mass(d, &ins, i, j, &mut p);

            g.iter_mut().for_each(|x| *x = T::zero());
            for (a, &ra) in r.iter().enumerate() {
                for (rb, rc) in &blocks {
                    for b in rb.clone() {
                        let off = a * s2 + b * s;
                        for cc in rc.clone() {
                            let bp = bin_p[off + cc];
                            d_bin[off + cc] += ra * p[b * s + cc] * bp;
                            g[b * s + cc] += ra * bp;
                        }
                    }
                }
            }

            for (idx, k) in (i + 1..j).enumerate() {
                let e = weights[idx];
                let (lc, rc) = (d.cell(i, k), d.cell(k, j));
                let (lr, rr) = (d.symbols(k - i), d.symbols(j - k));
                for b in lr.clone() {
                    let mut t = T::zero();
                    for cc in rr.clone() {
                        t += g[b * s + cc] * ins.v[rc * s + cc];
                    }
                    abar[lc * s + b] += e * ins.v[lc * s + b] * t;
                }
                for cc in rr {
                    let mut t = T::zero();
                    for b in lr.clone() {
                        t += g[b * s + cc] * ins.v[lc * s + b];
                    }
                    abar[rc * s + cc] += e * ins.v[rc * s + cc] * t;
                }
            }
        }
    }

    for i in 0..n {
        let c = d.cell(i, i + 1);
        for t in 0..pt {
            d_term[i * pt + t] = abar[c * s + nt + t];
        }
    }
    Adjoint {
        log_z: ins.log_z,
        d_root,
        d_bin,
        d_term,
        marginals,
        abar,
    }
}

fn probabilities(r: &SentenceRules) -> (Vec<f64>, Vec<f64>) {
    (
        r.binary.iter().map(|x| x.exp()).collect(),
        r.root.iter().map(|x| x.exp()).collect(),
    )
}

fn run<T: Scalar>(r: &SentenceRules, phi: &[T]) -> Result<Adjoint<T>> {
    r.validate()?;
    let d = Dims::new(r);
    let (bin_p, root_p) = probabilities(r);
    let ins = inside_pass(&d, r, &bin_p, &root_p, phi)?;
    Ok(adjoint_pass(&d, &bin_p, &root_p, ins))
}

/// Log-space inside table for one sentence.
#[derive(Clone, Debug)]
pub struct Chart {
    n: usize,
    n_nt: usize,
    n_symbols: usize,
    inside: Vec<f64>,
}

impl Chart {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `log` inside score of `symbol` over `(i, j)`; `-inf` where the symbol
    /// cannot occur (preterminals on wide spans, nonterminals on words).
    pub fn get(&self, i: usize, j: usize, symbol: usize) -> f64 {
        self.inside[(i * (self.n + 1) + j) * self.n_symbols + symbol]
    }

    pub fn n_nonterminals(&self) -> usize {
        self.n_nt
    }
}

/// Log partition function and inside chart.
pub fn inside(r: &SentenceRules) -> Result<(f64, Chart)> {
    r.validate()?;
    let d = Dims::new(r);
    let (bin_p, root_p) = probabilities(r);
    let ins = inside_pass::<f64>(&d, r, &bin_p, &root_p, &[])?;
    let s = d.s;
    let mut table = vec![f64::NEG_INFINITY; ins.v.len()];
    for i in 0..d.n {
        for j in i + 1..=d.n {
            let c = d.cell(i, j);
            for sym in d.symbols(j - i) {
                table[c * s + sym] = ins.scale[c] + ins.v[c * s + sym].ln();
            }
        }
    }
    Ok((
        ins.log_z,
        Chart {
            n: d.n,
            n_nt: d.nt,
            n_symbols: s,
            inside: table,
        },
    ))
}

/// Log partition, span marginals and gradients of the log partition with
/// respect to every rule log-probability.
#[derive(Clone, Debug)]
pub struct InsideOutside {
    pub log_z: f64,
    /// One per span in [`eligible_spans`] order.
    pub marginals: Vec<f64>,
    pub d_root: Vec<f64>,
    pub d_binary: Vec<f64>,
    pub d_term: Vec<f64>,
    /// Posterior probability of each (span, symbol), indexed
    /// `(i * (n + 1) + j) * S + symbol`.
    pub posterior: Vec<f64>,
}

pub fn inside_outside(r: &SentenceRules) -> Result<InsideOutside> {
    let a = run::<f64>(r, &[])?;
    Ok(InsideOutside {
        log_z: a.log_z,
        marginals: a.marginals,
        d_root: a.d_root,
        d_binary: a.d_bin,
        d_term: a.d_term,
        posterior: a.abar,
    })
}

/// Marginal probability of each eligible span being a constituent.
pub fn span_marginals(r: &SentenceRules) -> Result<Vec<((usize, usize), f64)>> {
    let io = inside_outside(r)?;
    Ok(eligible_spans(r.len()).into_iter().zip(io.marginals).collect())
}

/// Gradients of `Σ_e weights[e] · marginal_e` with respect to the root,
/// binary and terminal log-probabilities.
pub fn marginal_vjp(r: &SentenceRules, weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let e = eligible_spans(r.len()).len();
    if weights.len() != e {
        return Err(Error::shape("marginal_vjp", format!("{} weights for {e} spans", weights.len())));
    }
    let phi: Vec<Dual> = weights.iter().map(|&w| Dual::new(0.0, w)).collect();
    let a = run::<Dual>(r, &phi)?;
    let du = |v: Vec<Dual>| v.into_iter().map(|x| x.du).collect();
    Ok((du(a.d_root), du(a.d_bin), du(a.d_term)))
}

struct InsideOutsideOp {
    n_nt: usize,
    n_pt: usize,
    d_root: Vec<f64>,
    d_bin: Vec<f64>,
    d_term: Vec<f64>,
}

impl CustomOp for InsideOutsideOp {
    fn name(&self) -> &'static str {
        "inside_outside"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
        let g0 = grad.data()[0];
        let gm = &grad.data()[1..];
        let scaled = |v: &[f64]| v.iter().map(|x| g0 * x).collect::<Vec<f64>>();
        let (mut gr, mut gb, mut gt) = (scaled(&self.d_root), scaled(&self.d_bin), scaled(&self.d_term));
        if gm.iter().any(|&x| x != 0.0) {
            let rules = SentenceRules {
                n_nt: self.n_nt,
                n_pt: self.n_pt,
                root: inputs[0].data(),
                binary: inputs[1].data(),
                term: inputs[2].data(),
            };
            let (vr, vb, vt) = marginal_vjp(&rules, gm)?;
            for (dst, src) in [(&mut gr, vr), (&mut gb, vb), (&mut gt, vt)] {
                for (x, y) in dst.iter_mut().zip(src) {
                    *x += y;
                }
            }
        }
        Ok(vec![
            Some(Tensor::new(inputs[0].shape().to_vec(), gr)?),
            Some(Tensor::new(inputs[1].shape().to_vec(), gb)?),
            Some(Tensor::new(inputs[2].shape().to_vec(), gt)?),
        ])
    }
}

/// Graph node `[log Z, marginal_0, ..]` over `root: [N]`, `binary: [N, S²]`
/// and `term: [n, P]`, differentiable in both the log partition and the
/// marginals.
pub fn inside_outside_op(g: &mut Graph, root: Var, binary: Var, term: Var) -> Result<Var> {
    let n_nt = g.shape(root).iter().product::<usize>();
    let tshape = g.shape(term).to_vec();
    if tshape.len() != 2 {
        return Err(Error::shape("inside_outside", format!("term {tshape:?}")));
    }
    let n_pt = tshape[1];
    let rules = SentenceRules {
        n_nt,
        n_pt,
        root: g.value(root).data(),
        binary: g.value(binary).data(),
        term: g.value(term).data(),
    };
    let io = inside_outside(&rules)?;
    let mut out = Vec::with_capacity(1 + io.marginals.len());
    out.push(io.log_z);
    out.extend_from_slice(&io.marginals);
    let op = InsideOutsideOp {
        n_nt,
        n_pt,
        d_root: io.d_root,
        d_bin: io.d_binary,
        d_term: io.d_term,
    };
    let len = out.len();
    g.custom(&[root, binary, term], Tensor::new(vec![len], out)?, Box::new(op))
}

/// The inside recursion spelled out in graph primitives. Slow; exists as an
/// independent route for checking [`inside_outside_op`]. `potentials`, when
/// given, is a `[E]` vector of additive per-span scores in
/// [`eligible_spans`] order.
pub fn inside_graph(
    g: &mut Graph,
    root: Var,
    binary: Var,
    term: Var,
    potentials: Option<Var>,
) -> Result<Var> {
    let nt = g.shape(root).iter().product::<usize>();
    let tshape = g.shape(term).to_vec();
    let (n, pt) = (tshape[0], tshape[1]);
    let s = nt + pt;
    let d = Dims { n, nt, s };
    let flat_bin = g.reshape(binary, vec![nt * s * s])?;

    let mut cells: Vec<Option<Var>> = vec![None; (n + 1) * (n + 1)];
    for i in 0..n {
        cells[d.cell(i, i + 1)] = Some(g.gather(term, (i * pt..(i + 1) * pt).collect(), vec![pt])?);
    }
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width;
            let mut parts = Vec::with_capacity(width - 1);
            for k in i + 1..j {
                let (lr, rr) = (d.symbols(k - i), d.symbols(j - k));
                let (nb, nc) = (lr.len(), rr.len());
                let left = cells[d.cell(i, k)].unwrap();
                let right = cells[d.cell(k, j)].unwrap();
                let l = g.gather(left, (0..nb * nc).map(|x| x / nc).collect(), vec![nb * nc])?;
                let r = g.gather(right, (0..nb * nc).map(|x| x % nc).collect(), vec![nb * nc])?;
                let children = g.add(l, r)?;
                let mut idx = Vec::with_capacity(nt * nb * nc);
                for a in 0..nt {
                    for b in lr.clone() {
                        for c in rr.clone() {
                            idx.push(a * s * s + b * s + c);
                        }
                    }
                }
                let block = g.gather(flat_bin, idx, vec![nt, nb * nc])?;
                parts.push(g.add_row(block, children)?);
            }
            let all = g.concat_cols(&parts)?;
            let mut cell = g.logsumexp_rows(all)?;
            if let (Some(pot), Some(e)) = (potentials, d.eligible(i, width)) {
                let rep = g.gather(pot, vec![e; nt], vec![nt])?;
                cell = g.add(cell, rep)?;
            }
            cells[d.cell(i, j)] = Some(cell);
        }
    }
    let top = g.add(root, cells[d.cell(0, n)].unwrap())?;
    g.logsumexp_rows(top)
}
