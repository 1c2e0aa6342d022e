//! Tape-based reverse-mode differentiation over [`Tensor2`] values.
//!
//! Every builder method evaluates its result eagerly and records how it was
//! produced. Batched sequences use row-major stacking: for a batch of `B`
//! rows and `n` positions, stacked row `b * n + i` holds position `i` of
//! batch row `b`.

use super::params::{ParamId, ParamStore};
use super::tensor::{
    dot, log_softmax_in_place, masked_softmax_into, matmul_acc, matmul_nt_acc, matmul_tn_acc,
    sigmoid, Real, Tensor2,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

struct AttentionNode<T> {
    query: Var,
    keys: Var,
    values: Var,
    v: Var,
    /// `batch × positions`, row-major.
    mask: Vec<bool>,
    positions: usize,
    /// Keys and values are `positions` rows shared by every batch row.
    shared: bool,
    /// `tanh(query + key)` for every (row, position), zero where masked.
    hidden: Tensor2<T>,
    weights: Tensor2<T>,
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Lerp {
        prev: Var,
        cand: Var,
        gate: Var,
    },
    Concat(Vec<Var>),
    Slice {
        src: Var,
        start: usize,
    },
    Gather {
        src: Var,
        rows: Vec<usize>,
        skip: Option<usize>,
    },
    ScaleBy {
        src: Var,
        factor: Tensor2<T>,
    },
    Scale {
        src: Var,
        factor: T,
    },
    Carry {
        new: Var,
        prev: Var,
        mask: Vec<bool>,
    },
    Stack(Vec<Var>),
    Attention(Box<AttentionNode<T>>),
    LogSoftmax(Var),
    Nll {
        logp: Var,
        targets: Vec<Option<usize>>,
    },
    Sum(Vec<Var>),
}

struct Node<T> {
    op: Op<T>,
    /// `None` only for parameter nodes, whose value lives in the store.
    value: Option<Tensor2<T>>,
    needs_grad: bool,
}

pub struct Graph<'p, T: Real> {
    store: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Grads<T> {
    grads: Vec<Option<Tensor2<T>>>,
    params: Vec<(ParamId, Var)>,
}

impl<T: Real> Grads<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor2<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor2<T>> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.wrt(*v))
    }

    /// Adds every parameter gradient into the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) -> Result<()> {
        for &(id, v) in &self.params {
            if let Some(g) = &self.grads[v.0] {
                store.accumulate(id, g)?;
            }
        }
        Ok(())
    }
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(store: &'p ParamStore<T>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("node without a value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v).data()[0]
    }

    fn push(&mut self, op: Op<T>, value: Tensor2<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn constant(&mut self, t: Tensor2<T>) -> Var {
        self.push(Op::Leaf, t, false)
    }

    /// A leaf whose gradient is tracked (for inspecting input sensitivities).
    pub fn variable(&mut self, t: Tensor2<T>) -> Var {
        self.push(Op::Leaf, t, true)
    }

    /// Cut the tape: the same value, but gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape("matmul", av.shape_str(), bv.shape_str()));
        }
        let mut out = Tensor2::zeros(av.rows(), bv.cols());
        matmul_acc(av, bv, &mut out);
        let ng = self.needs(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), out, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b)).map_err(|_| {
            Error::shape("add", self.value(a).shape_str(), self.value(b).shape_str())
        })?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(Op::Add(a, b), out, ng))
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::shape("add_row", av.shape_str(), rv.shape_str()));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (x, &b) in out.row_mut(r).iter_mut().zip(rv.data()) {
                *x = *x + b;
            }
        }
        let ng = self.needs(&[a, row]);
        Ok(self.push(Op::AddRow(a, row), out, ng))
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        av.check_same("mul", bv)?;
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor2::from_vec(av.rows(), av.cols(), data)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(Op::Mul(a, b), out, ng))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.needs(&[a]);
        self.push(Op::Sigmoid(a), out, ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::tanh);
        let ng = self.needs(&[a]);
        self.push(Op::Tanh(a), out, ng)
    }

    /// `(1 − gate) ∘ prev + gate ∘ cand`.
    pub fn lerp(&mut self, prev: Var, cand: Var, gate: Var) -> Result<Var> {
        let (p, c, z) = (self.value(prev), self.value(cand), self.value(gate));
        p.check_same("lerp", c)?;
        p.check_same("lerp", z)?;
        let data = p
            .data()
            .iter()
            .zip(c.data())
            .zip(z.data())
            .map(|((&p, &c), &z)| (T::one() - z) * p + z * c)
            .collect();
        let out = Tensor2::from_vec(p.rows(), p.cols(), data)?;
        let ng = self.needs(&[prev, cand, gate]);
        Ok(self.push(Op::Lerp { prev, cand, gate }, out, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(Error::shape("concat_cols", rows, pv.rows()));
            }
            cols += pv.cols();
        }
        let mut out = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let ng = self.needs(parts);
        Ok(self.push(Op::Concat(parts.to_vec()), out, ng))
    }

    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let sv = self.value(src);
        if start + len > sv.cols() {
            return Err(Error::shape(
                "slice_cols",
                sv.shape_str(),
                format!("{start}..{}", start + len),
            ));
        }
        let mut out = Tensor2::zeros(sv.rows(), len);
        for r in 0..sv.rows() {
            out.row_mut(r)
                .copy_from_slice(&sv.row(r)[start..start + len]);
        }
        let ng = self.needs(&[src]);
        Ok(self.push(Op::Slice { src, start }, out, ng))
    }

    /// Row lookup. Rows equal to `skip` produce zeros and pass no gradient.
    pub fn gather_rows(&mut self, src: Var, rows: &[usize], skip: Option<usize>) -> Result<Var> {
        let sv = self.value(src);
        let mut out = Tensor2::zeros(rows.len(), sv.cols());
        for (r, &idx) in rows.iter().enumerate() {
            if idx >= sv.rows() {
                return Err(Error::Index {
                    what: "gather_rows",
                    index: idx,
                    size: sv.rows(),
                });
            }
            if Some(idx) != skip {
                out.row_mut(r).copy_from_slice(sv.row(idx));
            }
        }
        let ng = self.needs(&[src]);
        Ok(self.push(
            Op::Gather {
                src,
                rows: rows.to_vec(),
                skip,
            },
            out,
            ng,
        ))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn scale_by(&mut self, src: Var, factor: Tensor2<T>) -> Result<Var> {
        let sv = self.value(src);
        sv.check_same("scale_by", &factor)?;
        let data = sv
            .data()
            .iter()
            .zip(factor.data())
            .map(|(&x, &f)| x * f)
            .collect();
        let out = Tensor2::from_vec(sv.rows(), sv.cols(), data)?;
        let ng = self.needs(&[src]);
        Ok(self.push(Op::ScaleBy { src, factor }, out, ng))
    }

    pub fn scale(&mut self, src: Var, factor: T) -> Var {
        let out = self.value(src).map(|x| x * factor);
        let ng = self.needs(&[src]);
        self.push(Op::Scale { src, factor }, out, ng)
    }

    /// Row-wise select: `new` where `mask` is set, else `prev`.
    pub fn carry(&mut self, new: Var, prev: Var, mask: &[bool]) -> Result<Var> {
        let (nv, pv) = (self.value(new), self.value(prev));
        nv.check_same("carry", pv)?;
        if mask.len() != nv.rows() {
            return Err(Error::shape("carry", nv.rows(), mask.len()));
        }
        let mut out = pv.clone();
        for (r, &m) in mask.iter().enumerate() {
            if m {
                out.row_mut(r).copy_from_slice(nv.row(r));
            }
        }
        let ng = self.needs(&[new, prev]);
        Ok(self.push(
            Op::Carry {
                new,
                prev,
                mask: mask.to_vec(),
            },
            out,
            ng,
        ))
    }

    /// Stacks `n` time steps of `B×k` into `(B·n)×k`, batch-major.
    pub fn stack_steps(&mut self, steps: &[Var]) -> Result<Var> {
        let n = steps.len();
        let (b, k) = self.shape(steps[0]);
        for &s in steps {
            if self.shape(s) != (b, k) {
                return Err(Error::shape(
                    "stack_steps",
                    format!("{b}x{k}"),
                    self.value(s).shape_str(),
                ));
            }
        }
        let mut out = Tensor2::zeros(b * n, k);
        for (i, &s) in steps.iter().enumerate() {
            let sv = self.value(s);
            for r in 0..b {
                out.row_mut(r * n + i).copy_from_slice(sv.row(r));
            }
        }
        let ng = self.needs(steps);
        Ok(self.push(Op::Stack(steps.to_vec()), out, ng))
    }

    /// Additive attention: `e = vᵀ tanh(q + k_i)` over unmasked positions,
    /// softmax-normalized, then the weighted sum of values.
    ///
    /// `query` is the projected query (`B×a`). `keys` are projected keys and
    /// `values` the raw annotations, either stacked per row (`(B·n)×…`) or
    /// shared across rows (`n×…`). `mask` is `B×n`. Returns the `B×k`
    /// context; weights are available via [`Graph::attention_weights`].
    pub fn attention(
        &mut self,
        query: Var,
        keys: Var,
        values: Var,
        v: Var,
        mask: &[bool],
        positions: usize,
    ) -> Result<Var> {
        let (qv, kv, vv, av) = (
            self.value(query),
            self.value(keys),
            self.value(values),
            self.value(v),
        );
        let (batch, a) = qv.shape();
        let shared = kv.rows() == positions && batch * positions != positions;
        let expect_rows = if shared { positions } else { batch * positions };
        if kv.rows() != expect_rows || kv.cols() != a {
            return Err(Error::shape(
                "attention keys",
                qv.shape_str(),
                kv.shape_str(),
            ));
        }
        if vv.rows() != expect_rows {
            return Err(Error::shape(
                "attention values",
                kv.shape_str(),
                vv.shape_str(),
            ));
        }
        if av.rows() != 1 || av.cols() != a {
            return Err(Error::shape(
                "attention v",
                format!("1x{a}"),
                av.shape_str(),
            ));
        }
        if mask.len() != batch * positions {
            return Err(Error::shape(
                "attention mask",
                batch * positions,
                mask.len(),
            ));
        }
        let kdim = vv.cols();
        let mut hidden = Tensor2::zeros(batch * positions, a);
        let mut weights = Tensor2::zeros(batch, positions);
        let mut out = Tensor2::zeros(batch, kdim);
        let mut scores = vec![T::zero(); positions];
        for b in 0..batch {
            let q = qv.row(b);
            let m = &mask[b * positions..(b + 1) * positions];
            for i in 0..positions {
                if !m[i] {
                    continue;
                }
                let krow = if shared { i } else { b * positions + i };
                let h = hidden.row_mut(b * positions + i);
                for ((hj, &qj), &kj) in h.iter_mut().zip(q).zip(kv.row(krow)) {
                    *hj = (qj + kj).tanh();
                }
                scores[i] = dot(h, av.data());
            }
            masked_softmax_into(&scores, m, weights.row_mut(b))?;
            let ctx = out.row_mut(b);
            for i in 0..positions {
                if !m[i] {
                    continue;
                }
                let w = weights.get(b, i);
                let vrow = if shared { i } else { b * positions + i };
                for (c, &x) in ctx.iter_mut().zip(vv.row(vrow)) {
                    *c = *c + w * x;
                }
            }
        }
        let ng = self.needs(&[query, keys, values, v]);
        Ok(self.push(
            Op::Attention(Box::new(AttentionNode {
                query,
                keys,
                values,
                v,
                mask: mask.to_vec(),
                positions,
                shared,
                hidden,
                weights,
            })),
            out,
            ng,
        ))
    }

    /// Weights of an attention node, `B×n`.
    pub fn attention_weights(&self, v: Var) -> Option<&Tensor2<T>> {
        match &self.nodes[v.0].op {
            Op::Attention(node) => Some(&node.weights),
            _ => None,
        }
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            log_softmax_in_place(out.row_mut(r));
        }
        let ng = self.needs(&[a]);
        self.push(Op::LogSoftmax(a), out, ng)
    }

    /// `−Σ_b logp[b, target_b]` over rows with a target; a `1×1` node.
    pub fn nll(&mut self, logp: Var, targets: &[Option<usize>]) -> Result<Var> {
        let lv = self.value(logp);
        if targets.len() != lv.rows() {
            return Err(Error::shape("nll", lv.rows(), targets.len()));
        }
        let mut total = T::zero();
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                if t >= lv.cols() {
                    return Err(Error::Index {
                        what: "nll target",
                        index: t,
                        size: lv.cols(),
                    });
                }
                total = total - lv.get(r, t);
            }
        }
        let ng = self.needs(&[logp]);
        Ok(self.push(
            Op::Nll {
                logp,
                targets: targets.to_vec(),
            },
            Tensor2::filled(1, 1, total),
            ng,
        ))
    }

    /// Elementwise sum of same-shaped nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            out.add_assign(self.value(p))?;
        }
        let ng = self.needs(parts);
        Ok(self.push(Op::Sum(parts.to_vec()), out, ng))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::shape("backward", "1x1", lv.shape_str()));
        }
        let mut grads: Vec<Option<Tensor2<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor2::filled(1, 1, T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(dout) = grads[idx].take() else {
                continue;
            };
            self.propagate(&node.op, idx, &dout, &mut grads);
            grads[idx] = Some(dout);
        }

        let params = self
            .param_vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
            .collect();
        Ok(Grads { grads, params })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor2<T>>], v: Var) -> Option<&'g mut Tensor2<T>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let (r, c) = self.shape(v);
        Some(grads[v.0].get_or_insert_with(|| Tensor2::zeros(r, c)))
    }

    fn propagate(
        &self,
        op: &Op<T>,
        idx: usize,
        dout: &Tensor2<T>,
        grads: &mut [Option<Tensor2<T>>],
    ) {
        let out_val = || self.nodes[idx].value.as_ref().expect("op node value");
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    matmul_nt_acc(dout, self.value(*b), ga);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    matmul_tn_acc(self.value(*a), dout, gb);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(g) = self.slot(grads, v) {
                        add_into(g, dout);
                    }
                }
            }
            Op::AddRow(a, row) => {
                if let Some(g) = self.slot(grads, *a) {
                    add_into(g, dout);
                }
                if let Some(g) = self.slot(grads, *row) {
                    for r in 0..dout.rows() {
                        for (x, &d) in g.data_mut().iter_mut().zip(dout.row(r)) {
                            *x = *x + d;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(g) = self.slot(grads, *a) {
                    zip3(g, dout, bv, |d, y| d * y);
                }
                if let Some(g) = self.slot(grads, *b) {
                    zip3(g, dout, av, |d, x| d * x);
                }
            }
            Op::Sigmoid(a) => {
                let y = out_val();
                if let Some(g) = self.slot(grads, *a) {
                    zip3(g, dout, y, |d, y| d * y * (T::one() - y));
                }
            }
            Op::Tanh(a) => {
                let y = out_val();
                if let Some(g) = self.slot(grads, *a) {
                    zip3(g, dout, y, |d, y| d * (T::one() - y * y));
                }
            }
            Op::Lerp { prev, cand, gate } => {
                let (pv, cv, zv) = (self.value(*prev), self.value(*cand), self.value(*gate));
                if let Some(g) = self.slot(grads, *prev) {
                    zip3(g, dout, zv, |d, z| d * (T::one() - z));
                }
                if let Some(g) = self.slot(grads, *cand) {
                    zip3(g, dout, zv, |d, z| d * z);
                }
                if let Some(g) = self.slot(grads, *gate) {
                    for (((x, &d), &c), &p) in g
                        .data_mut()
                        .iter_mut()
                        .zip(dout.data())
                        .zip(cv.data())
                        .zip(pv.data())
                    {
                        *x = *x + d * (c - p);
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    if let Some(g) = self.slot(grads, p) {
                        for r in 0..dout.rows() {
                            for (x, &d) in g.row_mut(r).iter_mut().zip(&dout.row(r)[off..off + w]) {
                                *x = *x + d;
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::Slice { src, start } => {
                if let Some(g) = self.slot(grads, *src) {
                    for r in 0..dout.rows() {
                        let row = &mut g.row_mut(r)[*start..*start + dout.cols()];
                        for (x, &d) in row.iter_mut().zip(dout.row(r)) {
                            *x = *x + d;
                        }
                    }
                }
            }
            Op::Gather { src, rows, skip } => {
                if let Some(g) = self.slot(grads, *src) {
                    for (r, &i) in rows.iter().enumerate() {
                        if Some(i) == *skip {
                            continue;
                        }
                        for (x, &d) in g.row_mut(i).iter_mut().zip(dout.row(r)) {
                            *x = *x + d;
                        }
                    }
                }
            }
            Op::ScaleBy { src, factor } => {
                if let Some(g) = self.slot(grads, *src) {
                    zip3(g, dout, factor, |d, f| d * f);
                }
            }
            Op::Scale { src, factor } => {
                let f = *factor;
                if let Some(g) = self.slot(grads, *src) {
                    for (x, &d) in g.data_mut().iter_mut().zip(dout.data()) {
                        *x = *x + d * f;
                    }
                }
            }
            Op::Carry { new, prev, mask } => {
                for (v, take) in [(*new, true), (*prev, false)] {
                    if let Some(g) = self.slot(grads, v) {
                        for (r, &m) in mask.iter().enumerate() {
                            if m == take {
                                for (x, &d) in g.row_mut(r).iter_mut().zip(dout.row(r)) {
                                    *x = *x + d;
                                }
                            }
                        }
                    }
                }
            }
            Op::Stack(steps) => {
                let n = steps.len();
                for (i, &s) in steps.iter().enumerate() {
                    if let Some(g) = self.slot(grads, s) {
                        for r in 0..g.rows() {
                            for (x, &d) in g.row_mut(r).iter_mut().zip(dout.row(r * n + i)) {
                                *x = *x + d;
                            }
                        }
                    }
                }
            }
            Op::Attention(node) => self.attention_backward(node, dout, grads),
            Op::LogSoftmax(a) => {
                let y = out_val();
                if let Some(g) = self.slot(grads, *a) {
                    for r in 0..dout.rows() {
                        let total: T = dout.row(r).iter().copied().sum();
                        for ((x, &d), &yv) in g.row_mut(r).iter_mut().zip(dout.row(r)).zip(y.row(r))
                        {
                            *x = *x + d - yv.exp() * total;
                        }
                    }
                }
            }
            Op::Nll { logp, targets } => {
                let d = dout.data()[0];
                if let Some(g) = self.slot(grads, *logp) {
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = *t {
                            let x = g.get(r, t);
                            g.set(r, t, x - d);
                        }
                    }
                }
            }
            Op::Sum(parts) => {
                for &p in parts {
                    if let Some(g) = self.slot(grads, p) {
                        add_into(g, dout);
                    }
                }
            }
        }
    }

    fn attention_backward(
        &self,
        node: &AttentionNode<T>,
        dout: &Tensor2<T>,
        grads: &mut [Option<Tensor2<T>>],
    ) {
        let n = node.positions;
        let batch = dout.rows();
        let values = self.value(node.values);
        let vvec = self.value(node.v).data().to_vec();
        let a = vvec.len();
        let row_of = |b: usize, i: usize| if node.shared { i } else { b * n + i };

        // d score per (b, i)
        let mut dscore = vec![T::zero(); batch * n];
        for b in 0..batch {
            let d = dout.row(b);
            let w = node.weights.row(b);
            let mut dw = vec![T::zero(); n];
            let mut wsum = T::zero();
            for i in 0..n {
                if node.mask[b * n + i] {
                    dw[i] = dot(d, values.row(row_of(b, i)));
                    wsum = wsum + w[i] * dw[i];
                }
            }
            for i in 0..n {
                if node.mask[b * n + i] {
                    dscore[b * n + i] = w[i] * (dw[i] - wsum);
                }
            }
        }

        if let Some(g) = self.slot(grads, node.values) {
            for b in 0..batch {
                for i in 0..n {
                    if !node.mask[b * n + i] {
                        continue;
                    }
                    let w = node.weights.get(b, i);
                    for (x, &d) in g.row_mut(row_of(b, i)).iter_mut().zip(dout.row(b)) {
                        *x = *x + w * d;
                    }
                }
            }
        }

        // d pre-activation = dscore · v ∘ (1 − h²)
        let mut dpre = Tensor2::zeros(batch * n, a);
        let mut dv = vec![T::zero(); a];
        for b in 0..batch {
            for i in 0..n {
                let r = b * n + i;
                if !node.mask[r] {
                    continue;
                }
                let ds = dscore[r];
                let h = node.hidden.row(r);
                let dp = dpre.row_mut(r);
                for j in 0..a {
                    dv[j] = dv[j] + ds * h[j];
                    dp[j] = ds * vvec[j] * (T::one() - h[j] * h[j]);
                }
            }
        }
        if let Some(g) = self.slot(grads, node.v) {
            for (x, &d) in g.data_mut().iter_mut().zip(&dv) {
                *x = *x + d;
            }
        }
        if let Some(g) = self.slot(grads, node.query) {
            for b in 0..batch {
                for i in 0..n {
                    for (x, &d) in g.row_mut(b).iter_mut().zip(dpre.row(b * n + i)) {
                        *x = *x + d;
                    }
                }
            }
        }
        if let Some(g) = self.slot(grads, node.keys) {
            for b in 0..batch {
                for i in 0..n {
                    for (x, &d) in g.row_mut(row_of(b, i)).iter_mut().zip(dpre.row(b * n + i)) {
                        *x = *x + d;
                    }
                }
            }
        }
    }
}

fn add_into<T: Real>(g: &mut Tensor2<T>, d: &Tensor2<T>) {
    for (x, &y) in g.data_mut().iter_mut().zip(d.data()) {
        *x = *x + y;
    }
}

fn zip3<T: Real>(g: &mut Tensor2<T>, d: &Tensor2<T>, o: &Tensor2<T>, f: impl Fn(T, T) -> T) {
    for ((x, &dv), &ov) in g.data_mut().iter_mut().zip(d.data()).zip(o.data()) {
        *x = *x + f(dv, ov);
    }
}
