//! Embeddings, GRU steps with up to two context vectors, additive attention
//! and the readout layer. Every layer works on batches: one row per sentence
//! (or per beam hypothesis).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::PAD_ID;
use crate::error::{Error, Result};
use crate::numcore::{Component, Graph, ParamId, ParamStore, Real, Tensor2, Var};

/// Seeded weight initializer: Gaussian for feed-forward weights, random
/// orthogonal blocks for recurrent weights.
pub struct Initializer {
    rng: ChaCha8Rng,
    std: f64,
}

impl Initializer {
    pub fn new(seed: u64, std: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            std,
        }
    }

    pub fn gaussian<T: Real>(&mut self, rows: usize, cols: usize) -> Tensor2<T> {
        let normal = Normal::new(0.0, self.std).expect("finite std");
        let data = (0..rows * cols)
            .map(|_| T::of(normal.sample(&mut self.rng)))
            .collect();
        Tensor2::from_vec(rows, cols, data).expect("sized")
    }

    /// Random orthogonal `n×n` matrix (Gram–Schmidt on a Gaussian draw).
    pub fn orthogonal<T: Real>(&mut self, n: usize) -> Tensor2<T> {
        let normal = Normal::new(0.0, 1.0).expect("finite std");
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
        while q.len() < n {
            let mut v: Vec<f64> = (0..n).map(|_| normal.sample(&mut self.rng)).collect();
            for _ in 0..2 {
                for u in &q {
                    let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                q.push(v);
            }
        }
        let data = q.into_iter().flatten().map(T::of).collect();
        Tensor2::from_vec(n, n, data).expect("sized")
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        component: Component,
        vocab: usize,
        dim: usize,
        init: &mut Initializer,
    ) -> Result<Self> {
        let table = store.add(name, component, init.gaussian(vocab, dim))?;
        store.freeze_row(table, PAD_ID);
        Ok(Self { table, vocab, dim })
    }

    pub fn lookup<T: Real>(&self, g: &mut Graph<'_, T>, ids: &[usize]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab) {
            return Err(Error::Index {
                what: "embedding",
                index: bad,
                size: self.vocab,
            });
        }
        let t = g.param(self.table);
        g.gather_rows(t, ids, Some(PAD_ID))
    }
}

#[derive(Debug, Clone)]
struct ContextWeights {
    gates: ParamId,
    cand: ParamId,
    dim: usize,
}

/// GRU whose gates and candidate each see the input, the previous state
/// and every context vector through separate weight blocks.
#[derive(Debug, Clone)]
pub struct GruParams {
    w_gates: ParamId,
    w_cand: ParamId,
    u_gates: ParamId,
    u_cand: ParamId,
    b_gates: ParamId,
    b_cand: ParamId,
    contexts: Vec<ContextWeights>,
    pub input_dim: usize,
    pub hidden: usize,
}

impl GruParams {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        component: Component,
        input_dim: usize,
        hidden: usize,
        context_dims: &[usize],
        init: &mut Initializer,
    ) -> Result<Self> {
        if context_dims.len() > 2 {
            return Err(Error::Input(format!(
                "GRU supports at most two contexts, got {}",
                context_dims.len()
            )));
        }
        let w_gates = store.add(
            format!("{prefix}.w_gates"),
            component,
            init.gaussian(input_dim, 2 * hidden),
        )?;
        let w_cand = store.add(
            format!("{prefix}.w_cand"),
            component,
            init.gaussian(input_dim, hidden),
        )?;
        let uz: Tensor2<T> = init.orthogonal(hidden);
        let ur: Tensor2<T> = init.orthogonal(hidden);
        let mut u = Tensor2::zeros(hidden, 2 * hidden);
        for r in 0..hidden {
            u.row_mut(r)[..hidden].copy_from_slice(uz.row(r));
            u.row_mut(r)[hidden..].copy_from_slice(ur.row(r));
        }
        let u_gates = store.add(format!("{prefix}.u_gates"), component, u)?;
        let u_cand = store.add(
            format!("{prefix}.u_cand"),
            component,
            init.orthogonal(hidden),
        )?;
        let mut contexts = Vec::with_capacity(context_dims.len());
        for (k, &dim) in context_dims.iter().enumerate() {
            contexts.push(ContextWeights {
                gates: store.add(
                    format!("{prefix}.c{k}_gates"),
                    component,
                    init.gaussian(dim, 2 * hidden),
                )?,
                cand: store.add(
                    format!("{prefix}.c{k}_cand"),
                    component,
                    init.gaussian(dim, hidden),
                )?,
                dim,
            });
        }
        let b_gates = store.add(
            format!("{prefix}.b_gates"),
            component,
            Tensor2::zeros(1, 2 * hidden),
        )?;
        let b_cand = store.add(
            format!("{prefix}.b_cand"),
            component,
            Tensor2::zeros(1, hidden),
        )?;
        Ok(Self {
            w_gates,
            w_cand,
            u_gates,
            u_cand,
            b_gates,
            b_cand,
            contexts,
            input_dim,
            hidden,
        })
    }

    pub fn context_count(&self) -> usize {
        self.contexts.len()
    }

    pub fn context_dims(&self) -> Vec<usize> {
        self.contexts.iter().map(|c| c.dim).collect()
    }

    /// One recurrence step:
    /// `z, r = σ(x·W_g + s·U_g + Σ c_k·C_gk + b_g)`,
    /// `s̃ = tanh(x·W + (r∘s)·U + Σ c_k·C_k + b)`,
    /// `s' = (1 − z)∘s + z∘s̃`.
    pub fn step<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        s_prev: Var,
        contexts: &[Var],
    ) -> Result<Var> {
        if contexts.len() != self.contexts.len() {
            return Err(Error::shape(
                "gru_step contexts",
                self.contexts.len(),
                contexts.len(),
            ));
        }
        let h = self.hidden;
        let mut gate_terms = Vec::with_capacity(2 + contexts.len());
        let mut cand_terms = Vec::with_capacity(2 + contexts.len());
        let wg = g.param(self.w_gates);
        gate_terms.push(g.matmul(x, wg)?);
        let ug = g.param(self.u_gates);
        gate_terms.push(g.matmul(s_prev, ug)?);
        let wc = g.param(self.w_cand);
        cand_terms.push(g.matmul(x, wc)?);
        for (cw, &ctx) in self.contexts.iter().zip(contexts) {
            let cg = g.param(cw.gates);
            gate_terms.push(g.matmul(ctx, cg)?);
            let cc = g.param(cw.cand);
            cand_terms.push(g.matmul(ctx, cc)?);
        }
        let pre_gates = g.sum(&gate_terms)?;
        let bg = g.param(self.b_gates);
        let pre_gates = g.add_row(pre_gates, bg)?;
        let gates = g.sigmoid(pre_gates);
        let z = g.slice_cols(gates, 0, h)?;
        let r = g.slice_cols(gates, h, h)?;

        let rs = g.mul(r, s_prev)?;
        let uc = g.param(self.u_cand);
        cand_terms.push(g.matmul(rs, uc)?);
        let pre_cand = g.sum(&cand_terms)?;
        let bc = g.param(self.b_cand);
        let pre_cand = g.add_row(pre_cand, bc)?;
        let cand = g.tanh(pre_cand);
        g.lerp(s_prev, cand, z)
    }
}

/// `e_i = vᵀ tanh(W_a·query + U_a·key_i)`.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    w_a: ParamId,
    u_a: ParamId,
    v_a: ParamId,
    pub query_dim: usize,
    pub key_dim: usize,
    pub attn_dim: usize,
}

impl AttentionParams {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        component: Component,
        query_dim: usize,
        key_dim: usize,
        attn_dim: usize,
        init: &mut Initializer,
    ) -> Result<Self> {
        Ok(Self {
            w_a: store.add(
                format!("{prefix}.w_a"),
                component,
                init.gaussian(query_dim, attn_dim),
            )?,
            u_a: store.add(
                format!("{prefix}.u_a"),
                component,
                init.gaussian(key_dim, attn_dim),
            )?,
            v_a: store.add(
                format!("{prefix}.v_a"),
                component,
                init.gaussian(1, attn_dim),
            )?,
            query_dim,
            key_dim,
            attn_dim,
        })
    }

    /// `keys · U_a`, computed once per source (or trace) and reused every step.
    pub fn project_keys<T: Real>(&self, g: &mut Graph<'_, T>, keys: Var) -> Result<Var> {
        let u = g.param(self.u_a);
        g.matmul(keys, u)
    }

    /// Context vectors for a batch of queries. `keys_proj` comes from
    /// [`AttentionParams::project_keys`]; `values` are the raw keys.
    pub fn attend<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        query: Var,
        keys_proj: Var,
        values: Var,
        mask: &[bool],
        positions: usize,
    ) -> Result<Var> {
        let w = g.param(self.w_a);
        let q = g.matmul(query, w)?;
        let v = g.param(self.v_a);
        g.attention(q, keys_proj, values, v, mask, positions)
    }
}

/// `log_softmax(tanh([y_prev; s; ctx…]·W_ff + b_ff)·W_out + b_out)`.
#[derive(Debug, Clone)]
pub struct ReadoutParams {
    ff_w: ParamId,
    ff_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    pub concat_dim: usize,
    pub readout_dim: usize,
    pub vocab: usize,
}

impl ReadoutParams {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        component: Component,
        concat_dim: usize,
        readout_dim: usize,
        vocab: usize,
        init: &mut Initializer,
    ) -> Result<Self> {
        Ok(Self {
            ff_w: store.add(
                format!("{prefix}.ff_w"),
                component,
                init.gaussian(concat_dim, readout_dim),
            )?,
            ff_b: store.add(
                format!("{prefix}.ff_b"),
                component,
                Tensor2::zeros(1, readout_dim),
            )?,
            out_w: store.add(
                format!("{prefix}.out_w"),
                component,
                init.gaussian(readout_dim, vocab),
            )?,
            out_b: store.add(
                format!("{prefix}.out_b"),
                component,
                Tensor2::zeros(1, vocab),
            )?,
            concat_dim,
            readout_dim,
            vocab,
        })
    }

    /// Concatenates the inputs and returns next-token log-probabilities.
    /// `dropout` (if any) scales the concatenated vector elementwise.
    pub fn logprobs<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        prev_emb: Var,
        state: Var,
        contexts: &[Var],
        dropout: Option<Tensor2<T>>,
    ) -> Result<Var> {
        let mut parts = Vec::with_capacity(2 + contexts.len());
        parts.push(prev_emb);
        parts.push(state);
        parts.extend_from_slice(contexts);
        let concat = g.concat_cols(&parts)?;
        if g.shape(concat).1 != self.concat_dim {
            return Err(Error::shape(
                "readout concat",
                self.concat_dim,
                g.shape(concat).1,
            ));
        }
        let concat = match dropout {
            Some(mask) => g.scale_by(concat, mask)?,
            None => concat,
        };
        let (fw, fb) = (g.param(self.ff_w), g.param(self.ff_b));
        let hidden = g.affine(concat, fw, fb)?;
        let hidden = g.tanh(hidden);
        let (ow, ob) = (g.param(self.out_w), g.param(self.out_b));
        let logits = g.affine(hidden, ow, ob)?;
        Ok(g.log_softmax_rows(logits))
    }
}
