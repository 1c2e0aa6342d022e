//! Encoder and decoder passes over a batch of sentences.
//!
//! Backward decoder: input `[</s>, t_M … t_1]`, predicts `[t_M … t_1, <s>]`.
//! Forward decoder: input `[<s>, t_1 … t_M]`, predicts `[t_1 … t_M, </s>]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{BackwardDecoder, ForwardDecoder, Model};
use crate::data::{BOS_ID, EOS_ID, PAD_ID};
use crate::error::{Error, Result};
use crate::numcore::{Graph, Real, Tensor2, Var};

/// Encoder output for a batch. `h` stacks `B·N` rows of `[→h_i ; ←h_i]`.
#[derive(Debug, Clone)]
pub struct Annotations {
    pub h: Var,
    /// `B×N`, row-major; true at real source tokens.
    pub mask: Vec<bool>,
    pub batch: usize,
    pub positions: usize,
    pub lengths: Vec<usize>,
    /// `←h_1` per row, the forward decoder's initial state.
    pub first_backward: Var,
    /// `→h_N` per row (last real token).
    pub last_forward: Var,
}

/// Hidden states visited by the backward decoder, stacked `B·M′` rows.
#[derive(Debug, Clone)]
pub struct BackwardTrace {
    pub states: Var,
    /// `B×M′`; true where row `b` produced a state at step `j`.
    pub mask: Vec<bool>,
    pub steps: usize,
    /// Emitted ids per row in emission order (right to left).
    pub tokens: Vec<Vec<usize>>,
    /// Whether the row stopped by emitting `<s>`.
    pub terminated: Vec<bool>,
}

impl BackwardTrace {
    pub fn lengths(&self) -> Vec<usize> {
        self.tokens.iter().map(Vec::len).collect()
    }
}

/// Inverted dropout driven by a seeded stream; `Dropout::off()` at evaluation.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn off() -> Self {
        Self {
            rate: 0.0,
            rng: None,
        }
    }

    pub fn new(rate: f64, seed: u64) -> Self {
        if rate <= 0.0 {
            return Self::off();
        }
        Self {
            rate,
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn is_active(&self) -> bool {
        self.rng.is_some()
    }

    pub fn mask<T: Real>(&mut self, rows: usize, cols: usize) -> Option<Tensor2<T>> {
        let rng = self.rng.as_mut()?;
        let keep = T::of(1.0 / (1.0 - self.rate));
        let data = (0..rows * cols)
            .map(|_| {
                if rng.random::<f64>() < self.rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        Some(Tensor2::from_vec(rows, cols, data).expect("sized"))
    }

    pub fn apply<T: Real>(&mut self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (r, c) = g.shape(x);
        match self.mask(r, c) {
            Some(m) => g.scale_by(x, m),
            None => Ok(x),
        }
    }
}

/// Source-side values reused at every decoder step.
pub struct SourceContext {
    pub ann: Annotations,
    /// Annotations projected by the backward decoder's attention.
    pub keys_backward: Option<Var>,
    /// Annotations projected by the forward decoder's source attention.
    pub keys_forward: Option<Var>,
}

/// Trace-side values for the forward decoder's second attention.
pub struct TraceContext {
    pub states: Var,
    pub keys: Var,
    pub mask: Vec<bool>,
    pub steps: usize,
}

/// Index of the highest entry among `allowed` ids (lowest id wins ties).
pub fn argmax_allowed<T: Real>(row: &[T], banned: &[usize]) -> usize {
    let mut best = usize::MAX;
    for (i, &v) in row.iter().enumerate() {
        if banned.contains(&i) {
            continue;
        }
        if best == usize::MAX || v > row[best] {
            best = i;
        }
    }
    best
}

/// Ids the backward decoder never emits.
pub const BACKWARD_BANNED: [usize; 2] = [PAD_ID, EOS_ID];
/// Ids the forward decoder never emits.
pub const FORWARD_BANNED: [usize; 2] = [PAD_ID, BOS_ID];

fn repeat_mask(mask: &[bool], rows: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(mask.len() * rows);
    for _ in 0..rows {
        out.extend_from_slice(mask);
    }
    out
}

impl<T: Real> Model<T> {
    pub fn backward_decoder(&self) -> Result<&BackwardDecoder> {
        self.layout.backward.as_ref().ok_or_else(|| {
            Error::Input(format!(
                "{} model has no backward decoder",
                self.config.architecture
            ))
        })
    }

    pub fn forward_decoder(&self) -> Result<&ForwardDecoder> {
        self.layout.forward.as_ref().ok_or_else(|| {
            Error::Input(format!(
                "{} model has no forward decoder",
                self.config.architecture
            ))
        })
    }

    /// Bidirectional GRU encoder; both scans start from the zero state.
    pub fn encode(&self, g: &mut Graph<'_, T>, sources: &[Vec<usize>]) -> Result<Annotations> {
        if sources.is_empty() || sources.iter().any(Vec::is_empty) {
            return Err(Error::Input("cannot encode an empty source".into()));
        }
        let batch = sources.len();
        let n = sources.iter().map(Vec::len).max().unwrap_or(0);
        let d = self.config.hidden_dim;
        let lengths: Vec<usize> = sources.iter().map(Vec::len).collect();
        let mut mask = vec![false; batch * n];
        for (b, &len) in lengths.iter().enumerate() {
            mask[b * n..b * n + len].iter_mut().for_each(|m| *m = true);
        }

        let mut inputs = Vec::with_capacity(n);
        let mut col_masks = Vec::with_capacity(n);
        for i in 0..n {
            let ids: Vec<usize> = sources
                .iter()
                .map(|s| s.get(i).copied().unwrap_or(PAD_ID))
                .collect();
            inputs.push(self.layout.src_embedding.lookup(g, &ids)?);
            col_masks.push((0..batch).map(|b| mask[b * n + i]).collect::<Vec<_>>());
        }

        let zero = g.constant(Tensor2::zeros(batch, d));
        let mut fwd = Vec::with_capacity(n);
        let mut s = zero;
        for i in 0..n {
            let next = self.layout.enc_fwd.step(g, inputs[i], s, &[])?;
            s = g.carry(next, s, &col_masks[i])?;
            fwd.push(s);
        }
        let mut bwd = vec![zero; n];
        let mut s = zero;
        for i in (0..n).rev() {
            let next = self.layout.enc_bwd.step(g, inputs[i], s, &[])?;
            s = g.carry(next, s, &col_masks[i])?;
            bwd[i] = s;
        }
        let fwd_stack = g.stack_steps(&fwd)?;
        let bwd_stack = g.stack_steps(&bwd)?;
        let h = g.concat_cols(&[fwd_stack, bwd_stack])?;
        Ok(Annotations {
            h,
            mask,
            batch,
            positions: n,
            lengths,
            first_backward: bwd[0],
            last_forward: fwd[n - 1],
        })
    }

    /// Projects annotations once for every attention that reads them.
    pub fn source_context(&self, g: &mut Graph<'_, T>, ann: Annotations) -> Result<SourceContext> {
        let keys_backward = match &self.layout.backward {
            Some(b) => Some(b.attention.project_keys(g, ann.h)?),
            None => None,
        };
        let keys_forward = match &self.layout.forward {
            Some(f) => Some(f.src_attention.project_keys(g, ann.h)?),
            None => None,
        };
        Ok(SourceContext {
            ann,
            keys_backward,
            keys_forward,
        })
    }

    /// `tanh(→h_N · W_init + b_init)`.
    pub fn backward_initial_state(&self, g: &mut Graph<'_, T>, ann: &Annotations) -> Result<Var> {
        let dec = self.backward_decoder()?;
        let (w, b) = (g.param(dec.init_w), g.param(dec.init_b));
        let pre = g.affine(ann.last_forward, w, b)?;
        Ok(g.tanh(pre))
    }

    /// One backward-decoder step for `rows` rows. Returns `(state, logp)`.
    /// `src_rows_shared` means every row reads the same single source.
    pub fn backward_step(
        &self,
        g: &mut Graph<'_, T>,
        src: &SourceContext,
        s_prev: Var,
        prev_tokens: &[usize],
        dropout: &mut Dropout,
    ) -> Result<(Var, Var)> {
        let dec = self.backward_decoder()?;
        let rows = prev_tokens.len();
        let mask = self.source_mask_for(&src.ann, rows);
        let keys = src.keys_backward.expect("backward keys");
        let ctx = dec
            .attention
            .attend(g, s_prev, keys, src.ann.h, &mask, src.ann.positions)?;
        let emb = dec.embedding.lookup(g, prev_tokens)?;
        let emb = dropout.apply(g, emb)?;
        let s = dec.gru.step(g, emb, s_prev, &[ctx])?;
        let drop_mask = dropout.mask(rows, dec.readout.concat_dim);
        let logp = dec.readout.logprobs(g, emb, s, &[ctx], drop_mask)?;
        Ok((s, logp))
    }

    /// One forward-decoder step. `trace` must be given for the full model
    /// and omitted for the left-to-right baseline.
    pub fn forward_step(
        &self,
        g: &mut Graph<'_, T>,
        src: &SourceContext,
        trace: Option<&TraceContext>,
        s_prev: Var,
        prev_tokens: &[usize],
        dropout: &mut Dropout,
    ) -> Result<(Var, Var)> {
        let dec = self.forward_decoder()?;
        let rows = prev_tokens.len();
        let mask = self.source_mask_for(&src.ann, rows);
        let keys = src.keys_forward.expect("forward keys");
        let m_src =
            dec.src_attention
                .attend(g, s_prev, keys, src.ann.h, &mask, src.ann.positions)?;
        let mut contexts = vec![m_src];
        match (&dec.trace_attention, trace) {
            (Some(att), Some(tr)) => {
                let (trows, d) = g.shape(tr.states);
                if d != self.config.hidden_dim {
                    return Err(Error::shape("trace states", self.config.hidden_dim, d));
                }
                let tmask = if tr.mask.len() == rows * tr.steps {
                    tr.mask.clone()
                } else if tr.mask.len() == tr.steps && trows == tr.steps {
                    repeat_mask(&tr.mask, rows)
                } else {
                    return Err(Error::shape("trace mask", rows * tr.steps, tr.mask.len()));
                };
                contexts.push(att.attend(g, s_prev, tr.keys, tr.states, &tmask, tr.steps)?);
            }
            (None, None) => {}
            (Some(_), None) => {
                return Err(Error::Input(
                    "this model's forward decoder needs a backward trace".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::Input(
                    "this model's forward decoder takes no backward trace".into(),
                ))
            }
        }
        let emb = dec.embedding.lookup(g, prev_tokens)?;
        let emb = dropout.apply(g, emb)?;
        let s = dec.gru.step(g, emb, s_prev, &contexts)?;
        let drop_mask = dropout.mask(rows, dec.readout.concat_dim);
        let logp = dec.readout.logprobs(g, emb, s, &contexts, drop_mask)?;
        Ok((s, logp))
    }

    /// Source mask for `rows` decoder rows: the batch mask itself, or a
    /// single sentence's mask repeated for every beam row.
    fn source_mask_for(&self, ann: &Annotations, rows: usize) -> Vec<bool> {
        if ann.batch == rows {
            ann.mask.clone()
        } else {
            repeat_mask(&ann.mask[..ann.positions], rows)
        }
    }

    /// Teacher-forced backward decoder over the reversed targets. Returns the
    /// summed NLL over the batch and the per-step states.
    pub fn backward_teacher_forced(
        &self,
        g: &mut Graph<'_, T>,
        src: &SourceContext,
        targets: &[Vec<usize>],
        dropout: &mut Dropout,
    ) -> Result<(Var, Vec<Var>)> {
        check_targets(targets, src.ann.batch)?;
        let steps = targets.iter().map(Vec::len).max().unwrap_or(0) + 1;
        let mut s = self.backward_initial_state(g, &src.ann)?;
        let mut nlls = Vec::with_capacity(steps);
        let mut states = Vec::with_capacity(steps);
        for j in 0..steps {
            // input at step j: </s> then t_M, t_{M-1}, …
            let prev: Vec<usize> = targets
                .iter()
                .map(|t| match j {
                    0 => EOS_ID,
                    _ if j <= t.len() => t[t.len() - j],
                    _ => PAD_ID,
                })
                .collect();
            let gold: Vec<Option<usize>> = targets
                .iter()
                .map(|t| match j {
                    _ if j < t.len() => Some(t[t.len() - 1 - j]),
                    _ if j == t.len() => Some(BOS_ID),
                    _ => None,
                })
                .collect();
            let (next, logp) = self.backward_step(g, src, s, &prev, dropout)?;
            nlls.push(g.nll(logp, &gold)?);
            states.push(next);
            s = next;
        }
        Ok((g.sum(&nlls)?, states))
    }

    /// Free-running greedy backward decode. Row `b` stops after emitting
    /// `<s>` or after `max_lens[b]` steps. With `forced`, the given token
    /// sequences replace the argmax choices (used to hold token decisions
    /// fixed while probing gradients).
    pub fn backward_greedy_trace(
        &self,
        g: &mut Graph<'_, T>,
        src: &SourceContext,
        max_lens: &[usize],
        forced: Option<&[Vec<usize>]>,
    ) -> Result<BackwardTrace> {
        let batch = src.ann.batch;
        if max_lens.len() != batch || max_lens.iter().any(|&m| m == 0) {
            return Err(Error::Input(
                "greedy trace needs a positive max length per row".into(),
            ));
        }
        if let Some(f) = forced {
            if f.len() != batch || f.iter().any(Vec::is_empty) {
                return Err(Error::Input(
                    "forced trace must give a non-empty sequence per row".into(),
                ));
            }
        }
        let mut s = self.backward_initial_state(g, &src.ann)?;
        let mut prev = vec![EOS_ID; batch];
        let mut tokens: Vec<Vec<usize>> = vec![Vec::new(); batch];
        let mut done = vec![false; batch];
        let mut terminated = vec![false; batch];
        let mut states = Vec::new();
        let mut dropout = Dropout::off();
        loop {
            let j = states.len();
            let active: Vec<bool> = (0..batch)
                .map(|b| match forced {
                    Some(f) => j < f[b].len(),
                    None => !done[b] && j < max_lens[b],
                })
                .collect();
            if !active.iter().any(|&a| a) {
                break;
            }
            let (next, logp) = self.backward_step(g, src, s, &prev, &mut dropout)?;
            let lp = g.value(logp);
            for b in 0..batch {
                if !active[b] {
                    prev[b] = PAD_ID;
                    continue;
                }
                let tok = match forced {
                    Some(f) => f[b][j],
                    None => argmax_allowed(lp.row(b), &BACKWARD_BANNED),
                };
                tokens[b].push(tok);
                prev[b] = tok;
                if tok == BOS_ID {
                    done[b] = true;
                    terminated[b] = true;
                }
            }
            states.push(next);
            s = next;
        }
        let steps = states.len();
        let stacked = g.stack_steps(&states)?;
        let mut mask = vec![false; batch * steps];
        for (b, t) in tokens.iter().enumerate() {
            mask[b * steps..b * steps + t.len()]
                .iter_mut()
                .for_each(|m| *m = true);
        }
        Ok(BackwardTrace {
            states: stacked,
            mask,
            steps,
            tokens,
            terminated,
        })
    }

    pub fn trace_context(
        &self,
        g: &mut Graph<'_, T>,
        trace: &BackwardTrace,
    ) -> Result<Option<TraceContext>> {
        let dec = self.forward_decoder()?;
        match &dec.trace_attention {
            Some(att) => Ok(Some(TraceContext {
                states: trace.states,
                keys: att.project_keys(g, trace.states)?,
                mask: trace.mask.clone(),
                steps: trace.steps,
            })),
            None => Ok(None),
        }
    }

    /// Teacher-forced forward decoder. `trace` is required for the full
    /// model and ignored by the left-to-right baseline. Returns the summed NLL.
    pub fn forward_teacher_forced(
        &self,
        g: &mut Graph<'_, T>,
        src: &SourceContext,
        trace: Option<&BackwardTrace>,
        targets: &[Vec<usize>],
        dropout: &mut Dropout,
    ) -> Result<Var> {
        check_targets(targets, src.ann.batch)?;
        let dec = self.forward_decoder()?;
        let trace_ctx = match (trace, dec.trace_attention.is_some()) {
            (Some(t), true) => {
                if t.steps == 0 {
                    return Err(Error::Input("empty backward trace".into()));
                }
                self.trace_context(g, t)?
            }
            (None, true) => {
                return Err(Error::Input("the full model needs a backward trace".into()))
            }
            (_, false) => None,
        };
        let steps = targets.iter().map(Vec::len).max().unwrap_or(0) + 1;
        let mut s = src.ann.first_backward;
        let mut nlls = Vec::with_capacity(steps);
        for j in 0..steps {
            let prev: Vec<usize> = targets
                .iter()
                .map(|t| match j {
                    0 => BOS_ID,
                    _ if j <= t.len() => t[j - 1],
                    _ => PAD_ID,
                })
                .collect();
            let gold: Vec<Option<usize>> = targets
                .iter()
                .map(|t| match j {
                    _ if j < t.len() => Some(t[j]),
                    _ if j == t.len() => Some(EOS_ID),
                    _ => None,
                })
                .collect();
            let (next, logp) = self.forward_step(g, src, trace_ctx.as_ref(), s, &prev, dropout)?;
            nlls.push(g.nll(logp, &gold)?);
            s = next;
        }
        g.sum(&nlls)
    }
}

fn check_targets(targets: &[Vec<usize>], batch: usize) -> Result<()> {
    if targets.len() != batch {
        return Err(Error::shape("targets", batch, targets.len()));
    }
    if targets.iter().any(Vec::is_empty) {
        return Err(Error::Input("empty target sentence".into()));
    }
    Ok(())
}
