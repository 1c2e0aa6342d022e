//! Beam search and two-phase translation.

use std::cmp::Ordering;

use crate::data::{BOS_ID, EOS_ID};
use crate::error::{Error, Result};
use crate::model::{
    Architecture, Dropout, Model, SourceContext, TraceContext, BACKWARD_BANNED, FORWARD_BANNED,
};
use crate::numcore::{Graph, Real, Tensor2, Var};

pub const DEFAULT_BEAM: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis<T> {
    /// Emitted ids, including the end token once finished.
    pub tokens: Vec<usize>,
    /// Cumulative log-probability.
    pub score: f64,
    /// Per-step log-probabilities; they sum to `score`.
    pub step_logprobs: Vec<f64>,
    pub state: Vec<T>,
    pub finished: bool,
}

impl<T> Hypothesis<T> {
    fn rank(&self, normalize: bool) -> f64 {
        if normalize && !self.tokens.is_empty() {
            self.score / self.tokens.len() as f64
        } else {
            self.score
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam: usize,
    pub max_len: usize,
    /// Rank by score per emitted token instead of the raw sum.
    pub length_normalize: bool,
}

/// Which decoders take part in a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub mode: Architecture,
    pub beam: usize,
    pub length_normalize: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            mode: Architecture::Abd,
            beam: DEFAULT_BEAM,
            length_normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    /// Output ids in natural order, without `<s>`/`</s>`.
    pub tokens: Vec<usize>,
    pub score: f64,
    /// Tokens of the backward greedy pass (two-phase decoding only).
    pub trace: Option<Vec<usize>>,
    /// The backward pass hit its length cap without emitting `<s>`.
    pub truncated_trace: bool,
}

struct Candidate {
    origin: usize,
    row: usize,
    token: Option<usize>,
    logp: f64,
    score: f64,
    rank: f64,
}

/// Beam search over one decoder. `step(g, states, prev_tokens)` advances
/// every row and returns `(new_states, logprobs)`. Finished hypotheses keep
/// their slot and score. Candidates are ordered by score, then by beam
/// position, then by token id.
pub fn beam_search<'p, T, F>(
    g: &mut Graph<'p, T>,
    init_state: Vec<T>,
    start: usize,
    end: usize,
    banned: &[usize],
    cfg: &BeamConfig,
    mut step: F,
) -> Result<Vec<Hypothesis<T>>>
where
    T: Real,
    F: FnMut(&mut Graph<'p, T>, Var, &[usize]) -> Result<(Var, Var)>,
{
    if cfg.beam == 0 {
        return Err(Error::Input("beam size must be at least 1".into()));
    }
    if cfg.max_len == 0 {
        return Err(Error::Input("max_len must be at least 1".into()));
    }
    let d = init_state.len();
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        step_logprobs: Vec::new(),
        state: init_state,
        finished: false,
    }];
    for _ in 0..cfg.max_len {
        let live: Vec<usize> = (0..beam.len()).filter(|&i| !beam[i].finished).collect();
        if live.is_empty() {
            break;
        }
        let mut data = Vec::with_capacity(live.len() * d);
        for &i in &live {
            data.extend_from_slice(&beam[i].state);
        }
        let prev: Vec<usize> = live
            .iter()
            .map(|&i| beam[i].tokens.last().copied().unwrap_or(start))
            .collect();
        let states = g.constant(Tensor2::from_vec(live.len(), d, data)?);
        let (next, logp) = step(g, states, &prev)?;
        let lp = g.value(logp);

        let mut cands = Vec::new();
        let mut row = 0;
        for (i, h) in beam.iter().enumerate() {
            if h.finished {
                cands.push(Candidate {
                    origin: i,
                    row: usize::MAX,
                    token: None,
                    logp: 0.0,
                    score: h.score,
                    rank: h.rank(cfg.length_normalize),
                });
                continue;
            }
            for (v, &l) in lp.row(row).iter().enumerate() {
                if banned.contains(&v) {
                    continue;
                }
                let l = l.to_f64();
                let score = h.score + l;
                let rank = if cfg.length_normalize {
                    score / (h.tokens.len() + 1) as f64
                } else {
                    score
                };
                cands.push(Candidate {
                    origin: i,
                    row,
                    token: Some(v),
                    logp: l,
                    score,
                    rank,
                });
            }
            row += 1;
        }
        cands.sort_by(|a, b| b.rank.total_cmp(&a.rank));
        cands.truncate(cfg.beam);

        let nv = g.value(next);
        beam = cands
            .into_iter()
            .map(|c| {
                let h = &beam[c.origin];
                match c.token {
                    None => h.clone(),
                    Some(t) => {
                        let mut tokens = h.tokens.clone();
                        tokens.push(t);
                        let mut step_logprobs = h.step_logprobs.clone();
                        step_logprobs.push(c.logp);
                        Hypothesis {
                            tokens,
                            score: c.score,
                            step_logprobs,
                            state: nv.row(c.row).to_vec(),
                            finished: t == end,
                        }
                    }
                }
            })
            .collect();
    }
    beam.sort_by(|a, b| {
        b.rank(cfg.length_normalize)
            .partial_cmp(&a.rank(cfg.length_normalize))
            .unwrap_or(Ordering::Equal)
    });
    Ok(beam)
}

/// Beam search over the forward decoder, attending to `trace` when given.
pub fn beam_search_forward<'p, T: Real>(
    model: &Model<T>,
    g: &mut Graph<'p, T>,
    src: &SourceContext,
    trace: Option<&TraceContext>,
    cfg: &BeamConfig,
) -> Result<Vec<Hypothesis<T>>> {
    let init = g.value(src.ann.first_backward).row(0).to_vec();
    let mut dropout = Dropout::off();
    beam_search(
        g,
        init,
        BOS_ID,
        EOS_ID,
        &FORWARD_BANNED,
        cfg,
        |g, s, prev| model.forward_step(g, src, trace, s, prev, &mut dropout),
    )
}

/// Beam search over the backward decoder; tokens come out right to left.
pub fn beam_search_backward<'p, T: Real>(
    model: &Model<T>,
    g: &mut Graph<'p, T>,
    src: &SourceContext,
    cfg: &BeamConfig,
) -> Result<Vec<Hypothesis<T>>> {
    let s0 = model.backward_initial_state(g, &src.ann)?;
    let init = g.value(s0).row(0).to_vec();
    let mut dropout = Dropout::off();
    beam_search(
        g,
        init,
        EOS_ID,
        BOS_ID,
        &BACKWARD_BANNED,
        cfg,
        |g, s, prev| model.backward_step(g, src, s, prev, &mut dropout),
    )
}

fn strip(tokens: &[usize]) -> Vec<usize> {
    tokens
        .iter()
        .copied()
        .filter(|&t| t != BOS_ID && t != EOS_ID)
        .collect()
}

/// Translates one source sentence (ids) with the decoders `cfg.mode` names.
pub fn translate<T: Real>(
    model: &Model<T>,
    source: &[usize],
    cfg: &DecodeConfig,
) -> Result<Translation> {
    if source.is_empty() {
        return Err(Error::Input("cannot translate an empty source".into()));
    }
    let arch = model.config.architecture;
    let max_len = model.config.max_decode_len(source.len());
    let beam = BeamConfig {
        beam: cfg.beam,
        max_len,
        length_normalize: cfg.length_normalize,
    };
    let mut g = Graph::new(&model.store);
    let ann = model.encode(&mut g, &[source.to_vec()])?;
    let src = model.source_context(&mut g, ann)?;
    match cfg.mode {
        Architecture::Abd => {
            if arch != Architecture::Abd {
                return Err(Error::Input(format!(
                    "two-phase decoding needs an abd model, got {arch}"
                )));
            }
            let trace = model.backward_greedy_trace(&mut g, &src, &[max_len], None)?;
            let truncated = !trace.terminated[0];
            if truncated {
                log::warn!(
                    "backward pass reached {max_len} tokens without <s>; using the truncated trace"
                );
            }
            let ctx = model.trace_context(&mut g, &trace)?;
            let hyps = beam_search_forward(model, &mut g, &src, ctx.as_ref(), &beam)?;
            let best = &hyps[0];
            Ok(Translation {
                tokens: strip(&best.tokens),
                score: best.score,
                trace: Some(trace.tokens[0].clone()),
                truncated_trace: truncated,
            })
        }
        Architecture::L2r => {
            let dec = model.forward_decoder()?;
            if dec.trace_attention.is_some() {
                return Err(Error::Input(
                    "left-to-right decoding needs an l2r model".into(),
                ));
            }
            let hyps = beam_search_forward(model, &mut g, &src, None, &beam)?;
            Ok(Translation {
                tokens: strip(&hyps[0].tokens),
                score: hyps[0].score,
                trace: None,
                truncated_trace: false,
            })
        }
        Architecture::R2l => {
            let hyps = beam_search_backward(model, &mut g, &src, &beam)?;
            let mut tokens = strip(&hyps[0].tokens);
            tokens.reverse();
            Ok(Translation {
                tokens,
                score: hyps[0].score,
                trace: None,
                truncated_trace: false,
            })
        }
    }
}

pub fn translate_l2r_baseline<T: Real>(
    model: &Model<T>,
    source: &[usize],
    beam: usize,
) -> Result<Translation> {
    translate(
        model,
        source,
        &DecodeConfig {
            mode: Architecture::L2r,
            beam,
            length_normalize: false,
        },
    )
}

pub fn translate_r2l_baseline<T: Real>(
    model: &Model<T>,
    source: &[usize],
    beam: usize,
) -> Result<Translation> {
    translate(
        model,
        source,
        &DecodeConfig {
            mode: Architecture::R2l,
            beam,
            length_normalize: false,
        },
    )
}

/// Translates every sentence, spreading them over `threads` workers.
/// Output order follows input order.
pub fn translate_all<T: Real>(
    model: &Model<T>,
    sources: &[Vec<usize>],
    cfg: &DecodeConfig,
    threads: usize,
) -> Result<Vec<Translation>> {
    let threads = threads.max(1).min(sources.len().max(1));
    if threads == 1 {
        return sources.iter().map(|s| translate(model, s, cfg)).collect();
    }
    let chunk = sources.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = sources
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|s| translate(model, s, cfg))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(sources.len());
        for h in handles {
            out.extend(
                h.join()
                    .map_err(|_| Error::Numeric("translation worker panicked".into()))??,
            );
        }
        Ok(out)
    })
}
