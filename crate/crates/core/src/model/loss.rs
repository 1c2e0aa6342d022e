use super::config::Architecture;
use super::params::Model;
use super::passes::{BackwardTrace, Dropout};
use crate::error::{Error, Result};
use crate::numcore::{Graph, Real, Tensor2, Var};

/// A built objective: `total` is the node to differentiate.
#[derive(Debug, Clone)]
pub struct JointLoss {
    pub total: Var,
    pub value: f64,
    /// Summed over the batch; zero when the architecture lacks the decoder.
    pub forward_nll: f64,
    pub backward_nll: f64,
    pub batch: usize,
    pub target_tokens: usize,
    pub trace: Option<BackwardTrace>,
}

impl JointLoss {
    pub fn mean_forward_nll(&self) -> f64 {
        self.forward_nll / self.batch as f64
    }

    pub fn mean_backward_nll(&self) -> f64 {
        self.backward_nll / self.batch as f64
    }
}

/// Optional overrides used when probing the objective.
#[derive(Debug, Clone)]
pub struct LossOptions<'a, T> {
    /// Token choices for the greedy trace; the argmax is used when absent.
    pub forced_trace: Option<&'a [Vec<usize>]>,
    /// Replaces the trace states with these constants (a detached trace
    /// evaluated at other parameters).
    pub fixed_trace_states: Option<&'a Tensor2<T>>,
}

impl<T> Default for LossOptions<'_, T> {
    fn default() -> Self {
        Self {
            forced_trace: None,
            fixed_trace_states: None,
        }
    }
}

impl<T: Real> Model<T> {
    /// Builds the training objective for a batch on `g`:
    /// `λ/B · Σ nll_fwd + (1−λ)/B · Σ nll_bwd` for the full model, the
    /// forward (or backward) mean NLL alone for the single-decoder baselines.
    pub fn joint_loss(
        &self,
        g: &mut Graph<'_, T>,
        sources: &[Vec<usize>],
        targets: &[Vec<usize>],
        dropout: &mut Dropout,
        opts: &LossOptions<'_, T>,
    ) -> Result<JointLoss> {
        if sources.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        if sources.len() != targets.len() {
            return Err(Error::shape("batch targets", sources.len(), targets.len()));
        }
        let batch = sources.len();
        let inv_b = 1.0 / batch as f64;
        let lambda = self.config.lambda;
        let ann = self.encode(g, sources)?;
        let src = self.source_context(g, ann)?;

        let mut terms = Vec::with_capacity(2);
        let mut backward_nll = 0.0;
        let mut forward_nll = 0.0;
        let mut trace = None;
        let arch = self.config.architecture;

        if arch.has_backward() {
            let (nll, _) = self.backward_teacher_forced(g, &src, targets, dropout)?;
            backward_nll = g.scalar(nll).to_f64();
            let w = if arch == Architecture::Abd {
                (1.0 - lambda) * inv_b
            } else {
                inv_b
            };
            terms.push(g.scale(nll, T::of(w)));
        }
        if arch.has_forward() {
            let tr = if arch == Architecture::Abd {
                let max_lens: Vec<usize> = src
                    .ann
                    .lengths
                    .iter()
                    .map(|&n| self.config.max_decode_len(n))
                    .collect();
                let mut t = self.backward_greedy_trace(g, &src, &max_lens, opts.forced_trace)?;
                if let Some(states) = opts.fixed_trace_states {
                    if g.shape(t.states) != states.shape() {
                        return Err(Error::shape(
                            "fixed trace states",
                            states.shape_str(),
                            format!("{:?}", g.shape(t.states)),
                        ));
                    }
                    t.states = g.constant(states.clone());
                } else if self.config.detach_backward_trace {
                    t.states = g.detach(t.states);
                }
                Some(t)
            } else {
                None
            };
            let nll = self.forward_teacher_forced(g, &src, tr.as_ref(), targets, dropout)?;
            forward_nll = g.scalar(nll).to_f64();
            let w = if arch == Architecture::Abd {
                lambda * inv_b
            } else {
                inv_b
            };
            terms.push(g.scale(nll, T::of(w)));
            trace = tr;
        }
        let total = g.sum(&terms)?;
        let value = g.scalar(total).to_f64();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("training objective is {value}")));
        }
        Ok(JointLoss {
            total,
            value,
            forward_nll,
            backward_nll,
            batch,
            target_tokens: targets.iter().map(|t| t.len() + 1).sum(),
            trace,
        })
    }
}
