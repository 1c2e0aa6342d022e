use crate::error::{Error, Result};
use crate::numcore::{ParamStore, Real, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub rho: f64,
    pub eps: f64,
    /// Plain RMSprop (`g / √(n + ε)`) instead of the centered form.
    pub plain: bool,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            eps: 1e-4,
            plain: false,
        }
    }
}

/// Centered RMSprop without momentum:
/// `n ← ρn + (1−ρ)g²`, `m ← ρm + (1−ρ)g`, `w ← w − lr·g/√(n − m² + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp<T> {
    pub cfg: RmsPropConfig,
    pub n: Vec<Tensor2<T>>,
    pub m: Vec<Tensor2<T>>,
    pub steps: u64,
}

impl<T: Real> RmsProp<T> {
    pub fn new(store: &ParamStore<T>, cfg: RmsPropConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| Tensor2::zeros(p.value.rows(), p.value.cols()))
                .collect()
        };
        Self {
            cfg,
            n: zeros(),
            m: zeros(),
            steps: 0,
        }
    }

    /// Applies one update from the gradients in `store`, then clears them.
    pub fn update(&mut self, store: &mut ParamStore<T>, lr: f64) -> Result<()> {
        if self.n.len() != store.len() {
            return Err(Error::shape("optimizer state", self.n.len(), store.len()));
        }
        let rho = T::of(self.cfg.rho);
        let one_minus = T::of(1.0 - self.cfg.rho);
        let eps = T::of(self.cfg.eps);
        let lr = T::of(lr);
        for (k, p) in store.iter_mut().enumerate() {
            let (n, m) = (&mut self.n[k], &mut self.m[k]);
            let grads = p.grad.data();
            let values = p.value.data_mut();
            for (i, (&g, w)) in grads.iter().zip(values.iter_mut()).enumerate() {
                let ni = rho * n.data()[i] + one_minus * g * g;
                n.data_mut()[i] = ni;
                let denom = if self.cfg.plain {
                    ni + eps
                } else {
                    let mi = rho * m.data()[i] + one_minus * g;
                    m.data_mut()[i] = mi;
                    // a running variance; clamp rounding below zero
                    let var = ni - mi * mi;
                    (if var < T::zero() { T::zero() } else { var }) + eps
                };
                let delta = lr * g / denom.sqrt();
                if !delta.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite update for `{}`",
                        p.name
                    )));
                }
                *w = *w - delta;
            }
        }
        store.zero_grads();
        self.steps += 1;
        Ok(())
    }
}
