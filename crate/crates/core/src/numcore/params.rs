use std::collections::HashMap;
use std::fmt;

use super::tensor::{Real, Tensor2};
use crate::error::{Error, Result};

/// Which part of the model a parameter belongs to. The joint objective's
/// reverse term touches only `Encoder`, `Backward` and `Shared`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Encoder,
    Backward,
    Forward,
    Shared,
}

impl Component {
    pub fn as_str(self) -> &'static str {
        match self {
            Component::Encoder => "encoder",
            Component::Backward => "backward",
            Component::Forward => "forward",
            Component::Shared => "shared",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub component: Component,
    pub value: Tensor2<T>,
    pub grad: Tensor2<T>,
    /// Rows held at zero and never updated (the padding embedding row).
    pub frozen_row: Option<usize>,
}

/// Named parameters with gradient accumulators, in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        component: Component,
        value: Tensor2<T>,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Input(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor2::zeros(value.rows(), value.cols());
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            component,
            value,
            grad,
            frozen_row: None,
        });
        Ok(id)
    }

    pub fn freeze_row(&mut self, id: ParamId, row: usize) {
        let p = &mut self.params[id.0];
        p.value.row_mut(row).iter_mut().for_each(|x| *x = T::zero());
        p.frozen_row = Some(row);
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor2<T> {
        &self.params[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of scalar weights.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Adds `grad` into the accumulator of `id`. The frozen row, if any,
    /// never receives gradient.
    pub fn accumulate(&mut self, id: ParamId, grad: &Tensor2<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        p.grad.add_assign(grad)?;
        if let Some(r) = p.frozen_row {
            p.grad.row_mut(r).iter_mut().for_each(|x| *x = T::zero());
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.grad.sum_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// Converts every value to another precision; gradients are reset.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    component: p.component,
                    value: p.value.cast(),
                    grad: Tensor2::zeros(p.grad.rows(), p.grad.cols()),
                    frozen_row: p.frozen_row,
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Rescales all gradients so that their joint L2 norm is at most `max_norm`.
/// Returns the factor applied (1.0 when under the threshold).
pub fn clip_global_norm<T: Real>(store: &mut ParamStore<T>, max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::Input(format!(
            "clip norm must be positive, got {max_norm}"
        )));
    }
    if let Some(p) = store.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient in `{}`",
            p.name
        )));
    }
    let norm = store.grad_norm();
    if norm <= max_norm {
        return Ok(1.0);
    }
    let factor = max_norm / norm;
    let f = T::of(factor);
    for p in store.iter_mut() {
        p.grad.scale_in_place(f);
    }
    Ok(factor)
}
