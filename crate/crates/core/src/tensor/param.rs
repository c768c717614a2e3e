use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

use super::Tensor;
use crate::error::{Error, Result};

struct ParamInner {
    name: String,
    learnable: bool,
    value: RefCell<Tensor>,
}

/// A named, shared handle to a weight tensor. Cloning shares the slot, so an
/// optimizer update is visible to every layer holding the handle.
#[derive(Clone)]
pub struct Param(Rc<ParamInner>);

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor, learnable: bool) -> Param {
        let value = if learnable { value.requires_grad_() } else { value.detach() };
        Param(Rc::new(ParamInner {
            name: name.into(),
            learnable,
            value: RefCell::new(value),
        }))
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn learnable(&self) -> bool {
        self.0.learnable
    }

    /// The current leaf tensor; using it in an op links it into the graph.
    pub fn tensor(&self) -> Tensor {
        self.0.value.borrow().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.value.borrow().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.0.value.borrow().numel()
    }

    /// Replaces the value with a fresh leaf; any accumulated grad is dropped.
    pub fn set_data(&self, data: Vec<f64>) -> Result<()> {
        let shape = self.shape();
        let t = Tensor::new(data, &shape)?;
        *self.0.value.borrow_mut() = if self.0.learnable { t.requires_grad_() } else { t };
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.value.borrow().grad()
    }

    pub fn zero_grad(&self) {
        self.0.value.borrow().zero_grad();
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad().map_or(0.0, |g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}

impl std::fmt::Debug for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Param")
            .field("name", &self.name())
            .field("shape", &self.shape())
            .field("learnable", &self.learnable())
            .finish()
    }
}

/// Ordered collection of parameters with unique names.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn push(&mut self, p: Param) -> Result<()> {
        if self.params.iter().any(|q| q.name() == p.name()) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {}", p.name())));
        }
        self.params.push(p);
        Ok(())
    }

    pub fn extend(&mut self, other: &ParamSet) -> Result<()> {
        for p in other.iter() {
            self.push(p.clone())?;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn learnable(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(|p| p.learnable())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name() == name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(Param::zero_grad);
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().map(|p| p.grad_norm().powi(2)).sum::<f64>().sqrt()
    }

    pub fn names(&self) -> HashSet<String> {
        self.params.iter().map(|p| p.name().to_string()).collect()
    }
}
