//! Dense row-major `f64` tensors with tape-free reverse-mode autodiff.
//!
//! Every operation that consumes a tensor requiring gradient records a
//! [`Node`] holding its parents and a vector-Jacobian closure. The graph is
//! built from `Rc` links only in the parent direction, so it is acyclic by
//! construction. [`Tensor::backward`] walks it in reverse topological order.

mod conv;
mod elementwise;
pub(crate) mod gemm;
mod linalg;
mod param;
mod reduce;
mod shape_ops;

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub use param::{Param, ParamSet};

/// Vector-Jacobian product: maps the output gradient to one optional
/// gradient per parent. `needs[i]` tells whether parent `i` wants a gradient.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>>>;

pub(crate) struct Node {
    op: &'static str,
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    id: usize,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    node: Option<Node>,
}

impl Drop for Inner {
    // Unlinks history iteratively; recursive Rc drops would overflow on
    // long unrolled chains.
    fn drop(&mut self) {
        let Some(node) = self.node.take() else { return };
        let Node {
            parents, backward, ..
        } = node;
        drop(backward);
        let mut stack = parents;
        while let Some(t) = stack.pop() {
            if let Ok(mut inner) = Rc::try_unwrap(t.0) {
                if let Some(node) = inner.node.take() {
                    let Node {
                        parents, backward, ..
                    } = node;
                    drop(backward);
                    stack.extend(parents);
                }
            }
        }
    }
}

#[derive(Clone)]
pub struct Tensor(Rc<Inner>);

thread_local! {
    static NEXT_ID: Cell<usize> = const { Cell::new(0) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_id() -> usize {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Runs `f` without recording autodiff history.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != data.len() {
            return Err(Error::DataLength {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid_shape("new", shape, "zero extent"));
        }
        Ok(Tensor::from_parts(data, shape.to_vec(), false, None))
    }

    pub(crate) fn from_parts(
        data: Vec<f64>,
        shape: Vec<usize>,
        requires_grad: bool,
        node: Option<Node>,
    ) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Rc::new(Inner {
            id: next_id(),
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            node,
        }))
    }

    /// Builds the result of an op. History is recorded only when grad mode is
    /// on and at least one parent requires gradient.
    pub(crate) fn from_op(
        op: &'static str,
        data: Vec<f64>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        backward: impl Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + 'static,
    ) -> Tensor {
        let track = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if track {
            let node = Node {
                op,
                parents,
                backward: Box::new(backward),
            };
            Tensor::from_parts(data, shape, true, Some(node))
        } else {
            Tensor::from_parts(data, shape, false, None)
        }
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::from_parts(vec![value], vec![1], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor::from_parts(vec![value; numel(shape)], shape.to_vec(), false, None)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Tensor {
        let data = (0..numel(shape)).map(&mut f).collect();
        Tensor::from_parts(data, shape.to_vec(), false, None)
    }

    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
        Tensor::from_fn(shape, |_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
    }

    pub fn rand_uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
    }

    /// Same data as a fresh leaf that requires gradient.
    pub fn requires_grad_(self) -> Tensor {
        let data = self.0.data.clone();
        Tensor::from_parts(data, self.0.shape.clone(), true, None)
    }

    /// Same data, no history.
    pub fn detach(&self) -> Tensor {
        Tensor::from_parts(self.0.data.clone(), self.0.shape.clone(), false, None)
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.0.shape[axis]
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.0.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    pub fn op_name(&self) -> &'static str {
        self.0.node.as_ref().map_or("leaf", |n| n.op)
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub fn all_finite(&self) -> bool {
        self.0.data.iter().all(|v| v.is_finite())
    }

    /// Reverse-mode sweep from a scalar. Gradients accumulate into every
    /// reachable leaf that requires gradient.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarBackward(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut grads: HashMap<usize, Vec<f64>> = HashMap::new();
        grads.insert(self.id(), vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.id()) else {
                continue;
            };
            match &t.0.node {
                None => {
                    let mut slot = t.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        None => *slot = Some(g),
                    }
                }
                Some(node) => {
                    let needs: Vec<bool> = node.parents.iter().map(|p| p.requires_grad()).collect();
                    let parent_grads = (node.backward)(&g, &needs);
                    debug_assert_eq!(parent_grads.len(), node.parents.len());
                    for (p, pg) in node.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), p.numel(), "grad length for {}", node.op);
                        match grads.get_mut(&p.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                grads.insert(p.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order DFS over tensors that require gradient; iterative so long
    /// unrolled chains do not overflow the stack.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.0.node {
                for p in &node.parents {
                    if p.requires_grad() && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("op", &self.op_name())
            .field("requires_grad", &self.requires_grad())
            .field("data", &preview)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_length() {
        assert!(Tensor::new(vec![1.0, 2.0], &[3]).is_err());
        let t = Tensor::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]).unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.numel(), 6);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Tensor::ones(&[2]).requires_grad_();
        let y = x.mul_scalar(2.0);
        assert!(matches!(y.backward(), Err(Error::NonScalarBackward(_))));
    }

    #[test]
    fn quadratic_gradient_is_two_x() {
        let x = Tensor::new(vec![1.0, -2.0, 3.5], &[3]).unwrap().requires_grad_();
        let loss = x.mul(&x).unwrap().sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, -4.0, 7.0]);
    }

    #[test]
    fn dead_relu_has_zero_gradient() {
        let x = Tensor::new(vec![0.5, 2.0], &[2]).unwrap().requires_grad_();
        let loss = x.neg().relu().sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // y = x*x used twice: loss = sum(y) + sum(y*3) => d/dx = 8x
        let x = Tensor::new(vec![1.0, 2.0], &[2]).unwrap().requires_grad_();
        let y = x.mul(&x).unwrap();
        let loss = y.sum().add(&y.mul_scalar(3.0).sum()).unwrap();
        loss.backward().unwrap();

        // unrolled copy without sharing
        let x2 = Tensor::new(vec![1.0, 2.0], &[2]).unwrap().requires_grad_();
        let a = x2.mul(&x2).unwrap();
        let b = x2.mul(&x2).unwrap().mul_scalar(3.0);
        let loss2 = a.sum().add(&b.sum()).unwrap();
        loss2.backward().unwrap();

        assert_eq!(x.grad().unwrap(), vec![8.0, 16.0]);
        assert_eq!(x.grad(), x2.grad());
    }

    #[test]
    fn grads_accumulate_across_backward_calls() {
        let x = Tensor::new(vec![3.0], &[1]).unwrap().requires_grad_();
        x.mul_scalar(2.0).sum().backward().unwrap();
        x.mul_scalar(2.0).sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn no_grad_records_nothing() {
        let x = Tensor::ones(&[2]).requires_grad_();
        let y = no_grad(|| x.mul_scalar(2.0));
        assert!(!y.requires_grad());
        assert!(y.is_leaf());
        assert!(grad_enabled());
    }

    #[test]
    fn long_chain_does_not_overflow() {
        let x = Tensor::new(vec![1.0], &[1]).unwrap().requires_grad_();
        let mut y = x.clone();
        for _ in 0..20_000 {
            y = y.add_scalar(0.0);
        }
        y.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0]);
    }
}
