use std::cell::{Cell, Ref, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::{Real, TensorError};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static NO_GRAD_DEPTH: Cell<usize> = const { Cell::new(0) };
}

/// Runs `f` without recording a graph; results never require grad.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Reset;
    impl Drop for Reset {
        fn drop(&mut self) {
            NO_GRAD_DEPTH.with(|d| d.set(d.get() - 1));
        }
    }
    NO_GRAD_DEPTH.with(|d| d.set(d.get() + 1));
    let _reset = Reset;
    f()
}

pub fn is_grad_enabled() -> bool {
    NO_GRAD_DEPTH.with(Cell::get) == 0
}

/// Maps the output gradient (and the output values) to one optional gradient
/// per parent, in parent order.
pub type BackwardFn<T> = Box<dyn Fn(&[T], &[T]) -> Vec<Option<Vec<T>>>>;

struct Node<T: Real> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
}

/// Shared handle to a graph node. Cloning is cheap and aliases storage.
pub struct Tensor<T: Real>(Rc<Node<T>>);

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    fn make(
        shape: Vec<usize>,
        data: Vec<T>,
        requires_grad: bool,
        parents: Vec<Tensor<T>>,
        backward: Option<BackwardFn<T>>,
    ) -> Self {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "data length does not match shape {shape:?}"
        );
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            parents,
            backward,
        }))
    }

    /// Constant (no grad) tensor.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        Self::make(shape.to_vec(), data, false, Vec::new(), None)
    }

    /// Trainable leaf.
    pub fn leaf(shape: &[usize], data: Vec<T>) -> Self {
        Self::make(shape.to_vec(), data, true, Vec::new(), None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_vec(shape, vec![T::zero(); shape.iter().product()])
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self::from_vec(shape, vec![v; shape.iter().product()])
    }

    pub fn scalar(v: T) -> Self {
        Self::from_vec(&[], vec![v])
    }

    /// Result of a differentiable op. The node records `parents` and
    /// `backward` only when grad mode is on and some parent requires grad.
    pub fn from_op(shape: Vec<usize>, data: Vec<T>, parents: Vec<Tensor<T>>, backward: BackwardFn<T>) -> Self {
        let requires_grad = is_grad_enabled() && parents.iter().any(Tensor::requires_grad);
        if requires_grad {
            Self::make(shape, data, true, parents, Some(backward))
        } else {
            Self::make(shape, data, false, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.backward.is_none()
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.0.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.borrow().clone()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> T {
        let d = self.0.data.borrow();
        assert_eq!(d.len(), 1, "item() on a tensor with {} elements", d.len());
        d[0]
    }

    /// Replaces the values in place (shape unchanged). Graphs built earlier
    /// see the new values on their next backward.
    pub fn set_data(&self, data: Vec<T>) {
        assert_eq!(data.len(), self.numel(), "set_data length");
        *self.0.data.borrow_mut() = data;
    }

    pub fn update_data(&self, f: impl FnOnce(&mut [T])) {
        f(&mut self.0.data.borrow_mut());
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn grad_ref(&self) -> Ref<'_, Option<Vec<T>>> {
        self.0.grad.borrow()
    }

    /// Overwrites the accumulated gradient.
    pub fn set_grad(&self, g: Option<Vec<T>>) {
        if let Some(g) = &g {
            assert_eq!(g.len(), self.numel(), "set_grad length");
        }
        *self.0.grad.borrow_mut() = g;
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Same storage?
    pub fn ptr_eq(&self, other: &Tensor<T>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Copy detached from the graph, as a leaf if `requires_grad`.
    pub fn detach(&self, requires_grad: bool) -> Self {
        Self::make(self.0.shape.clone(), self.to_vec(), requires_grad, Vec::new(), None)
    }

    /// Element-type conversion into a fresh leaf with the same grad flag.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        let data = self.data().iter().map(|v| U::of(v.as_f64())).collect();
        Tensor::make(self.0.shape.clone(), data, self.requires_grad(), Vec::new(), None)
    }

    fn accumulate(&self, g: Vec<T>) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g),
        }
    }

    /// Reverse-mode sweep from a scalar. Leaf gradients accumulate across
    /// calls; gradients of intermediate nodes are consumed by the sweep.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalar(self.0.shape.clone()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        // Parents are always created before children, so descending ids is a
        // reverse topological order.
        let mut nodes: Vec<Tensor<T>> = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.0.id) {
                continue;
            }
            for p in &t.0.parents {
                if p.requires_grad() && !seen.contains(&p.0.id) {
                    stack.push(p.clone());
                }
            }
            nodes.push(t);
        }
        nodes.sort_by(|a, b| b.0.id.cmp(&a.0.id));
        self.accumulate(vec![T::one()]);
        for node in &nodes {
            let Some(backward) = node.0.backward.as_ref() else {
                continue;
            };
            let Some(g) = node.0.grad.borrow_mut().take() else {
                continue;
            };
            let grads = {
                let out = node.0.data.borrow();
                backward(&g, &out)
            };
            debug_assert_eq!(grads.len(), node.0.parents.len());
            for (p, pg) in node.0.parents.iter().zip(grads) {
                if let Some(pg) = pg {
                    if p.requires_grad() {
                        debug_assert_eq!(pg.len(), p.numel());
                        p.accumulate(pg);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Named trainable tensor.
#[derive(Debug, Clone)]
pub struct Parameter<T: Real> {
    pub name: String,
    pub tensor: Tensor<T>,
    /// Excluded from weight decay (biases, norm scales and shifts).
    pub decay_exempt: bool,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, tensor: Tensor<T>, decay_exempt: bool) -> Self {
        Self {
            name: name.into(),
            tensor,
            decay_exempt,
        }
    }
}
