use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{Real, Tensor, TensorError};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Adjoint rule of one recorded operation.
///
/// Arguments are the upstream gradient, the input values, the output value
/// and a mask of which inputs need a gradient. Returns one entry per input.
pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&Tensor<T>, &[&Tensor<T>], &Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Real> {
    id: u64,
    value: Tensor<T>,
    requires_grad: bool,
    parents: Vec<Var<T>>,
    backward: Option<BackwardFn<T>>,
}

/// Handle to a value in the differentiable graph.
///
/// Cloning is cheap. Nodes that do not require a gradient keep no reference
/// to their inputs, so inference graphs free intermediates eagerly.
pub struct Var<T: Real = f32>(Rc<Node<T>>);

impl<T: Real> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var(Rc::clone(&self.0))
    }
}

impl<T: Real> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.0.value.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<T: Real> Var<T> {
    fn next_id() -> u64 {
        NEXT_ID.fetch_add(1, Ordering::Relaxed)
    }

    /// Leaf whose gradient is collected by [`Var::backward`].
    pub fn param(value: Tensor<T>) -> Self {
        Self::leaf(value, true)
    }

    pub fn constant(value: Tensor<T>) -> Self {
        Self::leaf(value, false)
    }

    pub fn leaf(value: Tensor<T>, requires_grad: bool) -> Self {
        Var(Rc::new(Node {
            id: Self::next_id(),
            value,
            requires_grad,
            parents: Vec::new(),
            backward: None,
        }))
    }

    pub(crate) fn from_op(
        value: Tensor<T>,
        inputs: &[&Var<T>],
        backward: impl Fn(&Tensor<T>, &[&Tensor<T>], &Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>
            + 'static,
    ) -> Self {
        let requires_grad = inputs.iter().any(|v| v.0.requires_grad);
        let (parents, backward): (Vec<Var<T>>, Option<BackwardFn<T>>) = if requires_grad {
            (inputs.iter().map(|v| (*v).clone()).collect(), Some(Box::new(backward)))
        } else {
            (Vec::new(), None)
        };
        Var(Rc::new(Node {
            id: Self::next_id(),
            value,
            requires_grad,
            parents,
            backward,
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var<T> {
        Var::constant(self.0.value.clone())
    }

    /// Reverse-mode sweep from a scalar loss.
    pub fn backward(&self) -> Result<Gradients<T>, TensorError> {
        if self.0.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape().to_vec()));
        }
        let tape = Tape::record(self);
        Ok(tape.run(Tensor::ones(self.shape())))
    }
}

/// Operations reachable from a root, in reverse execution order.
pub struct Tape<T: Real = f32> {
    ops: Vec<Var<T>>,
}

impl<T: Real> Tape<T> {
    pub fn record(root: &Var<T>) -> Self {
        let mut seen = HashSet::new();
        let mut stack = vec![root.clone()];
        let mut ops = Vec::new();
        while let Some(v) = stack.pop() {
            if !v.0.requires_grad || !seen.insert(v.0.id) {
                continue;
            }
            stack.extend(v.0.parents.iter().cloned());
            ops.push(v);
        }
        // ids increase with creation, so descending id is reverse execution order
        ops.sort_unstable_by(|a, b| b.0.id.cmp(&a.0.id));
        Tape { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Ids in visiting order.
    pub fn order(&self) -> Vec<u64> {
        self.ops.iter().map(|v| v.0.id).collect()
    }

    fn run(&self, seed: Tensor<T>) -> Gradients<T> {
        let mut pending: HashMap<u64, Tensor<T>> = HashMap::new();
        let mut leaves = HashMap::new();
        if let Some(root) = self.ops.first() {
            pending.insert(root.0.id, seed);
        }
        for var in &self.ops {
            let node = &var.0;
            let Some(grad) = pending.remove(&node.id) else {
                continue;
            };
            let Some(backward) = &node.backward else {
                leaves.insert(node.id, grad);
                continue;
            };
            let inputs: Vec<&Tensor<T>> = node.parents.iter().map(|p| &p.0.value).collect();
            let needs: Vec<bool> = node.parents.iter().map(|p| p.0.requires_grad).collect();
            let input_grads = backward(&grad, &inputs, &node.value, &needs);
            debug_assert_eq!(input_grads.len(), node.parents.len());
            for (parent, g) in node.parents.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !parent.0.requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), parent.shape());
                match pending.get_mut(&parent.0.id) {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        pending.insert(parent.0.id, g);
                    }
                }
            }
        }
        Gradients { leaves }
    }
}

/// Leaf gradients produced by [`Var::backward`].
pub struct Gradients<T: Real = f32> {
    leaves: HashMap<u64, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a leaf, `None` if the loss does not depend on it.
    pub fn get(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        self.leaves.get(&var.0.id)
    }

    pub fn get_or_zeros(&self, var: &Var<T>) -> Tensor<T> {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let x = Var::param(Tensor::<f32>::new([3], vec![1.0, -2.0, 5.0]).unwrap());
        let g = x.sum().backward().unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sum_of_squares() {
        let x = Var::param(Tensor::<f32>::new([3], vec![1.0, 2.0, 3.0]).unwrap());
        let g = x.mul(&x).unwrap().sum().backward().unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let x = Var::param(Tensor::<f32>::zeros(&[2]));
        assert!(matches!(x.relu().backward(), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn unreached_leaf_is_zero() {
        let x = Var::param(Tensor::<f32>::ones(&[2]));
        let y = Var::param(Tensor::<f32>::ones(&[2]));
        let g = x.sum().backward().unwrap();
        assert!(g.get(&y).is_none());
        assert_eq!(g.get_or_zeros(&y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn tape_visits_each_op_once_in_reverse_order() {
        let x = Var::param(Tensor::<f64>::ones(&[4]));
        let a = x.scale(2.0);
        let b = a.mul(&a).unwrap();
        let c = b.add(&a).unwrap().sum();
        let tape = Tape::record(&c);
        let order = tape.order();
        assert_eq!(order.len(), 5);
        assert!(order.windows(2).all(|w| w[0] > w[1]));
        let g = c.backward().unwrap();
        // d/dx sum(4x^2 + 2x) = 8x + 2
        assert_eq!(g.get(&x).unwrap().data(), &[10.0; 4]);
    }

    #[test]
    fn constants_do_not_record() {
        let x = Var::constant(Tensor::<f32>::ones(&[2]));
        let y = x.relu().sum();
        assert!(!y.requires_grad());
        assert_eq!(Tape::record(&y).len(), 0);
    }
}
