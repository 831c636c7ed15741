//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation in execution order; [`Var`] is a
//! cheap handle to one recorded value. Calling [`Tape::backward`] on a
//! scalar replays the tape in reverse, visiting each recorded operation
//! once, and returns a [`Gradients`] table keyed by the same handles.
//!
//! Nodes only carry gradients when they (transitively) depend on a leaf
//! created with `requires_grad`. Attack loops mark the input as the only
//! such leaf; training marks the model parameters instead.
//!
//! ```
//! use trixlab::autodiff::Tape;
//! use trixlab::Tensor64;
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor64::vector(vec![1.0, -2.0, 3.0]).unwrap(), true);
//! let loss = x.relu().sum();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).unwrap().data(), &[1.0, 0.0, 1.0]);
//! ```

use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError, TensorResult};
use std::cell::RefCell;
use std::rc::Rc;

enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    AddRowBias(usize, usize),
    Relu(usize),
    LogSoftmax(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Sum(usize),
    /// Per-row `−logp[i, label_i]`.
    NllRows(usize, Vec<usize>),
    /// Per-row `Σ_c exp(lp) (lp − lq)` for two log-probability matrices.
    KlRows(usize, usize),
    /// `Σ_i weight_i · v_i`.
    WeightedSum(usize, Vec<T>),
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records operations for one forward pass. Not shareable across threads.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Var<'_, T> {}

impl<T> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).finish()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn tracks(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Backpropagates from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> TensorResult<Gradients<T>> {
        assert!(std::ptr::eq(loss.tape, self), "loss belongs to another tape");
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if !root.value.is_scalar() {
            return Err(TensorError::NotScalar(root.value.shape().to_vec()));
        }
        if !root.requires_grad {
            return Err(TensorError::Detached);
        }

        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(vec![T::one()]);

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let g = match &grads[id] {
                Some(g) => g.clone(),
                None => continue,
            };
            let shape = node.value.shape().to_vec();
            let g_t = Tensor::new(shape, g)?;
            for (input, contribution) in local_gradients(&nodes, node, &g_t)? {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(contribution) {
                            *a = *a + c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        let grads = grads
            .into_iter()
            .zip(nodes.iter())
            .map(|(g, node)| {
                g.map(|g| Tensor::new(node.value.shape().to_vec(), g))
                    .transpose()
            })
            .collect::<TensorResult<Vec<_>>>()?;
        Ok(Gradients { grads })
    }
}

/// Gradient contributions of one node to each of its inputs.
fn local_gradients<T: Scalar>(
    nodes: &[Node<T>],
    node: &Node<T>,
    g: &Tensor<T>,
) -> TensorResult<Vec<(usize, Vec<T>)>> {
    let val = |id: usize| -> &Tensor<T> { &nodes[id].value };
    let needs = |id: usize| nodes[id].requires_grad;
    let mut out = Vec::with_capacity(2);
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            if needs(*a) {
                out.push((*a, g.matmul_transposed(val(*b))?.into_data()));
            }
            if needs(*b) {
                out.push((*b, val(*a).transposed_matmul(g)?.into_data()));
            }
        }
        Op::AddRowBias(x, b) => {
            if needs(*x) {
                out.push((*x, g.data().to_vec()));
            }
            if needs(*b) {
                let n = g.cols();
                let mut db = vec![T::zero(); n];
                for i in 0..g.rows() {
                    for (d, &v) in db.iter_mut().zip(g.row(i)) {
                        *d = *d + v;
                    }
                }
                out.push((*b, db));
            }
        }
        Op::Relu(x) => {
            let dx = val(*x)
                .data()
                .iter()
                .zip(g.data())
                .map(|(&xv, &gv)| if xv > T::zero() { gv } else { T::zero() })
                .collect();
            out.push((*x, dx));
        }
        Op::LogSoftmax(x) => {
            let y = &node.value;
            let mut dx = Vec::with_capacity(y.len());
            for i in 0..y.rows() {
                let gi = g.row(i);
                let total: T = gi.iter().copied().sum();
                dx.extend(y.row(i).iter().zip(gi).map(|(&yv, &gv)| gv - yv.exp() * total));
            }
            out.push((*x, dx));
        }
        Op::Add(a, b) => {
            out.push((*a, g.data().to_vec()));
            out.push((*b, g.data().to_vec()));
        }
        Op::Sub(a, b) => {
            out.push((*a, g.data().to_vec()));
            out.push((*b, g.data().iter().map(|&v| -v).collect()));
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            out.push((*a, g.data().iter().zip(vb.data()).map(|(&gv, &bv)| gv * bv).collect()));
            out.push((*b, g.data().iter().zip(va.data()).map(|(&gv, &av)| gv * av).collect()));
        }
        Op::Scale(a, c) => {
            out.push((*a, g.data().iter().map(|&v| v * *c).collect()));
        }
        Op::Sum(a) => {
            out.push((*a, vec![g.item(); val(*a).len()]));
        }
        Op::NllRows(lp, labels) => {
            let c = val(*lp).cols();
            let mut d = vec![T::zero(); val(*lp).len()];
            for (i, &y) in labels.iter().enumerate() {
                d[i * c + y] = -g.data()[i];
            }
            out.push((*lp, d));
        }
        Op::KlRows(lp, lq) => {
            let (p, q) = (val(*lp), val(*lq));
            let c = p.cols();
            if needs(*lp) {
                let mut d = Vec::with_capacity(p.len());
                for i in 0..p.rows() {
                    let gi = g.data()[i];
                    for j in 0..c {
                        let (a, b) = (p.get(i, j), q.get(i, j));
                        d.push(gi * a.exp() * (a - b + T::one()));
                    }
                }
                out.push((*lp, d));
            }
            if needs(*lq) {
                let mut d = Vec::with_capacity(q.len());
                for i in 0..p.rows() {
                    let gi = g.data()[i];
                    d.extend(p.row(i).iter().map(|&a| -gi * a.exp()));
                }
                out.push((*lq, d));
            }
        }
        Op::WeightedSum(v, w) => {
            let gv = g.item();
            out.push((*v, w.iter().map(|&wi| gv * wi).collect()));
        }
    }
    Ok(out)
}

/// Gradients produced by one backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// `d(loss)/d(var)`, or `None` if `var` does not influence the loss
    /// through gradient-tracking nodes.
    pub fn wrt(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Value of a one-element variable.
    pub fn item(&self) -> T {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.tracks(self.id)
    }

    fn unary(self, value: Tensor<T>, op: Op<T>) -> Var<'t, T> {
        let rg = self.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn binary(self, other: Var<'t, T>, value: Tensor<T>, op: Op<T>) -> Var<'t, T> {
        assert!(std::ptr::eq(self.tape, other.tape), "operands recorded on different tapes");
        let rg = self.requires_grad() || other.requires_grad();
        self.tape.push(value, op, rg)
    }

    pub fn matmul(self, other: Var<'t, T>) -> TensorResult<Var<'t, T>> {
        let v = self.value().matmul(&other.value())?;
        Ok(self.binary(other, v, Op::MatMul(self.id, other.id)))
    }

    /// Adds a length-`n` bias to every row of an `[m×n]` matrix.
    pub fn add_row_bias(self, bias: Var<'t, T>) -> TensorResult<Var<'t, T>> {
        let v = self.value().add_row_vector(&bias.value())?;
        Ok(self.binary(bias, v, Op::AddRowBias(self.id, bias.id)))
    }

    pub fn relu(self) -> Var<'t, T> {
        let v = self.value().map(|x| if x > T::zero() { x } else { T::zero() });
        self.unary(v, Op::Relu(self.id))
    }

    pub fn log_softmax(self) -> TensorResult<Var<'t, T>> {
        let v = self.value().log_softmax_rows()?;
        Ok(self.unary(v, Op::LogSoftmax(self.id)))
    }

    pub fn add(self, other: Var<'t, T>) -> TensorResult<Var<'t, T>> {
        let v = self.value().zip_map(&other.value(), "add", |a, b| a + b)?;
        Ok(self.binary(other, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t, T>) -> TensorResult<Var<'t, T>> {
        let v = self.value().zip_map(&other.value(), "sub", |a, b| a - b)?;
        Ok(self.binary(other, v, Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'t, T>) -> TensorResult<Var<'t, T>> {
        let v = self.value().zip_map(&other.value(), "mul", |a, b| a * b)?;
        Ok(self.binary(other, v, Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        let v = self.value().map(|x| x * c);
        self.unary(v, Op::Scale(self.id, c))
    }

    pub fn sum(self) -> Var<'t, T> {
        let s = self.value().data().iter().copied().sum();
        self.unary(Tensor::scalar(s), Op::Sum(self.id))
    }

    /// `Σ_i weights[i] · self[i]` over a flat vector.
    pub fn weighted_sum(self, weights: &[T]) -> TensorResult<Var<'t, T>> {
        let v = self.value();
        if v.len() != weights.len() {
            return Err(TensorError::ShapeMismatch {
                op: "weighted_sum",
                left: v.shape().to_vec(),
                right: vec![weights.len()],
            });
        }
        let s = v.data().iter().zip(weights).map(|(&a, &w)| a * w).sum();
        Ok(self.unary(Tensor::scalar(s), Op::WeightedSum(self.id, weights.to_vec())))
    }

    /// `(1/n) Σ_i weights[i] · self[i]` where `n` is the vector length.
    pub fn weighted_mean(self, weights: &[T]) -> TensorResult<Var<'t, T>> {
        let n = T::from_usize_lossy(weights.len());
        let scaled: Vec<T> = weights.iter().map(|&w| w / n).collect();
        self.weighted_sum(&scaled)
    }

    pub fn mean(self) -> TensorResult<Var<'t, T>> {
        let n = self.value().len();
        self.weighted_mean(&vec![T::one(); n])
    }

    /// Per-row negative log-likelihood from a log-probability matrix.
    pub fn nll_rows(self, labels: &[usize]) -> TensorResult<Var<'t, T>> {
        let lp = self.value();
        let (b, c) = lp.dims2("nll_rows")?;
        if labels.len() != b {
            return Err(TensorError::ShapeMismatch {
                op: "nll_rows",
                left: lp.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let mut out = Vec::with_capacity(b);
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(TensorError::LabelOutOfRange {
                    row: i,
                    label: y,
                    classes: c,
                });
            }
            out.push(-lp.get(i, y));
        }
        Ok(self.unary(Tensor::vector(out)?, Op::NllRows(self.id, labels.to_vec())))
    }

    /// Per-row `KL(p_i ‖ q_i)` where `self` and `other` hold log-probabilities.
    pub fn kl_rows(self, other: Var<'t, T>) -> TensorResult<Var<'t, T>> {
        let (p, q) = (self.value(), other.value());
        p.same_shape(&q, "kl_rows")?;
        let (b, _) = p.dims2("kl_rows")?;
        let out = (0..b)
            .map(|i| {
                p.row(i)
                    .iter()
                    .zip(q.row(i))
                    .map(|(&a, &bq)| a.exp() * (a - bq))
                    .sum()
            })
            .collect();
        Ok(self.binary(other, Tensor::vector(out)?, Op::KlRows(self.id, other.id)))
    }
}

/// Mean cross-entropy of `logits` against `labels`.
pub fn cross_entropy<'t, T: Scalar>(logits: Var<'t, T>, labels: &[usize]) -> TensorResult<Var<'t, T>> {
    logits.log_softmax()?.nll_rows(labels)?.mean()
}

/// Per-sample cross-entropy.
pub fn cross_entropy_rows<'t, T: Scalar>(
    logits: Var<'t, T>,
    labels: &[usize],
) -> TensorResult<Var<'t, T>> {
    logits.log_softmax()?.nll_rows(labels)
}

/// Batch-mean `KL(softmax(p) ‖ softmax(q))`.
pub fn kl_divergence<'t, T: Scalar>(logits_p: Var<'t, T>, logits_q: Var<'t, T>) -> TensorResult<Var<'t, T>> {
    kl_divergence_rows(logits_p, logits_q)?.mean()
}

/// Per-sample `KL(softmax(p_i) ‖ softmax(q_i))`.
pub fn kl_divergence_rows<'t, T: Scalar>(
    logits_p: Var<'t, T>,
    logits_q: Var<'t, T>,
) -> TensorResult<Var<'t, T>> {
    logits_p.log_softmax()?.kl_rows(logits_q.log_softmax()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap(), true);
        let g = tape.backward(x.sum()).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn relu_forward_and_subgradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap(), true);
        let r = x.relu();
        assert_eq!(r.value().data(), &[0.0, 0.0, 2.0]);
        let g = tape.backward(r.sum()).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.0, 0.0, 1.0]);

        let neg = tape.constant(Tensor::vector(vec![-3.0, -0.5]).unwrap());
        assert!(neg.relu().value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_uses_accumulate() {
        // loss = sum(x) + sum(x * x); d/dx = 1 + 2x
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.5, -1.5]).unwrap(), true);
        let loss = x.sum().add(x.mul(x).unwrap().sum()).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[2.0, -2.0]);
    }

    #[test]
    fn backward_on_detached_is_an_error() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]).unwrap());
        assert_eq!(tape.backward(x.sum()).err(), Some(TensorError::Detached));
        let y = tape.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap(), true);
        assert!(matches!(tape.backward(y), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn log_softmax_of_zeros_is_minus_ln2() {
        let tape = Tape::new();
        let x = tape.constant(t(&[&[0.0, 0.0]]));
        let ls = x.log_softmax().unwrap().value();
        for &v in ls.data() {
            assert!((v + 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_values() {
        let tape = Tape::new();
        let ce = cross_entropy(tape.constant(t(&[&[0.0, 0.0]])), &[0]).unwrap();
        assert!((ce.item() - 2f64.ln()).abs() < 1e-15);
        let ce = cross_entropy(tape.constant(t(&[&[10.0, -10.0]])), &[0]).unwrap();
        assert!((ce.item() - (-20f64).exp().ln_1p()).abs() < 1e-15);
        assert!(ce.item() > 0.0 && ce.item() < 3e-9);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let tape = Tape::new();
        let err = cross_entropy(tape.constant(t(&[&[0.0, 0.0]])), &[2]).unwrap_err();
        assert!(matches!(err, TensorError::LabelOutOfRange { label: 2, .. }));
    }

    #[test]
    fn kl_hand_value() {
        // p = [0.5, 0.5], q = [0.9, 0.1] expressed as logits
        let tape = Tape::new();
        let p = tape.constant(t(&[&[0.0, 0.0]]));
        let q = tape.constant(t(&[&[0.9f64.ln(), 0.1f64.ln()]]));
        let kl = kl_divergence(p, q).unwrap().item();
        let expected = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((kl - expected).abs() < 1e-14);
        assert!((kl - 0.5108).abs() < 1e-4);
    }

    #[test]
    fn kl_of_identical_logits_is_zero() {
        let tape = Tape::new();
        let p = tape.constant(t(&[&[0.3, -1.2, 4.0], &[2.0, 2.0, -7.0]]));
        let kl = kl_divergence(p, p).unwrap().item();
        assert!(kl.abs() <= 1e-12);
    }

    #[test]
    fn untracked_branches_get_no_gradient() {
        let tape = Tape::new();
        let w = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let x = tape.leaf(t(&[&[1.0, 1.0]]), true);
        let loss = x.matmul(w).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        assert!(g.wrt(w).is_none());
        assert_eq!(g.wrt(x).unwrap().data(), &[3.0, 7.0]);
    }
}
