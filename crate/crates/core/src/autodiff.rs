//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node holding its output value and, when any
//! input requires a gradient, a backward rule mapping the upstream gradient
//! to per-input contributions. Nodes are appended in evaluation order, so a
//! single reverse sweep visits them topologically.
//!
//! Broadcasting is limited to the right-hand operand of binary ops: it must
//! either hold a single element or have the same rank as the left operand
//! with every extent equal or 1.

use crate::error::{Error, Result};
use crate::tensor::{numel, strides, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Maps the upstream gradient of a node to one contribution per input.
/// Receives the input values, the node's own output value and the gradient.
pub type BackwardFn<S> = Box<dyn Fn(&[&Tensor<S>], &Tensor<S>, &[S]) -> Vec<Option<Vec<S>>> + Send>;

struct Node<S> {
    op: &'static str,
    value: Tensor<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
    inputs: Vec<Var>,
    backward: Option<BackwardFn<S>>,
}

pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: "leaf",
            value,
            requires_grad,
            grad: None,
            inputs: Vec::new(),
            backward: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass; `None` for nodes that do not
    /// require one.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Moves the gradient of `v` out of the tape.
    pub fn take_grad(&mut self, v: Var) -> Option<Vec<S>> {
        self.nodes[v.0].grad.take()
    }

    /// Records an operation. The backward rule is dropped when no input
    /// requires a gradient.
    pub fn push_op<F>(&mut self, op: &'static str, value: Tensor<S>, inputs: &[Var], backward: F) -> Var
    where
        F: Fn(&[&Tensor<S>], &Tensor<S>, &[S]) -> Vec<Option<Vec<S>>> + Send + 'static,
    {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            grad: None,
            inputs: inputs.to_vec(),
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
        });
        Var(self.nodes.len() - 1)
    }

    /// Populates `grad` for every node that requires one. Nodes that do not
    /// lie on a path to `loss` receive an all-zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_shape = self.nodes[loss.0].value.shape().to_vec();
        if numel(&loss_shape) != 1 {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            self.fill_missing_grads();
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            if self.nodes[i].backward.is_none() {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = {
                let node = &self.nodes[i];
                let inputs: Vec<&Tensor<S>> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                (node.backward.as_ref().expect("checked above"))(&inputs, &node.value, &g)
            };
            self.nodes[i].grad = Some(g);
            let inputs = self.nodes[i].inputs.clone();
            debug_assert_eq!(inputs.len(), contributions.len(), "{}", self.nodes[i].op);
            for (input, contribution) in inputs.into_iter().zip(contributions) {
                let Some(c) = contribution else { continue };
                let target = &mut self.nodes[input.0];
                if !target.requires_grad {
                    continue;
                }
                debug_assert_eq!(c.len(), target.value.len());
                match &mut target.grad {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, b)| *a += *b),
                    slot @ None => *slot = Some(c),
                }
            }
        }
        self.fill_missing_grads();
        Ok(())
    }

    fn fill_missing_grads(&mut self) {
        for node in &mut self.nodes {
            if node.requires_grad && node.grad.is_none() {
                node.grad = Some(vec![S::zero(); node.value.len()]);
            }
        }
    }

    // ---- elementwise binary ------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(b);
        let offsets = broadcast_offsets(kind.name(), av.shape(), bv.shape())?;
        if kind == BinaryKind::Div && bv.data().iter().any(|v| v.is_zero()) {
            return Err(Error::DivisionByZero { op: "div" });
        }
        let (ad, bd) = (av.data(), bv.data());
        let out: Vec<S> = match &offsets {
            None => ad.iter().zip(bd).map(|(&x, &y)| kind.apply(x, y)).collect(),
            Some(off) => ad.iter().zip(off).map(|(&x, &o)| kind.apply(x, bd[o])).collect(),
        };
        let value = Tensor::from_parts(av.shape().to_vec(), out);
        Ok(self.push_op(kind.name(), value, &[a, b], move |inputs, _, g| {
            let (ad, bd) = (inputs[0].data(), inputs[1].data());
            let b_at = |i: usize| match &offsets {
                None => bd[i],
                Some(off) => bd[off[i]],
            };
            let ga: Vec<S> = match kind {
                BinaryKind::Add | BinaryKind::Sub => g.to_vec(),
                BinaryKind::Mul => g.iter().enumerate().map(|(i, &gi)| gi * b_at(i)).collect(),
                BinaryKind::Div => g.iter().enumerate().map(|(i, &gi)| gi / b_at(i)).collect(),
            };
            let mut gb = vec![S::zero(); bd.len()];
            for (i, &gi) in g.iter().enumerate() {
                let contribution = match kind {
                    BinaryKind::Add => gi,
                    BinaryKind::Sub => -gi,
                    BinaryKind::Mul => gi * ad[i],
                    BinaryKind::Div => {
                        let bi = b_at(i);
                        -gi * ad[i] / (bi * bi)
                    }
                };
                let o = match &offsets {
                    None => i,
                    Some(off) => off[i],
                };
                gb[o] += contribution;
            }
            vec![Some(ga), Some(gb)]
        }))
    }

    // ---- scalar and unary --------------------------------------------------

    pub fn scale(&mut self, a: Var, factor: S) -> Var {
        let value = self.value(a).map(|v| v * factor);
        self.push_op("scale", value, &[a], move |_, _, g| {
            vec![Some(g.iter().map(|&gi| gi * factor).collect())]
        })
    }

    pub fn add_scalar(&mut self, a: Var, offset: S) -> Var {
        let value = self.value(a).map(|v| v + offset);
        self.push_op("add_scalar", value, &[a], |_, _, g| vec![Some(g.to_vec())])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        self.push_op("square", value, &[a], |inputs, _, g| {
            let two = S::lit(2.0);
            vec![Some(inputs[0].data().iter().zip(g).map(|(&x, &gi)| two * x * gi).collect())]
        })
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.data().iter().any(|v| *v < S::zero()) {
            return Err(Error::InvalidArgument("sqrt of a negative value".into()));
        }
        let value = av.map(|v| v.sqrt());
        Ok(self.push_op("sqrt", value, &[a], |_, out, g| {
            let half = S::lit(0.5);
            vec![Some(out.data().iter().zip(g).map(|(&y, &gi)| gi * half / y).collect())]
        }))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.exp());
        self.push_op("exp", value, &[a], |_, out, g| {
            vec![Some(out.data().iter().zip(g).map(|(&y, &gi)| y * gi).collect())]
        })
    }

    // ---- reductions --------------------------------------------------------

    pub fn sum(&mut self, a: Var, axes: &[usize], keepdim: bool) -> Result<Var> {
        self.reduce(ReduceKind::Sum, a, axes, keepdim)
    }

    pub fn mean(&mut self, a: Var, axes: &[usize], keepdim: bool) -> Result<Var> {
        self.reduce(ReduceKind::Mean, a, axes, keepdim)
    }

    /// Population (1/N) variance over `axes`.
    pub fn var(&mut self, a: Var, axes: &[usize], keepdim: bool) -> Result<Var> {
        self.reduce(ReduceKind::Var, a, axes, keepdim)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let axes: Vec<usize> = (0..self.value(a).rank()).collect();
        self.reduce(ReduceKind::Sum, a, &axes, false)
            .expect("reducing over every axis of a valid tensor")
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let axes: Vec<usize> = (0..self.value(a).rank()).collect();
        self.reduce(ReduceKind::Mean, a, &axes, false)
            .expect("reducing over every axis of a valid tensor")
    }

    fn reduce(&mut self, kind: ReduceKind, a: Var, axes: &[usize], keepdim: bool) -> Result<Var> {
        let av = self.value(a);
        let shape = av.shape().to_vec();
        let plan = ReducePlan::new(kind.name(), &shape, axes)?;
        let count = S::lit(plan.count as f64);
        let mut acc = vec![S::zero(); plan.out_len];
        for (&x, &o) in av.data().iter().zip(&plan.offsets) {
            acc[o] += x;
        }
        let means: Vec<S> = acc.iter().map(|&s| s / count).collect();
        let out = match kind {
            ReduceKind::Sum => acc,
            ReduceKind::Mean => means.clone(),
            ReduceKind::Var => {
                let mut sq = vec![S::zero(); plan.out_len];
                for (&x, &o) in av.data().iter().zip(&plan.offsets) {
                    let d = x - means[o];
                    sq[o] += d * d;
                }
                sq.into_iter().map(|s| s / count).collect()
            }
        };
        let out_shape = if keepdim { plan.keep_shape.clone() } else { plan.squeezed_shape() };
        let value = Tensor::from_parts(out_shape, out);
        let offsets = plan.offsets;
        Ok(self.push_op(kind.name(), value, &[a], move |inputs, _, g| {
            let x = inputs[0].data();
            let grad: Vec<S> = match kind {
                ReduceKind::Sum => offsets.iter().map(|&o| g[o]).collect(),
                ReduceKind::Mean => offsets.iter().map(|&o| g[o] / count).collect(),
                ReduceKind::Var => {
                    let two = S::lit(2.0);
                    x.iter()
                        .zip(&offsets)
                        .map(|(&xi, &o)| two * (xi - means[o]) * g[o] / count)
                        .collect()
                }
            };
            vec![Some(grad)]
        }))
    }

    // ---- shape -------------------------------------------------------------

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape.to_vec())?;
        Ok(self.push_op("reshape", value, &[a], |_, _, g| vec![Some(g.to_vec())]))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let rank = av.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument(format!("permute: {perm:?} is not a permutation of rank {rank}")));
        }
        let in_strides = strides(av.shape());
        let out_shape: Vec<usize> = perm.iter().map(|&p| av.shape()[p]).collect();
        let gather_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        // source offset for each output element
        let source = strided_offsets(&out_shape, &gather_strides);
        let data = source.iter().map(|&s| av.data()[s]).collect();
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.push_op("permute", value, &[a], move |inputs, _, g| {
            let mut grad = vec![S::zero(); inputs[0].len()];
            for (&s, &gi) in source.iter().zip(g) {
                grad[s] = gi;
            }
            vec![Some(grad)]
        }))
    }

    /// Gathers rows along the leading axis; indices may repeat.
    pub fn index_select(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let rows = av.shape().first().copied().unwrap_or(1);
        if av.rank() == 0 || indices.is_empty() || indices.iter().any(|&i| i >= rows) {
            return Err(Error::InvalidArgument(format!(
                "index_select: indices {indices:?} out of range for leading extent {rows}"
            )));
        }
        let value = av.select_rows(indices);
        let indices = indices.to_vec();
        Ok(self.push_op("index_select", value, &[a], move |inputs, _, g| {
            let row = inputs[0].len() / inputs[0].shape()[0];
            let mut grad = vec![S::zero(); inputs[0].len()];
            for (k, &i) in indices.iter().enumerate() {
                let src = &g[k * row..(k + 1) * row];
                grad[i * row..(i + 1) * row].iter_mut().zip(src).for_each(|(d, &s)| *d += s);
            }
            vec![Some(grad)]
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryKind {
    fn name(self) -> &'static str {
        match self {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }

    #[inline]
    fn apply<S: Scalar>(self, x: S, y: S) -> S {
        match self {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
            BinaryKind::Div => x / y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReduceKind {
    Sum,
    Mean,
    Var,
}

impl ReduceKind {
    fn name(self) -> &'static str {
        match self {
            ReduceKind::Sum => "sum",
            ReduceKind::Mean => "mean",
            ReduceKind::Var => "var",
        }
    }
}

struct ReducePlan {
    keep_shape: Vec<usize>,
    reduced: Vec<bool>,
    offsets: Vec<usize>,
    out_len: usize,
    count: usize,
}

impl ReducePlan {
    fn new(op: &'static str, shape: &[usize], axes: &[usize]) -> Result<Self> {
        if axes.is_empty() && !shape.is_empty() {
            return Err(Error::EmptyReduction { op });
        }
        let mut reduced = vec![false; shape.len()];
        for &ax in axes {
            if ax >= shape.len() || reduced[ax] {
                return Err(Error::InvalidArgument(format!("{op}: invalid axes {axes:?} for shape {shape:?}")));
            }
            reduced[ax] = true;
        }
        let keep_shape: Vec<usize> = shape
            .iter()
            .zip(&reduced)
            .map(|(&e, &r)| if r { 1 } else { e })
            .collect();
        let count: usize = shape.iter().zip(&reduced).filter(|(_, &r)| r).map(|(&e, _)| e).product();
        if count == 0 {
            return Err(Error::EmptyReduction { op });
        }
        let out_strides: Vec<usize> = strides(&keep_shape)
            .into_iter()
            .zip(&reduced)
            .map(|(s, &r)| if r { 0 } else { s })
            .collect();
        let offsets = strided_offsets(shape, &out_strides);
        Ok(ReducePlan {
            out_len: numel(&keep_shape),
            keep_shape,
            reduced,
            offsets,
            count,
        })
    }

    fn squeezed_shape(&self) -> Vec<usize> {
        self.keep_shape
            .iter()
            .zip(&self.reduced)
            .filter(|(_, &r)| !r)
            .map(|(&e, _)| e)
            .collect()
    }
}

/// For every element of `shape` in row-major order, the offset
/// `Σ index[d] · strides[d]`.
pub(crate) fn strided_offsets(shape: &[usize], strides: &[usize]) -> Vec<usize> {
    let n = numel(shape);
    let mut out = Vec::with_capacity(n);
    if shape.is_empty() {
        out.push(0);
        return out;
    }
    let rank = shape.len();
    let last = rank - 1;
    let mut index = vec![0usize; rank];
    let mut base = 0usize;
    while out.len() < n {
        for i in 0..shape[last] {
            out.push(base + i * strides[last]);
        }
        // advance every axis except the innermost
        let mut d = last;
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            index[d] += 1;
            base += strides[d];
            if index[d] < shape[d] {
                break;
            }
            base -= index[d] * strides[d];
            index[d] = 0;
        }
    }
    out
}

/// `None` when shapes are equal; otherwise the right-operand offset of every
/// left-operand element.
fn broadcast_offsets(op: &'static str, a: &[usize], b: &[usize]) -> Result<Option<Vec<usize>>> {
    if a == b {
        return Ok(None);
    }
    if numel(b) == 1 {
        return Ok(Some(vec![0; numel(a)]));
    }
    let compatible = a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| x == y || y == 1);
    if !compatible {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        });
    }
    let b_strides: Vec<usize> = strides(b)
        .into_iter()
        .zip(b)
        .map(|(s, &e)| if e == 1 { 0 } else { s })
        .collect();
    Ok(Some(strided_offsets(a, &b_strides)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn add_and_scale_forward() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1.0, 2.0]));
        let b = tape.constant(t(&[2], &[3.0, 4.0]));
        let s = tape.add(a, b).unwrap();
        assert_eq!(tape.value(s).data(), &[4.0, 6.0]);
        let z = tape.scale(a, 0.0);
        assert_eq!(tape.value(z).data(), &[0.0, 0.0]);
    }

    #[test]
    fn mul_backward_is_product_rule() {
        let mut tape = Tape::new();
        let a = tape.param(t(&[2], &[2.0, 3.0]));
        let b = tape.param(t(&[2], &[4.0, 5.0]));
        let p = tape.mul(a, b).unwrap();
        assert_eq!(tape.value(p).data(), &[8.0, 15.0]);
        let loss = tape.sum_all(p);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[4.0, 5.0]);
        assert_eq!(tape.grad(b).unwrap(), &[2.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::<f64>::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::<f64>::zeros(vec![3, 2]));
        match tape.add(a, b) {
            Err(Error::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![3, 2]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn division_by_zero_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1.0, 2.0]));
        let b = tape.constant(t(&[2], &[1.0, 0.0]));
        assert!(matches!(tape.div(a, b), Err(Error::DivisionByZero { .. })));
    }

    #[test]
    fn broadcast_over_size_one_extents() {
        let mut tape = Tape::new();
        let a = tape.param(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = tape.param(t(&[2, 1], &[10.0, 20.0]));
        let s = tape.mul(a, b).unwrap();
        assert_eq!(tape.value(s).data(), &[10.0, 20.0, 30.0, 80.0, 100.0, 120.0]);
        let loss = tape.sum_all(s);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(b).unwrap(), &[6.0, 15.0]);
        assert_eq!(tape.grad(a).unwrap(), &[10.0, 10.0, 10.0, 20.0, 20.0, 20.0]);
    }

    #[test]
    fn reductions() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[1.0, 2.0, 3.0]));
        let m = tape.mean_all(x);
        assert_eq!(tape.value(m).item(), 2.0);
        let v = tape.var(x, &[0], false).unwrap();
        assert!((tape.value(v).item() - 2.0 / 3.0).abs() < 1e-15);
        let z = tape.constant(Tensor::<f64>::zeros(vec![4, 2]));
        let s = tape.sum_all(z);
        assert_eq!(tape.value(s).item(), 0.0);
    }

    #[test]
    fn reduction_over_inner_axis_keeps_dims() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 6.0, 8.0]));
        let m = tape.mean(x, &[1], true).unwrap();
        assert_eq!(tape.shape(m), &[2, 1]);
        assert_eq!(tape.value(m).data(), &[2.0, 6.0]);
        assert!(tape.mean(x, &[], true).is_err());
        assert!(tape.mean(x, &[2], true).is_err());
    }

    #[test]
    fn sum_backward_is_all_ones() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[3], &[0.3, -1.0, 7.0]));
        let loss = tape.sum_all(x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn mean_of_squares_backward() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let sq = tape.square(x);
        let loss = tape.mean_all(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn detached_and_off_path_nodes() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let c = tape.constant(t(&[2], &[5.0, 5.0]));
        let unused = tape.param(t(&[1], &[9.0]));
        let p = tape.mul(x, c).unwrap();
        let loss = tape.sum_all(p);
        tape.backward(loss).unwrap();
        assert!(tape.grad(c).is_none());
        assert_eq!(tape.grad(unused).unwrap(), &[0.0]);
        assert_eq!(tape.grad(x).unwrap(), &[5.0, 5.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn permute_and_index_select() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2, 3], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]));
        let p = tape.permute(x, &[1, 0]).unwrap();
        assert_eq!(tape.shape(p), &[3, 2]);
        assert_eq!(tape.value(p).data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        let r = tape.index_select(x, &[1, 1, 0]).unwrap();
        assert_eq!(tape.value(r).data(), &[3.0, 4.0, 5.0, 3.0, 4.0, 5.0, 0.0, 1.0, 2.0]);
        let loss = tape.sum_all(r);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn strided_offsets_three_dims() {
        let off = strided_offsets(&[2, 2, 3], &[6, 3, 1]);
        assert_eq!(off, (0..12).collect::<Vec<_>>());
        let bcast = strided_offsets(&[2, 2, 3], &[2, 1, 0]);
        assert_eq!(bcast, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
    }
}
