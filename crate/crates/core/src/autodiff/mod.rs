//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is a topologically ordered list of nodes. Values are computed
//! eagerly as nodes are appended, and [`Graph::eval`] replays the whole list
//! against new leaf bindings. Backward rules are themselves expressed with
//! graph ops, so the gradient nodes appended by [`Graph::grad`] can be
//! differentiated again. That is what a gradient penalty needs.

pub mod cases;
mod check;
pub mod kernels;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

pub use check::{finite_diff_oracle, gradient_check};
pub use kernels::ConvGeom;

use crate::error::{Error, Result};
use crate::tensor::{numel, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Param(String),
    Input(String),
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Scale(f64),
    AddScalar(f64),
    MatMul,
    Transpose,
    Conv2d(ConvGeom),
    ConvBackInput {
        geom: ConvGeom,
        in_hw: (usize, usize),
    },
    ConvBackWeight {
        geom: ConvGeom,
        kernel: (usize, usize),
    },
    Upsample2x,
    SumPool2x,
    SumTo(Vec<usize>),
    BroadcastTo(Vec<usize>),
    Reshape(Vec<usize>),
    Permute(Vec<usize>),
    Concat(usize),
    Slice {
        axis: usize,
        start: usize,
        len: usize,
    },
    Embed {
        axis: usize,
        start: usize,
        full: usize,
    },
    Square,
    Sqrt,
    Tanh,
    Relu,
    Abs,
    /// `1` where the input is positive, else `0`. Piecewise constant, no gradient.
    Step,
    /// Sign of the input (`0` at zero). Piecewise constant, no gradient.
    Sign,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Input(_) => "input",
            Op::Const => "const",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Conv2d(_) => "conv2d",
            Op::ConvBackInput { .. } => "conv2d_back_input",
            Op::ConvBackWeight { .. } => "conv2d_back_weight",
            Op::Upsample2x => "upsample2x",
            Op::SumPool2x => "sum_pool2x",
            Op::SumTo(_) => "sum_to",
            Op::BroadcastTo(_) => "broadcast_to",
            Op::Reshape(_) => "reshape",
            Op::Permute(_) => "permute",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
            Op::Embed { .. } => "embed",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::Abs => "abs",
            Op::Step => "step",
            Op::Sign => "sign",
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, Op::Param(_) | Op::Input(_) | Op::Const)
    }

    fn propagates(&self) -> bool {
        !matches!(self, Op::Const | Op::Step | Op::Sign)
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    leaves: BTreeMap<String, NodeId>,
    higher_order: bool,
    first_nonfinite: Option<usize>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn forward<T: Real>(op: &Op, x: &[&Tensor<T>]) -> Tensor<T> {
    use kernels as k;
    let unary = |f: &dyn Fn(T) -> T| x[0].map(f);
    match op {
        Op::Param(_) | Op::Input(_) | Op::Const => unreachable!("leaves are not recomputed"),
        Op::Add => k::zip(x[0], x[1], |a, b| a + b),
        Op::Sub => k::zip(x[0], x[1], |a, b| a - b),
        Op::Mul => k::zip(x[0], x[1], |a, b| a * b),
        Op::Div => k::zip(x[0], x[1], |a, b| a / b),
        Op::Scale(c) => {
            let c = T::from_f64(*c);
            unary(&|v| v * c)
        }
        Op::AddScalar(c) => {
            let c = T::from_f64(*c);
            unary(&|v| v + c)
        }
        Op::MatMul => k::matmul(x[0], x[1]),
        Op::Transpose => k::transpose(x[0]),
        Op::Conv2d(geom) => k::conv2d(x[0], x[1], *geom),
        Op::ConvBackInput { geom, in_hw } => k::conv2d_back_input(x[0], x[1], *geom, *in_hw),
        Op::ConvBackWeight { geom, kernel } => k::conv2d_back_weight(x[0], x[1], *geom, *kernel),
        Op::Upsample2x => k::upsample2x(x[0]),
        Op::SumPool2x => k::sum_pool2x(x[0]),
        Op::SumTo(s) => k::sum_to(x[0], s),
        Op::BroadcastTo(s) => k::broadcast_to(x[0], s),
        Op::Reshape(s) => Tensor::from_parts(s.clone(), x[0].data().to_vec()),
        Op::Permute(p) => k::permute(x[0], p),
        Op::Concat(axis) => k::concat(x, *axis),
        Op::Slice { axis, start, len } => k::slice(x[0], *axis, *start, *len),
        Op::Embed { axis, start, full } => k::embed(x[0], *axis, *start, *full),
        Op::Square => unary(&|v| v * v),
        Op::Sqrt => unary(&|v| v.sqrt()),
        Op::Tanh => unary(&|v| v.tanh()),
        Op::Relu => unary(&|v| if v > T::ZERO { v } else { T::ZERO }),
        Op::Abs => unary(&|v| v.abs()),
        Op::Step => unary(&|v| if v > T::ZERO { T::ONE } else { T::ZERO }),
        Op::Sign => unary(&|v| {
            if v > T::ZERO {
                T::ONE
            } else if v < T::ZERO {
                -T::ONE
            } else {
                T::ZERO
            }
        }),
    }
}

fn invert_permutation(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &v) in p.iter().enumerate() {
        inv[v] = i;
    }
    inv
}

impl<T: Real> Graph<T> {
    /// A graph whose backward pass does not keep its gradient nodes.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaves: BTreeMap::new(),
            higher_order: false,
            first_nonfinite: None,
        }
    }

    /// A graph that records gradient nodes so they can be differentiated again.
    pub fn with_higher_order() -> Self {
        Self {
            higher_order: true,
            ..Self::new()
        }
    }

    pub fn is_higher_order(&self) -> bool {
        self.higher_order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    /// Ops of every node in order.
    pub fn ops(&self) -> impl Iterator<Item = &Op> + '_ {
        self.nodes.iter().map(|n| &n.op)
    }

    pub fn leaf(&self, name: &str) -> Option<NodeId> {
        self.leaves.get(name).copied()
    }

    /// Names and ids of all parameter leaves.
    pub fn params(&self) -> impl Iterator<Item = (&str, NodeId)> + '_ {
        self.leaves
            .iter()
            .filter(|(_, id)| matches!(self.nodes[id.0].op, Op::Param(_)))
            .map(|(n, id)| (n.as_str(), *id))
    }

    /// First node (in build order) whose value was not finite, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.first_nonfinite {
            Some(node) => Err(Error::NonFinite {
                node,
                op: self.nodes[node].op.name(),
            }),
            None => Ok(()),
        }
    }

    fn push_leaf(&mut self, op: Op, value: Tensor<T>) -> NodeId {
        let id = NodeId(self.nodes.len());
        if let Op::Param(name) | Op::Input(name) = &op {
            let prev = self.leaves.insert(name.clone(), id);
            assert!(prev.is_none(), "duplicate leaf name `{name}`");
        }
        if self.first_nonfinite.is_none() && !value.is_finite() {
            self.first_nonfinite = Some(id.0);
        }
        self.nodes.push(Node {
            op,
            inputs: Vec::new(),
            value,
        });
        id
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>) -> NodeId {
        let value = {
            let vals: Vec<&Tensor<T>> = inputs.iter().map(|i| &self.nodes[i.0].value).collect();
            forward(&op, &vals)
        };
        let id = NodeId(self.nodes.len());
        if self.first_nonfinite.is_none() && !value.is_finite() {
            self.first_nonfinite = Some(id.0);
        }
        self.nodes.push(Node { op, inputs, value });
        id
    }

    pub fn param(&mut self, name: &str, value: Tensor<T>) -> NodeId {
        self.push_leaf(Op::Param(name.to_string()), value)
    }

    /// A named placeholder. `value` fixes its shape and serves as the initial binding.
    pub fn input(&mut self, name: &str, value: Tensor<T>) -> NodeId {
        self.push_leaf(Op::Input(name.to_string()), value)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push_leaf(Op::Const, value)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{what}: operand shapes differ"
        );
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_shape(a, b, "add");
        self.push(Op::Add, vec![a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_shape(a, b, "sub");
        self.push(Op::Sub, vec![a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_shape(a, b, "mul");
        self.push(Op::Mul, vec![a, b])
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_shape(a, b, "div");
        self.push(Op::Div, vec![a, b])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::Scale(c), vec![a])
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::AddScalar(c), vec![a])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert!(
            sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0],
            "matmul: {sa:?} x {sb:?}"
        );
        self.push(Op::MatMul, vec![a, b])
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        assert_eq!(self.shape(a).len(), 2, "transpose needs a matrix");
        self.push(Op::Transpose, vec![a])
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: usize, pad: usize) -> NodeId {
        let (sx, sw) = (self.shape(x), self.shape(w));
        assert!(
            sx.len() == 4 && sw.len() == 4 && sx[1] == sw[1],
            "conv2d: {sx:?} * {sw:?}"
        );
        assert!(
            stride >= 1 && sx[2] + 2 * pad >= sw[2] && sx[3] + 2 * pad >= sw[3],
            "conv2d: kernel larger than input"
        );
        self.push(Op::Conv2d(ConvGeom { stride, pad }), vec![x, w])
    }

    fn conv_back_input(
        &mut self,
        g: NodeId,
        w: NodeId,
        geom: ConvGeom,
        in_hw: (usize, usize),
    ) -> NodeId {
        self.push(Op::ConvBackInput { geom, in_hw }, vec![g, w])
    }

    fn conv_back_weight(
        &mut self,
        x: NodeId,
        g: NodeId,
        geom: ConvGeom,
        kernel: (usize, usize),
    ) -> NodeId {
        self.push(Op::ConvBackWeight { geom, kernel }, vec![x, g])
    }

    pub fn upsample2x(&mut self, x: NodeId) -> NodeId {
        assert_eq!(self.shape(x).len(), 4, "upsample2x needs NCHW");
        self.push(Op::Upsample2x, vec![x])
    }

    pub fn sum_pool2x(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        assert!(
            s.len() == 4 && s[2].is_multiple_of(2) && s[3].is_multiple_of(2),
            "sum_pool2x needs even NCHW, got {s:?}"
        );
        self.push(Op::SumPool2x, vec![x])
    }

    /// Sums over every axis where `target` is 1; ranks must agree.
    pub fn sum_to(&mut self, x: NodeId, target: &[usize]) -> NodeId {
        let s = self.shape(x);
        assert!(
            s.len() == target.len() && s.iter().zip(target).all(|(&a, &b)| a == b || b == 1),
            "sum_to: {s:?} -> {target:?}"
        );
        self.push(Op::SumTo(target.to_vec()), vec![x])
    }

    /// Repeats every axis of extent 1 up to `target`; ranks must agree.
    pub fn broadcast_to(&mut self, x: NodeId, target: &[usize]) -> NodeId {
        let s = self.shape(x);
        if s == target {
            return x;
        }
        assert!(
            s.len() == target.len() && s.iter().zip(target).all(|(&a, &b)| a == b || a == 1),
            "broadcast_to: {s:?} -> {target:?}"
        );
        self.push(Op::BroadcastTo(target.to_vec()), vec![x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        assert_eq!(
            numel(self.shape(x)),
            numel(shape),
            "reshape: {:?} -> {shape:?}",
            self.shape(x)
        );
        self.push(Op::Reshape(shape.to_vec()), vec![x])
    }

    pub fn permute(&mut self, x: NodeId, perm: &[usize]) -> NodeId {
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        assert!(
            sorted.iter().enumerate().all(|(i, &p)| i == p) && perm.len() == self.shape(x).len(),
            "permute: bad permutation {perm:?}"
        );
        self.push(Op::Permute(perm.to_vec()), vec![x])
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> NodeId {
        let first = self.shape(parts[0]).to_vec();
        for p in parts {
            let s = self.shape(*p);
            assert!(
                s.len() == first.len() && (0..s.len()).all(|a| a == axis || s[a] == first[a]),
                "concat: {s:?} vs {first:?} along {axis}"
            );
        }
        self.push(Op::Concat(axis), parts.to_vec())
    }

    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> NodeId {
        assert!(
            start + len <= self.shape(x)[axis] && len > 0,
            "slice out of range"
        );
        self.push(Op::Slice { axis, start, len }, vec![x])
    }

    fn embed(&mut self, x: NodeId, axis: usize, start: usize, full: usize) -> NodeId {
        self.push(Op::Embed { axis, start, full }, vec![x])
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Square, vec![x])
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sqrt, vec![x])
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Tanh, vec![x])
    }

    /// Rectifier; the subgradient at zero is zero.
    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Relu, vec![x])
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Abs, vec![x])
    }

    fn step(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Step, vec![x])
    }

    fn sign(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sign, vec![x])
    }

    /// Sum of every element, shape `[1]`.
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let ones = vec![1; self.shape(x).len()];
        let s = self.sum_to(x, &ones);
        self.reshape(s, &[1])
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = numel(self.shape(x));
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Euclidean norm over every axis from `from_axis` on, giving `[leading, 1]`.
    /// `eps` is added under the root to keep the derivative finite at zero.
    pub fn l2_norm_trailing(&mut self, x: NodeId, from_axis: usize, eps: f64) -> NodeId {
        let s = self.shape(x);
        let lead = numel(&s[..from_axis]);
        let trail = numel(&s[from_axis..]);
        let flat = self.reshape(x, &[lead, trail]);
        let sq = self.square(flat);
        let ss = self.sum_to(sq, &[lead, 1]);
        let ss = if eps > 0.0 {
            self.add_scalar(ss, eps)
        } else {
            ss
        };
        self.sqrt(ss)
    }

    /// `x [b,in] * w[out,in]^T + bias[out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, bias: Option<NodeId>) -> NodeId {
        let wt = self.transpose(w);
        let y = self.matmul(x, wt);
        match bias {
            Some(b) => {
                let out = self.shape(y).to_vec();
                let b2 = self.reshape(b, &[1, out[1]]);
                let bb = self.broadcast_to(b2, &out);
                self.add(y, bb)
            }
            None => y,
        }
    }

    /// Adds `b` to `a`, broadcasting `b` (same rank, extent-1 axes) up to `a`'s shape.
    pub fn add_broadcast(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let target = self.shape(a).to_vec();
        let bb = self.broadcast_to(b, &target);
        self.add(a, bb)
    }

    pub fn mul_broadcast(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let target = self.shape(a).to_vec();
        let bb = self.broadcast_to(b, &target);
        self.mul(a, bb)
    }

    /// A constant holding the current value of `x`; gradients stop here.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).clone();
        self.constant(v)
    }

    /// Rebinds leaves and recomputes every non-leaf node in order.
    ///
    /// Every input placeholder must be bound; parameters may optionally be
    /// rebound (which is how finite-difference checks perturb them).
    pub fn eval(&mut self, bindings: &BTreeMap<String, Tensor<T>>) -> Result<()> {
        for (name, id) in &self.leaves {
            let node = &self.nodes[id.0];
            match bindings.get(name) {
                Some(t) if t.shape() != node.value.shape() => {
                    return Err(Error::Shape(alloc::format!(
                        "binding `{name}` has shape {:?}, declared {:?}",
                        t.shape(),
                        node.value.shape()
                    )))
                }
                None if matches!(node.op, Op::Input(_)) => {
                    return Err(Error::Unbound(name.clone()))
                }
                _ => {}
            }
        }
        if let Some(name) = bindings.keys().find(|n| !self.leaves.contains_key(*n)) {
            return Err(Error::Invalid(alloc::format!("no leaf named `{name}`")));
        }
        for (name, t) in bindings {
            let id = self.leaves[name];
            self.nodes[id.0].value = t.clone();
        }
        self.first_nonfinite = None;
        for i in 0..self.nodes.len() {
            if self.nodes[i].op.is_leaf() {
                if !self.nodes[i].value.is_finite() {
                    self.first_nonfinite.get_or_insert(i);
                }
                continue;
            }
            let value = {
                let node = &self.nodes[i];
                let vals: Vec<&Tensor<T>> =
                    node.inputs.iter().map(|j| &self.nodes[j.0].value).collect();
                forward(&node.op, &vals)
            };
            if !value.is_finite() {
                self.first_nonfinite.get_or_insert(i);
            }
            self.nodes[i].value = value;
        }
        self.check_finite()
    }

    /// Binds, evaluates, and returns the requested node values.
    pub fn eval_outputs(
        &mut self,
        bindings: &BTreeMap<String, Tensor<T>>,
        outputs: &[NodeId],
    ) -> Result<Vec<Tensor<T>>> {
        self.eval(bindings)?;
        Ok(outputs.iter().map(|o| self.value(*o).clone()).collect())
    }

    /// Gradient nodes of scalar `output` with respect to `wrt`, appended to the
    /// graph so they can be differentiated again. Needs [`Graph::with_higher_order`].
    pub fn grad(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        if !self.higher_order {
            return Err(Error::HigherOrderDisabled);
        }
        self.backward(output, wrt)
    }

    /// Gradient values of scalar `output` with respect to `wrt`. The nodes
    /// created for the backward pass are discarded afterwards.
    pub fn gradients(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<Tensor<T>>> {
        let mark = self.nodes.len();
        let ids = self.backward(output, wrt)?;
        let out = ids.iter().map(|id| self.value(*id).clone()).collect();
        self.nodes.truncate(mark);
        if self.first_nonfinite.is_some_and(|n| n >= mark) {
            self.first_nonfinite = None;
        }
        Ok(out)
    }

    fn backward(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        let out_shape = self.shape(output).to_vec();
        if numel(&out_shape) != 1 {
            return Err(Error::NotScalar(out_shape));
        }
        self.check_finite()?;
        let last = output.0;
        let mut needs = vec![false; last + 1];
        for w in wrt {
            if w.0 <= last {
                needs[w.0] = true;
            }
        }
        for i in 0..=last {
            let node = &self.nodes[i];
            if !needs[i] && node.op.propagates() && node.inputs.iter().any(|j| needs[j.0]) {
                needs[i] = true;
            }
        }
        let mut grads: Vec<Option<NodeId>> = vec![None; last + 1];
        if needs[last] {
            grads[last] = Some(self.constant(Tensor::ones(&out_shape)));
        }
        for i in (0..=last).rev() {
            let Some(g) = grads[i] else { continue };
            if self.nodes[i].op.is_leaf() {
                continue;
            }
            let inputs = self.nodes[i].inputs.clone();
            let mask: Vec<bool> = inputs.iter().map(|j| needs[j.0]).collect();
            let contrib = self.vjp(NodeId(i), g, &mask);
            for ((inp, c), want) in inputs.iter().zip(contrib).zip(&mask) {
                let (Some(c), true) = (c, *want) else {
                    continue;
                };
                grads[inp.0] = Some(match grads[inp.0] {
                    None => c,
                    Some(prev) => self.add(prev, c),
                });
            }
        }
        let res = wrt
            .iter()
            .map(|w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.shape(*w).to_vec();
                    self.constant(Tensor::zeros(&shape))
                }
            })
            .collect();
        Ok(res)
    }

    /// Vector-Jacobian products of node `id` for upstream gradient `g`, only
    /// for inputs flagged in `want`. Every rule is built from graph ops.
    fn vjp(&mut self, id: NodeId, g: NodeId, want: &[bool]) -> Vec<Option<NodeId>> {
        let op = self.nodes[id.0].op.clone();
        let inputs = self.nodes[id.0].inputs.clone();
        let in_shape = |s: &Self, k: usize| s.shape(inputs[k]).to_vec();
        let w = |k: usize| want.get(k).copied().unwrap_or(false);
        match op {
            Op::Param(_) | Op::Input(_) | Op::Const | Op::Step | Op::Sign => {
                vec![None; inputs.len()]
            }
            Op::Add => vec![Some(g), Some(g)],
            Op::Sub => {
                let gb = w(1).then(|| self.scale(g, -1.0));
                vec![Some(g), gb]
            }
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                let ga = w(0).then(|| self.mul(g, b));
                let gb = w(1).then(|| self.mul(g, a));
                vec![ga, gb]
            }
            Op::Div => {
                let b = inputs[1];
                let ga = w(0).then(|| self.div(g, b));
                let gb = w(1).then(|| {
                    let gy = self.mul(g, id);
                    let q = self.div(gy, b);
                    self.scale(q, -1.0)
                });
                vec![ga, gb]
            }
            Op::Scale(c) => vec![Some(self.scale(g, c))],
            Op::AddScalar(_) => vec![Some(g)],
            Op::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let ga = w(0).then(|| {
                    let bt = self.transpose(b);
                    self.matmul(g, bt)
                });
                let gb = w(1).then(|| {
                    let at = self.transpose(a);
                    self.matmul(at, g)
                });
                vec![ga, gb]
            }
            Op::Transpose => vec![Some(self.transpose(g))],
            Op::Conv2d(geom) => {
                let (x, wt) = (inputs[0], inputs[1]);
                let xs = in_shape(self, 0);
                let ws = in_shape(self, 1);
                let gx = w(0).then(|| self.conv_back_input(g, wt, geom, (xs[2], xs[3])));
                let gw = w(1).then(|| self.conv_back_weight(x, g, geom, (ws[2], ws[3])));
                vec![gx, gw]
            }
            Op::ConvBackInput { geom, .. } => {
                // output is x-shaped; inputs are (upstream g_in, weight)
                let (g_in, wt) = (inputs[0], inputs[1]);
                let ws = in_shape(self, 1);
                let gg = w(0).then(|| self.push(Op::Conv2d(geom), vec![g, wt]));
                let gw = w(1).then(|| self.conv_back_weight(g, g_in, geom, (ws[2], ws[3])));
                vec![gg, gw]
            }
            Op::ConvBackWeight { geom, .. } => {
                // output is w-shaped; inputs are (x, upstream g_in)
                let (x, g_in) = (inputs[0], inputs[1]);
                let xs = in_shape(self, 0);
                let gx = w(0).then(|| self.conv_back_input(g_in, g, geom, (xs[2], xs[3])));
                let gg = w(1).then(|| self.push(Op::Conv2d(geom), vec![x, g]));
                vec![gx, gg]
            }
            Op::Upsample2x => vec![Some(self.sum_pool2x(g))],
            Op::SumPool2x => vec![Some(self.upsample2x(g))],
            Op::SumTo(_) => {
                let s = in_shape(self, 0);
                vec![Some(self.broadcast_to(g, &s))]
            }
            Op::BroadcastTo(_) => {
                let s = in_shape(self, 0);
                vec![Some(self.sum_to(g, &s))]
            }
            Op::Reshape(_) => {
                let s = in_shape(self, 0);
                vec![Some(self.reshape(g, &s))]
            }
            Op::Permute(p) => vec![Some(self.permute(g, &invert_permutation(&p)))],
            Op::Concat(axis) => {
                let mut offset = 0;
                let mut out = Vec::with_capacity(inputs.len());
                for (k, &input) in inputs.iter().enumerate() {
                    let len = self.shape(input)[axis];
                    out.push(w(k).then(|| self.slice(g, axis, offset, len)));
                    offset += len;
                }
                out
            }
            Op::Slice { axis, start, .. } => {
                let full = self.shape(inputs[0])[axis];
                vec![Some(self.embed(g, axis, start, full))]
            }
            Op::Embed { axis, start, .. } => {
                let len = self.shape(inputs[0])[axis];
                vec![Some(self.slice(g, axis, start, len))]
            }
            Op::Square => {
                let two_x = self.scale(inputs[0], 2.0);
                vec![Some(self.mul(g, two_x))]
            }
            Op::Sqrt => {
                let half = self.scale(g, 0.5);
                vec![Some(self.div(half, id))]
            }
            Op::Tanh => {
                let y2 = self.square(id);
                let neg = self.scale(y2, -1.0);
                let d = self.add_scalar(neg, 1.0);
                vec![Some(self.mul(g, d))]
            }
            Op::Relu => {
                let mask = self.step(inputs[0]);
                vec![Some(self.mul(g, mask))]
            }
            Op::Abs => {
                let s = self.sign(inputs[0]);
                vec![Some(self.mul(g, s))]
            }
        }
    }
}
