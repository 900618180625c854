use std::collections::BTreeMap;
use std::fmt;

use crate::error::{GraphError, Result};
use crate::tensor::{broadcast_shapes, numel, Tensor};

/// Index of a node inside its [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node#{}", self.0)
    }
}

/// Unary elementwise functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Neg,
    /// exp(min(x, [`crate::EXP_CLAMP`]))
    Exp,
    /// log(max(x, [`crate::LOG_FLOOR`]))
    Log,
    Tanh,
    Sigmoid,
    Cos,
    /// log(cosh(x)), evaluated without overflow.
    LogCosh,
    /// log I₀(x), x ≥ 0.
    LogBesselI0,
    Scale(f64),
    Offset(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    Max,
    Min,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Input(String),
    Param(String),
    Const(Tensor),
    Unary(Unary),
    Binary(Binary),
    /// W [m, n] · x [n]
    MatVec,
    Concat { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    Reshape,
    BroadcastTo,
    Softmax { axis: usize },
    LogSumExp { axis: usize },
    /// Reduction along one axis, kept with length 1.
    ReduceAxis { kind: Reduce, axis: usize },
    /// Reduction over every element to a scalar.
    ReduceAll(Reduce),
    /// x [Cin, H, W] ⋆ k [Cout, Cin, kh, kw] cross-correlation, "same" zero padding.
    Conv2d,
    /// 180° rotation of the two trailing axes.
    Flip2d,
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct ParamDecl {
    pub node: NodeId,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

/// Static computation graph.
///
/// Nodes are appended in topological order by the builder methods; every
/// node's inputs precede it. Leaves are named inputs (bound per call to
/// [`Graph::forward`]), named parameters (looked up in a
/// [`crate::ParamStore`]) and constants.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    pub(crate) inputs: BTreeMap<String, NodeId>,
    pub(crate) params: BTreeMap<String, ParamDecl>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, node: NodeId) -> &[usize] {
        &self.nodes[node.0].shape
    }

    /// Names of all declared parameters, with their trainable flag.
    pub fn parameters(&self) -> impl Iterator<Item = (&str, &[usize], bool)> {
        self.params
            .iter()
            .map(|(k, d)| (k.as_str(), d.shape.as_slice(), d.trainable))
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.keys().map(String::as_str)
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, shape: Vec<usize>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, shape });
        id
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if node.0 >= self.nodes.len() {
            return Err(GraphError::InvalidOperand {
                op: "node",
                reason: format!("{node} does not exist"),
            });
        }
        Ok(())
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        if self.inputs.contains_key(name) {
            return Err(GraphError::DuplicateName(name.to_owned()));
        }
        let id = self.push(Op::Input(name.to_owned()), vec![], shape.to_vec());
        self.inputs.insert(name.to_owned(), id);
        Ok(id)
    }

    /// Trainable parameter leaf. Declaring the same name twice with the same
    /// shape returns the existing node, so sub-builders can share weights.
    pub fn param(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        self.param_with(name, shape, true)
    }

    /// Parameter leaf excluded from gradients.
    pub fn frozen_param(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        self.param_with(name, shape, false)
    }

    fn param_with(&mut self, name: &str, shape: &[usize], trainable: bool) -> Result<NodeId> {
        if let Some(decl) = self.params.get(name) {
            if decl.shape != shape || decl.trainable != trainable {
                return Err(GraphError::DuplicateName(name.to_owned()));
            }
            return Ok(decl.node);
        }
        let id = self.push(Op::Param(name.to_owned()), vec![], shape.to_vec());
        self.params.insert(
            name.to_owned(),
            ParamDecl {
                node: id,
                shape: shape.to_vec(),
                trainable,
            },
        );
        Ok(id)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(Op::Const(value), vec![], shape)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    // ---- elementwise ------------------------------------------------------

    pub fn unary(&mut self, f: Unary, x: NodeId) -> Result<NodeId> {
        self.check_node(x)?;
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::Unary(f), vec![x], shape))
    }

    pub fn neg(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Unary::Neg, x)
    }
    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Unary::Exp, x)
    }
    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Unary::Log, x)
    }
    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Unary::Tanh, x)
    }
    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Unary::Sigmoid, x)
    }
    pub fn cos(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Unary::Cos, x)
    }
    pub fn log_cosh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Unary::LogCosh, x)
    }
    pub fn log_bessel_i0(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Unary::LogBesselI0, x)
    }
    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        self.unary(Unary::Scale(factor), x)
    }
    pub fn offset(&mut self, x: NodeId, delta: f64) -> Result<NodeId> {
        self.unary(Unary::Offset(delta), x)
    }

    /// Binary elementwise op; operands are broadcast numpy-style.
    pub fn binary(&mut self, f: Binary, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_node(a)?;
        self.check_node(b)?;
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let target = broadcast_shapes(&sa, &sb).ok_or_else(|| GraphError::ShapeMismatch {
            node: format!("{f:?}({a}, {b})"),
            expected: sa.clone(),
            actual: sb.clone(),
        })?;
        let a = if sa == target { a } else { self.broadcast_to(a, &target)? };
        let b = if sb == target { b } else { self.broadcast_to(b, &target)? };
        Ok(self.push(Op::Binary(f), vec![a, b], target))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Add, a, b)
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Sub, a, b)
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Mul, a, b)
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Div, a, b)
    }

    /// Sum of several same-shape (or broadcastable) nodes, left to right.
    pub fn add_all(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let (&first, rest) = terms.split_first().ok_or(GraphError::InvalidOperand {
            op: "add_all",
            reason: "no terms".into(),
        })?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    // ---- structural -------------------------------------------------------

    pub fn broadcast_to(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.check_node(x)?;
        let from = self.shape(x).to_vec();
        match broadcast_shapes(&from, shape) {
            Some(s) if s == shape => {}
            _ => {
                return Err(GraphError::ShapeMismatch {
                    node: format!("broadcast_to({x})"),
                    expected: shape.to_vec(),
                    actual: from,
                })
            }
        }
        Ok(self.push(Op::BroadcastTo, vec![x], shape.to_vec()))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.check_node(x)?;
        if numel(self.shape(x)) != numel(shape) {
            return Err(GraphError::ShapeMismatch {
                node: format!("reshape({x})"),
                expected: shape.to_vec(),
                actual: self.shape(x).to_vec(),
            });
        }
        if self.shape(x) == shape {
            return Ok(x);
        }
        Ok(self.push(Op::Reshape, vec![x], shape.to_vec()))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let first = *parts.first().ok_or(GraphError::InvalidOperand {
            op: "concat",
            reason: "no parts".into(),
        })?;
        self.check_axis("concat", first, axis)?;
        let mut shape = self.shape(first).to_vec();
        let mut total = 0;
        for &p in parts {
            self.check_node(p)?;
            let s = self.shape(p);
            let compatible = s.len() == shape.len()
                && s.iter()
                    .zip(&shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(GraphError::ShapeMismatch {
                    node: format!("concat({p})"),
                    expected: shape.clone(),
                    actual: s.to_vec(),
                });
            }
            total += s[axis];
        }
        shape[axis] = total;
        if parts.len() == 1 {
            return Ok(first);
        }
        Ok(self.push(Op::Concat { axis }, parts.to_vec(), shape))
    }

    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        self.check_axis("slice", x, axis)?;
        let mut shape = self.shape(x).to_vec();
        if len == 0 || start + len > shape[axis] {
            return Err(GraphError::InvalidOperand {
                op: "slice",
                reason: format!("range {start}..{} outside axis of length {}", start + len, shape[axis]),
            });
        }
        shape[axis] = len;
        Ok(self.push(Op::Slice { axis, start, len }, vec![x], shape))
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        self.check_node(w)?;
        self.check_node(x)?;
        let (sw, sx) = (self.shape(w).to_vec(), self.shape(x).to_vec());
        if sw.len() != 2 || sx.len() != 1 || sw[1] != sx[0] {
            return Err(GraphError::ShapeMismatch {
                node: format!("matvec({w}, {x})"),
                expected: vec![sw.get(1).copied().unwrap_or(0)],
                actual: sx,
            });
        }
        Ok(self.push(Op::MatVec, vec![w, x], vec![sw[0]]))
    }

    /// W·x + b.
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.matvec(w, x)?;
        if self.shape(b) != self.shape(y) {
            return Err(GraphError::ShapeMismatch {
                node: format!("affine bias {b}"),
                expected: self.shape(y).to_vec(),
                actual: self.shape(b).to_vec(),
            });
        }
        self.add(y, b)
    }

    // ---- reductions -------------------------------------------------------

    fn check_axis(&self, op: &'static str, x: NodeId, axis: usize) -> Result<()> {
        self.check_node(x)?;
        if axis >= self.shape(x).len() {
            return Err(GraphError::InvalidOperand {
                op,
                reason: format!("axis {axis} out of range for shape {:?}", self.shape(x)),
            });
        }
        Ok(())
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check_axis("softmax", x, axis)?;
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::Softmax { axis }, vec![x], shape))
    }

    /// log Σ exp along `axis`, kept with length 1.
    pub fn logsumexp(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check_axis("logsumexp", x, axis)?;
        let mut shape = self.shape(x).to_vec();
        shape[axis] = 1;
        Ok(self.push(Op::LogSumExp { axis }, vec![x], shape))
    }

    pub fn reduce(&mut self, kind: Reduce, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check_axis("reduce", x, axis)?;
        let mut shape = self.shape(x).to_vec();
        shape[axis] = 1;
        Ok(self.push(Op::ReduceAxis { kind, axis }, vec![x], shape))
    }

    pub fn reduce_all(&mut self, kind: Reduce, x: NodeId) -> Result<NodeId> {
        self.check_node(x)?;
        Ok(self.push(Op::ReduceAll(kind), vec![x], vec![]))
    }

    pub fn sum_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.reduce(Reduce::Sum, x, axis)
    }
    pub fn max_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.reduce(Reduce::Max, x, axis)
    }
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.reduce_all(Reduce::Sum, x)
    }
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.reduce_all(Reduce::Mean, x)
    }
    pub fn min(&mut self, x: NodeId) -> Result<NodeId> {
        self.reduce_all(Reduce::Min, x)
    }

    // ---- spatial ----------------------------------------------------------

    pub fn conv2d(&mut self, x: NodeId, kernel: NodeId) -> Result<NodeId> {
        self.check_node(x)?;
        self.check_node(kernel)?;
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(kernel).to_vec());
        let bad = |reason: String| GraphError::InvalidOperand { op: "conv2d", reason };
        if sx.len() != 3 || sk.len() != 4 {
            return Err(bad(format!("need x [C,H,W] and k [O,C,kh,kw], got {sx:?} and {sk:?}")));
        }
        if sk[1] != sx[0] {
            return Err(GraphError::ShapeMismatch {
                node: format!("conv2d({x}, {kernel}) input channels"),
                expected: vec![sk[1]],
                actual: vec![sx[0]],
            });
        }
        if sk[2] % 2 == 0 || sk[3] % 2 == 0 {
            return Err(bad(format!("kernel extent must be odd, got {}x{}", sk[2], sk[3])));
        }
        Ok(self.push(Op::Conv2d, vec![x, kernel], vec![sk[0], sx[1], sx[2]]))
    }

    pub fn flip2d(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_node(x)?;
        if self.shape(x).len() < 2 {
            return Err(GraphError::InvalidOperand {
                op: "flip2d",
                reason: format!("need rank >= 2, got {:?}", self.shape(x)),
            });
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::Flip2d, vec![x], shape))
    }

    /// Builds an operator from its textual kind. Covers the attribute-free
    /// operators plus axis-parameterized ones (`axis` required there).
    pub fn apply(&mut self, kind: &str, inputs: &[NodeId], axis: Option<usize>) -> Result<NodeId> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() != n {
                return Err(GraphError::InvalidOperand {
                    op: "apply",
                    reason: format!("`{kind}` takes {n} operands, got {}", inputs.len()),
                });
            }
            Ok(())
        };
        let need_axis = || {
            axis.ok_or(GraphError::InvalidOperand {
                op: "apply",
                reason: format!("`{kind}` needs an axis"),
            })
        };
        let unary = match kind {
            "neg" => Some(Unary::Neg),
            "exp" => Some(Unary::Exp),
            "log" => Some(Unary::Log),
            "tanh" => Some(Unary::Tanh),
            "sigmoid" => Some(Unary::Sigmoid),
            "cos" => Some(Unary::Cos),
            "log_cosh" => Some(Unary::LogCosh),
            "log_bessel_i0" => Some(Unary::LogBesselI0),
            _ => None,
        };
        if let Some(f) = unary {
            arity(1)?;
            return self.unary(f, inputs[0]);
        }
        let binary = match kind {
            "add" => Some(Binary::Add),
            "sub" => Some(Binary::Sub),
            "mul" => Some(Binary::Mul),
            "div" => Some(Binary::Div),
            _ => None,
        };
        if let Some(f) = binary {
            arity(2)?;
            return self.binary(f, inputs[0], inputs[1]);
        }
        match kind {
            "matvec" => {
                arity(2)?;
                self.matvec(inputs[0], inputs[1])
            }
            "conv2d" => {
                arity(2)?;
                self.conv2d(inputs[0], inputs[1])
            }
            "flip2d" => {
                arity(1)?;
                self.flip2d(inputs[0])
            }
            "concat" => self.concat(inputs, need_axis()?),
            "softmax" => {
                arity(1)?;
                self.softmax(inputs[0], need_axis()?)
            }
            "logsumexp" => {
                arity(1)?;
                self.logsumexp(inputs[0], need_axis()?)
            }
            "sum" | "mean" | "max" | "min" => {
                arity(1)?;
                let r = match kind {
                    "sum" => Reduce::Sum,
                    "mean" => Reduce::Mean,
                    "max" => Reduce::Max,
                    _ => Reduce::Min,
                };
                match axis {
                    Some(a) => self.reduce(r, inputs[0], a),
                    None => self.reduce_all(r, inputs[0]),
                }
            }
            other => Err(GraphError::UnsupportedOp(other.to_owned())),
        }
    }
}
