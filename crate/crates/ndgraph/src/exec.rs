use std::collections::BTreeMap;

use crate::conv::{self, ConvDims};
use crate::error::{GraphError, Result};
use crate::graph::{Binary, Graph, NodeId, Op, Reduce, Unary};
use crate::params::ParamStore;
use crate::special;
use crate::tensor::{broadcast_strides, for_each_broadcast, numel, split_axis, Tensor};

/// Largest argument passed to `exp`; larger arguments are clamped.
pub const EXP_CLAMP: f64 = 700.0;
/// Smallest argument passed to `log`; smaller arguments are raised to it.
pub const LOG_FLOOR: f64 = 1e-300;

/// Named tensors bound to the graph's input leaves.
pub type Inputs = BTreeMap<String, Tensor>;

/// Value of every node from one forward evaluation.
#[derive(Clone, Debug)]
pub struct Values {
    nodes: Vec<Tensor>,
}

impl Values {
    pub fn get(&self, node: NodeId) -> &Tensor {
        &self.nodes[node.0]
    }

    pub fn scalar(&self, node: NodeId) -> f64 {
        self.nodes[node.0].item()
    }
}

/// Gradients of a scalar objective with respect to graph leaves.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    /// Trainable parameters, keyed by name.
    pub params: BTreeMap<String, Tensor>,
    /// Input leaves, keyed by name.
    pub inputs: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    /// Adds `scale * other` into self, parameter by parameter.
    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        for (name, g) in &other.params {
            match self.params.get_mut(name) {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += scale * b;
                    }
                }
                None => {
                    self.params.insert(name.clone(), g.map(|v| scale * v));
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn unary_value(f: Unary, x: f64) -> f64 {
    match f {
        Unary::Neg => -x,
        Unary::Exp => x.min(EXP_CLAMP).exp(),
        Unary::Log => x.max(LOG_FLOOR).ln(),
        Unary::Tanh => x.tanh(),
        Unary::Sigmoid => sigmoid(x),
        Unary::Cos => x.cos(),
        Unary::LogCosh => log_cosh(x),
        Unary::LogBesselI0 => special::log_bessel_i0(x.abs()),
        Unary::Scale(c) => c * x,
        Unary::Offset(c) => x + c,
    }
}

/// d f / d x, given input x and output y.
fn unary_slope(f: Unary, x: f64, y: f64) -> f64 {
    match f {
        Unary::Neg => -1.0,
        Unary::Exp => {
            if x < EXP_CLAMP {
                y
            } else {
                0.0
            }
        }
        Unary::Log => {
            if x > LOG_FLOOR {
                1.0 / x
            } else {
                0.0
            }
        }
        Unary::Tanh => 1.0 - y * y,
        Unary::Sigmoid => y * (1.0 - y),
        Unary::Cos => -x.sin(),
        Unary::LogCosh => x.tanh(),
        Unary::LogBesselI0 => x.signum() * special::bessel_i1_over_i0(x.abs()),
        Unary::Scale(c) => c,
        Unary::Offset(_) => 1.0,
    }
}

fn binary_value(f: Binary, a: f64, b: f64) -> f64 {
    match f {
        Binary::Add => a + b,
        Binary::Sub => a - b,
        Binary::Mul => a * b,
        Binary::Div => a / b,
    }
}

/// Index of the first extremal element of `values` taken with `stride`.
fn arg_extreme(kind: Reduce, values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NAN;
    for (i, v) in values.enumerate() {
        let better = match kind {
            Reduce::Max => v > best_v,
            _ => v < best_v,
        };
        if i == 0 || better {
            best = i;
            best_v = v;
        }
    }
    best
}

fn flip2d(shape: &[usize], data: &[f64]) -> Vec<f64> {
    let r = shape.len();
    let (h, w) = (shape[r - 2], shape[r - 1]);
    let plane = h * w;
    let mut out = vec![0.0; data.len()];
    for (p, chunk) in data.chunks(plane).enumerate() {
        let dst = &mut out[p * plane..(p + 1) * plane];
        for y in 0..h {
            for x in 0..w {
                dst[(h - 1 - y) * w + (w - 1 - x)] = chunk[y * w + x];
            }
        }
    }
    out
}

impl Graph {
    /// Evaluates every node.
    pub fn forward(&self, params: &ParamStore, inputs: &Inputs) -> Result<Values> {
        let mut nodes: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let arg = |i: usize| &nodes[node.inputs[i].0];
            let value = match &node.op {
                Op::Input(name) => {
                    let t = inputs
                        .get(name)
                        .ok_or_else(|| GraphError::MissingInput(name.clone()))?;
                    if t.shape() != node.shape.as_slice() {
                        return Err(GraphError::ShapeMismatch {
                            node: format!("input `{name}`"),
                            expected: node.shape.clone(),
                            actual: t.shape().to_vec(),
                        });
                    }
                    t.clone()
                }
                Op::Param(name) => {
                    let t = params
                        .get(name)
                        .ok_or_else(|| GraphError::MissingParam(name.clone()))?;
                    if t.shape() != node.shape.as_slice() {
                        return Err(GraphError::ShapeMismatch {
                            node: format!("parameter `{name}`"),
                            expected: node.shape.clone(),
                            actual: t.shape().to_vec(),
                        });
                    }
                    t.clone()
                }
                Op::Const(t) => t.clone(),
                Op::Unary(f) => arg(0).map(|x| unary_value(*f, x)),
                Op::Binary(f) => {
                    let (a, b) = (arg(0), arg(1));
                    let data = a
                        .data()
                        .iter()
                        .zip(b.data())
                        .map(|(&x, &y)| binary_value(*f, x, y))
                        .collect();
                    Tensor::new(node.shape.clone(), data)?
                }
                Op::MatVec => {
                    let (w, x) = (arg(0), arg(1));
                    let n = x.numel();
                    let data = w
                        .data()
                        .chunks(n)
                        .map(|row| row.iter().zip(x.data()).map(|(a, b)| a * b).sum())
                        .collect();
                    Tensor::new(node.shape.clone(), data)?
                }
                Op::Concat { axis } => {
                    let (outer, _, inner) = split_axis(&node.shape, *axis);
                    let mut data = Vec::with_capacity(numel(&node.shape));
                    for o in 0..outer {
                        for &p in &node.inputs {
                            let t = &nodes[p.0];
                            let block = t.shape()[*axis] * inner;
                            data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
                        }
                    }
                    Tensor::new(node.shape.clone(), data)?
                }
                Op::Slice { axis, start, len } => {
                    let x = arg(0);
                    let (outer, full, inner) = split_axis(x.shape(), *axis);
                    let mut data = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let base = (o * full + start) * inner;
                        data.extend_from_slice(&x.data()[base..base + len * inner]);
                    }
                    Tensor::new(node.shape.clone(), data)?
                }
                Op::Reshape => Tensor::new(node.shape.clone(), arg(0).data().to_vec())?,
                Op::BroadcastTo => {
                    let x = arg(0);
                    let strides = broadcast_strides(x.shape(), &node.shape);
                    let mut data = vec![0.0; numel(&node.shape)];
                    for_each_broadcast(&node.shape, &strides, |o, i| data[o] = x.data()[i]);
                    Tensor::new(node.shape.clone(), data)?
                }
                Op::Softmax { axis } => {
                    let x = arg(0);
                    let (outer, len, inner) = split_axis(x.shape(), *axis);
                    let mut data = x.data().to_vec();
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| (o * len + k) * inner + i;
                            let m = (0..len).map(|k| data[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                            let mut s = 0.0;
                            for k in 0..len {
                                let e = (data[at(k)] - m).exp();
                                data[at(k)] = e;
                                s += e;
                            }
                            for k in 0..len {
                                data[at(k)] /= s;
                            }
                        }
                    }
                    Tensor::new(node.shape.clone(), data)?
                }
                Op::LogSumExp { axis } => {
                    let x = arg(0);
                    let (outer, len, inner) = split_axis(x.shape(), *axis);
                    let mut data = vec![0.0; outer * inner];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| x.data()[(o * len + k) * inner + i];
                            let m = (0..len).map(at).fold(f64::NEG_INFINITY, f64::max);
                            data[o * inner + i] = if m == f64::NEG_INFINITY {
                                m
                            } else {
                                m + (0..len).map(|k| (at(k) - m).exp()).sum::<f64>().ln()
                            };
                        }
                    }
                    Tensor::new(node.shape.clone(), data)?
                }
                Op::ReduceAxis { kind, axis } => {
                    let x = arg(0);
                    let (outer, len, inner) = split_axis(x.shape(), *axis);
                    let mut data = vec![0.0; outer * inner];
                    for o in 0..outer {
                        for i in 0..inner {
                            let col = (0..len).map(|k| x.data()[(o * len + k) * inner + i]);
                            data[o * inner + i] = match kind {
                                Reduce::Sum => col.sum(),
                                Reduce::Mean => col.sum::<f64>() / len as f64,
                                Reduce::Max => col.fold(f64::NEG_INFINITY, f64::max),
                                Reduce::Min => col.fold(f64::INFINITY, f64::min),
                            };
                        }
                    }
                    Tensor::new(node.shape.clone(), data)?
                }
                Op::ReduceAll(kind) => {
                    let x = arg(0);
                    let v = match kind {
                        Reduce::Sum => x.sum(),
                        Reduce::Mean => x.sum() / x.numel() as f64,
                        Reduce::Max => x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        Reduce::Min => x.data().iter().copied().fold(f64::INFINITY, f64::min),
                    };
                    Tensor::scalar(v)
                }
                Op::Conv2d => {
                    let (x, k) = (arg(0), arg(1));
                    let d = ConvDims::new(x.shape(), k.shape());
                    Tensor::new(node.shape.clone(), conv::forward(d, x.data(), k.data()))?
                }
                Op::Flip2d => {
                    let x = arg(0);
                    Tensor::new(node.shape.clone(), flip2d(x.shape(), x.data()))?
                }
            };
            debug_assert_eq!(value.shape(), self.nodes[idx].shape.as_slice());
            nodes.push(value);
        }
        Ok(Values { nodes })
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&self, values: &Values, loss: NodeId) -> Result<Gradients> {
        self.backward_seeded(values, &[(loss, 1.0)])
    }

    /// Reverse sweep for the objective Σ wᵢ · nodeᵢ over scalar nodes.
    pub fn backward_seeded(&self, values: &Values, seeds: &[(NodeId, f64)]) -> Result<Gradients> {
        if values.nodes.len() != self.nodes.len() {
            return Err(GraphError::StaleValues {
                expected: self.nodes.len(),
                got: values.nodes.len(),
            });
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for &(node, w) in seeds {
            let shape = &self.nodes[node.0].shape;
            if numel(shape) != 1 {
                return Err(GraphError::NonScalarLoss {
                    node: node.0,
                    shape: shape.clone(),
                });
            }
            accumulate(&mut adj[node.0], Tensor::full(shape, w));
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            let ins = &node.inputs;
            let val = |i: usize| &values.nodes[ins[i].0];
            let out = &values.nodes[idx];
            match &node.op {
                Op::Input(_) | Op::Param(_) | Op::Const(_) => {
                    adj[idx] = Some(g);
                    continue;
                }
                Op::Unary(f) => {
                    let x = val(0);
                    let data = x
                        .data()
                        .iter()
                        .zip(out.data())
                        .zip(g.data())
                        .map(|((&xv, &yv), &gv)| gv * unary_slope(*f, xv, yv))
                        .collect();
                    accumulate(&mut adj[ins[0].0], Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::Binary(f) => {
                    let (a, b) = (val(0), val(1));
                    let (ga, gb): (Vec<f64>, Vec<f64>) = a
                        .data()
                        .iter()
                        .zip(b.data())
                        .zip(g.data())
                        .map(|((&av, &bv), &gv)| match f {
                            Binary::Add => (gv, gv),
                            Binary::Sub => (gv, -gv),
                            Binary::Mul => (gv * bv, gv * av),
                            Binary::Div => (gv / bv, -gv * av / (bv * bv)),
                        })
                        .unzip();
                    accumulate(&mut adj[ins[0].0], Tensor::new(node.shape.clone(), ga)?);
                    accumulate(&mut adj[ins[1].0], Tensor::new(node.shape.clone(), gb)?);
                }
                Op::MatVec => {
                    let (w, x) = (val(0), val(1));
                    let n = x.numel();
                    let mut gw = vec![0.0; w.numel()];
                    let mut gx = vec![0.0; n];
                    for (i, (&gi, row)) in g.data().iter().zip(w.data().chunks(n)).enumerate() {
                        let grow = &mut gw[i * n..(i + 1) * n];
                        for j in 0..n {
                            grow[j] = gi * x.data()[j];
                            gx[j] += row[j] * gi;
                        }
                    }
                    accumulate(&mut adj[ins[0].0], Tensor::new(w.shape().to_vec(), gw)?);
                    accumulate(&mut adj[ins[1].0], Tensor::new(x.shape().to_vec(), gx)?);
                }
                Op::Concat { axis } => {
                    let (outer, total, inner) = split_axis(&node.shape, *axis);
                    let mut offset = 0;
                    for &p in ins {
                        let shape = self.nodes[p.0].shape.clone();
                        let len = shape[*axis];
                        let mut data = Vec::with_capacity(numel(&shape));
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            data.extend_from_slice(&g.data()[base..base + len * inner]);
                        }
                        offset += len;
                        accumulate(&mut adj[p.0], Tensor::new(shape, data)?);
                    }
                }
                Op::Slice { axis, start, len } => {
                    let shape = self.nodes[ins[0].0].shape.clone();
                    let (outer, full, inner) = split_axis(&shape, *axis);
                    let mut data = vec![0.0; numel(&shape)];
                    for o in 0..outer {
                        let base = (o * full + start) * inner;
                        data[base..base + len * inner]
                            .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                    }
                    accumulate(&mut adj[ins[0].0], Tensor::new(shape, data)?);
                }
                Op::Reshape => {
                    let shape = self.nodes[ins[0].0].shape.clone();
                    accumulate(&mut adj[ins[0].0], g.reshaped(&shape)?);
                }
                Op::BroadcastTo => {
                    let shape = self.nodes[ins[0].0].shape.clone();
                    let strides = broadcast_strides(&shape, &node.shape);
                    let mut data = vec![0.0; numel(&shape)];
                    for_each_broadcast(&node.shape, &strides, |o, i| data[i] += g.data()[o]);
                    accumulate(&mut adj[ins[0].0], Tensor::new(shape, data)?);
                }
                Op::Softmax { axis } => {
                    let (outer, len, inner) = split_axis(&node.shape, *axis);
                    let y = out.data();
                    let mut data = vec![0.0; y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| (o * len + k) * inner + i;
                            let dot: f64 = (0..len).map(|k| g.data()[at(k)] * y[at(k)]).sum();
                            for k in 0..len {
                                data[at(k)] = y[at(k)] * (g.data()[at(k)] - dot);
                            }
                        }
                    }
                    accumulate(&mut adj[ins[0].0], Tensor::new(node.shape.clone(), data)?);
                }
                Op::LogSumExp { axis } => {
                    let x = val(0);
                    let (outer, len, inner) = split_axis(x.shape(), *axis);
                    let mut data = vec![0.0; x.numel()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let (lse, gv) = (out.data()[o * inner + i], g.data()[o * inner + i]);
                            if lse == f64::NEG_INFINITY {
                                continue;
                            }
                            for k in 0..len {
                                let at = (o * len + k) * inner + i;
                                data[at] = gv * (x.data()[at] - lse).exp();
                            }
                        }
                    }
                    accumulate(&mut adj[ins[0].0], Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::ReduceAxis { kind, axis } => {
                    let x = val(0);
                    let (outer, len, inner) = split_axis(x.shape(), *axis);
                    let mut data = vec![0.0; x.numel()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let gv = g.data()[o * inner + i];
                            let at = |k: usize| (o * len + k) * inner + i;
                            match kind {
                                Reduce::Sum => (0..len).for_each(|k| data[at(k)] = gv),
                                Reduce::Mean => (0..len).for_each(|k| data[at(k)] = gv / len as f64),
                                Reduce::Max | Reduce::Min => {
                                    let k = arg_extreme(*kind, (0..len).map(|k| x.data()[at(k)]));
                                    data[at(k)] = gv;
                                }
                            }
                        }
                    }
                    accumulate(&mut adj[ins[0].0], Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::ReduceAll(kind) => {
                    let x = val(0);
                    let gv = g.item();
                    let n = x.numel();
                    let data = match kind {
                        Reduce::Sum => vec![gv; n],
                        Reduce::Mean => vec![gv / n as f64; n],
                        Reduce::Max | Reduce::Min => {
                            let mut d = vec![0.0; n];
                            d[arg_extreme(*kind, x.data().iter().copied())] = gv;
                            d
                        }
                    };
                    accumulate(&mut adj[ins[0].0], Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::Conv2d => {
                    let (x, k) = (val(0), val(1));
                    let d = ConvDims::new(x.shape(), k.shape());
                    let (gx, gk) = conv::backward(d, x.data(), k.data(), g.data());
                    accumulate(&mut adj[ins[0].0], Tensor::new(x.shape().to_vec(), gx)?);
                    accumulate(&mut adj[ins[1].0], Tensor::new(k.shape().to_vec(), gk)?);
                }
                Op::Flip2d => {
                    let data = flip2d(&node.shape, g.data());
                    accumulate(&mut adj[ins[0].0], Tensor::new(node.shape.clone(), data)?);
                }
            }
        }

        let mut grads = Gradients::default();
        for (name, decl) in &self.params {
            if decl.trainable {
                let g = adj[decl.node.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(&decl.shape));
                grads.params.insert(name.clone(), g);
            }
        }
        for (name, &node) in &self.inputs {
            let g = adj[node.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(&self.nodes[node.0].shape));
            grads.inputs.insert(name.clone(), g);
        }
        Ok(grads)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}
