//! Reverse-mode gradient tape over vector-valued nodes.
//!
//! Nodes are appended in execution order, so a reverse sweep over the node
//! list visits every primitive after all of its consumers. Parameters are
//! read in place from a borrowed [`ParamStore`]; their gradients are
//! accumulated into a caller-owned [`Grads`].

use rand::Rng;

use super::matrix::dot;
use super::ops;
use super::params::{Grads, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Linear {
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
    },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AbsDiff(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Cosine(NodeId, NodeId),
    Dot(NodeId, NodeId),
    MaxOverTime {
        rows: Vec<NodeId>,
        argmax: Vec<usize>,
    },
    Mean(Vec<NodeId>),
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    /// KL(target || softmax(logits)); `probs` is the cached softmax.
    KlLoss {
        logits: NodeId,
        target: Vec<f64>,
        probs: Vec<f64>,
    },
    CeLoss {
        logits: NodeId,
        gold: usize,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct NodeGrads {
    grads: Vec<Option<Vec<f64>>>,
}

impl NodeGrads {
    /// Gradient w.r.t. a node; zeros if nothing flowed into it.
    pub fn get(&self, id: NodeId, len: usize) -> Vec<f64> {
        self.grads[id.0].clone().unwrap_or_else(|| vec![0.0; len])
    }
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Scalar value of a length-1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant leaf (receives a gradient but feeds no parameter).
    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Parameter read as a flattened vector.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        let value = self.params.get(id).as_slice().to_vec();
        self.push(value, Op::Param(id))
    }

    /// `W x (+ b)`.
    pub fn linear(&mut self, x: NodeId, w: ParamId, b: Option<ParamId>) -> Result<NodeId> {
        let wm = self.params.get(w);
        let mut y = wm.matvec(self.value(x))?;
        if let Some(b) = b {
            let bv = self.params.get(b).as_slice();
            if bv.len() != y.len() {
                return Err(Error::shape(
                    "linear",
                    format!("W {}x{}", wm.rows(), wm.cols()),
                    format!("b[{}]", bv.len()),
                ));
            }
            y.iter_mut().zip(bv).for_each(|(y, b)| *y += b);
        }
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = ops::sigmoid(self.value(x));
        self.push(y, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let y = ops::tanh(self.value(x));
        self.push(y, Op::Tanh(x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = ops::elementwise_mul(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::Mul(a, b)))
    }

    pub fn abs_diff(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = ops::abs_diff(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::AbsDiff(a, b)))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let y: Vec<f64> = parts
            .iter()
            .flat_map(|&p| self.value(p).iter().copied())
            .collect();
        self.push(y, Op::Concat(parts.to_vec()))
    }

    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = ops::cosine(self.value(a), self.value(b))?;
        Ok(self.push(vec![y], Op::Cosine(a, b)))
    }

    /// Inner product as a length-1 node.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(Error::shape("dot", av.len(), bv.len()));
        }
        let y = dot(av, bv);
        Ok(self.push(vec![y], Op::Dot(a, b)))
    }

    /// Column-wise max over equal-length row nodes.
    pub fn max_over_time(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = rows.first().ok_or(Error::EmptySequence("max_over_time"))?;
        let width = self.value(*first).len();
        let mut best = self.value(*first).to_vec();
        let mut argmax = vec![0; width];
        for (r, &row) in rows.iter().enumerate().skip(1) {
            let v = self.value(row);
            if v.len() != width {
                return Err(Error::shape("max_over_time", width, v.len()));
            }
            for c in 0..width {
                if v[c] > best[c] {
                    best[c] = v[c];
                    argmax[c] = r;
                }
            }
        }
        Ok(self.push(
            best,
            Op::MaxOverTime {
                rows: rows.to_vec(),
                argmax,
            },
        ))
    }

    pub fn mean(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = rows.first().ok_or(Error::EmptySequence("mean"))?;
        let mut acc = vec![0.0; self.value(*first).len()];
        for &r in rows {
            let v = self.value(r);
            if v.len() != acc.len() {
                return Err(Error::shape("mean", acc.len(), v.len()));
            }
            acc.iter_mut().zip(v).for_each(|(a, v)| *a += v);
        }
        let n = rows.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(self.push(acc, Op::Mean(rows.to_vec())))
    }

    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: NodeId,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<NodeId> {
        let (y, mask) = ops::dropout(self.value(x), p, training, rng)?;
        Ok(self.push(y, Op::Dropout { x, mask }))
    }

    /// `KL(target || softmax(logits))`, with `0 ln 0 = 0`.
    pub fn kl_loss(&mut self, logits: NodeId, target: &[f64]) -> Result<NodeId> {
        let z = self.value(logits);
        if z.len() != target.len() {
            return Err(Error::shape("kl_loss", z.len(), target.len()));
        }
        let logq = ops::log_softmax(z);
        let loss: f64 = target
            .iter()
            .zip(&logq)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, lq)| p * (p.ln() - lq))
            .sum();
        let probs = logq.iter().map(|v| v.exp()).collect();
        Ok(self.push(
            vec![loss],
            Op::KlLoss {
                logits,
                target: target.to_vec(),
                probs,
            },
        ))
    }

    /// `-ln softmax(logits)[gold]`.
    pub fn ce_loss(&mut self, logits: NodeId, gold: usize) -> Result<NodeId> {
        let z = self.value(logits);
        if gold >= z.len() {
            return Err(Error::Data(format!(
                "gold class {gold} out of range for {} outputs",
                z.len()
            )));
        }
        let logq = ops::log_softmax(z);
        let loss = -logq[gold];
        let probs = logq.iter().map(|v| v.exp()).collect();
        Ok(self.push(
            vec![loss],
            Op::CeLoss {
                logits,
                gold,
                probs,
            },
        ))
    }

    /// Back-propagates `seed * d(root)` through the tape, accumulating
    /// parameter gradients into `grads`. `root` is normally a scalar loss
    /// node; for vector roots the seed is broadcast to every entry.
    pub fn backward(&self, root: NodeId, seed: f64, grads: &mut Grads) -> NodeGrads {
        let mut g: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        g[root.0] = Some(vec![seed; self.nodes[root.0].value.len()]);

        for idx in (0..=root.0).rev() {
            let Some(dy) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    grads
                        .get_mut(*p)
                        .as_mut_slice()
                        .iter_mut()
                        .zip(&dy)
                        .for_each(|(a, d)| *a += d);
                }
                Op::Linear { x, w, b } => {
                    let wm = self.params.get(*w);
                    let xv = &self.nodes[x.0].value;
                    let cols = wm.cols();
                    let mut dx = vec![0.0; cols];
                    {
                        let gw = grads.get_mut(*w).as_mut_slice();
                        for (r, &d) in dy.iter().enumerate() {
                            if d == 0.0 {
                                continue;
                            }
                            let wrow = wm.row(r);
                            let grow = &mut gw[r * cols..(r + 1) * cols];
                            for c in 0..cols {
                                dx[c] += wrow[c] * d;
                                grow[c] += xv[c] * d;
                            }
                        }
                    }
                    if let Some(b) = b {
                        grads
                            .get_mut(*b)
                            .as_mut_slice()
                            .iter_mut()
                            .zip(&dy)
                            .for_each(|(a, d)| *a += d);
                    }
                    accumulate(&mut g, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let dx = dy
                        .iter()
                        .zip(&node.value)
                        .map(|(d, y)| d * y * (1.0 - y))
                        .collect();
                    accumulate(&mut g, *x, dx);
                }
                Op::Tanh(x) => {
                    let dx = dy
                        .iter()
                        .zip(&node.value)
                        .map(|(d, y)| d * (1.0 - y * y))
                        .collect();
                    accumulate(&mut g, *x, dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut g, *a, dy.clone());
                    accumulate(&mut g, *b, dy.clone());
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let da = dy.iter().zip(bv).map(|(d, b)| d * b).collect();
                    let db = dy.iter().zip(av).map(|(d, a)| d * a).collect();
                    accumulate(&mut g, *a, da);
                    accumulate(&mut g, *b, db);
                }
                Op::AbsDiff(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let s: Vec<f64> = av
                        .iter()
                        .zip(bv)
                        .zip(&dy)
                        .map(|((a, b), d)| {
                            if a > b {
                                *d
                            } else if a < b {
                                -d
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let neg = s.iter().map(|v| -v).collect();
                    accumulate(&mut g, *a, s);
                    accumulate(&mut g, *b, neg);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        accumulate(&mut g, *p, dy[off..off + n].to_vec());
                        off += n;
                    }
                }
                Op::Cosine(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let na = dot(av, av).sqrt();
                    let nb = dot(bv, bv).sqrt();
                    if na >= ops::COSINE_EPS && nb >= ops::COSINE_EPS {
                        let c = node.value[0];
                        let d = dy[0];
                        let inv = 1.0 / (na * nb);
                        let da = av
                            .iter()
                            .zip(bv)
                            .map(|(a, b)| d * (b * inv - c * a / (na * na)))
                            .collect();
                        let db = av
                            .iter()
                            .zip(bv)
                            .map(|(a, b)| d * (a * inv - c * b / (nb * nb)))
                            .collect();
                        accumulate(&mut g, *a, da);
                        accumulate(&mut g, *b, db);
                    }
                }
                Op::Dot(a, b) => {
                    let da = self.nodes[b.0].value.iter().map(|v| v * dy[0]).collect();
                    let db = self.nodes[a.0].value.iter().map(|v| v * dy[0]).collect();
                    accumulate(&mut g, *a, da);
                    accumulate(&mut g, *b, db);
                }
                Op::MaxOverTime { rows, argmax } => {
                    let width = dy.len();
                    for (r, row) in rows.iter().enumerate() {
                        let mut dr = vec![0.0; width];
                        let mut any = false;
                        for c in 0..width {
                            if argmax[c] == r {
                                dr[c] = dy[c];
                                any = true;
                            }
                        }
                        if any {
                            accumulate(&mut g, *row, dr);
                        }
                    }
                }
                Op::Mean(rows) => {
                    let n = rows.len() as f64;
                    let dr: Vec<f64> = dy.iter().map(|d| d / n).collect();
                    for r in rows {
                        accumulate(&mut g, *r, dr.clone());
                    }
                }
                Op::Dropout { x, mask } => {
                    let dx = dy.iter().zip(mask).map(|(d, m)| d * m).collect();
                    accumulate(&mut g, *x, dx);
                }
                Op::KlLoss {
                    logits,
                    target,
                    probs,
                } => {
                    // target sums to one, so d/dz = q - p.
                    let dz = probs
                        .iter()
                        .zip(target)
                        .map(|(q, p)| dy[0] * (q - p))
                        .collect();
                    accumulate(&mut g, *logits, dz);
                }
                Op::CeLoss {
                    logits,
                    gold,
                    probs,
                } => {
                    let dz = probs
                        .iter()
                        .enumerate()
                        .map(|(i, q)| dy[0] * (q - if i == *gold { 1.0 } else { 0.0 }))
                        .collect();
                    accumulate(&mut g, *logits, dz);
                }
            }
            g[idx] = Some(dy);
        }
        NodeGrads { grads: g }
    }
}

fn accumulate(g: &mut [Option<Vec<f64>>], id: NodeId, d: Vec<f64>) {
    match &mut g[id.0] {
        Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, d)| *a += d),
        slot @ None => *slot = Some(d),
    }
}
