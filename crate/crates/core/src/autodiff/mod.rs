//! Minimal reverse-mode automatic differentiation on an explicit tape.
//!
//! Values are scalars, vectors, or matrices; each tape method records one
//! operation and eagerly computes its forward value. [`Tape::grad`] replays
//! the tape backwards and accumulates adjoints. Besides elementwise and
//! linear-algebra primitives, the tape has two structured operations whose
//! Jacobians come from forward-mode duals: the Rodrigues map
//! ([`Tape::exp_map_rot`]) and the block-representation action
//! ([`Tape::rep_act`]).

pub mod adam;
pub mod dual;

use ndarray::{Array1, Array2, Axis};

use crate::wigner::{act_recursive, real_rep_blocks, RepScalar, RepSpec};
use dual::{exp_map_with_jacobian, Dual9};

/// Scalar, vector, or matrix payload of a tape node.
#[derive(Clone, Debug)]
pub enum Value {
    S(f64),
    V(Array1<f64>),
    M(Array2<f64>),
}

impl Value {
    pub fn s(&self) -> f64 {
        match self {
            Value::S(x) => *x,
            other => panic!("expected scalar, got {other:?}"),
        }
    }

    pub fn v(&self) -> &Array1<f64> {
        match self {
            Value::V(x) => x,
            other => panic!("expected vector, got {other:?}"),
        }
    }

    pub fn m(&self) -> &Array2<f64> {
        match self {
            Value::M(x) => x,
            other => panic!("expected matrix, got {other:?}"),
        }
    }

    pub fn zeros_like(&self) -> Value {
        match self {
            Value::S(_) => Value::S(0.0),
            Value::V(x) => Value::V(Array1::zeros(x.len())),
            Value::M(x) => Value::M(Array2::zeros(x.dim())),
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Value {
        match self {
            Value::S(x) => Value::S(f(*x)),
            Value::V(x) => Value::V(x.mapv(&f)),
            Value::M(x) => Value::M(x.mapv(&f)),
        }
    }

    /// self += f(a, b) elementwise; shapes must agree.
    fn accumulate(&mut self, other: &Value) {
        match (self, other) {
            (Value::S(a), Value::S(b)) => *a += b,
            (Value::V(a), Value::V(b)) => *a += b,
            (Value::M(a), Value::M(b)) => *a += b,
            (a, b) => panic!("adjoint shape mismatch: {a:?} vs {b:?}"),
        }
    }

    fn binary(&self, other: &Value, f: impl Fn(f64, f64) -> f64) -> Value {
        match (self, other) {
            (Value::S(a), Value::S(b)) => Value::S(f(*a, *b)),
            (Value::V(a), Value::V(b)) => {
                assert_eq!(a.len(), b.len(), "vector length mismatch");
                let mut out = a.clone();
                out.zip_mut_with(b, |x, y| *x = f(*x, *y));
                Value::V(out)
            }
            (Value::M(a), Value::M(b)) => {
                assert_eq!(a.dim(), b.dim(), "matrix shape mismatch");
                let mut out = a.clone();
                out.zip_mut_with(b, |x, y| *x = f(*x, *y));
                Value::M(out)
            }
            (a, b) => panic!("operand shape mismatch: {a:?} vs {b:?}"),
        }
    }
}

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddConst(usize),
    MaxConst(usize, f64),
    Recip(usize),
    Tanh(usize),
    Softplus(usize),
    Exp(usize),
    Ln(usize),
    Sin(usize),
    Cos(usize),
    Sqrt(usize),
    Sum(usize),
    Dot(usize, usize),
    Norm(usize),
    Cross(usize, usize),
    MulVS(usize, usize),
    Index(usize, usize),
    StackS(Vec<usize>),
    ConcatV(Vec<usize>),
    LogSumExp(usize),
    MatMul(usize, usize),
    AddRowBroadcast(usize, usize),
    Row(usize, usize),
    Slice(usize, usize, usize),
    ExpMapRot(usize),
    RepAct { r: usize, f: usize, spec: RepSpec },
}

struct Node {
    op: Op,
    value: Value,
}

/// Gradient of the loss with respect to every node that received one.
pub struct Gradients {
    adj: Vec<Option<Value>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Value> {
        self.adj[id.0].as_ref()
    }

    /// Gradient of a node, zero-filled when the loss does not depend on it.
    pub fn get_or_zero(&self, id: NodeId, like: &Value) -> Value {
        self.adj[id.0].clone().unwrap_or_else(|| like.zeros_like())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Value) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, x: f64) -> NodeId {
        self.leaf(Value::S(x))
    }

    pub fn vector(&mut self, x: Array1<f64>) -> NodeId {
        self.leaf(Value::V(x))
    }

    pub fn matrix(&mut self, x: Array2<f64>) -> NodeId {
        self.leaf(Value::M(x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.binary(&self.nodes[b.0].value, |x, y| x + y);
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.binary(&self.nodes[b.0].value, |x, y| x - y);
        self.push(Op::Sub(a.0, b.0), v)
    }

    /// Elementwise product; shapes must agree.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.binary(&self.nodes[b.0].value, |x, y| x * y);
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| -x);
        self.push(Op::Neg(a.0), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x * c);
        self.push(Op::Scale(a.0, c), v)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x + c);
        self.push(Op::AddConst(a.0), v)
    }

    /// Elementwise max with a constant; gradient is zero where clipped.
    pub fn max_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x.max(c));
        self.push(Op::MaxConst(a.0, c), v)
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| 1.0 / x);
        self.push(Op::Recip(a.0), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::tanh);
        self.push(Op::Tanh(a.0), v)
    }

    /// Numerically stable log(1 + e^x).
    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| {
            if x > 30.0 {
                x
            } else if x < -30.0 {
                x.exp()
            } else {
                x.exp().ln_1p()
            }
        });
        self.push(Op::Softplus(a.0), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::exp);
        self.push(Op::Exp(a.0), v)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::ln);
        self.push(Op::Ln(a.0), v)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::sin);
        self.push(Op::Sin(a.0), v)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::cos);
        self.push(Op::Cos(a.0), v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::sqrt);
        self.push(Op::Sqrt(a.0), v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a.0].value.v().sum();
        self.push(Op::Sum(a.0), Value::S(s))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.nodes[a.0].value.v().dot(self.nodes[b.0].value.v());
        self.push(Op::Dot(a.0, b.0), Value::S(s))
    }

    pub fn norm(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a.0].value.v().iter().map(|x| x * x).sum::<f64>().sqrt();
        self.push(Op::Norm(a.0), Value::S(s))
    }

    pub fn cross(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let x = self.nodes[a.0].value.v();
        let y = self.nodes[b.0].value.v();
        assert_eq!((x.len(), y.len()), (3, 3), "cross product needs 3-vectors");
        let v = Array1::from(vec![
            x[1] * y[2] - x[2] * y[1],
            x[2] * y[0] - x[0] * y[2],
            x[0] * y[1] - x[1] * y[0],
        ]);
        self.push(Op::Cross(a.0, b.0), Value::V(v))
    }

    /// Vector times scalar node.
    pub fn mul_vs(&mut self, v: NodeId, s: NodeId) -> NodeId {
        let sv = self.nodes[s.0].value.s();
        let out = self.nodes[v.0].value.v() * sv;
        self.push(Op::MulVS(v.0, s.0), Value::V(out))
    }

    pub fn index(&mut self, v: NodeId, i: usize) -> NodeId {
        let x = self.nodes[v.0].value.v()[i];
        self.push(Op::Index(v.0, i), Value::S(x))
    }

    pub fn stack_scalars(&mut self, xs: &[NodeId]) -> NodeId {
        let v = Array1::from_iter(xs.iter().map(|id| self.nodes[id.0].value.s()));
        self.push(Op::StackS(xs.iter().map(|id| id.0).collect()), Value::V(v))
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> NodeId {
        let mut out = Vec::new();
        for id in xs {
            out.extend(self.nodes[id.0].value.v().iter().cloned());
        }
        self.push(
            Op::ConcatV(xs.iter().map(|id| id.0).collect()),
            Value::V(Array1::from(out)),
        )
    }

    pub fn logsumexp(&mut self, a: NodeId) -> NodeId {
        let x = self.nodes[a.0].value.v();
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        self.push(Op::LogSumExp(a.0), Value::S(s))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.nodes[a.0].value.m().dot(self.nodes[b.0].value.m());
        self.push(Op::MatMul(a.0, b.0), Value::M(out))
    }

    /// Matrix plus a row vector broadcast over rows.
    pub fn add_row_broadcast(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let a = self.nodes[m.0].value.m();
        let b = self.nodes[v.0].value.v();
        assert_eq!(a.ncols(), b.len(), "broadcast width mismatch");
        let out = a + &b.view().insert_axis(Axis(0));
        self.push(Op::AddRowBroadcast(m.0, v.0), Value::M(out))
    }

    pub fn row(&mut self, m: NodeId, i: usize) -> NodeId {
        let out = self.nodes[m.0].value.m().row(i).to_owned();
        self.push(Op::Row(m.0, i), Value::V(out))
    }

    pub fn slice(&mut self, v: NodeId, start: usize, len: usize) -> NodeId {
        let x = self.nodes[v.0].value.v();
        assert!(start + len <= x.len(), "slice out of bounds");
        let out = x.slice(ndarray::s![start..start + len]).to_owned();
        self.push(Op::Slice(v.0, start, len), Value::V(out))
    }

    /// Rodrigues map: 3-vector to row-major rotation entries (9-vector).
    pub fn exp_map_rot(&mut self, v: NodeId) -> NodeId {
        let x = self.nodes[v.0].value.v();
        assert_eq!(x.len(), 3);
        let (flat, _) = exp_map_with_jacobian(&[x[0], x[1], x[2]]);
        self.push(Op::ExpMapRot(v.0), Value::V(Array1::from(flat.to_vec())))
    }

    /// Block-representation action of a rotation (9-vector, row-major, not
    /// necessarily orthogonal during backprop) on a coefficient vector.
    pub fn rep_act(&mut self, spec: &RepSpec, r: NodeId, f: NodeId) -> NodeId {
        let rv = self.nodes[r.0].value.v();
        let fv = self.nodes[f.0].value.v();
        assert_eq!(rv.len(), 9, "rotation node must be a flat 9-vector");
        assert_eq!(fv.len(), spec.total_dim(), "coefficient dimension mismatch");
        let m = flat_to_mat(rv);
        let out = act_recursive(spec, &m, fv.as_slice().unwrap());
        self.push(
            Op::RepAct {
                r: r.0,
                f: f.0,
                spec: spec.clone(),
            },
            Value::V(Array1::from(out)),
        )
    }

    /// Reverse pass from a scalar loss node.
    pub fn grad(&self, loss: NodeId) -> Gradients {
        assert!(
            matches!(self.nodes[loss.0].value, Value::S(_)),
            "loss must be a scalar node"
        );
        let mut adj: Vec<Option<Value>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Value::S(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.backward_step(i, &g, &mut adj);
            adj[i] = Some(g);
        }
        Gradients { adj }
    }

    fn accumulate_into(adj: &mut Vec<Option<Value>>, idx: usize, delta: Value) {
        match &mut adj[idx] {
            Some(a) => a.accumulate(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn backward_step(&self, i: usize, g: &Value, adj: &mut Vec<Option<Value>>) {
        let val = |j: usize| &self.nodes[j].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                Self::accumulate_into(adj, *a, g.clone());
                Self::accumulate_into(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                Self::accumulate_into(adj, *a, g.clone());
                Self::accumulate_into(adj, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                Self::accumulate_into(adj, *a, g.binary(val(*b), |x, y| x * y));
                Self::accumulate_into(adj, *b, g.binary(val(*a), |x, y| x * y));
            }
            Op::Neg(a) => Self::accumulate_into(adj, *a, g.map(|x| -x)),
            Op::Scale(a, c) => {
                let c = *c;
                Self::accumulate_into(adj, *a, g.map(|x| x * c));
            }
            Op::AddConst(a) => Self::accumulate_into(adj, *a, g.clone()),
            Op::MaxConst(a, c) => {
                let c = *c;
                let mask = val(*a).map(|x| if x > c { 1.0 } else { 0.0 });
                Self::accumulate_into(adj, *a, g.binary(&mask, |x, y| x * y));
            }
            Op::Recip(a) => {
                let d = val(*a).map(|x| -1.0 / (x * x));
                Self::accumulate_into(adj, *a, g.binary(&d, |x, y| x * y));
            }
            Op::Tanh(a) => {
                let d = self.nodes[i].value.map(|y| 1.0 - y * y);
                Self::accumulate_into(adj, *a, g.binary(&d, |x, y| x * y));
            }
            Op::Softplus(a) => {
                let d = val(*a).map(|x| 1.0 / (1.0 + (-x).exp()));
                Self::accumulate_into(adj, *a, g.binary(&d, |x, y| x * y));
            }
            Op::Exp(a) => {
                Self::accumulate_into(adj, *a, g.binary(&self.nodes[i].value, |x, y| x * y));
            }
            Op::Ln(a) => {
                let d = val(*a).map(|x| 1.0 / x);
                Self::accumulate_into(adj, *a, g.binary(&d, |x, y| x * y));
            }
            Op::Sin(a) => {
                let d = val(*a).map(f64::cos);
                Self::accumulate_into(adj, *a, g.binary(&d, |x, y| x * y));
            }
            Op::Cos(a) => {
                let d = val(*a).map(|x| -x.sin());
                Self::accumulate_into(adj, *a, g.binary(&d, |x, y| x * y));
            }
            Op::Sqrt(a) => {
                let d = self.nodes[i].value.map(|y| 0.5 / y);
                Self::accumulate_into(adj, *a, g.binary(&d, |x, y| x * y));
            }
            Op::Sum(a) => {
                let n = val(*a).v().len();
                let gv = g.s();
                Self::accumulate_into(adj, *a, Value::V(Array1::from_elem(n, gv)));
            }
            Op::Dot(a, b) => {
                let gv = g.s();
                Self::accumulate_into(adj, *a, Value::V(val(*b).v() * gv));
                Self::accumulate_into(adj, *b, Value::V(val(*a).v() * gv));
            }
            Op::Norm(a) => {
                let n = self.nodes[i].value.s().max(1e-300);
                let gv = g.s() / n;
                Self::accumulate_into(adj, *a, Value::V(val(*a).v() * gv));
            }
            Op::Cross(a, b) => {
                let gv = g.v();
                let x = val(*a).v();
                let y = val(*b).v();
                let ga = Array1::from(vec![
                    y[1] * gv[2] - y[2] * gv[1],
                    y[2] * gv[0] - y[0] * gv[2],
                    y[0] * gv[1] - y[1] * gv[0],
                ]);
                let gb = Array1::from(vec![
                    gv[1] * x[2] - gv[2] * x[1],
                    gv[2] * x[0] - gv[0] * x[2],
                    gv[0] * x[1] - gv[1] * x[0],
                ]);
                Self::accumulate_into(adj, *a, Value::V(ga));
                Self::accumulate_into(adj, *b, Value::V(gb));
            }
            Op::MulVS(v, s) => {
                let gv = g.v();
                let sv = val(*s).s();
                Self::accumulate_into(adj, *v, Value::V(gv * sv));
                Self::accumulate_into(adj, *s, Value::S(gv.dot(val(*v).v())));
            }
            Op::Index(v, idx) => {
                let mut d = Array1::zeros(val(*v).v().len());
                d[*idx] = g.s();
                Self::accumulate_into(adj, *v, Value::V(d));
            }
            Op::StackS(parts) => {
                let gv = g.v();
                for (k, p) in parts.iter().enumerate() {
                    Self::accumulate_into(adj, *p, Value::S(gv[k]));
                }
            }
            Op::ConcatV(parts) => {
                let gv = g.v();
                let mut off = 0;
                for p in parts {
                    let len = val(*p).v().len();
                    Self::accumulate_into(
                        adj,
                        *p,
                        Value::V(gv.slice(ndarray::s![off..off + len]).to_owned()),
                    );
                    off += len;
                }
            }
            Op::LogSumExp(a) => {
                let y = self.nodes[i].value.s();
                let gs = g.s();
                let d = val(*a).v().mapv(|x| (x - y).exp() * gs);
                Self::accumulate_into(adj, *a, Value::V(d));
            }
            Op::MatMul(a, b) => {
                let gm = g.m();
                Self::accumulate_into(adj, *a, Value::M(gm.dot(&val(*b).m().t())));
                Self::accumulate_into(adj, *b, Value::M(val(*a).m().t().dot(gm)));
            }
            Op::AddRowBroadcast(m, v) => {
                let gm = g.m();
                Self::accumulate_into(adj, *m, Value::M(gm.clone()));
                Self::accumulate_into(adj, *v, Value::V(gm.sum_axis(Axis(0))));
            }
            Op::Row(m, idx) => {
                let src = val(*m).m();
                let mut d = Array2::zeros(src.dim());
                d.row_mut(*idx).assign(g.v());
                Self::accumulate_into(adj, *m, Value::M(d));
            }
            Op::Slice(v, start, len) => {
                let mut d = Array1::zeros(val(*v).v().len());
                d.slice_mut(ndarray::s![*start..*start + *len]).assign(g.v());
                Self::accumulate_into(adj, *v, Value::V(d));
            }
            Op::ExpMapRot(v) => {
                let x = val(*v).v();
                let (_, jac) = exp_map_with_jacobian(&[x[0], x[1], x[2]]);
                let gv = g.v();
                let mut d = Array1::zeros(3);
                for e in 0..9 {
                    for k in 0..3 {
                        d[k] += gv[e] * jac[e][k];
                    }
                }
                Self::accumulate_into(adj, *v, Value::V(d));
            }
            Op::RepAct { r, f, spec } => {
                let rv = val(*r).v();
                let fv = val(*f).v();
                let gv = g.v();
                // W^T g for the coefficient input
                let m = flat_to_mat(rv);
                let blocks = real_rep_blocks(&m, spec.max_degree());
                let mut gf = Array1::zeros(fv.len());
                let mut off = 0;
                for &(l, n) in spec.blocks() {
                    let bd = 2 * l + 1;
                    let li = l as i64;
                    for _ in 0..n {
                        for j in 0..bd {
                            let mut acc = 0.0;
                            for ii in 0..bd {
                                acc += blocks[l].get(ii as i64 - li, j as i64 - li)
                                    * gv[off + ii];
                            }
                            gf[off + j] = acc;
                        }
                        off += bd;
                    }
                }
                Self::accumulate_into(adj, *f, Value::V(gf));
                // J^T g for the rotation entries via a dual forward pass
                let mut rd = [[Dual9::from_f64(0.0); 3]; 3];
                for ii in 0..3 {
                    for jj in 0..3 {
                        rd[ii][jj] = Dual9::seeded(rv[3 * ii + jj], 3 * ii + jj);
                    }
                }
                let fd: Vec<Dual9> = fv.iter().map(|&x| Dual9::constant(x)).collect();
                let out = act_recursive(spec, &rd, &fd);
                let mut gr = Array1::zeros(9);
                for (oi, o) in out.iter().enumerate() {
                    for e in 0..9 {
                        gr[e] += gv[oi] * o.d[e];
                    }
                }
                Self::accumulate_into(adj, *r, Value::V(gr));
            }
        }
    }
}

fn flat_to_mat(rv: &Array1<f64>) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = rv[3 * i + j];
        }
    }
    m
}

/// Central finite-difference gradient of a scalar function, for checks.
pub fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + eps;
        let fp = f(&xp);
        xp[i] = orig - eps;
        let fm = f(&xp);
        xp[i] = orig;
        g.push((fp - fm) / (2.0 * eps));
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0_f64).max(a.abs().max(b.abs()))
    }

    /// Composite scalar expression exercising most elementwise and vector
    /// ops; gradient checked against central differences.
    fn composite(x: &[f64]) -> (Tape, NodeId, NodeId) {
        let mut t = Tape::new();
        let v = t.vector(Array1::from(x.to_vec()));
        let a = t.slice(v, 0, 3);
        let b = t.slice(v, 3, 3);
        let c = t.cross(a, b);
        let n = t.norm(c);
        let sp = t.softplus(n);
        let d = t.dot(a, b);
        let sn = t.sin(d);
        let e = t.mul_vs(c, sn);
        let th = t.tanh(e);
        let s1 = t.sum(th);
        let lv = t.stack_scalars(&[s1, sp, d]);
        let lse = t.logsumexp(lv);
        let sq = t.mul(lse, lse);
        let ex = t.exp(sn);
        let ln_in = t.add_const(ex, 2.0);
        let l = t.ln(ln_in);
        let total = t.add(sq, l);
        let total2 = t.scale(total, 0.5);
        (t, v, total2)
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let (t, v, loss) = composite(&x);
            let g = t.grad(loss);
            let ga = g.get(v).unwrap().v().clone();
            let fd = finite_diff(
                |y| {
                    let (t, _, l) = composite(y);
                    t.value(l).s()
                },
                &x,
                1e-6,
            );
            for i in 0..6 {
                assert!(
                    rel_err(ga[i], fd[i]) < 1e-6,
                    "component {i}: {} vs {}",
                    ga[i],
                    fd[i]
                );
            }
        }
    }

    #[test]
    fn matmul_layer_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (b, nin, nout) = (4, 5, 3);
        let x: Vec<f64> = (0..b * nin).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..nin * nout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..nout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let run = |w: &[f64], bias: &[f64]| {
            let mut t = Tape::new();
            let xm = t.matrix(Array2::from_shape_vec((b, nin), x.clone()).unwrap());
            let wm = t.matrix(Array2::from_shape_vec((nin, nout), w.to_vec()).unwrap());
            let bv = t.vector(Array1::from(bias.to_vec()));
            let h = t.matmul(xm, wm);
            let hb = t.add_row_broadcast(h, bv);
            let a = t.tanh(hb);
            // loss = sum of squares over all rows
            let mut loss = t.scalar(0.0);
            for i in 0..b {
                let r = t.row(a, i);
                let d = t.dot(r, r);
                loss = t.add(loss, d);
            }
            (t, wm, bv, loss)
        };
        let (t, wm, bv, loss) = run(&w, &bias);
        let g = t.grad(loss);
        let gw = g.get(wm).unwrap().m().clone();
        let gb = g.get(bv).unwrap().v().clone();
        let fdw = finite_diff(
            |y| {
                let (t, _, _, l) = run(y, &bias);
                t.value(l).s()
            },
            &w,
            1e-6,
        );
        for i in 0..nin * nout {
            assert!(rel_err(gw[(i / nout, i % nout)], fdw[i]) < 1e-6);
        }
        let fdb = finite_diff(
            |y| {
                let (t, _, _, l) = run(&w, y);
                t.value(l).s()
            },
            &bias,
            1e-6,
        );
        for i in 0..nout {
            assert!(rel_err(gb[i], fdb[i]) < 1e-6);
        }
    }

    #[test]
    fn exp_map_rot_chain_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<f64> = (0..9).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let run = |v: &[f64]| {
            let mut t = Tape::new();
            let vin = t.vector(Array1::from(v.to_vec()));
            let r = t.exp_map_rot(vin);
            let target = t.vector(Array1::from(w.clone()));
            let d = t.sub(r, target);
            let loss = t.dot(d, d);
            (t, vin, loss)
        };
        for _ in 0..20 {
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (t, vin, loss) = run(&v);
            let g = t.grad(loss);
            let ga = g.get(vin).unwrap().v().clone();
            let fd = finite_diff(
                |y| {
                    let (t, _, l) = run(y);
                    t.value(l).s()
                },
                &v,
                1e-6,
            );
            for i in 0..3 {
                assert!(rel_err(ga[i], fd[i]) < 1e-6, "{} vs {}", ga[i], fd[i]);
            }
        }
    }

    #[test]
    fn rep_act_gradients_match_finite_differences() {
        use crate::wigner::RepSpec;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = RepSpec::degrees_up_to(2, 2).unwrap();
        let dim = spec.total_dim();
        let g_out: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let run = |v: &[f64], f: &[f64]| {
            let mut t = Tape::new();
            let vin = t.vector(Array1::from(v.to_vec()));
            let fin = t.vector(Array1::from(f.to_vec()));
            let r = t.exp_map_rot(vin);
            let out = t.rep_act(&spec, r, fin);
            let w = t.vector(Array1::from(g_out.clone()));
            let loss = t.dot(out, w);
            (t, vin, fin, loss)
        };
        let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let f: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (t, vin, fin, loss) = run(&v, &f);
        let g = t.grad(loss);
        let gv = g.get(vin).unwrap().v().clone();
        let gf = g.get(fin).unwrap().v().clone();
        let fdv = finite_diff(
            |y| {
                let (t, _, _, l) = run(y, &f);
                t.value(l).s()
            },
            &v,
            1e-6,
        );
        for i in 0..3 {
            assert!(rel_err(gv[i], fdv[i]) < 1e-6, "{} vs {}", gv[i], fdv[i]);
        }
        let fdf = finite_diff(
            |y| {
                let (t, _, _, l) = run(&v, y);
                t.value(l).s()
            },
            &f,
            1e-6,
        );
        for i in 0..dim {
            assert!(rel_err(gf[i], fdf[i]) < 1e-6, "{} vs {}", gf[i], fdf[i]);
        }
    }

    #[test]
    fn gradient_flows_to_sigma_through_reparameterized_sample() {
        // v = sigma .* eps with eps constant: d loss / d sigma = eps .* dv
        let mut t = Tape::new();
        let sigma = t.vector(Array1::from(vec![0.5, 1.0, 2.0]));
        let eps = t.vector(Array1::from(vec![0.3, -0.7, 0.2]));
        let v = t.mul(sigma, eps);
        let loss = t.dot(v, v);
        let g = t.grad(loss);
        let gs = g.get(sigma).unwrap().v().clone();
        // d/d sigma_i (sigma_i eps_i)^2 = 2 sigma_i eps_i^2
        for (i, (s, e)) in [(0.5, 0.3), (1.0, -0.7), (2.0, 0.2)].iter().enumerate() {
            assert!((gs[i] - 2.0 * s * e * e).abs() < 1e-12);
        }
        assert!(g.get(eps).is_some());
    }

    #[test]
    fn unused_nodes_get_no_gradient() {
        let mut t = Tape::new();
        let a = t.scalar(2.0);
        let b = t.scalar(3.0);
        let loss = t.mul(a, a);
        let g = t.grad(loss);
        assert!(g.get(b).is_none());
        assert!((g.get(a).unwrap().s() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn max_const_clips_gradient() {
        let mut t = Tape::new();
        let v = t.vector(Array1::from(vec![-1.0, 2.0]));
        let m = t.max_const(v, 0.0);
        let loss = t.sum(m);
        let g = t.grad(loss);
        let gv = g.get(v).unwrap().v().clone();
        assert_eq!(gv[0], 0.0);
        assert_eq!(gv[1], 1.0);
    }

    #[test]
    fn second_use_of_node_accumulates() {
        let mut t = Tape::new();
        let a = t.scalar(3.0);
        let b = t.mul(a, a); // 9, da = 6
        let c = t.add(b, a); // da = 7
        let g = t.grad(c);
        assert!((g.get(a).unwrap().s() - 7.0).abs() < 1e-12);
    }
}
