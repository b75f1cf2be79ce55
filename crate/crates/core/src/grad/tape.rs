use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;

/// Primitive recorded on the tape; used to name the culprit when a
/// non-finite value shows up.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sqrt,
    Exp,
    Ln,
    Tanh,
    Atanh,
    Asinh,
    LeakyRelu,
    Dot,
    Sum,
    Norm,
    LogSumExp,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Sqrt => "sqrt",
            Op::Exp => "exp",
            Op::Ln => "ln",
            Op::Tanh => "tanh",
            Op::Atanh => "atanh",
            Op::Asinh => "asinh",
            Op::LeakyRelu => "leaky_relu",
            Op::Dot => "dot",
            Op::Sum => "sum",
            Op::Norm => "norm",
            Op::LogSumExp => "log_sum_exp",
        }
    }
}

#[derive(Default)]
struct Nodes {
    vals: Vec<f64>,
    ops: Vec<Op>,
    // node i owns edges[offsets[i]..offsets[i + 1]]
    offsets: Vec<usize>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

/// Wengert list for reverse-mode differentiation. Every node stores its
/// local partials against each parent, so the backward sweep is a single
/// reverse pass with no closures.
pub struct Tape {
    nodes: RefCell<Nodes>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        let nodes = Nodes {
            offsets: vec![0],
            ..Default::default()
        };
        Tape {
            nodes: RefCell::new(nodes),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A fresh independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(value, Op::Leaf, std::iter::empty());
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    fn push(&self, val: f64, op: Op, edges: impl Iterator<Item = (u32, f64)>) -> u32 {
        let mut n = self.nodes.borrow_mut();
        let idx = n.vals.len() as u32;
        n.vals.push(val);
        n.ops.push(op);
        for (p, d) in edges {
            n.parents.push(p);
            n.partials.push(d);
        }
        let end = n.parents.len();
        n.offsets.push(end);
        idx
    }

    /// First node (in creation order) holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<(usize, Op)> {
        let n = self.nodes.borrow();
        n.vals.iter().position(|v| !v.is_finite()).map(|i| (i, n.ops[i]))
    }

    /// Adjoints of every node with respect to `output`.
    pub fn gradient(&self, output: Var<'_>) -> Gradients {
        let n = self.nodes.borrow();
        let mut adj = vec![0.0; n.vals.len()];
        if let Some(out) = output.index() {
            adj[out] = 1.0;
            for i in (0..=out).rev() {
                let a = adj[i];
                if a == 0.0 {
                    continue;
                }
                for e in n.offsets[i]..n.offsets[i + 1] {
                    adj[n.parents[e] as usize] += n.partials[e] * a;
                }
            }
        }
        Gradients { adj }
    }
}

pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        v.index().map_or(0.0, |i| self.adj[i])
    }
}

const CONST: u32 = u32::MAX;

/// Scalar handle into a [`Tape`]. Constants carry no tape and cost nothing
/// to combine with.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index() {
            Some(i) => write!(f, "Var(#{i} = {})", self.val),
            None => write!(f, "Const({})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Var {
            tape: None,
            idx: CONST,
            val,
        }
    }

    pub fn index(&self) -> Option<usize> {
        (self.idx != CONST).then_some(self.idx as usize)
    }

    pub fn is_constant(&self) -> bool {
        self.idx == CONST
    }

    fn unary(self, op: Op, val: f64, d: f64) -> Self {
        match self.tape {
            Some(t) => Var {
                tape: Some(t),
                idx: t.push(val, op, std::iter::once((self.idx, d))),
                val,
            },
            None => Var::constant(val),
        }
    }

    fn binary(self, rhs: Self, op: Op, val: f64, da: f64, db: f64) -> Self {
        let tape = match (self.tape, rhs.tape) {
            (Some(t), _) | (None, Some(t)) => t,
            (None, None) => return Var::constant(val),
        };
        let edges = [(self, da), (rhs, db)]
            .into_iter()
            .filter(|(v, _)| !v.is_constant())
            .map(|(v, d)| (v.idx, d));
        Var {
            tape: Some(tape),
            idx: tape.push(val, op, edges),
            val,
        }
    }

    fn nary(tape: Option<&'t Tape>, op: Op, val: f64, edges: Vec<(u32, f64)>) -> Self {
        match tape {
            Some(t) if !edges.is_empty() => Var {
                tape: Some(t),
                idx: t.push(val, op, edges.into_iter()),
                val,
            },
            _ => Var::constant(val),
        }
    }
}

fn tape_of<'t>(xs: &[Var<'t>]) -> Option<&'t Tape> {
    xs.iter().find_map(|v| v.tape)
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Add, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Sub, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Mul, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.binary(rhs, Op::Div, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(Op::Neg, -self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.unary(Op::Add, self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.unary(Op::Sub, self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.unary(Op::Mul, self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self.unary(Op::Div, self.val / rhs, 1.0 / rhs)
    }
}

impl<'t> Real for Var<'t> {
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }

    fn value(self) -> f64 {
        self.val
    }

    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(Op::Sqrt, s, 0.5 / s)
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(Op::Exp, e, e)
    }

    fn ln(self) -> Self {
        self.unary(Op::Ln, self.val.ln(), 1.0 / self.val)
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(Op::Tanh, t, 1.0 - t * t)
    }

    fn atanh(self) -> Self {
        let x = self.val;
        self.unary(Op::Atanh, x.atanh(), 1.0 / (1.0 - x * x))
    }

    fn asinh(self) -> Self {
        let x = self.val;
        self.unary(Op::Asinh, x.asinh(), 1.0 / (1.0 + x * x).sqrt())
    }

    fn leaky_relu(self, slope: f64) -> Self {
        if self.val >= 0.0 {
            self.unary(Op::LeakyRelu, self.val, 1.0)
        } else {
            self.unary(Op::LeakyRelu, slope * self.val, slope)
        }
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut val = 0.0;
        let mut edges = Vec::with_capacity(2 * a.len());
        for (x, y) in a.iter().zip(b) {
            val += x.val * y.val;
            if !x.is_constant() {
                edges.push((x.idx, y.val));
            }
            if !y.is_constant() {
                edges.push((y.idx, x.val));
            }
        }
        Var::nary(tape_of(a).or(tape_of(b)), Op::Dot, val, edges)
    }

    fn dot_const(w: &[f64], x: &[Self]) -> Self {
        debug_assert_eq!(w.len(), x.len());
        let mut val = 0.0;
        let mut edges = Vec::with_capacity(x.len());
        for (&a, v) in w.iter().zip(x) {
            val += v.val * a;
            if !v.is_constant() {
                edges.push((v.idx, a));
            }
        }
        Var::nary(tape_of(x), Op::Dot, val, edges)
    }

    fn sum(xs: &[Self]) -> Self {
        let mut val = 0.0;
        let mut edges = Vec::with_capacity(xs.len());
        for v in xs {
            val += v.val;
            if !v.is_constant() {
                edges.push((v.idx, 1.0));
            }
        }
        Var::nary(tape_of(xs), Op::Sum, val, edges)
    }

    fn norm(xs: &[Self]) -> Self {
        let s: f64 = xs.iter().map(|v| v.val * v.val).sum();
        let n = s.sqrt();
        let edges = if n == 0.0 {
            Vec::new()
        } else {
            xs.iter()
                .filter(|v| !v.is_constant())
                .map(|v| (v.idx, v.val / n))
                .collect()
        };
        Var::nary(tape_of(xs), Op::Norm, n, edges)
    }

    fn log_sum_exp(xs: &[Self]) -> Self {
        let m = xs.iter().map(|x| x.val).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = xs.iter().map(|x| (x.val - m).exp()).sum();
        let val = s.ln() + m;
        let edges = xs
            .iter()
            .filter(|v| !v.is_constant())
            .map(|v| (v.idx, (v.val - m).exp() / s))
            .collect();
        Var::nary(tape_of(xs), Op::LogSumExp, val, edges)
    }
}
