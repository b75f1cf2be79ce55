//! Reverse-mode differentiation for every trainable path, plus an
//! independent central-difference verifier.
//!
//! Kernels elsewhere in the crate are generic over [`Real`]. Running them
//! with `f64` evaluates; running them with [`Var`] records a tape that
//! [`value_and_grad`] pulls back. All trainable quantities are Euclidean
//! (ball points are reached through `exp_map`), so plain first-order
//! optimizers apply directly.

mod real;
mod tape;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use real::Real;
pub use tape::{Gradients, Op, Tape, Var};

use crate::error::{HaeError, Result};

/// One named tensor, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T = f64> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered collection of uniquely named tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet<T = f64> {
    tensors: Vec<Tensor<T>>,
}

impl<T> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { tensors: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(HaeError::DuplicateParam(name));
        }
        let expected: usize = shape.iter().product();
        crate::error::check_dim(expected, data.len())?;
        self.tensors.push(Tensor { name, shape, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn data(&self, name: &str) -> Result<&[T]> {
        self.get(name)
            .map(|t| t.data.as_slice())
            .ok_or_else(|| HaeError::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ParamSet<U> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(&mut f).collect(),
                })
                .collect(),
        }
    }

    /// Same names and shapes, in the same order.
    pub fn same_layout<U>(&self, other: &ParamSet<U>) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }
}

impl ParamSet<f64> {
    pub fn zeros_like(&self) -> Self {
        self.map(|_| 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// A scalar function of a [`ParamSet`] built from [`Real`] kernels.
pub trait Objective {
    fn eval<T: Real>(&self, params: &ParamSet<T>) -> Result<T>;
}

/// Loss value and exact gradients with respect to every tensor in `params`.
pub fn value_and_grad<O: Objective + ?Sized>(objective: &O, params: &ParamSet) -> Result<(f64, ParamSet)> {
    let tape = Tape::new();
    let vars = params.map(|&v| tape.var(v));
    let out = objective.eval(&vars)?;
    if let Some((_, op)) = tape.first_non_finite() {
        return Err(HaeError::NonFinite {
            op: op.name().to_string(),
        });
    }
    let grads = tape.gradient(out);
    let mut g = params.zeros_like();
    for (gt, vt) in g.iter_mut().zip(vars.iter()) {
        for (slot, v) in gt.data.iter_mut().zip(&vt.data) {
            *slot = grads.wrt(*v);
        }
    }
    Ok((out.value(), g))
}

#[derive(Clone, Debug)]
pub struct FdOptions {
    pub step: f64,
    pub tol: f64,
    /// Coordinates sampled per tensor; tensors at or below this size are
    /// checked exhaustively.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            step: 1e-6,
            tol: 1e-4,
            max_coords: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    /// `(tensor name, max relative error)` in parameter order.
    pub max_rel_error: Vec<(String, f64)>,
    pub worst: Option<Mismatch>,
    pub passed: bool,
}

impl GradReport {
    pub fn max_error(&self) -> f64 {
        self.max_rel_error.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// `|a - n| / max(1, |a|, |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares analytic gradients against central differences of the plain
/// `f64` evaluation.
pub fn finite_diff_check<O: Objective + ?Sized>(
    objective: &O,
    params: &ParamSet,
    opts: &FdOptions,
) -> Result<GradReport> {
    let (_, analytic) = value_and_grad(objective, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = params.clone();
    let mut report = GradReport {
        max_rel_error: Vec::with_capacity(params.len()),
        worst: None,
        passed: true,
    };
    for (ti, t) in params.iter().enumerate() {
        let n = t.data.len();
        let coords: Vec<usize> = if n <= opts.max_coords {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, opts.max_coords).into_vec();
            c.sort_unstable();
            c
        };
        let mut tensor_max = 0.0f64;
        for idx in coords {
            let orig = t.data[idx];
            probe.tensors[ti].data[idx] = orig + opts.step;
            let up = objective.eval(&probe)?;
            probe.tensors[ti].data[idx] = orig - opts.step;
            let down = objective.eval(&probe)?;
            probe.tensors[ti].data[idx] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(HaeError::NonFinite {
                    op: format!("finite difference at {}[{idx}]", t.name),
                });
            }
            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic.tensors[ti].data[idx];
            let err = relative_error(a, numeric);
            tensor_max = tensor_max.max(err);
            if report.worst.as_ref().is_none_or(|w| err > w.rel_error) {
                report.worst = Some(Mismatch {
                    tensor: t.name.clone(),
                    index: idx,
                    analytic: a,
                    numeric,
                    rel_error: err,
                });
            }
        }
        report.passed &= tensor_max <= opts.tol;
        report.max_rel_error.push((t.name.clone(), tensor_max));
    }
    Ok(report)
}
