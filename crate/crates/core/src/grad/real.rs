use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type every differentiable kernel is written against.
///
/// `f64` evaluates directly; [`Var`](super::Var) records the same
/// computation on a tape so gradients can be pulled back afterwards.
/// Branches inside kernels (zero-norm guards, boundary clamps) look at
/// [`Real::value`], so both instantiations take identical paths.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Lift a constant. Constants never receive gradients.
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;

    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn atanh(self) -> Self;
    fn asinh(self) -> Self;
    fn leaky_relu(self, slope: f64) -> Self;

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).fold(Self::cst(0.0), |acc, (&x, &y)| acc + x * y)
    }

    /// Dot product against a constant weight row.
    fn dot_const(w: &[f64], x: &[Self]) -> Self {
        debug_assert_eq!(w.len(), x.len());
        w.iter().zip(x).fold(Self::cst(0.0), |acc, (&a, &b)| acc + b * a)
    }

    fn sum(xs: &[Self]) -> Self {
        xs.iter().fold(Self::cst(0.0), |acc, &x| acc + x)
    }

    /// Euclidean norm whose derivative at the origin is taken to be zero.
    fn norm(xs: &[Self]) -> Self {
        let s = Self::dot(xs, xs);
        if s.value() == 0.0 {
            Self::cst(0.0)
        } else {
            s.sqrt()
        }
    }

    /// `ln Σ exp(x_i)`, shifted by the max for stability.
    fn log_sum_exp(xs: &[Self]) -> Self {
        let m = xs.iter().map(|x| x.value()).fold(f64::NEG_INFINITY, f64::max);
        let s = xs.iter().fold(Self::cst(0.0), |acc, &x| acc + (x - m).exp());
        s.ln() + m
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn atanh(self) -> Self {
        f64::atanh(self)
    }
    #[inline]
    fn asinh(self) -> Self {
        f64::asinh(self)
    }
    #[inline]
    fn leaky_relu(self, slope: f64) -> Self {
        if self >= 0.0 {
            self
        } else {
            slope * self
        }
    }

    fn norm(xs: &[Self]) -> Self {
        xs.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}
