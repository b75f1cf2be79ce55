//! Slice-level gyrovector kernels, generic over [`Real`] so the same code
//! serves evaluation and differentiation.
//!
//! Nothing here projects onto the ball unless its name says so; callers
//! decide where the boundary clamp applies. `c` is the curvature magnitude.

use crate::grad::Real;

/// Norms below this are treated as zero by direction-dependent formulas.
pub const ZERO_NORM: f64 = 1e-15;

/// Keeps `artanh` finite when rounding pushes its argument onto 1.
const ATANH_LIMIT: f64 = 1.0 - 1e-16;

fn atanh_safe<T: Real>(x: T) -> T {
    if x.value() >= ATANH_LIMIT {
        T::cst(ATANH_LIMIT.atanh())
    } else {
        x.atanh()
    }
}

pub fn sq_norm<T: Real>(x: &[T]) -> T {
    T::dot(x, x)
}

pub fn scale<T: Real>(x: &[T], k: T) -> Vec<T> {
    x.iter().map(|&v| v * k).collect()
}

pub fn neg<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| -v).collect()
}

/// `λ_x = 2 / (1 - c‖x‖²)`
pub fn conformal_factor<T: Real>(x: &[T], c: f64) -> T {
    T::cst(2.0) / (-(sq_norm(x) * c) + 1.0)
}

/// Möbius addition `x ⊕_c y`.
pub fn mobius_add<T: Real>(x: &[T], y: &[T], c: f64) -> Vec<T> {
    let xy = T::dot(x, y);
    let x2 = sq_norm(x);
    let y2 = sq_norm(y);
    let coef_y = -(x2 * c) + 1.0;
    // coef_x - coef_y = c‖x + y‖², which is exactly zero for y = -x
    let coef_x = coef_y + (xy * 2.0 + x2 + y2) * c;
    let denom = xy * (2.0 * c) + x2 * y2 * (c * c) + 1.0;
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (a * coef_x + b * coef_y) / denom)
        .collect()
}

/// `1 − c‖x ⊕_c y‖²` from the factors of `x` and `y` alone, without the
/// cancellation of forming the sum first.
pub fn mobius_add_gap<T: Real>(x: &[T], y: &[T], c: f64) -> T {
    let x2 = sq_norm(x);
    let y2 = sq_norm(y);
    let denom = T::dot(x, y) * (2.0 * c) + x2 * y2 * (c * c) + 1.0;
    (-(x2 * c) + 1.0) * (-(y2 * c) + 1.0) / denom
}

/// Möbius scalar multiplication `t ⊗_c x`; `t ⊗ 0 = 0`.
pub fn mobius_scalar_mul<T: Real>(t: T, x: &[T], c: f64) -> Vec<T> {
    let n = T::norm(x);
    if n.value() < ZERO_NORM {
        return x.iter().map(|_| T::cst(0.0)).collect();
    }
    let sc = c.sqrt();
    let target = (t * atanh_safe(n * sc)).tanh() / sc;
    scale(x, target / n)
}

/// Exponential map at the origin: `tanh(√c‖v‖) v / (√c‖v‖)`.
pub fn exp_map0<T: Real>(v: &[T], c: f64) -> Vec<T> {
    let n = T::norm(v);
    if n.value() < ZERO_NORM {
        return v.to_vec();
    }
    let sc = c.sqrt();
    scale(v, (n * sc).tanh() / (n * sc))
}

/// Logarithmic map at the origin: `artanh(√c‖y‖) y / (√c‖y‖)`.
pub fn log_map0<T: Real>(y: &[T], c: f64) -> Vec<T> {
    let n = T::norm(y);
    if n.value() < ZERO_NORM {
        return y.to_vec();
    }
    let sc = c.sqrt();
    scale(y, atanh_safe(n * sc) / (n * sc))
}

/// `exp_x(v) = x ⊕ tanh(√c λ_x ‖v‖ / 2) v / (√c‖v‖)`
pub fn exp_map<T: Real>(base: &[T], v: &[T], c: f64) -> Vec<T> {
    let n = T::norm(v);
    if n.value() < ZERO_NORM {
        return base.to_vec();
    }
    let sc = c.sqrt();
    let lambda = conformal_factor(base, c);
    let step = scale(v, (lambda * n * (sc / 2.0)).tanh() / (n * sc));
    mobius_add(base, &step, c)
}

/// `log_x(y) = 2/(√c λ_x) artanh(√c‖u‖) u/‖u‖` with `u = (-x) ⊕ y`.
pub fn log_map<T: Real>(base: &[T], y: &[T], c: f64) -> Vec<T> {
    let u = mobius_add(&neg(base), y, c);
    let n = T::norm(&u);
    if n.value() < ZERO_NORM {
        return u.iter().map(|_| T::cst(0.0)).collect();
    }
    let sc = c.sqrt();
    let lambda = conformal_factor(base, c);
    let k = atanh_safe(n * sc) * 2.0 / (lambda * sc * n);
    scale(&u, k)
}

/// Gyro form of the distance: `(2/√c) artanh(√c‖(-x) ⊕ y‖)`.
pub fn distance<T: Real>(x: &[T], y: &[T], c: f64) -> T {
    let u = mobius_add(&neg(x), y, c);
    let sc = c.sqrt();
    atanh_safe(T::norm(&u) * sc) * (2.0 / sc)
}

/// Closed form `(1/√c) arccosh(1 + 2c‖x-y‖² / ((1-c‖x‖²)(1-c‖y‖²)))`,
/// evaluated as `ln1p(δ + √(δ(2+δ)))` to keep precision for nearby points.
pub fn distance_arccosh(x: &[f64], y: &[f64], c: f64) -> f64 {
    let diff: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let x2: f64 = x.iter().map(|v| v * v).sum();
    let y2: f64 = y.iter().map(|v| v * v).sum();
    let delta = 2.0 * c * diff / ((1.0 - c * x2) * (1.0 - c * y2));
    (delta + (delta * (2.0 + delta)).sqrt()).ln_1p() / c.sqrt()
}

/// Hyperbolic distance to the origin.
pub fn radius<T: Real>(x: &[T], c: f64) -> T {
    let sc = c.sqrt();
    atanh_safe(T::norm(x) * sc) * (2.0 / sc)
}

/// Euclidean norm of a point at hyperbolic radius `r`.
pub fn norm_at_radius(r: f64, c: f64) -> f64 {
    (c.sqrt() * r / 2.0).tanh() / c.sqrt()
}

/// Rescales to Euclidean norm `(1 - eps)/√c` when outside it. A few ulps
/// of slack keep the map idempotent: a rescaled point may land just past
/// the sphere through rounding.
pub fn project<T: Real>(x: &[T], c: f64, eps: f64) -> Vec<T> {
    let n = T::norm(x);
    let max = (1.0 - eps) / c.sqrt();
    if n.value() > max * (1.0 + 4.0 * f64::EPSILON) {
        scale(x, T::cst(max) / n)
    } else {
        x.to_vec()
    }
}

/// `γ(t) = x ⊕ t ⊗ ((-x) ⊕ y)`
pub fn geodesic<T: Real>(x: &[T], y: &[T], t: f64, c: f64) -> Vec<T> {
    let u = mobius_add(&neg(x), y, c);
    let step = mobius_scalar_mul(T::cst(t), &u, c);
    mobius_add(x, &step, c)
}

/// Same direction as `x`, placed at hyperbolic radius `r`.
pub fn rescale_to_radius<T: Real>(x: &[T], r: T, c: f64) -> Vec<T> {
    let n = T::norm(x);
    let sc = c.sqrt();
    scale(x, (r * (sc / 2.0)).tanh() / (n * sc))
}
