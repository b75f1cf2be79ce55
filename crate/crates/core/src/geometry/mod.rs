//! The Poincaré ball `{x : c‖x‖² < 1}` and its gyrovector operations.
//!
//! `c > 0` is the magnitude of the (negative) sectional curvature, so the
//! unit ball with curvature −1 is `c = 1`. Every ball-valued operation
//! returns a point that has passed through [`project_to_ball`], which keeps
//! `√c‖x‖ ≤ 1 − ε`. With the default `ε = 4e-3` the largest reachable
//! hyperbolic radius is `ln((2 − ε)/ε) ≈ 6.2126`.

pub mod kernels;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HaeError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Curvature(c))
        } else {
            Err(HaeError::InvalidArgument(format!(
                "curvature must be positive, got {c}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Curvature(1.0)
    }
}

impl TryFrom<f64> for Curvature {
    type Error = HaeError;
    fn try_from(c: f64) -> Result<Self> {
        Curvature::new(c)
    }
}

impl From<Curvature> for f64 {
    fn from(c: Curvature) -> f64 {
        c.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BoundaryEpsilon(f64);

impl BoundaryEpsilon {
    pub const DEFAULT: f64 = 4e-3;

    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps < 1.0 {
            Ok(BoundaryEpsilon(eps))
        } else {
            Err(HaeError::InvalidArgument(format!(
                "boundary epsilon must lie in (0, 1), got {eps}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for BoundaryEpsilon {
    fn default() -> Self {
        BoundaryEpsilon(Self::DEFAULT)
    }
}

impl TryFrom<f64> for BoundaryEpsilon {
    type Error = HaeError;
    fn try_from(e: f64) -> Result<Self> {
        BoundaryEpsilon::new(e)
    }
}

impl From<BoundaryEpsilon> for f64 {
    fn from(e: BoundaryEpsilon) -> f64 {
        e.0
    }
}

/// Curvature plus boundary clamp: everything needed to interpret a point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub curvature: Curvature,
    pub eps: BoundaryEpsilon,
}

impl Ball {
    pub fn new(c: f64, eps: f64) -> Result<Self> {
        Ok(Ball {
            curvature: Curvature::new(c)?,
            eps: BoundaryEpsilon::new(eps)?,
        })
    }

    pub fn c(&self) -> f64 {
        self.curvature.get()
    }

    pub fn eps(&self) -> f64 {
        self.eps.get()
    }

    /// Largest Euclidean norm a projected point can have.
    pub fn max_norm(&self) -> f64 {
        (1.0 - self.eps()) / self.c().sqrt()
    }

    /// `(2/√c) artanh(1 − ε)`
    pub fn r_max(&self) -> f64 {
        2.0 / self.c().sqrt() * (1.0 - self.eps()).atanh()
    }

    pub fn origin(&self, dim: usize) -> PoincarePoint {
        PoincarePoint {
            coords: vec![0.0; dim],
            ball: *self,
        }
    }

    /// Projects `coords` into the ball; see [`project_to_ball`].
    pub fn point(&self, coords: &[f64]) -> Result<PoincarePoint> {
        project_to_ball(self, coords)
    }

    pub fn radius(&self, value: f64) -> Result<HyperbolicRadius> {
        HyperbolicRadius::new(value, self)
    }
}

/// A point strictly inside the ball.
#[derive(Clone, Debug, PartialEq)]
pub struct PoincarePoint {
    coords: Vec<f64>,
    ball: Ball,
}

impl PoincarePoint {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn ball(&self) -> Ball {
        self.ball
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_origin(&self) -> bool {
        self.norm() < kernels::ZERO_NORM
    }

    /// Gyro-inverse `-x`.
    pub fn negate(&self) -> PoincarePoint {
        PoincarePoint {
            coords: kernels::neg(&self.coords),
            ball: self.ball,
        }
    }

    fn compatible(&self, other: &PoincarePoint) -> Result<()> {
        if self.ball.curvature != other.ball.curvature {
            return Err(HaeError::CurvatureMismatch {
                left: self.ball.c(),
                right: other.ball.c(),
            });
        }
        check_dim(self.dim(), other.dim())
    }

    fn wrap(&self, coords: Vec<f64>) -> PoincarePoint {
        let coords = kernels::project(&coords, self.ball.c(), self.ball.eps());
        PoincarePoint {
            coords,
            ball: self.ball,
        }
    }
}

/// Euclidean vector in the tangent space at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    coords: Vec<f64>,
    base: PoincarePoint,
}

impl TangentVector {
    pub fn new(base: &PoincarePoint, coords: Vec<f64>) -> Result<Self> {
        check_dim(base.dim(), coords.len())?;
        Ok(TangentVector {
            coords,
            base: base.clone(),
        })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn base(&self) -> &PoincarePoint {
        &self.base
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Hyperbolic distance to the origin, within `[0, r_max]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct HyperbolicRadius(f64);

impl HyperbolicRadius {
    pub fn new(value: f64, ball: &Ball) -> Result<Self> {
        // tolerate the last ulp or so from round trips through tanh
        let r_max = ball.r_max();
        if value.is_finite() && value >= 0.0 && value <= r_max * (1.0 + 1e-12) {
            Ok(HyperbolicRadius(value.min(r_max)))
        } else {
            Err(HaeError::InvalidArgument(format!(
                "radius {value} outside [0, {r_max}]"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `λ_x = 2/(1 − c‖x‖²)`
pub fn conformal_factor(x: &PoincarePoint) -> f64 {
    kernels::conformal_factor(&x.coords, x.ball.c())
}

pub fn mobius_add(x: &PoincarePoint, y: &PoincarePoint) -> Result<PoincarePoint> {
    x.compatible(y)?;
    Ok(x.wrap(kernels::mobius_add(&x.coords, &y.coords, x.ball.c())))
}

pub fn mobius_scalar_mul(t: f64, x: &PoincarePoint) -> PoincarePoint {
    x.wrap(kernels::mobius_scalar_mul(t, &x.coords, x.ball.c()))
}

pub fn exp_map(base: &PoincarePoint, v: &TangentVector) -> Result<PoincarePoint> {
    if v.base.coords != base.coords || v.base.ball != base.ball {
        return Err(HaeError::BaseMismatch);
    }
    Ok(base.wrap(kernels::exp_map(&base.coords, &v.coords, base.ball.c())))
}

/// `exp_0(v)` for a raw Euclidean vector.
pub fn exp_map0(ball: &Ball, v: &[f64]) -> Result<PoincarePoint> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(HaeError::NonFinite { op: "exp_map0".into() });
    }
    project_to_ball(ball, &kernels::exp_map0(v, ball.c()))
}

pub fn log_map(base: &PoincarePoint, y: &PoincarePoint) -> Result<TangentVector> {
    base.compatible(y)?;
    Ok(TangentVector {
        coords: kernels::log_map(&base.coords, &y.coords, base.ball.c()),
        base: base.clone(),
    })
}

/// `log_0(y)` as a raw Euclidean vector.
pub fn log_map0(y: &PoincarePoint) -> Vec<f64> {
    kernels::log_map0(&y.coords, y.ball.c())
}

/// Gyro form `(2/√c) artanh(√c‖(−x) ⊕ y‖)`.
pub fn distance(x: &PoincarePoint, y: &PoincarePoint) -> Result<f64> {
    x.compatible(y)?;
    Ok(kernels::distance(&x.coords, &y.coords, x.ball.c()))
}

/// Closed form through `arccosh`; agrees with [`distance`].
pub fn distance_arccosh(x: &PoincarePoint, y: &PoincarePoint) -> Result<f64> {
    x.compatible(y)?;
    Ok(kernels::distance_arccosh(&x.coords, &y.coords, x.ball.c()))
}

pub fn radius(x: &PoincarePoint) -> HyperbolicRadius {
    let r = kernels::radius(&x.coords, x.ball.c());
    HyperbolicRadius(r.min(x.ball.r_max()))
}

/// Leaves points with `√c‖x‖ ≤ 1 − ε` untouched and pulls everything
/// else back onto that sphere along the same direction.
pub fn project_to_ball(ball: &Ball, coords: &[f64]) -> Result<PoincarePoint> {
    if coords.is_empty() {
        return Err(HaeError::Empty("point coordinates"));
    }
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(HaeError::NonFinite {
            op: "project_to_ball".into(),
        });
    }
    Ok(PoincarePoint {
        coords: kernels::project(coords, ball.c(), ball.eps()),
        ball: *ball,
    })
}

/// Point at fraction `t ∈ [0, 1]` along the geodesic from `x` to `y`.
pub fn geodesic(x: &PoincarePoint, y: &PoincarePoint, t: f64) -> Result<PoincarePoint> {
    if !(0.0..=1.0).contains(&t) {
        return Err(HaeError::InvalidArgument(format!(
            "geodesic parameter {t} outside [0, 1]; use geodesic_extrapolate"
        )));
    }
    geodesic_extrapolate(x, y, t)
}

/// [`geodesic`] without the range check on `t`.
pub fn geodesic_extrapolate(x: &PoincarePoint, y: &PoincarePoint, t: f64) -> Result<PoincarePoint> {
    x.compatible(y)?;
    if !t.is_finite() {
        return Err(HaeError::InvalidArgument("geodesic parameter must be finite".into()));
    }
    Ok(x.wrap(kernels::geodesic(&x.coords, &y.coords, t, x.ball.c())))
}

/// `(r / radius(x)) ⊗ x`: same direction, hyperbolic radius `r`.
pub fn rescale_to_radius(x: &PoincarePoint, r: HyperbolicRadius) -> Result<PoincarePoint> {
    if x.is_origin() {
        return Err(HaeError::ZeroVector("rescale_to_radius"));
    }
    Ok(x.wrap(kernels::rescale_to_radius(&x.coords, r.get(), x.ball.c())))
}
