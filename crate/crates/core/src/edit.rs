//! Editing ball codes: geodesic interpolation, radius-controlled
//! perturbation towards a reference, and shared tangent edits.
//!
//! The radius a code is rescaled to before an edit decides how much it can
//! move semantically. Near the boundary a fixed edit stays inside the
//! class; near the origin the same edit crosses into neighbouring classes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HaeError, Result};
use crate::geometry::{self, Ball, PoincarePoint};
use crate::io::fmt_f64;

/// Unit tangent vector at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditDirection {
    u: Vec<f64>,
}

impl EditDirection {
    /// Normalizes `v`.
    pub fn new(v: &[f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(HaeError::Empty("edit direction"));
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !n.is_finite() {
            return Err(HaeError::NonFinite {
                op: "edit direction".into(),
            });
        }
        if n <= geometry::kernels::ZERO_NORM {
            return Err(HaeError::ZeroVector("edit direction"));
        }
        Ok(EditDirection {
            u: v.iter().map(|x| x / n).collect(),
        })
    }

    /// Uniform on the unit sphere.
    pub fn random(dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            match Self::new(&v) {
                Err(HaeError::ZeroVector(_)) => continue,
                other => return other,
            }
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.u
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbStep {
    /// Fraction of the way along the geodesic to a rescaled reference.
    Geodesic { t: f64 },
    /// As `Geodesic`, then rescaled back to the target radius so the edit
    /// keeps the detail level the radius selects.
    GeodesicAtRadius { t: f64 },
    /// Tangent displacement at the origin.
    Tangent { s: f64 },
}

impl PerturbStep {
    pub fn value(self) -> f64 {
        match self {
            PerturbStep::Geodesic { t } | PerturbStep::GeodesicAtRadius { t } => t,
            PerturbStep::Tangent { s } => s,
        }
    }
}

impl Default for PerturbStep {
    fn default() -> Self {
        PerturbStep::Geodesic { t: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub target_radius: f64,
    pub step: PerturbStep,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn validate(&self, ball: &Ball) -> Result<()> {
        ball.radius(self.target_radius)?;
        match self.step {
            PerturbStep::Geodesic { t } | PerturbStep::GeodesicAtRadius { t } if !(0.0..=1.0).contains(&t) => Err(
                HaeError::InvalidArgument(format!("geodesic fraction {t} outside [0, 1]")),
            ),
            PerturbStep::Tangent { s } if !(s >= 0.0 && s.is_finite()) => Err(HaeError::InvalidArgument(format!(
                "tangent magnitude {s} must be finite and >= 0"
            ))),
            _ => Ok(()),
        }
    }
}

/// `steps` points of the geodesic from `zi` to `zj` at `t = k/(steps−1)`;
/// both endpoints are returned unchanged.
pub fn interpolate(zi: &PoincarePoint, zj: &PoincarePoint, steps: usize) -> Result<Vec<PoincarePoint>> {
    if steps < 2 {
        return Err(HaeError::InvalidArgument(format!(
            "interpolation needs at least 2 steps, got {steps}"
        )));
    }
    check_dim(zi.dim(), zj.dim())?;
    let last = steps - 1;
    (0..steps)
        .map(|k| match k {
            0 => Ok(zi.clone()),
            k if k == last => Ok(zj.clone()),
            k => geometry::geodesic(zi, zj, k as f64 / last as f64),
        })
        .collect()
}

/// Rescales `z` and a seeded pick from `pool` to the target radius, then
/// moves fraction `t` of the way from one to the other.
pub fn perturb_geodesic(z: &PoincarePoint, pool: &[PoincarePoint], t: f64, r: f64, seed: u64) -> Result<PoincarePoint> {
    let (zr, refr) = geodesic_endpoints(z, pool, r, seed)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(HaeError::InvalidArgument(format!(
            "geodesic fraction {t} outside [0, 1]"
        )));
    }
    if t == 0.0 {
        Ok(zr)
    } else if t == 1.0 {
        Ok(refr)
    } else {
        geometry::geodesic(&zr, &refr, t)
    }
}

/// [`perturb_geodesic`] followed by a rescale to `r`. Fails when the
/// geodesic passes exactly through the origin (antipodal endpoints at
/// `t = 0.5`).
pub fn perturb_geodesic_at_radius(
    z: &PoincarePoint,
    pool: &[PoincarePoint],
    t: f64,
    r: f64,
    seed: u64,
) -> Result<PoincarePoint> {
    let p = perturb_geodesic(z, pool, t, r, seed)?;
    geometry::rescale_to_radius(&p, z.ball().radius(r)?)
}

/// The rescaled source and the rescaled reference that
/// [`perturb_geodesic`] travels between.
pub fn geodesic_endpoints(
    z: &PoincarePoint,
    pool: &[PoincarePoint],
    r: f64,
    seed: u64,
) -> Result<(PoincarePoint, PoincarePoint)> {
    if pool.is_empty() {
        return Err(HaeError::Empty("reference pool"));
    }
    let r = z.ball().radius(r)?;
    let zr = geometry::rescale_to_radius(z, r)?;
    let pick = ChaCha8Rng::seed_from_u64(seed).random_range(0..pool.len());
    let reference = &pool[pick];
    check_dim(z.dim(), reference.dim())?;
    Ok((zr, geometry::rescale_to_radius(reference, r)?))
}

/// `rescale_to_radius(exp_0(log_0(z) + s·u), r)`
pub fn perturb_tangent(z: &PoincarePoint, u: &EditDirection, s: f64, r: f64) -> Result<PoincarePoint> {
    if z.is_origin() {
        return Err(HaeError::ZeroVector("perturb_tangent source"));
    }
    check_dim(z.dim(), u.dim())?;
    if !(s >= 0.0 && s.is_finite()) {
        return Err(HaeError::InvalidArgument(format!(
            "tangent magnitude {s} must be finite and >= 0"
        )));
    }
    let r = z.ball().radius(r)?;
    let moved = if s == 0.0 {
        z.clone()
    } else {
        let v: Vec<f64> = geometry::log_map0(z)
            .iter()
            .zip(u.as_slice())
            .map(|(a, b)| a + s * b)
            .collect();
        geometry::exp_map0(&z.ball(), &v)?
    };
    geometry::rescale_to_radius(&moved, r)
}

/// [`perturb_tangent`] with one shared `(u, s, r)` over every code.
pub fn transfer_edit(u: &EditDirection, s: f64, r: f64, codes: &[PoincarePoint]) -> Result<Vec<PoincarePoint>> {
    if codes.is_empty() {
        return Err(HaeError::Empty("codes to edit"));
    }
    codes.iter().map(|z| perturb_tangent(z, u, s, r)).collect()
}

/// Dispatches on the step kind. The tangent mode draws its direction from
/// `spec.seed`.
pub fn perturb(z: &PoincarePoint, pool: &[PoincarePoint], spec: &PerturbSpec) -> Result<PoincarePoint> {
    spec.validate(&z.ball())?;
    match spec.step {
        PerturbStep::Geodesic { t } => perturb_geodesic(z, pool, t, spec.target_radius, spec.seed),
        PerturbStep::GeodesicAtRadius { t } => perturb_geodesic_at_radius(z, pool, t, spec.target_radius, spec.seed),
        PerturbStep::Tangent { s } => {
            let u = EditDirection::random(z.dim(), spec.seed)?;
            perturb_tangent(z, &u, s, spec.target_radius)
        }
    }
}

/// One exported code, optionally with its decoded sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EditRow {
    pub id: usize,
    pub t_or_step: f64,
    pub z: Vec<f64>,
    pub decoded: Option<Vec<f64>>,
}

/// CSV `id,t_or_step,z0..z{n−1}`, followed by `x0..x{D−1}` when rows
/// carry decoded samples.
pub fn write_edits_to<W: Write>(rows: &[EditRow], w: &mut W) -> Result<()> {
    let n = rows.first().map_or(0, |r| r.z.len());
    let d = rows.first().and_then(|r| r.decoded.as_ref()).map(Vec::len);
    for r in rows {
        check_dim(n, r.z.len())?;
        if r.decoded.as_ref().map(Vec::len) != d {
            return Err(HaeError::InvalidArgument("rows disagree on decoded columns".into()));
        }
    }
    let mut header = String::from("id,t_or_step");
    (0..n).for_each(|i| header.push_str(&format!(",z{i}")));
    (0..d.unwrap_or(0)).for_each(|i| header.push_str(&format!(",x{i}")));
    writeln!(w, "{header}")?;
    for r in rows {
        let mut line = format!("{},{}", r.id, fmt_f64(r.t_or_step));
        for v in r.z.iter().chain(r.decoded.iter().flatten()) {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_edits(rows: &[EditRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_edits_to(rows, &mut w)?;
    w.flush()?;
    Ok(())
}
