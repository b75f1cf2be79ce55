//! Self-checks behind `hae check`: gyrovector identities on random point
//! pairs, and central-difference verification of every differentiable
//! kernel plus the end-to-end training loss.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::geometry::kernels;
use crate::grad::{finite_diff_check, FdOptions, Objective, ParamSet, Real};
use crate::hyperlayers::{HyperMlr, MobiusLinear};
use crate::losses::{nll_single, Lambda2Rule, LossWeights};
use crate::model::{HaeModel, ModelConfig};
use crate::train::BatchObjective;

/// Signature of an injectable distance, `(x, y, c) -> d`.
pub type DistanceFn = fn(&[f64], &[f64], f64) -> f64;

pub fn gyro_distance(x: &[f64], y: &[f64], c: f64) -> f64 {
    kernels::distance(x, y, c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub max_error: f64,
    pub tol: f64,
    /// Description of the worst case seen.
    pub worst: String,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tol
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub lines: Vec<CheckLine>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(CheckLine::passed)
    }

    /// The line with the largest error relative to its tolerance.
    pub fn worst(&self) -> Option<&CheckLine> {
        self.lines
            .iter()
            .max_by(|a, b| (a.max_error / a.tol).total_cmp(&(b.max_error / b.tol)))
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            let tag = if l.passed() { "ok  " } else { "FAIL" };
            writeln!(
                f,
                "{tag} {:<28} max error {:.3e} (tol {:.0e})",
                l.name, l.max_error, l.tol
            )?;
        }
        if let Some(w) = self.worst().filter(|w| !w.passed()) {
            writeln!(f, "worst offender: {} at {}", w.name, w.worst)?;
        }
        write!(
            f,
            "{} suite: {} in {:.2?}",
            self.suite,
            if self.passed() { "passed" } else { "FAILED" },
            self.elapsed
        )
    }
}

struct Tracker {
    lines: Vec<CheckLine>,
}

impl Tracker {
    fn new(names: &[&str], tol: f64) -> Self {
        Tracker {
            lines: names
                .iter()
                .map(|n| CheckLine {
                    name: n.to_string(),
                    max_error: 0.0,
                    tol,
                    worst: String::new(),
                })
                .collect(),
        }
    }

    fn record(&mut self, i: usize, err: f64, case: impl FnOnce() -> String) {
        let line = &mut self.lines[i];
        // NaN counts as the worst possible error
        if err.is_nan() || err > line.max_error {
            line.max_error = if err.is_nan() { f64::INFINITY } else { err };
            line.worst = case();
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn direction(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Uniform direction, hyperbolic radius uniform in `[0, max_radius]`.
pub fn random_point(dim: usize, max_radius: f64, c: f64, rng: &mut impl Rng) -> Vec<f64> {
    let r = rng.random_range(0.0..=max_radius);
    let n = kernels::norm_at_radius(r, c);
    direction(dim, rng).into_iter().map(|x| x * n).collect()
}

#[derive(Clone, Debug)]
pub struct IdentityOptions {
    pub pairs: usize,
    pub dim: usize,
    pub max_radius: f64,
    pub c: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        IdentityOptions {
            pairs: 10_000,
            dim: 16,
            max_radius: 6.0,
            c: 1.0,
            tol: 1e-8,
            seed: 0,
        }
    }
}

/// Gyrogroup identities, exp/log round trips and metric axioms on random
/// pairs. Kernels run unprojected: Möbius sums of two radius-6 points
/// reach radius 12, which the default boundary clamp would cut off.
pub fn identity_suite(opts: &IdentityOptions, dist: DistanceFn) -> SuiteReport {
    let start = Instant::now();
    let names = [
        "identity element",
        "left cancellation",
        "scalar distributivity",
        "scalar associativity",
        "exp0/log0 round trip",
        "exp/log round trip",
        "distance symmetry",
        "triangle inequality",
        "dual distance formula",
        "origin distance = radius",
    ];
    let mut t = Tracker::new(&names, opts.tol);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let c = opts.c;
    let zero = vec![0.0; opts.dim];
    let mut prev = random_point(opts.dim, opts.max_radius, c, &mut rng);

    for i in 0..opts.pairs {
        let x = random_point(opts.dim, opts.max_radius, c, &mut rng);
        let y = random_point(opts.dim, opts.max_radius, c, &mut rng);
        let case = || format!("pair {i}");

        let e = max_abs_diff(&kernels::mobius_add(&x, &zero, c), &x)
            .max(max_abs_diff(&kernels::mobius_add(&zero, &x, c), &x))
            .max(max_abs_diff(&kernels::mobius_add(&kernels::neg(&x), &x, c), &zero));
        t.record(0, e, case);

        let xy = kernels::mobius_add(&x, &y, c);
        t.record(
            1,
            max_abs_diff(&kernels::mobius_add(&kernels::neg(&x), &xy, c), &y),
            case,
        );

        let (r1, r2): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let lhs = kernels::mobius_scalar_mul(r1 + r2, &x, c);
        let rhs = kernels::mobius_add(
            &kernels::mobius_scalar_mul(r1, &x, c),
            &kernels::mobius_scalar_mul(r2, &x, c),
            c,
        );
        t.record(2, max_abs_diff(&lhs, &rhs), || {
            format!("pair {i}, r1 = {r1}, r2 = {r2}")
        });
        let nested = kernels::mobius_scalar_mul(r1, &kernels::mobius_scalar_mul(r2, &x, c), c);
        t.record(
            3,
            max_abs_diff(&kernels::mobius_scalar_mul(r1 * r2, &x, c), &nested),
            case,
        );

        let v = kernels::log_map0(&x, c);
        let e = max_abs_diff(&kernels::exp_map0(&v, c), &x)
            .max(max_abs_diff(&kernels::log_map0(&kernels::exp_map0(&v, c), c), &v));
        t.record(4, e, case);

        let u = kernels::log_map(&x, &y, c);
        t.record(5, max_abs_diff(&kernels::exp_map(&x, &u, c), &y), case);

        let dxy = dist(&x, &y, c);
        t.record(6, rel(dxy, dist(&y, &x, c)), case);
        let excess = dist(&x, &prev, c) - dxy - dist(&y, &prev, c);
        t.record(7, excess.max(0.0) / 1f64.max(dxy), case);
        t.record(8, rel(dxy, kernels::distance_arccosh(&x, &y, c)), case);
        t.record(9, rel(dist(&zero, &x, c), kernels::radius(&x, c)), case);
        prev = x;
    }
    SuiteReport {
        suite: "identities",
        lines: t.lines,
        elapsed: start.elapsed(),
    }
}

/// A differentiable kernel reduced to a scalar through fixed random
/// weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    MobiusAdd,
    ScalarMul,
    ExpMap0,
    LogMap0,
    ExpMap,
    LogMap,
    Distance,
    Geodesic,
    RescaleToRadius,
    MobiusLinear,
    MlrLogits,
    Nll,
}

impl Primitive {
    pub const ALL: [Primitive; 12] = [
        Primitive::MobiusAdd,
        Primitive::ScalarMul,
        Primitive::ExpMap0,
        Primitive::LogMap0,
        Primitive::ExpMap,
        Primitive::LogMap,
        Primitive::Distance,
        Primitive::Geodesic,
        Primitive::RescaleToRadius,
        Primitive::MobiusLinear,
        Primitive::MlrLogits,
        Primitive::Nll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::MobiusAdd => "mobius_add",
            Primitive::ScalarMul => "mobius_scalar_mul",
            Primitive::ExpMap0 => "exp_map0",
            Primitive::LogMap0 => "log_map0",
            Primitive::ExpMap => "exp_map",
            Primitive::LogMap => "log_map",
            Primitive::Distance => "distance",
            Primitive::Geodesic => "geodesic",
            Primitive::RescaleToRadius => "rescale_to_radius",
            Primitive::MobiusLinear => "mobius_linear",
            Primitive::MlrLogits => "mlr_logits",
            Primitive::Nll => "nll",
        }
    }
}

/// One sampled instance of a [`Primitive`]: its inputs as parameters and
/// the constants it closes over.
pub struct PrimitiveCase {
    pub primitive: Primitive,
    pub c: f64,
    pub eps: f64,
    /// Geodesic fraction or MLR label, depending on the primitive.
    pub t: f64,
    pub label: usize,
    pub weights: Vec<f64>,
    pub params: ParamSet,
}

impl PrimitiveCase {
    /// Random instance with every ball point at radius ≤ `max_radius`.
    pub fn random(primitive: Primitive, max_radius: f64, rng: &mut impl Rng) -> Result<Self> {
        let dim = rng.random_range(2..=6);
        let c = rng.random_range(0.5..2.0);
        let eps = 4e-3;
        let mut ps = ParamSet::new();
        let point = |rng: &mut ChaCha8Rng, r: f64| random_point(dim, r, c, rng);
        let mut local = ChaCha8Rng::seed_from_u64(rng.random());
        let out_dim;
        let mut label = 0;
        match primitive {
            Primitive::MobiusAdd | Primitive::LogMap | Primitive::Distance | Primitive::Geodesic => {
                ps.insert("x", vec![dim], point(&mut local, max_radius))?;
                ps.insert("y", vec![dim], point(&mut local, max_radius))?;
                out_dim = if primitive == Primitive::Distance { 1 } else { dim };
            }
            Primitive::ScalarMul => {
                // keep r ⊗ x inside the radius budget
                let x = point(&mut local, max_radius / 2.0);
                ps.insert("t", vec![1], vec![local.random_range(-2.0..2.0)])?;
                ps.insert("x", vec![dim], x)?;
                out_dim = dim;
            }
            Primitive::ExpMap0 => {
                let v = kernels::log_map0(&point(&mut local, max_radius), c);
                ps.insert("v", vec![dim], v)?;
                out_dim = dim;
            }
            Primitive::LogMap0 => {
                ps.insert("x", vec![dim], point(&mut local, max_radius))?;
                out_dim = dim;
            }
            Primitive::RescaleToRadius => {
                ps.insert("x", vec![dim], point(&mut local, max_radius))?;
                ps.insert("r", vec![1], vec![local.random_range(0.1..max_radius)])?;
                out_dim = dim;
            }
            Primitive::ExpMap => {
                let x = point(&mut local, max_radius / 2.0);
                // hyperbolic length of the step at most max_radius / 2
                let len = local.random_range(0.0..max_radius / 2.0);
                let lambda = kernels::conformal_factor(&x, c);
                let v: Vec<f64> = direction(dim, &mut local).iter().map(|d| d * len / lambda).collect();
                ps.insert("x", vec![dim], x)?;
                ps.insert("v", vec![dim], v)?;
                out_dim = dim;
            }
            Primitive::MobiusLinear => {
                let m = MobiusLinear::glorot(dim, dim, &mut local);
                ps.insert("weight", vec![dim, dim], m.weight)?;
                ps.insert("bias", vec![dim], point(&mut local, max_radius / 2.0))?;
                ps.insert("x", vec![dim], point(&mut local, max_radius / 2.0))?;
                out_dim = dim;
            }
            Primitive::MlrLogits => {
                let classes = local.random_range(2..=4);
                let mut mlr = HyperMlr::init(classes, dim, &mut local)?;
                for k in 0..classes {
                    let q = kernels::log_map0(&point(&mut local, max_radius), c);
                    mlr.offsets[k * dim..(k + 1) * dim].copy_from_slice(&q);
                }
                mlr.write_params(&mut ps, "mlr")?;
                ps.insert("x", vec![dim], point(&mut local, max_radius))?;
                out_dim = classes;
            }
            Primitive::Nll => {
                let k = local.random_range(2..=6);
                ps.insert(
                    "logits",
                    vec![k],
                    (0..k).map(|_| local.random_range(-5.0..5.0)).collect(),
                )?;
                label = local.random_range(0..k);
                out_dim = 1;
            }
        }
        Ok(PrimitiveCase {
            primitive,
            c,
            eps,
            t: local.random_range(0.05..0.95),
            label,
            weights: (0..out_dim).map(|_| local.sample(StandardNormal)).collect(),
            params: ps,
        })
    }

    fn outputs<T: Real>(&self, p: &ParamSet<T>) -> Result<Vec<T>> {
        let c = self.c;
        let get = |n: &str| p.data(n);
        Ok(match self.primitive {
            Primitive::MobiusAdd => kernels::mobius_add(get("x")?, get("y")?, c),
            Primitive::ScalarMul => kernels::mobius_scalar_mul(get("t")?[0], get("x")?, c),
            Primitive::ExpMap0 => kernels::exp_map0(get("v")?, c),
            Primitive::LogMap0 => kernels::log_map0(get("x")?, c),
            Primitive::ExpMap => kernels::exp_map(get("x")?, get("v")?, c),
            Primitive::LogMap => kernels::log_map(get("x")?, get("y")?, c),
            Primitive::Distance => vec![kernels::distance(get("x")?, get("y")?, c)],
            Primitive::Geodesic => kernels::geodesic(get("x")?, get("y")?, self.t, c),
            Primitive::RescaleToRadius => kernels::rescale_to_radius(get("x")?, get("r")?[0], c),
            Primitive::MobiusLinear => {
                let w = p.get("weight").expect("weight tensor");
                let layer = MobiusLinear {
                    in_dim: w.shape[1],
                    out_dim: w.shape[0],
                    weight: w.data.clone(),
                    bias: get("bias")?.to_vec(),
                    activation: false,
                };
                layer.forward(get("x")?, c, self.eps)?
            }
            Primitive::MlrLogits => HyperMlr::from_params(p, "mlr")?.logits(get("x")?, c, self.eps)?,
            Primitive::Nll => vec![nll_single(get("logits")?, self.label)?],
        })
    }
}

impl Objective for PrimitiveCase {
    fn eval<T: Real>(&self, params: &ParamSet<T>) -> Result<T> {
        Ok(T::dot_const(&self.weights, &self.outputs(params)?))
    }
}

/// A small random model and minibatch; the objective is the weighted
/// training loss with a constant `λ2` (the dynamic rule is a schedule and
/// carries no gradient).
pub struct EndToEndCase {
    pub model: HaeModel,
    pub xs: Vec<Vec<f64>>,
    pub labels: Vec<Option<usize>>,
    pub weights: LossWeights,
}

impl EndToEndCase {
    pub fn random(max_radius: f64, rng: &mut impl Rng) -> Result<Self> {
        let input_dim = rng.random_range(5..=9);
        let ball_dim = rng.random_range(2..=4);
        let classes = rng.random_range(2..=4);
        let cfg = ModelConfig {
            input_dim,
            latent_dim: rng.random_range(3..=input_dim),
            euclid_dim: rng.random_range(2..=5),
            ball_dim,
            hidden_dim: rng.random_range(3..=6),
            encoder_layers: rng.random_range(1..=3),
            decoder_layers: rng.random_range(1..=3),
            classes,
            probe_dim: rng.random_range(2..=6),
            curvature: rng.random_range(0.5..2.0),
            hyper_activation: rng.random(),
            backbone_seed: rng.random(),
            probe_seed: rng.random(),
            init_seed: rng.random(),
            ..ModelConfig::default()
        };
        let c = cfg.curvature;
        let mut model = HaeModel::new(cfg)?;
        let mut local = ChaCha8Rng::seed_from_u64(rng.random());
        model.trainable.hyper.bias = random_point(ball_dim, max_radius / 2.0, c, &mut local);
        for k in 0..classes {
            let q = kernels::log_map0(&random_point(ball_dim, max_radius, c, &mut local), c);
            model.trainable.mlr.offsets[k * ball_dim..(k + 1) * ball_dim].copy_from_slice(&q);
        }
        let n = rng.random_range(1..=3);
        let xs = (0..n)
            .map(|_| (0..input_dim).map(|_| local.sample(StandardNormal)).collect())
            .collect();
        let labels = (0..n)
            .map(|i| (i == 0 || local.random()).then(|| local.random_range(0..classes)))
            .collect();
        Ok(EndToEndCase {
            model,
            xs,
            labels,
            weights: LossWeights {
                lambda1: rng.random_range(0.0..2.0),
                lambda2: rng.random_range(0.0..2.0),
                lambda3: rng.random_range(0.0..2.0),
            },
        })
    }

    pub fn objective(&self) -> BatchObjective<'_> {
        BatchObjective {
            model: &self.model,
            xs: self.xs.iter().map(Vec::as_slice).collect(),
            labels: self.labels.clone(),
            weights: self.weights,
            rule: Lambda2Rule::Constant,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradOptions {
    pub configs: usize,
    pub max_radius: f64,
    pub fd: FdOptions,
    pub seed: u64,
}

impl Default for GradOptions {
    fn default() -> Self {
        GradOptions {
            configs: 100,
            max_radius: 5.5,
            fd: FdOptions::default(),
            seed: 0,
        }
    }
}

/// Central differences against the tape for every primitive and the
/// end-to-end loss over `configs` random configurations each.
pub fn grad_suite(opts: &GradOptions) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut names: Vec<&str> = Primitive::ALL.iter().map(|p| p.name()).collect();
    names.push("end-to-end loss");
    let mut t = Tracker::new(&names, opts.fd.tol);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for cfg in 0..opts.configs {
        for (i, &p) in Primitive::ALL.iter().enumerate() {
            let case = PrimitiveCase::random(p, opts.max_radius, &mut rng)?;
            let fd = FdOptions {
                seed: rng.random(),
                ..opts.fd.clone()
            };
            let rep = finite_diff_check(&case, &case.params, &fd)?;
            t.record(i, rep.max_error(), || worst_case(cfg, &rep));
        }
        let case = EndToEndCase::random(opts.max_radius, &mut rng)?;
        let fd = FdOptions {
            seed: rng.random(),
            ..opts.fd.clone()
        };
        let params = case.model.params()?;
        let rep = finite_diff_check(&case.objective(), &params, &fd)?;
        t.record(Primitive::ALL.len(), rep.max_error(), || worst_case(cfg, &rep));
    }
    Ok(SuiteReport {
        suite: "grads",
        lines: t.lines,
        elapsed: start.elapsed(),
    })
}

fn worst_case(cfg: usize, rep: &crate::grad::GradReport) -> String {
    match &rep.worst {
        Some(m) => format!(
            "config {cfg}, {}[{}]: analytic {:e} vs numeric {:e}",
            m.tensor, m.index, m.analytic, m.numeric
        ),
        None => format!("config {cfg}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclidean(x: &[f64], y: &[f64], _c: f64) -> f64 {
        x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    #[test]
    fn identities_pass_on_a_small_run() {
        let rep = identity_suite(
            &IdentityOptions {
                pairs: 300,
                ..IdentityOptions::default()
            },
            gyro_distance,
        );
        assert!(rep.passed(), "{rep}");
    }

    #[test]
    fn corrupted_distance_is_caught() {
        let rep = identity_suite(
            &IdentityOptions {
                pairs: 50,
                ..IdentityOptions::default()
            },
            euclidean,
        );
        assert!(!rep.passed());
        let text = rep.to_string();
        assert!(text.contains("worst offender"));
    }

    #[test]
    fn grads_pass_on_a_small_run() {
        let rep = grad_suite(&GradOptions {
            configs: 3,
            ..GradOptions::default()
        })
        .unwrap();
        assert!(rep.passed(), "{rep}");
        assert_eq!(rep.lines.len(), Primitive::ALL.len() + 1);
    }

    #[test]
    fn random_points_respect_the_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let p = random_point(5, 5.5, 1.5, &mut rng);
            assert!(kernels::radius(&p, 1.5) <= 5.5 + 1e-9);
        }
    }
}
