//! Trainable maps: Euclidean MLPs, the Möbius linear layer and hyperbolic
//! multinomial logistic regression.
//!
//! Every layer is generic over [`Real`] and knows how to read itself from
//! and write itself to a [`ParamSet`] under a name prefix.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{check_dim, HaeError, Result};
use crate::geometry::kernels;
use crate::grad::{ParamSet, Real};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Affine map `W x + b`, `W` row-major `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T = f64> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.in_dim, x.len())?;
        Ok(self
            .weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, &b)| T::dot(row, x) + b)
            .collect())
    }
}

impl Dense<f64> {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Dense {
            in_dim,
            out_dim,
            weight: (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect(),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        Dense {
            in_dim: dim,
            out_dim: dim,
            weight,
            bias: vec![0.0; dim],
        }
    }
}

/// Stack of [`Dense`] layers with LeakyReLU(0.2) between them and a linear
/// output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T = f64> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> Mlp<T> {
    pub fn new(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(HaeError::Empty("mlp layers"));
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].out_dim, pair[1].in_dim)?;
        }
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i < last {
                for v in &mut h {
                    *v = v.leaky_relu(LEAKY_SLOPE);
                }
            }
        }
        Ok(h)
    }

    pub fn from_params(params: &ParamSet<T>, prefix: &str) -> Result<Self> {
        let mut layers = Vec::new();
        while let Some(w) = params.get(&format!("{prefix}.{}.weight", layers.len())) {
            let b = params.data(&format!("{prefix}.{}.bias", layers.len()))?;
            let [out_dim, in_dim] = w.shape[..] else {
                return Err(HaeError::InvalidArgument(format!("{} must be 2-d", w.name)));
            };
            check_dim(out_dim, b.len())?;
            layers.push(Dense {
                in_dim,
                out_dim,
                weight: w.data.clone(),
                bias: b.to_vec(),
            });
        }
        if layers.is_empty() {
            return Err(HaeError::UnknownParam(format!("{prefix}.0.weight")));
        }
        Mlp::new(layers)
    }

    pub fn write_params(&self, params: &mut ParamSet<T>, prefix: &str) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            params.insert(
                format!("{prefix}.{i}.weight"),
                vec![l.out_dim, l.in_dim],
                l.weight.clone(),
            )?;
            params.insert(format!("{prefix}.{i}.bias"), vec![l.out_dim], l.bias.clone())?;
        }
        Ok(())
    }
}

impl Mlp<f64> {
    /// Glorot-initialized MLP through the given widths (`dims.len() - 1` layers).
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(HaeError::InvalidArgument("mlp needs at least two widths".into()));
        }
        Mlp::new(dims.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect())
    }

    /// Identity of any depth, exact up to rounding. Hidden layers are `2·dim` wide and
    /// carry `[x, −x]`, recombined through `x = (σ(x) − σ(−x)) / (1 + slope)`.
    pub fn identity(dim: usize, depth: usize) -> Self {
        if depth <= 1 {
            return Mlp {
                layers: vec![Dense::identity(dim)],
            };
        }
        let k = 1.0 / (1.0 + LEAKY_SLOPE);
        let dense = |in_dim: usize, out_dim: usize, f: &dyn Fn(usize, usize) -> f64| Dense {
            in_dim,
            out_dim,
            weight: (0..out_dim * in_dim).map(|i| f(i / in_dim, i % in_dim)).collect(),
            bias: vec![0.0; out_dim],
        };
        // block sign of the split representation
        let sign = |i: usize| if i < dim { 1.0 } else { -1.0 };
        let split = dense(dim, 2 * dim, &|r, c| if r % dim == c { sign(r) } else { 0.0 });
        let mid = dense(2 * dim, 2 * dim, &|r, c| {
            if r % dim == c % dim {
                k * sign(r) * sign(c)
            } else {
                0.0
            }
        });
        let merge = dense(2 * dim, dim, &|r, c| if r == c % dim { k * sign(c) } else { 0.0 });
        let mut layers = vec![split];
        layers.extend((0..depth - 2).map(|_| mid.clone()));
        layers.push(merge);
        Mlp { layers }
    }
}

/// Möbius linear layer `exp_0(M log_0(x)) ⊕ b`.
#[derive(Clone, Debug, PartialEq)]
pub struct MobiusLinear<T = f64> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<T>,
    /// Ball point of dimension `out_dim`.
    pub bias: Vec<T>,
    /// Apply `exp_0(LeakyReLU(log_0(·)))` after the bias.
    pub activation: bool,
}

impl<T: Real> MobiusLinear<T> {
    pub fn forward(&self, x: &[T], c: f64, eps: f64) -> Result<Vec<T>> {
        check_dim(self.in_dim, x.len())?;
        let v = kernels::log_map0(x, c);
        let mv: Vec<T> = self
            .weight
            .chunks_exact(self.in_dim)
            .map(|row| T::dot(row, &v))
            .collect();
        let h = kernels::project(&kernels::exp_map0(&mv, c), c, eps);
        let mut out = kernels::project(&kernels::mobius_add(&h, &self.bias, c), c, eps);
        if self.activation {
            let mut t = kernels::log_map0(&out, c);
            for v in &mut t {
                *v = v.leaky_relu(LEAKY_SLOPE);
            }
            out = kernels::project(&kernels::exp_map0(&t, c), c, eps);
        }
        Ok(out)
    }

    pub fn from_params(params: &ParamSet<T>, prefix: &str, activation: bool) -> Result<Self> {
        let w = params
            .get(&format!("{prefix}.weight"))
            .ok_or_else(|| HaeError::UnknownParam(format!("{prefix}.weight")))?;
        let [out_dim, in_dim] = w.shape[..] else {
            return Err(HaeError::InvalidArgument(format!("{} must be 2-d", w.name)));
        };
        let bias = params.data(&format!("{prefix}.bias"))?;
        check_dim(out_dim, bias.len())?;
        Ok(MobiusLinear {
            in_dim,
            out_dim,
            weight: w.data.clone(),
            bias: bias.to_vec(),
            activation,
        })
    }

    pub fn write_params(&self, params: &mut ParamSet<T>, prefix: &str) -> Result<()> {
        params.insert(
            format!("{prefix}.weight"),
            vec![self.out_dim, self.in_dim],
            self.weight.clone(),
        )?;
        params.insert(format!("{prefix}.bias"), vec![self.out_dim], self.bias.clone())
    }
}

impl MobiusLinear<f64> {
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let d = Dense::glorot(in_dim, out_dim, rng);
        MobiusLinear {
            in_dim,
            out_dim,
            weight: d.weight,
            bias: vec![0.0; out_dim],
            activation: false,
        }
    }

    /// `t · I` with zero bias; acts as `t ⊗ x`.
    pub fn scaled_identity(dim: usize, t: f64) -> Self {
        let mut d = Dense::identity(dim);
        d.weight.iter_mut().for_each(|w| *w *= t);
        MobiusLinear {
            in_dim: dim,
            out_dim: dim,
            weight: d.weight,
            bias: vec![0.0; dim],
            activation: false,
        }
    }
}

/// Hyperbolic MLR. Prototypes are `p_k = exp_0(q_k)` of unconstrained
/// `q_k`; normals `a_k` live in the tangent space at `p_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperMlr<T = f64> {
    pub classes: usize,
    pub dim: usize,
    /// `classes × dim`, row-major.
    pub offsets: Vec<T>,
    /// `classes × dim`, row-major.
    pub normals: Vec<T>,
}

/// Normals shorter than this make a class's hyperplane undefined.
pub const MIN_NORMAL: f64 = 1e-12;

impl<T: Real> HyperMlr<T> {
    pub fn prototype(&self, k: usize, c: f64, eps: f64) -> Vec<T> {
        let q = &self.offsets[k * self.dim..(k + 1) * self.dim];
        kernels::project(&kernels::exp_map0(q, c), c, eps)
    }

    /// `(λ_p ‖a‖/√c) asinh(2√c ⟨u, a⟩ / ((1 − c‖u‖²)‖a‖))` with `u = (−p) ⊕ x`.
    pub fn logits(&self, x: &[T], c: f64, eps: f64) -> Result<Vec<T>> {
        check_dim(self.dim, x.len())?;
        let sc = c.sqrt();
        (0..self.classes)
            .map(|k| {
                let a = &self.normals[k * self.dim..(k + 1) * self.dim];
                let a_norm = T::norm(a);
                if a_norm.value() < MIN_NORMAL {
                    return Err(HaeError::DegenerateNormal {
                        class: k,
                        norm: a_norm.value(),
                    });
                }
                let p = self.prototype(k, c, eps);
                let lambda = kernels::conformal_factor(&p, c);
                let u = kernels::mobius_add(&kernels::neg(&p), x, c);
                let arg = T::dot(&u, a) * (2.0 * sc) / (kernels::mobius_add_gap(&kernels::neg(&p), x, c) * a_norm);
                Ok(lambda * a_norm / sc * arg.asinh())
            })
            .collect()
    }

    pub fn from_params(params: &ParamSet<T>, prefix: &str) -> Result<Self> {
        let q = params
            .get(&format!("{prefix}.offsets"))
            .ok_or_else(|| HaeError::UnknownParam(format!("{prefix}.offsets")))?;
        let [classes, dim] = q.shape[..] else {
            return Err(HaeError::InvalidArgument(format!("{} must be 2-d", q.name)));
        };
        let a = params.data(&format!("{prefix}.normals"))?;
        check_dim(classes * dim, a.len())?;
        Ok(HyperMlr {
            classes,
            dim,
            offsets: q.data.clone(),
            normals: a.to_vec(),
        })
    }

    pub fn write_params(&self, params: &mut ParamSet<T>, prefix: &str) -> Result<()> {
        params.insert(
            format!("{prefix}.offsets"),
            vec![self.classes, self.dim],
            self.offsets.clone(),
        )?;
        params.insert(
            format!("{prefix}.normals"),
            vec![self.classes, self.dim],
            self.normals.clone(),
        )
    }
}

impl HyperMlr<f64> {
    /// `q_k ~ N(0, 1e-2 I)`, `a_k ~ N(0, I)`.
    pub fn init<R: Rng + ?Sized>(classes: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if classes < 2 {
            return Err(HaeError::InvalidArgument(format!(
                "MLR needs at least 2 classes, got {classes}"
            )));
        }
        let q = Normal::new(0.0, 0.1).expect("valid sigma");
        let a = Normal::new(0.0, 1.0).expect("valid sigma");
        Ok(HyperMlr {
            classes,
            dim,
            offsets: (0..classes * dim).map(|_| q.sample(rng)).collect(),
            normals: (0..classes * dim).map(|_| a.sample(rng)).collect(),
        })
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 4e-3;

    #[test]
    fn mlp_identity_and_constant() {
        let id = Mlp::new(vec![Dense::identity(3)]).unwrap();
        assert_eq!(id.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        let constant = Mlp::new(vec![Dense {
            in_dim: 3,
            out_dim: 2,
            weight: vec![0.0; 6],
            bias: vec![1.0, 2.0],
        }])
        .unwrap();
        assert_eq!(constant.forward(&[9.0, -9.0, 4.0]).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(id.forward(&[1.0]), Err(HaeError::DimensionMismatch { .. })));
    }

    #[test]
    fn leaky_relu_between_layers() {
        assert_eq!((-1.0f64).leaky_relu(LEAKY_SLOPE), -0.2);
        let two = Mlp::new(vec![Dense::identity(1), Dense::identity(1)]).unwrap();
        assert_eq!(two.forward(&[-1.0]).unwrap(), vec![-0.2]);
        // output layer stays linear
        assert_eq!(Mlp::identity(1, 1).forward(&[-1.0]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn identity_mlp_holds_at_every_depth() {
        let x = [-3.0, 0.0, 1.5, -1e-3];
        for depth in 1..6 {
            let y = Mlp::identity(4, depth).forward(&x).unwrap();
            for (a, b) in x.iter().zip(&y) {
                assert!(
                    (a - b).abs() <= 4.0 * f64::EPSILON * a.abs(),
                    "depth {depth}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn mlp_rejects_broken_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Dense::glorot(3, 4, &mut rng);
        let b = Dense::glorot(5, 2, &mut rng);
        assert!(Mlp::new(vec![a, b]).is_err());
    }

    #[test]
    fn mobius_linear_examples() {
        let x = [0.3, -0.2];
        let id = MobiusLinear::scaled_identity(2, 1.0);
        let y = id.forward(&x, 1.0, EPS).unwrap();
        assert_relative_eq!(y[0], 0.3, max_relative = 1e-14);
        assert_relative_eq!(y[1], -0.2, max_relative = 1e-14);

        let double = MobiusLinear::scaled_identity(2, 2.0);
        let y = double.forward(&[0.5, 0.0], 1.0, EPS).unwrap();
        assert_relative_eq!(y[0], 0.8, max_relative = 1e-14);

        let zero = MobiusLinear {
            in_dim: 2,
            out_dim: 2,
            weight: vec![0.0; 4],
            bias: vec![0.1, 0.25],
            activation: false,
        };
        assert_eq!(zero.forward(&x, 1.0, EPS).unwrap(), vec![0.1, 0.25]);
    }

    #[test]
    fn mlr_logit_closed_form() {
        // K = 1 isolated: p = 0, a = e1, x = (0.5, 0)
        let mlr = HyperMlr {
            classes: 1,
            dim: 2,
            offsets: vec![0.0, 0.0],
            normals: vec![1.0, 0.0],
        };
        let l = mlr.logits(&[0.5, 0.0], 1.0, EPS).unwrap();
        assert_relative_eq!(l[0], 2.0 * (4.0f64 / 3.0).asinh(), max_relative = 1e-14);
        assert_relative_eq!(l[0], 2.0 * 3f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn mlr_uniform_at_origin_and_antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mlr = HyperMlr::init(4, 3, &mut rng).unwrap();
        mlr.offsets.iter_mut().for_each(|q| *q = 0.0);
        let l = mlr.logits(&[0.0, 0.0, 0.0], 1.0, EPS).unwrap();
        assert!(l.iter().all(|&v| v == 0.0));

        let pair = HyperMlr {
            classes: 2,
            dim: 2,
            offsets: vec![0.0; 4],
            normals: vec![1.0, 0.0, -1.0, 0.0],
        };
        for x in [[0.3, 0.4], [-0.1, 0.7], [0.01, -0.5]] {
            let pr = softmax(&pair.logits(&x, 1.0, EPS).unwrap());
            assert_eq!(pr[0] > 0.5, x[0] > 0.0);
        }
    }

    #[test]
    fn mlr_degenerate_normal() {
        let mlr = HyperMlr {
            classes: 2,
            dim: 2,
            offsets: vec![0.0; 4],
            normals: vec![1.0, 0.0, 0.0, 0.0],
        };
        assert!(matches!(
            mlr.logits(&[0.1, 0.1], 1.0, EPS),
            Err(HaeError::DegenerateNormal { class: 1, .. })
        ));
    }

    #[test]
    fn prototype_sits_on_its_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut mlr = HyperMlr::init(5, 4, &mut rng).unwrap();
        mlr.offsets.iter_mut().for_each(|q| *q *= 20.0);
        for k in 0..5 {
            let p = mlr.prototype(k, 1.0, EPS);
            assert_eq!(mlr.logits(&p, 1.0, EPS).unwrap()[k], 0.0);
        }
    }

    #[test]
    fn params_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::glorot(&[4, 6, 3], &mut rng).unwrap();
        let hyp = MobiusLinear::glorot(3, 2, &mut rng);
        let mlr = HyperMlr::init(3, 2, &mut rng).unwrap();
        let mut ps = ParamSet::new();
        mlp.write_params(&mut ps, "enc").unwrap();
        hyp.write_params(&mut ps, "hyp").unwrap();
        mlr.write_params(&mut ps, "mlr").unwrap();
        assert_eq!(Mlp::from_params(&ps, "enc").unwrap(), mlp);
        assert_eq!(MobiusLinear::from_params(&ps, "hyp", false).unwrap(), hyp);
        assert_eq!(HyperMlr::from_params(&ps, "mlr").unwrap(), mlr);
    }
}
