//! End-to-end pipeline: frozen backbone → MLP encoder → `exp_0` → Möbius
//! linear layer → ball code, and back through `log_0` → MLP decoder →
//! frozen generator.
//!
//! The backbone is a fixed random full-row-rank affine map and the
//! generator is its Moore–Penrose pseudo-inverse, so reconstruction of
//! anything in the backbone's row space is exactly checkable.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HaeError, Result};
use crate::geometry::{kernels, Ball, PoincarePoint};
use crate::grad::{ParamSet, Real};
use crate::hyperlayers::{softmax, HyperMlr, Mlp, MobiusLinear};
use crate::losses::{
    l2_loss, latent_rec_loss, nll_single, perceptual_proxy_loss, Lambda2Rule, LossTerms, LossWeights, Probe,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// sample dimension `D`
    pub input_dim: usize,
    /// backbone latent `d_w`
    pub latent_dim: usize,
    /// Euclidean code before `exp_0`
    pub euclid_dim: usize,
    /// ball dimension `n`
    pub ball_dim: usize,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// number of seen classes handled by the MLR head
    pub classes: usize,
    pub probe_dim: usize,
    pub curvature: f64,
    pub boundary_eps: f64,
    pub hyper_activation: bool,
    pub backbone_seed: u64,
    pub probe_seed: u64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 64,
            latent_dim: 48,
            euclid_dim: 16,
            ball_dim: 16,
            hidden_dim: 64,
            encoder_layers: 5,
            decoder_layers: 5,
            classes: 12,
            probe_dim: 32,
            curvature: 1.0,
            boundary_eps: 4e-3,
            hyper_activation: false,
            backbone_seed: 1,
            probe_seed: 2,
            init_seed: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("latent_dim", self.latent_dim),
            ("euclid_dim", self.euclid_dim),
            ("ball_dim", self.ball_dim),
            ("hidden_dim", self.hidden_dim),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("probe_dim", self.probe_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(HaeError::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if self.latent_dim > self.input_dim {
            return Err(HaeError::InvalidArgument(format!(
                "latent_dim {} exceeds input_dim {}: backbone cannot have full row rank",
                self.latent_dim, self.input_dim
            )));
        }
        if self.classes < 2 {
            return Err(HaeError::InvalidArgument("at least 2 seen classes required".into()));
        }
        Ball::new(self.curvature, self.boundary_eps)?;
        Ok(())
    }

    pub fn ball(&self) -> Result<Ball> {
        Ball::new(self.curvature, self.boundary_eps)
    }

    fn widths(&self, from: usize, to: usize, layers: usize) -> Vec<usize> {
        let mut dims = vec![from];
        dims.extend(std::iter::repeat_n(self.hidden_dim, layers - 1));
        dims.push(to);
        dims
    }
}

/// `w = W x + b`; stands in for the pretrained image encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenBackbone {
    pub input_dim: usize,
    pub latent_dim: usize,
    /// `latent × input`, row-major
    pub matrix: Vec<f64>,
    pub bias: Vec<f64>,
}

/// `x = W⁺ (w − b)`; stands in for the pretrained generator.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenGenerator {
    pub latent_dim: usize,
    pub output_dim: usize,
    /// `output × latent`, row-major
    pub pinv: Vec<f64>,
    pub bias: Vec<f64>,
}

impl FrozenBackbone {
    pub fn random(input_dim: usize, latent_dim: usize, seed: u64) -> Result<(Self, FrozenGenerator)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Normal::new(0.0, 1.0 / (input_dim as f64).sqrt()).expect("valid sigma");
        let b = Normal::new(0.0, 0.1).expect("valid sigma");
        let matrix: Vec<f64> = (0..input_dim * latent_dim).map(|_| w.sample(&mut rng)).collect();
        let bias: Vec<f64> = (0..latent_dim).map(|_| b.sample(&mut rng)).collect();
        let backbone = FrozenBackbone {
            input_dim,
            latent_dim,
            matrix,
            bias,
        };
        let generator = backbone.pseudo_inverse()?;
        Ok((backbone, generator))
    }

    /// `Wᵀ (W Wᵀ)⁻¹`; fails unless `W` has full row rank.
    pub fn pseudo_inverse(&self) -> Result<FrozenGenerator> {
        let w = DMatrix::from_row_slice(self.latent_dim, self.input_dim, &self.matrix);
        let gram = &w * w.transpose();
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| HaeError::InvalidArgument("backbone matrix is not full row rank".into()))?;
        let eig = gram.symmetric_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        if lo <= hi * 1e-12 {
            return Err(HaeError::InvalidArgument(
                "backbone matrix is numerically rank deficient".into(),
            ));
        }
        let pinv = w.transpose() * chol.inverse();
        let mut rows = Vec::with_capacity(self.input_dim * self.latent_dim);
        for r in 0..self.input_dim {
            for c in 0..self.latent_dim {
                rows.push(pinv[(r, c)]);
            }
        }
        Ok(FrozenGenerator {
            latent_dim: self.latent_dim,
            output_dim: self.input_dim,
            pinv: rows,
            bias: self.bias.clone(),
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim, x.len())?;
        Ok(self
            .matrix
            .chunks_exact(self.input_dim)
            .zip(&self.bias)
            .map(|(row, b)| f64::dot_const(row, x) + b)
            .collect())
    }
}

impl FrozenGenerator {
    pub fn forward<T: Real>(&self, w: &[T]) -> Result<Vec<T>> {
        check_dim(self.latent_dim, w.len())?;
        let centered: Vec<T> = w.iter().zip(&self.bias).map(|(&v, &b)| v - b).collect();
        Ok(self
            .pinv
            .chunks_exact(self.latent_dim)
            .map(|row| T::dot_const(row, &centered))
            .collect())
    }
}

/// Everything the optimizer touches.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainable<T = f64> {
    pub encoder: Mlp<T>,
    pub hyper: MobiusLinear<T>,
    pub decoder: Mlp<T>,
    pub mlr: HyperMlr<T>,
}

impl<T: Real> Trainable<T> {
    pub fn to_params(&self) -> Result<ParamSet<T>> {
        let mut ps = ParamSet::new();
        self.encoder.write_params(&mut ps, "encoder")?;
        self.hyper.write_params(&mut ps, "hyper")?;
        self.decoder.write_params(&mut ps, "decoder")?;
        self.mlr.write_params(&mut ps, "mlr")?;
        Ok(ps)
    }

    pub fn from_params(ps: &ParamSet<T>, hyper_activation: bool) -> Result<Self> {
        Ok(Trainable {
            encoder: Mlp::from_params(ps, "encoder")?,
            hyper: MobiusLinear::from_params(ps, "hyper", hyper_activation)?,
            decoder: Mlp::from_params(ps, "decoder")?,
            mlr: HyperMlr::from_params(ps, "mlr")?,
        })
    }
}

/// Per-sample output of [`HaeModel::forward`].
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub w: Vec<f64>,
    pub z: PoincarePoint,
    pub w_decoded: Vec<f64>,
    pub recon: Vec<f64>,
    pub terms: LossTerms<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HaeModel {
    pub config: ModelConfig,
    pub ball: Ball,
    pub backbone: FrozenBackbone,
    pub generator: FrozenGenerator,
    pub probe: Probe,
    pub trainable: Trainable,
}

impl HaeModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let encoder = Mlp::glorot(
            &config.widths(config.latent_dim, config.euclid_dim, config.encoder_layers),
            &mut rng,
        )?;
        let mut hyper = MobiusLinear::glorot(config.euclid_dim, config.ball_dim, &mut rng);
        hyper.activation = config.hyper_activation;
        let decoder = Mlp::glorot(
            &config.widths(config.ball_dim, config.latent_dim, config.decoder_layers),
            &mut rng,
        )?;
        let mlr = HyperMlr::init(config.classes, config.ball_dim, &mut rng)?;
        let trainable = Trainable {
            encoder,
            hyper,
            decoder,
            mlr,
        };
        Self::with_trainable(config, trainable)
    }

    /// Rebuilds the frozen parts from the seeds in `config` and attaches
    /// the given trainable layers.
    pub fn with_trainable(config: ModelConfig, trainable: Trainable) -> Result<Self> {
        config.validate()?;
        let ball = config.ball()?;
        let (backbone, generator) = FrozenBackbone::random(config.input_dim, config.latent_dim, config.backbone_seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.probe_seed);
        let probe = Probe::random(config.input_dim, config.probe_dim, &mut rng);
        let model = HaeModel {
            config,
            ball,
            backbone,
            generator,
            probe,
            trainable,
        };
        model.check_chain()?;
        Ok(model)
    }

    /// Square identity MLPs, `M = I`, `b = 0`: the pipeline collapses to
    /// `z = exp_0(w)` and `x̂ = W⁺(log_0(z) − b)`. Needs
    /// `latent_dim == euclid_dim == ball_dim`.
    pub fn identity(config: ModelConfig) -> Result<Self> {
        let d = config.latent_dim;
        if config.euclid_dim != d || config.ball_dim != d {
            return Err(HaeError::InvalidArgument(
                "identity configuration needs latent_dim == euclid_dim == ball_dim".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let trainable = Trainable {
            encoder: Mlp::identity(d, config.encoder_layers),
            hyper: MobiusLinear::scaled_identity(d, 1.0),
            decoder: Mlp::identity(d, config.decoder_layers),
            mlr: HyperMlr::init(config.classes, d, &mut rng)?,
        };
        Self::with_trainable(config, trainable)
    }

    fn check_chain(&self) -> Result<()> {
        let t = &self.trainable;
        let c = &self.config;
        check_dim(c.latent_dim, t.encoder.in_dim())?;
        check_dim(t.encoder.out_dim(), t.hyper.in_dim)?;
        check_dim(c.ball_dim, t.hyper.out_dim)?;
        check_dim(c.ball_dim, t.decoder.in_dim())?;
        check_dim(c.latent_dim, t.decoder.out_dim())?;
        check_dim(c.ball_dim, t.mlr.dim)?;
        check_dim(c.classes, t.mlr.classes)
    }

    pub fn params(&self) -> Result<ParamSet> {
        self.trainable.to_params()
    }

    pub fn set_params(&mut self, ps: &ParamSet) -> Result<()> {
        let trainable = Trainable::from_params(ps, self.config.hyper_activation)?;
        let old = std::mem::replace(&mut self.trainable, trainable);
        if let Err(e) = self.check_chain() {
            self.trainable = old;
            return Err(e);
        }
        Ok(())
    }

    fn c(&self) -> f64 {
        self.ball.c()
    }

    fn eps(&self) -> f64 {
        self.ball.eps()
    }

    /// Ball code for a backbone latent.
    pub fn encode_latent<T: Real>(&self, tr: &Trainable<T>, w: &[T]) -> Result<Vec<T>> {
        let zr = tr.encoder.forward(w)?;
        let z0 = kernels::project(&kernels::exp_map0(&zr, self.c()), self.c(), self.eps());
        let z = tr.hyper.forward(&z0, self.c(), self.eps())?;
        Ok(kernels::project(&z, self.c(), self.eps()))
    }

    /// `(w′, x̂)` for a ball code.
    pub fn decode_with<T: Real>(&self, tr: &Trainable<T>, z: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let v = kernels::log_map0(z, self.c());
        let w2 = tr.decoder.forward(&v)?;
        let x = self.generator.forward(&w2)?;
        Ok((w2, x))
    }

    /// Unweighted loss terms for one sample; `label` is `None` for samples
    /// that must not contribute to the hyperbolic term.
    pub fn sample_terms<T: Real>(&self, tr: &Trainable<T>, x: &[f64], label: Option<usize>) -> Result<LossTerms<T>> {
        let w = self.backbone.forward(x)?;
        let wt: Vec<T> = w.iter().map(|&v| T::cst(v)).collect();
        let xt: Vec<T> = x.iter().map(|&v| T::cst(v)).collect();
        let z = self.encode_latent(tr, &wt)?;
        let (w2, recon) = self.decode_with(tr, &z)?;
        let hyper = match label {
            Some(y) => nll_single(&tr.mlr.logits(&z, self.c(), self.eps())?, y)?,
            None => T::cst(0.0),
        };
        Ok(LossTerms {
            l2: l2_loss(&xt, &recon)?,
            perceptual_proxy: perceptual_proxy_loss(&xt, &recon, &self.probe)?,
            latent_rec: latent_rec_loss(&wt, &w2)?,
            hyper,
        })
    }

    /// Batch means of every term. The hyperbolic term averages over the
    /// labelled samples only.
    pub fn batch_terms<T: Real>(
        &self,
        tr: &Trainable<T>,
        xs: &[&[f64]],
        labels: &[Option<usize>],
    ) -> Result<LossTerms<T>> {
        if xs.is_empty() {
            return Err(HaeError::Empty("batch"));
        }
        check_dim(xs.len(), labels.len())?;
        let per: Vec<LossTerms<T>> = xs
            .iter()
            .zip(labels)
            .map(|(x, &y)| self.sample_terms(tr, x, y))
            .collect::<Result<_>>()?;
        let n = per.len() as f64;
        let mean = |f: fn(&LossTerms<T>) -> T| T::sum(&per.iter().map(f).collect::<Vec<_>>()) / n;
        let labelled = labels.iter().filter(|l| l.is_some()).count();
        let hyper = if labelled == 0 {
            T::cst(0.0)
        } else {
            let hs: Vec<T> = per
                .iter()
                .zip(labels)
                .filter(|(_, l)| l.is_some())
                .map(|(t, _)| t.hyper)
                .collect();
            T::sum(&hs) / labelled as f64
        };
        Ok(LossTerms {
            l2: mean(|t| t.l2),
            perceptual_proxy: mean(|t| t.perceptual_proxy),
            latent_rec: mean(|t| t.latent_rec),
            hyper,
        })
    }

    /// Weighted batch objective, resolving a dynamic `λ2` from the batch's
    /// own latent round-trip value.
    pub fn batch_loss<T: Real>(
        &self,
        tr: &Trainable<T>,
        xs: &[&[f64]],
        labels: &[Option<usize>],
        weights: &LossWeights,
        rule: Lambda2Rule,
    ) -> Result<(T, LossTerms<T>, LossWeights)> {
        let terms = self.batch_terms(tr, xs, labels)?;
        let mut w = *weights;
        w.lambda2 = rule.lambda2(weights.lambda2, terms.latent_rec.value());
        Ok((terms.weighted(&w), terms, w))
    }

    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, PoincarePoint)> {
        let w = self.backbone.forward(x)?;
        let z = self.encode_latent(&self.trainable, &w)?;
        Ok((w, self.ball.point(&z)?))
    }

    pub fn decode(&self, z: &PoincarePoint) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.config.ball_dim, z.dim())?;
        self.decode_with(&self.trainable, z.coords())
    }

    pub fn logits(&self, z: &PoincarePoint) -> Result<Vec<f64>> {
        self.trainable.mlr.logits(z.coords(), self.c(), self.eps())
    }

    /// Softmax over seen classes.
    pub fn classify(&self, z: &PoincarePoint) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(z)?))
    }

    pub fn forward(&self, x: &[f64], label: Option<usize>) -> Result<ForwardOutput> {
        let (w, z) = self.encode(x)?;
        let (w_decoded, recon) = self.decode(&z)?;
        let terms = self.sample_terms(&self.trainable, x, label)?;
        Ok(ForwardOutput {
            w,
            z,
            w_decoded,
            recon,
            terms,
        })
    }
}
