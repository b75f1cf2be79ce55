//! The four-term objective: pixel-space L2, perceptual proxy, latent
//! round-trip and hyperbolic NLL.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HaeError, Result};
use crate::grad::Real;
use crate::hyperlayers::LEAKY_SLOPE;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// perceptual proxy
    pub lambda1: f64,
    /// latent round-trip
    pub lambda2: f64,
    /// hyperbolic NLL
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 0.5,
            lambda3: 0.3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(HaeError::InvalidArgument(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// How `λ2` is chosen each step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda2Rule {
    /// Use `LossWeights::lambda2` as given.
    #[default]
    Constant,
    /// `clamp(0.6 · min(1, L_rec / 0.3), 0.3, 0.6)` from the current batch.
    Dynamic,
}

impl Lambda2Rule {
    pub fn lambda2(self, configured: f64, latent_rec: f64) -> f64 {
        match self {
            Lambda2Rule::Constant => configured,
            Lambda2Rule::Dynamic => (0.6 * (latent_rec / 0.3).min(1.0)).clamp(0.3, 0.6),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l2: f64,
    pub perceptual_proxy: f64,
    pub latent_rec: f64,
    pub hyper: f64,
    pub total: f64,
}

/// Loss components before weighting, in any scalar type.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms<T> {
    pub l2: T,
    pub perceptual_proxy: T,
    pub latent_rec: T,
    pub hyper: T,
}

impl<T: Real> LossTerms<T> {
    pub fn weighted(&self, w: &LossWeights) -> T {
        self.l2 + self.perceptual_proxy * w.lambda1 + self.latent_rec * w.lambda2 + self.hyper * w.lambda3
    }

    pub fn values(&self) -> LossTerms<f64> {
        LossTerms {
            l2: self.l2.value(),
            perceptual_proxy: self.perceptual_proxy.value(),
            latent_rec: self.latent_rec.value(),
            hyper: self.hyper.value(),
        }
    }
}

/// `total = l2 + λ1·perc + λ2·rec + λ3·hyper`
pub fn total_loss(terms: &LossTerms<f64>, weights: &LossWeights) -> Result<LossBreakdown> {
    let parts = [terms.l2, terms.perceptual_proxy, terms.latent_rec, terms.hyper];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(HaeError::NonFinite {
            op: "total_loss".into(),
        });
    }
    Ok(LossBreakdown {
        l2: terms.l2,
        perceptual_proxy: terms.perceptual_proxy,
        latent_rec: terms.latent_rec,
        hyper: terms.hyper,
        total: terms.weighted(weights),
    })
}

/// `−log softmax(logits)[label]` for a single sample.
pub fn nll_single<T: Real>(logits: &[T], label: usize) -> Result<T> {
    if label >= logits.len() {
        return Err(HaeError::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    Ok(T::log_sum_exp(logits) - logits[label])
}

/// Mean NLL over a batch.
pub fn nll_loss<T: Real>(logits: &[Vec<T>], labels: &[usize]) -> Result<T> {
    if logits.is_empty() {
        return Err(HaeError::Empty("nll batch"));
    }
    check_dim(logits.len(), labels.len())?;
    let per: Vec<T> = logits
        .iter()
        .zip(labels)
        .map(|(l, &y)| nll_single(l, y))
        .collect::<Result<_>>()?;
    Ok(T::sum(&per) / per.len() as f64)
}

fn diff_norm<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    check_dim(x.len(), y.len())?;
    let d: Vec<T> = x.iter().zip(y).map(|(&a, &b)| a - b).collect();
    Ok(T::norm(&d))
}

/// `‖x − x̂‖₂`
pub fn l2_loss<T: Real>(x: &[T], recon: &[T]) -> Result<T> {
    diff_norm(x, recon)
}

/// `‖w − w′‖₂`
pub fn latent_rec_loss<T: Real>(w: &[T], decoded: &[T]) -> Result<T> {
    diff_norm(w, decoded)
}

/// Frozen random feature map `LeakyReLU(P x)` standing in for a
/// pretrained perceptual network.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out × in`, row-major
    pub matrix: Vec<f64>,
    pub activation: bool,
}

impl Probe {
    pub fn random<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let n = Normal::new(0.0, 1.0 / (in_dim as f64).sqrt()).expect("valid sigma");
        Probe {
            in_dim,
            out_dim,
            matrix: (0..in_dim * out_dim).map(|_| n.sample(rng)).collect(),
            activation: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Probe {
            in_dim: dim,
            out_dim: dim,
            matrix,
            activation: false,
        }
    }

    pub fn features<T: Real>(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.in_dim, x.len())?;
        Ok(self
            .matrix
            .chunks_exact(self.in_dim)
            .map(|row| {
                let v = T::dot_const(row, x);
                if self.activation {
                    v.leaky_relu(LEAKY_SLOPE)
                } else {
                    v
                }
            })
            .collect())
    }
}

/// `‖probe(x) − probe(x̂)‖₂`
pub fn perceptual_proxy_loss<T: Real>(x: &[T], recon: &[T], probe: &Probe) -> Result<T> {
    diff_norm(&probe.features(x)?, &probe.features(recon)?)
}
