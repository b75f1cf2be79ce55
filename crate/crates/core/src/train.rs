//! Adam, the minibatch training loop and checkpoint persistence.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::HierDataset;
use crate::error::{HaeError, Result};
use crate::grad::{value_and_grad, Objective, ParamSet, Real};
use crate::io::{fmt_f64, to_json};
use crate::losses::{total_loss, Lambda2Rule, LossBreakdown, LossWeights};
use crate::model::{HaeModel, ModelConfig, Trainable};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weights: LossWeights,
    pub lambda2_rule: Lambda2Rule,
    /// Seeds the minibatch shuffle only; initialization has its own seed
    /// in [`ModelConfig`].
    pub seed: u64,
    /// Fraction of each seen class held out from training.
    pub holdout: f64,
}

impl Default for TrainConfig {
    /// Desk-scale preset: 5000 steps at `lr = 1e-3`.
    fn default() -> Self {
        TrainConfig {
            steps: 5000,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weights: LossWeights::default(),
            lambda2_rule: Lambda2Rule::Constant,
            seed: 0,
            holdout: 0.2,
        }
    }
}

impl TrainConfig {
    /// The small learning rate used for full-size latents.
    pub fn faithful() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(HaeError::InvalidArgument("steps must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(HaeError::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(HaeError::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.adam_eps.is_nan()
            || self.adam_eps <= 0.0
        {
            return Err(HaeError::InvalidArgument(
                "Adam needs beta1, beta2 in [0, 1) and eps > 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(HaeError::InvalidArgument(format!(
                "holdout must be in [0, 1), got {}",
                self.holdout
            )));
        }
        self.weights.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place. Non-finite gradients leave
/// `params` and `state` untouched.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) {
        return Err(HaeError::InvalidArgument(
            "parameter, gradient and optimizer layouts differ".into(),
        ));
    }
    for g in grads.iter() {
        if let Some(i) = g.data.iter().position(|v| !v.is_finite()) {
            return Err(HaeError::NonFinite {
                op: format!("gradient of {}[{i}]", g.name),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let tensors = params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()));
    for ((p, g), (m, v)) in tensors {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
            let mh = m.data[i] / bc1;
            let vh = v.data[i] / bc2;
            p.data[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lambda2: f64,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenSeeds {
    pub backbone: u64,
    pub probe: u64,
    pub init: u64,
}

impl FrozenSeeds {
    pub fn of(cfg: &ModelConfig) -> Self {
        FrozenSeeds {
            backbone: cfg.backbone_seed,
            probe: cfg.probe_seed,
            init: cfg.init_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u64,
    pub config: RunConfig,
    pub frozen_seeds: FrozenSeeds,
    pub step: usize,
    #[serde(with = "params_json")]
    pub params: ParamSet,
    /// Loss of the last completed step, if any.
    pub metrics: Option<LossBreakdown>,
}

impl Checkpoint {
    pub fn new(model: &HaeModel, train: &TrainConfig, step: usize, metrics: Option<LossBreakdown>) -> Result<Self> {
        Ok(Checkpoint {
            format_version: FORMAT_VERSION,
            config: RunConfig {
                model: model.config.clone(),
                train: train.clone(),
            },
            frozen_seeds: FrozenSeeds::of(&model.config),
            step,
            params: model.params()?,
            metrics,
        })
    }

    /// Rebuilds the frozen parts from their seeds and loads the trained
    /// tensors.
    pub fn model(&self) -> Result<HaeModel> {
        if self.frozen_seeds != FrozenSeeds::of(&self.config.model) {
            return Err(HaeError::MalformedCheckpoint(
                "frozen_seeds disagree with config.model".into(),
            ));
        }
        let tr = Trainable::from_params(&self.params, self.config.model.hyper_activation)?;
        HaeModel::with_trainable(self.config.model.clone(), tr)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        if !self.params.all_finite() {
            return Err(HaeError::NonFinite {
                op: "checkpoint params".into(),
            });
        }
        to_json(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| HaeError::MalformedCheckpoint(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| HaeError::MalformedCheckpoint("missing integer format_version".into()))?;
        if version != FORMAT_VERSION {
            return Err(HaeError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        // re-parse from bytes: going through `Value` would lose the
        // tensor order of the params object
        serde_json::from_slice(bytes).map_err(|e| HaeError::MalformedCheckpoint(e.to_string()))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ckpt.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_json(&fs::read(path)?)
}

/// `params` as a JSON object `name → {shape, data}`, keeping tensor order.
mod params_json {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Entry {
        shape: Vec<usize>,
        data: Vec<f64>,
    }

    #[derive(Serialize)]
    struct EntryRef<'a> {
        shape: &'a [usize],
        data: &'a [f64],
    }

    pub fn serialize<S: Serializer>(ps: &ParamSet, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(ps.len()))?;
        for t in ps.iter() {
            map.serialize_entry(
                &t.name,
                &EntryRef {
                    shape: &t.shape,
                    data: &t.data,
                },
            )?;
        }
        map.end()
    }

    struct ParamsVisitor;

    impl<'de> Visitor<'de> for ParamsVisitor {
        type Value = ParamSet;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an object of named tensors")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<ParamSet, A::Error> {
            let mut ps = ParamSet::new();
            while let Some((name, e)) = map.next_entry::<String, Entry>()? {
                ps.insert(name, e.shape, e.data).map_err(serde::de::Error::custom)?;
            }
            Ok(ps)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ParamSet, D::Error> {
        d.deserialize_map(ParamsVisitor)
    }
}

/// Mean weighted loss of one minibatch as a function of the trainable
/// tensors.
pub struct BatchObjective<'a> {
    pub model: &'a HaeModel,
    pub xs: Vec<&'a [f64]>,
    pub labels: Vec<Option<usize>>,
    pub weights: LossWeights,
    pub rule: Lambda2Rule,
}

impl Objective for BatchObjective<'_> {
    fn eval<T: Real>(&self, params: &ParamSet<T>) -> Result<T> {
        let tr = Trainable::from_params(params, self.model.config.hyper_activation)?;
        let (loss, _, _) = self
            .model
            .batch_loss(&tr, &self.xs, &self.labels, &self.weights, self.rule)?;
        Ok(loss)
    }
}

impl BatchObjective<'_> {
    /// Unweighted terms plus the resolved weights at the model's current
    /// parameters.
    pub fn breakdown(&self) -> Result<(LossBreakdown, f64)> {
        let (_, terms, w) =
            self.model
                .batch_loss(&self.model.trainable, &self.xs, &self.labels, &self.weights, self.rule)?;
        Ok((total_loss(&terms.values(), &w)?, w.lambda2))
    }
}

/// Sample indices and MLR labels used for training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSet {
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub held_out: Vec<usize>,
}

impl TrainSet {
    /// Training rows of seen classes; unseen classes are never touched.
    pub fn new(ds: &HierDataset, holdout: f64, classes: usize) -> Result<Self> {
        let map = ds.seen_label_map();
        if map.len() != classes {
            return Err(HaeError::InvalidArgument(format!(
                "model has {classes} MLR classes but the dataset has {} seen classes",
                map.len()
            )));
        }
        let (indices, held_out) = ds.holdout_split(holdout);
        if indices.is_empty() {
            return Err(HaeError::Empty("training set"));
        }
        let labels = indices.iter().map(|&i| map[&ds.samples[i].class]).collect();
        Ok(TrainSet {
            indices,
            labels,
            held_out,
        })
    }
}

/// Full-permutation epochs drawn from a dedicated RNG stream; a trailing
/// partial batch is dropped.
struct Batches {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl Batches {
    fn new(n: usize, batch: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Batches {
            rng,
            order: (0..n).collect(),
            pos: n,
            batch: batch.min(n),
        }
    }

    fn next(&mut self) -> &[usize] {
        if self.pos + self.batch > self.order.len() {
            self.order.sort_unstable();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += self.batch;
        &self.order[self.pos - self.batch..self.pos]
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: HaeModel,
    pub checkpoint: Checkpoint,
    pub history: Vec<StepRecord>,
    pub train_set: TrainSet,
}

/// Trains `model` in place of its current parameters. Fails with
/// [`HaeError::Diverged`] carrying the last finite checkpoint if the loss
/// or an update becomes non-finite.
pub fn fit(model: HaeModel, ds: &HierDataset, cfg: &TrainConfig) -> Result<FitOutcome> {
    fit_with(model, ds, cfg, |_| {})
}

/// [`fit`] with a per-step callback, e.g. for progress output.
pub fn fit_with(
    mut model: HaeModel,
    ds: &HierDataset,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<FitOutcome> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(HaeError::Empty("dataset"));
    }
    let set = TrainSet::new(ds, cfg.holdout, model.config.classes)?;
    let mut batches = Batches::new(set.indices.len(), cfg.batch_size, cfg.seed);
    let mut params = model.params()?;
    let mut adam = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let picked = batches.next();
        let obj = BatchObjective {
            model: &model,
            xs: picked
                .iter()
                .map(|&k| ds.samples[set.indices[k]].features.as_slice())
                .collect(),
            labels: picked.iter().map(|&k| Some(set.labels[k])).collect(),
            weights: cfg.weights,
            rule: cfg.lambda2_rule,
        };
        let attempt = obj.breakdown().and_then(|(loss, lambda2)| {
            let (_, grads) = value_and_grad(&obj, &params)?;
            let mut next = params.clone();
            adam_step(&mut next, &grads, &mut adam, cfg)?;
            if !next.all_finite() {
                return Err(HaeError::NonFinite {
                    op: "adam update".into(),
                });
            }
            Ok((loss, lambda2, next))
        });
        let (loss, lambda2, next) = match attempt {
            Ok(v) => v,
            Err(HaeError::NonFinite { .. }) => {
                let last = history.last().map(|r: &StepRecord| r.loss);
                let last_good = Checkpoint::new(&model, cfg, step, last)?;
                return Err(HaeError::Diverged {
                    step,
                    last_good: Box::new(last_good),
                });
            }
            Err(e) => return Err(e),
        };
        model.set_params(&next)?;
        params = next;
        let rec = StepRecord { step, lambda2, loss };
        on_step(&rec);
        history.push(rec);
    }

    let checkpoint = Checkpoint::new(&model, cfg, cfg.steps, history.last().map(|r| r.loss))?;
    Ok(FitOutcome {
        model,
        checkpoint,
        history,
        train_set: set,
    })
}

/// Exponential moving average with span `window` (`α = 2 / (window + 1)`).
pub fn ema(values: &[f64], window: usize) -> Vec<f64> {
    let alpha = 2.0 / (window as f64 + 1.0);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = None;
    for &v in values {
        let next = match acc {
            None => v,
            Some(a) => a + alpha * (v - a),
        };
        acc = Some(next);
        out.push(next);
    }
    out
}

/// Largest rise of the EMA above its running minimum, relative to that
/// minimum. The divergence guard requires this to stay at or below 0.2.
pub fn ema_max_rebound(totals: &[f64], window: usize) -> f64 {
    let mut min = f64::INFINITY;
    let mut worst: f64 = 0.0;
    for v in ema(totals, window) {
        min = min.min(v);
        if min > 0.0 {
            worst = worst.max((v - min) / min);
        }
    }
    worst
}

pub fn write_history(history: &[StepRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("step,l2,perceptual_proxy,latent_rec,hyper,lambda2,total\n");
    for r in history {
        let l = &r.loss;
        let cols = [l.l2, l.perceptual_proxy, l.latent_rec, l.hyper, r.lambda2, l.total].map(fmt_f64);
        out.push_str(&format!("{},{}\n", r.step, cols.join(",")));
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}
