//! Desk-scale evaluation: a frozen oracle classifier on raw features,
//! category preservation and diversity under radius-controlled
//! perturbation, and the radius structure of the learned embedding.
//!
//! FID and LPIPS need pretrained image networks and are not computed. The
//! oracle preservation rate and the diversity proxy stand in for them as
//! trend indicators only.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{HierDataset, Sample, Split};
use crate::edit::{perturb, PerturbSpec, PerturbStep};
use crate::error::{check_dim, HaeError, Result};
use crate::geometry::{self, PoincarePoint};
use crate::grad::{value_and_grad, Objective, ParamSet, Real};
use crate::hyperlayers::Mlp;
use crate::io::{fmt_f64, to_json};
use crate::losses::nll_loss;
use crate::model::HaeModel;
use crate::train::{adam_step, AdamState, TrainConfig};

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn config_hash(value: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &x)| if x > best.1 { (i, x) } else { best },
        )
        .0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub hidden: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            hidden: 64,
            steps: 600,
            batch_size: 32,
            learning_rate: 3e-3,
            holdout: 0.2,
            seed: 0,
        }
    }
}

/// Small MLP over raw features, trained once on every class and then
/// frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleClassifier {
    /// Global class id of each output.
    pub classes: Vec<usize>,
    pub mlp: Mlp,
    pub held_out_accuracy: f64,
}

struct OracleObjective<'a> {
    xs: Vec<&'a [f64]>,
    labels: Vec<usize>,
}

impl Objective for OracleObjective<'_> {
    fn eval<T: Real>(&self, params: &ParamSet<T>) -> Result<T> {
        let mlp = Mlp::from_params(params, "oracle")?;
        let logits = self
            .xs
            .iter()
            .map(|x| {
                let xt: Vec<T> = x.iter().map(|&v| T::cst(v)).collect();
                mlp.forward(&xt)
            })
            .collect::<Result<Vec<_>>>()?;
        nll_loss(&logits, &self.labels)
    }
}

impl OracleClassifier {
    /// Global class id predicted for `x`.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.classes[argmax(&self.mlp.forward(x)?)])
    }

    pub fn accuracy<'a>(&self, samples: impl IntoIterator<Item = &'a Sample>) -> Result<f64> {
        let (mut hit, mut n) = (0usize, 0usize);
        for s in samples {
            n += 1;
            hit += usize::from(self.predict(&s.features)? == s.class);
        }
        if n == 0 {
            return Err(HaeError::Empty("accuracy samples"));
        }
        Ok(hit as f64 / n as f64)
    }
}

/// Trains on every class with a per-class holdout; deterministic in
/// `cfg.seed`.
pub fn train_oracle(ds: &HierDataset, cfg: &OracleConfig) -> Result<OracleClassifier> {
    if ds.is_empty() {
        return Err(HaeError::Empty("dataset"));
    }
    let classes = ds.all_classes();
    if classes.len() < 2 {
        return Err(HaeError::InvalidArgument("oracle needs at least 2 classes".into()));
    }
    let index: BTreeMap<usize, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let (train, held) = ds.holdout_split_by(cfg.holdout, |_| true);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mlp = Mlp::glorot(&[ds.dim, cfg.hidden, classes.len()], &mut rng)?;
    let mut params = ParamSet::new();
    mlp.write_params(&mut params, "oracle")?;
    let adam_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        ..TrainConfig::default()
    };
    let mut adam = AdamState::new(&params);
    for step in 0..cfg.steps {
        let batch: Vec<usize> = (0..cfg.batch_size)
            .map(|_| train[rng.random_range(0..train.len())])
            .collect();
        let obj = OracleObjective {
            xs: batch.iter().map(|&i| ds.samples[i].features.as_slice()).collect(),
            labels: batch.iter().map(|&i| index[&ds.samples[i].class]).collect(),
        };
        let (loss, grads) = value_and_grad(&obj, &params)?;
        if !loss.is_finite() {
            return Err(HaeError::NonFinite {
                op: format!("oracle loss at step {step}"),
            });
        }
        adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
    }
    let mut oracle = OracleClassifier {
        classes,
        mlp: Mlp::from_params(&params, "oracle")?,
        held_out_accuracy: f64::NAN,
    };
    let eval_on = if held.is_empty() { &train } else { &held };
    oracle.held_out_accuracy = oracle.accuracy(eval_on.iter().map(|&i| &ds.samples[i]))?;
    Ok(oracle)
}

/// Fraction of `indices` whose MLR argmax matches the seen-class label.
pub fn mlr_accuracy(model: &HaeModel, ds: &HierDataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(HaeError::Empty("accuracy samples"));
    }
    let map = ds.seen_label_map();
    let mut hit = 0usize;
    for &i in indices {
        let s = &ds.samples[i];
        let label = *map
            .get(&s.class)
            .ok_or_else(|| HaeError::InvalidArgument(format!("class {} is not a seen class", s.class)))?;
        let (_, z) = model.encode(&s.features)?;
        hit += usize::from(argmax(&model.logits(&z)?) == label);
    }
    Ok(hit as f64 / indices.len() as f64)
}

/// Mean pairwise Euclidean distance.
pub fn diversity_proxy(samples: &[Vec<f64>]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(HaeError::InvalidArgument(format!(
            "diversity needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            check_dim(samples[i].len(), samples[j].len())?;
            sum += samples[i]
                .iter()
                .zip(&samples[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// A code to perturb, labelled by the oracle's verdict on its unmodified
/// reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct Source {
    pub id: usize,
    pub z: PoincarePoint,
    pub label: usize,
}

impl Source {
    pub fn new(model: &HaeModel, oracle: &OracleClassifier, sample: &Sample) -> Result<Self> {
        let (_, z) = model.encode(&sample.features)?;
        let (_, recon) = model.decode(&z)?;
        Ok(Source {
            id: sample.id,
            z,
            label: oracle.predict(&recon)?,
        })
    }
}

/// Embeddings of the given training rows, used as perturbation references.
pub fn reference_pool(model: &HaeModel, ds: &HierDataset, indices: &[usize]) -> Result<Vec<PoincarePoint>> {
    indices
        .iter()
        .map(|&i| Ok(model.encode(&ds.samples[i].features)?.1))
        .collect()
}

fn sample_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

/// One perturbed and decoded code.
#[derive(Clone, Debug)]
pub struct Perturbed {
    pub source: usize,
    pub z: PoincarePoint,
    pub decoded: Vec<f64>,
}

/// `per_source` perturbations of every source at radius `r`. Perturbation
/// `k` uses the same seed at every radius, so a sweep applies the same
/// edits at different radii.
pub fn perturb_sources(
    model: &HaeModel,
    sources: &[Source],
    pool: &[PoincarePoint],
    r: f64,
    step: PerturbStep,
    per_source: usize,
    seed: u64,
) -> Result<Vec<Perturbed>> {
    let seeds = sample_seeds(seed, sources.len() * per_source);
    let mut out = Vec::with_capacity(seeds.len());
    for (si, src) in sources.iter().enumerate() {
        for k in 0..per_source {
            let spec = PerturbSpec {
                target_radius: r,
                step,
                seed: seeds[si * per_source + k],
            };
            let z = perturb(&src.z, pool, &spec)?;
            let (_, decoded) = model.decode(&z)?;
            out.push(Perturbed { source: si, z, decoded });
        }
    }
    Ok(out)
}

/// Fraction of `n_samples` perturbed-then-decoded codes, cycling through
/// `sources`, that the oracle still assigns to the source's label.
#[allow(clippy::too_many_arguments)]
pub fn preservation_rate(
    model: &HaeModel,
    oracle: &OracleClassifier,
    sources: &[Source],
    pool: &[PoincarePoint],
    r: f64,
    n_samples: usize,
    step: PerturbStep,
    seed: u64,
) -> Result<f64> {
    if sources.is_empty() {
        return Err(HaeError::Empty("perturbation sources"));
    }
    if n_samples == 0 {
        return Err(HaeError::Empty("perturbation samples"));
    }
    let seeds = sample_seeds(seed, n_samples);
    let mut kept = 0usize;
    for (i, &s) in seeds.iter().enumerate() {
        let src = &sources[i % sources.len()];
        let spec = PerturbSpec {
            target_radius: r,
            step,
            seed: s,
        };
        let (_, decoded) = model.decode(&perturb(&src.z, pool, &spec)?)?;
        kept += usize::from(oracle.predict(&decoded)? == src.label);
    }
    Ok(kept as f64 / n_samples as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_sources: usize,
    pub per_source: usize,
    pub step: PerturbStep,
    /// Split the sources are drawn from.
    pub source_split: Split,
    pub seed: u64,
}

impl Default for SweepConfig {
    /// 32 sources × 8 perturbations = 256 per radius.
    fn default() -> Self {
        SweepConfig {
            n_sources: 32,
            per_source: 8,
            step: PerturbStep::default(),
            source_split: Split::Unseen,
            seed: 0,
        }
    }
}

/// Radii as fractions of `r_max`, largest first.
pub fn default_radii(r_max: f64) -> Vec<f64> {
    [1.0, 0.85, 0.7, 0.55].iter().map(|f| f * r_max).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius: f64,
    pub preservation: f64,
    /// Mean over sources of the pairwise spread of that source's decodes.
    pub diversity: f64,
    /// Mean hyperbolic radius of the perturbed codes.
    pub mean_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusSweepReport {
    pub rows: Vec<SweepRow>,
}

impl RadiusSweepReport {
    pub fn radii(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.radius).collect()
    }

    pub fn preservation(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.preservation).collect()
    }

    pub fn diversity(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.diversity).collect()
    }
}

/// Evenly spaced pick of `n` sources from `split`, in file order.
pub fn pick_sources(
    model: &HaeModel,
    oracle: &OracleClassifier,
    ds: &HierDataset,
    split: Split,
    n: usize,
) -> Result<Vec<Source>> {
    let rows: Vec<&Sample> = ds.samples.iter().filter(|s| s.split == split).collect();
    if rows.is_empty() || n == 0 {
        return Err(HaeError::Empty("perturbation sources"));
    }
    let n = n.min(rows.len());
    (0..n)
        .map(|k| Source::new(model, oracle, rows[k * rows.len() / n]))
        .collect()
}

/// Same perturbation seeds at every radius; `radii` must be descending.
pub fn sweep(
    model: &HaeModel,
    oracle: &OracleClassifier,
    sources: &[Source],
    pool: &[PoincarePoint],
    radii: &[f64],
    cfg: &SweepConfig,
) -> Result<RadiusSweepReport> {
    if radii.is_empty() {
        return Err(HaeError::Empty("radii"));
    }
    if radii.windows(2).any(|w| w[0] < w[1]) {
        return Err(HaeError::InvalidArgument("radii must be in descending order".into()));
    }
    if cfg.per_source < 2 {
        return Err(HaeError::InvalidArgument(
            "per_source must be >= 2 for the diversity proxy".into(),
        ));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let out = perturb_sources(model, sources, pool, r, cfg.step, cfg.per_source, cfg.seed)?;
        let mut kept = 0usize;
        for p in &out {
            kept += usize::from(oracle.predict(&p.decoded)? == sources[p.source].label);
        }
        let mut div = 0.0;
        for group in out.chunks(cfg.per_source) {
            div += diversity_proxy(&group.iter().map(|p| p.decoded.clone()).collect::<Vec<_>>())?;
        }
        let mean_radius = out.iter().map(|p| geometry::radius(&p.z).get()).sum::<f64>() / out.len() as f64;
        rows.push(SweepRow {
            radius: r,
            preservation: kept as f64 / out.len() as f64,
            diversity: div / sources.len() as f64,
            mean_radius,
        });
    }
    Ok(RadiusSweepReport { rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRadii {
    pub class: usize,
    pub instance_mean: f64,
    /// Absent when the class has a single sample.
    pub midpoint_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusStructure {
    /// Mean radius of every instance embedding.
    pub instance_mean: f64,
    /// Mean radius of pairwise same-class geodesic midpoints.
    pub same_class_midpoint_mean: Option<f64>,
    /// Mean radius of sampled cross-superclass midpoints.
    pub cross_super_midpoint_mean: Option<f64>,
    pub per_class: Vec<ClassRadii>,
}

impl RadiusStructure {
    /// Share of classes whose midpoints sit strictly nearer the origin
    /// than their instances; classes without midpoints are skipped.
    pub fn contracted_fraction(&self) -> f64 {
        let with: Vec<_> = self
            .per_class
            .iter()
            .filter_map(|c| c.midpoint_mean.map(|m| m < c.instance_mean))
            .collect();
        if with.is_empty() {
            return 0.0;
        }
        with.iter().filter(|&&b| b).count() as f64 / with.len() as f64
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Every same-class pair is used; cross-superclass pairs are a seeded
/// sample of at most `cross_pairs`.
pub fn radius_structure(model: &HaeModel, ds: &HierDataset, cross_pairs: usize, seed: u64) -> Result<RadiusStructure> {
    if ds.is_empty() {
        return Err(HaeError::Empty("dataset"));
    }
    let codes: Vec<PoincarePoint> = ds
        .samples
        .iter()
        .map(|s| Ok(model.encode(&s.features)?.1))
        .collect::<Result<_>>()?;
    let radii: Vec<f64> = codes.iter().map(|z| geometry::radius(z).get()).collect();

    let mut per_class = Vec::new();
    let mut all_mid = Vec::new();
    for class in ds.all_classes() {
        let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].class == class).collect();
        let inst: Vec<f64> = idx.iter().map(|&i| radii[i]).collect();
        let mut mids = Vec::new();
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                mids.push(geometry::radius(&geometry::geodesic(&codes[i], &codes[j], 0.5)?).get());
            }
        }
        all_mid.extend_from_slice(&mids);
        per_class.push(ClassRadii {
            class,
            instance_mean: mean(&inst).expect("class has samples"),
            midpoint_mean: mean(&mids),
        });
    }

    let mut cross = Vec::new();
    let supers: Vec<usize> = ds.samples.iter().map(|s| s.superclass).collect();
    if supers.iter().any(|&s| s != supers[0]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tries = 0;
        while cross.len() < cross_pairs && tries < 20 * cross_pairs {
            tries += 1;
            let (i, j) = (rng.random_range(0..ds.len()), rng.random_range(0..ds.len()));
            if supers[i] != supers[j] {
                cross.push(geometry::radius(&geometry::geodesic(&codes[i], &codes[j], 0.5)?).get());
            }
        }
    }

    Ok(RadiusStructure {
        instance_mean: mean(&radii).expect("nonempty dataset"),
        same_class_midpoint_mean: mean(&all_mid),
        cross_super_midpoint_mean: mean(&cross),
        per_class,
    })
}

/// The metrics document written by `hae eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub radii: Vec<f64>,
    pub preservation: Vec<f64>,
    pub diversity: Vec<f64>,
    pub mean_radius: Vec<f64>,
    pub radius_structure: RadiusStructure,
    pub seed: u64,
    pub config_hash: String,
    pub notes: Vec<String>,
}

impl Metrics {
    pub fn new(report: &RadiusSweepReport, structure: RadiusStructure, seed: u64, config_hash: String) -> Self {
        Metrics {
            radii: report.radii(),
            preservation: report.preservation(),
            diversity: report.diversity(),
            mean_radius: report.rows.iter().map(|r| r.mean_radius).collect(),
            radius_structure: structure,
            seed,
            config_hash,
            notes: vec![
                "FID/LPIPS not computed: preservation is oracle agreement on decoded samples, diversity is mean pairwise Euclidean distance of decodes per source".into(),
            ],
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        to_json(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius,preservation,diversity,mean_radius\n");
        for i in 0..self.radii.len() {
            let cols = [
                self.radii[i],
                self.preservation[i],
                self.diversity[i],
                self.mean_radius[i],
            ]
            .map(fmt_f64);
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.csv`.
    pub fn write(&self, json_path: impl AsRef<Path>) -> Result<()> {
        let json_path = json_path.as_ref();
        fs::write(json_path, self.to_json()?)?;
        fs::write(json_path.with_extension("csv"), self.to_csv())?;
        Ok(())
    }
}

/// True when `v` never rises (`descending`) or never falls by more than
/// `slack` between consecutive entries.
pub fn monotone_within(v: &[f64], descending: bool, slack: f64) -> bool {
    v.windows(2).all(|w| {
        if descending {
            w[1] <= w[0] + slack
        } else {
            w[1] >= w[0] - slack
        }
    })
}
