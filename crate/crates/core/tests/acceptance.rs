//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`cargo test --test acceptance`). Failing
//! criteria are reported but do not fail the build unless
//! `HAE_ACCEPTANCE_STRICT=1` is set.

use std::path::Path;
use std::time::{Duration, Instant};

use hae::check::{grad_suite, gyro_distance, identity_suite, GradOptions, IdentityOptions};
use hae::data::{gen_hierarchy, write_dataset, HierDataset, HierSpec, Split};
use hae::edit::{
    interpolate, perturb_geodesic, perturb_geodesic_at_radius, perturb_tangent, transfer_edit, EditDirection,
};
use hae::eval::{
    config_hash, default_radii, mlr_accuracy, monotone_within, pick_sources, radius_structure, reference_pool, sweep,
    train_oracle, Metrics, OracleConfig, SweepConfig,
};
use hae::geometry::{distance, kernels, radius, Ball, PoincarePoint};
use hae::hyperlayers::HyperMlr;
use hae::model::{HaeModel, ModelConfig};
use hae::train::{ema_max_rebound, fit, save_checkpoint, FitOutcome, TrainConfig};
use sha2::{Digest, Sha256};

const SLACK: f64 = 0.03;

struct Tally {
    passed: usize,
    failed: Vec<String>,
}

impl Tally {
    fn line(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(name.to_string());
        }
    }
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

fn closed_forms() -> Vec<(&'static str, f64, f64)> {
    let ln3 = 3f64.ln();
    let eps = 4e-3;
    let mlr = HyperMlr {
        classes: 1,
        dim: 2,
        offsets: vec![0.0, 0.0],
        normals: vec![1.0, 0.0],
    };
    vec![
        (
            "(0.3,0) ⊕ (0.4,0)",
            kernels::mobius_add(&[0.3, 0.0], &[0.4, 0.0], 1.0)[0],
            0.625,
        ),
        ("2 ⊗ (0.5,0)", kernels::mobius_scalar_mul(2.0, &[0.5, 0.0], 1.0)[0], 0.8),
        ("d(0, (0.5,0))", kernels::distance(&[0.0, 0.0], &[0.5, 0.0], 1.0), ln3),
        (
            "MLR logit at (0.5,0)",
            mlr.logits(&[0.5, 0.0], 1.0, eps).unwrap()[0],
            2.0 * ln3,
        ),
        ("r_max", Ball::default().r_max(), ((2.0 - eps) / eps).ln()),
    ]
}

fn mean_l2(model: &HaeModel, ds: &HierDataset, indices: &[usize]) -> f64 {
    let total: f64 = indices
        .iter()
        .map(|&i| model.forward(&ds.samples[i].features, None).unwrap().terms.l2)
        .sum();
    total / indices.len() as f64
}

fn row_space_floor(model: &HaeModel, ds: &HierDataset, indices: &[usize]) -> f64 {
    let total: f64 = indices
        .iter()
        .map(|&i| {
            let x = &ds.samples[i].features;
            let back = model.generator.forward(&model.backbone.forward(x).unwrap()).unwrap();
            back.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        })
        .sum();
    total / indices.len() as f64
}

/// Largest error over every editing contract, on trained codes.
fn edit_contracts(model: &HaeModel, ds: &HierDataset, pool: &[PoincarePoint]) -> (bool, f64, f64) {
    let codes: Vec<PoincarePoint> = ds
        .samples
        .iter()
        .step_by(37)
        .map(|s| model.encode(&s.features).unwrap().1)
        .collect();
    let mut endpoints_exact = true;
    let mut step_err: f64 = 0.0;
    for (a, b) in codes.iter().zip(codes.iter().rev()) {
        let path = interpolate(a, b, 9).unwrap();
        endpoints_exact &= &path[0] == a && &path[8] == b;
        let each = distance(a, b).unwrap() / 8.0;
        for w in path.windows(2) {
            step_err = step_err.max((distance(&w[0], &w[1]).unwrap() - each).abs());
        }
    }

    let r_max = model.ball.r_max();
    let mut radii = default_radii(r_max);
    radii.extend([0.5, 1.0, 2.0, 3.0]);
    let u = EditDirection::random(model.config.ball_dim, 11).unwrap();
    let mut radius_err: f64 = 0.0;
    let mut note = |z: &PoincarePoint, r: f64| radius_err = radius_err.max((radius(z).get() - r).abs());
    for &r in &radii {
        for (k, z) in codes.iter().enumerate() {
            let seed = k as u64;
            note(&perturb_tangent(z, &u, 0.5, r).unwrap(), r);
            note(&perturb_geodesic_at_radius(z, pool, 0.2, r, seed).unwrap(), r);
            note(&perturb_geodesic(z, pool, 0.0, r, seed).unwrap(), r);
            note(&perturb_geodesic(z, pool, 1.0, r, seed).unwrap(), r);
        }
        for z in transfer_edit(&u, 0.5, r, &codes).unwrap() {
            note(&z, r);
        }
    }
    (endpoints_exact, step_err, radius_err)
}

fn file_hash(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

/// Dataset, short training run and metrics, all written to `dir`.
fn pipeline_hashes(dir: &Path) -> [String; 3] {
    let spec = HierSpec::default();
    let ds = gen_hierarchy(&spec).unwrap();
    let data = dir.join("data.csv");
    write_dataset(&ds, &data).unwrap();

    let model = HaeModel::new(ModelConfig::default()).unwrap();
    let train = TrainConfig {
        steps: 300,
        ..TrainConfig::default()
    };
    let out = fit(model, &ds, &train).unwrap();
    let ckpt = dir.join("checkpoint.json");
    save_checkpoint(&out.checkpoint, &ckpt).unwrap();

    let oracle = train_oracle(&ds, &OracleConfig::default()).unwrap();
    let cfg = SweepConfig {
        n_sources: 8,
        per_source: 4,
        ..SweepConfig::default()
    };
    let pool = reference_pool(&out.model, &ds, &out.train_set.indices).unwrap();
    let sources = pick_sources(&out.model, &oracle, &ds, cfg.source_split, cfg.n_sources).unwrap();
    let report = sweep(
        &out.model,
        &oracle,
        &sources,
        &pool,
        &default_radii(out.model.ball.r_max()),
        &cfg,
    )
    .unwrap();
    let structure = radius_structure(&out.model, &ds, 512, 0).unwrap();
    let hash = config_hash(&(&spec, &train, &cfg)).unwrap();
    let metrics = dir.join("metrics.json");
    Metrics::new(&report, structure, 0, hash).write(&metrics).unwrap();

    [file_hash(&data), file_hash(&ckpt), file_hash(&metrics)]
}

fn main() {
    let mut t = Tally {
        passed: 0,
        failed: Vec::new(),
    };

    // 1
    let ids = identity_suite(&IdentityOptions::default(), gyro_distance);
    let ok = ids.passed() && ids.elapsed <= Duration::from_secs(10);
    let worst = ids.lines.iter().map(|l| l.max_error).fold(0.0, f64::max);
    t.line(
        "1 geometry identities",
        ok,
        format!(
            "10^4 pairs, worst error {worst:.2e} (tol 1e-8), {:.2?} (limit 10 s)",
            ids.elapsed
        ),
    );

    // 2
    let forms = closed_forms();
    let worst = forms.iter().map(|(_, g, w)| rel(*g, *w)).fold(0.0, f64::max);
    t.line(
        "2 closed-form oracles",
        worst <= 1e-9,
        format!("worst relative error {worst:.2e} (tol 1e-9)"),
    );
    for (name, got, want) in &forms {
        println!("    {name} = {got:.12} (want {want:.12})");
    }

    // 3
    let grads = grad_suite(&GradOptions::default()).unwrap();
    let worst = grads.lines.iter().map(|l| l.max_error).fold(0.0, f64::max);
    t.line(
        "3 gradient suite",
        grads.passed(),
        format!(
            "{} checks over 100 configurations, worst relative error {worst:.2e} (tol 1e-4)",
            grads.lines.len()
        ),
    );

    // 4
    let ds = gen_hierarchy(&HierSpec::default()).unwrap();
    let cfg = ModelConfig {
        classes: ds.classes(Split::Seen).len(),
        ..ModelConfig::default()
    };
    let init = HaeModel::new(cfg).unwrap();
    let train = TrainConfig::default();
    let started = Instant::now();
    let FitOutcome {
        model,
        history,
        train_set,
        ..
    } = fit(init.clone(), &ds, &train).unwrap();
    let elapsed = started.elapsed();
    let acc = mlr_accuracy(&model, &ds, &train_set.held_out).unwrap();
    let l2_before = mean_l2(&init, &ds, &train_set.indices);
    let l2_after = mean_l2(&model, &ds, &train_set.indices);
    let ok = acc >= 0.9 && l2_after <= 0.1 * l2_before && elapsed <= Duration::from_secs(600);
    t.line(
        "4 desk-scale training",
        ok,
        format!(
            "held-out MLR accuracy {acc:.3} (need 0.90), l2 {l2_before:.3} -> {l2_after:.3} (need <= {:.3}), {:.1?} (limit 10 min)",
            0.1 * l2_before,
            elapsed
        ),
    );
    let floor = row_space_floor(&init, &ds, &train_set.indices);
    println!(
        "    l2 of the frozen backbone/generator round trip alone (no trainable part can go below it): {floor:.3}"
    );
    let totals: Vec<f64> = history.iter().map(|r| r.loss.total).collect();
    let rebound = ema_max_rebound(&totals, 100);
    println!(
        "    loss EMA(100) rebound above its minimum: {:.1}% (guard 20%)",
        100.0 * rebound
    );

    // 5
    let structure = radius_structure(&model, &ds, 4096, 0).unwrap();
    let frac = structure.contracted_fraction();
    t.line(
        "5 hierarchy structure",
        frac >= 0.9,
        format!(
            "{:.0}% of classes have midpoints inside their instances (need 90%); instance radius {:.3}, same-class midpoints {:.3}",
            100.0 * frac,
            structure.instance_mean,
            structure.same_class_midpoint_mean.unwrap_or(f64::NAN)
        ),
    );

    // 6
    let oracle = train_oracle(&ds, &OracleConfig::default()).unwrap();
    let pool = reference_pool(&model, &ds, &train_set.indices).unwrap();
    let sweep_cfg = SweepConfig::default();
    let sources = pick_sources(&model, &oracle, &ds, sweep_cfg.source_split, sweep_cfg.n_sources).unwrap();
    let report = sweep(
        &model,
        &oracle,
        &sources,
        &pool,
        &default_radii(model.ball.r_max()),
        &sweep_cfg,
    )
    .unwrap();
    let pres = report.preservation();
    let div = report.diversity();
    let ok = monotone_within(&pres, true, SLACK) && monotone_within(&div, false, SLACK);
    t.line(
        "6 radius sweep trend",
        ok,
        format!(
            "{} perturbations per radius; preservation {pres:.3?} (non-increasing), diversity {div:.3?} (non-decreasing), slack {SLACK}",
            sweep_cfg.n_sources * sweep_cfg.per_source
        ),
    );
    let natural = sweep(
        &model,
        &oracle,
        &sources,
        &pool,
        &default_radii(structure.instance_mean),
        &sweep_cfg,
    )
    .unwrap();
    println!(
        "    same fractions of the mean code radius {:.3}: preservation {:.3?}, diversity {:.3?}",
        structure.instance_mean,
        natural.preservation(),
        natural.diversity()
    );

    // 7
    let (exact, step_err, radius_err) = edit_contracts(&model, &ds, &pool);
    t.line(
        "7 geodesic editing",
        exact && step_err <= 1e-8 && radius_err <= 1e-8,
        format!(
            "endpoints exact: {exact}; step spacing error {step_err:.2e}; radius error {radius_err:.2e} (tol 1e-8)"
        ),
    );

    // 8
    let runs: Vec<[String; 3]> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            pipeline_hashes(dir.path())
        })
        .collect();
    let same: Vec<bool> = (0..3).map(|i| runs[0][i] == runs[1][i]).collect();
    t.line(
        "8 determinism",
        same.iter().all(|&b| b),
        format!(
            "dataset {}, checkpoint {}, metrics {} across two runs",
            if same[0] { "identical" } else { "differs" },
            if same[1] { "identical" } else { "differs" },
            if same[2] { "identical" } else { "differs" }
        ),
    );

    println!("acceptance: {}/{} criteria pass", t.passed, t.passed + t.failed.len());
    if !t.failed.is_empty() && std::env::var("HAE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
