//! Preservation and diversity of perturbations as the target radius
//! shrinks, plus the midpoint-contraction check on trained codes.
//!
//! ```text
//! cargo run --release --example radius_sweep -- 5000
//! ```

use hae::data::{gen_hierarchy, HierSpec, Split};
use hae::eval::{
    default_radii, pick_sources, radius_structure, reference_pool, sweep, train_oracle, OracleConfig, SweepConfig,
};
use hae::model::{HaeModel, ModelConfig};
use hae::train::{fit, TrainConfig};

fn main() -> hae::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(800);
    let ds = gen_hierarchy(&HierSpec::default())?;
    let model = HaeModel::new(ModelConfig {
        classes: ds.classes(Split::Seen).len(),
        ..ModelConfig::default()
    })?;
    let fit = fit(
        model,
        &ds,
        &TrainConfig {
            steps,
            ..TrainConfig::default()
        },
    )?;
    let model = fit.model;

    let oracle = train_oracle(&ds, &OracleConfig::default())?;
    println!("oracle held-out accuracy {:.3}", oracle.held_out_accuracy);

    let pool = reference_pool(&model, &ds, &fit.train_set.indices)?;
    let cfg = SweepConfig::default();
    let sources = pick_sources(&model, &oracle, &ds, cfg.source_split, cfg.n_sources)?;
    let structure = radius_structure(&model, &ds, 4096, 0)?;

    // r_max anchored radii, then the same fractions of where codes actually sit
    for (label, top) in [
        ("r_max", model.ball.r_max()),
        ("mean code radius", structure.instance_mean),
    ] {
        println!("radii as fractions of {label} ({top:.3}):");
        let report = sweep(&model, &oracle, &sources, &pool, &default_radii(top), &cfg)?;
        for r in &report.rows {
            println!(
                "  radius {:.3}  preservation {:.3}  diversity {:.4}  mean edited radius {:.3}",
                r.radius, r.preservation, r.diversity, r.mean_radius
            );
        }
    }

    println!(
        "instance radius {:.3}, same-class midpoints {:.3}, cross-superclass midpoints {:.3}",
        structure.instance_mean,
        structure.same_class_midpoint_mean.unwrap_or(f64::NAN),
        structure.cross_super_midpoint_mean.unwrap_or(f64::NAN)
    );
    println!(
        "classes whose midpoints contract: {:.0}%",
        100.0 * structure.contracted_fraction()
    );
    Ok(())
}
