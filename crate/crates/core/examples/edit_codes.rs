//! The three edit families on a briefly trained model: geodesic
//! interpolation, radius-controlled perturbation, and one tangent edit
//! shared across several samples.

use hae::data::{gen_hierarchy, HierSpec, Split};
use hae::edit::{interpolate, perturb, transfer_edit, EditDirection, PerturbSpec, PerturbStep};
use hae::eval::reference_pool;
use hae::geometry::{distance, radius};
use hae::model::{HaeModel, ModelConfig};
use hae::train::{fit, TrainConfig};

fn main() -> hae::Result<()> {
    let ds = gen_hierarchy(&HierSpec::default())?;
    let model = HaeModel::new(ModelConfig {
        classes: ds.classes(Split::Seen).len(),
        ..ModelConfig::default()
    })?;
    let fit = fit(
        model,
        &ds,
        &TrainConfig {
            steps: 300,
            ..TrainConfig::default()
        },
    )?;
    let model = fit.model;
    let code = |id: usize| -> hae::Result<_> { Ok(model.encode(&ds.get(id).expect("id exists").features)?.1) };

    let (a, b) = (code(0)?, code(700)?);
    let path = interpolate(&a, &b, 6)?;
    let hops: Vec<String> = path
        .windows(2)
        .map(|w| distance(&w[0], &w[1]).map(|d| format!("{d:.6}")))
        .collect::<hae::Result<_>>()?;
    println!("interpolation hops (equal by construction): {}", hops.join(" "));

    // references come from the seen training embeddings
    let pool = reference_pool(&model, &ds, &fit.train_set.indices)?;
    let src = code(
        ds.samples
            .iter()
            .find(|s| s.split == Split::Unseen)
            .expect("unseen rows")
            .id,
    )?;
    for r in [6.0, 4.0, 2.0] {
        for step in [
            PerturbStep::Geodesic { t: 0.2 },
            PerturbStep::GeodesicAtRadius { t: 0.2 },
        ] {
            let z = perturb(
                &src,
                &pool,
                &PerturbSpec {
                    target_radius: r,
                    step,
                    seed: 1,
                },
            )?;
            let (_, x) = model.decode(&z)?;
            println!(
                "r = {r}  {step:?}: edited radius {:.4}, decoded |x| {:.3}",
                radius(&z).get(),
                x.iter().map(|v| v * v).sum::<f64>().sqrt()
            );
        }
    }

    let u = EditDirection::random(model.config.ball_dim, 7)?;
    let codes = [code(1)?, code(2)?, code(3)?];
    for z in transfer_edit(&u, 0.5, 3.0, &codes)? {
        println!("shared edit lands at radius {:.10}", radius(&z).get());
    }
    Ok(())
}
