//! Trains a model with a 2-D ball and draws its codes on the disk, with a
//! few geodesics between classes.

use hae::data::{gen_hierarchy, HierSpec, Split};
use hae::model::{HaeModel, ModelConfig};
use hae::plot::{embed, write_embeddings, write_svg, PlotOptions};
use hae::train::{fit, TrainConfig};

fn main() -> hae::Result<()> {
    let ds = gen_hierarchy(&HierSpec {
        per_class: 32,
        ..HierSpec::default()
    })?;
    let model = HaeModel::new(ModelConfig {
        ball_dim: 2,
        classes: ds.classes(Split::Seen).len(),
        ..ModelConfig::default()
    })?;
    let model = fit(
        model,
        &ds,
        &TrainConfig {
            steps: 1500,
            ..TrainConfig::default()
        },
    )?
    .model;

    let emb = embed(&model, &ds)?;
    let dir = std::env::temp_dir();
    write_embeddings(&emb, &dir.join("hae_embeddings.csv"))?;

    let first_of = |class: usize| ds.samples.iter().find(|s| s.class == class).expect("class present").id;
    let opts = PlotOptions {
        geodesics: vec![
            (first_of(0), first_of(1)),
            (first_of(0), first_of(5)),
            (first_of(9), first_of(14)),
        ],
        ..PlotOptions::default()
    };
    let svg = dir.join("hae_disk.svg");
    write_svg(&emb, &opts, &svg)?;
    println!("{} points drawn to {}", emb.rows.len(), svg.display());
    Ok(())
}
