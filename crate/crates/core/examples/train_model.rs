//! Trains the default desk-scale model and saves a checkpoint with its
//! loss history.
//!
//! ```text
//! cargo run --release --example train_model -- 5000
//! ```
//!
//! The step count defaults to 500 so the example finishes in seconds.

use std::time::Instant;

use hae::data::{gen_hierarchy, HierSpec, Split};
use hae::eval::mlr_accuracy;
use hae::model::{HaeModel, ModelConfig};
use hae::train::{ema, fit_with, load_checkpoint, save_checkpoint, write_history, TrainConfig};

fn main() -> hae::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let ds = gen_hierarchy(&HierSpec::default())?;
    let model = HaeModel::new(ModelConfig {
        classes: ds.classes(Split::Seen).len(),
        ..ModelConfig::default()
    })?;
    let cfg = TrainConfig {
        steps,
        ..TrainConfig::default()
    };

    let start = Instant::now();
    let fit = fit_with(model, &ds, &cfg, |r| {
        if (r.step + 1) % (steps / 5).max(1) == 0 {
            println!(
                "step {:>5}  total {:.4}  l2 {:.4}  hyper {:.4}",
                r.step + 1,
                r.loss.total,
                r.loss.l2,
                r.loss.hyper
            );
        }
    })?;
    println!("trained {steps} steps in {:.1?}", start.elapsed());

    let totals: Vec<f64> = fit.history.iter().map(|r| r.loss.total).collect();
    let smooth = ema(&totals, 100);
    println!("smoothed loss {:.4} -> {:.4}", smooth[0], smooth[smooth.len() - 1]);
    println!(
        "held-out MLR accuracy {:.4}",
        mlr_accuracy(&fit.model, &ds, &fit.train_set.held_out)?
    );

    let dir = std::env::temp_dir();
    let ckpt = dir.join("hae_checkpoint.json");
    save_checkpoint(&fit.checkpoint, &ckpt)?;
    write_history(&fit.history, dir.join("hae_checkpoint.history.csv"))?;
    let reloaded = load_checkpoint(&ckpt)?.model()?;
    assert_eq!(reloaded.params()?, fit.model.params()?);
    println!("checkpoint written to {} and reloaded bit-exactly", ckpt.display());
    Ok(())
}
