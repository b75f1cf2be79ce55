//! The `hae` command line. Every command echoes its resolved configuration
//! as JSON together with a hash of it; output paths are left out of the
//! hash and inputs enter it by content digest, so reruns that only move
//! files hash the same.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::check::{self, GradOptions, IdentityOptions, SuiteReport};
use crate::data::{gen_hierarchy, read_dataset, write_dataset, HierDataset, HierSpec, Split};
use crate::edit::{self, EditDirection, EditRow, PerturbSpec, PerturbStep};
use crate::error::{HaeError, Result};
use crate::eval::{self, Metrics, OracleConfig, SweepConfig};
use crate::geometry::PoincarePoint;
use crate::model::{HaeModel, ModelConfig};
use crate::plot::{self, PlotOptions};
use crate::train::{self, load_checkpoint, save_checkpoint, Checkpoint, TrainConfig, TrainSet};

#[derive(Parser, Debug)]
#[command(
    name = "hae",
    version,
    about = "Hyperbolic attribute editing on a synthetic hierarchy"
)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output path; each command has its own default.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress progress and summaries; the config echo is always printed.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic two-level dataset as CSV.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint plus a loss history CSV.
    Train(TrainArgs),
    /// Export edited codes and their decoded samples as CSV.
    Edit {
        #[command(subcommand)]
        mode: EditMode,
    },
    /// Run the radius sweep and radius-structure report.
    Eval(EvalArgs),
    /// Encode every sample and write the `id,class,z..` embedding CSV.
    Embed(ModelArgs),
    /// Draw a 2-D embedding file on the disk as SVG.
    Plot(PlotArgs),
    /// Run a self-check suite; exits 1 on any violation.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 128)]
    pub per_class: usize,
    #[arg(long, default_value_t = 4)]
    pub n_super: usize,
    #[arg(long, default_value_t = 4)]
    pub classes_per_super: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub n_unseen: usize,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    /// Defaults to 1e-3, or 1e-4 with --faithful.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Use the original optimizer settings instead of the desk-scale ones.
    #[arg(long)]
    pub faithful: bool,
    #[arg(long, default_value_t = 16)]
    pub ball_dim: usize,
    /// Defaults to min(48, data dimension).
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub layers: usize,
    #[arg(long)]
    pub hyper_activation: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum EditMode {
    /// Geodesic from --src to --dst at `steps` evenly spaced points.
    Interpolate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        src: usize,
        #[arg(long)]
        dst: usize,
        #[arg(long, default_value_t = 8)]
        steps: usize,
    },
    /// Rescale --src to --radius and step toward random seen references.
    Perturb {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        src: usize,
        /// Defaults to r_max.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 0.2)]
        t: f64,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// Rescale the result back onto the target radius.
        #[arg(long)]
        at_radius: bool,
    },
    /// Apply one shared tangent edit to several codes.
    Transfer {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        direction_seed: u64,
        #[arg(long, value_delimiter = ',', required = true)]
        ids: Vec<usize>,
        /// Defaults to r_max.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Seen,
    Unseen,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Seen => Split::Seen,
            SplitArg::Unseen => Split::Unseen,
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Descending list; defaults to [1.0, 0.85, 0.7, 0.55]·r_max.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    #[arg(long, default_value_t = 32)]
    pub sources: usize,
    #[arg(long, default_value_t = 8)]
    pub per_source: usize,
    #[arg(long, default_value_t = 0.2)]
    pub t: f64,
    #[arg(long)]
    pub at_radius: bool,
    #[arg(long, value_enum, default_value_t = SplitArg::Unseen)]
    pub source_split: SplitArg,
    #[arg(long, default_value_t = 4096)]
    pub cross_pairs: usize,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long)]
    pub emb: PathBuf,
    /// Sample-id pairs `a:b` joined by a geodesic; repeatable.
    #[arg(long = "geodesic", value_parser = parse_pair)]
    pub geodesics: Vec<(usize, usize)>,
    #[arg(long, default_value_t = 1.0)]
    pub curvature: f64,
    #[arg(long, default_value_t = 512.0)]
    pub size: f64,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected `a:b`, got `{s}`"))?;
    let id = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("`{v}` is not a sample id"))
    };
    Ok((id(a)?, id(b)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Identities,
    Grads,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
}

/// Whether a command that ran to completion found what it was checking
/// for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Failure => 1,
        }
    }
}

pub fn check_outcome(report: &SuiteReport) -> Outcome {
    if report.passed() {
        Outcome::Success
    } else {
        Outcome::Failure
    }
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn echo(out: &mut impl Write, config: &Value) -> Result<()> {
    writeln!(out, "config {}", serde_json::to_string(config)?)?;
    writeln!(out, "config_hash {}", eval::config_hash(config)?)?;
    Ok(())
}

struct Ctx<'a, W: Write> {
    seed: u64,
    out: Option<PathBuf>,
    quiet: bool,
    w: &'a mut W,
}

impl<W: Write> Ctx<'_, W> {
    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    fn say(&mut self, msg: std::fmt::Arguments) -> Result<()> {
        if !self.quiet {
            self.w.write_fmt(msg)?;
            writeln!(self.w)?;
        }
        Ok(())
    }
}

/// Runs a parsed command, writing the config echo and summaries to `w`.
pub fn run(cli: Cli, w: &mut impl Write) -> Result<Outcome> {
    let mut ctx = Ctx {
        seed: cli.seed,
        out: cli.out,
        quiet: cli.quiet,
        w,
    };
    match cli.command {
        Command::GenData(a) => gen_data(&mut ctx, a),
        Command::Train(a) => train_cmd(&mut ctx, a),
        Command::Edit { mode } => edit_cmd(&mut ctx, mode),
        Command::Eval(a) => eval_cmd(&mut ctx, a),
        Command::Embed(a) => embed_cmd(&mut ctx, a),
        Command::Plot(a) => plot_cmd(&mut ctx, a),
        Command::Check(a) => check_cmd(&mut ctx, a),
    }
}

fn gen_data<W: Write>(ctx: &mut Ctx<W>, a: GenDataArgs) -> Result<Outcome> {
    let spec = HierSpec {
        n_super: a.n_super,
        classes_per_super: a.classes_per_super,
        per_class: a.per_class,
        dim: a.dim,
        noise: a.noise,
        n_unseen_classes: a.n_unseen,
        seed: ctx.seed,
        ..HierSpec::default()
    };
    echo(ctx.w, &json!({ "command": "gen-data", "spec": spec }))?;
    let ds = gen_hierarchy(&spec)?;
    let path = ctx.out_or("data.csv");
    write_dataset(&ds, &path)?;
    ctx.say(format_args!("wrote {} rows to {}", ds.len(), path.display()))?;
    Ok(Outcome::Success)
}

/// Model shape for a dataset; seed 0 reproduces the library defaults.
pub fn model_config_for(ds: &HierDataset, a: &TrainArgs, seed: u64) -> ModelConfig {
    let defaults = ModelConfig::default();
    ModelConfig {
        input_dim: ds.dim,
        latent_dim: a.latent_dim.unwrap_or(defaults.latent_dim.min(ds.dim)),
        ball_dim: a.ball_dim,
        hidden_dim: a.hidden_dim,
        encoder_layers: a.layers,
        decoder_layers: a.layers,
        classes: ds.classes(Split::Seen).len(),
        hyper_activation: a.hyper_activation,
        init_seed: defaults.init_seed.wrapping_add(seed),
        ..defaults
    }
}

fn train_cmd<W: Write>(ctx: &mut Ctx<W>, a: TrainArgs) -> Result<Outcome> {
    let ds = read_dataset(&a.data)?;
    let model_cfg = model_config_for(&ds, &a, ctx.seed);
    let mut tc = if a.faithful {
        TrainConfig::faithful()
    } else {
        TrainConfig::default()
    };
    tc.steps = a.steps;
    tc.batch_size = a.batch_size;
    tc.holdout = a.holdout;
    tc.seed = ctx.seed;
    if let Some(lr) = a.lr {
        tc.learning_rate = lr;
    }
    echo(
        ctx.w,
        &json!({
            "command": "train",
            "data_sha256": file_digest(&a.data)?,
            "model": model_cfg,
            "train": tc,
        }),
    )?;
    let model = HaeModel::new(model_cfg)?;
    let path = ctx.out_or("checkpoint.json");
    let report_every = (tc.steps / 10).max(1);
    let quiet = ctx.quiet;
    let mut progress = Vec::new();
    let result = train::fit_with(model, &ds, &tc, |r| {
        if !quiet && (r.step + 1) % report_every == 0 {
            progress.push(format!(
                "step {:>6}  loss {:.6}  l2 {:.6}",
                r.step + 1,
                r.loss.total,
                r.loss.l2
            ));
        }
    });
    for line in progress {
        writeln!(ctx.w, "{line}")?;
    }
    let fit = match result {
        Ok(fit) => fit,
        Err(HaeError::Diverged { step, last_good }) => {
            let rescue = path.with_extension("last_good.json");
            save_checkpoint(&last_good, &rescue)?;
            writeln!(
                ctx.w,
                "diverged at step {step}; last finite state saved to {}",
                rescue.display()
            )?;
            return Err(HaeError::Diverged { step, last_good });
        }
        Err(e) => return Err(e),
    };
    save_checkpoint(&fit.checkpoint, &path)?;
    let history = path.with_extension("history.csv");
    train::write_history(&fit.history, &history)?;
    let acc = if fit.train_set.held_out.is_empty() {
        f64::NAN
    } else {
        eval::mlr_accuracy(&fit.model, &ds, &fit.train_set.held_out)?
    };
    ctx.say(format_args!(
        "wrote {} and {}; held-out MLR accuracy {acc:.4}",
        path.display(),
        history.display()
    ))?;
    Ok(Outcome::Success)
}

struct Loaded {
    ckpt: Checkpoint,
    model: HaeModel,
    ds: HierDataset,
    digest: Value,
}

fn load(m: &ModelArgs) -> Result<Loaded> {
    let ckpt = load_checkpoint(&m.ckpt)?;
    let model = ckpt.model()?;
    let ds = read_dataset(&m.data)?;
    if ds.dim != model.config.input_dim {
        return Err(HaeError::DimensionMismatch {
            expected: model.config.input_dim,
            found: ds.dim,
        });
    }
    let digest = json!({
        "checkpoint_sha256": file_digest(&m.ckpt)?,
        "data_sha256": file_digest(&m.data)?,
    });
    Ok(Loaded {
        ckpt,
        model,
        ds,
        digest,
    })
}

fn code_of(l: &Loaded, id: usize) -> Result<PoincarePoint> {
    let s =
        l.ds.get(id)
            .ok_or_else(|| HaeError::InvalidArgument(format!("unknown sample id {id}")))?;
    Ok(l.model.encode(&s.features)?.1)
}

fn seen_pool(l: &Loaded) -> Result<Vec<PoincarePoint>> {
    let set = TrainSet::new(&l.ds, l.ckpt.config.train.holdout, l.model.config.classes)?;
    eval::reference_pool(&l.model, &l.ds, &set.indices)
}

fn row(l: &Loaded, id: usize, t_or_step: f64, z: &PoincarePoint) -> Result<EditRow> {
    let (_, x) = l.model.decode(z)?;
    Ok(EditRow {
        id,
        t_or_step,
        z: z.coords().to_vec(),
        decoded: Some(x),
    })
}

fn edit_cmd<W: Write>(ctx: &mut Ctx<W>, mode: EditMode) -> Result<Outcome> {
    let rows = match mode {
        EditMode::Interpolate { model, src, dst, steps } => {
            let l = load(&model)?;
            echo(
                ctx.w,
                &json!({ "command": "edit interpolate", "inputs": l.digest, "src": src, "dst": dst, "steps": steps }),
            )?;
            let path = edit::interpolate(&code_of(&l, src)?, &code_of(&l, dst)?, steps)?;
            let last = (steps - 1) as f64;
            path.iter()
                .enumerate()
                .map(|(k, z)| row(&l, src, k as f64 / last, z))
                .collect::<Result<Vec<_>>>()?
        }
        EditMode::Perturb {
            model,
            src,
            radius,
            t,
            samples,
            at_radius,
        } => {
            let l = load(&model)?;
            let r = radius.unwrap_or(l.model.ball.r_max());
            let step = if at_radius {
                PerturbStep::GeodesicAtRadius { t }
            } else {
                PerturbStep::Geodesic { t }
            };
            echo(
                ctx.w,
                &json!({
                    "command": "edit perturb", "inputs": l.digest, "src": src, "radius": r,
                    "step": step, "samples": samples, "seed": ctx.seed,
                }),
            )?;
            let z = code_of(&l, src)?;
            let pool = seen_pool(&l)?;
            (0..samples as u64)
                .map(|k| {
                    let spec = PerturbSpec {
                        target_radius: r,
                        step,
                        seed: ctx.seed.wrapping_add(k),
                    };
                    row(&l, src, t, &edit::perturb(&z, &pool, &spec)?)
                })
                .collect::<Result<Vec<_>>>()?
        }
        EditMode::Transfer {
            model,
            direction_seed,
            ids,
            radius,
            step,
        } => {
            let l = load(&model)?;
            let r = radius.unwrap_or(l.model.ball.r_max());
            echo(
                ctx.w,
                &json!({
                    "command": "edit transfer", "inputs": l.digest, "ids": ids, "radius": r,
                    "step": step, "direction_seed": direction_seed,
                }),
            )?;
            let u = EditDirection::random(l.model.config.ball_dim, direction_seed)?;
            let codes = ids.iter().map(|&id| code_of(&l, id)).collect::<Result<Vec<_>>>()?;
            let edited = edit::transfer_edit(&u, step, r, &codes)?;
            ids.iter()
                .zip(&edited)
                .map(|(&id, z)| row(&l, id, step, z))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let path = ctx.out_or("edits.csv");
    edit::write_edits(&rows, &path)?;
    ctx.say(format_args!("wrote {} rows to {}", rows.len(), path.display()))?;
    Ok(Outcome::Success)
}

fn eval_cmd<W: Write>(ctx: &mut Ctx<W>, a: EvalArgs) -> Result<Outcome> {
    let l = load(&a.model)?;
    let radii = a
        .radii
        .clone()
        .unwrap_or_else(|| eval::default_radii(l.model.ball.r_max()));
    let sweep_cfg = SweepConfig {
        n_sources: a.sources,
        per_source: a.per_source,
        step: if a.at_radius {
            PerturbStep::GeodesicAtRadius { t: a.t }
        } else {
            PerturbStep::Geodesic { t: a.t }
        },
        source_split: a.source_split.into(),
        seed: ctx.seed,
    };
    let oracle_cfg = OracleConfig {
        seed: ctx.seed,
        ..OracleConfig::default()
    };
    let config = json!({
        "command": "eval",
        "inputs": l.digest,
        "radii": radii,
        "sweep": sweep_cfg,
        "oracle": oracle_cfg,
        "cross_pairs": a.cross_pairs,
    });
    echo(ctx.w, &config)?;

    let oracle = eval::train_oracle(&l.ds, &oracle_cfg)?;
    ctx.say(format_args!("oracle held-out accuracy {:.4}", oracle.held_out_accuracy))?;
    let pool = seen_pool(&l)?;
    let sources = eval::pick_sources(&l.model, &oracle, &l.ds, sweep_cfg.source_split, sweep_cfg.n_sources)?;
    let report = eval::sweep(&l.model, &oracle, &sources, &pool, &radii, &sweep_cfg)?;
    let structure = eval::radius_structure(&l.model, &l.ds, a.cross_pairs, ctx.seed)?;
    let metrics = Metrics::new(&report, structure, ctx.seed, eval::config_hash(&config)?);
    let path = ctx.out_or("metrics.json");
    metrics.write(&path)?;
    for r in &report.rows {
        ctx.say(format_args!(
            "radius {:.4}  preservation {:.4}  diversity {:.4}  mean radius {:.4}",
            r.radius, r.preservation, r.diversity, r.mean_radius
        ))?;
    }
    ctx.say(format_args!(
        "contracted classes {:.3}; wrote {} and {}",
        metrics.radius_structure.contracted_fraction(),
        path.display(),
        path.with_extension("csv").display()
    ))?;
    Ok(Outcome::Success)
}

fn embed_cmd<W: Write>(ctx: &mut Ctx<W>, a: ModelArgs) -> Result<Outcome> {
    let l = load(&a)?;
    echo(ctx.w, &json!({ "command": "embed", "inputs": l.digest }))?;
    let emb = plot::embed(&l.model, &l.ds)?;
    let path = ctx.out_or("embeddings.csv");
    plot::write_embeddings(&emb, &path)?;
    ctx.say(format_args!(
        "wrote {} embeddings of dimension {} to {}",
        emb.rows.len(),
        emb.dim,
        path.display()
    ))?;
    Ok(Outcome::Success)
}

fn plot_cmd<W: Write>(ctx: &mut Ctx<W>, a: PlotArgs) -> Result<Outcome> {
    let opts = PlotOptions {
        size: a.size,
        curvature: a.curvature,
        geodesics: a.geodesics,
        ..PlotOptions::default()
    };
    echo(
        ctx.w,
        &json!({
            "command": "plot", "embeddings_sha256": file_digest(&a.emb)?, "size": opts.size,
            "curvature": opts.curvature, "geodesics": opts.geodesics,
        }),
    )?;
    let emb = plot::read_embeddings(&a.emb)?;
    let path = ctx.out_or("plot.svg");
    plot::write_svg(&emb, &opts, &path)?;
    ctx.say(format_args!("wrote {} points to {}", emb.rows.len(), path.display()))?;
    Ok(Outcome::Success)
}

fn check_cmd<W: Write>(ctx: &mut Ctx<W>, a: CheckArgs) -> Result<Outcome> {
    let report = match a.suite {
        Suite::Identities => {
            let opts = IdentityOptions {
                seed: ctx.seed,
                ..IdentityOptions::default()
            };
            echo(
                ctx.w,
                &json!({
                    "command": "check", "suite": "identities", "pairs": opts.pairs, "dim": opts.dim,
                    "max_radius": opts.max_radius, "c": opts.c, "tol": opts.tol, "seed": opts.seed,
                }),
            )?;
            check::identity_suite(&opts, check::gyro_distance)
        }
        Suite::Grads => {
            let opts = GradOptions {
                seed: ctx.seed,
                ..GradOptions::default()
            };
            echo(
                ctx.w,
                &json!({
                    "command": "check", "suite": "grads", "configs": opts.configs,
                    "max_radius": opts.max_radius, "step": opts.fd.step, "tol": opts.fd.tol, "seed": opts.seed,
                }),
            )?;
            check::grad_suite(&opts)?
        }
    };
    let outcome = check_outcome(&report);
    // failures are reported even under --quiet
    if !ctx.quiet || outcome == Outcome::Failure {
        writeln!(ctx.w, "{report}")?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flags_are_rejected() {
        let err = Cli::try_parse_from(["hae", "check", "--suite", "grads", "--bogus"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn pairs_parse() {
        assert_eq!(parse_pair("3:14"), Ok((3, 14)));
        assert!(parse_pair("3-14").is_err());
    }

    #[test]
    fn transfer_ids_are_comma_separated() {
        let cli = Cli::try_parse_from([
            "hae",
            "edit",
            "transfer",
            "--ckpt",
            "c.json",
            "--data",
            "d.csv",
            "--direction-seed",
            "4",
            "--ids",
            "1,2,3",
        ])
        .unwrap();
        match cli.command {
            Command::Edit {
                mode: EditMode::Transfer { ids, .. },
            } => assert_eq!(ids, vec![1, 2, 3]),
            other => panic!("parsed as {other:?}"),
        }
    }
}
