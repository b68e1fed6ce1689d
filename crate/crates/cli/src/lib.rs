//! Batch command-line surface over the `polfuse` library.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use polfuse::config::RunConfig;
use polfuse::dataset::{self, DatasetIndex};
use polfuse::imageio::{read_plane, read_stack, write_plane8, write_products};
use polfuse::metrics::{evaluate_pair, MetricReport};
use polfuse::net::fuse_planes;
use polfuse::stokes::{demosaic_dofp, stokes_from_angles, DofpMosaic, MosaicPattern};
use polfuse::train::{train, TrainPair};
use polfuse::{checkpoint, Error, Plane, Result};

#[derive(Debug, Parser)]
#[command(name = "polfuse", version, about = "Polarization image fusion toolkit")]
pub struct Cli {
    /// Run configuration (`key = value` lines)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write S0.png, DOLP.png and AOP.png from four angle images or one mosaic
    Stokes(StokesArgs),
    /// Train a fusion network on a scene dataset
    Train(TrainArgs),
    /// Fuse one S0/DOLP pair with a trained checkpoint
    Fuse(FuseArgs),
    /// Score fused images and write the metric CSV
    Eval(EvalArgs),
    /// Split a directory of mosaics into a scene dataset
    DatasetSplit(SplitArgs),
}

#[derive(Debug, Args)]
pub struct StokesArgs {
    /// DoFP mosaic image
    #[arg(long, conflicts_with = "stack", required_unless_present = "stack")]
    pub mosaic: Option<PathBuf>,
    /// Angle images in 0°, 45°, 90°, 135° order
    #[arg(long, num_args = 4, value_names = ["I000", "I045", "I090", "I135"])]
    pub stack: Option<Vec<PathBuf>>,
    /// Mosaic cell angles, row-major (default from config, else 90,45,135,0)
    #[arg(long)]
    pub pattern: Option<MosaicPattern>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset root (default from config)
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// S0 display image (S0/2 in [0,1])
    #[arg(long, requires = "dolp", required_unless_present = "stack")]
    pub s0: Option<PathBuf>,
    #[arg(long, requires = "s0")]
    pub dolp: Option<PathBuf>,
    /// Angle images in 0°, 45°, 90°, 135° order, instead of --s0/--dolp
    #[arg(long, num_args = 4, conflicts_with_all = ["s0", "dolp"], value_names = ["I000", "I045", "I090", "I135"])]
    pub stack: Option<Vec<PathBuf>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of fused images named `<scene>.png`
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub fused: Option<PathBuf>,
    /// Fuse every dataset scene with this checkpoint instead of reading fused images
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset root holding the sources (default from config, else the fused directory)
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Directory of mosaic images
    #[arg(long)]
    pub mosaics: PathBuf,
    #[arg(long)]
    pub pattern: Option<MosaicPattern>,
}

/// 1 for validation failures, 2 for filesystem and decoding failures.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_io() {
        2
    } else {
        1
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn stack_paths(paths: &[PathBuf]) -> [&Path; 4] {
    [0, 1, 2, 3].map(|i| paths[i].as_path())
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Stokes(a) => cmd_stokes(&cfg, a),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Fuse(a) => cmd_fuse(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::DatasetSplit(a) => cmd_dataset_split(&cfg, a),
    }
}

fn cmd_stokes(cfg: &RunConfig, a: &StokesArgs) -> Result<()> {
    let stack = match (&a.mosaic, &a.stack) {
        (Some(path), _) => {
            let pattern = a.pattern.unwrap_or(cfg.mosaic_pattern);
            demosaic_dofp(&DofpMosaic::new(read_plane(path)?, pattern)?)?
        }
        (None, Some(paths)) => read_stack(stack_paths(paths))?,
        (None, None) => return Err(Error::invalid("give --mosaic or --stack")),
    };
    let products = stokes_from_angles(&stack);
    let dir = out_dir(cfg);
    create_dir(&dir)?;
    write_products(&dir, &products)?;
    log::info!("wrote S0/DOLP/AOP to {}", dir.display());
    Ok(())
}

fn dataset_root(cfg: &RunConfig, arg: &Option<PathBuf>) -> Option<PathBuf> {
    arg.clone().or_else(|| cfg.dataset.clone())
}

fn cmd_train(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let root = dataset_root(cfg, &a.dataset).ok_or_else(|| Error::invalid("no dataset: pass --dataset or set `dataset` in the config"))?;
    let index = DatasetIndex::scan(&root)?;
    if index.is_empty() {
        return Err(Error::invalid(format!("{}: dataset is empty", root.display())));
    }
    let split = index.split(cfg.seed, cfg.val_fraction, cfg.test_fraction);
    let load = |ids: &[usize]| -> Result<Vec<TrainPair>> {
        ids.iter()
            .map(|&i| {
                let scene = &index.scenes[i];
                let (s0, dolp) = scene.load_pair()?;
                TrainPair::new(scene.name.clone(), s0, dolp)
            })
            .collect()
    };
    let (train_set, val_set) = (load(&split.train)?, load(&split.val)?);
    log::info!("training on {} scenes, validating on {}", train_set.len(), val_set.len());
    let outcome = train(cfg, &train_set, &val_set, &out_dir(cfg))?;
    log::info!(
        "log {}, checkpoint {} (epoch {:?})",
        outcome.log_path.display(),
        outcome.checkpoint_path.display(),
        outcome.best_epoch
    );
    Ok(())
}

fn cmd_fuse(cfg: &RunConfig, a: &FuseArgs) -> Result<()> {
    let out = cfg.out.clone().ok_or_else(|| Error::invalid("fuse needs --out FILE"))?;
    let params = checkpoint::load(&a.checkpoint)?;
    let (s0, dolp) = match (&a.s0, &a.dolp, &a.stack) {
        (Some(s0), Some(dolp), _) => (read_plane(s0)?, read_plane(dolp)?),
        (_, _, Some(paths)) => {
            let st = stokes_from_angles(&read_stack(stack_paths(paths))?);
            (st.s0.map(|v| v / 2.0), st.dolp)
        }
        _ => return Err(Error::invalid("give --s0 and --dolp, or --stack")),
    };
    let fused = fuse_planes(&params, &s0, &dolp)?;
    write_plane8(&out, &fused)
}

fn fused_image(dir: &Path, scene: &str) -> Result<Plane> {
    let path = ["png", "pgm"]
        .iter()
        .map(|ext| dir.join(format!("{scene}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            Error::io(
                dir.join(format!("{scene}.png")),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no fused image for this scene"),
            )
        })?;
    read_plane(&path)
}

fn scene_dirs(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if let (true, Some(name)) = (path.is_dir(), path.file_name().and_then(|n| n.to_str())) {
            if name.starts_with(dataset::SCENE_PREFIX) {
                out.push((name.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn cmd_eval(cfg: &RunConfig, a: &EvalArgs) -> Result<()> {
    let root = dataset_root(cfg, &a.dataset)
        .or_else(|| a.fused.clone())
        .ok_or_else(|| Error::invalid("no dataset: pass --dataset or set `dataset` in the config"))?;
    let scenes = scene_dirs(&root)?;
    if scenes.is_empty() {
        return Err(Error::invalid(format!("{}: no pairs to evaluate", root.display())));
    }
    let params = a.checkpoint.as_deref().map(checkpoint::load).transpose()?;
    let mut report = MetricReport::default();
    for (name, dir) in &scenes {
        let (s0, dolp) = dataset::load_sources(dir)?;
        let fused = match (&params, &a.fused) {
            (Some(p), _) => fuse_planes(p, &s0, &dolp)?,
            (None, Some(fdir)) => fused_image(fdir, name)?,
            (None, None) => return Err(Error::invalid("give --fused or --checkpoint")),
        };
        let m = evaluate_pair(&fused, &s0, &dolp).map_err(|e| match e {
            Error::Metric { metric, msg } => Error::Metric {
                metric,
                msg: format!("{name}: {msg}"),
            },
            other => other,
        })?;
        report.push(name.clone(), m);
    }
    match &cfg.out {
        Some(path) => report.write_csv(path),
        None => {
            print!("{}", report.to_csv()?);
            Ok(())
        }
    }
}

fn cmd_dataset_split(cfg: &RunConfig, a: &SplitArgs) -> Result<()> {
    let out = cfg.out.clone().ok_or_else(|| Error::invalid("dataset-split needs --out DIR"))?;
    let pattern = a.pattern.unwrap_or(cfg.mosaic_pattern);
    let n = dataset::split_mosaics(&a.mosaics, &out, pattern)?;
    log::info!("wrote {n} scenes under {}", out.display());
    Ok(())
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
    fn global_flags_after_the_verb() {
        let cli = Cli::try_parse_from(["polfuse", "train", "--dataset", "d", "--seed", "9", "--out", "o"]).unwrap();
        assert_eq!(cli.seed, Some(9));
        assert_eq!(cli.out.as_deref(), Some(Path::new("o")));
        let cfg = load_config(&cli).unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn stokes_needs_one_input_kind() {
        assert!(Cli::try_parse_from(["polfuse", "stokes"]).is_err());
        assert!(Cli::try_parse_from(["polfuse", "stokes", "--mosaic", "m.png", "--stack", "a", "b", "c", "d"]).is_err());
        assert!(Cli::try_parse_from(["polfuse", "stokes", "--stack", "a", "b", "c"]).is_err());
        let cli = Cli::try_parse_from(["polfuse", "stokes", "--mosaic", "m.png", "--pattern", "0,45,90,135"]).unwrap();
        match cli.command {
            Command::Stokes(a) => assert_eq!(a.pattern.unwrap().to_string(), "0,45,90,135"),
            _ => unreachable!(),
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::invalid("x")), 1);
        assert_eq!(exit_code(&Error::Checkpoint("x".into())), 1);
        assert_eq!(exit_code(&Error::io("p", std::io::Error::other("x"))), 2);
    }
}
