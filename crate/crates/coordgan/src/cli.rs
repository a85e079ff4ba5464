//! The `coordgan` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use coordgan_core::coords::{PatchLayout, Topology};
use coordgan_core::data::ImageBuffer;
use coordgan_core::render::{
    coord_filmstrip, generate_extended, generate_panorama, latent_filmstrip, patch_guided_generate,
};
use coordgan_core::train::{beyond_boundary_posttrain, sample_latent, Trainer};
use coordgan_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{AppError, Result};
use crate::eval::{evaluate, sample_images};
use crate::ppm;
use crate::run::{load_dataset, new_trainer, MetricsCsv};

#[derive(Parser, Debug)]
#[command(
    name = "coordgan",
    version,
    about = "Train and sample coordinate-conditional patch GANs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Checkpoint to resume from or sample with. Defaults to `<out>/model.ckpt` outside `train`.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory, overriding `out.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Total training steps for `train`, post-training steps for `extrapolate`.
    #[arg(long, global = true)]
    pub steps: Option<u64>,
    /// Macro positions added on each side by `extrapolate`.
    #[arg(long, global = true)]
    pub extend: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Latent)]
    pub mode: Mode,
    /// Macro patch (PPM) for `guide`.
    #[arg(long, global = true)]
    pub guide: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Train (or resume) and write `model.ckpt`.
    Train,
    /// Write `generate.count` full images.
    Generate,
    /// Write an interpolation filmstrip, one frame per row.
    Interpolate,
    /// Post-train for an enlarged canvas and render it.
    Extrapolate,
    /// Render a cylindrical canvas several laps wide.
    Panorama,
    /// Generate from the latent recovered from a guide patch.
    Guide,
    /// Write metrics.json and metrics.csv.
    Eval,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Slerp between two latents.
    Latent,
    /// Slide the position from the first to the last macro anchor.
    Coord,
}

/// Runs the command line and returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match cli.command {
        Command::Train => train(cli),
        cmd => {
            let (cfg, ckpt) = load_model(cli)?;
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| AppError::io(&cfg.out_dir, e))?;
            match cmd {
                Command::Generate => generate(cli, &cfg, &ckpt),
                Command::Interpolate => interpolate(cli, &cfg, &ckpt),
                Command::Extrapolate => extrapolate(cli, &cfg, &ckpt),
                Command::Panorama => panorama(cli, &cfg, &ckpt),
                Command::Guide => guide(cli, &cfg, &ckpt),
                Command::Eval => eval(cli, &cfg, &ckpt),
                Command::Train => unreachable!(),
            }
        }
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

/// The checkpoint's configuration, with data, output and command settings taken from `--config` if given.
fn load_model(cli: &Cli) -> Result<(RunConfig, Checkpoint)> {
    let given = base_config(cli)?;
    let path = cli
        .checkpoint
        .clone()
        .unwrap_or_else(|| given.out_dir.join("model.ckpt"));
    let ckpt = Checkpoint::load(&path)?;
    let saved = ckpt.config()?;
    if cli.config.is_some() && (given.layout != saved.layout || given.arch != saved.arch) {
        return Err(AppError::Config(format!(
            "layout or arch in the config differ from {}",
            path.display()
        )));
    }
    let cfg = RunConfig {
        layout: saved.layout,
        arch: saved.arch,
        train: saved.train,
        ..given
    };
    Ok((cfg, ckpt))
}

fn seed(cli: &Cli, cfg: &RunConfig) -> u64 {
    cli.seed.unwrap_or(cfg.train.seed)
}

fn latents(dim: usize, n: usize, seed: u64) -> Vec<Vec<f32>> {
    sample_latent(dim, n, &mut ChaCha8Rng::seed_from_u64(seed))
        .data()
        .chunks(dim)
        .map(<[f32]>::to_vec)
        .collect()
}

fn write_image(dir: &Path, name: &str, t: Tensor<f32>) -> Result<PathBuf> {
    let path = dir.join(name);
    ppm::write(&path, &ImageBuffer::from_tensor(t)?)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn train(cli: &Cli) -> Result<()> {
    let (mut cfg, mut trainer, mut last) = match &cli.checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let (mut cfg, trainer) = ckpt.restore()?;
            cfg.out_dir = match &cli.out {
                Some(out) => out.clone(),
                None => path
                    .parent()
                    .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
            };
            (cfg, trainer, ckpt.last_metrics()?)
        }
        None => {
            let mut cfg = base_config(cli)?;
            if let Some(s) = cli.seed {
                cfg.train.seed = s;
            }
            let trainer = new_trainer(&cfg)?;
            (cfg, trainer, None)
        }
    };
    if let Some(steps) = cli.steps {
        cfg.train.steps = steps;
        trainer.cfg.steps = steps;
    }
    let (data, warnings) = load_dataset(&cfg)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| AppError::io(&cfg.out_dir, e))?;
    let path = cfg.out_dir.join("model.ckpt");
    let mut csv = MetricsCsv::new(std::io::stdout().lock());
    let mut failure = None;
    while trainer.step < cfg.train.steps {
        match trainer.train_step(&data) {
            Ok(m) => {
                csv.record(&m)?;
                last = Some(m);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    // a failed step leaves the trainer as it was, so this is the last good state
    Checkpoint::capture(&cfg, &trainer, last.as_ref()).save(&path)?;
    eprintln!("wrote {}", path.display());
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn generate(cli: &Cli, cfg: &RunConfig, ckpt: &Checkpoint) -> Result<()> {
    let bundle = ckpt.bundle(cfg.arch)?;
    for (k, img) in sample_images(&bundle, &cfg.layout, cfg.generate_count, seed(cli, cfg))?
        .into_iter()
        .enumerate()
    {
        write_image(&cfg.out_dir, &format!("sample_{k:03}.ppm"), img)?;
    }
    Ok(())
}

fn interpolate(cli: &Cli, cfg: &RunConfig, ckpt: &Checkpoint) -> Result<()> {
    let bundle = ckpt.bundle(cfg.arch)?;
    let z = latents(cfg.arch.latent_dim, 2, seed(cli, cfg));
    let (strip, name) = match cli.mode {
        Mode::Latent => (
            latent_filmstrip(&bundle, &cfg.layout, &z[0], &z[1], cfg.interp_steps)?,
            "interpolate_latent.ppm",
        ),
        Mode::Coord => {
            let last = *cfg.layout.anchors().last().expect("a layout has anchors");
            (
                coord_filmstrip(&bundle, &cfg.layout, &z[0], (0, 0), last, cfg.interp_steps)?,
                "interpolate_coord.ppm",
            )
        }
    };
    write_image(&cfg.out_dir, name, strip)?;
    Ok(())
}

fn extrapolate(cli: &Cli, cfg: &RunConfig, ckpt: &Checkpoint) -> Result<()> {
    let (_, mut trainer): (_, Trainer) = ckpt.restore()?;
    let mut cfg = RunConfig {
        extend: cli.extend.unwrap_or(cfg.extend),
        ..cfg.clone()
    };
    if let Some(s) = cli.steps {
        cfg.posttrain_steps = s;
    }
    if cfg.extend == 0 {
        return Err(AppError::Config("extrapolation needs extend >= 1".into()));
    }
    if let Some(s) = cli.seed {
        trainer.rng = ChaCha8Rng::seed_from_u64(s);
    }
    let (data, warnings) = load_dataset(&cfg)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let mut last = None;
    beyond_boundary_posttrain(&mut trainer, &data, cfg.extend, cfg.posttrain_steps, |m| {
        last = Some(*m)
    })?;
    let path = cfg.out_dir.join("posttrained.ckpt");
    Checkpoint::capture(&cfg, &trainer, last.as_ref()).save(&path)?;
    println!("wrote {}", path.display());

    let layout = cfg.layout;
    let z = latents(cfg.arch.latent_dim, 1, seed(cli, &cfg)).remove(0);
    let big = generate_extended(&trainer.bundle, &layout, &z, cfg.extend)?;
    let (h, w) = layout.canvas_hw();
    let (bh, bw) = (big.shape()[1], big.shape()[2]);
    write_image(&cfg.out_dir, "extrapolated.ppm", big)?;
    let (top, left) = ((bh - h) / 2, (bw - w) / 2);
    let text = format!(
        "# regular canvas inside extrapolated.ppm, in pixels\ncanvas = {bh} {bw}\ntop = {top}\nleft = {left}\nbottom = {}\nright = {}\n",
        top + h,
        left + w
    );
    write_text(&cfg.out_dir.join("extrapolated.txt"), &text)
}

fn panorama(cli: &Cli, cfg: &RunConfig, ckpt: &Checkpoint) -> Result<()> {
    if cfg.layout.topology != Topology::Cylindrical {
        return Err(AppError::Config(
            "panorama needs layout.topology = cylindrical".into(),
        ));
    }
    let bundle = ckpt.bundle(cfg.arch)?;
    let z = latents(cfg.arch.latent_dim, 1, seed(cli, cfg)).remove(0);
    write_image(
        &cfg.out_dir,
        "panorama.ppm",
        generate_panorama(&bundle, &cfg.layout, &z, cfg.panorama_laps)?,
    )?;
    Ok(())
}

/// The macro anchor whose position is closest to a predicted macro coordinate.
pub fn nearest_anchor(layout: &PatchLayout, coord: &[f32]) -> (usize, usize) {
    let (rows, cols) = layout.macro_positions();
    let index = |count: usize, v: f64| {
        let i = (v + 1.0) / 2.0 * count.saturating_sub(1) as f64;
        (i.round().max(0.0) as usize).min(count - 1)
    };
    let i = index(rows, coord[coord.len() - 1] as f64);
    let j = match layout.topology {
        Topology::Planar => index(cols, coord[1] as f64),
        Topology::Cylindrical => {
            let v = (coord[1] as f64).atan2(coord[0] as f64) / std::f64::consts::PI;
            let j = ((v + 1.0) * layout.grid_w as f64 / 2.0).round() as usize;
            j % layout.grid_w
        }
    };
    (i, j)
}

fn guide(cli: &Cli, cfg: &RunConfig, ckpt: &Checkpoint) -> Result<()> {
    let path = cli
        .guide
        .as_ref()
        .ok_or_else(|| AppError::Config("guide needs --guide PATH".into()))?;
    let bundle = ckpt.bundle(cfg.arch)?;
    let patch = ppm::read(path)?;
    let out = patch_guided_generate(&bundle, &cfg.layout, patch.tensor())?;
    let (i, j) = nearest_anchor(&cfg.layout, &out.coord);
    let (mh, mw) = cfg.layout.macro_hw();
    let s = cfg.layout.s;
    let join = |v: &[f32]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut text = String::new();
    let _ = writeln!(text, "coord = {}", join(&out.coord));
    let _ = writeln!(text, "anchor = {i} {j}");
    let _ = writeln!(
        text,
        "# top left height width, in pixels of guided.ppm; may wrap horizontally on a cylinder"
    );
    let _ = writeln!(text, "box = {} {} {mh} {mw}", i * s, j * s);
    let _ = writeln!(text, "z_est = {}", join(&out.z_est));
    write_image(&cfg.out_dir, "guided.ppm", out.image)?;
    write_text(&cfg.out_dir.join("guided.txt"), &text)
}

fn eval(cli: &Cli, cfg: &RunConfig, ckpt: &Checkpoint) -> Result<()> {
    let bundle = ckpt.bundle(cfg.arch)?;
    let (data, warnings) = load_dataset(cfg)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let report = evaluate(&bundle, &cfg.layout, &data, cfg.samples, seed(cli, cfg))?;
    write_text(&cfg.out_dir.join("metrics.json"), &report.to_json())?;
    write_text(
        &cfg.out_dir.join("metrics.csv"),
        &report.to_csv(ckpt.last_metrics()?.as_ref())?,
    )
}
