use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use conic_splat::conic;
use conic_splat::grad::{fit, FitConfig};
use conic_splat::io::{read_cameras, read_ply, write_cameras, write_ply, write_ppm};
use conic_splat::prefilter::{self, Screened};
use conic_splat::raster::{self, Projection, RenderOptions};
use conic_splat::synth::{synth, SynthPreset};
use conic_splat::{affine, render, Camera, FilterVerdict, Gaussian3D, Image, RejectReason};

#[derive(Parser, Debug)]
#[command(name = "conic-splat", version, about = "Project, render and fit 3D Gaussian scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Affine,
    Conic,
}

impl From<Mode> for Projection {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Affine => Projection::Affine,
            Mode::Conic => Projection::Conic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Sphere,
    SphereGrid,
    Random,
}

impl From<Preset> for SynthPreset {
    fn from(p: Preset) -> Self {
        match p {
            Preset::Sphere => SynthPreset::Sphere,
            Preset::SphereGrid => SynthPreset::SphereGrid,
            Preset::Random => SynthPreset::Random,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic scene and its cameras.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "random")]
        preset: Preset,
    },
    /// Per-Gaussian screen-space footprints as CSV.
    Project {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one PPM per camera.
    Render {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out_dir: PathBuf,
        /// Screen-space dilation added to every footprint covariance, px².
        #[arg(long, default_value_t = 0.3)]
        s: f64,
    },
    /// Compare the footprints of both projections as CSV.
    Compare {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count prefilter verdicts per camera.
    FilterStats {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
    },
    /// Fit an initial cloud to renders of a target cloud.
    Fit {
        #[arg(long)]
        target_cloud: PathBuf,
        #[arg(long)]
        init_cloud: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, value_enum, default_value = "conic")]
        mode: Mode,
        #[arg(long)]
        out_cloud: PathBuf,
        #[arg(long)]
        history: PathBuf,
    },
}

/// Shortest representation that parses back to the same f64.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn load_cloud(path: &Path) -> Result<Vec<Gaussian3D>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_ply(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cams = read_cameras(&text).with_context(|| format!("parsing {}", path.display()))?;
    if cams.is_empty() {
        bail!("{} contains no cameras", path.display());
    }
    Ok(cams)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn reason_str(v: &FilterVerdict) -> &'static str {
    v.reason().map_or("", |r| r.as_str())
}

fn screen(g: &Gaussian3D, cam: &Camera, index: usize) -> Result<Screened> {
    prefilter::screen(g, cam, &RenderOptions::default().filter).with_context(|| format!("screening gaussian {index}"))
}

fn cmd_synth(out: &Path, cameras: &Path, n: usize, seed: u64, preset: Preset) -> Result<()> {
    let (scene, cams) = synth(preset.into(), n, seed);
    write_file(out, write_ply(&scene)?)?;
    write_file(cameras, write_cameras(&cams))
}

fn cmd_project(cloud: &Path, cameras: &Path, mode: Mode, out: &Path) -> Result<()> {
    let scene = load_cloud(cloud)?;
    let cams = load_cameras(cameras)?;
    let projection = Projection::from(mode);
    let mut csv = String::from("camera,index,verdict,reason,px,py,inv_cov_xx,inv_cov_xy,inv_cov_yy,depth\n");
    for cam in &cams {
        for (i, g) in scene.iter().enumerate() {
            let s = screen(g, cam, i)?;
            let splat = if s.verdict.keep() { raster::project(&s, cam, projection).ok() } else { None };
            let verdict = match (&s.verdict, &splat) {
                (FilterVerdict::Keep, None) => FilterVerdict::Reject(RejectReason::Degenerate),
                (v, _) => *v,
            };
            let _ = write!(csv, "{},{i},{},{}", cam.id, if verdict.keep() { "keep" } else { "reject" }, reason_str(&verdict));
            match splat {
                Some(sp) => {
                    let m = sp.inv_cov;
                    let _ = writeln!(
                        csv,
                        ",{},{},{},{},{},{}",
                        num(sp.center.x),
                        num(sp.center.y),
                        num(m[(0, 0)]),
                        num(m[(0, 1)]),
                        num(m[(1, 1)]),
                        num(sp.depth)
                    );
                }
                None => {
                    let _ = writeln!(csv, ",,,,,,{}", num(s.p_c.z));
                }
            }
        }
    }
    write_file(out, csv)
}

fn cmd_render(cloud: &Path, cameras: &Path, mode: Mode, out_dir: &Path, s: f64) -> Result<()> {
    let scene = load_cloud(cloud)?;
    let cams = load_cameras(cameras)?;
    let opts = RenderOptions {
        dilation_s: s,
        ..RenderOptions::default()
    };
    opts.validate().context("render options")?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let projection = Projection::from(mode);
    for cam in &cams {
        let img = render(&scene, cam, &opts, projection).with_context(|| format!("rendering camera {}", cam.id))?;
        write_file(&out_dir.join(format!("camera_{:03}.ppm", cam.id)), write_ppm(&img))?;
    }
    Ok(())
}

fn cmd_compare(cloud: &Path, cameras: &Path, out: &Path) -> Result<()> {
    let scene = load_cloud(cloud)?;
    let cams = load_cameras(cameras)?;
    let mut csv = String::from("camera,index,class,verdict,center_shift_px,hausdorff_px\n");
    for cam in &cams {
        for (i, g) in scene.iter().enumerate() {
            let s = screen(g, cam, i)?;
            let class = conic::classify(&s.sigma_c, &s.p_c).map_or("degenerate", |k| k.as_str());
            let verdict = if s.verdict.keep() { "keep" } else { reason_str(&s.verdict) };
            let pair = match (s.verdict.keep(), s.conic, affine::project_affine(&s.sigma_c, &s.p_c, cam)) {
                (true, Some(c), Ok(a)) if a.is_valid() => Some((c, a)),
                _ => None,
            };
            match pair {
                Some((c, a)) => {
                    let shift = (c.center - a.center).norm();
                    let h = c.silhouette().hausdorff(&a.silhouette(), 256);
                    let _ = writeln!(csv, "{},{i},{class},{verdict},{},{}", cam.id, num(shift), num(h));
                }
                None => {
                    let _ = writeln!(csv, "{},{i},{class},{verdict},,", cam.id);
                }
            }
        }
    }
    write_file(out, csv)
}

fn cmd_filter_stats(cloud: &Path, cameras: &Path) -> Result<()> {
    let scene = load_cloud(cloud)?;
    let cams = load_cameras(cameras)?;
    let reasons = [
        RejectReason::CameraInside,
        RejectReason::BehindPlane,
        RejectReason::OutOfFrustum,
        RejectReason::Degenerate,
    ];
    let mut out = String::from("camera,total,keep");
    for r in &reasons {
        let _ = write!(out, ",{}", r.as_str());
    }
    out.push('\n');
    for cam in &cams {
        let mut counts = [0usize; 5];
        for (i, g) in scene.iter().enumerate() {
            let slot = match screen(g, cam, i)?.verdict {
                FilterVerdict::Keep => 0,
                FilterVerdict::Reject(r) => 1 + reasons.iter().position(|x| *x == r).expect("every reason is listed"),
            };
            counts[slot] += 1;
        }
        let _ = write!(out, "{},{}", cam.id, scene.len());
        for c in counts {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(target: &Path, init: &Path, cameras: &Path, iters: usize, mode: Mode, out_cloud: &Path, history: &Path) -> Result<()> {
    let target = load_cloud(target)?;
    let init = load_cloud(init)?;
    let cams = load_cameras(cameras)?;
    let cfg = FitConfig {
        iterations: iters,
        projection: mode.into(),
        ..FitConfig::default()
    };
    let refs: Vec<Image> = cams
        .iter()
        .map(|c| render(&target, c, &cfg.render, cfg.projection).with_context(|| format!("rendering target for camera {}", c.id)))
        .collect::<Result<_>>()?;
    let result = fit(&init, &cams, &refs, &cfg).context("fitting")?;
    write_file(out_cloud, write_ply(&result.scene)?)?;
    let mut csv = String::from("iteration,loss,psnr\n");
    for r in &result.history {
        let _ = writeln!(csv, "{},{},{}", r.iteration, num(r.loss), num(r.psnr));
    }
    write_file(history, csv)?;
    if let Some(last) = result.history.last() {
        println!("final loss {} psnr {:.3} dB after {} iterations", num(last.loss), last.psnr, result.history.len());
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("CONIC_SPLAT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("CONIC_SPLAT_THREADS must be a non-negative integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth { out, cameras, n, seed, preset } => cmd_synth(&out, &cameras, n, seed, preset),
        Command::Project { cloud, cameras, mode, out } => cmd_project(&cloud, &cameras, mode, &out),
        Command::Render { cloud, cameras, mode, out_dir, s } => cmd_render(&cloud, &cameras, mode, &out_dir, s),
        Command::Compare { cloud, cameras, out } => cmd_compare(&cloud, &cameras, &out),
        Command::FilterStats { cloud, cameras } => cmd_filter_stats(&cloud, &cameras),
        Command::Fit {
            target_cloud,
            init_cloud,
            cameras,
            iters,
            mode,
            out_cloud,
            history,
        } => cmd_fit(&target_cloud, &init_cloud, &cameras, iters, mode, &out_cloud, &history),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
