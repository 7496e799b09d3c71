//! The `flatport` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 I/O error,
//! 4 data mismatch, 5 solver failure.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::calibration::{calibrate, initial_board_poses, CalibrationError, CalibrationOptions, CalibrationProblem, FreeParams};
use crate::io::{self, FloatImage, PgmDepth, RigConfig};
use crate::matcher::{match_dense, to_point_cloud, CostMetric, MatchError, MatchParams};
use crate::optics::{apply_environment, CameraId, EnvironmentSample, Pixel};
use crate::search_domain::{build_search_domain, epipolar_locus, DomainError};
use crate::simulator::{render_stereo_pair, NoiseSpec, SceneSpec};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }

    fn mismatch(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_MISMATCH,
            message: message.into(),
        }
    }

    fn solver(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_SOLVER,
            message: message.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "flatport",
    version,
    about = "Stereo reconstruction through a flat underwater port"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Zncc,
    Sad,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CameraArg {
    #[value(name = "L", alias = "l")]
    L,
    #[value(name = "R", alias = "r")]
    R,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic stereo pair with ground truth.
    #[command(allow_negative_numbers = true)]
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed of the [noise] block.
        #[arg(long)]
        noise_seed: Option<u64>,
    },
    /// Dense refractive matching of a stereo pair.
    #[command(allow_negative_numbers = true)]
    Match {
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        zmin: f64,
        #[arg(long)]
        zmax: f64,
        #[arg(long, default_value_t = 11)]
        window: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Zncc)]
        metric: MetricArg,
        #[arg(long = "K", default_value_t = 32)]
        k: usize,
        #[arg(long = "r", default_value_t = 2)]
        r: usize,
        #[arg(long, default_value_t = 0.7)]
        threshold: f64,
        #[arg(long, default_value_t = 1.0)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
    /// Refine the housing parameters from board corner observations.
    #[command(allow_negative_numbers = true)]
    Calibrate {
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        /// Comma-separated subset of port_offset, thickness, n_water, tilt.
        #[arg(long, default_value = "port_offset,thickness,n_water")]
        free: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the refracted epipolar locus of a pixel and its search domain.
    #[command(allow_negative_numbers = true)]
    SearchDomain {
        #[arg(long)]
        rig: PathBuf,
        #[arg(long, value_enum)]
        camera: CameraArg,
        /// Pixel as `U,V`.
        #[arg(long)]
        pixel: String,
        #[arg(long)]
        zmin: f64,
        #[arg(long)]
        zmax: f64,
        #[arg(long = "K", default_value_t = 32)]
        k: usize,
        #[arg(long = "r", default_value_t = 2)]
        r: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Water index from temperature, salinity, depth and wavelength.
    #[command(allow_negative_numbers = true)]
    Env {
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        temperature: f64,
        #[arg(long)]
        salinity: f64,
        #[arg(long)]
        depth: f64,
        #[arg(long)]
        wavelength: f64,
        /// Write the rig with the new water index to `--out`.
        #[arg(long, requires = "out")]
        apply: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<RigConfig, CliError> {
    io::read_config(path)
        .map_err(|e| CliError::io(path, e))?
        .map_err(|e| CliError::usage(e.to_string()))
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    create(path)?.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

fn check_range(zmin: f64, zmax: f64) -> Result<(), CliError> {
    if !(zmin > 0.0 && zmin < zmax && zmax.is_finite()) {
        return Err(CliError::usage(format!("need 0 < zmin < zmax, got zmin={zmin} zmax={zmax}")));
    }
    Ok(())
}

fn simulate(config: &Path, out: &Path, noise_seed: Option<u64>) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let scene = cfg.scene.unwrap_or_else(|| SceneSpec::textured_plane_at(2.0));
    let mut noise = cfg.noise.unwrap_or_else(NoiseSpec::none);
    if let Some(seed) = noise_seed {
        noise.seed = seed;
    }
    let pair = render_stereo_pair(&cfg.rig, &scene, &noise)
        .map_err(|e| CliError::usage(format!("{}: {e}", config.display())))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let file = |name: &str| out.join(name);
    let io_err = |p: PathBuf| move |e: io::IoError| CliError::io(&p, e);
    for (name, img) in [("left.pgm", &pair.left), ("right.pgm", &pair.right)] {
        let p = file(name);
        io::write_pgm(create(&p)?, img, PgmDepth::Sixteen).map_err(io_err(p.clone()))?;
    }
    let p = file("truth.pfm");
    io::write_pfm(create(&p)?, &FloatImage::from(&pair.truth)).map_err(io_err(p.clone()))?;
    let p = file("truth_match.csv");
    io::write_truth_match(create(&p)?, &pair).map_err(io_err(p.clone()))?;
    let p = file("scene_meta.txt");
    io::write_scene_meta(create(&p)?, &cfg.rig, &scene, &noise, &pair).map_err(io_err(p.clone()))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_match(
    rig_path: &Path,
    left: &Path,
    right: &Path,
    zmin: f64,
    zmax: f64,
    params: MatchParams,
    out: &Path,
    cloud: Option<&Path>,
) -> Result<String, CliError> {
    check_range(zmin, zmax)?;
    let rig = load_config(rig_path)?.rig;
    let read = |p: &Path| io::read_pgm(open(p)?).map_err(|e| CliError::io(p, e));
    let (l, r) = (read(left)?, read(right)?);
    let (depth, results) = match_dense(&rig, &l, &r, zmin, zmax, &params).map_err(|e| match e {
        MatchError::ImageSizeMismatch(m) => CliError::mismatch(m),
        MatchError::BadWindow(_) | MatchError::WindowOutOfBounds { .. } => CliError::usage(e.to_string()),
        other => CliError::solver(other.to_string()),
    })?;
    io::write_pfm(create(out)?, &FloatImage::from(&depth)).map_err(|e| CliError::io(out, e))?;
    if let Some(path) = cloud {
        let pc = to_point_cloud(&rig, &depth, &l).map_err(|e| CliError::solver(e.to_string()))?;
        io::write_ply(create(path)?, &pc).map_err(|e| CliError::io(path, e))?;
    }
    let valid = depth.valid_count();
    let coverage = if results.is_empty() {
        0.0
    } else {
        100.0 * valid as f64 / results.len() as f64
    };
    let mut gaps: Vec<f64> = depth
        .depth
        .iter()
        .zip(&depth.residual)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, g)| *g)
        .collect();
    gaps.sort_by(f64::total_cmp);
    let median_gap = if gaps.is_empty() { f64::NAN } else { gaps[gaps.len() / 2] };
    Ok(format!("valid={valid} coverage={coverage:.2} median_gap={median_gap:.3e}"))
}

pub fn parse_free(list: &str) -> Result<FreeParams, CliError> {
    let mut free = FreeParams::poses_only();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "port_offset" => free.port_offset = true,
            "thickness" => free.thickness = true,
            "n_water" => free.n_water = true,
            "tilt" => free.port_tilt = true,
            other => {
                return Err(CliError::usage(format!(
                    "unknown free parameter {other:?} (port_offset, thickness, n_water, tilt)"
                )))
            }
        }
    }
    Ok(free)
}

fn run_calibrate(rig_path: &Path, obs_path: &Path, free: &str, out: &Path) -> Result<String, CliError> {
    let free = parse_free(free)?;
    let mut cfg = load_config(rig_path)?;
    let observations = io::read_observations(open(obs_path)?).map_err(|e| match e {
        io::IoError::Io(e) => CliError::io(obs_path, e),
        other => CliError::usage(format!("{}: {other}", obs_path.display())),
    })?;
    for (i, o) in observations.iter().enumerate() {
        if !cfg.rig.camera(o.camera).intrinsics.contains(&o.pixel) {
            return Err(CliError::mismatch(format!("observation {i} lies outside the image")));
        }
    }
    let solver_err = |e: CalibrationError| CliError::solver(e.to_string());
    let params = free_count(&free, &observations);
    if 2 * observations.len() < params + 6 {
        return Err(solver_err(CalibrationError::Underdetermined {
            residuals: 2 * observations.len(),
            params,
        }));
    }
    let poses = initial_board_poses(&cfg.rig, &observations).map_err(solver_err)?;
    let report = calibrate(
        &CalibrationProblem {
            rig0: cfg.rig,
            observations,
            board_poses0: poses,
            free,
        },
        &CalibrationOptions::default(),
    )
    .map_err(solver_err)?;
    cfg.rig = report.rig;
    write_text(out, &io::write_config(&cfg))?;
    Ok(format!(
        "rms_px={} iters={} converged={}",
        report.rms_px, report.iterations, report.converged
    ))
}

fn free_count(free: &FreeParams, obs: &[crate::simulator::CornerObservation]) -> usize {
    let views = obs.iter().map(|o| o.view_id + 1).max().unwrap_or(0);
    free.port_offset as usize + 2 * free.port_tilt as usize + free.thickness as usize + free.n_water as usize + 6 * views
}

fn parse_pixel(s: &str) -> Result<Pixel, CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage(format!("pixel must be U,V, got {s:?}")))?;
    match parts[..] {
        [u, v] => Ok(Pixel::new(u, v)),
        _ => Err(CliError::usage(format!("pixel must be U,V, got {s:?}"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_search_domain(
    rig_path: &Path,
    camera: CameraArg,
    pixel: &str,
    zmin: f64,
    zmax: f64,
    k: usize,
    r: usize,
    out: &Path,
) -> Result<(), CliError> {
    check_range(zmin, zmax)?;
    let rig = load_config(rig_path)?.rig;
    let source = match camera {
        CameraArg::L => CameraId::Left,
        CameraArg::R => CameraId::Right,
    };
    let px = parse_pixel(pixel)?;
    if !rig.camera(source).intrinsics.contains(&px) {
        return Err(CliError::usage(format!("pixel ({}, {}) is outside the image", px.x, px.y)));
    }
    let domain_err = |e: DomainError| match e {
        DomainError::InvalidRange { .. } | DomainError::TooFewSamples(_) => CliError::usage(e.to_string()),
        DomainError::EmptyLocus | DomainError::EmptyDomain => CliError::mismatch(e.to_string()),
        DomainError::Projection(_) => CliError::solver(e.to_string()),
    };
    let locus = epipolar_locus(&rig, source, &px, zmin, zmax, k).map_err(domain_err)?;
    let domain = build_search_domain(&locus, r).map_err(domain_err)?;
    io::write_search_domain(create(out)?, &locus, &domain).map_err(|e| CliError::io(out, e))
}

fn run_env(rig_path: &Path, t: f64, s: f64, d: f64, wl: f64, apply: bool, out: Option<&Path>) -> Result<String, CliError> {
    let mut cfg = load_config(rig_path)?;
    let env = EnvironmentSample::new(t, s, d, wl).map_err(|e| CliError::usage(e.to_string()))?;
    let rig = apply_environment(&cfg.rig, &env).map_err(|e| CliError::usage(e.to_string()))?;
    if apply {
        let out = out.ok_or_else(|| CliError::usage("--apply needs --out"))?;
        cfg.rig = rig;
        write_text(out, &io::write_config(&cfg))?;
    }
    Ok(format!("n_water={}", rig.media.n_water))
}

/// Executes a parsed command; returns the line for standard output.
pub fn execute(cli: Cli) -> Result<Option<String>, CliError> {
    match cli.command {
        Command::Simulate { config, out, noise_seed } => simulate(&config, &out, noise_seed).map(|_| None),
        Command::Match {
            rig,
            left,
            right,
            zmin,
            zmax,
            window,
            metric,
            k,
            r,
            threshold,
            lr,
            out,
            cloud,
        } => {
            let params = MatchParams {
                window,
                metric: match metric {
                    MetricArg::Zncc => CostMetric::Zncc,
                    MetricArg::Sad => CostMetric::Sad,
                },
                samples: k,
                dilation: r,
                accept_threshold: threshold,
                lr_max_px: lr,
            };
            if k < 2 || !(lr >= 0.0) {
                return Err(CliError::usage("--K must be at least 2 and --lr non-negative"));
            }
            run_match(&rig, &left, &right, zmin, zmax, params, &out, cloud.as_deref()).map(Some)
        }
        Command::Calibrate { rig, obs, free, out } => run_calibrate(&rig, &obs, &free, &out).map(Some),
        Command::SearchDomain {
            rig,
            camera,
            pixel,
            zmin,
            zmax,
            k,
            r,
            out,
        } => run_search_domain(&rig, camera, &pixel, zmin, zmax, k, r, &out).map(|_| None),
        Command::Env {
            rig,
            temperature,
            salinity,
            depth,
            wavelength,
            apply,
            out,
        } => run_env(&rig, temperature, salinity, depth, wavelength, apply, out.as_deref()).map(Some),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(line) => {
            if let Some(line) = line {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

