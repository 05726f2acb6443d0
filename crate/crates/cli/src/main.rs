//! `confsplat`: fit, prune, sweep, render and serve confidence-scored splats.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.

mod taus;

use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use confsplat::compress::{prune, render_at_threshold, sqr_scale, sweep};
use confsplat::io::{
    load_cameras, load_config, load_ply, read_image, save_ply, write_history_csv, write_image, write_sweep_csv,
    CameraEntry, Config, SceneMeta, SweepReport,
};
use confsplat::train::{fit_2d, fit_confidence, self_supervised_views};
use confsplat::{Camera, Error, Mode, SplatSet, View};
use confsplat_serve::{Snapshot, Viewpoint};

#[derive(Parser, Debug)]
#[command(name = "confsplat", version, about = "Confidence-scored Gaussian splats: fit, prune, sweep, render, serve")]
struct Cli {
    /// TOML config; every key is optional
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for all randomness [default: config value, else 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a 2D splat image with confidences to a PNG
    Fit2d {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        splats: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write the loss history as CSV
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Learn confidences for a frozen scene
    FitConfidence {
        #[command(flatten)]
        src: Sources,
        /// Use the scene's own unmodulated renders as targets
        #[arg(long)]
        self_supervised: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Drop splats whose confidence is below a threshold
    Prune {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quality/size rows over a threshold range
    Sweep {
        #[command(flatten)]
        src: Sources,
        /// `start:stop:step` (inclusive) or a single threshold
        #[arg(long, default_value = "0:1:0.05")]
        taus: String,
        #[arg(long)]
        self_supervised: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render a scene, optionally pruned or as a confidence heatmap
    Render {
        #[arg(long)]
        scene: PathBuf,
        /// Camera JSON; required for 3D scenes
        #[arg(long)]
        cameras: Option<PathBuf>,
        #[arg(long)]
        camera_id: Option<u64>,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        #[arg(long)]
        heatmap: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve renders and metrics over HTTP on localhost
    Serve {
        #[command(flatten)]
        src: Sources,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

/// Scene plus where its views come from: camera JSON for 3D scenes, a
/// target PNG for 2D scenes.
#[derive(Args, Debug)]
struct Sources {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    cameras: Option<PathBuf>,
    /// Target image of a 2D scene
    #[arg(long)]
    target: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(String),
    Divergence(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } => Failure::Divergence(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|_| run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Divergence(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var("CONFSPLAT_THREADS") else { return Ok(()) };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("CONFSPLAT_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size the thread pool: {e}")))
}

fn load_settings(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.rehash();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_settings(&cli)?;
    match &cli.command {
        Command::Fit2d { target, splats, out, history } => {
            let img = read_image(target)?;
            let fit = fit_2d(&img, *splats, &cfg.train, &cfg.render)?;
            save_ply(&fit.scene, Some(&fit.field), out, false)?;
            if let Some(h) = history {
                write_history_csv(&fit.history, h)?;
            }
            report_fit(&fit.field, &cfg);
        }
        Command::FitConfidence { src, self_supervised, out, history } => {
            let (scene, _, views) = load_views(src, *self_supervised, &cfg)?;
            let fit = fit_confidence(&scene, &views, None, &cfg.train, &cfg.render)?;
            save_ply(&scene, Some(&fit.field), out, false)?;
            if let Some(h) = history {
                write_history_csv(&fit.history, h)?;
            }
            report_fit(&fit.field, &cfg);
        }
        Command::Prune { scene, tau, out } => {
            check_tau(*tau)?;
            let loaded = load_ply(scene)?;
            let field = loaded.field.ok_or_else(|| no_confidence(scene))?;
            let pruned = prune(&loaded.scene, &field, *tau)?;
            if pruned.scene.is_empty() {
                return Err(Failure::Data(format!("threshold {tau} removes every splat; nothing to write")));
            }
            save_ply(&pruned.scene, Some(&pruned.field), out, false)?;
            println!("kept {} of {} splats", pruned.scene.len(), loaded.scene.len());
        }
        Command::Sweep { src, taus, self_supervised, csv, report } => {
            let taus = taus::parse_taus(taus).map_err(Failure::Usage)?;
            let (scene, field, views) = load_views(src, *self_supervised, &cfg)?;
            let field = field.ok_or_else(|| no_confidence(&src.scene))?;
            let rows = sweep(&scene, &field, &views, &taus, &cfg.render)?;
            match csv {
                Some(path) => write_sweep_csv(&rows, path)?,
                None => print!("{}", confsplat::io::sweep_csv(&rows)),
            }
            if let Some(path) = report {
                let meta = SceneMeta {
                    path: src.scene.display().to_string(),
                    n_splats: scene.len(),
                    sh_degree: scene.sh_degree,
                    mode: mode_name(&scene).into(),
                    n_views: views.len(),
                };
                SweepReport { scene: meta, config_hash: cfg.hash.clone(), seed: cfg.train.seed, sqr_scale: sqr_scale(scene.len()), rows }
                    .write(path)?;
            }
        }
        Command::Render { scene, cameras, camera_id, tau, heatmap, out } => {
            check_tau(*tau)?;
            let loaded = load_ply(scene)?;
            let camera = match loaded.scene.mode {
                Mode::TwoD { .. } => None,
                Mode::ThreeD => {
                    let path = cameras.as_ref().ok_or_else(|| Failure::Usage("3D scenes need --cameras".into()))?;
                    let id = camera_id.ok_or_else(|| Failure::Usage("3D scenes need --camera-id".into()))?;
                    Some(find_camera(&load_cameras(path)?, id, path)?)
                }
            };
            if *heatmap && loaded.field.is_none() {
                return Err(no_confidence(scene));
            }
            let img = render_at_threshold(&loaded.scene, loaded.field.as_ref(), camera.as_ref(), *tau, *heatmap, &cfg.render)?;
            write_image(&img, out)?;
        }
        Command::Serve { src, port } => {
            let loaded = load_ply(&src.scene)?;
            let viewpoints = match loaded.scene.mode {
                Mode::TwoD { .. } => {
                    let target = src.target.as_ref().map(read_image).transpose()?;
                    vec![Viewpoint { id: 0, camera: None, target }]
                }
                Mode::ThreeD => {
                    let path = src.cameras.as_ref().ok_or_else(|| Failure::Usage("3D scenes need --cameras".into()))?;
                    load_cameras(path)?
                        .into_iter()
                        .map(|e| {
                            let target = e.image.as_ref().filter(|p| p.exists()).map(read_image).transpose()?;
                            Ok(Viewpoint { id: e.id, camera: Some(e.camera), target })
                        })
                        .collect::<Result<Vec<_>, Error>>()?
                }
            };
            // Quality metrics only make sense when every view has a target.
            let all_targets = viewpoints.iter().all(|v| v.target.is_some());
            let viewpoints = viewpoints
                .into_iter()
                .map(|v| Viewpoint { target: if all_targets { v.target } else { None }, ..v })
                .collect();
            let snapshot = Snapshot::new(loaded.scene, loaded.field, viewpoints, cfg.render.clone())?;
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| Failure::Data(format!("cannot start the runtime: {e}")))?;
            let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, *port));
            eprintln!("serving on http://{addr}");
            runtime
                .block_on(confsplat_serve::serve(snapshot, addr))
                .map_err(|e| Failure::Data(format!("server on {addr} failed: {e}")))?;
        }
    }
    Ok(())
}

fn check_tau(tau: f64) -> Outcome {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--tau must lie in [0, 1], got {tau}")))
    }
}

fn no_confidence(path: &Path) -> Failure {
    Failure::Data(format!("{} has no confidence scores; run fit-confidence first", path.display()))
}

fn mode_name(scene: &SplatSet) -> &'static str {
    match scene.mode {
        Mode::TwoD { .. } => "2d",
        Mode::ThreeD => "3d",
    }
}

fn find_camera(entries: &[CameraEntry], id: u64, path: &Path) -> Result<Camera, Failure> {
    entries
        .iter()
        .find(|e| e.id == id)
        .map(|e| e.camera.clone())
        .ok_or_else(|| Failure::Data(format!("camera id {id} not found in {}", path.display())))
}

/// Load a scene and the views it is compared against.
fn load_views(
    src: &Sources,
    self_supervised: bool,
    cfg: &Config,
) -> Result<(SplatSet, Option<confsplat::ConfidenceField>, Vec<View>), Failure> {
    let loaded = load_ply(&src.scene)?;
    let scene = loaded.scene;
    let views = match scene.mode {
        Mode::TwoD { .. } => {
            if self_supervised {
                self_supervised_views(&scene, &[], &cfg.render)?
            } else {
                let path = src
                    .target
                    .as_ref()
                    .ok_or_else(|| Failure::Usage("2D scenes need --target or --self-supervised".into()))?;
                vec![View { camera: None, target: read_image(path)? }]
            }
        }
        Mode::ThreeD => {
            let path = src.cameras.as_ref().ok_or_else(|| Failure::Usage("3D scenes need --cameras".into()))?;
            let entries = load_cameras(path)?;
            if self_supervised {
                let cams: Vec<Camera> = entries.into_iter().map(|e| e.camera).collect();
                self_supervised_views(&scene, &cams, &cfg.render)?
            } else {
                entries
                    .into_iter()
                    .map(|e| {
                        let image = e.image.ok_or_else(|| {
                            Failure::Data(format!("camera {} has no target image; pass --self-supervised", e.id))
                        })?;
                        Ok(View { camera: Some(e.camera), target: read_image(image)? })
                    })
                    .collect::<Result<_, Failure>>()?
            }
        }
    };
    Ok((scene, loaded.field, views))
}

fn report_fit(field: &confsplat::ConfidenceField, cfg: &Config) {
    let active = confsplat::compress::count_active(field);
    println!(
        "{} splats, {active} with confidence >= 0.5; config {} seed {}",
        field.len(),
        &cfg.hash[..12],
        cfg.train.seed
    );
}
