//! Command-line entry points. Exit codes: 0 success, 1 domain error,
//! 2 usage error.

use std::ffi::OsString;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use surgpose_core::metrics::Truncation;
use surgpose_core::{solve_pnp, Correspondence, Vec3};

use crate::bop::{self, PoseEstimate};
use crate::config::{load_trajectory, GenerationJob, SceneConfig, TrajectoryDoc};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::eval::{self, DEFAULT_BINS, DEFAULT_MIN_VISIB};
use crate::pipeline::{run_generation_with, Progress};
use crate::preview::render_preview;
use crate::service::{serve, AppState};
use crate::validate::validate_dataset;

#[derive(Debug, Parser)]
#[command(name = "surgpose", version, about = "Synthetic BOP datasets of surgical scenes and pose-error evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a dataset from a job file.
    Generate {
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Score a BOP results CSV against a dataset.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_VISIB)]
        min_visib: f64,
        /// Output directory (default: next to the results file).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        hist: HistArgs,
    },
    /// Summary statistics and histograms of a metrics CSV.
    Stats {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        hist: HistArgs,
    },
    /// Check a dataset for internal consistency.
    Validate {
        #[arg(long)]
        gt: PathBuf,
    },
    /// Estimate a pose from 2D-3D correspondences (CSV rows x,y,z,u,v).
    Pnp {
        #[arg(long)]
        corr: PathBuf,
        /// Scene configuration providing the camera intrinsics.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 0)]
        scene_id: u32,
        #[arg(long, default_value_t = 0)]
        im_id: u32,
        #[arg(long, default_value_t = 1)]
        obj_id: u32,
        /// Results CSV to write; the row is printed either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the authoring API.
    Serve {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        /// Directory for generation job outputs.
        #[arg(long, default_value = "jobs")]
        out: PathBuf,
        /// Trajectory to start from.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Render one preview frame to a PNG.
    Render {
        #[arg(long)]
        scene: PathBuf,
        /// Take instance poses and joints from this trajectory at --time.
        #[arg(long, requires = "time")]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        time: Option<f64>,
        /// Joint values q1,q2,q3,q4 overriding the scene's.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        joints: Option<Vec<f64>>,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct HistArgs {
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Histogram truncation for e_TE (mm).
    #[arg(long, default_value_t = Truncation::default().e_te)]
    trunc_te: f64,
    /// Histogram truncation for e_RE (deg).
    #[arg(long, default_value_t = Truncation::default().e_re)]
    trunc_re: f64,
    /// Histogram truncation for e_MSSD (mm).
    #[arg(long, default_value_t = Truncation::default().e_mssd)]
    trunc_mssd: f64,
}

impl HistArgs {
    fn truncation(&self) -> Truncation {
        Truncation { e_re: self.trunc_re, e_te: self.trunc_te, e_mssd: self.trunc_mssd }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn default_out(file: &Path) -> PathBuf {
    file.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate { job, out, seed, threads } => {
            let job = GenerationJob::load(&job, out, seed)?;
            let run = || {
                run_generation_with(&job, &Progress::default(), &mut |s| {
                    println!(
                        "scene {:06} (replay {}): {} frames kept, {} dropped",
                        s.scene_id, s.replay_index, s.frames_kept, s.frames_dropped
                    )
                })
            };
            let manifest = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?
                    .install(run)?,
                None => run()?,
            };
            let kept: u32 = manifest.scenes.iter().map(|s| s.frames_kept).sum();
            println!("wrote {} scenes, {kept} frames to {}", manifest.scenes.len(), job.out.display());
            Ok(())
        }
        Command::Eval { gt, est, min_visib, out, hist } => {
            let evaluation = eval::evaluate_run(&gt, &est, min_visib)?;
            let out = out.unwrap_or_else(|| default_out(&est));
            let summary = eval::write_evaluation(&out, &evaluation, min_visib, hist.bins, &hist.truncation())?;
            match summary {
                Some(s) => print!("{}", eval::summary_table(&s)),
                None => println!("no frames evaluated"),
            }
            println!(
                "{} GT frames: {} evaluated, {} below visibility {min_visib}, {} without estimate",
                evaluation.total_gt,
                evaluation.records.len(),
                evaluation.excluded.len(),
                evaluation.missing.len()
            );
            Ok(())
        }
        Command::Stats { metrics, out, hist } => {
            let records = eval::read_metrics_csv(&metrics)?;
            let out = out.unwrap_or_else(|| default_out(&metrics));
            let summary = eval::write_stats(&out, &records, hist.bins, &hist.truncation(), None)?;
            print!("{}", eval::summary_table(&summary));
            Ok(())
        }
        Command::Validate { gt } => {
            let report = validate_dataset(&gt);
            print!("{report}");
            for n in &report.notes {
                println!("note: {n}");
            }
            if report.is_clean() {
                Ok(())
            } else {
                Err(Error::Config(format!("{} violations", report.violations.len())))
            }
        }
        Command::Pnp { corr, scene, scene_id, im_id, obj_id, out } => {
            let camera = SceneConfig::load(&scene)?.camera;
            let corrs = read_correspondences(&corr)?;
            let started = std::time::Instant::now();
            let sol = solve_pnp(&corrs, &camera)?;
            let est = PoseEstimate::new(scene_id, im_id, obj_id, 1.0, sol.pose, started.elapsed().as_secs_f64());
            let text = bop::results_string(std::slice::from_ref(&est));
            print!("{}", text.lines().nth(1).map(|l| format!("{l}\n")).unwrap_or_default());
            eprintln!("rmse {:.6} px (initial {:.6}), {} iterations", sol.rmse, sol.initial_rmse, sol.iterations);
            if let Some(out) = out {
                write_file(&out, text.as_bytes())?;
            }
            Ok(())
        }
        Command::Serve { scene, port, bind, out, trajectory } => {
            let config = SceneConfig::load(&scene)?;
            let mut state = AppState::new(config, out);
            if let Some(t) = trajectory {
                let doc = TrajectoryDoc::load(&t)?;
                doc.check_partial().map_err(|(k, m)| Error::schema(&t, k, m))?;
                state = state.with_trajectory(doc);
            }
            serve(state, SocketAddr::new(bind, port))
        }
        Command::Render { scene, trajectory, time, joints, width, height, out } => {
            let config = SceneConfig::load(&scene)?;
            let (instances, mut q) = match (trajectory, time) {
                (Some(path), Some(t)) => {
                    let traj = load_trajectory(&path)?;
                    let state = traj.sample(t)?;
                    let inst = traj.instances().iter().map(|i| (i.clone(), state.poses[&i.instance_id])).collect();
                    (inst, state.ecm)
                }
                _ => (config.instances.clone(), config.rig.joints),
            };
            if let Some(j) = joints {
                if j.len() != q.len() {
                    return Err(Error::Config(format!("--joints needs {} values, got {}", q.len(), j.len())));
                }
                q.copy_from_slice(&j);
            }
            let size = match (width, height) {
                (None, None) => None,
                (w, h) => Some((w.unwrap_or(config.camera.width()), h.unwrap_or(config.camera.height()))),
            };
            let preview = render_preview(&config, &instances, &q, size)?;
            write_file(&out, &preview.png)?;
            for g in &preview.objects {
                println!("instance {} obj {}: visib_fract {}", g.instance_id, g.obj_id, g.visib_fract);
            }
            Ok(())
        }
    }
}

/// Rows `x,y,z,u,v`; a non-numeric first line is taken as a header.
pub fn read_correspondences(path: &Path) -> Result<Vec<Correspondence>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let values: Option<Vec<f64>> = fields.iter().map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
        match values {
            Some(v) if v.len() == 5 => out.push(Correspondence {
                model_point: Vec3::new(v[0], v[1], v[2]),
                image_point: [v[3], v[4]],
            }),
            None if i == 0 => continue,
            _ => return Err(Error::parse(path, i + 1, "expected 5 numbers x,y,z,u,v")),
        }
    }
    Ok(out)
}
