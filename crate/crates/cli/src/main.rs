//! Command-line surface for the rotation-only odometry engine.
//!
//! Machine-readable results go to stdout or to files; progress and
//! diagnostics go to stderr. Exit code 2 marks an input problem (bad
//! files, bad flags), 1 a numerical failure, 0 success.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use rovo_core::{
    avg_rot_err, format_timing, format_trajectory, gen_correspondences, gen_rotgraph,
    gen_trajectory, load_dataset, parse_trajectory, rpe1, rpen, run_sequence, Error, GroundTruth,
    Intrinsics, Mode, Motion, PipelineConfig, Result, Rot3, SynthSpec,
};

#[derive(Parser)]
#[command(name = "rovo", version, about = "Rotation-only visual odometry")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the odometry pipeline over a dataset directory.
    Run(RunArgs),
    /// Compare an estimated trajectory against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Run ablation modes side by side and compare their metrics.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RunMode {
    Incremental,
    Chaining,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset directory (matches.txt, optional loops.txt / intrinsics.txt).
    dataset_dir: PathBuf,
    /// Frames each new frame is matched against (default 4).
    #[arg(long)]
    f_window: Option<usize>,
    /// Recent orientations re-estimated each frame (default 10).
    #[arg(long)]
    r_window: Option<usize>,
    /// Minimum inlier count, exclusive, for a pair to become an edge
    /// (default 100).
    #[arg(long)]
    theta_matches: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<RunMode>,
    /// RANSAC seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Ignore loop candidates entirely.
    #[arg(long)]
    no_loops: bool,
    /// TOML config file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where trajectory.txt, timing.csv and manifest.txt are written.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimated trajectory (frame_id qw qx qy qz rows).
    trajectory: PathBuf,
    /// Ground truth: same layout, optionally with positions, or 12-float
    /// pose rows.
    ground_truth: PathBuf,
    /// Also write the full RMSE-versus-separation curve to this CSV file.
    #[arg(long)]
    delta: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    DriveLoop,
    PureRotation,
    Rotgraph,
}

#[derive(Args)]
struct SynthArgs {
    preset: Preset,
    /// Directory the dataset is written into.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    n_frames: usize,
    /// Correspondences per frame pair.
    #[arg(long, default_value_t = 200)]
    n_points: usize,
    /// Bearing noise sigma in degrees.
    #[arg(long, default_value_t = 0.0)]
    noise_deg: f64,
    /// Fraction of correspondences replaced by outliers.
    #[arg(long, default_value_t = 0.0)]
    outlier_frac: f64,
    /// Edge rotation noise sigma in degrees (rotgraph preset).
    #[arg(long, default_value_t = 0.0)]
    edge_noise_deg: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Loop pair as `j,k`; repeatable.
    #[arg(long = "loop-pair", value_parser = parse_loop_pair)]
    loop_pairs: Vec<(u64, u64)>,
    /// Pinhole intrinsics `fx fy cx cy`; switches output to pixel rows.
    #[arg(long)]
    intrinsics: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    dataset_dir: PathBuf,
    /// Ground-truth file (default: truth.txt inside the dataset dir).
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also run full global averaging every frame (slow; for runtime
    /// comparisons).
    #[arg(long)]
    global_each_frame: bool,
    /// Per-frame solve-time CSV (default ablate_timing.csv in out dir).
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Optional overrides loaded from `--config`; unknown keys are errors.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    f_window: Option<usize>,
    r_window: Option<usize>,
    theta_matches: Option<usize>,
    mode: Option<String>,
    seed: Option<u64>,
    use_loops: Option<bool>,
}

fn parse_loop_pair(s: &str) -> std::result::Result<(u64, u64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `j,k`, got `{s}`"))?;
    let j = a.trim().parse::<u64>().map_err(|e| e.to_string())?;
    let k = b.trim().parse::<u64>().map_err(|e| e.to_string())?;
    Ok((j, k))
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes through a temp file and renames, so readers never observe a
/// half-written file.
fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Incremental => "incremental",
        Mode::ChainingBaseline => "chaining",
        Mode::GlobalEachFrame => "global-each-frame",
    }
}

/// Flags override the config file, which overrides the defaults.
fn resolve_config(args: &RunArgs) -> Result<(PipelineConfig, String)> {
    let file: FileConfig = match &args.config {
        Some(path) => toml::from_str(&read_to_string(path)?)
            .map_err(|e| Error::parse(path.display().to_string(), 1, e.to_string()))?,
        None => FileConfig::default(),
    };
    let mut cfg = PipelineConfig::default();
    cfg.f_window = args.f_window.or(file.f_window).unwrap_or(cfg.f_window);
    cfg.r_window = args.r_window.or(file.r_window).unwrap_or(cfg.r_window);
    cfg.theta_matches = args.theta_matches.or(file.theta_matches).unwrap_or(cfg.theta_matches);
    cfg.seed = args.seed.or(file.seed).unwrap_or(cfg.seed);
    let file_mode = match file.mode.as_deref() {
        None => None,
        Some("incremental") => Some(Mode::Incremental),
        Some("chaining") => Some(Mode::ChainingBaseline),
        Some(other) => {
            return Err(Error::invalid(format!(
                "config mode `{other}` is not incremental or chaining"
            )))
        }
    };
    cfg.mode = match args.mode {
        Some(RunMode::Incremental) => Mode::Incremental,
        Some(RunMode::Chaining) => Mode::ChainingBaseline,
        None => file_mode.unwrap_or(Mode::Incremental),
    };
    cfg.use_loops = if args.no_loops { false } else { file.use_loops.unwrap_or(true) };
    let config_path = args
        .config
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "-".to_string());
    Ok((cfg, config_path))
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let (cfg, config_path) = resolve_config(args)?;
    let dataset = load_dataset(&args.dataset_dir)?;
    eprintln!(
        "loaded {} frame records from {}",
        dataset.records.len(),
        args.dataset_dir.display()
    );
    let (traj, reports) = run_sequence(&dataset, &cfg)?;
    let skipped = reports.iter().filter(|r| r.skipped).count();
    let loops: usize = reports.iter().map(|r| r.loops_accepted).sum();
    eprintln!(
        "estimated {} orientations ({} skipped, {} loop edges)",
        traj.len(),
        skipped,
        loops
    );

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;
    let traj_path = args.out_dir.join("trajectory.txt");
    let timing_path = args.out_dir.join("timing.csv");
    let manifest_path = args.out_dir.join("manifest.txt");
    write_atomic(&traj_path, &format_trajectory(&traj))?;
    write_atomic(&timing_path, &format_timing(&reports))?;

    // Key-value manifest, sorted, no wall-clock: rerunning with the same
    // inputs and seed must reproduce it bytewise. Wall-clock totals live
    // in timing.csv, which is exempt from that guarantee.
    let mut kv: Vec<(String, String)> = vec![
        ("command".into(), "run".into()),
        ("config_file".into(), config_path),
        ("dataset_dir".into(), args.dataset_dir.display().to_string()),
        ("f_window".into(), cfg.f_window.to_string()),
        ("frames_estimated".into(), traj.len().to_string()),
        ("frames_skipped".into(), skipped.to_string()),
        ("loop_edges_accepted".into(), loops.to_string()),
        ("mode".into(), mode_name(cfg.mode).into()),
        ("out_manifest".into(), manifest_path.display().to_string()),
        ("out_timing".into(), timing_path.display().to_string()),
        ("out_trajectory".into(), traj_path.display().to_string()),
        ("r_window".into(), cfg.r_window.to_string()),
        ("seed".into(), cfg.seed.to_string()),
        ("theta_matches".into(), cfg.theta_matches.to_string()),
        ("use_loops".into(), cfg.use_loops.to_string()),
        ("version".into(), format!("rovo-v{}", env!("CARGO_PKG_VERSION"))),
    ];
    kv.sort();
    let mut manifest = String::new();
    for (k, v) in kv {
        let _ = writeln!(manifest, "{k}={v}");
    }
    write_atomic(&manifest_path, &manifest)?;
    eprintln!("wrote {}", traj_path.display());
    Ok(())
}

fn metric_rows(gt: &GroundTruth, traj: &[(u64, Rot3)]) -> Result<Vec<(&'static str, f64)>> {
    let mut rows = vec![
        ("rpe1", rpe1(gt, traj)?.to_degrees()),
        ("rpen", rpen(gt, traj)?.to_degrees()),
    ];
    match avg_rot_err(gt, traj, &rovo_core::metrics::AVG_ROT_DISTANCES) {
        Ok(r) => rows.push(("r_err", r.mean.to_degrees())),
        // No positions, or a path too short for every evaluation
        // distance: the distance-bucketed metric is simply unavailable.
        Err(Error::UnsupportedMetric(_)) => {}
        Err(Error::InvalidArgument(msg)) => eprintln!("r_err skipped: {msg}"),
        Err(e) => return Err(e),
    }
    Ok(rows)
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let traj = parse_trajectory(
        &read_to_string(&args.trajectory)?,
        &args.trajectory.display().to_string(),
    )?;
    let gt = GroundTruth::parse(
        &read_to_string(&args.ground_truth)?,
        &args.ground_truth.display().to_string(),
    )?;
    println!("metric,value_deg");
    for (name, val) in metric_rows(&gt, &traj)? {
        println!("{name},{val:.9e}");
    }
    if let Some(path) = &args.delta {
        let curve = rovo_core::metrics::rmse_curve(&gt, &traj)?;
        let mut out = String::from("delta,rmse_deg\n");
        for (d, v) in curve {
            let _ = writeln!(out, "{d},{:.9e}", v.to_degrees());
        }
        write_atomic(path, &out)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let intrinsics = match &args.intrinsics {
        Some(s) => Some(Intrinsics::parse_line(s)?),
        None => None,
    };
    let spec = SynthSpec {
        n_frames: args.n_frames,
        motion: match args.preset {
            Preset::DriveLoop | Preset::Rotgraph => Motion::DriveLoop,
            Preset::PureRotation => Motion::PureRotation,
        },
        n_points: args.n_points,
        bearing_noise: args.noise_deg.to_radians(),
        outlier_frac: args.outlier_frac,
        rel_rot_noise: args.edge_noise_deg.to_radians(),
        loop_pairs: args.loop_pairs.clone(),
        seed: args.seed,
        intrinsics,
    };
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;

    match args.preset {
        Preset::Rotgraph => {
            let data = gen_rotgraph(&spec)?;
            write_atomic(&args.out_dir.join("graph.txt"), &data.graph.dump())?;
            write_atomic(&args.out_dir.join("truth.txt"), &data.truth.dump())?;
            let mut sidecar = String::new();
            for (j, k) in &data.outlier_edges {
                let _ = writeln!(sidecar, "{j} {k}");
            }
            write_atomic(&args.out_dir.join("outliers.txt"), &sidecar)?;
            println!("preset rotgraph");
            println!("nodes {}", args.n_frames);
            println!("edges {}", data.graph.edges().count());
            println!("outlier_edges {}", data.outlier_edges.len());
        }
        Preset::DriveLoop | Preset::PureRotation => {
            let gt = gen_trajectory(&spec)?;
            let ds = gen_correspondences(&spec, &gt)?;
            ds.write_to(&args.out_dir)?;
            let pairs = ds
                .matches
                .lines()
                .filter(|l| l.starts_with("PAIR") || l.starts_with("BPAIR"))
                .count();
            println!(
                "preset {}",
                if args.preset == Preset::DriveLoop { "drive-loop" } else { "pure-rotation" }
            );
            println!("frames {}", args.n_frames);
            println!("pairs {pairs}");
            println!("points_per_pair {}", args.n_points);
            println!("loops {}", args.loop_pairs.len());
        }
    }
    println!("dir {}", args.out_dir.display());
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let gt_path = args
        .gt
        .clone()
        .unwrap_or_else(|| args.dataset_dir.join("truth.txt"));
    let gt = GroundTruth::parse(&read_to_string(&gt_path)?, &gt_path.display().to_string())?;
    let dataset = load_dataset(&args.dataset_dir)?;

    let mut modes = vec![Mode::Incremental, Mode::ChainingBaseline];
    if args.global_each_frame {
        modes.push(Mode::GlobalEachFrame);
    }

    let mut columns: Vec<(String, Vec<(&'static str, f64)>, BTreeMap<u64, u64>)> = Vec::new();
    for mode in modes {
        let cfg = PipelineConfig {
            mode,
            seed: args.seed.unwrap_or(0),
            use_loops: mode == Mode::Incremental,
            ..PipelineConfig::default()
        };
        let started = Instant::now();
        let (traj, reports) = run_sequence(&dataset, &cfg)?;
        eprintln!(
            "{}: {} frames in {:.2} s",
            mode_name(mode),
            traj.len(),
            started.elapsed().as_secs_f64()
        );
        let timing = reports.iter().map(|r| (r.frame_id, r.rotavg_us)).collect();
        columns.push((mode_name(mode).replace('-', "_"), metric_rows(&gt, &traj)?, timing));
    }

    let mut header = String::from("metric");
    for (name, _, _) in &columns {
        let _ = write!(header, ",{name}_deg");
    }
    println!("{header}");
    for row in 0..columns[0].1.len() {
        let mut line = String::from(columns[0].1[row].0);
        for (_, metrics, _) in &columns {
            let _ = write!(line, ",{:.9e}", metrics[row].1);
        }
        println!("{line}");
    }

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;
    let timing_path = args.out_dir.join("ablate_timing.csv");
    let mut csv = String::from("frame_id");
    for (name, _, _) in &columns {
        let _ = write!(csv, ",{name}_solve_us");
    }
    csv.push('\n');
    // Modes can disagree about which frames they accept; emit the union
    // with empty cells where a mode skipped the frame.
    let frame_ids: std::collections::BTreeSet<u64> =
        columns.iter().flat_map(|(_, _, t)| t.keys().copied()).collect();
    for id in frame_ids {
        let _ = write!(csv, "{id}");
        for (_, _, timing) in &columns {
            match timing.get(&id) {
                Some(us) => {
                    let _ = write!(csv, ",{us}");
                }
                None => csv.push(','),
            }
        }
        csv.push('\n');
    }
    write_atomic(&timing_path, &csv)?;
    eprintln!("wrote {}", timing_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Ablate(args) => cmd_ablate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
