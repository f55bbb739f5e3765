//! Command-line front end: closed-loop runs, offline replays over recorded
//! depth images, batch experiments, SVG reports, and a pipeline benchmark.
//!
//! Exit codes: 0 success / goal reached, 2 collided, 3 timeout, 64 bad
//! config, scene, or arguments, 1 runtime data errors.

use clap::{Parser, Subcommand};
use depthnav::config::RunConfig;
use depthnav::image_io;
use depthnav::logs;
use depthnav::plot;
use depthnav::sim::{
    inject_noise, run_scenario, shipped_scenarios, start_of, FrameProcessor, Outcome, RobotState,
    Scene,
};
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "depthnav",
    version,
    about = "Belief-filtered depth-image obstacle avoidance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-loop scenario run: render, perceive, steer until the goal.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Output directory (overrides io.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the filter and noise seeds.
        #[arg(long)]
        seed: Option<u64>,
        /// Cap the number of simulated frames.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Offline filter replay over a directory of .pfm/.raw depth images.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        images: PathBuf,
        /// Body-frame goal vector "x,y,z" in meters.
        #[arg(long)]
        goal: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Render SVG reports from CSV artifacts (classified by header).
    Plot {
        /// CSV files produced by run/replay/batch/bench.
        csvs: Vec<PathBuf>,
        /// Needed to plot belief.csv (maps states to depths).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overlay obstacles and goals on the trajectory plot.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the shipped 20-scenario suite and write a summary table.
    Batch {
        /// Config file; defaults to the "flight" preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Base seed; run i uses base + i (default: per-scenario seeds).
        #[arg(long)]
        seed: Option<u64>,
        /// Cap the number of simulated frames per run.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Time the per-frame pipeline (discretize + filter + controller).
    Bench {
        /// Config file; defaults to the "flight" preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 120)]
        frames: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

fn usage_err(msg: impl ToString) -> Failure {
    Failure {
        code: 64,
        msg: msg.to_string(),
    }
}

fn data_err(msg: impl ToString) -> Failure {
    Failure {
        code: 1,
        msg: msg.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Run {
            config,
            scene,
            out,
            seed,
            frames,
        } => cmd_run(&config, &scene, out, seed, frames),
        Command::Replay {
            config,
            images,
            goal,
            out,
            seed,
            frames,
        } => cmd_replay(&config, &images, &goal, out, seed, frames),
        Command::Plot {
            csvs,
            config,
            scene,
            out,
        } => cmd_plot(&csvs, config.as_deref(), scene.as_deref(), &out),
        Command::Batch {
            config,
            out,
            seed,
            frames,
        } => cmd_batch(config.as_deref(), &out, seed, frames),
        Command::Bench {
            config,
            frames,
            out,
        } => cmd_bench(config.as_deref(), frames, out.as_deref()),
    }
}

fn load_config(
    path: Option<&Path>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    frames: Option<usize>,
) -> Result<RunConfig, Failure> {
    let mut cfg = match path {
        Some(p) => {
            RunConfig::from_path(p).map_err(|e| usage_err(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::preset_flight(),
    };
    if let Some(s) = seed {
        cfg.filter.seed = s;
        cfg.sim.noise.seed = s.wrapping_add(1);
    }
    if let Some(dir) = out {
        cfg.io.out_dir = dir.display().to_string();
    }
    if let Some(n) = frames {
        // Cap the run at exactly n frames.
        cfg.sim.max_time = (n as f64 - 0.5).max(0.0) / cfg.sim.frame_rate;
    }
    let warnings = cfg.validate().map_err(|e| usage_err(e.to_string()))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<(), Failure> {
    logs::write_file(&dir.join(name), content).map_err(|e| data_err(format!("writing {name}: {e}")))
}

fn cmd_run(
    config_path: &Path,
    scene_path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    frames: Option<usize>,
) -> Result<u8, Failure> {
    let cfg = load_config(Some(config_path), seed, out, frames)?;
    let scene_text = std::fs::read_to_string(scene_path)
        .map_err(|e| usage_err(format!("{}: {e}", scene_path.display())))?;
    let scene = Scene::from_str_checked(&scene_text)
        .map_err(|e| usage_err(format!("{}: {e}", scene_path.display())))?;
    let Some(goal) = scene.goals.first().copied() else {
        return Err(usage_err(format!(
            "{}: scene has no goal region",
            scene_path.display()
        )));
    };
    let start = scene
        .start
        .map(|p| RobotState::new(p.position, p.yaw))
        .ok_or_else(|| usage_err(format!("{}: scene has no start pose", scene_path.display())))?;

    let pipeline = cfg.build_pipeline().map_err(|e| usage_err(e.to_string()))?;
    let result = run_scenario(&scene, &start, &goal, &pipeline);

    let out_dir = PathBuf::from(&cfg.io.out_dir);
    let manifest = logs::manifest_text(&[
        ("artifact_version", env!("CARGO_PKG_VERSION").to_string()),
        ("command", "run".to_string()),
        ("config_hash", format!("{:016x}", cfg.hash())),
        (
            "scene_hash",
            format!("{:016x}", logs::content_hash(&scene_text)),
        ),
        ("filter_seed", cfg.filter.seed.to_string()),
        ("noise_seed", cfg.sim.noise.seed.to_string()),
        ("max_time_s", cfg.sim.max_time.to_string()),
    ]);
    write_artifact(&out_dir, "manifest.txt", &manifest)?;
    write_artifact(&out_dir, "trajectory.csv", &logs::trajectory_csv(&result))?;
    write_artifact(&out_dir, "belief.csv", &logs::belief_csv(&result.frames))?;
    write_artifact(
        &out_dir,
        "modes.csv",
        &logs::modes_csv(&result.frames, &pipeline.spec),
    )?;
    write_artifact(
        &out_dir,
        "commands.csv",
        &logs::commands_csv(&result.frames),
    )?;
    write_artifact(&out_dir, "timings.csv", &logs::timings_csv(&result.frames))?;
    write_artifact(&out_dir, "summary.txt", &logs::summary_text(&result))?;
    println!(
        "{} after {} frames (path {:.2} m, min clearance {:.3} m) -> {}",
        result.outcome.as_str(),
        result.frames.len(),
        result.path_length,
        result.min_clearance,
        out_dir.display()
    );
    Ok(match result.outcome {
        Outcome::Reached => 0,
        Outcome::Collided => 2,
        Outcome::Timeout => 3,
    })
}

fn parse_goal(text: &str) -> Result<Vector3<f64>, Failure> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage_err(format!("bad --goal {text:?}, expected \"x,y,z\"")))?;
    if parts.len() != 3 {
        return Err(usage_err(format!(
            "bad --goal {text:?}, expected three components"
        )));
    }
    Ok(Vector3::new(parts[0], parts[1], parts[2]))
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| data_err(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| e.to_ascii_lowercase())
                    .as_deref(),
                Some("pfm") | Some("raw")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(data_err(format!(
            "{}: no .pfm or .raw depth images found",
            dir.display()
        )));
    }
    Ok(files)
}

fn cmd_replay(
    config_path: &Path,
    images_dir: &Path,
    goal: &str,
    out: Option<PathBuf>,
    seed: Option<u64>,
    frames: Option<usize>,
) -> Result<u8, Failure> {
    let cfg = load_config(Some(config_path), seed, out, None)?;
    let goal_body = parse_goal(goal)?;
    let files = list_images(images_dir)?;
    let pipeline = cfg.build_pipeline().map_err(|e| usage_err(e.to_string()))?;
    let mut processor = FrameProcessor::new(&pipeline);

    let limit = frames.unwrap_or(usize::MAX);
    let mut logs_out = Vec::new();
    for (idx, path) in files.iter().take(limit).enumerate() {
        let img = image_io::read_depth_image(path)
            .map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        if img.width() != pipeline.spec.width || img.height() != pipeline.spec.height {
            return Err(data_err(format!(
                "{}: image is {}x{} but the grid expects {}x{}",
                path.display(),
                img.width(),
                img.height(),
                pipeline.spec.width,
                pipeline.spec.height
            )));
        }
        let time = idx as f64 / pipeline.frame_rate;
        logs_out.push(processor.step(&img, &goal_body, time));
    }

    let out_dir = PathBuf::from(&cfg.io.out_dir);
    let manifest = logs::manifest_text(&[
        ("artifact_version", env!("CARGO_PKG_VERSION").to_string()),
        ("command", "replay".to_string()),
        ("config_hash", format!("{:016x}", cfg.hash())),
        ("images", images_dir.display().to_string()),
        ("image_count", logs_out.len().to_string()),
        ("goal_body", goal.to_string()),
        ("filter_seed", cfg.filter.seed.to_string()),
    ]);
    write_artifact(&out_dir, "manifest.txt", &manifest)?;
    write_artifact(&out_dir, "belief.csv", &logs::belief_csv(&logs_out))?;
    write_artifact(
        &out_dir,
        "modes.csv",
        &logs::modes_csv(&logs_out, &pipeline.spec),
    )?;
    write_artifact(&out_dir, "commands.csv", &logs::commands_csv(&logs_out))?;
    write_artifact(&out_dir, "timings.csv", &logs::timings_csv(&logs_out))?;
    println!(
        "replayed {} frames -> {}",
        logs_out.len(),
        out_dir.display()
    );
    Ok(0)
}

fn cmd_plot(
    csvs: &[PathBuf],
    config: Option<&Path>,
    scene: Option<&Path>,
    out: &Path,
) -> Result<u8, Failure> {
    if csvs.is_empty() {
        return Err(usage_err("plot needs at least one CSV path"));
    }
    let spec = match config {
        Some(p) => Some(
            RunConfig::from_path(p)
                .and_then(|c| c.grid_spec())
                .map_err(|e| usage_err(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let scene = match scene {
        Some(p) => {
            Some(Scene::from_path(p).map_err(|e| usage_err(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    for csv in csvs {
        let (name, svg) = plot::plot_any(csv, spec.as_ref(), scene.as_ref())
            .map_err(|e| usage_err(e.to_string()))?;
        logs::write_file(&out.join(&name), &svg)
            .map_err(|e| data_err(format!("writing {name}: {e}")))?;
        println!("{} -> {}", csv.display(), out.join(&name).display());
    }
    Ok(0)
}

fn cmd_batch(
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    frames: Option<usize>,
) -> Result<u8, Failure> {
    let base_cfg = load_config(config, None, None, frames)?;
    // One transition-table build serves every run; only seeds change.
    let base_pipeline = base_cfg
        .build_pipeline()
        .map_err(|e| usage_err(e.to_string()))?;
    let mut summary =
        String::from("scenario,outcome,frames,sim_time_s,path_length_m,min_clearance_m\n");
    let mut reached = 0usize;
    let scenarios = shipped_scenarios();
    let total = scenarios.len();
    for (idx, shipped) in scenarios.into_iter().enumerate() {
        let (name, scene) = (shipped.name, shipped.scene);
        let mut pipeline = base_pipeline.clone();
        // The certified per-scenario seeds, unless the caller reseeds.
        match seed {
            Some(base) => {
                pipeline.filter_seed = base.wrapping_add(idx as u64);
                pipeline.noise.seed = base.wrapping_add(1000 + idx as u64);
            }
            None => {
                pipeline.filter_seed = shipped.filter_seed;
                pipeline.noise.seed = shipped.noise_seed;
            }
        }
        let start = start_of(&scene);
        let goal = scene.goals[0];
        let result = run_scenario(&scene, &start, &goal, &pipeline);

        let run_dir = out.join(&name);
        write_artifact(&run_dir, "scene.scene", &scene.to_text())?;
        write_artifact(&run_dir, "trajectory.csv", &logs::trajectory_csv(&result))?;
        write_artifact(
            &run_dir,
            "modes.csv",
            &logs::modes_csv(&result.frames, &pipeline.spec),
        )?;
        write_artifact(
            &run_dir,
            "commands.csv",
            &logs::commands_csv(&result.frames),
        )?;
        write_artifact(&run_dir, "timings.csv", &logs::timings_csv(&result.frames))?;
        write_artifact(&run_dir, "summary.txt", &logs::summary_text(&result))?;

        let sim_time = result.trajectory.last().map(|p| p.time).unwrap_or(0.0);
        let _ = writeln!(
            summary,
            "{name},{},{},{},{},{}",
            result.outcome.as_str(),
            result.frames.len(),
            sim_time,
            result.path_length,
            result.min_clearance
        );
        if result.outcome == Outcome::Reached {
            reached += 1;
        }
        println!("{name}: {}", result.outcome.as_str());
    }
    write_artifact(out, "summary.csv", &summary)?;
    let manifest = logs::manifest_text(&[
        ("artifact_version", env!("CARGO_PKG_VERSION").to_string()),
        ("command", "batch".to_string()),
        ("config_hash", format!("{:016x}", base_cfg.hash())),
        (
            "seed_override",
            seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into()),
        ),
        ("scenarios", total.to_string()),
    ]);
    write_artifact(out, "manifest.txt", &manifest)?;
    println!(
        "{reached}/{total} scenarios reached the goal -> {}",
        out.display()
    );
    Ok(0)
}

fn cmd_bench(config: Option<&Path>, frames: usize, out: Option<&Path>) -> Result<u8, Failure> {
    use depthnav::sim::{render_depth, Primitive};

    let cfg = load_config(config, None, None, None)?;
    let pipeline = cfg.build_pipeline().map_err(|e| usage_err(e.to_string()))?;

    // A representative frame: one 270 mm sphere two meters ahead.
    let scene = Scene {
        obstacles: vec![Primitive::Sphere {
            center: Vector3::new(2.0, 0.0, 1.5),
            radius: 0.135,
        }],
        goals: vec![],
        start: None,
    };
    let robot = RobotState::new(Vector3::new(0.0, 0.0, 1.5), 0.0);
    let rendered = render_depth(
        &scene,
        &robot,
        &pipeline.intr,
        &pipeline.extr,
        pipeline.spec.width,
        pipeline.spec.height,
        pipeline.max_range,
    );

    let mut processor = FrameProcessor::new(&pipeline);
    let goal_body = Vector3::new(5.0, 0.0, 0.0);
    let mut frame_logs = Vec::with_capacity(frames);
    for frame in 0..frames {
        let noisy = inject_noise(&rendered, &pipeline.noise.for_frame(frame as u64));
        let time = frame as f64 / pipeline.frame_rate;
        frame_logs.push(processor.step(&noisy, &goal_body, time));
    }
    let mut times: Vec<f64> = frame_logs.iter().map(|f| f.compute_ms).collect();
    times.sort_by(f64::total_cmp);
    let pick = |q: f64| times[((times.len() as f64 * q) as usize).min(times.len() - 1)];
    println!(
        "{} frames: median {:.2} ms, p90 {:.2} ms, max {:.2} ms",
        times.len(),
        pick(0.5),
        pick(0.9),
        times[times.len() - 1]
    );
    if let Some(dir) = out {
        write_artifact(dir, "timings.csv", &logs::timings_csv(&frame_logs))?;
    }
    Ok(0)
}
