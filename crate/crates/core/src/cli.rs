//! Command-line front end.
//!
//! Diagnostics go to standard error through `log`, filtered by the
//! `NEUROISP_LOG` environment variable. Machine-readable results go to files
//! or standard output. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use crate::cogloop::{load_scenario, prepare_scenario, run_closed_loop, write_demo_scenario, DemoOptions};
use crate::events::synth::LabeledStream;
use crate::events::{load_events, save_events, voxelize, window_segment_span, SensorDims, VoxelGrid};
use crate::imgio::{
    load_bayer, load_config, save_gray, save_rgb, save_ycbcr, ycbcr_frame_to_rgb, AppConfig, ScheduleKind,
};
use crate::isp::{Frame, FrameFormat, IspOutput, IspPipeline};
use crate::snn::{evaluate, load_checkpoint, run_experiment, save_checkpoint};

#[derive(Debug, Parser)]
#[command(name = "neuroisp", version, about = "Event-camera SNN and streaming ISP simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Global {
    /// JSON configuration file; absent fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides `run.seed` of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel work; overrides `run.threads` (default 1).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic moving-bar event datasets and the demo loop scenarios
    /// (with a network trained on the training set).
    GenData {
        /// Output directory.
        #[arg(long = "out", value_name = "DIR")]
        out: PathBuf,
    },
    /// Cut an event file into windows and dump one voxel grid per window.
    Voxelize {
        /// Event file (binary EVT1 or CSV).
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Voxel dump to write.
        #[arg(long = "out", value_name = "FILE")]
        out: PathBuf,
        /// Sensor size `WxH` for CSV input; defaults to the configured sensor.
        #[arg(long, value_parser = parse_dims)]
        sensor: Option<SensorDims>,
    },
    /// Train the spiking network on the synthetic data and save a checkpoint.
    SnnTrain {
        /// Checkpoint to write.
        #[arg(long = "out", value_name = "FILE")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the held-out synthetic data.
    SnnEval {
        /// Checkpoint to read.
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
    },
    /// Run Bayer frames through the ISP.
    IspRun {
        /// Bayer PGM frames, each with a JSON sidecar. Several frames run as one sequence.
        #[arg(long = "in", value_name = "FILE", num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        /// Output file for one frame; a directory for several. `.ppm` gives
        /// RGB, `.yuv` planar YCbCr and `.pgm` luma or Bayer.
        #[arg(long = "out", value_name = "PATH")]
        out: PathBuf,
        /// Output format when `--out` is a directory.
        #[arg(long, default_value = "ppm", value_parser = ["ppm", "yuv", "pgm"])]
        format: String,
        /// Token scheduler; overrides `run.schedule`.
        #[arg(long, value_parser = ["polled", "threaded"])]
        schedule: Option<String>,
    },
    /// Run the closed loop from a scenario file.
    LoopRun {
        /// Scenario JSON.
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        /// Output directory; defaults to `run/` next to the scenario.
        #[arg(long = "out", value_name = "DIR")]
        out: Option<PathBuf>,
        /// Also write every output frame as PPM.
        #[arg(long)]
        frames: bool,
    },
    /// Pretty-print a stats JSON file or a directive log.
    Stats {
        /// Stats JSON or directive log (JSON lines).
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
    },
}

/// Why a command failed.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Domain(String),
}

fn domain<E: Display>(e: E) -> Failure {
    Failure::Domain(e.to_string())
}

type CmdResult = Result<(), Failure>;

fn parse_dims(s: &str) -> Result<SensorDims, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    Ok(SensorDims::new(w, h))
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("NEUROISP_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

fn load_app_config(g: &Global) -> Result<AppConfig, Failure> {
    let mut c = match &g.config {
        Some(p) => load_config(p).map_err(domain)?,
        None => AppConfig::default(),
    };
    if let Some(s) = g.seed {
        c.run.seed = s;
    }
    if let Some(t) = g.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        c.run.threads = t;
    }
    Ok(c)
}

fn run(cli: Cli) -> CmdResult {
    let config = load_app_config(&cli.global)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.run.threads).build().map_err(domain)?;
    pool.install(|| match cli.command {
        Command::GenData { out } => gen_data(&config, &out),
        Command::Voxelize { input, out, sensor } => voxelize_cmd(&config, &input, &out, sensor),
        Command::SnnTrain { out } => snn_train(&config, &out),
        Command::SnnEval { input } => snn_eval(&config, &input),
        Command::IspRun { input, out, format, schedule } => isp_run(config.clone(), &input, &out, &format, schedule),
        Command::LoopRun { scenario, out, frames } => loop_run(&cli.global, &scenario, out, frames),
        Command::Stats { input } => stats_cmd(&input),
    })
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| domain(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}

/// Labels and timing of a synthetic event file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFile {
    pub sensor: SensorDims,
    pub window_us: u64,
    pub labels: Vec<u8>,
}

fn write_stream(dir: &Path, name: &str, s: &LabeledStream) -> CmdResult {
    save_events(&dir.join(format!("{name}.evt")), s.sensor, &s.events).map_err(domain)?;
    let labels = LabelFile { sensor: s.sensor, window_us: s.window_us, labels: s.labels.clone() };
    write_file(&dir.join(format!("{name}.labels.json")), to_json(&labels))
}

fn gen_data(config: &AppConfig, out: &Path) -> CmdResult {
    fs::create_dir_all(out).map_err(domain)?;
    let seed = config.run.seed;
    let (train, test) = config.snn.streams(seed);
    write_stream(out, "train", &train)?;
    write_stream(out, "test", &test)?;
    let net = run_experiment(&config.snn, seed, |_| {}).map_err(domain)?.net;
    let demo = DemoOptions { seed, net: Some(net), ..Default::default() };
    let quiet = DemoOptions { darken_at: None, events: false, ..demo.clone() };
    let demo = write_demo_scenario(&out.join("demo"), &demo).map_err(domain)?;
    let quiet = write_demo_scenario(&out.join("quiescent"), &quiet).map_err(domain)?;
    info!("wrote {} train and {} test samples, scenarios {} and {}", train.labels.len(), test.labels.len(), demo.display(), quiet.display());
    Ok(())
}

pub const VOXEL_MAGIC: &[u8; 4] = b"VOX1";

/// Voxel dump: `"VOX1" | bins u32 | height u32 | width u32 | count u32`,
/// then per grid `start u64 | duration u64 | bins*2*height*width bytes`.
/// Integers are little-endian.
pub fn encode_voxels(grids: &[(u64, u64, VoxelGrid)]) -> Vec<u8> {
    let mut out = VOXEL_MAGIC.to_vec();
    let (b, h, w) = grids.first().map_or((0, 0, 0), |(_, _, g)| (g.bins, g.height, g.width));
    for v in [b, h, w, grids.len()] {
        out.extend((v as u32).to_le_bytes());
    }
    for (start, duration, g) in grids {
        out.extend(start.to_le_bytes());
        out.extend(duration.to_le_bytes());
        out.extend(&g.data);
    }
    out
}

fn voxelize_cmd(config: &AppConfig, input: &Path, out: &Path, sensor: Option<SensorDims>) -> CmdResult {
    let dims = sensor.or(Some(config.snn.data.sensor));
    let (dims, events) = match load_events(input, dims) {
        Err(crate::events::EventError::OutOfRange(m)) if sensor.is_none() => {
            info!("{m}; using the file's sensor size");
            load_events(input, None).map_err(domain)?
        }
        r => r.map_err(domain)?,
    };
    let window = config.snn.data.window_us;
    let end = events.last().map_or(0, |e| e.t + 1);
    let windows = window_segment_span(&events, window, 0, end).map_err(domain)?;
    let grids = windows
        .iter()
        .map(|w| Ok((w.start, w.duration, voxelize(w, config.snn.bins, dims)?)))
        .collect::<Result<Vec<_>, crate::events::EventError>>()
        .map_err(domain)?;
    write_file(out, encode_voxels(&grids))?;
    let set: usize = grids.iter().map(|(_, _, g)| g.count_set()).sum();
    println!("{}", serde_json::json!({ "windows": grids.len(), "events": events.len(), "set_cells": set }));
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    test_accuracy: f64,
    sparsity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_loss: Option<f64>,
}

fn snn_train(config: &AppConfig, out: &Path) -> CmdResult {
    let report = run_experiment(&config.snn, config.run.seed, |e| {
        info!("epoch {:>3}  loss {:.5}  train accuracy {:.3}", e.epoch, e.loss, e.train_accuracy)
    })
    .map_err(domain)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(domain)?;
    }
    save_checkpoint(out, &report.net).map_err(domain)?;
    let summary = EvalSummary {
        test_accuracy: report.test_accuracy,
        sparsity: report.sparsity,
        train_accuracy: Some(report.train_accuracy),
        final_loss: report.epochs.last().map(|e| e.loss),
    };
    println!("{}", serde_json::to_string(&summary).map_err(domain)?);
    Ok(())
}

fn snn_eval(config: &AppConfig, input: &Path) -> CmdResult {
    let net = load_checkpoint(input).map_err(domain)?;
    let (acc, sp) = evaluate(&net, &config.snn, config.run.seed).map_err(domain)?;
    let summary = EvalSummary { test_accuracy: acc, sparsity: sp, train_accuracy: None, final_loss: None };
    println!("{}", serde_json::to_string(&summary).map_err(domain)?);
    Ok(())
}

/// Writes one pipeline output in the format chosen by the extension of `path`.
fn write_output(path: &Path, frame: &Frame) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| domain(format!("{}: {e}", dir.display())))?;
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let r = match (ext.as_str(), frame.format) {
        ("ppm", FrameFormat::YCbCr) => save_rgb(path, &ycbcr_frame_to_rgb(frame)),
        ("ppm", FrameFormat::Rgb) => save_rgb(path, frame),
        ("yuv", FrameFormat::YCbCr) => save_ycbcr(path, frame),
        ("pgm", FrameFormat::Bayer) => save_gray(path, frame),
        ("pgm", FrameFormat::YCbCr) => {
            let mut y = Frame::new(frame.width, frame.height, 8, FrameFormat::Bayer);
            y.data = frame.data.chunks_exact(3).map(|p| p[0]).collect();
            save_gray(path, &y)
        }
        (e, f) => return Err(Failure::Usage(format!("cannot write {f:?} output as {e:?}"))),
    };
    r.map_err(domain)
}

/// `f.ppm` → `f.stats.json`.
fn stats_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.stats.json"))
}

#[derive(Debug, Serialize)]
struct FrameStatsFile<'a> {
    input: String,
    stats: &'a crate::isp::IspStats,
    stream: &'a crate::isp::StreamReport,
}

fn isp_run(mut config: AppConfig, inputs: &[PathBuf], out: &Path, format: &str, schedule: Option<String>) -> CmdResult {
    if let Some(s) = schedule {
        config.run.schedule = if s == "threaded" { ScheduleKind::Threaded } else { ScheduleKind::Polled };
    }
    let outputs: Vec<PathBuf> = if inputs.len() == 1 && out.extension().is_some() {
        vec![out.to_path_buf()]
    } else if out.extension().is_some() && !out.is_dir() {
        return Err(Failure::Usage("several --in files need a directory for --out".into()));
    } else {
        fs::create_dir_all(out).map_err(domain)?;
        inputs
            .iter()
            .map(|i| out.join(i.file_stem().unwrap_or_default()).with_extension(format))
            .collect()
    };
    let schedule = config.run.schedule.schedule();
    let mut pipeline: Option<IspPipeline> = None;
    for (input, output) in inputs.iter().zip(&outputs) {
        let (frame, meta) = load_bayer(input).map_err(domain)?;
        let p = match &mut pipeline {
            Some(p) if p.dims() == (meta.width, meta.height) && p.bit_depth() == meta.bit_depth && p.pattern() == meta.bayer_pattern => p,
            Some(_) => return Err(domain(format!("{}: geometry differs from the first frame", input.display()))),
            None => pipeline.insert(
                IspPipeline::new(config.isp(), meta.width, meta.height, meta.bit_depth, meta.bayer_pattern)
                    .map_err(domain)?,
            ),
        };
        let IspOutput { frame: result, stats, report } = p.run_frame(&frame, &schedule).map_err(domain)?;
        write_output(output, &result)?;
        let file = FrameStatsFile { input: input.display().to_string(), stats: &stats, stream: &report };
        write_file(&stats_path(output), to_json(&file))?;
        info!("{} -> {} (mean luma {:.1})", input.display(), output.display(), stats.mean_luma);
    }
    Ok(())
}

fn loop_run(g: &Global, scenario: &Path, out: Option<PathBuf>, write_frames: bool) -> CmdResult {
    let mut s = load_scenario(scenario).map_err(domain)?;
    if let Some(c) = &g.config {
        s.config = Some(c.clone());
    }
    if let Some(seed) = g.seed {
        s.seed = Some(seed);
    }
    let prepared = prepare_scenario(&s).map_err(domain)?;
    let result = run_closed_loop(&prepared.input()).map_err(domain)?;
    let dir = out.unwrap_or_else(|| scenario.parent().unwrap_or(Path::new(".")).join("run"));
    write_file(&dir.join("directives.jsonl"), result.log_jsonl())?;
    let records: String = result.records.iter().map(|r| serde_json::to_string(r).expect("record") + "\n").collect();
    write_file(&dir.join("frames.jsonl"), records)?;
    if write_frames {
        for (i, f) in result.frames.iter().enumerate() {
            write_output(&dir.join(format!("out{i:03}.ppm")), f)?;
        }
    }
    let summary = serde_json::json!({
        "frames": result.frames.len(),
        "directives": result.log.len(),
        "rejected": result.rejected.len(),
        "log": dir.join("directives.jsonl"),
    });
    println!("{summary}");
    Ok(())
}

fn stats_cmd(input: &Path) -> CmdResult {
    let text = fs::read_to_string(input).map_err(|e| domain(format!("{}: {e}", input.display())))?;
    let mut stdout = std::io::stdout().lock();
    let mut emit = |s: String| match writeln!(stdout, "{s}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(domain(e)),
        _ => Ok(()),
    };
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) {
        return emit(serde_json::to_string_pretty(&v).map_err(domain)?);
    }
    // JSON lines, such as a directive log
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| domain(format!("{}:{}: {e}", input.display(), n + 1)))?;
        emit(serde_json::to_string_pretty(&v).map_err(domain)?)?;
    }
    Ok(())
}
