//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 on usage errors, 2 on runtime errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::acoustics::{SceneSampler, SceneSet, TraceParams};
use crate::ambisonics::{encode_plane_wave, DEFAULT_SAMPLE_RATE};
use crate::dsp::{mix_noise, speech_shaped_noise, synthetic_speech};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, run_comparison, render_dataset, track, Manifest, Method, RenderConfig, SpeechSource, Tracker,
};
use crate::music::{music_analyze, top_k, MusicConfig};
use crate::nn::{load_model, save_model, train, Formulation, NetworkConfig, TrainConfig};
use crate::sphere::{random_direction, Direction, SphereGrid};
use crate::wav::read_foa;

pub const USAGE_EXIT: i32 = 1;
pub const RUNTIME_EXIT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ambidoa", version, about = "Direction-of-arrival estimation on first-order Ambisonics")]
pub struct Cli {
    /// Where to write run.json (default: next to the main output, else the working directory)
    #[arg(long, global = true)]
    pub run_json: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample shoebox rooms with source/listener pairs
    Simulate(SimulateArgs),
    /// Render scenes into intensity-feature files and a manifest
    Render(RenderArgs),
    /// Train an estimator on a manifest
    Train(TrainArgs),
    /// Evaluate a trained model on a manifest
    Eval(EvalArgs),
    /// Compare image-source and ray-traced training data
    Compare(CompareArgs),
    /// MUSIC estimate for a 4-channel recording
    Music(MusicArgs),
    /// Describe a sphere grid
    Gridinfo(GridArgs),
    /// Sliding-window tracking of a static source
    Track(TrackArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of rooms
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 3)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [2.5, 2.5, 2.0])]
    pub dims_min: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 10.0, 3.0])]
    pub dims_max: Vec<f64>,
    /// Absorption range lo,hi
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.7])]
    pub absorption: Vec<f64>,
    /// Scattering range lo,hi
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5])]
    pub scattering: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long, value_parser = ["image", "trace"])]
    pub method: String,
    #[arg(long, default_value = "desk", value_parser = ["full", "desk", "tiny"])]
    pub preset: String,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory of mono 16 kHz WAV files
    #[arg(long, conflicts_with = "synthetic_speech")]
    pub speech_dir: Option<PathBuf>,
    /// Use the built-in speech-like signal
    #[arg(long)]
    pub synthetic_speech: bool,
    #[arg(long, default_value_t = 2000)]
    pub rays: usize,
    #[arg(long, default_value_t = 12)]
    pub image_order: u32,
    #[arg(long, default_value_t = 0.5)]
    pub ir_seconds: f64,
    /// Fixed SNR in dB instead of drawing from Normal(15, 1)
    #[arg(long)]
    pub snr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainOpts {
    #[arg(long, default_value = "desk", value_parser = ["full", "desk", "tiny"])]
    pub preset: String,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Global gradient-norm limit; 0 disables clipping
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    /// Categorical grid resolution in degrees
    #[arg(long, default_value_t = 10.0)]
    pub resolution: f64,
}

impl TrainOpts {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = ["categorical", "cartesian", "spherical"])]
    pub formulation: String,
    #[command(flatten)]
    pub opts: TrainOpts,
    #[arg(long)]
    pub out: PathBuf,
    /// Training history JSON (default: <out>.history.json)
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Per-record CSV report
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub image_manifest: PathBuf,
    #[arg(long)]
    pub trace_manifest: PathBuf,
    /// Common test set; by default scenes are held out from both manifests
    #[arg(long)]
    pub test_manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = ["categorical".to_string(), "cartesian".to_string(), "spherical".to_string()])]
    pub formulations: Vec<String>,
    #[command(flatten)]
    pub opts: TrainOpts,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MusicArgs {
    /// 4-channel FOA WAV
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub resolution: f64,
    #[arg(long, default_value_t = 5)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub resolution: f64,
    /// Write class centers as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// 4-channel FOA WAV; omit to synthesize a plane wave from the true direction
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Seconds of synthetic signal when no input is given
    #[arg(long, default_value_t = 3.0)]
    pub synthetic_seconds: f64,
    #[arg(long, default_value_t = 20.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// True azimuth in degrees
    #[arg(long, allow_hyphen_values = true)]
    pub azimuth: f64,
    /// True elevation in degrees
    #[arg(long, allow_hyphen_values = true)]
    pub elevation: f64,
    /// Trained model; MUSIC is used when absent
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    pub resolution: f64,
    #[arg(long, default_value_t = 1)]
    pub hop: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_EXIT } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Command::Simulate(a) = &cli.command {
        for (name, v, n) in [
            ("dims-min", &a.dims_min, 3),
            ("dims-max", &a.dims_max, 3),
            ("absorption", &a.absorption, 2),
            ("scattering", &a.scattering, 2),
        ] {
            if v.len() != n {
                eprintln!("error: --{name} takes {n} comma-separated values");
                return USAGE_EXIT;
            }
        }
    }
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return USAGE_EXIT;
    }
    match execute(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            RUNTIME_EXIT
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("AMBIDOA_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidConfig(format!("AMBIDOA_THREADS must be a positive integer, got {v:?}")))?;
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn parent_of(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn write_run_json(cli: &Cli, argv: &[OsString], default_dir: PathBuf, name: &str, config: Value, artifacts: &[&Path]) -> Result<()> {
    let path = cli.run_json.clone().unwrap_or_else(|| default_dir.join("run.json"));
    let artifacts: Vec<Value> = artifacts
        .iter()
        .map(|p| {
            let bytes = std::fs::metadata(p).map(|m| m.len()).ok();
            json!({ "path": p, "bytes": bytes })
        })
        .collect();
    let doc = json!({
        "tool": "ambidoa",
        "version": env!("CARGO_PKG_VERSION"),
        "formats": { "features": "ADOA v1", "model": "ADOM v1", "manifest": "jsonl" },
        "subcommand": name,
        "argv": argv.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "threads": rayon::current_num_threads(),
        "config": config,
        "artifacts": artifacts,
    });
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

fn execute(cli: &Cli, argv: &[OsString]) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => {
            let sampler = SceneSampler {
                dims_min: [a.dims_min[0], a.dims_min[1], a.dims_min[2]],
                dims_max: [a.dims_max[0], a.dims_max[1], a.dims_max[2]],
                pairs_per_room: a.pairs,
                absorption: (a.absorption[0], a.absorption[1]),
                scattering: (a.scattering[0], a.scattering[1]),
                ..SceneSampler::default()
            };
            let scenes = sampler.sample(a.count * a.pairs, a.seed)?;
            let set = SceneSet::from_scenes(&scenes, a.seed);
            set.save(&a.out)?;
            println!("{} rooms, {} scenes -> {}", set.rooms.len(), scenes.len(), a.out.display());
            write_run_json(cli, argv, parent_of(&a.out), "simulate", json!({ "sampler": sampler, "rooms": a.count, "seed": a.seed }), &[&a.out])
        }
        Command::Render(a) => {
            let net = NetworkConfig::preset(&a.preset)?;
            let mut cfg = RenderConfig::new(Method::parse(&a.method)?, net.stft, net.frames, a.seed);
            cfg.speech = match (&a.speech_dir, a.synthetic_speech) {
                (Some(d), _) => SpeechSource::Directory { path: d.clone() },
                (None, true) => SpeechSource::Synthetic,
                (None, false) => {
                    return Err(Error::InvalidConfig(
                        "no speech corpus: pass --speech-dir DIR or --synthetic-speech".into(),
                    ))
                }
            };
            cfg.trace = TraceParams {
                n_rays: a.rays,
                ..TraceParams::default()
            };
            cfg.image_order = a.image_order;
            cfg.ir_seconds = a.ir_seconds;
            cfg.snr_db = a.snr;
            let scenes = SceneSet::load(&a.scenes)?.scenes();
            let manifest = render_dataset(&scenes, &cfg, &a.out)?;
            let path = a.out.join("manifest.jsonl");
            println!("{} samples -> {}", manifest.records.len(), path.display());
            write_run_json(cli, argv, a.out.clone(), "render", json!({ "render": cfg, "scenes": a.scenes, "preset": a.preset }), &[&path])
        }
        Command::Train(a) => {
            let manifest = Manifest::load(&a.manifest)?;
            let samples = manifest.load_samples()?;
            let net_cfg = NetworkConfig::preset(&a.opts.preset)?;
            let formulation = Formulation::parse(&a.formulation, a.opts.resolution)?;
            let tcfg = a.opts.train_config();
            let (net, history) = train(&samples, net_cfg.clone(), formulation, &tcfg)?;
            println!("initial train loss {:.5}", history.initial_train_loss);
            for e in &history.epochs {
                println!(
                    "epoch {:>3}  train {:.5}  val {}  val error {}",
                    e.epoch,
                    e.train_loss,
                    e.val_loss.map_or("-".into(), |v| format!("{v:.5}")),
                    e.val_error_deg.map_or("-".into(), |v| format!("{v:.2}°")),
                );
            }
            save_model(&net, &a.out)?;
            let hist_path = a.history.clone().unwrap_or_else(|| {
                let mut p = a.out.clone().into_os_string();
                p.push(".history.json");
                PathBuf::from(p)
            });
            std::fs::write(&hist_path, serde_json::to_string_pretty(&history)? + "\n")?;
            println!("{} parameters -> {}", net.param_count(), a.out.display());
            write_run_json(
                cli,
                argv,
                parent_of(&a.out),
                "train",
                json!({ "manifest": a.manifest, "network": net_cfg, "formulation": a.formulation, "resolution": a.opts.resolution, "train": tcfg }),
                &[&a.out, &hist_path],
            )
        }
        Command::Eval(a) => {
            let net = load_model(&a.model)?;
            let manifest = Manifest::load(&a.manifest)?;
            let report = evaluate(&net, &manifest)?;
            let s = &report.summary;
            println!("formulation  n     mean°    median°  <5°    <10°   <15°");
            println!(
                "{:<12} {:<5} {:<8.2} {:<8.2} {:<6.1} {:<6.1} {:<6.1}",
                report.formulation, s.count, s.mean_deg, s.median_deg, s.accuracy[0], s.accuracy[1], s.accuracy[2]
            );
            let mut artifacts = Vec::new();
            if let Some(p) = &a.report {
                std::fs::write(p, report.to_csv())?;
                artifacts.push(p.as_path());
            }
            let dir = a.report.as_deref().map(parent_of).unwrap_or_default();
            write_run_json(cli, argv, dir, "eval", json!({ "model": a.model, "manifest": a.manifest, "summary": s }), &artifacts)
        }
        Command::Compare(a) => {
            let image = Manifest::load(&a.image_manifest)?;
            let trace = Manifest::load(&a.trace_manifest)?;
            let test = a.test_manifest.as_deref().map(Manifest::load).transpose()?;
            let formulations = a
                .formulations
                .iter()
                .map(|f| Formulation::parse(f, a.opts.resolution))
                .collect::<Result<Vec<_>>>()?;
            let net_cfg = NetworkConfig::preset(&a.opts.preset)?;
            let tcfg = a.opts.train_config();
            let run = run_comparison(&image, &trace, test.as_ref(), &formulations, &net_cfg, &tcfg)?;
            print!("{}", run.comparison.to_table());
            let mut artifacts = Vec::new();
            if let Some(p) = &a.report {
                std::fs::write(p, run.comparison.to_csv())?;
                artifacts.push(p.as_path());
            }
            let dir = a.report.as_deref().map(parent_of).unwrap_or_default();
            write_run_json(
                cli,
                argv,
                dir,
                "compare",
                json!({ "image_manifest": a.image_manifest, "trace_manifest": a.trace_manifest, "test_manifest": a.test_manifest, "formulations": a.formulations, "network": net_cfg, "train": tcfg, "comparison": run.comparison }),
                &artifacts,
            )
        }
        Command::Music(a) => {
            let signal = read_foa(&a.input)?;
            let grid = SphereGrid::new(a.resolution)?;
            let cfg = MusicConfig::default();
            let r = music_analyze(&signal, &grid, &cfg)?;
            let (az, el) = r.direction.degrees();
            println!("estimate: azimuth {az:.2}°, elevation {el:.2}° (class {})", r.class);
            for (rank, (class, score)) in top_k(&r.scores, a.top).into_iter().enumerate() {
                let (az, el) = grid.center(class).degrees();
                println!("{:>2}. class {class:>5}  azimuth {az:>8.2}°  elevation {el:>7.2}°  score {score:.4}", rank + 1);
            }
            write_run_json(cli, argv, PathBuf::new(), "music", json!({ "input": a.input, "resolution": a.resolution, "music": cfg }), &[])
        }
        Command::Gridinfo(a) => {
            let grid = SphereGrid::new(a.resolution)?;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let probes: Vec<Direction> = (0..10_000).map(|_| random_direction(&mut rng)).collect();
            println!("resolution {}°: {} classes, coverage radius {:.3}°", a.resolution, grid.len(), grid.coverage_radius_deg(&probes));
            let mut artifacts = Vec::new();
            if let Some(p) = &a.csv {
                std::fs::write(p, grid.to_csv())?;
                artifacts.push(p.as_path());
            }
            let dir = a.csv.as_deref().map(parent_of).unwrap_or_default();
            write_run_json(cli, argv, dir, "gridinfo", json!({ "resolution": a.resolution }), &artifacts)
        }
        Command::Track(a) => {
            let truth = Direction::from_degrees(a.azimuth, a.elevation);
            let signal = match &a.input {
                Some(p) => read_foa(p)?,
                None => {
                    let n = (a.synthetic_seconds * DEFAULT_SAMPLE_RATE as f64).round() as usize;
                    let clean = encode_plane_wave(&synthetic_speech(n, a.seed, DEFAULT_SAMPLE_RATE), &truth, DEFAULT_SAMPLE_RATE)?;
                    mix_noise(&clean, &speech_shaped_noise(n, a.seed ^ 1, DEFAULT_SAMPLE_RATE)?, a.snr)?
                }
            };
            let grid = SphereGrid::new(a.resolution)?;
            let music_cfg = MusicConfig::default();
            let model = a.model.as_deref().map(load_model).transpose()?;
            let tracker = match &model {
                Some(net) => Tracker::Network(net),
                None => Tracker::Music { grid: &grid, config: &music_cfg },
            };
            let result = track(&tracker, &signal, &truth, a.hop)?;
            let m = crate::eval::mean(&result.errors);
            println!("{} windows, mean error {m:.2}°", result.errors.len());
            let mut artifacts = Vec::new();
            if let Some(p) = &a.csv {
                std::fs::write(p, result.to_csv())?;
                artifacts.push(p.as_path());
            }
            if let Some(p) = &a.svg {
                let who = if model.is_some() { "network" } else { "MUSIC" };
                std::fs::write(p, result.to_svg(&format!("{who} tracking error")))?;
                artifacts.push(p.as_path());
            }
            let dir = a.csv.as_deref().or(a.svg.as_deref()).map(parent_of).unwrap_or_default();
            write_run_json(
                cli,
                argv,
                dir,
                "track",
                json!({ "input": a.input, "truth_deg": [a.azimuth, a.elevation], "model": a.model, "hop": a.hop, "seed": a.seed, "snr": a.snr, "synthetic_seconds": a.synthetic_seconds }),
                &artifacts,
            )
        }
    }
}
