//! Command-line driver: simulation, analysis, rendering, calibration and
//! trace extraction.

pub mod manifest;
pub mod outputs;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use leechsim::engine::{calibrate, run_ensemble, thermal_field, CalibrationConfig, EnsembleConfig};
use leechsim::engine::{AMBIENT_TEMP_C, SOURCE_TEMP_C};
use leechsim::imaging::{
    encode_png, encode_ppm, extract_trace, render_overlay, DarkTest, ExtractOptions, FrameSequence,
    OverlayStyle, Registration,
};
use leechsim::{trace, DomainId};

use manifest::{load_plan, parse_list, parse_pos, parse_rect, RunManifest, Settings, SourceRect};
use outputs::{write_metrics, OutDir};

const AFTER_HELP: &str = "\
Settings are taken from command-line flags first, then from the --config \
file, then from built-in defaults. Without --plan the bundled ECE plan, its \
start position and its calibrated parameters are used.";

#[derive(Debug, Parser)]
#[command(name = "leechsim", version, about = "Contact-driven exploration of floor plans")]
pub struct Cli {
    /// Worker threads for ensembles (default: available parallelism).
    /// Results do not depend on this setting.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an ensemble and write trajectories, frequency maps and a report.
    #[command(after_help = AFTER_HELP)]
    Simulate(SimulateArgs),
    /// Compute the simulate metrics from existing trajectory CSVs.
    Analyze(AnalyzeArgs),
    /// Draw a time-coloured overlay of one trajectory.
    Render(RenderArgs),
    /// Search behaviour parameters that reproduce target domain frequencies.
    Calibrate(CalibrateArgs),
    /// Turn a directory of video frames into a trajectory CSV.
    Extract(ExtractArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// key=value config file (keys: plan, params, start, trials, seed, out,
    /// max_steps, thermal_source, taxis_beta).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Floor-plan file (default: the bundled plan)
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// key=value behaviour parameter file.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Release cell as `x,y`.
    #[arg(long, value_parser = parse_pos)]
    pub start: Option<leechsim::Pos>,
    /// Number of trials [default: 20].
    #[arg(short = 'n', long, value_parser = positive)]
    pub trials: Option<usize>,
    /// Master seed [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Steps per trial [default: 1800].
    #[arg(long)]
    pub max_steps: Option<u32>,
    /// Heat source rectangle `x0,y0,x1,y1` (inclusive).
    #[arg(long, value_parser = parse_rect)]
    pub thermal_source: Option<SourceRect>,
    /// Overrides the parameter file's taxis gain.
    #[arg(long)]
    pub taxis_beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Trajectory CSV files.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=64))]
    pub zoom: u32,
    /// Wall colour `r,g,b`.
    #[arg(long, default_value = "128,128,128")]
    pub wall_color: String,
    /// Output image; `.ppm` writes a binary pixmap, anything else PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// JSON object of target domain frequencies, e.g. {"A":0.09,...}.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub budget: usize,
    #[arg(long, default_value_t = 100)]
    pub trials_per_eval: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_parser = parse_pos)]
    pub start: Option<leechsim::Pos>,
    #[arg(long, default_value_t = leechsim::engine::DEFAULT_MAX_STEPS)]
    pub max_steps: u32,
    /// Parameter file to write; the summary goes next to it as JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory of .ppm/.pgm frames, read in file-name order.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long, default_value_t = 25.0)]
    pub fps: f64,
    /// Pixels with every channel below this value are dark.
    #[arg(long, default_value_t = 40)]
    pub threshold: u8,
    /// Samples per second of video.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    /// Test luminance instead of every channel.
    #[arg(long)]
    pub luminance: bool,
    /// Pixel-to-cell scale `sx,sy`.
    #[arg(long, default_value = "1,1")]
    pub scale: String,
    /// Pixel-to-cell offset `ox,oy`, added after scaling.
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    pub offset: String,
    /// Trajectory CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

/// Runs a parsed command line on a pool of the requested size.
pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n as usize);
    }
    let pool = pool.build().context("building the thread pool")?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Render(a) => cmd_render(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Extract(a) => cmd_extract(a),
    })
}

fn plan_or_bundled(path: &Option<PathBuf>) -> Result<leechsim::FloorPlan> {
    match path {
        Some(p) => load_plan(p),
        None => Ok(leechsim::floorplan::ece_plan()),
    }
}

pub fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let flags = Settings {
        plan: a.plan,
        params: a.params,
        start: a.start,
        trials: a.trials,
        seed: a.seed,
        out: a.out,
        max_steps: a.max_steps,
        thermal_source: a.thermal_source,
        taxis_beta: a.taxis_beta,
    };
    let file = match &a.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    let m = RunManifest::resolve(flags.or(file))?;

    let field = match m.thermal_source {
        Some(r) => Some(thermal_field(&m.plan, &r.cells(), SOURCE_TEMP_C, AMBIENT_TEMP_C)?),
        None => None,
    };
    let mut ens = EnsembleConfig::new(&m.plan, m.start, m.params.clone());
    ens.max_steps = m.max_steps;
    ens.field = field.as_ref();
    let trajectories = run_ensemble(&ens, m.trials, m.seed)?;

    let mut out = OutDir::create(&m.out)?;
    out.write("run.manifest", m.to_text().as_bytes())?;
    out.write("params.txt", leechsim::behavior::format_params(&m.params).as_bytes())?;
    for (i, t) in trajectories.iter().enumerate() {
        out.write(&format!("trajectories/trial_{i:04}.csv"), trace::write_csv(t)?.as_bytes())?;
    }
    write_metrics(&mut out, &trajectories, &m.plan)?;
    out.finish()?;
    Ok(())
}

pub fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let plan = plan_or_bundled(&a.plan)?;
    let mut trajectories = Vec::with_capacity(a.traces.len());
    for path in &a.traces {
        let t = trace::read_csv(path).with_context(|| format!("{}", path.display()))?;
        t.check_on(&plan).with_context(|| format!("{}", path.display()))?;
        trajectories.push(t);
    }
    let mut out = OutDir::create(&a.out)?;
    write_metrics(&mut out, &trajectories, &plan)?;
    out.finish()?;
    Ok(())
}

fn parse_rgb(s: &str) -> Result<[u8; 3]> {
    let v = parse_list::<u8>(s, 3)?;
    Ok([v[0], v[1], v[2]])
}

pub fn cmd_render(a: RenderArgs) -> Result<()> {
    let plan = plan_or_bundled(&a.plan)?;
    let traj = trace::read_csv(&a.trace).with_context(|| format!("{}", a.trace.display()))?;
    let style = OverlayStyle {
        zoom: a.zoom,
        wall: parse_rgb(&a.wall_color).context("--wall-color")?,
        ..Default::default()
    };
    let img = render_overlay(&traj, &plan, &style).with_context(|| format!("{}", a.trace.display()))?;
    let bytes = if has_extension(&a.out, "ppm") {
        encode_ppm(&img)?
    } else {
        encode_png(&img)?
    };
    write_file(&a.out, &bytes)
}

fn has_extension(p: &Path, ext: &str) -> bool {
    p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("{}", path.display()))
}

/// Reads a JSON object mapping domain letters to target fractions.
pub fn read_target(path: &Path) -> Result<BTreeMap<DomainId, f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    let raw: BTreeMap<String, f64> =
        serde_json::from_str(&text).with_context(|| format!("{}: malformed target", path.display()))?;
    let mut target = BTreeMap::new();
    for (k, v) in raw {
        let mut chars = k.chars();
        let d = match (chars.next().and_then(DomainId::from_char), chars.next()) {
            (Some(d), None) => d,
            _ => bail!("{}: unknown domain {k:?}", path.display()),
        };
        target.insert(d, v);
    }
    leechsim::engine::check_target(&target).with_context(|| format!("{}", path.display()))?;
    Ok(target)
}

pub fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let plan = plan_or_bundled(&a.plan)?;
    let start = match (a.start, &a.plan) {
        (Some(p), _) => p,
        (None, None) => leechsim::floorplan::ECE_START,
        (None, Some(_)) => bail!("--start is required with a custom plan"),
    };
    let target = read_target(&a.target)?;
    ensure!(a.max_steps >= 1, "max_steps must be at least 1");
    let mut cfg = CalibrationConfig::new(&plan, start, target, a.budget, a.trials_per_eval, a.seed);
    cfg.max_steps = a.max_steps;
    let result = calibrate(&cfg)?;

    let mut params = format!(
        "# calibrate seed={} budget={} trials_per_eval={} loss={}\n",
        a.seed, a.budget, a.trials_per_eval, result.loss
    );
    params.push_str(&leechsim::behavior::format_params(&result.best_params));
    write_file(&a.out, params.as_bytes())?;

    let summary = serde_json::json!({
        "loss": result.loss,
        "evaluations": result.evaluations,
        "seed": result.seed,
        "trials_per_eval": a.trials_per_eval,
        "max_steps": a.max_steps,
        "target": result.target,
        "achieved": result.achieved,
        "best_params": result.best_params,
    });
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    write_file(&summary_path(&a.out), json.as_bytes())
}

/// Where `calibrate` puts its JSON summary for a given parameter file.
pub fn summary_path(params_out: &Path) -> PathBuf {
    let mut name = params_out.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    params_out.with_file_name(name)
}

pub fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let frames = FrameSequence::from_dir(&a.frames, a.fps)
        .with_context(|| format!("{}", a.frames.display()))?;
    let scale = parse_list::<f64>(&a.scale, 2).context("--scale")?;
    let offset = parse_list::<f64>(&a.offset, 2).context("--offset")?;
    let mut opts = ExtractOptions::new(a.threshold, a.rate);
    opts.test = if a.luminance {
        DarkTest::Luminance
    } else {
        DarkTest::AllChannels
    };
    opts.registration = Registration {
        scale: (scale[0], scale[1]),
        offset: (offset[0], offset[1]),
    };
    let traj = extract_trace(&frames, &opts)?;
    write_file(&a.out, trace::write_csv(&traj)?.as_bytes())
}
