//! `emberlearn` command-line tool.
//!
//! Every command accepts `--config FILE`, a plain `key = value` file whose
//! keys are long flag names; flags given on the command line win. The
//! effective settings are written to `config.txt` in each output directory.

mod commands;
mod render;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use emberlearn::{Neighborhood, SimConfig};

#[derive(Parser, Debug)]
#[command(name = "emberlearn", version, about = "Fire-spread simulation and neural surrogates")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation and write raw and filled arrival rasters.
    Simulate(SimulateArgs),
    /// Generate a train/test dataset.
    DatasetGen(DatasetGenArgs),
    /// Train a forward or inverse model on a dataset.
    Train(TrainArgs),
    /// Evaluate a trained model on the test split of a dataset.
    Eval(EvalArgs),
    /// Simulate, estimate parameters and re-simulate for test samples.
    Sensitivity(SensitivityArgs),
    /// Finite-difference check of every layer's gradients.
    Gradcheck(GradcheckArgs),
    /// Render one channel of a FAT1 raster as a binary PPM image.
    Render(RenderArgs),
}

#[derive(Args, Debug, Clone)]
struct ConfigFile {
    /// key = value file with defaults for any long flag.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SizePreset {
    /// 200 m domain, 20 m break, 800 s.
    Full,
    /// 64 m domain, 8 m break, 240 s.
    Desk,
}

#[derive(Args, Debug, Clone)]
struct SimArgs {
    /// Base geometry the individual flags below adjust.
    #[arg(long, value_enum, default_value = "full")]
    preset: SizePreset,
    #[arg(long)]
    domain_m: Option<u32>,
    #[arg(long)]
    cell_m: Option<f64>,
    #[arg(long)]
    buffer_m: Option<u32>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    line_length: Option<f64>,
    #[arg(long)]
    neighborhood: Option<Neighborhood>,
    /// Ignore burning cells farther than this when summing the indraft.
    #[arg(long)]
    sink_cutoff: Option<f64>,
}

impl SimArgs {
    fn to_config(&self) -> Result<SimConfig, CliError> {
        let mut c = match self.preset {
            SizePreset::Full => SimConfig::default(),
            SizePreset::Desk => SimConfig::desk(),
        };
        if let Some(v) = self.domain_m {
            c.domain_size_m = v;
        }
        if let Some(v) = self.cell_m {
            c.cell_size_m = v;
        }
        if let Some(v) = self.buffer_m {
            c.buffer_m = v;
        }
        if let Some(v) = self.dt {
            c.dt_s = v;
        }
        if let Some(v) = self.horizon {
            c.horizon_s = v;
        }
        if let Some(v) = self.line_length {
            c.ignition_line_length_m = v;
        }
        if let Some(v) = self.neighborhood {
            c.neighborhood = v;
        }
        if self.sink_cutoff.is_some() {
            c.sink_cutoff_m = self.sink_cutoff;
        }
        c.validate().map_err(CliError::usage_from)?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    wind: f64,
    #[arg(long)]
    pyro: f64,
    /// Burn time in seconds.
    #[arg(long)]
    burn: f64,
    #[arg(long)]
    prob: f64,
    /// Ignition line angle to the wind, radians.
    #[arg(long)]
    theta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    file: ConfigFile,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DatasetGenArgs {
    #[arg(long)]
    n_train: usize,
    #[arg(long)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    file: ConfigFile,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; output bytes do not depend on it.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProblemArg {
    Forward,
    Inverse,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ArchArg {
    Cnn,
    Unet,
    FcUnet,
    CnnFc,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlanPreset {
    /// Full plans for interiors of 128 cells or more, desk plans below.
    Auto,
    Full,
    Desk,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[arg(long, value_enum)]
    arch: ArchArg,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    epochs: usize,
    #[arg(long)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
    /// Slices each batch is split into for parallel gradients.
    #[arg(long, default_value_t = 1)]
    grad_workers: usize,
    /// Channel plan size.
    #[arg(long, value_enum, default_value = "auto")]
    channels: PlanPreset,
    #[command(flatten)]
    file: ConfigFile,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    file: ConfigFile,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    /// Inverse model checkpoint, or `oracle` to use the true parameters.
    #[arg(long)]
    model: String,
    #[arg(long)]
    dataset: PathBuf,
    /// Number of test samples, taken in index order.
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    file: ConfigFile,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[command(flatten)]
    file: ConfigFile,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Colormap {
    /// Dark purple through teal to yellow.
    Viridis,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// Channel whose zero entries are drawn black.
    #[arg(long)]
    mask_channel: Option<usize>,
    #[arg(long, value_enum, default_value = "viridis")]
    colormap: Colormap,
    #[arg(long)]
    vmin: Option<f64>,
    #[arg(long)]
    vmax: Option<f64>,
    #[command(flatten)]
    file: ConfigFile,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
pub struct CliError {
    code: &'static str,
    msg: String,
    usage: bool,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: "usage",
            msg: msg.into(),
            usage: true,
        }
    }

    fn usage_from(e: emberlearn::Error) -> Self {
        CliError {
            code: e.code(),
            msg: e.to_string(),
            usage: true,
        }
    }

    fn runtime(code: &'static str, msg: impl Into<String>) -> Self {
        CliError {
            code,
            msg: msg.into(),
            usage: false,
        }
    }
}

impl From<emberlearn::Error> for CliError {
    fn from(e: emberlearn::Error) -> Self {
        CliError::runtime(e.code(), e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = self.msg.replace('\\', "\\\\").replace('"', "\\\"");
        let msg = msg.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "error: code={} msg=\"{msg}\"", self.code)
    }
}

/// Reads `key = value` lines; `#` starts a comment.
fn read_config_file(path: &std::path::Path) -> Result<Vec<OsString>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut args = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
        let key = k.trim().replace('_', "-");
        if key == "config" {
            return Err(CliError::usage("config files cannot include other config files"));
        }
        args.push(format!("--{key}").into());
        args.push(v.trim().into());
    }
    Ok(args)
}

/// Splices config-file flags in front of the command-line flags so that the
/// latter override them.
fn expand_config(raw: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path = None;
    for (i, a) in raw.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = raw.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(raw);
    };
    if raw.len() < 2 {
        return Ok(raw);
    }
    let mut out = raw[..2].to_vec();
    out.extend(read_config_file(&path)?);
    out.extend_from_slice(&raw[2..]);
    Ok(out)
}

/// Effective settings of the parsed subcommand as `key = value` lines.
fn effective_config(m: &ArgMatches) -> String {
    let mut out = String::new();
    let Some((name, sub)) = m.subcommand() else {
        return out;
    };
    out.push_str(&format!("# emberlearn {name}\n"));
    let cmd = Cli::command();
    let Some(def) = cmd.find_subcommand(name) else {
        return out;
    };
    for arg in def.get_arguments() {
        let id = arg.get_id().as_str();
        if id == "config" {
            continue;
        }
        if let Ok(Some(vals)) = sub.try_get_raw(id) {
            let vals: Vec<String> = vals.map(|v| v.to_string_lossy().into_owned()).collect();
            let key = arg.get_long().unwrap_or(id);
            out.push_str(&format!("{key} = {}\n", vals.join(",")));
        }
    }
    out
}

fn thread_cap() -> Option<usize> {
    std::env::var("EMBERLEARN_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Threads for commands that parallelise across samples.
fn worker_threads(requested: Option<usize>) -> usize {
    let n = requested.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    thread_cap().map_or(n, |c| n.min(c)).max(1)
}

fn run(raw: Vec<OsString>) -> Result<(), CliError> {
    let argv = expand_config(raw)?;
    let matches = Cli::command().try_get_matches_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = e.print();
                std::process::exit(0);
            }
            _ => {
                let text = e.render().to_string();
                let first: Vec<&str> = text.lines().take_while(|l| !l.trim().is_empty()).collect();
                CliError::usage(first.join(" ").trim_start_matches("error: "))
            }
        }
    })?;
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::usage(e.to_string()))?;
    let echo = effective_config(&matches);
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, &echo),
        Command::DatasetGen(a) => commands::dataset_gen(a, &echo),
        Command::Train(a) => commands::train(a, &echo),
        Command::Eval(a) => commands::eval(a, &echo),
        Command::Sensitivity(a) => commands::sensitivity(a, &echo),
        Command::Gradcheck(a) => commands::gradcheck(a, &echo),
        Command::Render(a) => commands::render(a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(if e.usage { 2 } else { 1 })
        }
    }
}
