mod commands;
mod config;
mod error;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use tautransit::control::Orientation;
use tautransit::dubins::{EdgePolicy, HeadingMode};
use tautransit::sim::TauSource;

use config::{Config, FieldSection, FlyKind, FlySection, Format, GridSection, ProtocolSection};
use error::CliError;

#[derive(Parser)]
#[command(name = "tautransit", version, about = "Obstacle-field statistics and time-to-transit flight experiments")]
struct Cli {
    /// Master seed; drawn at random and printed when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML config, or an earlier output whose config echo should be replayed.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// mc-sweep: exit 3 unless every point lies within 3 stderr of the closed form.
    #[arg(long, global = true)]
    check: bool,
    /// Worker threads for Monte Carlo batches.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an obstacle field and write it out.
    #[command(allow_negative_numbers = true)]
    GenerateField(FieldArgs),
    /// Closed-form collision-free probability over an (n, theta_cr) grid.
    #[command(allow_negative_numbers = true)]
    AnalyticTable(TableArgs),
    /// Monte Carlo of the quantized Dubins protocol over an (n, theta_cr) grid.
    #[command(allow_negative_numbers = true)]
    McSweep(SweepArgs),
    /// Fly one closed-loop scenario and record its trajectory.
    #[command(allow_negative_numbers = true)]
    Fly(FlyArgs),
}

/// Exactly `N` comma-separated numbers.
fn floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Args, Default)]
struct FieldArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rows: Option<usize>,
    /// Row extent as `lo,hi`.
    #[arg(long, allow_hyphen_values = true, value_parser = floats::<2>)]
    extent: Option<[f64; 2]>,
    /// Displace each row by an exponential(gamma) draw.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    jitter: Option<bool>,
}

impl FieldArgs {
    fn section(&self) -> FieldSection {
        FieldSection {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            rows: self.rows,
            extent: self.extent,
            jitter: self.jitter,
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// Row counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    /// Steering angles, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "theta_range")]
    theta: Option<Vec<f64>>,
    /// Evenly spaced angles as `start,stop,step`.
    #[arg(long, value_parser = floats::<3>)]
    theta_range: Option<[f64; 3]>,
}

impl GridArgs {
    fn section(&self) -> GridSection {
        GridSection {
            n: self.n.clone(),
            theta: self.theta.clone(),
            theta_range: self.theta_range,
        }
    }
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    table: TableArgs,
    #[arg(long)]
    trials: Option<u64>,
    /// forward or nearest.
    #[arg(long, value_parser = serde_enum::<EdgePolicy>)]
    policy: Option<EdgePolicy>,
    /// reset-to-axis or retain.
    #[arg(long, value_parser = serde_enum::<HeadingMode>)]
    heading_mode: Option<HeadingMode>,
    #[arg(long)]
    clearance: Option<f64>,
}

#[derive(Args)]
struct FlyArgs {
    #[arg(value_enum)]
    kind: Option<FlyKind>,
    /// Start pose as `x,y,theta`.
    #[arg(long, allow_hyphen_values = true, value_parser = floats::<3>)]
    start: Option<[f64; 3]>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Gate: left post as `x,y`.
    #[arg(long, allow_hyphen_values = true, value_parser = floats::<2>)]
    left: Option<[f64; 2]>,
    /// Gate: right post as `x,y`.
    #[arg(long, allow_hyphen_values = true, value_parser = floats::<2>)]
    right: Option<[f64; 2]>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    v_cap: Option<f64>,
    /// derotated-track or raw-track.
    #[arg(long, value_parser = serde_enum::<TauSource>)]
    tau_source: Option<TauSource>,
    #[arg(long)]
    half_window: Option<usize>,
    /// Circle: goal as `x,y`.
    #[arg(long, allow_hyphen_values = true, value_parser = floats::<2>)]
    goal: Option<[f64; 2]>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    standoff: Option<f64>,
    /// ccw or cw.
    #[arg(long, value_parser = serde_enum::<Orientation>)]
    orientation: Option<Orientation>,
    #[arg(long)]
    stop_tol: Option<f64>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Clutter: field document written by generate-field.
    #[arg(long)]
    field_file: Option<PathBuf>,
    #[arg(long)]
    view_half_angle: Option<f64>,
    #[arg(long)]
    omega_acq: Option<f64>,
    #[command(flatten)]
    field: FieldArgs,
}

impl FlyArgs {
    fn section(&self) -> FlySection {
        FlySection {
            kind: self.kind,
            start: self.start,
            dt: self.dt,
            t_max: self.t_max,
            left: self.left,
            right: self.right,
            epsilon: self.epsilon,
            v_cap: self.v_cap,
            tau_source: self.tau_source,
            half_window: self.half_window,
            goal: self.goal,
            lambda: self.lambda,
            standoff: self.standoff,
            orientation: self.orientation,
            stop_tol: self.stop_tol,
            record_every: self.record_every,
            field_file: self.field_file.clone(),
            view_half_angle: self.view_half_angle,
            omega_acq: self.omega_acq,
        }
    }
}

fn table_field(t: &TableArgs) -> FieldSection {
    FieldSection {
        alpha: t.alpha,
        beta: t.beta,
        gamma: t.gamma,
        ..FieldSection::default()
    }
}

/// Config carried by the flags alone.
fn flag_config(cli: &Cli) -> Config {
    let mut cfg = Config {
        seed: cli.seed,
        format: cli.format,
        ..Config::default()
    };
    match &cli.command {
        Command::GenerateField(a) => {
            cfg.command = Some("generate-field".into());
            cfg.field = a.section();
        }
        Command::AnalyticTable(a) => {
            cfg.command = Some("analytic-table".into());
            cfg.field = table_field(a);
            cfg.grid = a.grid.section();
        }
        Command::McSweep(a) => {
            cfg.command = Some("mc-sweep".into());
            cfg.field = table_field(&a.table);
            cfg.grid = a.table.grid.section();
            cfg.protocol = ProtocolSection {
                trials: a.trials,
                policy: a.policy,
                heading_mode: a.heading_mode,
                clearance: a.clearance,
            };
        }
        Command::Fly(a) => {
            cfg.command = Some("fly".into());
            cfg.field = a.field.section();
            cfg.fly = a.section();
        }
    }
    cfg
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let flags = flag_config(cli);
    let file = match &cli.config {
        Some(path) => config::load(path)?,
        None => Config::default(),
    };
    if let (Some(a), Some(b)) = (&file.command, &flags.command) {
        if a != b {
            return Err(CliError::Usage(format!("config was written for {a}, not {b}")));
        }
    }
    let mut cfg = file.overlay(flags);
    let seed = cfg.seed.unwrap_or_else(rand::random);
    cfg.seed = Some(seed);
    eprintln!("seed: {seed}");
    let out = match &cli.command {
        Command::GenerateField(_) => commands::generate_field(cfg)?,
        Command::AnalyticTable(_) => commands::analytic_table(cfg)?,
        Command::McSweep(_) => commands::mc_sweep(cfg, cli.check)?,
        Command::Fly(_) => commands::fly(cfg)?,
    };
    emit(cli.out.as_deref(), &out)?;
    match out.check_failure {
        Some(msg) => Err(CliError::Check(msg)),
        None => Ok(()),
    }
}

fn write_file(path: &std::path::Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn emit(out: Option<&std::path::Path>, o: &commands::Output) -> Result<(), CliError> {
    match out {
        Some(path) => {
            write_file(path, &o.text)?;
            if let Some(side) = &o.sidecar {
                write_file(&path.with_extension("events.json"), side)?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(o.text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    return Err(CliError::Io {
                        path: "<stdout>".into(),
                        source: e,
                    })
                }
                _ => {}
            }
            if let Some(side) = &o.sidecar {
                eprint!("{side}");
            }
        }
    }
    if let Some(summary) = &o.summary {
        eprintln!("{summary}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
