//! `svctrust`: run monitoring scenarios, export reports and query the trust API.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;
use tracing::Level;

use svctrust_client::{ClientError, TrustClient};
use svctrust_core::report::{self, ExportFormat, RunArtifacts, SweepReport};
use svctrust_core::runner::{run_virtual, Monitor, RunError, RunOutput};
use svctrust_core::scenario::{ConfigError, ScenarioConfig};
use svctrust_server::{run_wall, Endpoint, WallError, WallOptions};

#[derive(Debug, Parser)]
#[command(
    name = "svctrust",
    version,
    about = "Trust evaluation of black-box data services"
)]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Virtual,
    Wall,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ExportFormat::Json,
            Format::Csv => ExportFormat::Csv,
        }
    }
}

#[derive(Debug, clap::Args)]
struct ScenarioArgs {
    /// Scenario file, or `paper_scenario` for the bundled one.
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
struct WallArgs {
    /// Address the data-service endpoints bind to (wall mode).
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Port of the first data service; 0 picks free ports (wall mode).
    #[arg(long, default_value_t = 0)]
    base_port: u16,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its reports.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value = "virtual")]
        mode: Mode,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Keep PerfDB, EDQ and the trust history in this directory.
        #[arg(long)]
        stores: Option<PathBuf>,
        #[command(flatten)]
        wall: WallArgs,
        /// Serve the trust API here during a wall-mode run.
        #[arg(long)]
        trust_addr: Option<SocketAddr>,
    },
    /// Check a scenario file without running it.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Re-export a sweep report.
    Export {
        /// A `sweep_report.json` written by `run`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wall-mode run that keeps serving the trust API until interrupted.
    Serve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        wall: WallArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        trust_addr: SocketAddr,
    },
    /// Ask a running trust API for a ranking.
    Rank {
        /// Base url of the trust API.
        #[arg(long, default_value = "http://127.0.0.1:8080/")]
        url: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot parse report {path}: {source}")]
    Report {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Wall(#[from] WallError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Report { .. } => 1,
            _ => 2,
        }
    }
}

fn io_error(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn load(args: &ScenarioArgs) -> Result<ScenarioConfig, CliError> {
    let config = ScenarioConfig::load(&args.scenario)?;
    Ok(match args.seed {
        Some(seed) => config.with_seed(seed),
        None => config,
    })
}

fn monitor(config: ScenarioConfig, stores: Option<&Path>) -> Result<Monitor, CliError> {
    Ok(match stores {
        Some(dir) => Monitor::persistent(config, dir)?,
        None => Monitor::in_memory(config)?,
    })
}

fn write_outputs(out: &Path, run: &RunOutput) -> Result<(), CliError> {
    let mut probes_csv = Vec::new();
    run.monitor
        .tsdb()
        .write_csv(&mut probes_csv)
        .map_err(io_error("probe export"))?;
    let mut samples_csv = Vec::new();
    run.monitor
        .knowledge()
        .write_sample_log(&mut samples_csv)
        .map_err(io_error("sample export"))?;
    let artifacts = RunArtifacts {
        sweep: &run.report,
        probes_csv,
        samples_csv,
        event_log: &run.event_log,
    };
    let written = report::write_run(out, &artifacts)
        .map_err(io_error(format!("writing {}", out.display())))?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    if !run.skipped.is_empty() {
        eprintln!(
            "{} factor evaluations skipped for lack of evidence",
            run.skipped.len()
        );
    }
    print!("{}", run.report.summary_csv());
    Ok(())
}

async fn wall_run(
    config: ScenarioConfig,
    stores: Option<&Path>,
    wall: &WallArgs,
    trust_addr: Option<SocketAddr>,
) -> Result<(RunOutput, Option<Endpoint>), CliError> {
    eprintln!(
        "running {:?} on the wall clock for {} s",
        config.name, config.duration
    );
    let opts = WallOptions {
        bind: wall.bind,
        base_port: wall.base_port,
        trust_addr,
    };
    let run = run_wall(monitor(config, stores)?, &opts).await?;
    Ok((run.output, run.trust_api))
}

async fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            scenario,
            mode,
            out,
            stores,
            wall,
            trust_addr,
        } => {
            let config = load(&scenario)?;
            let output = match mode {
                Mode::Virtual => run_virtual(monitor(config, stores.as_deref())?)?,
                Mode::Wall => {
                    let (output, api) =
                        wall_run(config, stores.as_deref(), &wall, trust_addr).await?;
                    if let Some(api) = api {
                        api.shutdown().await.map_err(WallError::from)?;
                    }
                    output
                }
            };
            write_outputs(&out, &output)
        }
        Command::Validate { scenario } => {
            let config = load(&scenario)?;
            println!(
                "{}: ok ({} services, {} s, {} sweep points, seed {})",
                config.name,
                config.services.len(),
                config.duration,
                config.sweep.len(),
                config.seed
            );
            Ok(())
        }
        Command::Export {
            report,
            format,
            out,
        } => {
            let text = std::fs::read_to_string(&report)
                .map_err(io_error(format!("reading {}", report.display())))?;
            let sweep = SweepReport::from_json(&text).map_err(|source| CliError::Report {
                path: report.clone(),
                source,
            })?;
            let rendered = sweep.export(format.into());
            match out {
                Some(path) => std::fs::write(&path, rendered)
                    .map_err(io_error(format!("writing {}", path.display()))),
                None => {
                    print!("{rendered}");
                    Ok(())
                }
            }
        }
        Command::Serve {
            scenario,
            out,
            wall,
            trust_addr,
        } => {
            let config = load(&scenario)?;
            eprintln!("trust api on http://{trust_addr}/");
            let (output, api) = wall_run(config, None, &wall, Some(trust_addr)).await?;
            write_outputs(&out, &output)?;
            if let Some(api) = api {
                eprintln!("run finished; still serving trust requests, ctrl-c to stop");
                tokio::signal::ctrl_c()
                    .await
                    .map_err(io_error("waiting for ctrl-c"))?;
                api.shutdown().await.map_err(WallError::from)?;
            }
            Ok(())
        }
        Command::Rank { url, alpha, beta } => {
            let ranking = TrustClient::new(&url)?.ranking(alpha, beta).await?;
            print!("{}", report::trust_report_json(&ranking));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => Level::WARN,
        1 => Level::INFO,
        2 => Level::DEBUG,
        _ => Level::TRACE,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();

    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(2);
        }
    };
    match runtime.block_on(execute(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
