//! `kaya_cmd`: analyze contracts, run DBDL suites in one shot, or serve the
//! session API.
//!
//! Exit status: 0 on success, 1 when a test expectation fails, 2 on any input,
//! usage or I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kaya_core::pipeline::{
    list_variables, load_source, load_suite, render_variables, run_pipeline, InputError,
    PipelineOptions,
};
use kaya_core::report::{render_report, ReportFormat, DEFAULT_THRESHOLD};
use kaya_core::runner::RunOptions;
use kaya_server::ServerConfig;

#[derive(Parser, Debug)]
#[command(name = "kaya_cmd", version, about = "DApp test runner and analyzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the state variables of a contract source with their storage slots.
    Analyze {
        file: PathBuf,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
    },
    /// Run a DBDL suite against contract sources and print the report.
    Run {
        /// Contract source file; repeat for several.
        #[arg(short = 'c', long = "contract", required = true)]
        contracts: Vec<PathBuf>,
        /// DBDL test suite.
        #[arg(short = 't', long = "suite")]
        suite: PathBuf,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = RunOptions::default().step_limit)]
        step_limit: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Stamp the report with the generation time.
        #[arg(long)]
        timestamps: bool,
        /// Also write the raw per-case results (with traces) as JSON.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Serve the session API on localhost until interrupted.
    Serve {
        #[arg(long, env = "KAYA_PORT", default_value_t = 7878)]
        port: u16,
        /// Keep JSON snapshots of sessions in this directory.
        #[arg(long)]
        state_dir: Option<PathBuf>,
    },
}

/// Failure carrying the exit status to use.
enum Failure {
    Input(InputError),
    Io(String),
}

impl Failure {
    fn report(&self, format: ReportFormat) {
        let err = match self {
            Failure::Input(e) => e.clone(),
            Failure::Io(m) => InputError::single("Io", m.clone()),
        };
        match format {
            ReportFormat::Json => eprintln!("{}", err.to_json()),
            ReportFormat::Text => eprintln!("error: {err}"),
        }
    }
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Input(e)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    use std::io::Write;
    match out {
        Some(p) => {
            std::fs::write(p, bytes).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Io(format!("stdout: {e}")))
        }
    }
}

fn analyze(file: &Path, format: ReportFormat) -> Result<ExitCode, Failure> {
    let unit = load_source(&file.display().to_string(), &read(file)?)?;
    let listing = list_variables(&unit)?;
    emit(None, &render_variables(&listing, format))?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn run(
    contracts: &[PathBuf],
    suite: &Path,
    format: ReportFormat,
    out: Option<&Path>,
    options: PipelineOptions,
    timestamps: bool,
    results: Option<&Path>,
) -> Result<ExitCode, Failure> {
    let mut units = Vec::new();
    for c in contracts {
        units.push(load_source(&c.display().to_string(), &read(c)?)?);
    }
    let suite = load_suite(&suite.display().to_string(), &read(suite)?)?;
    let mut output = run_pipeline(&units, &suite, &options)?;
    if timestamps {
        output.report.generated_at =
            Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }
    if let Some(path) = results {
        let json = serde_json::to_vec(&output.results).expect("serializable");
        emit(Some(path), &json)?;
    }
    emit(out, &render_report(&output.report, format))?;
    Ok(if output.report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn serve(port: u16, state_dir: Option<PathBuf>) -> Result<ExitCode, Failure> {
    let runtime =
        tokio::runtime::Runtime::new().map_err(|e| Failure::Io(format!("runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .map_err(|e| Failure::Io(format!("cannot bind 127.0.0.1:{port}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Failure::Io(e.to_string()))?;
        eprintln!("listening on http://{addr}");
        let config = ServerConfig {
            state_dir,
            ..ServerConfig::default()
        };
        kaya_server::serve(listener, config, shutdown_signal())
            .await
            .map_err(|e| Failure::Io(e.to_string()))?;
        eprintln!("shut down");
        Ok(ExitCode::SUCCESS)
    })
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (format, result) = match cli.command {
        Command::Analyze { file, format } => (format, analyze(&file, format)),
        Command::Run {
            contracts,
            suite,
            format,
            out,
            threshold,
            step_limit,
            jobs,
            timestamps,
            results,
        } => {
            let options = PipelineOptions {
                run: RunOptions { step_limit, jobs },
                threshold,
            };
            (
                format,
                run(
                    &contracts,
                    &suite,
                    format,
                    out.as_deref(),
                    options,
                    timestamps,
                    results.as_deref(),
                ),
            )
        }
        Command::Serve { port, state_dir } => (ReportFormat::Text, serve(port, state_dir)),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            f.report(format);
            ExitCode::from(2)
        }
    }
}
