//! `m3i`: replay traces, check and format rule files, serve the HTTP API.
//!
//! Exit codes: 0 ok, 1 usage, 2 validation, 3 I/O.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use m3i::context::ClockOrigin;
use m3i::dsl::{self, Diagnostic, RuleFile};
use m3i::engine::STANDARD_CALLBACKS;
use m3i::scenario::{self, TraceError};
use m3i::{Catalog, Engine};

const DEFAULT_TICK: u64 = 1000;

#[derive(Parser)]
#[command(name = "m3i", version, about = "Context-driven multimodal rule engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a context trace and write the timeline.
    Run {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Tick interval in ms; defaults to the rule file's `tick` header.
        #[arg(long)]
        tick: Option<u64>,
        /// Timeline output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Report diagnostics; exit 0 only when the file is clean.
    Check {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Print the canonical form of a rule file.
    Fmt {
        #[arg(long)]
        rules: PathBuf,
    },
    /// Serve the HTTP API in stepped mode.
    Serve {
        #[arg(long, default_value_t = m3i_service::DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        #[arg(long)]
        tick: Option<u64>,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn invalid(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Failure {
        Failure {
            code: 3,
            message: format!("{}: {e}", path.display()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("m3i: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn print_diagnostics(path: &Path, diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{}:{d}", path.display());
    }
}

/// Catalog precedence: `--catalog`, the rule file's `catalog` header
/// (relative to the rule file), `M3I_CATALOG`, then the built-in catalog.
fn load_catalog(
    flag: Option<&Path>,
    rules_path: Option<&Path>,
    header: Option<&str>,
) -> Result<Catalog, Failure> {
    let from_header = header.map(|h| {
        rules_path
            .and_then(Path::parent)
            .unwrap_or(Path::new(""))
            .join(h)
    });
    let path = flag
        .map(Path::to_path_buf)
        .or(from_header)
        .or_else(|| std::env::var_os("M3I_CATALOG").map(PathBuf::from));
    match path {
        None => Ok(Catalog::standard()),
        Some(p) => Catalog::from_json(&read(&p)?)
            .map_err(|e| Failure::invalid(format!("{}: {e}", p.display()))),
    }
}

fn parse_rules(path: &Path) -> Result<dsl::Parsed, Failure> {
    dsl::parse(&read(path)?).map_err(|diags| {
        print_diagnostics(path, &diags);
        Failure::invalid("")
    })
}

/// Parses, resolves the catalog and checks; returns a clean rule file.
fn load_rules(path: &Path, catalog_flag: Option<&Path>) -> Result<(RuleFile, Catalog), Failure> {
    let parsed = parse_rules(path)?;
    let catalog = load_catalog(catalog_flag, Some(path), parsed.file.catalog.as_deref())?;
    let diags = dsl::check(
        &parsed.file,
        Some(&parsed.map),
        &catalog,
        &STANDARD_CALLBACKS,
    );
    if !diags.is_empty() {
        print_diagnostics(path, &diags);
        return Err(Failure::invalid(""));
    }
    Ok((parsed.file, catalog))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            rules,
            trace,
            tick,
            out,
            catalog,
        } => {
            let (file, catalog) = load_rules(&rules, catalog.as_deref())?;
            let tick = tick.or(file.tick).ok_or_else(|| {
                Failure::usage("no tick interval: pass --tick or add a `tick` header")
            })?;
            if tick == 0 {
                return Err(Failure::usage("--tick must be positive"));
            }
            let trace = scenario::load_trace(&trace, &catalog).map_err(|e| match e {
                TraceError::Io(io) => Failure::io(&trace, io),
                other => Failure::invalid(format!("{}:{other}", trace.display())),
            })?;
            let timeline = scenario::run(&file, &trace, tick, &catalog)
                .map_err(|e| Failure::invalid(e.to_string()))?;
            match out {
                Some(path) => {
                    std::fs::write(&path, timeline.to_jsonl()).map_err(|e| Failure::io(&path, e))
                }
                None => timeline
                    .write_to(std::io::stdout().lock())
                    .map_err(|e| Failure::io(Path::new("<stdout>"), e)),
            }
        }
        Command::Check { rules, catalog } => {
            load_rules(&rules, catalog.as_deref())?;
            println!("{}: ok", rules.display());
            Ok(())
        }
        Command::Fmt { rules } => {
            print!("{}", dsl::print(&parse_rules(&rules)?.file));
            Ok(())
        }
        Command::Serve {
            port,
            rules,
            bind,
            tick,
            catalog,
        } => {
            let (file, catalog) = match &rules {
                Some(path) => load_rules(path, catalog.as_deref())?,
                None => (
                    RuleFile::default(),
                    load_catalog(catalog.as_deref(), None, None)?,
                ),
            };
            let tick = tick.or(file.tick).unwrap_or(DEFAULT_TICK);
            if tick == 0 {
                return Err(Failure::usage("--tick must be positive"));
            }
            let mut engine = Engine::standard(tick, &catalog, ClockOrigin::default())
                .map_err(|e| Failure::invalid(e.to_string()))?;
            for rule in file.rules {
                engine
                    .add_rule(rule)
                    .map_err(|e| Failure::invalid(e.to_string()))?;
            }
            let addr = SocketAddr::new(bind, port);
            let runtime =
                tokio::runtime::Runtime::new().map_err(|e| Failure::io(Path::new("runtime"), e))?;
            eprintln!("m3i: serving on http://{addr}");
            runtime
                .block_on(m3i_service::serve(addr, m3i_service::AppState::new(engine)))
                .map_err(|e| Failure {
                    code: 3,
                    message: format!("{addr}: {e}"),
                })
        }
    }
}
