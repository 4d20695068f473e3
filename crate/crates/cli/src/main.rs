//! `reenact`: load workloads, browse history, debug and explain past
//! transactions, run the equivalence checker, serve the HTTP API.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

mod render;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use reenact_core::provenance::{debug_view, provenance_graph, DebugOptions};
use reenact_core::storage::{RowId, Scn};
use reenact_core::verify::{verify, VerifyOptions};
use reenact_core::whatif::{run_whatif, WhatIfScenario};
use reenact_core::{Engine, EngineConfig, Error};
use reenact_service::{parse_xid, ApiError};

#[derive(Debug, Parser)]
#[command(name = "reenact", version, about = "Debug past transactions by reenacting them")]
struct Cli {
    /// Engine state file; `run` and `import-log` update it.
    #[arg(long, global = true, value_name = "FILE", conflicts_with = "workload")]
    state: Option<PathBuf>,
    /// Build the history by running this workload in memory.
    #[arg(long, global = true, value_name = "FILE")]
    workload: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run a workload script and print the final table states.
    Run {
        #[arg(value_name = "WORKLOAD")]
        script: PathBuf,
    },
    /// List past transactions, optionally those overlapping [from, to].
    History {
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
    },
    /// Details of one transaction.
    Show { xid: String },
    /// Statement-by-statement debugging view of a transaction.
    Debug {
        xid: String,
        /// Include rows the transaction did not change.
        #[arg(long)]
        all: bool,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        tables: Option<Vec<String>>,
    },
    /// Provenance graph of a row version.
    Prov {
        xid: String,
        table: String,
        row: u64,
        /// Statement index (default: the last statement).
        stmt: Option<u32>,
    },
    /// Replay a transaction under a hypothetical scenario (JSON file).
    Whatif { xid: String, scenario: PathBuf },
    /// Check reenactment against native execution on random histories.
    Verify {
        #[arg(long, default_value_t = 1000)]
        seeds: usize,
        /// First PRNG seed.
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Write the audit log as JSON lines.
    ExportLog { path: PathBuf },
    /// Replace the audit log of a saved state (requires --state).
    ImportLog { path: PathBuf },
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type Out = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.format;
    match dispatch(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            if format == Format::Json {
                eprintln!("{}", pretty(&ApiError::from(e)));
            } else {
                eprintln!("{}", render::error(&e));
            }
            ExitCode::from(1)
        }
    }
}

fn pretty<T: serde::Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes") + "\n"
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| {
        Failure::Domain(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
    })
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| {
        Failure::Domain(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
    })
}

/// Engine for the inspection commands: a saved state or an in-memory run.
fn load(cli: &Cli) -> Result<Engine, Failure> {
    if let Some(p) = &cli.state {
        return Ok(Engine::import_state(&read(p)?, EngineConfig::default())?);
    }
    if let Some(p) = &cli.workload {
        let mut e = Engine::default();
        e.run_workload_text(&read(p)?)?;
        return Ok(e);
    }
    Err(Failure::Usage("no history to inspect: pass --state <FILE> or --workload <FILE>".into()))
}

fn xid(s: &str) -> Result<reenact_core::storage::TxnId, Failure> {
    parse_xid(s).map_err(|e| Failure::Usage(e.message))
}

fn dispatch(cli: Cli) -> Out {
    let json = cli.format == Format::Json;
    match &cli.command {
        Cmd::Run { script } => {
            let mut e = match &cli.state {
                Some(p) if p.exists() => Engine::import_state(&read(p)?, EngineConfig::default())?,
                _ => Engine::default(),
            };
            if cli.workload.is_some() {
                return Err(Failure::Usage("run takes its workload as an argument, not --workload".into()));
            }
            let summary = e.run_workload_text(&read(script)?)?;
            if let Some(p) = &cli.state {
                write(p, &e.export_state()?)?;
            }
            let tables = render::final_tables(&e)?;
            Ok(if json {
                pretty(&json!({
                    "summary": summary,
                    "scn": e.storage().current_scn(),
                    "tables": tables,
                }))
            } else {
                render::run(&e, &summary, &tables)
            })
        }
        Cmd::History { from, to } => {
            let e = load(&cli)?;
            let range = match (from, to) {
                (None, None) => None,
                (f, t) => Some((Scn(f.unwrap_or(0)), Scn(t.unwrap_or(u64::MAX)))),
            };
            let list = e.log().list_transactions(range)?;
            Ok(if json { pretty(&list) } else { render::history(&list) })
        }
        Cmd::Show { xid: x } => {
            let x = xid(x)?;
            let e = load(&cli)?;
            let t = e.log().get_transaction(x)?;
            Ok(if json { pretty(&t) } else { render::transaction(&t) })
        }
        Cmd::Debug { xid: x, all, tables } => {
            let x = xid(x)?;
            let e = load(&cli)?;
            let opts = DebugOptions {
                show_unaffected: *all,
                tables: tables.clone(),
            };
            let v = debug_view(&e, x, &opts)?;
            Ok(if json { pretty(&v) } else { render::debug(&v) })
        }
        Cmd::Prov { xid: x, table, row, stmt } => {
            let x = xid(x)?;
            let e = load(&cli)?;
            let g = provenance_graph(&e, x, table, RowId(*row), *stmt)?;
            Ok(if json { pretty(&g) } else { render::graph(&g) })
        }
        Cmd::Whatif { xid: x, scenario } => {
            let x = xid(x)?;
            let e = load(&cli)?;
            let text = read(scenario)?;
            let mut doc: serde_json::Value =
                serde_json::from_str(&text).map_err(|err| Error::InvalidScenario(err.to_string()))?;
            match doc.as_object_mut() {
                Some(o) => match o.get("xid") {
                    None => {
                        o.insert("xid".into(), x.0.into());
                    }
                    Some(v) if v.as_u64() == Some(x.0) => {}
                    Some(v) => {
                        return Err(Error::InvalidScenario(format!("scenario is for transaction {v}, not {x}")).into())
                    }
                },
                None => return Err(Error::InvalidScenario("expected a JSON object".into()).into()),
            }
            let sc: WhatIfScenario =
                serde_json::from_value(doc).map_err(|err| Error::InvalidScenario(err.to_string()))?;
            let r = run_whatif(&e, &sc)?;
            Ok(if json { pretty(&r) } else { render::whatif(&r) })
        }
        Cmd::Verify { seeds, seed } => {
            let report = verify(&VerifyOptions {
                histories: *seeds,
                seed: *seed,
                ..Default::default()
            });
            let out = if json { pretty(&report) } else { render::verify(&report) };
            if report.ok() {
                Ok(out)
            } else {
                print!("{out}");
                Err(Failure::Domain(Error::Unsupported(format!(
                    "{} of {} histories diverged",
                    report.failures.len(),
                    report.histories
                ))))
            }
        }
        Cmd::Serve { port, host } => {
            let e = if cli.state.is_some() || cli.workload.is_some() {
                load(&cli)?
            } else {
                Engine::default()
            };
            let rt = tokio::runtime::Runtime::new().map_err(|err| Failure::Domain(err.into()))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(SocketAddr::new(*host, *port)).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                reenact_service::serve_on(listener, e).await
            })
            .map_err(|err| Failure::Domain(err.into()))?;
            Ok(String::new())
        }
        Cmd::ExportLog { path } => {
            let e = load(&cli)?;
            write(path, &e.export_log())?;
            let n = e.log().entries().len();
            Ok(if json {
                pretty(&json!({"path": path, "entries": n}))
            } else {
                format!("wrote {n} log entries to {}\n", path.display())
            })
        }
        Cmd::ImportLog { path } => {
            let Some(state) = &cli.state else {
                return Err(Failure::Usage("import-log needs --state <FILE> to update".into()));
            };
            let mut e = Engine::import_state(&read(state)?, EngineConfig::default())?;
            e.import_log(&read(path)?)?;
            write(state, &e.export_state()?)?;
            let n = e.log().entries().len();
            let txns = e.transactions().count();
            Ok(if json {
                pretty(&json!({"entries": n, "transactions": txns}))
            } else {
                format!("imported {n} log entries ({txns} transactions) into {}\n", state.display())
            })
        }
    }
}
