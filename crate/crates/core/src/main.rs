use std::error::Error;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use stitch::corpus;
use stitch::diff::diff_projects;
use stitch::llm::{Gateway, ProviderConfig, ProviderKind};
use stitch::sb3::{load_sb3, write_sb3};
use stitch::session::{self, hint_text, http, run_batch, run_fix_loop, SessionStore, Tutor};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "stitch", version, about = "Step-by-step tutoring for Scratch projects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Stub,
    Remote,
}

#[derive(clap::Args)]
struct ProviderOpts {
    /// Explanation provider.
    #[arg(long, value_enum, default_value = "stub")]
    provider: ProviderArg,
    /// Provider configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ProviderOpts {
    fn gateway(&self) -> Result<Gateway> {
        let mut config = match &self.config {
            Some(p) => ProviderConfig::from_json(&fs::read_to_string(p)?)?,
            None => ProviderConfig::default(),
        };
        config.kind = match self.provider {
            ProviderArg::Stub => ProviderKind::Stub,
            ProviderArg::Remote => ProviderKind::Remote,
        };
        Ok(Gateway::from_config(&config)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compare a student project with the reference.
    Diff {
        student: PathBuf,
        teacher: PathBuf,
        /// Write the report as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Show the most critical difference with an explanation.
    Hint {
        student: PathBuf,
        teacher: PathBuf,
        #[arg(long)]
        description: Option<String>,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        provider: ProviderOpts,
    },
    /// Apply fixes and write the repaired project.
    Fix {
        student: PathBuf,
        teacher: PathBuf,
        /// Repeat until the projects match instead of fixing one item.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every pair directory under a corpus directory.
    Eval {
        dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Session directory; sessions live in memory when omitted.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Idle hours before a session expires.
        #[arg(long, default_value_t = 24)]
        ttl_hours: u64,
        #[command(flatten)]
        provider: ProviderOpts,
    },
    /// Write the seeded-bug fixture pairs, optionally with equivalent variants.
    Corpus {
        dir: PathBuf,
        /// Also write this many behavior-preserving variants per fixture
        /// under `<dir>-equivalent`.
        #[arg(long, default_value_t = 0)]
        variants: u64,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Diff {
            student,
            teacher,
            out,
            json,
        } => {
            let s = load_sb3(&read(&student)?).map_err(|e| format!("student: {e}"))?.project;
            let t = load_sb3(&read(&teacher)?).map_err(|e| format!("teacher: {e}"))?.project;
            let report = diff_projects(&s, &t)?;
            if let Some(out) = out {
                fs::write(out, report.to_json_pretty())?;
            }
            if json {
                println!("{}", report.to_json_pretty());
            } else if report.items.is_empty() {
                println!("{}", session::COMPLETION_MESSAGE);
            } else {
                for item in &report.items {
                    println!("{}. [{}] {}", item.severity, item.id, item.message);
                }
            }
            Ok(if report.functionally_equivalent { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Hint {
            student,
            teacher,
            description,
            json,
            provider,
        } => {
            let tutor = Tutor::new(SessionStore::in_memory(session::DEFAULT_TTL), Arc::new(provider.gateway()?));
            let created = tutor.create_session(&read(&teacher)?, &read(&student)?, description)?;
            match tutor.next_hint(&created.session_id) {
                Ok(hint) if json => println!("{}", serde_json::to_string_pretty(&hint)?),
                Ok(hint) => print!("{}", hint_text(&hint)),
                Err(session::SessionError::Complete) => println!("{}", session::COMPLETION_MESSAGE),
                Err(e) => return Err(e.into()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fix {
            student,
            teacher,
            all,
            out,
        } => {
            let archive = load_sb3(&read(&student)?).map_err(|e| format!("student: {e}"))?;
            let t = load_sb3(&read(&teacher)?).map_err(|e| format!("teacher: {e}"))?;
            let items = diff_projects(&archive.project, &t.project)?.items.len();
            let limit = if all { items + 2 } else { 1 };
            let result = run_fix_loop(&archive.project, &t.project, limit);
            if let Some(e) = result.error {
                return Err(e.into());
            }
            let fixed = result.fixed.expect("fix loop without error keeps a project");
            let mut assets = archive.assets;
            assets.extend(t.assets);
            let mut seen = std::collections::BTreeSet::new();
            assets.retain(|a| seen.insert(a.name.clone()));
            fs::write(&out, write_sb3(&fixed, &assets)?)?;
            let left = diff_projects(&fixed, &t.project)?.items.len();
            println!("applied {} fix(es); {left} difference(s) left", result.iterations);
            Ok(if left == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Eval { dir, json } => {
            let rows = run_batch(&dir)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                println!("{:<24} {:>5} {:>5} {:>9} {:>5} {:>9}", "pair", "items", "top", "diff ms", "iters", "converged");
                for r in &rows {
                    let top = r.top_matches.map_or("-", |b| if b { "yes" } else { "no" });
                    let iters = r.iterations.map_or("-".to_string(), |n| n.to_string());
                    println!(
                        "{:<24} {:>5} {:>5} {:>9.2} {:>5} {:>9}",
                        r.name, r.items, top, r.latency_ms, iters, r.converged
                    );
                    if let Some(e) = &r.error {
                        println!("  error: {e}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            port,
            host,
            store,
            ttl_hours,
            provider,
        } => {
            let ttl = Duration::from_secs(ttl_hours * 3600);
            let store = match store {
                Some(dir) => SessionStore::open(dir, ttl)?,
                None => SessionStore::in_memory(ttl),
            };
            let tutor = Arc::new(Tutor::new(store, Arc::new(provider.gateway()?)));
            let addr: SocketAddr = format!("{host}:{port}").parse()?;
            tokio::runtime::Runtime::new()?.block_on(http::serve(tutor, addr))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Corpus { dir, variants } => {
            let fixtures = corpus::seeded_pairs();
            corpus::write_corpus(&dir, &fixtures)?;
            println!("wrote {} pairs to {}", fixtures.len(), dir.display());
            if variants > 0 {
                let mut name = dir.file_name().unwrap_or_default().to_os_string();
                name.push("-equivalent");
                let eq_dir = dir.with_file_name(name);
                let n = corpus::write_equivalence_corpus(&eq_dir, &fixtures, variants)?;
                println!("wrote {n} equivalent variants to {}", eq_dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
