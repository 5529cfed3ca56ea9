use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use recall_core::MemoryStore;
use recall_server::{build_manager, router, seed_demo, AppState, DataPaths, ServerConfig};

#[derive(Debug, Parser)]
#[command(
    name = "recall",
    version,
    about = "Conversation suggestions from personal memory records"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        store: PathBuf,
        /// Word vector table, `word<TAB>v1 v2 ...` per line. Defaults to the bundled toy table.
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Stopword list, one word per line. Defaults to the bundled English and Chinese lists.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// TOML or JSON config file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8787)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Seed a store with the park example records and one partner.
    InitDemo {
        #[arg(long)]
        store: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::InitDemo { store } => {
            let store = MemoryStore::open(&store).with_context(|| format!("opening store {}", store.display()))?;
            if seed_demo(&store)? {
                println!("seeded demo records and partner");
            } else {
                println!("store already has records, left unchanged");
            }
            Ok(())
        }
        Command::Serve {
            store,
            vectors,
            stopwords,
            config,
            port,
            host,
        } => {
            let config = match &config {
                Some(p) => ServerConfig::load(p)?,
                None => ServerConfig::default(),
            };
            let paths = DataPaths {
                store: Some(&store),
                vectors: vectors.as_deref(),
                stopwords: stopwords.as_deref(),
            };
            let manager = build_manager(&paths, &config)?;
            let app = router(AppState::new(manager, &config.api), &config.api);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(SocketAddr::new(host, port))
                    .await
                    .with_context(|| format!("binding {host}:{port}"))?;
                println!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                Ok(())
            })
        }
    }
}
