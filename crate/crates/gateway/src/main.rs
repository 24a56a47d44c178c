use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use axs_core::recognizer::RecognizerBackend;
use axs_gateway::config::{GatewayConfig, Overrides};
use axs_gateway::server::Gateway;
use axs_gateway::services::StartupError;
use clap::{Parser, ValueEnum};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RecognizerArg {
    Mock,
    External,
}

/// Real-time accessibility gateway: captions, translation, emotion tags,
/// sign animation and summaries over WebSocket.
#[derive(Debug, Parser)]
#[command(name = "axs-gateway", version)]
struct Cli {
    /// TOML config file; AXS_* environment variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    /// Compiled sign dictionary (.axsd). Without one a synthetic demo
    /// dictionary is served.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long, value_enum)]
    recognizer: Option<RecognizerArg>,
    #[arg(long)]
    recognizer_endpoint: Option<String>,
    /// tracing filter, e.g. `info` or `axs_gateway=debug`
    #[arg(long)]
    log_level: Option<String>,
}

async fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = GatewayConfig::load(cli.config.as_deref()).map_err(StartupError::from)?;
    config.apply(Overrides {
        host: cli.host,
        port: cli.port,
        dictionary: cli.dictionary,
        recognizer: cli.recognizer.map(|r| match r {
            RecognizerArg::Mock => RecognizerBackend::Mock,
            RecognizerArg::External => RecognizerBackend::External,
        }),
        recognizer_endpoint: cli.recognizer_endpoint,
        log_level: cli.log_level,
    });
    let filter = EnvFilter::try_new(&config.log_level).with_context(|| format!("bad log level {:?}", config.log_level))?;
    tracing_subscriber::fmt().with_env_filter(filter).init();

    let mut gateway = Gateway::start(&config).await?;
    println!("listening on {}", gateway.addr);
    tokio::select! {
        r = gateway.wait() => r.context("server stopped")?,
        _ = tokio::signal::ctrl_c() => {
            tracing::info!("shutting down");
            gateway.shutdown().await;
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<StartupError>().map(StartupError::code).unwrap_or("FATAL");
            eprintln!("error[{code}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}
