use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use axs_loadgen::profile::{load_script, parse_script, BUNDLED_SCRIPT};
use axs_loadgen::report::{render_text, write_levels_csv, write_samples_csv};
use axs_loadgen::run::SWEEP_LEVELS;
use axs_loadgen::{run_load, sweep, LoadProfile, Measured, Outcome, Pacing, Target, Thresholds};
use clap::Parser;

/// Drives scripted speakers against a running gateway and checks the KPIs.
#[derive(Parser, Debug)]
#[command(name = "loadgen", version)]
struct Cli {
    /// Gateway base URL.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    gateway: String,
    #[arg(long, default_value_t = 10)]
    clients: usize,
    /// Seconds over which connections are opened.
    #[arg(long, default_value_t = 1.0)]
    ramp: f64,
    #[arg(long, value_enum, default_value_t = Pacing::Realtime)]
    pacing: Pacing,
    /// Utterances, one per line; defaults to a short bundled meeting.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Audio chunks per client; the script repeats as needed.
    #[arg(long)]
    msgs: Option<usize>,
    /// Run every level in --levels instead of --clients.
    #[arg(long)]
    sweep: bool,
    #[arg(long, value_delimiter = ',', default_values_t = SWEEP_LEVELS)]
    levels: Vec<usize>,
    /// Raw latency samples; a per-level table goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// KPI rows to check; defaults to the bundled table.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
    /// Seconds to wait for outstanding replies after the last send.
    #[arg(long, default_value_t = 15.0)]
    drain_timeout: f64,
    /// Resend one seq per client to check the reorder guard.
    #[arg(long)]
    inject_reorder: bool,
    #[arg(long, default_value = "warn")]
    log_level: String,
}

fn levels_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    out.with_file_name(format!("{stem}.levels.csv"))
}

async fn run(cli: Cli) -> Result<bool> {
    let script = match &cli.script {
        Some(path) => load_script(path)?,
        None => parse_script(BUNDLED_SCRIPT),
    };
    let thresholds = match &cli.thresholds {
        Some(path) => Thresholds::load(path)?,
        None => Thresholds::bundled(),
    };
    anyhow::ensure!(
        cli.drain_timeout.is_finite() && cli.drain_timeout >= 0.0,
        "--drain-timeout must be a non-negative number"
    );
    let profile = LoadProfile {
        clients: cli.clients,
        ramp_s: cli.ramp,
        msgs_per_client: cli.msgs,
        pacing: cli.pacing,
        script,
        sample_rate: cli.sample_rate,
        inject_reorder: cli.inject_reorder,
        drain_timeout: Duration::from_secs_f64(cli.drain_timeout),
        ..LoadProfile::default()
    };
    profile.validate()?;
    let target = Target::from_base(&cli.gateway)?;

    let levels = if cli.sweep {
        let report = sweep(&profile, &cli.levels, &target).await?;
        if let Some(why) = &report.stopped {
            println!("sweep stopped: {why}");
        }
        match report.max_sustained {
            Some(n) => println!("maximum sustained clients: {n}"),
            None => println!("maximum sustained clients: none"),
        }
        report.levels
    } else {
        vec![run_load(&profile, &target).await?]
    };

    let verdicts = thresholds.evaluate(&Measured::from_levels(&levels));
    print!("{}", render_text(&levels, &verdicts));
    if let Some(out) = &cli.out {
        let f = File::create(out).with_context(|| format!("creating {}", out.display()))?;
        write_samples_csv(f, &levels)?;
        let lp = levels_path(out);
        let f = File::create(&lp).with_context(|| format!("creating {}", lp.display()))?;
        write_levels_csv(f, &levels)?;
        println!("samples: {}  levels: {}", out.display(), lp.display());
    }
    Ok(verdicts.iter().all(|v| v.outcome != Outcome::Fail))
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter =
        tracing_subscriber::EnvFilter::try_new(&cli.log_level).unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    match run(cli).await {
        Ok(true) => ExitCode::SUCCESS,
        // a KPI row failed; the report above says which
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
