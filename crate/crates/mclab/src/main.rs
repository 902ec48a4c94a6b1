use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mclab::commands::{self, AStarArg};
use mclab::config::{write_json, AppConfig, CACHE_ENV};
use mclab::server::{router, AppState};
use mclab_core::synth::io::Format;
use mclab_core::validation::{Faults, Level};

#[derive(Parser)]
#[command(name = "mclab", version, about = "Motion Cloud synthesis, validation and 2AFC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Png,
    Mcraw,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Stream frames from the recursion to PNG frames or a raw f32 stack.
    Synth {
        /// JSON with `params` and `grid`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "png")]
        format: FormatArg,
        #[arg(long, default_value_t = 100)]
        n_frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare an ensemble periodogram with the analytic spectrum.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        n_frames: usize,
        #[arg(long, default_value_t = 16)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the acceptance criteria; JSON report on stdout (or --out).
    Validate {
        #[arg(long, value_enum, default_value = "quick")]
        level: LevelArg,
        /// Restrict to these criterion ids.
        #[arg(long)]
        only: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scale the recursion's driving noise (fault injection).
        #[arg(long, hide = true, default_value_t = 1.0)]
        noise_gain: f64,
    },
    /// Simulate observer sessions and write them as JSONL.
    Simulate {
        /// JSON with `experiment`, `observer` and `sessions`; defaults apply.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides the number of sessions in the config.
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Fit psychometric curves and recover the observer model.
    Fit {
        /// Glob of session JSONL files.
        #[arg(long)]
        sessions: String,
        /// Reference prior slope: AUTO or a number.
        #[arg(long, default_value = "auto", allow_hyphen_values = true)]
        a_star: AStarArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the experiment API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, env = CACHE_ENV)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        sessions_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth {
            config,
            out,
            format,
            n_frames,
            seed,
        } => {
            let cfg = commands::load_stimulus_config(&config)?;
            let format = match format {
                FormatArg::Png => Format::Png,
                FormatArg::Mcraw => Format::Mcraw,
            };
            let s = commands::synth(&cfg, &out, format, n_frames, seed)?;
            println!("sigma_i {:.6e}", s.sigma_i);
            println!(
                "{} frames in {:.3} s ({:.1} frames/s)",
                s.n_frames,
                s.seconds,
                s.n_frames as f64 / s.seconds.max(1e-9)
            );
        }
        Command::Spectrum {
            config,
            out,
            n_frames,
            seeds,
            seed,
        } => {
            let cfg = commands::load_stimulus_config(&config)?;
            let r = commands::spectrum(&cfg, n_frames, seeds, seed)?;
            println!("band relative L2 {:.4} over {} seeds", r.band_relative_l2, r.seeds);
            write_json(&out, &r)?;
        }
        Command::Validate {
            level,
            only,
            out,
            noise_gain,
        } => {
            let level = match level {
                LevelArg::Quick => Level::Quick,
                LevelArg::Full => Level::Full,
            };
            let report = commands::validate(level, &only, Faults { noise_gain })?;
            for c in &report.criteria {
                eprintln!(
                    "{} {} ({:.1}s) {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.id,
                    c.seconds,
                    c.detail
                );
            }
            match out {
                Some(path) => write_json(&path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            return Ok(report.passed);
        }
        Command::Simulate {
            config,
            out,
            seed,
            sessions,
        } => {
            let mut cfg = match config {
                Some(p) => mclab::config::read_json(&p)?,
                None => commands::SimulateConfig::default(),
            };
            if let Some(n) = sessions {
                cfg.sessions = n;
            }
            for p in commands::simulate(&cfg, seed, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Fit { sessions, a_star, out } => {
            let report = commands::fit(&sessions, a_star, &out)?;
            for g in &report.groups {
                println!(
                    "u* {} t* {} z* {}: {} sessions, {} trials, {} curves{}",
                    g.u_star,
                    g.t_star,
                    g.z_star,
                    g.sessions.len(),
                    g.n_trials,
                    g.fits.len(),
                    g.error.as_deref().map(|e| format!(" (error: {e})")).unwrap_or_default()
                );
            }
            println!("report written to {}", out.join("fit.json").display());
        }
        Command::Serve {
            config,
            port,
            host,
            cache_dir,
            sessions_dir,
        } => {
            let mut cfg = AppConfig::load(config.as_deref())?;
            if let Some(p) = port {
                cfg.port = p;
            }
            if let Some(d) = cache_dir {
                cfg.cache_dir = d;
            }
            if let Some(d) = sessions_dir {
                cfg.sessions_dir = d;
            }
            let addr = SocketAddr::new(host, cfg.port);
            let state = AppState::open(cfg)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, router(state)).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
