//! `aiive`: generate synthetic datasets, train headless or behind the
//! protocol server, export traces and sonification WAVs, compare traces.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use aiive_core::nn::data::{DEFAULT_CLASSES, DEFAULT_COUNTS, DEFAULT_SIDE};
use aiive_core::nn::{Dataset, Hyperparams, MomentumMode, SyntheticSpec};
use aiive_core::protocol::{serve, ServerConfig};
use aiive_core::session::trace::{compare_traces, read_trace, write_trace};
use aiive_core::session::{
    parse_script, run_script, Event, LiveConfig, ScriptedCommand, Session, SessionConfig,
};
use aiive_core::sonify::{render, write_wav, SonificationMode};
use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use log::{info, warn};

const SAMPLE_RATE: u32 = 44_100;

#[derive(Debug, Parser)]
#[command(name = "aiive", version, about = "Live, steerable MLP training engine")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write a synthetic class-template dataset (`D.meta` + `D.bin`).
    GenData(GenDataArgs),
    /// Train a network, headless or behind the protocol server.
    Train(TrainArgs),
    /// Compare two trace CSVs; exits 0 when they match.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Output path; `.meta` and `.bin` are appended.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Train, validation and test sizes.
    #[arg(long, value_parser = parse_counts, default_value = "3374,419,385")]
    counts: [usize; 3],
    /// Image side length in pixels.
    #[arg(long, default_value_t = DEFAULT_SIDE)]
    side: usize,
    #[arg(long, default_value_t = DEFAULT_CLASSES)]
    classes: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset written by `gen-data`. Without it, the default synthetic
    /// dataset is generated in memory from `--seed`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    h1: usize,
    #[arg(long, default_value_t = 16)]
    h2: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Epochs to train; with `--serve`, the session pauses after this many.
    #[arg(long, default_value_t = 50)]
    epochs: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Momentum update `W += mu * g_prev - lr * g` instead of the velocity form.
    #[arg(long)]
    paper_literal_momentum: bool,
    /// Serve the session on this address (TCP and WebSocket) instead of
    /// running headless.
    #[arg(long, conflicts_with_all = ["script", "trace", "wav"])]
    serve: Option<String>,
    /// JSON-lines command script: `{"at_step": n, "cmd": {...}}` per line.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Stereo WAV of the metric tones, one segment per epoch.
    #[arg(long)]
    wav: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode, default_value = "accuracy")]
    sonify: SonificationMode,
    /// Length of each epoch's tone in the WAV.
    #[arg(long, default_value_t = 1.0)]
    secs_per_epoch: f64,
    /// Layout ticks per second in serve mode.
    #[arg(long, default_value_t = 60.0)]
    tick_hz: f64,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Exactly two trace files.
    #[arg(long, required = true, num_args = 1, action = clap::ArgAction::Append)]
    trace: Vec<PathBuf>,
    #[arg(long, default_value_t = 1e-12)]
    tolerance: f64,
}

fn parse_counts(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, c] = parts.as_slice() else {
        return Err("expected three comma-separated counts".into());
    };
    let n = |p: &str| p.parse::<usize>().map_err(|e| format!("`{p}`: {e}"));
    Ok([n(a)?, n(b)?, n(c)?])
}

fn parse_mode(s: &str) -> Result<SonificationMode, String> {
    SonificationMode::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AIIVE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(err.exit_code().clamp(0, 255) as u8);
        }
    };
    let result = match cli.command {
        Cmd::GenData(args) => gen_data(args),
        Cmd::Train(args) => train(args),
        Cmd::Replay(args) => replay(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn gen_data(args: GenDataArgs) -> Result<ExitCode> {
    let spec = SyntheticSpec {
        side: args.side,
        classes: args.classes,
        counts: args.counts,
        seed: args.seed,
        ..SyntheticSpec::default()
    };
    let data = spec.generate().context("generating dataset")?;
    data.save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} images ({}x{}, {} classes, split {:?}) to {}",
        data.len(),
        args.side,
        args.side,
        args.classes,
        args.counts,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_data(args: &TrainArgs) -> Result<Arc<Dataset>> {
    let data = match &args.data {
        Some(path) => Dataset::load(path).with_context(|| format!("opening dataset {}", path.display()))?,
        None => {
            info!("no --data given; generating the default synthetic dataset");
            SyntheticSpec {
                seed: args.seed,
                counts: DEFAULT_COUNTS,
                ..SyntheticSpec::default()
            }
            .generate()?
        }
    };
    Ok(Arc::new(data))
}

fn session_config(args: &TrainArgs) -> SessionConfig {
    SessionConfig {
        hidden: [args.h1, args.h2],
        hyperparams: Hyperparams {
            learning_rate: args.lr,
            momentum: args.momentum,
            batch_size: args.batch,
        },
        momentum_mode: if args.paper_literal_momentum {
            MomentumMode::PreviousGradient
        } else {
            MomentumMode::Standard
        },
        seed: args.seed,
        sonification: args.sonify,
        ..SessionConfig::default()
    }
}

fn train(args: TrainArgs) -> Result<ExitCode> {
    if !(args.secs_per_epoch.is_finite() && args.secs_per_epoch > 0.0) {
        bail!("--secs-per-epoch must be positive");
    }
    let data = load_data(&args)?;
    let script: Vec<ScriptedCommand> = match &args.script {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading script {}", path.display()))?;
            parse_script(&text).with_context(|| format!("parsing script {}", path.display()))?
        }
        None => Vec::new(),
    };
    let mut session = Session::new(data, session_config(&args)).context("creating session")?;

    if let Some(addr) = &args.serve {
        let config = ServerConfig {
            live: LiveConfig {
                tick_hz: args.tick_hz,
                epoch_budget: Some(args.epochs),
            },
            ..ServerConfig::default()
        };
        let server = serve(session, addr.as_str(), config).with_context(|| format!("serving on {addr}"))?;
        println!("listening on {}", server.local_addr());
        std::io::stdout().flush()?;
        let session = server.join();
        info!("session ended after {} epochs", session.epochs_done());
        return Ok(ExitCode::SUCCESS);
    }

    let initial = session.history()[0];
    println!(
        "epoch 0: val_accuracy={:.4} val_loss={:.4}",
        initial.val_accuracy, initial.val_loss
    );
    let mut failures = 0usize;
    run_script(&mut session, &script, args.epochs, |event| match event {
        Event::EpochCompleted { metrics, .. } => println!(
            "epoch {}: val_accuracy={:.4} val_loss={:.4}",
            metrics.epoch, metrics.val_accuracy, metrics.val_loss
        ),
        Event::Error { code, text } => {
            failures += 1;
            warn!("command rejected ({code}): {text}");
        }
        Event::StateChanged(state) => info!("state {}", state.as_str()),
        _ => {}
    });
    if failures > 0 {
        warn!("{failures} scripted command(s) were rejected");
    }
    if let Some(path) = &args.trace {
        write_trace(path, session.trace()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.wav {
        write_metrics_wav(&session, args.secs_per_epoch, path)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn write_metrics_wav(session: &Session, secs_per_epoch: f64, path: &Path) -> Result<()> {
    let history = session.history();
    let (left, right) = session.sonifier().metrics_timeline(history, secs_per_epoch)?;
    let duration = history.len() as f64 * secs_per_epoch;
    let frame = render(&left, &right, SAMPLE_RATE, duration)?;
    write_wav(path, &frame).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn replay(args: ReplayArgs) -> Result<ExitCode> {
    let [a, b] = args.trace.as_slice() else {
        let err = Cli::command().error(
            clap::error::ErrorKind::WrongNumberOfValues,
            format!("replay needs exactly two --trace files, got {}", args.trace.len()),
        );
        let _ = err.print();
        return Ok(ExitCode::from(2));
    };
    let ta = read_trace(a).with_context(|| format!("reading {}", a.display()))?;
    let tb = read_trace(b).with_context(|| format!("reading {}", b.display()))?;
    match compare_traces(&ta, &tb, args.tolerance) {
        Ok(()) => {
            println!("traces match ({} rows)", ta.len());
            Ok(ExitCode::SUCCESS)
        }
        Err(diff) => {
            println!("traces differ: {diff}");
            Ok(ExitCode::from(1))
        }
    }
}
