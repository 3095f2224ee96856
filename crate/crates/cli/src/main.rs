//! `sbasim`: batch runner and single-session tools for sba-core.
//!
//! Exit status: 0 success, 1 partial success (skipped inputs, truncated
//! sessions, replay mismatches), 2 invalid input.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sba_core::batch::{run_batch, RunSpec};
use sba_core::scenario::{
    oscillating_traces, OscillationProfile, SCENARIO_CHUNKS, SCENARIO_KNEE_KBPS, SCENARIO_SEED,
    SCENARIO_TRACES,
};
use sba_core::simulator::{replay_diagnose, Event};
use sba_core::{
    load_manifest, load_trace, run_session, synthesize_manifest, BitrateLadder, PolicyId,
    SaturationProfile, SessionConfig, SessionEventLog,
};

#[derive(Parser)]
#[command(name = "sbasim", version, about = "Trace-driven DASH adaptive-bitrate simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a policy x scenario x trace batch from a TOML run spec.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides the spec's output_dir.
        #[arg(short, long, env = "SBASIM_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(short = 'j', long)]
        parallelism: Option<usize>,
    },
    /// Simulate one session and stream its event log as JSON lines.
    Simulate(SimulateArgs),
    /// Write a synthetic manifest with a saturating SSIM matrix.
    SynthManifest(SynthManifestArgs),
    /// Write seeded oscillating bandwidth traces as CSV files.
    SynthTraces(SynthTracesArgs),
    /// Check manifests, traces, session configs and run specs.
    Validate {
        #[arg(long)]
        manifest: Vec<PathBuf>,
        #[arg(long)]
        trace: Vec<PathBuf>,
        /// Session config (TOML).
        #[arg(long)]
        session: Vec<PathBuf>,
        /// Run spec (TOML).
        #[arg(long)]
        run: Vec<PathBuf>,
    },
    /// Recompute every logged value and decision of a session log.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Session config carrying non-default policy parameters. The
        /// policy, buffer, threshold and loop flag come from the log header.
        #[arg(long)]
        session: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Base session config (TOML); the flags below override it.
    #[arg(long)]
    session: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PolicyId>,
    /// Buffer capacity in seconds.
    #[arg(long)]
    buffer: Option<f64>,
    /// Critical threshold in seconds.
    #[arg(long)]
    critical: Option<f64>,
    /// Hold the last trace sample instead of looping.
    #[arg(long)]
    no_loop: bool,
    /// Also write the session report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SynthManifestArgs {
    #[arg(long, default_value_t = SCENARIO_CHUNKS)]
    chunks: usize,
    #[arg(long, default_value_t = 4.0)]
    chunk_duration: f64,
    /// Comma-separated kbps; defaults to the Netflix ladder.
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<f64>>,
    #[arg(long, default_value_t = SCENARIO_SEED)]
    seed: u64,
    #[arg(long, default_value_t = SCENARIO_KNEE_KBPS)]
    knee: f64,
    #[arg(long, default_value_t = SaturationProfile::default().q_floor)]
    floor: f64,
    #[arg(long, default_value_t = SaturationProfile::default().q_ceiling)]
    ceiling: f64,
    #[arg(long, default_value_t = SaturationProfile::default().per_chunk_spread)]
    spread: f64,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthTracesArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = SCENARIO_TRACES)]
    count: usize,
    #[arg(long, default_value_t = SCENARIO_SEED)]
    seed: u64,
    /// Profile overrides (TOML, OscillationProfile fields).
    #[arg(long)]
    profile: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Outcome {
    Ok,
    Partial,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_run(config: &Path, output_dir: Option<PathBuf>, parallelism: Option<usize>) -> Result<Outcome> {
    let mut spec = RunSpec::load(config)?;
    if let Some(dir) = output_dir {
        // flag and env values are relative to the working directory
        spec.output_dir = std::path::absolute(dir)?;
    }
    if let Some(n) = parallelism {
        spec.parallelism = n;
    }
    let summary = run_batch(&spec)?;
    let table = fs::read_to_string(summary.output_dir.join("table.txt"))?;
    print!("{table}");
    for f in &summary.failures {
        eprintln!("skipped {}: {}", f.input, f.error);
    }
    eprintln!(
        "{} sessions ({} truncated), results in {}",
        summary.sessions.len(),
        summary.truncated_sessions(),
        summary.output_dir.display()
    );
    Ok(if summary.exit_code() == 0 {
        Outcome::Ok
    } else {
        Outcome::Partial
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<Outcome> {
    let mut config = match &args.session {
        Some(p) => SessionConfig::from_toml(&read(p)?)?,
        None => SessionConfig::default(),
    };
    if let Some(p) = args.policy {
        config.policy = p;
    }
    if let Some(b) = args.buffer {
        config.buffer_capacity_s = b;
    }
    if let Some(c) = args.critical {
        config.critical_threshold_s = c;
    }
    if args.no_loop {
        config.loop_trace = false;
    }
    let manifest = load_manifest(&args.manifest)?;
    let trace = load_trace(&args.trace)?;
    let outcome = run_session(&manifest, &trace, &config)?;
    let mut out = BufWriter::new(io::stdout().lock());
    outcome.log.write_jsonl(&mut out)?;
    out.flush()?;
    let r = &outcome.report;
    if let Some(path) = &args.report {
        write_out(Some(path), &(serde_json::to_string_pretty(r)? + "\n"))?;
    }
    eprintln!(
        "{}: rebuffering {:.3} s, instability {}, ssim {:.4}, bitrate {:.1} kbps",
        r.policy.display_name(),
        r.rebuffering_total,
        r.instability,
        r.mean_ssim,
        r.mean_bitrate
    );
    if r.partial {
        eprintln!("session truncated: the trace cannot deliver the remaining chunks");
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Ok)
}

fn cmd_synth_manifest(args: SynthManifestArgs) -> Result<Outcome> {
    let ladder = match args.ladder {
        Some(levels) => BitrateLadder::new(levels)?,
        None => BitrateLadder::netflix(),
    };
    let profile = SaturationProfile {
        q_floor: args.floor,
        q_ceiling: args.ceiling,
        knee_kbps: args.knee,
        jitter_seed: args.seed,
        per_chunk_spread: args.spread,
    };
    let manifest = synthesize_manifest(ladder, args.chunks, args.chunk_duration, &profile)?;
    write_out(args.output.as_deref(), &(manifest.to_json() + "\n"))?;
    Ok(Outcome::Ok)
}

fn cmd_synth_traces(args: SynthTracesArgs) -> Result<Outcome> {
    let profile: OscillationProfile = match &args.profile {
        Some(p) => sba_core::scenario::parse_profile(&read(p)?)?,
        None => OscillationProfile::default(),
    };
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let width = args.count.saturating_sub(1).to_string().len().max(2);
    for (i, trace) in oscillating_traces(&profile, args.seed, args.count).iter().enumerate() {
        let path = args.out_dir.join(format!("trace_{i:0width$}.csv"));
        write_out(Some(&path), &trace.to_csv())?;
    }
    Ok(Outcome::Ok)
}

fn cmd_validate(
    manifests: &[PathBuf],
    traces: &[PathBuf],
    sessions: &[PathBuf],
    runs: &[PathBuf],
) -> Result<Outcome> {
    if manifests.is_empty() && traces.is_empty() && sessions.is_empty() && runs.is_empty() {
        bail!("nothing to validate");
    }
    let mut bad = 0;
    let mut report = |path: &Path, result: Result<String>| match result {
        Ok(summary) => println!("ok      {}  {summary}", path.display()),
        Err(e) => {
            bad += 1;
            println!("invalid {}  {e:#}", path.display());
        }
    };
    for p in manifests {
        report(
            p,
            load_manifest(p)
                .map(|m| format!("{} chunks x {} levels", m.chunk_count(), m.level_count()))
                .map_err(Into::into),
        );
    }
    for p in traces {
        report(
            p,
            load_trace(p)
                .map(|t| format!("{} samples, period {} s", t.samples().len(), t.period()))
                .map_err(Into::into),
        );
    }
    for p in sessions {
        report(p, read(p).and_then(|text| Ok(SessionConfig::from_toml(&text)?)).map(|c| {
            format!("{} BS {} s Lc {} s", c.policy, c.buffer_capacity_s, c.critical_threshold_s)
        }));
    }
    for p in runs {
        let checked = RunSpec::load(p).map_err(anyhow::Error::from).and_then(|spec| {
            let m = spec.load_manifest()?;
            for &s in &spec.scenarios {
                for &policy in &spec.policies {
                    spec.session_config(policy, s).validate(&m)?;
                }
            }
            Ok(format!(
                "{} policies x {} scenarios",
                spec.policies.len(),
                spec.scenarios.len()
            ))
        });
        report(p, checked);
    }
    if bad > 0 {
        bail!("{bad} invalid input(s)");
    }
    Ok(Outcome::Ok)
}

fn cmd_replay(log: &Path, manifest: &Path, session: Option<&Path>) -> Result<Outcome> {
    let file = fs::File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let log = SessionEventLog::read_jsonl(io::BufReader::new(file))?;
    let manifest = load_manifest(manifest)?;
    let mut config = match session {
        Some(p) => SessionConfig::from_toml(&read(p)?)?,
        None => SessionConfig::default(),
    };
    if let Some(Event::SessionStart {
        policy,
        buffer_capacity_s,
        critical_threshold_s,
        trace_looped,
        ..
    }) = log.events.first()
    {
        config.policy = *policy;
        config.buffer_capacity_s = *buffer_capacity_s;
        config.critical_threshold_s = *critical_threshold_s;
        config.loop_trace = *trace_looped;
    }
    let mismatches = replay_diagnose(&log, &manifest, &config)?;
    if mismatches.is_empty() {
        println!("consistent: {} events reproduced", log.events.len());
        return Ok(Outcome::Ok);
    }
    for m in &mismatches {
        println!("{m}");
    }
    println!("{} mismatch(es)", mismatches.len());
    Ok(Outcome::Partial)
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Run {
            config,
            output_dir,
            parallelism,
        } => cmd_run(&config, output_dir, parallelism),
        Command::Simulate(args) => cmd_simulate(args),
        Command::SynthManifest(args) => cmd_synth_manifest(args),
        Command::SynthTraces(args) => cmd_synth_traces(args),
        Command::Validate {
            manifest,
            trace,
            session,
            run,
        } => cmd_validate(&manifest, &trace, &session, &run),
        Command::Replay {
            log,
            manifest,
            session,
        } => cmd_replay(&log, &manifest, session.as_deref()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
