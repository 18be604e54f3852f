use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use search_assist::analytics::{
    frequency_timeseries, topk_per_interval, write_churn_csv, write_freq_csv, Granularity,
};
use search_assist::background::run_background;
use search_assist::engine::Engine;
use search_assist::model::{EngineConfig, Query};
use search_assist::serving::{start_server, ServerConfig};
use search_assist::snapshot::Profile;
use search_assist::streams::{
    load_firehose, load_query_hose, merge_streams, replay, ReplayClock,
};
use search_assist::synth::{gen_synth, write_synth, SynthScenario};

#[derive(Parser)]
#[command(name = "search-assist", version, about = "Related-query suggestion engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay hose files through the engine, publishing periodic snapshots
    Replay(ReplayArgs),
    /// Serve suggestions over HTTP from a snapshot directory
    Serve(ServeArgs),
    /// Long-horizon batch run: slow decay plus pairwise spelling pass
    Background(BackgroundArgs),
    /// Top-k churn between consecutive intervals, written as CSV
    Churn(ChurnArgs),
    /// Normalized per-interval frequencies for tracked queries, as CSV
    Freq(FreqArgs),
    /// Generate synthetic hose files from a scenario description
    Synth(SynthArgs),
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    tweets: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Pace playback at N× real time (omit for as-fast-as-possible)
    #[arg(long, conflicts_with = "fast")]
    speedup: Option<f64>,
    #[arg(long)]
    fast: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 7878)]
    port: u16,
    /// Realtime weight in the realtime/background blend
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BackgroundArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    tweets: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ChurnArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    /// Interval length in minutes
    #[arg(long, default_value_t = 60)]
    interval: i64,
    #[arg(long)]
    out: PathBuf,
    /// Count each term at most once per session per interval
    #[arg(long)]
    dedupe_session: bool,
    /// Rank whole queries instead of individual terms
    #[arg(long)]
    whole_query: bool,
}

#[derive(Args)]
struct FreqArgs {
    #[arg(long)]
    queries: PathBuf,
    /// Comma-separated queries to track
    #[arg(long)]
    track: String,
    /// Interval length in minutes
    #[arg(long, default_value_t = 5)]
    interval: i64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out_prefix: PathBuf,
}

fn usage_err(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn load_config(path: &Option<PathBuf>, profile: Profile) -> Result<EngineConfig, String> {
    let mut cfg = match profile {
        Profile::Realtime => EngineConfig::default(),
        Profile::Background => EngineConfig::background(),
    };
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
        cfg.apply_overrides(&text).map_err(|e| e.to_string())?;
    }
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(errs.join("; "))
    }
}

fn load_events(
    queries: &std::path::Path,
    tweets: &Option<PathBuf>,
    tolerance: i64,
) -> Result<Vec<search_assist::streams::Event>, String> {
    let (qs, bad_q) = load_query_hose(queries).map_err(|e| e.to_string())?;
    if bad_q > 0 {
        eprintln!("warning: skipped {bad_q} malformed query lines");
    }
    let ts = match tweets {
        Some(p) => {
            let (ts, bad_t) = load_firehose(p).map_err(|e| e.to_string())?;
            if bad_t > 0 {
                eprintln!("warning: skipped {bad_t} malformed tweet lines");
            }
            ts
        }
        None => Vec::new(),
    };
    merge_streams(qs, ts, tolerance).map_err(|e| e.to_string())
}

fn cmd_replay(args: ReplayArgs) -> Result<(), String> {
    let cfg = load_config(&args.config, Profile::Realtime)?;
    let events = load_events(&args.queries, &args.tweets, cfg.out_of_order_tolerance_ms)?;
    std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    let clock = match args.speedup {
        Some(x) if x > 0.0 => ReplayClock::paced(x),
        Some(_) => return Err("--speedup must be positive".to_string()),
        None => ReplayClock::fast(),
    };
    let last_ts = events.last().map(|e| e.ts());
    let mut engine = Engine::new(cfg, Profile::Realtime);
    let report =
        replay(&events, clock, &mut engine, Some(&args.out)).map_err(|e| e.to_string())?;
    // Publish the tail of the stream so a fresh directory always has a
    // snapshot covering every event.
    if let Some(ts) = last_ts {
        engine
            .run_ranking_cycle_to(ts, &args.out)
            .map_err(|e| e.to_string())?;
    }
    eprintln!(
        "replayed {} queries, {} tweets, {} rate-limited; {} decay cycles, {} ranking cycles",
        report.queries,
        report.tweets,
        report.rate_limited,
        report.decay_cycles,
        report.ranking_cycles
    );
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<(), String> {
    let mut cfg = load_config(&args.config, Profile::Realtime)?;
    if let Some(mu) = args.mu {
        if !(0.0..=1.0).contains(&mu) {
            return Err("--mu must be in [0, 1]".to_string());
        }
        cfg.interpolation_mu = mu;
    }
    if !args.dir.is_dir() {
        return Err(format!("snapshot directory not found: {}", args.dir.display()));
    }
    let server = start_server(ServerConfig {
        dir: args.dir,
        port: args.port,
        mu: cfg.interpolation_mu,
        top_k: cfg.top_k,
        poll_interval: std::time::Duration::from_secs(60),
    })
    .map_err(|e| e.to_string())?;
    eprintln!("listening on {}", server.addr);
    // Foreground server: run until killed.
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

fn cmd_background(args: BackgroundArgs) -> Result<(), String> {
    let cfg = load_config(&args.config, Profile::Background)?;
    let events = load_events(&args.queries, &args.tweets, cfg.out_of_order_tolerance_ms)?;
    std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    let (path, report) = run_background(&events, cfg, &args.out).map_err(|e| e.to_string())?;
    eprintln!(
        "background pass over {} queries, {} tweets; wrote {}",
        report.queries,
        report.tweets,
        path.display()
    );
    Ok(())
}

fn cmd_churn(args: ChurnArgs) -> Result<(), String> {
    if args.k == 0 {
        return Err("--k must be positive".to_string());
    }
    if args.interval <= 0 {
        return Err("--interval must be positive".to_string());
    }
    let (events, bad) = load_query_hose(&args.queries).map_err(|e| e.to_string())?;
    if bad > 0 {
        eprintln!("warning: skipped {bad} malformed query lines");
    }
    let granularity = if args.whole_query {
        Granularity::WholeQuery
    } else {
        Granularity::Term
    };
    let intervals = topk_per_interval(
        &events,
        args.k,
        args.interval * 60_000,
        granularity,
        args.dedupe_session,
    );
    let mut out = std::fs::File::create(&args.out).map_err(|e| e.to_string())?;
    write_churn_csv(&intervals, &mut out).map_err(|e| e.to_string())?;
    eprintln!("wrote churn for {} intervals to {}", intervals.len(), args.out.display());
    Ok(())
}

fn cmd_freq(args: FreqArgs) -> Result<(), String> {
    if args.interval <= 0 {
        return Err("--interval must be positive".to_string());
    }
    let tracked: Result<Vec<Query>, _> = args
        .track
        .split(',')
        .map(Query::normalize)
        .collect();
    let tracked = tracked.map_err(|_| "--track contains an empty query".to_string())?;
    if tracked.is_empty() {
        return Err("--track must list at least one query".to_string());
    }
    let (events, bad) = load_query_hose(&args.queries).map_err(|e| e.to_string())?;
    if bad > 0 {
        eprintln!("warning: skipped {bad} malformed query lines");
    }
    let rows = frequency_timeseries(&events, &tracked, args.interval * 60_000);
    let mut out = std::fs::File::create(&args.out).map_err(|e| e.to_string())?;
    write_freq_csv(&rows, &mut out).map_err(|e| e.to_string())?;
    eprintln!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), String> {
    let scenario = SynthScenario::load(&args.scenario)?;
    let out = gen_synth(&scenario);
    let (qp, tp) = write_synth(&out, &args.out_prefix).map_err(|e| e.to_string())?;
    eprintln!(
        "wrote {} query events to {} and {} tweets to {}",
        out.query_lines.len(),
        qp.display(),
        out.tweet_lines.len(),
        tp.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are not usage errors.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Replay(a) => cmd_replay(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Background(a) => cmd_background(a),
        Command::Churn(a) => cmd_churn(a),
        Command::Freq(a) => cmd_freq(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => usage_err(&msg),
    }
}
