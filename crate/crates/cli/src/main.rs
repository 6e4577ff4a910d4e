use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polycheck_core::codec;
use polycheck_core::gc::RoundError;
use polycheck_core::pipeline::with_budget;
use polycheck_core::workload::{self, AnomalyKind, Benchmark, WorkloadConfig};
use polycheck_core::{
    verify, History, Outcome, PruneOptions, Rejection, RoundConfig, RoundOutcome, RoundReport, RoundVerifier,
    Transaction, VerifyOptions,
};
use serde_json::json;

const EXIT_REJECT: u8 = 1;
const EXIT_BUDGET: u8 = 2;
const EXIT_DATA: u8 = 65;
const EXIT_USAGE: u8 = 64;
const EXIT_INTERNAL: u8 = 70;
const EXIT_IO: u8 = 74;

/// Checks transactional key-value histories for serializability.
#[derive(Parser)]
#[command(name = "polycheck", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded workload history.
    Gen(GenArgs),
    /// Verify a complete history in one shot.
    Verify(VerifyArgs),
    /// Verify a history streamed in rounds, deleting transactions in between.
    VerifyRounds(RoundsArgs),
    /// Report encoding sizes for a history.
    Stats(StatsArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "rmw-only")]
    benchmark: Benchmark,
    #[arg(long, default_value_t = 4)]
    sessions: u32,
    /// Normal transactions in total, split evenly over sessions.
    #[arg(long, default_value_t = 100)]
    txns: u64,
    #[arg(long, default_value_t = 100)]
    keys: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    ops: u32,
    /// Fence after this many normal transactions per session; 0 disables.
    #[arg(long, default_value_t = 20)]
    fence_every: u64,
    #[arg(long, default_value_t = 0.0)]
    read_fences: f64,
    #[arg(long)]
    inject: Option<AnomalyKind>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct CheckArgs {
    /// Check plain serializability instead of strong session serializability.
    #[arg(long)]
    no_session_order: bool,
    #[arg(long)]
    no_prune: bool,
    #[arg(long, default_value_t = PruneOptions::default().max_iters)]
    max_prune_iters: usize,
    #[arg(long, env = "POLYCHECK_TIME_BUDGET_SECS")]
    time_budget: Option<f64>,
}

impl CheckArgs {
    fn options(&self) -> Result<VerifyOptions, CliError> {
        if let Some(b) = self.time_budget {
            if !b.is_finite() || b < 0.0 {
                return Err(CliError::Usage(format!("invalid time budget {b}")));
            }
        }
        let opts = VerifyOptions {
            session_order: !self.no_session_order,
            prune: !self.no_prune,
            prune_opts: PruneOptions {
                max_iters: self.max_prune_iters,
                ..PruneOptions::default()
            },
            ..VerifyOptions::default()
        };
        Ok(with_budget(opts, self.time_budget))
    }
}

#[derive(Args)]
struct VerifyArgs {
    file: PathBuf,
    #[command(flatten)]
    check: CheckArgs,
    /// Write the solver instance handed to the search.
    #[arg(long)]
    export_instance: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RoundsArgs {
    /// Fragment files, read in filename order.
    #[arg(long)]
    dir: PathBuf,
    /// Transactions per round.
    #[arg(long)]
    round_size: usize,
    /// Resume from and save to this file after every accepted round.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    no_gc: bool,
    #[command(flatten)]
    check: CheckArgs,
}

#[derive(Args)]
struct StatsArgs {
    file: PathBuf,
    #[command(flatten)]
    check: CheckArgs,
    /// Also stream the history in rounds of this size and report the live set.
    #[arg(long)]
    round_size: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Io(PathBuf, io::Error),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Io(..) => EXIT_IO,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Io(path.to_path_buf(), e)
}

fn read_history(path: &Path) -> Result<History, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    codec::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn gen(args: GenArgs) -> Result<u8, CliError> {
    if args.sessions == 0 {
        return Err(CliError::Usage("--sessions must be positive".into()));
    }
    let cfg = WorkloadConfig {
        benchmark: args.benchmark,
        num_sessions: args.sessions,
        txns_per_session: args.txns.div_ceil(args.sessions as u64),
        keys: args.keys,
        ops_per_txn: args.ops,
        fence_every: args.fence_every,
        read_fence_fraction: args.read_fences,
        seed: args.seed,
    };
    let (h, order) = workload::generate_ordered(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut lines: Vec<Transaction> = order.iter().map(|id| h.get(*id).unwrap().clone()).collect();
    if let Some(kind) = args.inject {
        let inj = workload::inject(&h, kind, args.seed).map_err(|e| CliError::Data(e.to_string()))?;
        for l in &inj.log {
            eprintln!("{l}");
        }
        lines.extend(inj.added);
    }
    let file = fs::File::create(&args.out).map_err(io_err(&args.out))?;
    let mut w = BufWriter::new(file);
    for t in &lines {
        writeln!(w, "{}", codec::format_txn(t)).map_err(io_err(&args.out))?;
    }
    w.flush().map_err(io_err(&args.out))?;
    Ok(0)
}

fn rejection_json(r: &Rejection) -> serde_json::Value {
    let blamed: Vec<u32> = match r {
        Rejection::Unsatisfiable { blamed, .. } => blamed.iter().map(|c| c.0).collect(),
        _ => Vec::new(),
    };
    json!({
        "kind": r.kind(),
        "cycles": r.cycles(),
        "blamed": blamed,
        "detail": r,
    })
}

fn verify_cmd(args: VerifyArgs) -> Result<u8, CliError> {
    let opts = args.check.options()?;
    let h = read_history(&args.file)?;
    let report = verify(&h, &opts);
    if let Some(path) = &args.export_instance {
        match &report.encoding {
            Some(enc) => {
                let f = fs::File::create(path).map_err(io_err(path))?;
                let mut w = BufWriter::new(f);
                enc.instance.export(&mut w).map_err(io_err(path))?;
                w.flush().map_err(io_err(path))?;
            }
            None => eprintln!("no solver instance to export: rejected while building the graph"),
        }
    }
    let (code, verdict) = match &report.outcome {
        Outcome::Accept { .. } => (0, "accept"),
        Outcome::Reject(_) => (EXIT_REJECT, "reject"),
        Outcome::BudgetExceeded => (EXIT_BUDGET, "budget-exceeded"),
        Outcome::Invalid(e) => return Err(CliError::Data(format!("{}: {e}", args.file.display()))),
        Outcome::Internal(e) => return Err(CliError::Internal(e.to_string())),
    };
    let out = io::stdout();
    let mut out = out.lock();
    let res = if args.json {
        let mut v = json!({ "verdict": verdict, "stats": report.stats });
        if let Outcome::Accept { schedule } = &report.outcome {
            v["schedule"] = json!(schedule);
        }
        if let Some(r) = report.outcome.rejection() {
            v["rejection"] = rejection_json(r);
        }
        writeln!(out, "{v}")
    } else {
        match report.outcome.rejection() {
            Some(r) => writeln!(out, "reject {}\n{r}", r.kind()),
            None => writeln!(out, "{verdict}"),
        }
    };
    res.map_err(io_err(Path::new("<stdout>")))?;
    Ok(code)
}

fn fragment_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn save_checkpoint(v: &RoundVerifier, path: &Path) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    let f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(f);
    v.save_checkpoint(&mut w).map_err(io_err(&tmp))?;
    w.flush().map_err(io_err(&tmp))?;
    drop(w);
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn round_error(e: RoundError) -> CliError {
    match e {
        RoundError::Io(e) => CliError::Io(PathBuf::from("<checkpoint>"), e),
        RoundError::Internal(e) => CliError::Internal(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

/// Feeds `txns` in rounds of `round_size`, calling `on_round` after each.
fn stream(
    v: &mut RoundVerifier,
    txns: Vec<Transaction>,
    round_size: usize,
    mut on_round: impl FnMut(&RoundVerifier, &RoundReport) -> Result<(), CliError>,
) -> Result<RoundOutcome, CliError> {
    let mut pending = txns.into_iter().peekable();
    while pending.peek().is_some() {
        let chunk: Vec<Transaction> = pending.by_ref().take(round_size).collect();
        let frag = History::from_transactions(chunk).map_err(|e| CliError::Data(e.to_string()))?;
        let r = v.feed(frag).map_err(round_error)?;
        on_round(v, &r)?;
        if r.outcome != RoundOutcome::Accept {
            return Ok(r.outcome);
        }
    }
    if let Some(r) = v.finish() {
        on_round(v, &r)?;
        return Ok(r.outcome);
    }
    Ok(RoundOutcome::Accept)
}

fn verify_rounds_cmd(args: RoundsArgs) -> Result<u8, CliError> {
    if args.round_size == 0 {
        return Err(CliError::Usage("--round-size must be positive".into()));
    }
    let config = RoundConfig {
        verify: args.check.options()?,
        gc: !args.no_gc,
        ..RoundConfig::default()
    };
    let mut v = match &args.checkpoint {
        Some(p) if p.exists() => {
            let f = fs::File::open(p).map_err(io_err(p))?;
            RoundVerifier::load_checkpoint(config, BufReader::new(f)).map_err(|e| match e {
                RoundError::Io(e) => CliError::Io(p.clone(), e),
                other => CliError::Data(format!("{}: {other}", p.display())),
            })?
        }
        _ => RoundVerifier::new(config),
    };
    let mut txns = Vec::new();
    for path in fragment_files(&args.dir)? {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let records = codec::parse_records(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        txns.extend(records.into_iter().filter(|t| !v.knows(t.id)));
    }
    let out = io::stdout();
    let outcome = stream(&mut v, txns, args.round_size, |v, r| {
        writeln!(out.lock(), "{}", r.line()).map_err(io_err(Path::new("<stdout>")))?;
        match (&args.checkpoint, &r.outcome) {
            (Some(p), RoundOutcome::Accept) => save_checkpoint(v, p),
            _ => Ok(()),
        }
    })?;
    Ok(match outcome {
        RoundOutcome::Accept => 0,
        RoundOutcome::Reject(r) => {
            writeln!(out.lock(), "{r}").map_err(io_err(Path::new("<stdout>")))?;
            EXIT_REJECT
        }
        RoundOutcome::BudgetExceeded => EXIT_BUDGET,
    })
}

fn stats_cmd(args: StatsArgs) -> Result<u8, CliError> {
    let opts = args.check.options()?;
    let h = read_history(&args.file)?;
    let report = verify(&h, &opts);
    let s = &report.stats;
    let verdict = match &report.outcome {
        Outcome::Accept { .. } => "accept".to_string(),
        Outcome::Reject(r) => format!("reject {}", r.kind()),
        Outcome::BudgetExceeded => "budget-exceeded".to_string(),
        Outcome::Invalid(e) => return Err(CliError::Data(format!("{}: {e}", args.file.display()))),
        Outcome::Internal(e) => return Err(CliError::Internal(e.to_string())),
    };
    let histogram: Vec<String> = s.sizes.chains_per_key.iter().map(|(c, k)| format!("{c}:{k}")).collect();
    let mut lines = vec![
        format!("txns: {}", s.txns),
        format!("sessions: {}", h.sessions().len()),
        format!("known_edges: {}", s.known_edges),
        format!("constraints_brute_force: {}", s.sizes.brute_force),
        format!("constraints_after_combine: {}", s.sizes.after_combine),
        format!("constraints_after_coalesce: {}", s.sizes.after_coalesce),
        format!("constraints_after_prune: {}", s.constraints_after_prune),
        format!("prune_iterations: {}", s.prune.iterations),
        format!("chains_per_key: {}", histogram.join(" ")),
    ];
    match args.round_size {
        Some(0) => return Err(CliError::Usage("--round-size must be positive".into())),
        Some(n) => {
            let mut v = RoundVerifier::new(RoundConfig {
                verify: opts,
                ..RoundConfig::default()
            });
            let txns: Vec<Transaction> = h.transactions().cloned().collect();
            let mut max_live = 0;
            stream(&mut v, txns, n, |_, r| {
                max_live = max_live.max(r.live);
                Ok(())
            })?;
            lines.push(format!("live_set: {}", v.live()));
            lines.push(format!("live_set_max: {max_live}"));
        }
        None => lines.push(format!("live_set: {}", h.len())),
    }
    lines.push(format!("verdict: {verdict}"));
    let out = io::stdout();
    let mut out = out.lock();
    for l in lines {
        writeln!(out, "{l}").map_err(io_err(Path::new("<stdout>")))?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Verify(a) => verify_cmd(a),
        Command::VerifyRounds(a) => verify_rounds_cmd(a),
        Command::Stats(a) => stats_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("polycheck: {e}");
            ExitCode::from(e.code())
        }
    }
}
