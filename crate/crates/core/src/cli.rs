//! Command-line entry points.
//!
//! Exit codes: 0 success, 1 a check failed, 2 bad usage or unreadable input.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::blocklace::{read_dump, shared, verify_block, write_dump, Blocklace, Keypair};
use crate::flashpay::audit;
use crate::simnet::village::{self, VillageMode};
use crate::simnet::{first_difference, read_trace, run, write_trace, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gflash", version, about = "Grassroots payments: simulate, audit and inspect")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file and write its trace, blocklace dumps and summary.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Audit a blocklace dump; fails if it holds evidence of a violation.
    Verify {
        dump: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Compare two traces event by event.
    TraceDiff { a: PathBuf, b: PathBuf },
    /// Print the key pair derived from a name, or a fresh one.
    Keygen {
        name: String,
        /// Draw the key from the operating system instead of the name.
        #[arg(long)]
        random: bool,
    },
    /// Every two of `n` villagers exchange `coins` personal coins.
    Village {
        #[arg(long, default_value_t = 11)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        coins: u64,
        #[arg(long, value_enum, default_value_t = Mode::Auto)]
        mode: Mode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Auto,
    Simulated,
    Ledger,
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run {
            scenario,
            out: dir,
            seed,
            horizon,
            quiet,
        } => cmd_run(&scenario, &dir, seed, horizon, quiet, out),
        Command::Verify { dump, quiet } => cmd_verify(&dump, quiet, out),
        Command::TraceDiff { a, b } => cmd_trace_diff(&a, &b, out),
        Command::Keygen { name, random } => cmd_keygen(&name, random, out),
        Command::Village { n, coins, mode } => cmd_village(n, coins, mode, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

pub fn main() -> i32 {
    main_with(std::env::args_os(), &mut io::stdout(), &mut io::stderr())
}

type CmdResult = Result<i32, String>;

fn read_file(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> String + '_ {
    move |e| format!("{}: {e}", path.display())
}

pub fn cmd_run(
    scenario: &Path,
    dir: &Path,
    seed: Option<u64>,
    horizon: Option<u64>,
    quiet: bool,
    out: &mut dyn Write,
) -> CmdResult {
    let text = read_file(scenario)?;
    let mut cfg = ScenarioConfig::from_json(&text)
        .map_err(|e| format!("{}:{e}", scenario.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(h) = horizon {
        cfg.horizon = h;
    }
    let dumps = dir.join("dumps");
    fs::create_dir_all(&dumps).map_err(io_err(&dumps))?;
    let outcome = run(&cfg).map_err(|e| format!("{}:{e}", scenario.display()))?;

    let trace_path = dir.join("trace.jsonl");
    let f = File::create(&trace_path).map_err(io_err(&trace_path))?;
    write_trace(BufWriter::new(f), &outcome.trace).map_err(io_err(&trace_path))?;
    for (spec, node) in cfg.agents.iter().zip(&outcome.nodes) {
        let Some(node) = node else { continue };
        let path = dumps.join(format!("{}.lace", spec.name));
        let f = File::create(&path).map_err(io_err(&path))?;
        write_dump(BufWriter::new(f), node.state().lace().iter().map(|b| &**b))
            .map_err(io_err(&path))?;
    }
    let global = dir.join("global.lace");
    let f = File::create(&global).map_err(io_err(&global))?;
    write_dump(BufWriter::new(f), outcome.global.iter().map(|b| &**b)).map_err(io_err(&global))?;
    let summary = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&outcome.summary).expect("serializable");
    fs::write(&summary, text + "\n").map_err(io_err(&summary))?;

    if !quiet {
        let s = &outcome.summary;
        let _ = writeln!(out, "{} (seed {}): {} ticks, {} events", s.name, s.seed, s.end_tick, outcome.trace.len());
        for a in &s.agents {
            let bal: Vec<String> = a.balances.iter().map(|(c, v)| format!("{c}:{v}")).collect();
            let _ = writeln!(out, "  {:<10} {:?} {}", a.name, a.role, bal.join(" "));
        }
        for v in &s.violations {
            let _ = writeln!(out, "  violation {} by {}", v.kind, v.culprit);
        }
        for c in &s.checks {
            let mark = if c.pass { "ok  " } else { "FAIL" };
            let _ = writeln!(out, "  {mark} {} {}", c.name, c.detail);
        }
        let _ = writeln!(out, "wrote {}", dir.display());
    }
    Ok(if outcome.passed() { EXIT_OK } else { EXIT_FAIL })
}

pub fn cmd_verify(dump: &Path, quiet: bool, out: &mut dyn Write) -> CmdResult {
    let f = File::open(dump).map_err(io_err(dump))?;
    let blocks = read_dump(BufReader::new(f)).map_err(|e| format!("{}: {e}", dump.display()))?;
    for (i, b) in blocks.iter().enumerate() {
        verify_block(b).map_err(|e| format!("{}: record {i}: {e}", dump.display()))?;
    }
    let lace = Blocklace::from_blocks(blocks.into_iter().map(shared))
        .map_err(|e| format!("{}: {e}", dump.display()))?;
    let violations = audit(&lace);
    if !quiet {
        let _ = writeln!(out, "{} blocks, {} violations", lace.len(), violations.len());
        for v in &violations {
            let evidence: Vec<String> = v.evidence().iter().map(|h| h.digest.to_hex()).collect();
            let _ = writeln!(out, "{} culprit {} evidence {}", v.kind(), v.culprit(), evidence.join(" "));
        }
    }
    Ok(if violations.is_empty() { EXIT_OK } else { EXIT_FAIL })
}

pub fn cmd_trace_diff(a: &Path, b: &Path, out: &mut dyn Write) -> CmdResult {
    let load = |p: &Path| -> Result<_, String> {
        let f = File::open(p).map_err(io_err(p))?;
        read_trace(BufReader::new(f)).map_err(|(line, e)| format!("{}:{line}: {e}", p.display()))
    };
    let (ta, tb) = (load(a)?, load(b)?);
    match first_difference(&ta, &tb) {
        None => {
            let _ = writeln!(out, "identical ({} events)", ta.len());
            Ok(EXIT_OK)
        }
        Some(i) => {
            let show = |t: &[crate::simnet::TraceEvent]| {
                t.get(i)
                    .map_or("<end of trace>".to_string(), |e| serde_json::to_string(e).expect("serializable"))
            };
            let _ = writeln!(out, "first difference at event {}", i + 1);
            let _ = writeln!(out, "< {}", show(&ta));
            let _ = writeln!(out, "> {}", show(&tb));
            Ok(EXIT_FAIL)
        }
    }
}

pub fn cmd_keygen(name: &str, random: bool, out: &mut dyn Write) -> CmdResult {
    let keys = if random {
        Keypair::generate(&mut rand::rngs::OsRng)
    } else {
        Keypair::from_label(name)
    };
    let v = json!({
        "name": name,
        "id": keys.id().to_string(),
        "secret": hex::encode(keys.secret_bytes()),
    });
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("serializable"));
    Ok(EXIT_OK)
}

pub fn cmd_village(n: usize, coins: u64, mode: Mode, out: &mut dyn Write) -> CmdResult {
    if n < 2 {
        return Err("a village needs at least two villagers".into());
    }
    let report = match mode {
        Mode::Auto => village::run_village(n, coins),
        Mode::Simulated => village::simulate(n, coins),
        Mode::Ledger => village::ledger(n, coins),
    };
    let expected_credit = coins * (n as u64 - 1);
    let ok = report.conserved
        && report.uniform_credit() == Some(expected_credit)
        && report.total == n as u64 * expected_credit;
    let v = json!({
        "villagers": n,
        "coins": coins,
        "mode": match report.mode { VillageMode::Simulated => "simulated", VillageMode::Ledger => "ledger" },
        "credit_per_villager": report.uniform_credit(),
        "total": report.total,
        "conserved": report.conserved,
    });
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("serializable"));
    Ok(if ok { EXIT_OK } else { EXIT_FAIL })
}
