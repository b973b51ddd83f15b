use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use txsym::bench::{bench, Workload};
use txsym::parallel::explore_parallel;
use txsym::stats::{RunStats, SCHEMA};
use txsym::sweep::{mode_name, sweep, to_csv};
use txsym::{dump_paths, parse_inject, run_concrete};
use txsym_core::asm::{assemble, disassemble, AsmErrors};
use txsym_core::engine::{EngineConfig, InjectAt, Mode};
use txsym_core::expr::SymExpr;
use txsym_core::isa::Program;
use txsym_core::manager::{ManagerConfig, Strategy};
use txsym_core::path::AbortCounts;
use txsym_core::report::{ExplorationReport, PathCounts};
use txsym_core::smt;
use txsym_core::solver::Solver;
use txsym_core::txn::StrideConfig;

const EXIT_ASM: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "txsym", version, about = "Symbolic execution with speculative native transactions")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Speculative,
    InterpretAll,
    ConcreteOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SearchArg {
    Dfs,
    Bfs,
    /// Fewest path constraints first.
    Priority,
}

#[derive(Args)]
struct Opts {
    #[arg(long, global = true, value_enum, default_value = "speculative")]
    mode: ModeArg,
    #[arg(long, global = true, default_value_t = 16)]
    stride_max: u32,
    #[arg(long, global = true, default_value_t = 1)]
    stride_min: u32,
    /// Undo log entries a transaction may hold before aborting.
    #[arg(long, global = true, default_value_t = 4096)]
    write_log_cap: usize,
    #[arg(long, global = true, default_value = "0xdead", value_parser = parse_u16)]
    sentinel: u16,
    /// Largest variable group the solver enumerates.
    #[arg(long, global = true, default_value_t = 3)]
    enum_limit: usize,
    #[arg(long, global = true, value_enum, default_value = "dfs")]
    search: SearchArg,
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Paths released at once.
    #[arg(long, global = true, default_value_t = 64)]
    max_states: usize,
    #[arg(long, global = true, default_value_t = 1_000_000)]
    max_forks: u64,
    /// Blocks one path may execute.
    #[arg(long, global = true, default_value_t = 50_000_000)]
    max_blocks: u64,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// `txn=M,block=N`: abort block N of the M-th transaction of each path.
    #[arg(long, global = true, value_parser = parse_inject_arg)]
    inject_abort: Vec<InjectAt>,
    #[arg(long, global = true)]
    stats_out: Option<PathBuf>,
    /// Write every solver query and every path's constraints here.
    #[arg(long, global = true)]
    dump_smt2: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Explore a program and print run statistics.
    Run { file: PathBuf },
    /// Explore a program and print every terminal path.
    Explore { file: PathBuf },
    /// Time against the index of the first symbolic byte of a bignum addition.
    SweepBignum {
        #[arg(long, default_value_t = 51_200)]
        bytes: usize,
        #[arg(long, default_value_t = 5_120)]
        step: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Speculative against interpret-all on fully concrete workloads.
    BenchConcrete {
        #[arg(long, default_value_t = 102_400)]
        bytes: usize,
        #[arg(long, value_enum)]
        workload: Option<WorkloadArg>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
    /// Assemble a program and report diagnostics.
    AsmCheck {
        file: PathBuf,
        /// Print the assembled program.
        #[arg(long)]
        disasm: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum WorkloadArg {
    Bignum,
    Checksum,
}

fn parse_u16(s: &str) -> Result<u16, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u16::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|e| e.to_string())
}

fn parse_inject_arg(s: &str) -> Result<InjectAt, String> {
    parse_inject(s).map_err(|e| e.to_string())
}

impl Opts {
    fn engine(&self) -> anyhow::Result<EngineConfig> {
        let stride = StrideConfig {
            stride_max: self.stride_max,
            stride_min: self.stride_min,
            write_log_capacity: self.write_log_cap,
            ..StrideConfig::default()
        };
        stride.validate().map_err(anyhow::Error::msg)?;
        Ok(EngineConfig {
            mode: match self.mode {
                ModeArg::InterpretAll => Mode::InterpretAll,
                _ => Mode::Speculative,
            },
            stride,
            sentinel: self.sentinel,
            enum_limit: self.enum_limit,
            inject: self.inject_abort.clone(),
            max_blocks_per_path: self.max_blocks,
        })
    }

    fn manager(&self) -> anyhow::Result<ManagerConfig> {
        let m = ManagerConfig {
            strategy: match self.search {
                SearchArg::Dfs => Strategy::Dfs,
                SearchArg::Bfs => Strategy::Bfs,
                SearchArg::Priority => Strategy::Priority(Arc::new(|p| -(p.constraints.assertions().len() as i64))),
            },
            max_live_states: self.max_states,
            max_total_forks: self.max_forks,
            worker_count: self.workers,
        };
        m.validate().map_err(anyhow::Error::msg)?;
        Ok(m)
    }
}

enum Failure {
    Asm(AsmErrors),
    Other(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Other(e.into())
    }
}

fn load(file: &Path) -> Result<Program, Failure> {
    let src = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    assemble(&src).map_err(Failure::Asm)
}

fn write_json<T: Serialize>(path: Option<&Path>, v: &T) -> anyhow::Result<()> {
    let s = serde_json::to_string_pretty(v)?;
    match path {
        Some(p) => std::fs::write(p, s + "\n").with_context(|| format!("writing {}", p.display())),
        None => match writeln!(std::io::stdout().lock(), "{s}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

#[derive(Serialize)]
struct ExploreOutput<'a> {
    schema: u32,
    mode: &'static str,
    #[serde(flatten)]
    report: &'a ExplorationReport,
}

/// Statistics for the raw machine, shaped like the engine's.
fn concrete_stats(prog: &Program, max_blocks: u64) -> anyhow::Result<RunStats> {
    let t = Instant::now();
    let r = run_concrete(prog, max_blocks)?;
    let wall = t.elapsed().as_nanos() as u64;
    let (completed, errored) = if r.result.is_ok() { (1, 0) } else { (0, 1) };
    if let Err(f) = &r.result {
        eprintln!("fault: {f}");
    }
    Ok(RunStats {
        schema: SCHEMA,
        mode: "concrete-only",
        partial: false,
        blocks_native: r.blocks,
        blocks_interpreted: 0,
        blocks_rolled_back: 0,
        blocks_executed: r.blocks,
        txn_commits: 0,
        txn_aborts: AbortCounts::default(),
        retry_txns: 0,
        retry_strides: Vec::new(),
        forks: 0,
        paths: PathCounts { completed, infeasible: 0, errored },
        solver_queries: 0,
        enum_assignments: 0,
        wall_time_ns: wall,
        per_path: Vec::new(),
    })
}

/// Queries are written sorted and deduplicated so the directory does not
/// depend on worker interleaving.
fn explore_cmd(opts: &Opts, file: &Path, print_report: bool) -> Result<u8, Failure> {
    let prog = load(file)?;
    if opts.mode == ModeArg::ConcreteOnly {
        let stats = concrete_stats(&prog, opts.max_blocks)?;
        write_json(None, &stats)?;
        if let Some(p) = &opts.stats_out {
            write_json(Some(p), &stats)?;
        }
        return Ok(if stats.paths.errored > 0 { 1 } else { 0 });
    }
    let ecfg = opts.engine()?;
    let mcfg = opts.manager()?;
    let enum_limit = ecfg.enum_limit;
    let mode = mode_name(ecfg.mode);

    let queries: Mutex<Vec<String>> = Mutex::new(Vec::new());
    let sink = |g: &[SymExpr]| {
        queries.lock().unwrap().push(smt::query(g));
    };
    let t = Instant::now();
    let ex = explore_parallel(&prog, ecfg, mcfg, opts.dump_smt2.as_ref().map(|_| &sink as _));
    let wall = t.elapsed().as_nanos() as u64;

    let report = ex.report(&mut Solver::new(enum_limit));
    let stats = RunStats::from_exploration(mode, &ex, report.paths.clone(), wall);
    if let Err(e) = stats.check_conservation() {
        eprintln!("warning: {e}");
    }
    if let Some(dir) = &opts.dump_smt2 {
        dump_paths(dir, &ex)?;
        let mut qs = queries.into_inner().unwrap();
        qs.sort();
        qs.dedup();
        for (i, q) in qs.iter().enumerate() {
            std::fs::write(dir.join(format!("query-{i:06}.smt2")), q)?;
        }
    }
    if print_report {
        write_json(None, &ExploreOutput { schema: SCHEMA, mode, report: &report })?;
    } else {
        write_json(None, &stats)?;
    }
    if let Some(p) = &opts.stats_out {
        write_json(Some(p), &stats)?;
    }
    if ex.partial {
        eprintln!("exploration cut short by a cap");
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let opts = &cli.opts;
    match cli.cmd {
        Cmd::Run { file } => explore_cmd(opts, &file, false),
        Cmd::Explore { file } => explore_cmd(opts, &file, true),
        Cmd::AsmCheck { file, disasm } => {
            let prog = load(&file)?;
            if disasm {
                print!("{}", disassemble(&prog));
            } else {
                println!("ok: {} blocks, {} instructions", prog.blocks.len(), prog.instr_count());
            }
            Ok(0)
        }
        Cmd::SweepBignum { bytes, step, reps, out } => {
            if opts.mode == ModeArg::ConcreteOnly {
                return Err(anyhow::anyhow!("the sweep runs both symbolic modes; drop --mode concrete-only").into());
            }
            let rows = sweep(bytes, step, reps, opts.seed, &opts.engine()?).map_err(anyhow::Error::msg)?;
            let csv = to_csv(&rows);
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
            if rows.iter().any(|r| r.feasibility_unknown) {
                eprintln!("some constraint sets exceeded the enumeration limit");
            }
            Ok(0)
        }
        Cmd::BenchConcrete { bytes, workload, reps } => {
            let ws = match workload {
                Some(WorkloadArg::Bignum) => vec![Workload::Bignum],
                Some(WorkloadArg::Checksum) => vec![Workload::Checksum],
                None => vec![Workload::Bignum, Workload::Checksum],
            };
            let base = opts.engine()?;
            let mut out = Vec::new();
            for w in ws {
                out.push(bench(w, bytes, opts.seed, reps, &base).map_err(anyhow::Error::msg)?);
            }
            write_json(None, &out)?;
            if let Some(p) = &opts.stats_out {
                write_json(Some(p), &out)?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Asm(errs)) => {
            for e in &errs.0 {
                eprintln!("line {}: {}", e.line, e.message);
            }
            ExitCode::from(EXIT_ASM)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
