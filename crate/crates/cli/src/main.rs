use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bulksteal::baseline::ImplKind;
use bulksteal::bench::{self, BenchConfig, BenchRecord, Operation};
use bulksteal::dag::{self, ExplorationReport};
use bulksteal::verify::{run_conservation_dyn, ConservationReport, HarnessError, StressConfig};
use bulksteal::Proportion;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Benchmarks, stress tests and a DAG workload for the bulk work-stealing
/// queue and its baselines.
#[derive(Parser, Debug)]
#[command(name = "bulksteal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Latency microbenchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Conservation stress run: one owner thread against one stealer thread.
    Stress(StressArgs),
    /// Parallel exploration of a random DAG.
    Dag(DagArgs),
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Time push_batch for each batch size.
    Push {
        #[arg(long, value_delimiter = ',', default_value = "1,128,512,1024")]
        batch_sizes: Vec<usize>,
        #[command(flatten)]
        common: BenchArgs,
    },
    /// Time single pops from a pre-filled queue.
    Pop {
        /// Items pushed whenever the queue runs empty.
        #[arg(long, default_value_t = bench::DEFAULT_INITIAL_SIZE)]
        initial_size: usize,
        #[command(flatten)]
        common: BenchArgs,
    },
    /// Time one steal per proportion from a queue refilled to the initial size.
    Steal {
        /// Steal proportions in percent.
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60")]
        proportions: Vec<usize>,
        #[arg(long, default_value_t = bench::DEFAULT_INITIAL_SIZE)]
        initial_size: usize,
        /// Use the optimized steal.
        #[arg(long)]
        optimized: bool,
        /// Run the owner on a second thread, pushing and popping meanwhile.
        #[arg(long)]
        busy_owner: bool,
        #[command(flatten)]
        common: BenchArgs,
    },
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Implementations to measure.
    #[arg(long = "impl", value_delimiter = ',', default_value = "lf,locked,chaselev")]
    implementations: Vec<ImplKind>,
    /// Measured iterations per parameter.
    #[arg(long, default_value_t = bench::DEFAULT_ITERATIONS)]
    iters: usize,
    /// Unmeasured iterations before measuring.
    #[arg(long, default_value_t = bench::DEFAULT_WARMUP)]
    warmup: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write results here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct StressArgs {
    #[arg(long = "impl", default_value = "lf")]
    implementation: ImplKind,
    /// Owner operations.
    #[arg(long, default_value_t = 100_000)]
    ops: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability that an owner operation is a push.
    #[arg(long, default_value_t = 0.5)]
    push_prob: f64,
    /// Largest push batch.
    #[arg(long, default_value_t = 8)]
    batch_max: usize,
    /// Steal proportion, at most 0.5.
    #[arg(long, default_value_t = 0.5)]
    steal_prop: f64,
    /// Share of steals using the optimized variant.
    #[arg(long, default_value_t = 0.5)]
    optimized_share: f64,
    /// JSON report instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct DagArgs {
    /// Graph sizes.
    #[arg(long, value_delimiter = ',', default_value = "250000,2500000")]
    nodes: Vec<usize>,
    /// Mean out-degree.
    #[arg(long, default_value_t = dag::DEFAULT_DEGREE)]
    degree: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker counts, ascending.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    threads: Vec<usize>,
    #[arg(long = "impl", default_value = "lf")]
    implementation: ImplKind,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

enum Failure {
    Config(String),
    Violation(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(cmd) => run_bench(cmd),
        Command::Stress(args) => run_stress(args),
        Command::Dag(args) => run_dag(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("violation: {msg}");
            ExitCode::from(EXIT_VIOLATION)
        }
    }
}

fn run_bench(cmd: BenchCommand) -> Result<(), Failure> {
    let (operation, parameters, initial_size, busy_owner, common) = match cmd {
        BenchCommand::Push { batch_sizes, common } => (Operation::Push, batch_sizes, bench::DEFAULT_INITIAL_SIZE, false, common),
        BenchCommand::Pop { initial_size, common } => (Operation::Pop, Vec::new(), initial_size, false, common),
        BenchCommand::Steal {
            proportions,
            initial_size,
            optimized,
            busy_owner,
            common,
        } => {
            let op = if optimized { Operation::StealOpt } else { Operation::Steal };
            (op, proportions, initial_size, busy_owner, common)
        }
    };
    let flag = match operation {
        Operation::Push => "--batch-sizes/--iters",
        Operation::Pop => "--initial-size/--iters",
        Operation::Steal | Operation::StealOpt => "--proportions/--initial-size/--iters",
    };
    let configs: Vec<BenchConfig> = common
        .implementations
        .iter()
        .map(|&implementation| BenchConfig {
            implementation,
            operation,
            parameters: parameters.clone(),
            initial_size,
            warmup: common.warmup,
            iterations: common.iters,
            seed: common.seed,
            busy_owner,
        })
        .collect();
    for cfg in &configs {
        cfg.validate().map_err(|e| Failure::Config(format!("{flag}: {e}")))?;
    }
    let mut out = open_output(common.out.as_deref())?;
    let mut records: Vec<BenchRecord> = Vec::new();
    for cfg in &configs {
        records.extend(bench::run(cfg).map_err(|e| Failure::Config(e.to_string()))?);
    }
    let written = if common.json {
        bench::write_json(&records, &mut out)
            .map_err(io::Error::from)
            .and_then(|()| writeln!(out))
    } else {
        bench::write_csv_to(&records, &mut out).map_err(io::Error::from)
    };
    finish_output(written, out, common.out.as_deref())
}

fn run_stress(args: StressArgs) -> Result<(), Failure> {
    let steal_prop =
        Proportion::new(args.steal_prop).map_err(|e| Failure::Config(format!("--steal-prop: {e}")))?;
    let cfg = StressConfig {
        ops: args.ops,
        push_prob: args.push_prob,
        batch_max: args.batch_max,
        steal_prop,
        optimized_share: args.optimized_share,
        seed: args.seed,
        ..StressConfig::default()
    };
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let report = match run_conservation_dyn(args.implementation, &cfg) {
        Ok(r) => r,
        Err(HarnessError::Config(e)) => return Err(Failure::Config(e.to_string())),
        Err(e) => return Err(Failure::Violation(e.to_string())),
    };
    let violations = report.violations();
    if args.json {
        #[derive(Serialize)]
        struct Json<'a> {
            #[serde(flatten)]
            report: &'a ConservationReport,
            violations: &'a [String],
        }
        let text = serde_json::to_string_pretty(&Json {
            report: &report,
            violations: &violations,
        })
        .expect("report serializes");
        println!("{text}");
    } else {
        print_stress_text(&report, &violations);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(format!("{} conservation violations", violations.len())))
    }
}

fn print_stress_text(r: &ConservationReport, violations: &[String]) {
    println!("implementation   {}", r.implementation);
    println!("seed             {}", r.seed);
    println!("owner ops        {}", r.owner_ops);
    println!("pushed           {}", r.pushed);
    println!("popped           {}", r.popped);
    println!("stolen           {}", r.stolen);
    println!("residual         {}", r.residual);
    println!(
        "steals           {} attempted, {} succeeded, {} contention, {} empty",
        r.steal_attempts, r.steals_succeeded, r.contention, r.empty
    );
    if violations.is_empty() {
        println!("violations       none");
    } else {
        println!("violations");
        for v in violations {
            println!("  {v}");
        }
    }
}

fn run_dag(args: DagArgs) -> Result<(), Failure> {
    if args.nodes.is_empty() || args.nodes.iter().any(|&n| n == 0 || n > dag::NodeId::MAX as usize) {
        return Err(Failure::Config(format!(
            "--nodes: sizes must be between 1 and {}",
            dag::NodeId::MAX
        )));
    }
    if args.threads.is_empty() || args.threads.contains(&0) || args.threads.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::Config("--threads: counts must be positive and strictly ascending".into()));
    }
    if !(args.degree >= 0.0 && args.degree.is_finite()) {
        return Err(Failure::Config("--degree: must be finite and non-negative".into()));
    }
    let mut out = open_output(args.out.as_deref())?;
    let mut reports: Vec<ExplorationReport> = Vec::new();
    let mut mismatches = Vec::new();
    for &n in &args.nodes {
        let graph = dag::generate_dag(n, args.degree, args.seed).map_err(|e| Failure::Config(format!("--nodes: {e}")))?;
        let reachable = dag::reachable_count(&graph) as u64;
        for &t in &args.threads {
            let r = dag::explore_dyn(args.implementation, &graph, t, Proportion::HALF)
                .map_err(|e| Failure::Config(e.to_string()))?;
            eprintln!(
                "nodes {n} threads {t}: {:.1} ms, visited {} of {reachable} reachable, {} steals",
                r.wall_ms(),
                r.visited,
                r.steals_succeeded
            );
            if r.visited != reachable || r.max_concurrent_steals > 1 {
                mismatches.push(format!(
                    "nodes {n} threads {t}: visited {} of {reachable}, {} concurrent steals on one queue",
                    r.visited, r.max_concurrent_steals
                ));
            }
            reports.push(r);
        }
    }
    let written = if args.json {
        serde_json::to_writer_pretty(&mut out, &reports)
            .map_err(io::Error::from)
            .and_then(|()| writeln!(out))
    } else {
        dag::write_scaling_csv_to(&reports, &mut out).map_err(io::Error::from)
    };
    finish_output(written, out, args.out.as_deref())?;
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(mismatches.join("; ")))
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(f) as Box<dyn Write>)
            .map_err(|e| Failure::Config(format!("--out {}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn finish_output(written: io::Result<()>, mut out: Box<dyn Write>, path: Option<&Path>) -> Result<(), Failure> {
    let name = path.map_or_else(|| "standard output".to_string(), |p| p.display().to_string());
    written
        .and_then(|()| out.flush())
        .map_err(|e| Failure::Config(format!("--out {name}: {e}")))
}
