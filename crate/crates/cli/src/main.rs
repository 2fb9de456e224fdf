//! `eqpalg`: parse, run, explore and check eQPAlg programs.
//!
//! Data goes to stdout and diagnostics to stderr. Exit codes:
//! 0 success, 1 parse or well-formedness error, 2 I/O or usage error,
//! 3 deadlock, 4 step budget exhausted, 5 runtime error, 6 failed check.

use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use eqpalg::ast::SourceFile;
use eqpalg::engine::{self, Engine, SchedulerPolicy, StateGraph, Trace, TraceEnd};
use eqpalg::parser::{parse, pretty_print, ParseError};
use eqpalg::protocol::{self, Mutation, ProtocolError, TeleportCheck};

const EXIT_PARSE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_DEADLOCK: u8 = 3;
const EXIT_BUDGET: u8 = 4;
const EXIT_RUNTIME: u8 = 5;
const EXIT_CHECK: u8 = 6;

#[derive(Parser)]
#[command(
    name = "eqpalg",
    version,
    about = "Interpreter for the eQPAlg quantum process algebra"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Policy::Det)]
    policy: Policy,
    /// Step budget for `run`; also the exhaustive depth bound.
    #[arg(long, global = true, default_value_t = 10_000)]
    max_steps: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a program.
    Parse { path: PathBuf },
    /// Run a program's main process and print the trace.
    Run { path: PathBuf },
    /// Explore the configurations reachable from main.
    Graph {
        path: PathBuf,
        /// Maximum number of steps from the initial configuration.
        #[arg(long, default_value_t = 64)]
        depth: usize,
        #[arg(long, default_value_t = 10_000)]
        max_nodes: usize,
        /// Print Graphviz instead of the summary.
        #[arg(long)]
        dot: bool,
    },
    /// Teleport random states through every branch and check the specification.
    TeleportCheck {
        /// Teleportation program; the bundled one by default.
        path: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Break the protocol on purpose: drop-x, drop-z, drop-first-cbit,
        /// drop-second-cbit or send-qubit.
        #[arg(long, value_parser = parse_mutation)]
        mutate: Option<Mutation>,
    },
    /// Print a program in canonical layout.
    Fmt { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Det,
    Random,
    Exhaustive,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Human,
    Json,
}

fn parse_mutation(s: &str) -> Result<Mutation, String> {
    s.parse().map_err(|e: ProtocolError| e.to_string())
}

struct Out {
    format: Format,
    color: bool,
}

impl Out {
    fn paint(&self, text: &str, code: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }

    fn json<T: Serialize>(&self, value: &T) {
        println!(
            "{}",
            serde_json::to_string_pretty(value).expect("output values serialize")
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Out {
        format: cli.format,
        color: std::env::var("EQPALG_COLOR").map_or(true, |v| v != "0") && std::io::stdout().is_terminal(),
    };
    let policy = match cli.policy {
        Policy::Det => SchedulerPolicy::Deterministic,
        Policy::Random => SchedulerPolicy::Random,
        Policy::Exhaustive => SchedulerPolicy::Exhaustive {
            bound: cli.max_steps.max(1),
        },
    };
    let code = match cli.command {
        Command::Parse { path } => cmd_parse(&path, &out),
        Command::Run { path } => cmd_run(&path, policy, cli.max_steps, cli.seed, &out),
        Command::Graph {
            path,
            depth,
            max_nodes,
            dot,
        } => cmd_graph(&path, depth, max_nodes, dot, &out),
        Command::TeleportCheck { path, trials, mutate } => {
            cmd_teleport_check(path.as_deref(), trials, cli.seed, mutate, &out)
        }
        Command::Fmt { path } => cmd_fmt(&path),
    };
    ExitCode::from(code)
}

fn read(path: &Path) -> Result<String, u8> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_IO
    })
}

#[derive(Serialize)]
struct ParseFailure<'a> {
    ok: bool,
    line: usize,
    column: usize,
    message: &'a str,
    expected: &'a [String],
}

fn load(path: &Path, out: &Out) -> Result<SourceFile, u8> {
    let src = read(path)?;
    parse(&src).map_err(|e: ParseError| {
        eprintln!("{}:{e}", path.display());
        if out.format == Format::Json {
            out.json(&ParseFailure {
                ok: false,
                line: e.line,
                column: e.column,
                message: &e.message,
                expected: &e.expected,
            });
        }
        EXIT_PARSE
    })
}

#[derive(Serialize)]
struct Summary {
    ok: bool,
    definitions: Vec<DefSummary>,
    main: Option<String>,
    spec: Option<String>,
}

#[derive(Serialize)]
struct DefSummary {
    name: String,
    params: Vec<String>,
    depth: usize,
}

fn cmd_parse(path: &Path, out: &Out) -> u8 {
    let file = match load(path, out) {
        Ok(f) => f,
        Err(code) => return code,
    };
    let summary = Summary {
        ok: true,
        definitions: file
            .defs
            .iter()
            .map(|d| DefSummary {
                name: d.name.clone(),
                params: d.params.iter().map(|p| format!("{}: {}", p.name, p.vtype)).collect(),
                depth: d.body.depth(),
            })
            .collect(),
        main: file.main.clone(),
        spec: file.spec.as_ref().map(|s| s.name.clone()),
    };
    match out.format {
        Format::Json => out.json(&summary),
        Format::Human => {
            println!("{} {}", out.paint("ok", "32"), path.display());
            for d in &summary.definitions {
                println!("  {}({})  depth {}", d.name, d.params.join(", "), d.depth);
            }
            if let Some(m) = &summary.main {
                println!("  main {m}");
            }
            if let Some(s) = &summary.spec {
                println!("  spec {s}");
            }
        }
    }
    0
}

fn end_code(end: TraceEnd) -> u8 {
    match end {
        TraceEnd::Terminated => 0,
        TraceEnd::Deadlocked => EXIT_DEADLOCK,
        TraceEnd::Budget => EXIT_BUDGET,
        TraceEnd::Error => EXIT_RUNTIME,
    }
}

fn print_trace(trace: &Trace, out: &Out) {
    println!("   0. {}", trace.initial);
    for (i, s) in trace.steps.iter().enumerate() {
        println!("  --{}-->", s.label);
        println!("  {:>2}. {}", i + 1, s.config);
    }
    let end = trace.end.name();
    let status = match trace.end {
        TraceEnd::Terminated => out.paint(end, "32"),
        TraceEnd::Deadlocked | TraceEnd::Budget => out.paint(end, "33"),
        TraceEnd::Error => out.paint(end, "31"),
    };
    println!("{status} after {} steps", trace.steps.len());
}

fn cmd_run(path: &Path, policy: SchedulerPolicy, max_steps: usize, seed: u64, out: &Out) -> u8 {
    let file = match load(path, out) {
        Ok(f) => f,
        Err(code) => return code,
    };
    match engine::run(&file, policy, max_steps, seed) {
        Ok(trace) => {
            match out.format {
                Format::Json => println!("{}", trace.to_json()),
                Format::Human => print_trace(&trace, out),
            }
            end_code(trace.end)
        }
        Err(e) => {
            eprintln!("error: {e}");
            match (&e.partial, out.format) {
                (Some(_), Format::Json) => out.json(&e.document()),
                (Some(t), Format::Human) => print_trace(t, out),
                (None, _) => {}
            }
            EXIT_RUNTIME
        }
    }
}

#[derive(Serialize)]
struct GraphSummary {
    nodes: usize,
    edges: Vec<EdgeSummary>,
    terminated: Vec<usize>,
    deadlocked: Vec<usize>,
    truncated: bool,
}

#[derive(Serialize)]
struct EdgeSummary {
    from: usize,
    to: usize,
    label: String,
    rule: &'static str,
}

fn cmd_graph(path: &Path, depth: usize, max_nodes: usize, dot: bool, out: &Out) -> u8 {
    let file = match load(path, out) {
        Ok(f) => f,
        Err(code) => return code,
    };
    let Some(main) = file.main.as_deref() else {
        eprintln!("error: {} has no main process", path.display());
        return EXIT_PARSE;
    };
    let engine = Engine::new(&file);
    let graph: StateGraph = match engine
        .initial(main)
        .and_then(|c| engine.reachable_graph(c, depth, max_nodes))
    {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    if graph.truncated {
        eprintln!("warning: exploration stopped at depth {depth} or {max_nodes} nodes; the graph is partial");
    }
    if dot {
        print!("{}", graph.to_dot());
        return 0;
    }
    let summary = GraphSummary {
        nodes: graph.nodes.len(),
        edges: graph
            .edges
            .iter()
            .map(|e| EdgeSummary {
                from: e.from,
                to: e.to,
                label: e.label.to_string(),
                rule: e.label.rule(),
            })
            .collect(),
        terminated: graph.terminated(),
        deadlocked: if graph.truncated { vec![] } else { graph.deadlocked() },
        truncated: graph.truncated,
    };
    match out.format {
        Format::Json => out.json(&summary),
        Format::Human => {
            println!("{} configurations, {} transitions", summary.nodes, summary.edges.len());
            for e in &summary.edges {
                println!("  {} --{}--> {}", e.from, e.label, e.to);
            }
            println!("terminated: {:?}", summary.terminated);
            if !graph.truncated {
                println!("deadlocked: {:?}", summary.deadlocked);
            }
        }
    }
    0
}

fn protocol_code(e: &ProtocolError) -> u8 {
    match e {
        ProtocolError::Parse(_) | ProtocolError::MalformedSpec(_) | ProtocolError::Unsupported(_) => EXIT_PARSE,
        ProtocolError::UnknownMutation(_) => EXIT_IO,
        _ => EXIT_RUNTIME,
    }
}

fn cmd_teleport_check(path: Option<&Path>, trials: usize, seed: u64, mutation: Option<Mutation>, out: &Out) -> u8 {
    let source = match path {
        Some(p) => match read(p) {
            Ok(s) => s,
            Err(code) => return code,
        },
        None => protocol::TELEPORT_SOURCE.to_string(),
    };
    if trials == 0 {
        eprintln!("warning: no trials requested; the check passes vacuously");
    }
    let check: TeleportCheck = match protocol::teleport_check_source(&source, trials, seed, mutation) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return protocol_code(&e);
        }
    };
    match out.format {
        Format::Json => out.json(&check),
        Format::Human => {
            println!("{} trials, seed {}, {} runs", check.trials, check.seed, check.runs);
            if let Some(m) = &check.mutation {
                println!("mutation {m}");
            }
            println!("branch  min fidelity");
            for (branch, f) in &check.min_fidelity {
                println!("{branch:<6}  {f:.12}");
            }
            for f in &check.failures {
                let amps: Vec<String> = f
                    .input_state
                    .amplitudes()
                    .iter()
                    .map(|z| format!("{:.6}{:+.6}i", z.re, z.im))
                    .collect();
                println!(
                    "{} trial {} branch {} input ({}): {}",
                    out.paint("FAIL", "31"),
                    f.trial,
                    f.branch,
                    amps.join(", "),
                    f.reasons.join("; ")
                );
            }
            if check.passed() {
                println!("{}", out.paint("PASS", "32"));
            }
        }
    }
    if check.passed() {
        0
    } else {
        eprintln!("teleport-check failed: {} failing runs", check.failures.len());
        EXIT_CHECK
    }
}

fn cmd_fmt(path: &Path) -> u8 {
    let src = match read(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match parse(&src) {
        Ok(file) => {
            print!("{}", pretty_print(&file));
            0
        }
        Err(e) => {
            eprintln!("{}:{e}", path.display());
            EXIT_PARSE
        }
    }
}
