use std::ffi::OsString;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use svi_core::{Direction, Method, Objective, SolveError, SolverConfig, TraceRow};

use crate::bench::{
    bench_run, compare_report, direction_name, objective_name, write_csv, BenchOptions, BenchRecord, Variant,
};
use crate::ingest::{load_model, ModelPaths};

/// Exit status for unusable input: bad flags, unreadable or malformed files.
pub const EXIT_INPUT: i32 = 2;
/// Exit status when the solver rejects the query or gives up.
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "svi", version, about = "Reachability queries on Markov chains and MDPs with certified bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Prob,
    Reward,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Vi,
    Ii,
    Svi,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Vi => Method::Vi,
            MethodArg::Ii => Method::Ii,
            MethodArg::Svi => Method::Svi,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one query and print the result line.
    Check(CheckArgs),
    /// Run every query of a manifest and write a CSV.
    Bench(BenchArgs),
    /// Summarize a benchmark CSV (SVI against II).
    Compare {
        csv: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
struct CheckArgs {
    #[arg(long)]
    tra: PathBuf,
    #[arg(long)]
    lab: PathBuf,
    #[arg(long)]
    srew: Option<PathBuf>,
    #[arg(long)]
    trew: Option<PathBuf>,
    /// Label of the goal states.
    #[arg(long)]
    goal: String,
    #[arg(long, value_enum, default_value = "prob")]
    objective: ObjectiveArg,
    #[arg(long, value_enum, default_value = "max")]
    direction: DirectionArg,
    #[arg(long, value_enum, default_value = "svi")]
    method: MethodArg,
    #[arg(long)]
    gauss_seidel: bool,
    #[arg(long)]
    topological: bool,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Lower bound on the values of all states.
    #[arg(long, allow_negative_numbers = true)]
    lower: Option<f64>,
    /// Upper bound on the values of all states.
    #[arg(long, allow_negative_numbers = true)]
    upper: Option<f64>,
    #[arg(long)]
    max_iterations: Option<u64>,
    /// Append a benchmark row for this run to a CSV file.
    #[arg(long, value_name = "CSVPATH")]
    stats: Option<PathBuf>,
    /// Print the bounds of every iteration.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, clap::Args)]
struct BenchArgs {
    manifest: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', value_enum, default_values = ["svi", "ii"])]
    methods: Vec<MethodArg>,
    /// Any of plain, gs, topo, gs+topo.
    #[arg(long, value_delimiter = ',', default_values = ["plain"], value_parser = parse_variant)]
    variants: Vec<Variant>,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant `{s}` (use plain, gs, topo or gs+topo)"))
}

fn fmt_bound(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

fn trace_line(row: &TraceRow) -> String {
    format!(
        "iter={} lower={} upper={} decision={} stay={}",
        row.iteration,
        row.lower,
        row.upper,
        fmt_bound(row.decision),
        fmt_bound(row.stay)
    )
}

fn solver_exit(e: &SolveError) -> i32 {
    match e {
        SolveError::InvalidConfig(_) | SolveError::MissingRewardBounds => EXIT_INPUT,
        _ => EXIT_SOLVER,
    }
}

fn append_stats(path: &PathBuf, record: &BenchRecord) -> io::Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = Vec::new();
    write_csv(std::slice::from_ref(record), &mut buf).map_err(io::Error::other)?;
    let text = String::from_utf8(buf).expect("csv output is UTF-8");
    let body = if fresh { text.as_str() } else { text.split_once('\n').map_or("", |(_, rest)| rest) };
    let mut file = file;
    file.write_all(body.as_bytes())
}

fn run_check(args: CheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let paths = ModelPaths {
        tra: args.tra.clone(),
        lab: args.lab,
        srew: args.srew,
        trew: args.trew,
    };
    let bundle = match load_model(&paths) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let model = &bundle.model;
    let Some(goal) = model.label(&args.goal) else {
        let known: Vec<&str> = model.labels().keys().map(String::as_str).collect();
        let _ = writeln!(err, "error: unknown label `{}` (known: {})", args.goal, known.join(", "));
        return EXIT_INPUT;
    };
    let direction = match args.direction {
        DirectionArg::Max => Direction::Maximize,
        DirectionArg::Min => Direction::Minimize,
    };
    let objective = match args.objective {
        ObjectiveArg::Prob => Objective::Probability,
        ObjectiveArg::Reward => Objective::Reward,
    };
    let mut config = SolverConfig::new(args.method.into(), direction, objective, args.epsilon)
        .with_gauss_seidel(args.gauss_seidel)
        .with_topological(args.topological);
    config.lower = args.lower;
    config.upper = args.upper;
    if let Some(n) = args.max_iterations {
        config.max_iterations = n;
    }

    let mut trace = Vec::new();
    let mut observer = |row: &TraceRow| trace.push(trace_line(row));
    let observer: Option<&mut dyn FnMut(&TraceRow)> = if args.trace { Some(&mut observer) } else { None };
    let outcome = crate::bench::timed_check(model, goal, &config, observer);
    for line in &trace {
        let _ = writeln!(out, "{line}");
    }
    let res = match outcome {
        Ok(res) => res,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return solver_exit(&e);
        }
    };
    if !res.sound {
        let _ = writeln!(
            err,
            "warning: value iteration is unsound; the result carries no error guarantee"
        );
    }
    let _ = writeln!(
        out,
        "result={} bounds=[{},{}] iterations={} time_ms={:.3}",
        res.value, res.lower, res.upper, res.iterations, res.time_ms
    );

    if let Some(path) = &args.stats {
        let name = args.tra.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let record = BenchRecord {
            model: name,
            states: model.num_states(),
            choices: model.num_choices(),
            transitions: model.num_transitions(),
            method: res.method.to_string(),
            gauss_seidel: res.gauss_seidel,
            topological: res.topological,
            direction: direction_name(direction).into(),
            objective: objective_name(objective).into(),
            epsilon: args.epsilon,
            result: res.value,
            lower: res.lower,
            upper: res.upper,
            iterations: res.iterations as i64,
            time_ms: res.time_ms,
        };
        if let Err(e) = append_stats(path, &record) {
            let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
            return EXIT_INPUT;
        }
    }
    0
}

fn run_bench(args: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let options = BenchOptions {
        methods: args.methods.into_iter().map(Method::from).collect(),
        variants: args.variants,
        epsilon: args.epsilon,
        jobs: args.jobs,
    };
    match bench_run(&args.manifest, &args.out, &options) {
        Ok(run) => {
            for f in &run.failures {
                let r = &run.records[f.row];
                let _ = writeln!(
                    err,
                    "row {} ({} {} gs={} topo={}): {}",
                    f.row + 1,
                    r.model,
                    r.method,
                    r.gauss_seidel,
                    r.topological,
                    f.message
                );
            }
            let _ = writeln!(
                out,
                "wrote {} rows ({} failed) to {}",
                run.records.len(),
                run.failures.len(),
                args.out.display()
            );
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

/// Runs the command line `args` (including the program name) and returns
/// the exit status.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match cli.command {
        Command::Check(args) => run_check(args, out, err),
        Command::Bench(args) => run_bench(args, out, err),
        Command::Compare { csv } => match compare_report(&csv) {
            Ok(report) => {
                let _ = write!(out, "{report}");
                0
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                EXIT_INPUT
            }
        },
    }
}
