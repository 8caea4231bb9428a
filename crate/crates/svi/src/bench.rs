//! Benchmark runs over a manifest of models and SVI-vs-II comparison
//! reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use svi_core::{
    check_traced, Direction, Method, Objective, SolveError, SolveResult, SolverConfig, SparseModel, StateSet,
    TraceRow,
};
use thiserror::Error;

use crate::ingest::{load_model, IngestError, ModelPaths};

pub const CSV_HEADER: &str =
    "model,states,choices,transitions,method,gauss_seidel,topological,direction,objective,epsilon,result,lower,upper,iterations,time_ms";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
}

/// Runs `check` under a monotonic wall clock and stores the elapsed time
/// in the result, including results carried by an iteration-limit error.
pub fn timed_check(
    model: &SparseModel,
    goal: &StateSet,
    config: &SolverConfig,
    observer: Option<&mut dyn FnMut(&TraceRow)>,
) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    let out = check_traced(model, goal, config, observer);
    let ms = start.elapsed().as_secs_f64() * 1e3;
    match out {
        Ok(mut res) => {
            res.time_ms = ms;
            Ok(res)
        }
        Err(SolveError::IterationLimit(mut res)) => {
            res.time_ms = ms;
            Err(SolveError::IterationLimit(res))
        }
        Err(e) => Err(e),
    }
}

pub fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Maximize => "max",
        Direction::Minimize => "min",
    }
}

pub fn objective_name(o: Objective) -> &'static str {
    match o {
        Objective::Probability => "prob",
        Objective::Reward => "reward",
    }
}

pub fn parse_direction(s: &str) -> Option<Direction> {
    match s {
        "max" => Some(Direction::Maximize),
        "min" => Some(Direction::Minimize),
        _ => None,
    }
}

pub fn parse_objective(s: &str) -> Option<Objective> {
    match s {
        "prob" => Some(Objective::Probability),
        "reward" => Some(Objective::Reward),
        _ => None,
    }
}

pub fn parse_method(s: &str) -> Option<Method> {
    match s {
        "vi" => Some(Method::Vi),
        "ii" => Some(Method::Ii),
        "svi" => Some(Method::Svi),
        _ => None,
    }
}

/// One row of the benchmark CSV. Failed runs have `iterations = -1` and
/// NaN values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub model: String,
    pub states: usize,
    pub choices: usize,
    pub transitions: usize,
    pub method: String,
    pub gauss_seidel: bool,
    pub topological: bool,
    pub direction: String,
    pub objective: String,
    pub epsilon: f64,
    pub result: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: i64,
    pub time_ms: f64,
}

impl BenchRecord {
    pub fn failed(&self) -> bool {
        self.iterations < 0
    }
}

/// A solver variant: which of the two optimizations are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variant {
    pub gauss_seidel: bool,
    pub topological: bool,
}

impl Variant {
    pub const PLAIN: Variant = Variant {
        gauss_seidel: false,
        topological: false,
    };

    /// Parses `plain`, `gs`, `topo` or `gs+topo`.
    pub fn parse(s: &str) -> Option<Variant> {
        let (gauss_seidel, topological) = match s {
            "plain" => (false, false),
            "gs" => (true, false),
            "topo" => (false, true),
            "gs+topo" | "topo+gs" => (true, true),
            _ => return None,
        };
        Some(Variant {
            gauss_seidel,
            topological,
        })
    }
}

/// One query of a manifest:
/// `<name> <tra> <lab> <goal> <objective> <direction> [key=value ...]`
/// with optional keys `srew`, `trew`, `lower` and `upper`. Paths are
/// relative to the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub paths: ModelPaths,
    pub goal: String,
    pub objective: Objective,
    pub direction: Direction,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>, BenchError> {
    let mut entries = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let line = i + 1;
        let err = |message: String| BenchError::Manifest { line, message };
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 6 {
            return Err(err("expected `<name> <tra> <lab> <goal> <objective> <direction>`".into()));
        }
        let objective = parse_objective(toks[4]).ok_or_else(|| err(format!("unknown objective `{}`", toks[4])))?;
        let direction = parse_direction(toks[5]).ok_or_else(|| err(format!("unknown direction `{}`", toks[5])))?;
        let mut entry = ManifestEntry {
            name: toks[0].to_string(),
            paths: ModelPaths {
                tra: base.join(toks[1]),
                lab: base.join(toks[2]),
                srew: None,
                trew: None,
            },
            goal: toks[3].to_string(),
            objective,
            direction,
            lower: None,
            upper: None,
        };
        for opt in &toks[6..] {
            let (key, value) = opt
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, found `{opt}`")))?;
            let number = || value.parse::<f64>().map_err(|_| err(format!("bad number `{value}`")));
            match key {
                "srew" => entry.paths.srew = Some(base.join(value)),
                "trew" => entry.paths.trew = Some(base.join(value)),
                "lower" => entry.lower = Some(number()?),
                "upper" => entry.upper = Some(number()?),
                _ => return Err(err(format!("unknown option `{key}`"))),
            }
        }
        entries.push(entry);
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub methods: Vec<Method>,
    pub variants: Vec<Variant>,
    pub epsilon: f64,
    /// Worker threads; rows are still written in manifest order.
    pub jobs: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            methods: vec![Method::Svi, Method::Ii],
            variants: vec![Variant::PLAIN],
            epsilon: 1e-6,
            jobs: 1,
        }
    }
}

/// A failed row together with its message.
#[derive(Debug, Clone, PartialEq)]
pub struct RowFailure {
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutput {
    pub records: Vec<BenchRecord>,
    pub failures: Vec<RowFailure>,
}

/// A row and the error that made it fail, if any.
type RowOutcome = (BenchRecord, Option<String>);

fn run_row(
    entry: &ManifestEntry,
    loaded: &Result<SparseModel, String>,
    method: Method,
    variant: Variant,
    epsilon: f64,
) -> RowOutcome {
    let mut rec = BenchRecord {
        model: entry.name.clone(),
        states: 0,
        choices: 0,
        transitions: 0,
        method: method.to_string(),
        gauss_seidel: variant.gauss_seidel,
        topological: variant.topological,
        direction: direction_name(entry.direction).into(),
        objective: objective_name(entry.objective).into(),
        epsilon,
        result: f64::NAN,
        lower: f64::NAN,
        upper: f64::NAN,
        iterations: -1,
        time_ms: f64::NAN,
    };
    let model = match loaded {
        Ok(m) => m,
        Err(e) => return (rec, Some(e.clone())),
    };
    rec.states = model.num_states();
    rec.choices = model.num_choices();
    rec.transitions = model.num_transitions();
    let Some(goal) = model.label(&entry.goal) else {
        return (rec, Some(format!("unknown label `{}`", entry.goal)));
    };
    let mut config = SolverConfig::new(method, entry.direction, entry.objective, epsilon)
        .with_gauss_seidel(variant.gauss_seidel)
        .with_topological(variant.topological);
    config.lower = entry.lower;
    config.upper = entry.upper;
    match timed_check(model, goal, &config, None) {
        Ok(res) => {
            rec.result = res.value;
            rec.lower = res.lower;
            rec.upper = res.upper;
            rec.iterations = res.iterations as i64;
            rec.time_ms = res.time_ms;
            (rec, None)
        }
        Err(e) => (rec, Some(e.to_string())),
    }
}

/// Runs every (entry, method, variant) combination. A row that fails is
/// recorded and the run continues.
pub fn bench_entries(entries: &[ManifestEntry], options: &BenchOptions) -> BenchOutput {
    let models: Vec<Result<SparseModel, String>> = entries
        .iter()
        .map(|e| load_model(&e.paths).map(|b| b.model).map_err(|e: IngestError| e.to_string()))
        .collect();
    let mut jobs = Vec::new();
    for (i, _) in entries.iter().enumerate() {
        for &method in &options.methods {
            for &variant in &options.variants {
                jobs.push((i, method, variant));
            }
        }
    }

    let slots: Vec<Mutex<Option<RowOutcome>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(i, method, variant)) = jobs.get(k) else {
            break;
        };
        let row = run_row(&entries[i], &models[i], method, variant, options.epsilon);
        *slots[k].lock().expect("no panics while holding the lock") = Some(row);
    };
    std::thread::scope(|scope| {
        for _ in 1..options.jobs.max(1) {
            scope.spawn(work);
        }
        work();
    });

    let mut out = BenchOutput {
        records: Vec::with_capacity(jobs.len()),
        failures: Vec::new(),
    };
    for (row, slot) in slots.into_iter().enumerate() {
        let (rec, err) = slot.into_inner().expect("not poisoned").expect("every job ran");
        if let Some(message) = err {
            out.failures.push(RowFailure { row, message });
        }
        out.records.push(rec);
    }
    out
}

pub fn write_csv<W: io::Write>(records: &[BenchRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<BenchRecord>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| BenchError::MalformedCsv(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(BenchError::MalformedCsv(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| BenchError::MalformedCsv(e.to_string())))
        .collect()
}

/// Reads the manifest, runs it and writes the CSV to `out_path`. Returns
/// the run for inspection; failures are also in the CSV as `-1` rows.
pub fn bench_run(manifest: &Path, out_path: &Path, options: &BenchOptions) -> Result<BenchOutput, BenchError> {
    let text = fs::read_to_string(manifest).map_err(|source| BenchError::Io {
        path: manifest.to_path_buf(),
        source,
    })?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&text, base)?;
    let out = bench_entries(&entries, options);
    let io_err = |source| BenchError::Io {
        path: out_path.to_path_buf(),
        source,
    };
    let file = fs::File::create(out_path).map_err(io_err)?;
    write_csv(&out.records, io::BufWriter::new(file)).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(source),
        other => BenchError::MalformedCsv(format!("{other:?}")),
    })?;
    Ok(out)
}

/// SVI and II measurements of one query under one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub model: String,
    pub variant: Variant,
    pub direction: String,
    pub objective: String,
    pub epsilon: f64,
    pub svi: Option<(i64, f64)>,
    pub ii: Option<(i64, f64)>,
}

impl Comparison {
    /// II iterations divided by SVI iterations.
    pub fn iteration_ratio(&self) -> Option<f64> {
        match (self.svi, self.ii) {
            (Some((s, _)), Some((i, _))) if s > 0 => Some(i as f64 / s as f64),
            _ => None,
        }
    }

    /// II time divided by SVI time.
    pub fn time_ratio(&self) -> Option<f64> {
        match (self.svi, self.ii) {
            (Some((_, s)), Some((_, i))) if s > 0.0 => Some(i / s),
            _ => None,
        }
    }
}

/// Groups successful rows by query and variant, in order of first
/// appearance.
pub fn comparisons(records: &[BenchRecord]) -> Vec<Comparison> {
    let mut order: Vec<Comparison> = Vec::new();
    let mut index: BTreeMap<(String, bool, bool, String, String, u64), usize> = BTreeMap::new();
    for r in records {
        let key = (
            r.model.clone(),
            r.gauss_seidel,
            r.topological,
            r.direction.clone(),
            r.objective.clone(),
            r.epsilon.to_bits(),
        );
        let k = *index.entry(key).or_insert_with(|| {
            order.push(Comparison {
                model: r.model.clone(),
                variant: Variant {
                    gauss_seidel: r.gauss_seidel,
                    topological: r.topological,
                },
                direction: r.direction.clone(),
                objective: r.objective.clone(),
                epsilon: r.epsilon,
                svi: None,
                ii: None,
            });
            order.len() - 1
        });
        if r.failed() {
            continue;
        }
        match r.method.as_str() {
            "svi" => order[k].svi = Some((r.iterations, r.time_ms)),
            "ii" => order[k].ii = Some((r.iterations, r.time_ms)),
            _ => {}
        }
    }
    order
}

fn geometric_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v.ln(), n + 1));
    (n > 0).then(|| (sum / n as f64).exp())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into())
}

fn fmt_pair<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into())
}

fn variant_name(v: Variant) -> &'static str {
    match (v.gauss_seidel, v.topological) {
        (false, false) => "plain",
        (true, false) => "gs",
        (false, true) => "topo",
        (true, true) => "gs+topo",
    }
}

/// Text report: one ratio line per query and variant, geometric means,
/// then two scatter sections (time and iterations, SVI first).
pub fn render_report(records: &[BenchRecord]) -> String {
    let cmp = comparisons(records);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:<8} {:<4} {:<6} {:>12} {:>12} {:>10} {:>10}",
        "model", "variant", "dir", "obj", "svi_iters", "ii_iters", "iter_ratio", "time_ratio"
    );
    for c in &cmp {
        let _ = writeln!(
            out,
            "{:<24} {:<8} {:<4} {:<6} {:>12} {:>12} {:>10} {:>10}",
            c.model,
            variant_name(c.variant),
            c.direction,
            c.objective,
            fmt_pair(c.svi.map(|s| s.0)),
            fmt_pair(c.ii.map(|s| s.0)),
            fmt_opt(c.iteration_ratio()),
            fmt_opt(c.time_ratio()),
        );
    }
    let _ = writeln!(
        out,
        "geomean iteration ratio (ii/svi): {}",
        fmt_opt(geometric_mean(cmp.iter().filter_map(Comparison::iteration_ratio)))
    );
    let _ = writeln!(
        out,
        "geomean time ratio (ii/svi): {}",
        fmt_opt(geometric_mean(cmp.iter().filter_map(Comparison::time_ratio)))
    );
    let both: Vec<&Comparison> = cmp.iter().filter(|c| c.svi.is_some() && c.ii.is_some()).collect();
    let _ = writeln!(out, "\n# scatter time_ms: svi ii");
    for c in &both {
        let _ = writeln!(out, "{:?} {:?}", c.svi.expect("filtered").1, c.ii.expect("filtered").1);
    }
    let _ = writeln!(out, "\n# scatter iterations: svi ii");
    for c in &both {
        let _ = writeln!(out, "{} {}", c.svi.expect("filtered").0, c.ii.expect("filtered").0);
    }
    out
}

/// Reads a benchmark CSV and renders the comparison report.
pub fn compare_report(csv_path: &Path) -> Result<String, BenchError> {
    let file = fs::File::open(csv_path).map_err(|source| BenchError::Io {
        path: csv_path.to_path_buf(),
        source,
    })?;
    Ok(render_report(&read_csv(file)?))
}
