use std::path::PathBuf;
use std::process::{Command, Output};

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn svi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svi"))
        .current_dir(models())
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[derive(Debug)]
struct ResultLine {
    result: f64,
    lower: f64,
    upper: f64,
    iterations: u64,
    time_ms: f64,
}

/// Parses `result=<r> bounds=[<lo>,<hi>] iterations=<k> time_ms=<t>`.
fn parse_result(line: &str) -> ResultLine {
    let fields: Vec<&str> = line.split(' ').collect();
    assert_eq!(fields.len(), 4, "{line}");
    let value = |i: usize, key: &str| fields[i].strip_prefix(key).unwrap_or_else(|| panic!("{key} in {line}"));
    let bounds = value(1, "bounds=");
    let (lo, hi) = bounds
        .strip_prefix('[')
        .and_then(|b| b.strip_suffix(']'))
        .and_then(|b| b.split_once(','))
        .unwrap();
    ResultLine {
        result: value(0, "result=").parse().unwrap(),
        lower: lo.parse().unwrap(),
        upper: hi.parse().unwrap(),
        iterations: value(2, "iterations=").parse().unwrap(),
        time_ms: value(3, "time_ms=").parse().unwrap(),
    }
}

fn last_line(o: &Output) -> ResultLine {
    parse_result(stdout(o).lines().last().expect("a result line"))
}

const CHAIN: [&str; 4] = ["--tra", "leaky_chain.tra", "--lab", "leaky_chain.lab"];
const MDP: [&str; 4] = ["--tra", "leaky_mdp.tra", "--lab", "leaky_mdp.lab"];
const DECISION: [&str; 4] = ["--tra", "decision_mdp.tra", "--lab", "decision_mdp.lab"];

fn check(model: [&str; 4], extra: &[&str]) -> Output {
    let mut args = vec!["check"];
    args.extend(model);
    args.extend(extra);
    svi(&args)
}

#[test]
fn chain_is_solved_in_three_iterations() {
    let o = check(CHAIN, &["--goal", "goal", "--method", "svi", "--epsilon", "1e-6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = last_line(&o);
    assert!((r.result - 0.75).abs() < 1e-9);
    assert_eq!(r.iterations, 3);
    assert!(r.lower <= r.result && r.result <= r.upper && r.time_ms >= 0.0);
}

#[test]
fn value_iteration_warns_and_stops_short() {
    let o = check(MDP, &["--goal", "goal", "--method", "vi", "--epsilon", "1e-6"]);
    assert!(o.status.success());
    let r = last_line(&o);
    assert!((0.720..=0.730).contains(&r.result), "{}", r.result);
    assert!(stderr(&o).contains("unsound"));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn sound_methods_do_not_warn() {
    let o = check(MDP, &["--goal", "goal"]);
    assert!(o.status.success());
    assert!(stderr(&o).is_empty());
    assert!((last_line(&o).result - 0.75).abs() < 1e-6);
}

#[test]
fn every_success_path_prints_a_parseable_line() {
    for method in ["vi", "ii", "svi"] {
        for flags in [&[][..], &["--gauss-seidel"], &["--topological"], &["--gauss-seidel", "--topological"]] {
            for dir in ["max", "min"] {
                let mut extra = vec!["--goal", "goal", "--method", method, "--direction", dir];
                extra.extend(flags);
                let o = check(DECISION, &extra);
                assert!(o.status.success(), "{extra:?}: {}", stderr(&o));
                let r = last_line(&o);
                let want = if dir == "max" { 0.5 } else { 0.152 };
                assert!((r.result - want).abs() < 1e-5, "{extra:?}: {r:?}");
            }
        }
    }
}

#[test]
fn reward_queries() {
    let o = check(DECISION, &["--srew", "decision_mdp.srew", "--goal", "absorbed", "--objective", "reward"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!((last_line(&o).result - 2.52).abs() < 1e-6);

    let o = check(
        DECISION,
        &["--srew", "decision_mdp.srew", "--goal", "absorbed", "--objective", "reward", "--method", "ii", "--lower", "-1", "--upper", "10"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!((last_line(&o).result - 2.52).abs() < 1e-6);
}

#[test]
fn trace_bounds_are_monotone() {
    let o = check(DECISION, &["--goal", "goal", "--trace"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let rows: Vec<(f64, f64, f64)> = out
        .lines()
        .filter(|l| l.starts_with("iter="))
        .map(|l| {
            let get = |key: &str| -> f64 {
                l.split(' ')
                    .find_map(|f| f.strip_prefix(key))
                    .unwrap()
                    .parse()
                    .unwrap()
            };
            (get("lower="), get("upper="), get("stay="))
        })
        .collect();
    let r = parse_result(out.lines().last().unwrap());
    assert_eq!(rows.len() as u64, r.iterations);
    assert!((rows[0].0 - 0.0).abs() < 1e-12 && (rows[0].1 - 1.0).abs() < 1e-12);
    assert!((rows[1].0 - 0.1).abs() < 1e-12 && (rows[1].1 - 0.75).abs() < 1e-12);
    for w in rows.windows(2) {
        assert!(w[1].0 >= w[0].0 && w[1].1 <= w[0].1 && w[1].2 <= w[0].2);
    }
}

#[test]
fn input_errors_exit_with_2() {
    let o = check(CHAIN, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));

    let o = check(CHAIN, &["--goal", "nowhere"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown label"));

    let o = check(["--tra", "missing.tra", "--lab", "leaky_chain.lab"], &["--goal", "goal"]);
    assert_eq!(o.status.code(), Some(2));

    let o = check(CHAIN, &["--goal", "goal", "--epsilon", "0"]);
    assert_eq!(o.status.code(), Some(2));

    let o = check(DECISION, &["--goal", "absorbed", "--objective", "reward", "--method", "ii"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn solver_errors_exit_with_3() {
    // the sink s3 is an end component outside the goal
    let o = check(CHAIN, &["--goal", "goal", "--objective", "reward"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr(&o).lines().count(), 1);

    let o = check(MDP, &["--goal", "goal", "--method", "ii", "--max-iterations", "10"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn stats_rows_are_appended() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("stats.csv");
    let csv_arg = csv.to_str().unwrap();
    for method in ["svi", "ii"] {
        let o = check(CHAIN, &["--goal", "goal", "--method", method, "--stats", csv_arg]);
        assert!(o.status.success());
    }
    let recs = svi::bench::read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].model, "leaky_chain");
    assert_eq!((recs[0].method.as_str(), recs[0].iterations), ("svi", 3));
    assert_eq!(recs[1].method, "ii");
}

#[test]
fn in_process_entry_point() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let chain = models().join("leaky_chain.tra");
    let lab = models().join("leaky_chain.lab");
    let code = svi::cli::run_cli(
        ["svi", "check", "--tra", chain.to_str().unwrap(), "--lab", lab.to_str().unwrap(), "--goal", "goal"],
        &mut out,
        &mut err,
    );
    assert_eq!(code, 0);
    let text = String::from_utf8(out).unwrap();
    assert_eq!(parse_result(text.trim_end()).iterations, 3);

    let mut out = Vec::new();
    assert_eq!(svi::cli::run_cli(["svi", "--help"], &mut out, &mut err), 0);
    assert!(String::from_utf8(out).unwrap().contains("check"));
}
