//! Readers and writers for PRISM's explicit-state files.
//!
//! * `.tra`: `n t` header then `from to prob` lines (Markov chains), or
//!   `n c t` header then `from choice to prob [action]` lines (MDPs).
//! * `.lab`: a declaration line `0="init" 1="goal" ...`, then
//!   `state: id id ...` lines.
//! * `.srew`: `state reward` lines. `.trew`: `from choice reward` lines.
//!
//! Lines starting with `#` and blank lines are ignored in every file.
//! Numbers are decimal or scientific; fractions like `1/3` are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use svi_core::{validate_model, ModelError, RawChoice, RawModel, SparseModel, StateSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        source: Box<IngestError>,
    },
    #[error("header declares {declared} {what} but the file has {actual}")]
    HeaderMismatch {
        what: &'static str,
        declared: usize,
        actual: usize,
    },
    #[error("state {state}: choice indices {found:?} are not 0..{}", found.len())]
    NonContiguousChoices { state: usize, found: Vec<usize> },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: undeclared label id {id}")]
    UnknownLabelId { line: usize, id: usize },
    #[error("label `init` holds more than one state")]
    MultipleInitStates,
    #[error("no state is labelled `init`")]
    MissingInit,
    #[error("line {line}: state {state}, choice {choice} does not exist")]
    DanglingTarget { line: usize, state: usize, choice: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl IngestError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        IngestError::Parse {
            line,
            message: message.into(),
        }
    }

    fn in_file(self, path: &Path) -> Self {
        IngestError::InFile {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}

/// Whether a transition file describes a chain or an MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mc,
    Mdp,
}

/// Labels of a `.lab` file together with the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub labels: BTreeMap<String, StateSet>,
    pub initial_state: usize,
}

/// Files making up one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelPaths {
    pub tra: PathBuf,
    pub lab: PathBuf,
    pub srew: Option<PathBuf>,
    pub trew: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: SparseModel,
    pub paths: ModelPaths,
    pub kind: ModelKind,
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_index(tok: &str, line: usize, what: &str) -> Result<usize, IngestError> {
    tok.parse()
        .map_err(|_| IngestError::parse(line, format!("expected {what}, found `{tok}`")))
}

fn parse_number(tok: &str, line: usize, what: &str) -> Result<f64, IngestError> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IngestError::parse(line, format!("expected {what}, found `{tok}`"))),
    }
}

fn header(text: &str, arity: usize) -> Result<(usize, Vec<usize>), IngestError> {
    let (line, l) = content_lines(text)
        .next()
        .ok_or_else(|| IngestError::parse(1, "missing header"))?;
    let toks: Vec<&str> = l.split_whitespace().collect();
    if toks.len() != arity {
        return Err(IngestError::parse(line, format!("expected a header of {arity} numbers")));
    }
    let nums = toks
        .iter()
        .map(|t| parse_index(t, line, "a count"))
        .collect::<Result<_, _>>()?;
    Ok((line, nums))
}

/// Tells chain files (`n t` header) from MDP files (`n c t` header).
pub fn detect_kind(tra: &str) -> Result<ModelKind, IngestError> {
    let (line, l) = content_lines(tra)
        .next()
        .ok_or_else(|| IngestError::parse(1, "missing header"))?;
    match l.split_whitespace().count() {
        2 => Ok(ModelKind::Mc),
        3 => Ok(ModelKind::Mdp),
        n => Err(IngestError::parse(line, format!("header has {n} fields, expected 2 or 3"))),
    }
}

fn empty_raw(num_states: usize) -> RawModel {
    RawModel {
        num_states,
        initial_state: 0,
        rows: vec![Vec::new(); num_states],
        labels: BTreeMap::new(),
    }
}

fn check_state(s: usize, n: usize, line: usize) -> Result<usize, IngestError> {
    if s < n {
        Ok(s)
    } else {
        Err(IngestError::parse(line, format!("state {s} out of range (model has {n})")))
    }
}

/// Parses a chain transition file into one choice per state.
pub fn parse_mc_tra(text: &str) -> Result<RawModel, IngestError> {
    let (hline, h) = header(text, 2)?;
    let (n, declared) = (h[0], h[1]);
    let mut raw = empty_raw(n);
    for row in &mut raw.rows {
        row.push(RawChoice::new(Vec::new()));
    }
    let mut count = 0;
    for (line, l) in content_lines(text).filter(|(i, _)| *i != hline) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(IngestError::parse(line, "expected `from to prob`"));
        }
        let from = check_state(parse_index(toks[0], line, "a state")?, n, line)?;
        let to = parse_index(toks[1], line, "a state")?;
        let p = parse_number(toks[2], line, "a probability")?;
        raw.rows[from][0].entries.push((to, p));
        count += 1;
    }
    if count != declared {
        return Err(IngestError::HeaderMismatch {
            what: "transitions",
            declared,
            actual: count,
        });
    }
    for row in &mut raw.rows {
        if row[0].entries.is_empty() {
            row.clear();
        }
    }
    Ok(raw)
}

/// Parses an MDP transition file. Lines of one choice need not be
/// adjacent; choice indices of every state must be `0..k`.
pub fn parse_mdp_tra(text: &str) -> Result<RawModel, IngestError> {
    let (hline, h) = header(text, 3)?;
    let (n, declared_choices, declared) = (h[0], h[1], h[2]);
    let mut choices: BTreeMap<(usize, usize), RawChoice> = BTreeMap::new();
    let mut count = 0;
    for (line, l) in content_lines(text).filter(|(i, _)| *i != hline) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if !(4..=5).contains(&toks.len()) {
            return Err(IngestError::parse(line, "expected `from choice to prob [action]`"));
        }
        let from = check_state(parse_index(toks[0], line, "a state")?, n, line)?;
        let c = parse_index(toks[1], line, "a choice index")?;
        let to = parse_index(toks[2], line, "a state")?;
        let p = parse_number(toks[3], line, "a probability")?;
        let choice = choices.entry((from, c)).or_default();
        choice.entries.push((to, p));
        if choice.action.is_none() {
            choice.action = toks.get(4).map(|a| a.to_string());
        }
        count += 1;
    }
    if count != declared {
        return Err(IngestError::HeaderMismatch {
            what: "transitions",
            declared,
            actual: count,
        });
    }
    if choices.len() != declared_choices {
        return Err(IngestError::HeaderMismatch {
            what: "choices",
            declared: declared_choices,
            actual: choices.len(),
        });
    }
    let mut raw = empty_raw(n);
    for ((s, c), choice) in choices {
        if c != raw.rows[s].len() {
            let found = raw.rows[s].len();
            let mut idx: Vec<usize> = (0..found).collect();
            idx.push(c);
            return Err(IngestError::NonContiguousChoices { state: s, found: idx });
        }
        raw.rows[s].push(choice);
    }
    Ok(raw)
}

fn parse_declarations(line: usize, l: &str) -> Result<BTreeMap<usize, String>, IngestError> {
    let mut ids = BTreeMap::new();
    for tok in l.split_whitespace() {
        let (id, name) = tok
            .split_once('=')
            .ok_or_else(|| IngestError::parse(line, format!("expected `id=\"name\"`, found `{tok}`")))?;
        let id = parse_index(id, line, "a label id")?;
        let name = name
            .strip_prefix('"')
            .and_then(|n| n.strip_suffix('"'))
            .filter(|n| !n.is_empty())
            .ok_or_else(|| IngestError::parse(line, format!("label name must be quoted: `{tok}`")))?;
        ids.insert(id, name.to_string());
    }
    Ok(ids)
}

/// Parses a label file for a model with `num_states` states. Every
/// declared label is present in the result, possibly empty.
pub fn parse_labels(text: &str, num_states: usize) -> Result<LabelSet, IngestError> {
    let mut lines = content_lines(text);
    let (dline, decl) = lines
        .next()
        .ok_or_else(|| IngestError::parse(1, "missing label declarations"))?;
    let ids = parse_declarations(dline, decl)?;
    let mut labels: BTreeMap<String, StateSet> = ids
        .values()
        .map(|name| (name.clone(), StateSet::new(num_states)))
        .collect();
    for (line, l) in lines {
        let (state, rest) = l
            .split_once(':')
            .ok_or_else(|| IngestError::parse(line, "expected `state: id ...`"))?;
        let s = check_state(parse_index(state.trim(), line, "a state")?, num_states, line)?;
        for tok in rest.split_whitespace() {
            let id = parse_index(tok, line, "a label id")?;
            let name = ids.get(&id).ok_or(IngestError::UnknownLabelId { line, id })?;
            labels.get_mut(name).expect("declared").insert(s);
        }
    }
    let init = labels.get("init").ok_or(IngestError::MissingInit)?;
    let initial_state = match init.len() {
        0 => return Err(IngestError::MissingInit),
        1 => init.iter().next().expect("one element"),
        _ => return Err(IngestError::MultipleInitStates),
    };
    Ok(LabelSet { labels, initial_state })
}

/// Skips an optional PRISM header line in a reward file: all integers,
/// starting with the state count and ending with the number of entries.
fn reward_lines<'a>(text: &'a str, num_states: usize, arity: usize) -> Vec<(usize, &'a str)> {
    let lines: Vec<(usize, &str)> = content_lines(text).collect();
    if let Some((_, first)) = lines.first() {
        let nums: Option<Vec<usize>> = first.split_whitespace().map(|t| t.parse().ok()).collect();
        if let Some(nums) = nums {
            if nums.len() == arity && nums[0] == num_states && nums[arity - 1] == lines.len() - 1 {
                return lines[1..].to_vec();
            }
        }
    }
    lines
}

/// Combined reward of every choice, indexed like the choices of `model`:
/// `ρ(s, a) = state_reward(s) + choice_reward(s, a)`, 0 where missing.
pub fn parse_rewards(
    model: &SparseModel,
    state_rewards: Option<&str>,
    choice_rewards: Option<&str>,
) -> Result<Vec<f64>, IngestError> {
    let n = model.num_states();
    let mut rewards = vec![0.0; model.num_choices()];
    if let Some(text) = state_rewards {
        for (line, l) in reward_lines(text, n, 2) {
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(IngestError::parse(line, "expected `state reward`"));
            }
            let s = parse_index(toks[0], line, "a state")?;
            let r = parse_number(toks[1], line, "a reward")?;
            if s >= n {
                return Err(IngestError::DanglingTarget { line, state: s, choice: 0 });
            }
            for c in model.choices(s) {
                rewards[c] += r;
            }
        }
    }
    if let Some(text) = choice_rewards {
        for (line, l) in reward_lines(text, n, 3) {
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(IngestError::parse(line, "expected `from choice reward`"));
            }
            let s = parse_index(toks[0], line, "a state")?;
            let c = parse_index(toks[1], line, "a choice index")?;
            let r = parse_number(toks[2], line, "a reward")?;
            if s >= n || c >= model.num_choices_of(s) {
                return Err(IngestError::DanglingTarget { line, state: s, choice: c });
            }
            rewards[model.choice_index(s, c)] += r;
        }
    }
    Ok(rewards)
}

#[derive(Clone, Copy)]
enum Part {
    Tra,
    Lab,
    Srew,
    Trew,
}

fn assemble(
    tra: &str,
    lab: &str,
    srew: Option<&str>,
    trew: Option<&str>,
    wrap: impl Fn(Part, IngestError) -> IngestError,
) -> Result<(SparseModel, ModelKind), IngestError> {
    let kind = detect_kind(tra).map_err(|e| wrap(Part::Tra, e))?;
    let mut raw = match kind {
        ModelKind::Mc => parse_mc_tra(tra),
        ModelKind::Mdp => parse_mdp_tra(tra),
    }
    .map_err(|e| wrap(Part::Tra, e))?;
    let labels = parse_labels(lab, raw.num_states).map_err(|e| wrap(Part::Lab, e))?;
    raw.initial_state = labels.initial_state;
    raw.labels = labels.labels;
    let mut model = validate_model(raw).map_err(|e| wrap(Part::Tra, e.into()))?;
    if srew.is_some() || trew.is_some() {
        let mut rewards = parse_rewards(&model, srew, None).map_err(|e| wrap(Part::Srew, e))?;
        let per_choice = parse_rewards(&model, None, trew).map_err(|e| wrap(Part::Trew, e))?;
        for (r, c) in rewards.iter_mut().zip(per_choice) {
            *r += c;
        }
        model = model.with_rewards(rewards)?;
    }
    Ok((model, kind))
}

/// Builds a validated model from file contents.
pub fn parse_model(
    tra: &str,
    lab: &str,
    srew: Option<&str>,
    trew: Option<&str>,
) -> Result<(SparseModel, ModelKind), IngestError> {
    assemble(tra, lab, srew, trew, |_, e| e)
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads and validates the files in `paths`. Errors name the offending
/// file.
pub fn load_model(paths: &ModelPaths) -> Result<ModelBundle, IngestError> {
    let tra = read(&paths.tra)?;
    let lab = read(&paths.lab)?;
    let srew = paths.srew.as_deref().map(read).transpose()?;
    let trew = paths.trew.as_deref().map(read).transpose()?;
    let (model, kind) = assemble(&tra, &lab, srew.as_deref(), trew.as_deref(), |part, e| {
        let path = match part {
            Part::Tra => &paths.tra,
            Part::Lab => &paths.lab,
            Part::Srew => paths.srew.as_ref().expect("read above"),
            Part::Trew => paths.trew.as_ref().expect("read above"),
        };
        e.in_file(path)
    })?;
    Ok(ModelBundle {
        model,
        paths: paths.clone(),
        kind,
    })
}

/// Writes the transition file of `model` in the given format. Chains
/// need exactly one choice per state.
pub fn write_tra(model: &SparseModel, kind: ModelKind) -> String {
    let mut out = String::new();
    match kind {
        ModelKind::Mc => {
            assert!(model.is_mc(), "chain format needs one choice per state");
            let _ = writeln!(out, "{} {}", model.num_states(), model.num_transitions());
            for s in 0..model.num_states() {
                for (t, p) in model.entries(model.choice_index(s, 0)) {
                    let _ = writeln!(out, "{s} {t} {p:?}");
                }
            }
        }
        ModelKind::Mdp => {
            let _ = writeln!(
                out,
                "{} {} {}",
                model.num_states(),
                model.num_choices(),
                model.num_transitions()
            );
            for s in 0..model.num_states() {
                for (local, c) in model.choices(s).enumerate() {
                    let action = model.action(c).map(|a| format!(" {a}")).unwrap_or_default();
                    for (t, p) in model.entries(c) {
                        let _ = writeln!(out, "{s} {local} {t} {p:?}{action}");
                    }
                }
            }
        }
    }
    out
}

/// Writes all labels of `model`, adding `init` if the model has none.
pub fn write_labels(model: &SparseModel) -> String {
    let mut labels = model.labels().clone();
    labels
        .entry("init".into())
        .or_insert_with(|| model.state_set(&[model.initial_state()]));
    // `init` first, as PRISM does
    let mut names: Vec<&String> = labels.keys().filter(|n| *n != "init").collect();
    names.insert(0, labels.keys().find(|n| *n == "init").expect("inserted"));

    let mut out = String::new();
    let decl: Vec<String> = names.iter().enumerate().map(|(i, n)| format!("{i}=\"{n}\"")).collect();
    let _ = writeln!(out, "{}", decl.join(" "));
    for s in 0..model.num_states() {
        let ids: Vec<String> = names
            .iter()
            .enumerate()
            .filter(|(_, n)| labels[**n].contains(s))
            .map(|(i, _)| i.to_string())
            .collect();
        if !ids.is_empty() {
            let _ = writeln!(out, "{s}: {}", ids.join(" "));
        }
    }
    out
}

/// Writes the nonzero choice rewards as a `from choice reward` file.
pub fn write_choice_rewards(model: &SparseModel) -> String {
    let mut out = String::new();
    for s in 0..model.num_states() {
        for (local, c) in model.choices(s).enumerate() {
            let r = model.reward(c);
            if r != 0.0 {
                let _ = writeln!(out, "{s} {local} {r:?}");
            }
        }
    }
    out
}
