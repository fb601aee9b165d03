//! Problem assembly for the command line: equivalence checking of two BTOR2
//! designs and bounded checking of the bad properties of one.

use crate::array::ArrayTables;
use crate::btor2::{
    emit_problem, parse_btor2, parse_btor2_with_prefix, ParseError, TransitionSystem,
};
use crate::bv::{BitVecValue, LiteralError};
use crate::oracle::{BruteForce, ExternalProcess, ExternalSolverConfig, Oracle};
use crate::sim::{Pattern, Value};
use crate::smt2::emit_script;
use crate::sweep::{
    solve_monolithic, sweep, StatsReport, SweepConfig, SweepError, SweepOutcome, SweepStats,
    Verdict,
};
use crate::term::{SortError, TermGraph, TermId};
use crate::unroll::{unroll, UnrollError, Unroller};
use std::fmt::Write as _;
use std::str::FromStr;

/// Input matches, pins and output checks for an equivalence check.
///
/// ```text
/// # comment
/// match a.x b.x          inputs a.x and b.x are equal in every frame
/// pin a.op 0010          input a.op is 0010 in every frame
/// check a.out == b.out   outputs compared at the last frame
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RulesFile {
    pub matches: Vec<(String, String)>,
    pub pins: Vec<(Side, String, String)>,
    pub checks: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::A => "a",
            Side::B => "b",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("rules line {line}: {msg}")]
pub struct RulesError {
    pub line: usize,
    pub msg: String,
}

fn side_name(word: &str, line: usize) -> Result<(Side, String), RulesError> {
    let err = || RulesError {
        line,
        msg: format!("expected `a.<name>` or `b.<name>`, found `{word}`"),
    };
    let (side, name) = word.split_once('.').ok_or_else(err)?;
    if name.is_empty() {
        return Err(err());
    }
    match side {
        "a" => Ok((Side::A, name.to_string())),
        "b" => Ok((Side::B, name.to_string())),
        _ => Err(err()),
    }
}

impl FromStr for RulesFile {
    type Err = RulesError;

    fn from_str(text: &str) -> Result<Self, RulesError> {
        let mut rules = RulesFile::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let pair = |a: &str, b: &str| -> Result<(String, String), RulesError> {
                match (side_name(a, line)?, side_name(b, line)?) {
                    ((Side::A, x), (Side::B, y)) => Ok((x, y)),
                    _ => Err(RulesError {
                        line,
                        msg: "expected an `a.` name followed by a `b.` name".into(),
                    }),
                }
            };
            match words.as_slice() {
                ["match", a, b] => rules.matches.push(pair(a, b)?),
                ["pin", name, bits] => {
                    let (side, name) = side_name(name, line)?;
                    if bits.is_empty() || !bits.chars().all(|c| c == '0' || c == '1') {
                        return Err(RulesError {
                            line,
                            msg: format!("pin value `{bits}` is not a bit string"),
                        });
                    }
                    rules.pins.push((side, name, bits.to_string()));
                }
                ["check", a, "==", b] => rules.checks.push(pair(a, b)?),
                [keyword, ..] => {
                    return Err(RulesError {
                        line,
                        msg: format!("cannot read `{content}` (keyword `{keyword}`)"),
                    })
                }
                [] => unreachable!(),
            }
        }
        Ok(rules)
    }
}

#[derive(Debug, Clone)]
pub enum Backend {
    BruteForce { cap_bits: u32 },
    External(ExternalSolverConfig),
}

impl Backend {
    pub fn build(&self) -> Box<dyn Oracle> {
        match self {
            Backend::BruteForce { cap_bits } => Box::new(BruteForce::new(*cap_bits)),
            Backend::External(cfg) => Box::new(ExternalProcess::new(cfg.clone())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub bound: u32,
    pub sweep: SweepConfig,
    pub backend: Backend,
    pub all_frames: bool,
    /// Skip sweeping and decide the unreduced formula with one oracle call.
    pub no_sweep: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            bound: 0,
            sweep: SweepConfig::default(),
            backend: Backend::BruteForce {
                cap_bits: BruteForce::DEFAULT_CAP_BITS,
            },
            all_frames: false,
            no_sweep: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DriverError {
    #[error("{file}: {error}")]
    Parse { file: String, error: ParseError },
    #[error(transparent)]
    Rules(#[from] RulesError),
    #[error("design {side} has no {kind} named `{name}`")]
    UnknownName {
        side: Side,
        kind: &'static str,
        name: String,
    },
    #[error("`{side}.{name}` has width {expected} but the rule gives {found} bits")]
    WidthMismatch {
        side: Side,
        name: String,
        expected: u32,
        found: u32,
    },
    #[error("`a.{a}` and `b.{b}` have different sorts")]
    SortMismatch { a: String, b: String },
    #[error(
        "no outputs to compare: add `check` rules or give both designs outputs with equal names"
    )]
    NoChecks,
    #[error("the design has no bad properties")]
    NoBad,
    #[error(transparent)]
    Unroll(#[from] UnrollError),
    #[error(transparent)]
    Sort(#[from] SortError),
    #[error(transparent)]
    Literal(#[from] LiteralError),
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    /// Equivalent, or no bad state reachable.
    Unsat = 0,
    /// Not equivalent, or a bad state is reachable.
    Sat = 1,
    Unknown = 2,
    Usage = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Equivalence,
    Reachability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Btor2,
    Smt2,
    StatsJson,
}

impl FromStr for EmitFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "btor2" => Ok(EmitFormat::Btor2),
            "smt2" => Ok(EmitFormat::Smt2),
            "stats-json" => Ok(EmitFormat::StatsJson),
            _ => Err(format!(
                "unknown format `{s}` (expected btor2, smt2 or stats-json)"
            )),
        }
    }
}

/// A combinational problem ready to be solved.
pub struct Problem {
    pub mode: Mode,
    pub graph: TermGraph,
    pub tables: ArrayTables,
    pub constraint: TermId,
    pub check: TermId,
}

/// Result of solving a [`Problem`].
pub struct Report {
    pub problem: Problem,
    pub result: Result<SweepOutcome, SweepError>,
}

fn parse_file(
    graph: &mut TermGraph,
    file: &str,
    text: &str,
    prefix: &str,
) -> Result<TransitionSystem, DriverError> {
    parse_btor2_with_prefix(graph, text, prefix).map_err(|error| DriverError::Parse {
        file: file.to_string(),
        error,
    })
}

/// Builds the equivalence problem of designs `a` and `b` unrolled to
/// `bound`. Inputs of `a` and `b` are renamed `a::x` and `b::x`.
pub fn build_ec(
    (file_a, text_a): (&str, &str),
    (file_b, text_b): (&str, &str),
    rules: &RulesFile,
    bound: u32,
    all_frames: bool,
) -> Result<Problem, DriverError> {
    let mut graph = TermGraph::new();
    let sys_a = parse_file(&mut graph, file_a, text_a, "a::")?;
    let sys_b = parse_file(&mut graph, file_b, text_b, "b::")?;
    let input = |sys: &TransitionSystem, side: Side, name: &str| {
        sys.input(name)
            .map(|i| i.term)
            .ok_or_else(|| DriverError::UnknownName {
                side,
                kind: "input",
                name: name.to_string(),
            })
    };
    let output = |sys: &TransitionSystem, side: Side, name: &str| {
        sys.output(name).ok_or_else(|| DriverError::UnknownName {
            side,
            kind: "output",
            name: name.to_string(),
        })
    };

    let mut matches = Vec::new();
    for (a, b) in &rules.matches {
        let (ta, tb) = (input(&sys_a, Side::A, a)?, input(&sys_b, Side::B, b)?);
        if graph.sort(ta) != graph.sort(tb) {
            return Err(DriverError::SortMismatch {
                a: a.clone(),
                b: b.clone(),
            });
        }
        matches.push((ta, tb));
    }
    let mut pins = Vec::new();
    for (side, name, bits) in &rules.pins {
        let sys = if *side == Side::A { &sys_a } else { &sys_b };
        let t = input(sys, *side, name)?;
        let expected = graph.width(t).unwrap_or(0);
        if expected != bits.len() as u32 {
            return Err(DriverError::WidthMismatch {
                side: *side,
                name: name.clone(),
                expected,
                found: bits.len() as u32,
            });
        }
        pins.push((*side, t, BitVecValue::from_bit_str(bits)?));
    }
    let mut checks = Vec::new();
    if rules.checks.is_empty() {
        for (name, ta) in &sys_a.outputs {
            if let Some(tb) = sys_b.output(name) {
                checks.push((*ta, tb, name.clone(), name.clone()));
            }
        }
        if checks.is_empty() {
            return Err(DriverError::NoChecks);
        }
    } else {
        for (a, b) in &rules.checks {
            checks.push((
                output(&sys_a, Side::A, a)?,
                output(&sys_b, Side::B, b)?,
                a.clone(),
                b.clone(),
            ));
        }
    }
    for (ta, tb, a, b) in &checks {
        if graph.sort(*ta) != graph.sort(*tb) {
            return Err(DriverError::SortMismatch {
                a: a.clone(),
                b: b.clone(),
            });
        }
    }

    let mut ua = Unroller::new(&graph, &sys_a);
    let mut ub = Unroller::new(&graph, &sys_b);
    let mut assumptions = Vec::new();
    for frame in 0..=bound {
        for &(ta, tb) in &matches {
            let (fa, fb) = (
                ua.term_at(&mut graph, ta, frame)?,
                ub.term_at(&mut graph, tb, frame)?,
            );
            assumptions.push(graph.mk_eq(fa, fb)?);
        }
        for (side, t, value) in &pins {
            let u = if *side == Side::A { &mut ua } else { &mut ub };
            let ft = u.term_at(&mut graph, *t, frame)?;
            let c = graph.mk_const(value.clone());
            assumptions.push(graph.mk_eq(ft, c)?);
        }
    }
    assumptions.push(ua.constraints_upto(&mut graph, bound)?);
    assumptions.push(ub.constraints_upto(&mut graph, bound)?);
    let constraint = graph.mk_and_all(assumptions)?;

    let first = if all_frames { 0 } else { bound };
    let mut equalities = Vec::new();
    for frame in first..=bound {
        for (ta, tb, _, _) in &checks {
            let (fa, fb) = (
                ua.term_at(&mut graph, *ta, frame)?,
                ub.term_at(&mut graph, *tb, frame)?,
            );
            equalities.push(graph.mk_eq(fa, fb)?);
        }
    }
    let all_equal = graph.mk_and_all(equalities)?;
    let check = graph.mk_not(all_equal)?;
    let mut tables = ua.tables().clone();
    tables.extend(ub.tables().iter().map(|(k, v)| (*k, v.clone())));
    Ok(Problem {
        mode: Mode::Equivalence,
        graph,
        tables,
        constraint,
        check,
    })
}

/// Builds the bounded reachability problem of the bad properties of one
/// design.
pub fn build_abv(
    (file, text): (&str, &str),
    bound: u32,
    all_frames: bool,
) -> Result<Problem, DriverError> {
    let mut graph = TermGraph::new();
    let sys = parse_btor2(&mut graph, text).map_err(|error| DriverError::Parse {
        file: file.to_string(),
        error,
    })?;
    if sys.bads.is_empty() {
        return Err(DriverError::NoBad);
    }
    let p = unroll(&mut graph, &sys, bound, all_frames)?;
    Ok(Problem {
        mode: Mode::Reachability,
        graph,
        tables: p.tables,
        constraint: p.constraint,
        check: p.check,
    })
}

/// Sweeps (or, with `no_sweep`, directly decides) `problem`.
pub fn solve(mut problem: Problem, options: &RunOptions) -> Report {
    let mut oracle = options.backend.build();
    let result = if options.no_sweep {
        solve_monolithic(
            &problem.graph,
            &problem.tables,
            problem.constraint,
            problem.check,
            oracle.as_mut(),
        )
    } else {
        sweep(
            &mut problem.graph,
            &problem.tables,
            problem.constraint,
            problem.check,
            oracle.as_mut(),
            &options.sweep,
        )
    };
    Report { problem, result }
}

impl Report {
    pub fn status(&self) -> ExitStatus {
        match &self.result {
            Ok(o) => match o.verdict {
                Verdict::Unsat => ExitStatus::Unsat,
                Verdict::Sat(_) => ExitStatus::Sat,
            },
            Err(SweepError::Constraint(_)) => ExitStatus::Usage,
            Err(_) => ExitStatus::Unknown,
        }
    }

    pub fn stats(&self) -> Option<&SweepStats> {
        match &self.result {
            Ok(o) => Some(&o.stats),
            Err(SweepError::OracleUnknown { stats, .. }) => Some(stats),
            Err(_) => None,
        }
    }

    pub fn verdict_label(&self) -> &'static str {
        match &self.result {
            Ok(o) => o.verdict.label(),
            Err(_) => "unknown",
        }
    }

    pub fn stats_report(&self, include_timing: bool) -> StatsReport {
        let empty = SweepStats::default();
        StatsReport::new(
            self.stats().unwrap_or(&empty),
            self.verdict_label(),
            include_timing,
        )
    }

    /// The check formula after sweeping, or the original one.
    pub fn reduced_check(&self) -> TermId {
        match &self.result {
            Ok(o) => o.check,
            Err(SweepError::OracleUnknown { check, .. }) => *check,
            Err(_) => self.problem.check,
        }
    }

    pub fn emit(&self, format: EmitFormat, include_timing: bool) -> String {
        let p = &self.problem;
        match format {
            EmitFormat::Btor2 => {
                emit_problem(&p.graph, p.constraint, self.reduced_check(), &p.tables)
            }
            EmitFormat::Smt2 => {
                emit_script(&p.graph, p.constraint, self.reduced_check(), &p.tables)
            }
            EmitFormat::StatsJson => self.stats_report(include_timing).to_json() + "\n",
        }
    }

    /// Human-readable verdict, followed by the model on a violation.
    pub fn render(&self) -> String {
        let mut out = String::new();
        match (&self.result, self.problem.mode) {
            (Ok(o), mode) => {
                let line = match (&o.verdict, mode) {
                    (Verdict::Unsat, Mode::Equivalence) => "EQUIVALENT",
                    (Verdict::Sat(_), Mode::Equivalence) => "NOT EQUIVALENT",
                    (Verdict::Unsat, Mode::Reachability) => "UNSAT",
                    (Verdict::Sat(_), Mode::Reachability) => "SAT",
                };
                let _ = writeln!(out, "{line}");
                if let Verdict::Sat(model) = &o.verdict {
                    let heading = if mode == Mode::Equivalence {
                        "countermodel"
                    } else {
                        "witness"
                    };
                    let _ = writeln!(out, "{heading}:");
                    out.push_str(&render_model(
                        &self.problem.graph,
                        &[self.problem.constraint, self.problem.check],
                        model,
                    ));
                }
            }
            (Err(SweepError::OracleUnknown { reason, .. }), _) => {
                let _ = writeln!(out, "UNKNOWN: {reason}");
            }
            (Err(e), _) => {
                let _ = writeln!(out, "UNKNOWN: {e}");
            }
        }
        out
    }
}

/// `name = value` lines for the named leaves below `roots`, sorted by name.
pub fn render_model(graph: &TermGraph, roots: &[TermId], model: &Pattern) -> String {
    let mut lines: Vec<(String, String)> = graph
        .leaves(roots)
        .into_iter()
        .filter_map(|leaf| {
            let name = graph.symbol_name(leaf)?.to_string();
            let value = match model.get(leaf)? {
                Value::Bv(v) => v.to_string(),
                Value::Array(a) => {
                    let cells: Vec<String> = a
                        .overlay
                        .iter()
                        .map(|(k, v)| format!("{k} -> {v}"))
                        .collect();
                    format!("[{}]", cells.join(", "))
                }
            };
            Some((name, value))
        })
        .collect();
    lines.sort();
    lines
        .into_iter()
        .map(|(n, v)| format!("  {n} = {v}\n"))
        .collect()
}
