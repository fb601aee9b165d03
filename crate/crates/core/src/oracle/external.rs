use super::{Oracle, OracleVerdict, Query};
use crate::sim::{Pattern, PatternOrigin};
use crate::smt2::{paren_depth, parse_sexprs, parse_value, Smt2Printer};
use crate::term::TermId;
use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct ExternalSolverConfig {
    /// Program and arguments, separated by whitespace.
    pub command: String,
    pub timeout: Duration,
    /// Keep one process and use `push`/`pop`; falls back to one process per
    /// query when the solver rejects this.
    pub incremental: bool,
}

impl ExternalSolverConfig {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            timeout: Duration::from_secs(30),
            incremental: true,
        }
    }
}

/// SMT-LIB2 solver driven over standard I/O.
pub struct ExternalProcess {
    config: ExternalSolverConfig,
    session: Option<Session>,
    incremental: bool,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    /// Text of the declarations and assertions at the outer scope.
    base: String,
    base_leaves: HashSet<TermId>,
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.stdin.write_all(b"(exit)\n");
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

enum Failure {
    /// The solver does not speak the incremental dialect we need.
    Protocol(String),
    Other(String),
}

impl ExternalProcess {
    pub fn new(config: ExternalSolverConfig) -> Self {
        let incremental = config.incremental;
        Self {
            config,
            session: None,
            incremental,
        }
    }

    /// False once the solver has rejected incremental use.
    pub fn is_incremental(&self) -> bool {
        self.incremental
    }

    fn spawn(&self) -> Result<(Child, ChildStdin, Receiver<String>), String> {
        let mut parts = self.config.command.split_whitespace();
        let program = parts.next().ok_or("empty solver command")?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("cannot start `{program}`: {e}"))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok((child, stdin, rx))
    }

    fn solve_incremental(
        &mut self,
        query: &Query<'_>,
        deadline: Instant,
    ) -> Result<OracleVerdict, Failure> {
        let graph = query.graph;
        let mut printer = Smt2Printer::new(graph);
        let assumption_leaves = graph.leaves(&[query.assumptions]);
        let mut base = String::new();
        for &leaf in &assumption_leaves {
            base.push_str(&printer.declare(leaf));
            base.push('\n');
            if let Some(table) = query.tables.get(&leaf) {
                base.push_str(&printer.table_assertions(leaf, table));
            }
        }
        base.push_str(&printer.assert_true(query.assumptions));
        base.push('\n');

        if self.session.as_ref().is_some_and(|s| s.base != base) {
            self.session = None;
        }
        if self.session.is_none() {
            let (child, stdin, lines) = self.spawn().map_err(Failure::Other)?;
            let mut session = Session {
                child,
                stdin,
                lines,
                base: base.clone(),
                base_leaves: assumption_leaves.into_iter().collect(),
            };
            let header = "(set-option :print-success false)\n(set-option :produce-models true)\n(set-logic QF_ABV)\n";
            send(&mut session.stdin, header).map_err(Failure::Other)?;
            send(&mut session.stdin, &base).map_err(Failure::Other)?;
            self.session = Some(session);
        }
        let session = self.session.as_mut().unwrap();

        let leaves = query.leaves();
        let mut script = String::from("(push 1)\n");
        for &leaf in &leaves {
            if !session.base_leaves.contains(&leaf) {
                script.push_str(&printer.declare(leaf));
                script.push('\n');
                if let Some(table) = query.tables.get(&leaf) {
                    script.push_str(&printer.table_assertions(leaf, table));
                }
            }
        }
        script.push_str(&printer.assert_true(query.goal));
        script.push_str("\n(check-sat)\n");
        send(&mut session.stdin, &script).map_err(Failure::Other)?;
        let answer = read_response(&session.lines, deadline)?;
        let verdict = match answer.trim() {
            "unsat" => OracleVerdict::Unsat,
            "unknown" => OracleVerdict::Unknown("solver answered unknown".into()),
            "sat" if leaves.is_empty() => {
                OracleVerdict::Sat(Pattern::new(PatternOrigin::Counterexample, 0))
            }
            "sat" => {
                let names: Vec<String> = leaves.iter().map(|&l| printer.leaf_name(l)).collect();
                send(
                    &mut session.stdin,
                    &format!("(get-value ({}))\n", names.join(" ")),
                )
                .map_err(Failure::Other)?;
                let text = read_response(&session.lines, deadline)?;
                parse_model(query, &leaves, &text).map_err(Failure::Protocol)?
            }
            other if other.starts_with("(error") => {
                return Err(Failure::Protocol(other.to_string()))
            }
            other => {
                return Err(Failure::Other(format!(
                    "unexpected solver output `{other}`"
                )))
            }
        };
        send(&mut session.stdin, "(pop 1)\n").map_err(Failure::Other)?;
        Ok(verdict)
    }

    fn solve_one_shot(
        &mut self,
        query: &Query<'_>,
        deadline: Instant,
    ) -> Result<OracleVerdict, String> {
        let graph = query.graph;
        let mut printer = Smt2Printer::new(graph);
        let leaves = query.leaves();
        let mut script = String::from(
            "(set-option :print-success false)\n(set-option :produce-models true)\n(set-logic QF_ABV)\n",
        );
        for &leaf in &leaves {
            script.push_str(&printer.declare(leaf));
            script.push('\n');
            if let Some(table) = query.tables.get(&leaf) {
                script.push_str(&printer.table_assertions(leaf, table));
            }
        }
        script.push_str(&printer.assert_true(query.assumptions));
        script.push('\n');
        script.push_str(&printer.assert_true(query.goal));
        script.push_str("\n(check-sat)\n");
        let names: Vec<String> = leaves.iter().map(|&l| printer.leaf_name(l)).collect();
        if !names.is_empty() {
            script.push_str(&format!("(get-value ({}))\n", names.join(" ")));
        }
        script.push_str("(exit)\n");

        let (mut child, mut stdin, lines) = self.spawn()?;
        let result = (|| {
            send(&mut stdin, &script)?;
            drop(stdin);
            let answer = read_response(&lines, deadline).map_err(failure_text)?;
            match answer.trim() {
                "unsat" => Ok(OracleVerdict::Unsat),
                "unknown" => Ok(OracleVerdict::Unknown("solver answered unknown".into())),
                "sat" if names.is_empty() => Ok(OracleVerdict::Sat(Pattern::new(
                    PatternOrigin::Counterexample,
                    0,
                ))),
                "sat" => {
                    let text = read_response(&lines, deadline).map_err(failure_text)?;
                    parse_model(query, &leaves, &text)
                }
                other => Err(format!("unexpected solver output `{other}`")),
            }
        })();
        let _ = child.kill();
        let _ = child.wait();
        result
    }
}

fn failure_text(f: Failure) -> String {
    match f {
        Failure::Protocol(s) | Failure::Other(s) => s,
    }
}

fn send(stdin: &mut ChildStdin, text: &str) -> Result<(), String> {
    stdin
        .write_all(text.as_bytes())
        .and_then(|_| stdin.flush())
        .map_err(|e| format!("solver pipe closed: {e}"))
}

/// Reads one complete response: a bare atom line or a balanced
/// s-expression spanning several lines.
fn read_response(lines: &Receiver<String>, deadline: Instant) -> Result<String, Failure> {
    let mut text = String::new();
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        match lines.recv_timeout(left) {
            Ok(line) => {
                if text.is_empty() && matches!(line.trim(), "" | "success") {
                    continue;
                }
                text.push_str(&line);
                text.push('\n');
                if paren_depth(&text) == Some(0) {
                    return Ok(text);
                }
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(Failure::Other("solver timed out".into()))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Failure::Other("solver exited before answering".into()))
            }
        }
    }
}

fn parse_model(query: &Query<'_>, leaves: &[TermId], text: &str) -> Result<OracleVerdict, String> {
    let exprs = parse_sexprs(text).map_err(|e| format!("bad model: {e}"))?;
    let [response] = exprs.as_slice() else {
        return Err("bad model: expected one list".into());
    };
    if response
        .as_list()
        .and_then(|l| l.first())
        .and_then(|h| h.as_atom())
        == Some("error")
    {
        return Err(format!("solver error: {response}"));
    }
    let pairs = response.as_list().ok_or("bad model: expected a list")?;
    if pairs.len() != leaves.len() {
        return Err(format!(
            "model has {} values for {} leaves",
            pairs.len(),
            leaves.len()
        ));
    }
    let mut model = Pattern::new(PatternOrigin::Counterexample, 0);
    for (&leaf, pair) in leaves.iter().zip(pairs) {
        let value_expr = match pair.as_list() {
            Some([_, v]) => v,
            _ => return Err(format!("bad model entry `{pair}`")),
        };
        let sort = query.graph.sort(leaf);
        let value = parse_value(value_expr, sort)
            .ok_or_else(|| format!("cannot read value `{value_expr}`"))?;
        model.set(leaf, value);
    }
    Ok(OracleVerdict::Sat(model))
}

impl Oracle for ExternalProcess {
    fn name(&self) -> &str {
        "external solver"
    }

    fn solve(&mut self, query: &Query<'_>) -> OracleVerdict {
        let deadline = Instant::now() + self.config.timeout;
        if self.incremental {
            match self.solve_incremental(query, deadline) {
                Ok(v) => return v,
                Err(Failure::Protocol(_)) => {
                    self.session = None;
                    self.incremental = false;
                }
                Err(Failure::Other(reason)) => {
                    self.session = None;
                    return OracleVerdict::Unknown(reason);
                }
            }
        }
        match self.solve_one_shot(query, deadline) {
            Ok(v) => v,
            Err(reason) => OracleVerdict::Unknown(reason),
        }
    }
}
